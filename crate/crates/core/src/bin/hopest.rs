use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use hopest::channel::ChannelProfile;
use hopest::estimator::{estimate_delays, stack_pair, CorrAccumulator};
use hopest::harness::{
    parse_esprit_mode, run_ph, run_sweeps, simulate_window, write_csv, write_csv_to, EstimatorChoice, ExperimentConfig,
    Preset,
};
use hopest::Result;

#[derive(Parser)]
#[command(name = "hopest", version, about = "Hopping-pilot channel estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an NMSE sweep and write the result table as CSV.
    Simulate {
        #[command(flatten)]
        opts: ConfigArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one window and print the delay estimate.
    Estimate {
        #[command(flatten)]
        opts: ConfigArgs,
        /// Print "eta_hat L_hat tau_1 ... tau_L".
        #[arg(long)]
        dump_delays: bool,
        /// Trial index whose window is simulated.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// fig1, fig2 or fig3.
    #[arg(long, conflicts_with = "config")]
    preset: Option<Preset>,
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Multipath table ("delay_ns power_db" per line).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_list: Option<Vec<f64>>,
    #[arg(long)]
    doppler_hz: Option<f64>,
    #[arg(long)]
    n_t: Option<usize>,
    #[arg(long)]
    n_sch: Option<usize>,
    /// ph, ll or both.
    #[arg(long)]
    estimator: Option<EstimatorChoice>,
    /// ls or tls.
    #[arg(long)]
    esprit: Option<String>,
    #[arg(long)]
    beta: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<i64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn configs(&self) -> Result<Vec<ExperimentConfig>> {
        let mut base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.profile {
            base.profile = Some(ChannelProfile::load(path, base.system.bw_hz)?);
        }
        if let Some(v) = &self.snr_list {
            base.snr_db_list = v.clone();
        }
        if let Some(v) = self.estimator {
            base.estimator = v;
        }
        if let Some(v) = &self.esprit {
            base.esprit_mode = parse_esprit_mode(v)?;
        }
        if let Some(v) = self.beta {
            base.beta = v;
        }
        if let Some(v) = self.nu {
            base.nu = v;
        }
        if let Some(v) = self.trials {
            base.n_trials = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        let mut cfgs = match self.preset {
            Some(p) => p.configs(&base),
            None => vec![base],
        };
        // Explicit values override the preset's swept parameter too.
        for cfg in &mut cfgs {
            if let Some(v) = self.doppler_hz {
                cfg.f_d = v;
            }
            if let Some(v) = self.n_t {
                cfg.n_t = v;
            }
            if let Some(v) = self.n_sch {
                cfg.n_sch = v;
            }
            cfg.validate()?;
        }
        cfgs.dedup();
        Ok(cfgs)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { opts, out } => {
            let records = run_sweeps(&opts.configs()?)?;
            match out {
                Some(path) => write_csv(&records, path)?,
                None => write_csv_to(&records, std::io::stdout().lock())
                    .map_err(|e| hopest::Error::Config(format!("writing stdout: {e}")))?,
            }
        }
        Command::Estimate {
            opts,
            dump_delays,
            trial,
        } => {
            for cfg in opts.configs()? {
                for &snr in &cfg.snr_db_list {
                    let data = simulate_window(&cfg, snr, cfg.trial_seed(trial))?;
                    if dump_delays {
                        let mut acc = CorrAccumulator::new(2 * data.pattern.p);
                        for (t, (e, o)) in data.even_est.iter().zip(&data.odd_est).enumerate() {
                            acc.accumulate(&stack_pair(e, o, t)?)?;
                        }
                        println!("{}", estimate_delays(&acc, &cfg.ph_config())?.record());
                    } else {
                        let (delays, sums) = run_ph(&data, &cfg.ph_config())?;
                        println!(
                            "snr_db={snr} n_t={} f_d={} n_sch={} L_hat={} support={} nmse_db={:.3}",
                            cfg.n_t,
                            cfg.f_d,
                            cfg.n_sch,
                            delays.order,
                            delays.support.len(),
                            sums.nmse_db()?
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
