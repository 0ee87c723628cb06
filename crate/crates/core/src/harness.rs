//! Monte Carlo NMSE sweeps.
//!
//! One trial is one estimation window: a fresh fading realization, a fresh
//! tile allocation that stays fixed for the window, and `n_t/2` tile triplets
//! (even symbol, pilot-free middle symbol, odd symbol). The hopping-pilot
//! estimator uses every pair in the window to estimate the delays, then
//! interpolates every symbol of the window. The local-linear baseline works
//! tile by tile.
//!
//! NMSE is ratio-of-sums over all data resource elements and all successful
//! trials. Trial seeds do not depend on the SNR, so every SNR point of a
//! sweep sees the same channel and allocation realizations.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_fading, ChannelProfile, ToneSteering};
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_delays, ll_baseline, ls_pilot_estimate, middle_symbol_cfr, stack_pair, CorrAccumulator, DelayEstimate,
    Interpolator, PhConfig, DEFAULT_BETA, MAX_BETA,
};
use crate::frame::{
    noise_var_from_snr_db, observe_with_steering, pilot_pattern, random_qpsk, random_tile_allocation, PilotPattern,
    SystemConfig, TileAllocation, UserRole, TILE_NU, TILE_WIDTH,
};
use crate::numerics::{derive_seed, seeded_rng, ShiftSolver, C64};

/// NMSE reported for a perfect estimate.
pub const NMSE_FLOOR_DB: f64 = -200.0;
/// Minimum fraction of successful trials for a valid sweep point.
pub const MIN_SUCCESS_FRACTION: f64 = 0.95;
const BOOTSTRAP_RESAMPLES: usize = 1000;

// Seed purposes under a trial seed.
const SEED_FADING: u64 = 1;
const SEED_ALLOCATION: u64 = 2;
const STREAM_PILOTS: u64 = 3;
const STREAM_DATA: u64 = 4;
const STREAM_NOISE: u64 = 5;
const STREAM_BOOTSTRAP: u64 = 0xB007;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Ph,
    Ll,
    #[default]
    Both,
}

impl EstimatorChoice {
    pub fn runs_ph(self) -> bool {
        matches!(self, Self::Ph | Self::Both)
    }

    pub fn runs_ll(self) -> bool {
        matches!(self, Self::Ll | Self::Both)
    }
}

impl FromStr for EstimatorChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ph" => Ok(Self::Ph),
            "ll" => Ok(Self::Ll),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("unknown estimator {s:?} (ph, ll, both)"))),
        }
    }
}

/// Estimator label in the output table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EstimatorTag {
    #[serde(rename = "LL")]
    Ll,
    #[serde(rename = "PH")]
    Ph,
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ll => "LL",
            Self::Ph => "PH",
        })
    }
}

pub fn parse_esprit_mode(s: &str) -> Result<ShiftSolver> {
    match s.to_ascii_lowercase().as_str() {
        "ls" => Ok(ShiftSolver::Ls),
        "tls" => Ok(ShiftSolver::Tls),
        _ => Err(Error::Config(format!("unknown ESPRIT mode {s:?} (ls, tls)"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Multipath profile; Vehicular A at the system bandwidth when unset.
    pub profile: Option<ChannelProfile>,
    pub n_sch: usize,
    /// Pilot-bearing symbols in the window; `n_t/2` pairs (tile triplets) are simulated.
    pub n_t: usize,
    pub f_d: f64,
    pub snr_db_list: Vec<f64>,
    pub n_trials: usize,
    pub estimator: EstimatorChoice,
    pub esprit_mode: ShiftSolver,
    pub beta: usize,
    pub nu: i64,
    pub seed: u64,
}

pub fn default_snr_grid() -> Vec<f64> {
    (0..=8).map(|i| 5.0 * i as f64).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            profile: None,
            n_sch: 20,
            n_t: 192,
            f_d: 200.0,
            snr_db_list: default_snr_grid(),
            n_trials: 100,
            estimator: EstimatorChoice::Both,
            esprit_mode: ShiftSolver::Tls,
            beta: DEFAULT_BETA,
            nu: TILE_NU,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.n_t < 2 {
            return Err(Error::Config(format!("n_t must be at least 2, got {}", self.n_t)));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        let need = TILE_WIDTH * crate::frame::TILES_PER_SUBCHANNEL * self.n_sch;
        if self.n_sch == 0 || need > self.system.n_used {
            return Err(Error::Config(format!(
                "n_sch = {} needs {need} tones, only {} usable",
                self.n_sch, self.system.n_used
            )));
        }
        if !(self.f_d >= 0.0) || !self.f_d.is_finite() {
            return Err(Error::Config(format!("Doppler must be non-negative, got {}", self.f_d)));
        }
        if self.snr_db_list.is_empty() || self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR list must be non-empty and finite".into()));
        }
        if self.beta > MAX_BETA {
            return Err(Error::Config(format!(
                "beta must be in 0..={MAX_BETA}, got {}",
                self.beta
            )));
        }
        UserRole::from_nu(self.nu)?;
        self.profile().check_cp(self.system.l_cp)?;
        Ok(())
    }

    pub fn profile(&self) -> ChannelProfile {
        self.profile
            .clone()
            .unwrap_or_else(|| ChannelProfile::veh_a(self.system.bw_hz))
    }

    pub fn n_pairs(&self) -> usize {
        self.n_t / 2
    }

    pub fn ph_config(&self) -> PhConfig {
        PhConfig {
            nu: self.nu,
            n_fft: self.system.n_fft,
            l_cp: self.system.l_cp,
            beta: self.beta,
            mode: self.esprit_mode,
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, trial as u64)
    }
}

/// Sweeps reproducing the three figure families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// f_d = 200 Hz, N_sch = 20, n_t ∈ {96, 192, 387}.
    Fig1,
    /// n_t = 192, N_sch = 20, f_d ∈ {50, 100, 200, 400} Hz.
    Fig2,
    /// n_t = 192, f_d = 200 Hz, N_sch ∈ {10, 20, 30}.
    Fig3,
}

pub const FIG1_N_T: [usize; 3] = [96, 192, 387];
pub const FIG2_DOPPLER_HZ: [f64; 4] = [50.0, 100.0, 200.0, 400.0];
pub const FIG3_N_SCH: [usize; 3] = [10, 20, 30];

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fig1" => Ok(Self::Fig1),
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            _ => Err(Error::Config(format!("unknown preset {s:?} (fig1, fig2, fig3)"))),
        }
    }
}

impl Preset {
    /// One config per curve family member, derived from `base`.
    pub fn configs(self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        match self {
            Preset::Fig1 => FIG1_N_T
                .iter()
                .map(|&n_t| ExperimentConfig {
                    n_t,
                    f_d: 200.0,
                    n_sch: 20,
                    ..base.clone()
                })
                .collect(),
            Preset::Fig2 => FIG2_DOPPLER_HZ
                .iter()
                .map(|&f_d| ExperimentConfig {
                    n_t: 192,
                    f_d,
                    n_sch: 20,
                    ..base.clone()
                })
                .collect(),
            Preset::Fig3 => FIG3_N_SCH
                .iter()
                .map(|&n_sch| ExperimentConfig {
                    n_t: 192,
                    f_d: 200.0,
                    n_sch,
                    ..base.clone()
                })
                .collect(),
        }
    }
}

/// Experiment file: top-level experiment keys plus an optional `[system]` table.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    system: Option<SystemConfig>,
    profile: Option<PathBuf>,
    n_sch: Option<usize>,
    n_t: Option<usize>,
    f_d_hz: Option<f64>,
    snr_db: Option<Vec<f64>>,
    trials: Option<usize>,
    estimator: Option<EstimatorChoice>,
    esprit: Option<String>,
    beta: Option<usize>,
    nu: Option<i64>,
    seed: Option<u64>,
}

impl ExperimentConfig {
    /// Parses a TOML experiment description. Relative profile paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: ExperimentFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = ExperimentConfig::default();
        if let Some(system) = file.system {
            system.validate()?;
            cfg.system = system;
        }
        if let Some(path) = file.profile {
            let path = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path,
            };
            cfg.profile = Some(ChannelProfile::load(&path, cfg.system.bw_hz)?);
        }
        cfg.n_sch = file.n_sch.unwrap_or(cfg.n_sch);
        cfg.n_t = file.n_t.unwrap_or(cfg.n_t);
        cfg.f_d = file.f_d_hz.unwrap_or(cfg.f_d);
        cfg.snr_db_list = file.snr_db.unwrap_or(cfg.snr_db_list);
        cfg.n_trials = file.trials.unwrap_or(cfg.n_trials);
        cfg.estimator = file.estimator.unwrap_or(cfg.estimator);
        if let Some(mode) = file.esprit {
            cfg.esprit_mode = parse_esprit_mode(&mode)?;
        }
        cfg.beta = file.beta.unwrap_or(cfg.beta);
        cfg.nu = file.nu.unwrap_or(cfg.nu);
        cfg.seed = file.seed.unwrap_or(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }
}

/// Squared-error and reference-energy sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorSums {
    pub err: f64,
    pub energy: f64,
}

impl ErrorSums {
    fn add(&mut self, est: &[C64], truth: &[C64]) {
        for (e, h) in est.iter().zip(truth) {
            self.err += (e - h).norm_sqr();
            self.energy += h.norm_sqr();
        }
    }

    fn merge(&mut self, other: ErrorSums) {
        self.err += other.err;
        self.energy += other.energy;
    }

    pub fn nmse_db(&self) -> Result<f64> {
        nmse_db_from_sums(self.err, self.energy)
    }
}

pub fn nmse_db_from_sums(err: f64, energy: f64) -> Result<f64> {
    if !(energy > 0.0) {
        return Err(Error::Degenerate("reference energy is zero".into()));
    }
    if err <= 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (err / energy).log10()).max(NMSE_FLOOR_DB))
}

/// `10·log10(Σ|Ĥ - H|² / Σ|H|²)` over all given vectors.
pub fn nmse_db(estimates: &[Vec<C64>], truths: &[Vec<C64>]) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.iter().zip(truths).any(|(e, t)| e.len() != t.len()) {
        return Err(Error::Dimension("estimate and truth shapes differ".into()));
    }
    let mut sums = ErrorSums::default();
    for (e, t) in estimates.iter().zip(truths) {
        sums.add(e, t);
    }
    sums.nmse_db()
}

/// Pilot estimates and ground truth of one simulated window.
#[derive(Debug, Clone)]
pub struct WindowData {
    pub alloc: TileAllocation,
    pub pattern: PilotPattern,
    /// LS pilot estimates of the even (first) symbol of each triplet.
    pub even_est: Vec<Vec<C64>>,
    /// LS pilot estimates of the odd (third) symbol of each triplet.
    pub odd_est: Vec<Vec<C64>>,
    /// True CFR on the inner tones (two per tile) of the even symbol.
    pub truth_even: Vec<Vec<C64>>,
    /// True CFR on all tile tones of the middle symbol.
    pub truth_middle: Vec<Vec<C64>>,
    /// True CFR on the inner tones of the odd symbol.
    pub truth_odd: Vec<Vec<C64>>,
    pub noise_var: f64,
}

impl WindowData {
    pub fn n_pairs(&self) -> usize {
        self.even_est.len()
    }
}

/// Tones used by one user in a pilot-bearing symbol: its pilots followed by the inner tones.
fn symbol_tones(pilots: &[usize], inner: &[usize]) -> Vec<usize> {
    pilots.iter().chain(inner).copied().collect()
}

/// Simulates the received pilots of one window.
pub fn simulate_window(cfg: &ExperimentConfig, snr_db: f64, trial_seed: u64) -> Result<WindowData> {
    let system = &cfg.system;
    let profile = cfg.profile();
    let role = UserRole::from_nu(cfg.nu)?;
    let n_pairs = cfg.n_pairs();
    let n_symbols = 3 * n_pairs;

    let fading = generate_fading(
        &profile,
        cfg.f_d,
        system.symbol_duration(),
        n_symbols,
        derive_seed(trial_seed, SEED_FADING),
    )?;
    // The allocation stays fixed for the whole window.
    let alloc = random_tile_allocation(system, cfg.n_sch, derive_seed(trial_seed, SEED_ALLOCATION), 0)?;
    let pattern = pilot_pattern(&alloc, role);
    let p = pattern.p;
    let inner = alloc.inner_tones();
    let tile_tones = alloc.tile_tones();

    let even_steer = ToneSteering::new(
        &profile.delays_norm,
        &symbol_tones(&pattern.pilots_even, &inner),
        system.n_fft,
    )?;
    let odd_steer = ToneSteering::new(
        &profile.delays_norm,
        &symbol_tones(&pattern.pilots_odd, &inner),
        system.n_fft,
    )?;
    let mid_steer = ToneSteering::new(&profile.delays_norm, &tile_tones, system.n_fft)?;

    let noise_var = noise_var_from_snr_db(snr_db);
    let mut pilot_rng = seeded_rng(trial_seed, STREAM_PILOTS);
    let mut data_rng = seeded_rng(trial_seed, STREAM_DATA);
    let mut noise_rng = seeded_rng(trial_seed, STREAM_NOISE);

    let mut data = WindowData {
        alloc,
        pattern,
        even_est: Vec::with_capacity(n_pairs),
        odd_est: Vec::with_capacity(n_pairs),
        truth_even: Vec::with_capacity(n_pairs),
        truth_middle: Vec::with_capacity(n_pairs),
        truth_odd: Vec::with_capacity(n_pairs),
        noise_var,
    };

    for t in 0..n_pairs {
        let mut pilot_symbol = |steer: &ToneSteering, sym: usize| -> Result<(Vec<C64>, Vec<C64>)> {
            let pilots = random_qpsk(p, &mut pilot_rng);
            let mut tx = pilots.clone();
            tx.extend(random_qpsk(inner.len(), &mut data_rng));
            let obs = observe_with_steering(steer, sym, &tx, &fading.gains_at(sym), noise_var, &mut noise_rng)?;
            let est = ls_pilot_estimate(&obs.rx[..p], &pilots)?;
            Ok((est, obs.cfr_true[p..].to_vec()))
        };
        let (even_est, truth_even) = pilot_symbol(&even_steer, 3 * t)?;
        let (odd_est, truth_odd) = pilot_symbol(&odd_steer, 3 * t + 2)?;

        let mid_tx = random_qpsk(tile_tones.len(), &mut data_rng);
        let mid = observe_with_steering(
            &mid_steer,
            3 * t + 1,
            &mid_tx,
            &fading.gains_at(3 * t + 1),
            noise_var,
            &mut noise_rng,
        )?;

        data.even_est.push(even_est);
        data.odd_est.push(odd_est);
        data.truth_even.push(truth_even);
        data.truth_middle.push(mid.cfr_true);
        data.truth_odd.push(truth_odd);
    }
    Ok(data)
}

/// Positions of the inner tones inside the tile-tone list.
fn inner_positions(p: usize) -> Vec<usize> {
    (0..p)
        .flat_map(|i| (1..TILE_WIDTH - 1).map(move |j| i * TILE_WIDTH + j))
        .collect()
}

/// Hopping-pilot pipeline over one window.
pub fn run_ph(data: &WindowData, ph: &PhConfig) -> Result<(DelayEstimate, ErrorSums)> {
    let p = data.pattern.p;
    let mut acc = CorrAccumulator::new(2 * p);
    for (t, (e, o)) in data.even_est.iter().zip(&data.odd_est).enumerate() {
        acc.accumulate(&stack_pair(e, o, t)?)?;
    }
    let delays = estimate_delays(&acc, ph)?;

    let tile_tones = data.alloc.tile_tones();
    let interp = Interpolator::new(&data.pattern, &tile_tones, &tile_tones, &delays.support, ph.n_fft)?;
    let inner = inner_positions(p);
    let pick = |v: &[C64]| inner.iter().map(|&i| v[i]).collect::<Vec<_>>();

    let mut sums = ErrorSums::default();
    for t in 0..data.n_pairs() {
        let full_even = interp.even(&data.even_est[t])?;
        let full_odd = interp.odd(&data.odd_est[t])?;
        let middle = middle_symbol_cfr(&full_even, &full_odd)?;
        sums.add(&pick(&full_even), &data.truth_even[t]);
        sums.add(&middle, &data.truth_middle[t]);
        sums.add(&pick(&full_odd), &data.truth_odd[t]);
    }
    Ok((delays, sums))
}

/// Per-tile local-linear baseline over one window.
pub fn run_ll(data: &WindowData) -> ErrorSums {
    let inner_per_tile = TILE_WIDTH - 2;
    let mut sums = ErrorSums::default();
    for t in 0..data.n_pairs() {
        let pairs: Vec<(C64, C64)> = data.even_est[t]
            .iter()
            .copied()
            .zip(data.odd_est[t].iter().copied())
            .collect();
        let tile_values = ll_baseline(&pairs);
        let spread = |n: usize| -> Vec<C64> { tile_values.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect() };
        let edge = spread(inner_per_tile);
        sums.add(&edge, &data.truth_even[t]);
        sums.add(&spread(TILE_WIDTH), &data.truth_middle[t]);
        sums.add(&edge, &data.truth_odd[t]);
    }
    sums
}

/// Per-trial result. A PH failure is kept as an error rather than dropped.
#[derive(Debug)]
pub struct TrialOutcome {
    pub ph: Option<Result<ErrorSums>>,
    pub ll: Option<ErrorSums>,
}

pub fn run_trial(cfg: &ExperimentConfig, snr_db: f64, trial_seed: u64) -> Result<TrialOutcome> {
    let data = simulate_window(cfg, snr_db, trial_seed)?;
    let ph = cfg
        .estimator
        .runs_ph()
        .then(|| run_ph(&data, &cfg.ph_config()).map(|(_, s)| s));
    let ll = cfg.estimator.runs_ll().then(|| run_ll(&data));
    Ok(TrialOutcome { ph, ll })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseRecord {
    pub estimator: EstimatorTag,
    pub snr_db: f64,
    pub f_d_hz: f64,
    pub n_t: usize,
    pub n_sch: usize,
    pub nmse_db: f64,
    pub trials: usize,
    pub ci95_db: f64,
}

/// Half-width of the bootstrap 95% interval of the ratio-of-sums NMSE.
fn bootstrap_ci95<R: Rng>(per_trial: &[ErrorSums], rng: &mut R) -> f64 {
    let n = per_trial.len();
    if n < 2 {
        return 0.0;
    }
    let mut stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .filter_map(|_| {
            let mut s = ErrorSums::default();
            for _ in 0..n {
                s.merge(per_trial[rng.random_range(0..n)]);
            }
            s.nmse_db().ok()
        })
        .collect();
    if stats.len() < 2 {
        return 0.0;
    }
    stats.sort_by(f64::total_cmp);
    let q = |f: f64| stats[((stats.len() - 1) as f64 * f).round() as usize];
    0.5 * (q(0.975) - q(0.025))
}

fn aggregate(
    cfg: &ExperimentConfig,
    tag: EstimatorTag,
    snr_index: usize,
    snr_db: f64,
    per_trial: Vec<ErrorSums>,
) -> Result<NmseRecord> {
    let ok = per_trial.len();
    if (ok as f64) < MIN_SUCCESS_FRACTION * cfg.n_trials as f64 {
        tracing::warn!(
            "{tag} at {snr_db} dB (n_t={}, f_d={}, n_sch={}): only {ok}/{} trials succeeded; point is not valid",
            cfg.n_t,
            cfg.f_d,
            cfg.n_sch,
            cfg.n_trials
        );
    }
    if ok == 0 {
        return Err(Error::Degenerate(format!("{tag} at {snr_db} dB: every trial failed")));
    }
    let mut total = ErrorSums::default();
    for s in &per_trial {
        total.merge(*s);
    }
    let stream = STREAM_BOOTSTRAP ^ ((snr_index as u64) << 8) ^ tag as u64;
    let ci95_db = bootstrap_ci95(&per_trial, &mut seeded_rng(cfg.seed, stream));
    Ok(NmseRecord {
        estimator: tag,
        snr_db,
        f_d_hz: cfg.f_d,
        n_t: cfg.n_t,
        n_sch: cfg.n_sch,
        nmse_db: total.nmse_db()?,
        trials: ok,
        ci95_db,
    })
}

/// Runs every SNR point of `cfg`; one record per estimator and SNR.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<NmseRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for (si, &snr) in cfg.snr_db_list.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = (0..cfg.n_trials)
            .into_par_iter()
            .map(|i| run_trial(cfg, snr, cfg.trial_seed(i)))
            .collect::<Result<Vec<_>>>()?;

        if cfg.estimator.runs_ph() {
            let mut ok = Vec::with_capacity(outcomes.len());
            for (i, o) in outcomes.iter().enumerate() {
                match &o.ph {
                    Some(Ok(s)) => ok.push(*s),
                    Some(Err(e)) => tracing::warn!("PH trial {i} at {snr} dB excluded: {e}"),
                    None => {}
                }
            }
            records.push(aggregate(cfg, EstimatorTag::Ph, si, snr, ok)?);
        }
        if cfg.estimator.runs_ll() {
            let ll: Vec<ErrorSums> = outcomes.iter().filter_map(|o| o.ll).collect();
            records.push(aggregate(cfg, EstimatorTag::Ll, si, snr, ll)?);
        }
    }
    Ok(records)
}

/// Runs several configs and returns all records in table order.
pub fn run_sweeps(cfgs: &[ExperimentConfig]) -> Result<Vec<NmseRecord>> {
    let mut all = Vec::new();
    for cfg in cfgs {
        all.extend(run_sweep(cfg)?);
    }
    sort_records(&mut all);
    Ok(all)
}

/// Table order: estimator, then the curve parameters, then SNR.
pub fn sort_records(records: &mut [NmseRecord]) {
    records.sort_by(|a, b| {
        a.estimator
            .cmp(&b.estimator)
            .then(a.n_t.cmp(&b.n_t))
            .then(a.f_d_hz.total_cmp(&b.f_d_hz))
            .then(a.n_sch.cmp(&b.n_sch))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
}

pub const CSV_HEADER: [&str; 8] = [
    "estimator",
    "snr_db",
    "f_d_hz",
    "n_t",
    "n_sch",
    "nmse_db",
    "trials",
    "ci95_db",
];

pub fn write_csv_to<W: std::io::Write>(records: &[NmseRecord], out: W) -> std::result::Result<(), csv::Error> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &sorted {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 0,
            msg: format!("{}: {other:?}", path.display()),
        },
    }
}

pub fn write_csv(records: &[NmseRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(records, std::io::BufWriter::new(file)).map_err(|e| csv_error(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<NmseRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {:?}", header),
        });
    }
    r.deserialize().map(|rec| rec.map_err(|e| csv_error(path, e))).collect()
}
