//! WSSUS sparse multipath Rayleigh fading.
//!
//! A channel is a fixed set of non-sample-spaced tap delays with average
//! powers ([`ChannelProfile`]) and one complex gain process per tap
//! ([`FadingProcess`]). The frequency response on tone `k` of an `N`-point
//! grid is `H[k] = Σ_l γ_l · exp(-j2π k τ_l / N)`.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{bessel_j0, seeded_rng, CMatrix, C64};

/// ITU-R M.1225 Vehicular A tap delays in ns.
pub const VEH_A_DELAYS_NS: [f64; 6] = [0.0, 310.0, 710.0, 1090.0, 1730.0, 2510.0];
/// ITU-R M.1225 Vehicular A tap powers in dB.
pub const VEH_A_POWERS_DB: [f64; 6] = [0.0, -1.0, -9.0, -10.0, -15.0, -20.0];

/// Oscillators per tap in the sum-of-sinusoids generator.
pub const OSCILLATORS_PER_TAP: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
    /// Delays in units of the sampling period (may be fractional).
    pub delays_norm: Vec<f64>,
    /// Linear tap powers, normalised to unit sum.
    pub powers_lin: Vec<f64>,
}

impl ChannelProfile {
    /// Builds a profile from delays (ns) and powers (dB) at sampling rate `bw_hz`.
    ///
    /// Delays must start at zero and increase strictly. Powers are rescaled so
    /// the total average power is one.
    pub fn from_taps(delays_ns: Vec<f64>, powers_db: Vec<f64>, bw_hz: f64) -> Result<Self> {
        if delays_ns.is_empty() || delays_ns.len() != powers_db.len() {
            return Err(Error::Config(format!(
                "channel profile needs matching, non-empty delay/power lists (got {} and {})",
                delays_ns.len(),
                powers_db.len()
            )));
        }
        if !(bw_hz > 0.0) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bw_hz}")));
        }
        if delays_ns.iter().chain(&powers_db).any(|v| !v.is_finite()) {
            return Err(Error::Config("channel profile contains non-finite values".into()));
        }
        if delays_ns[0] != 0.0 {
            return Err(Error::Config(format!(
                "first tap delay must be 0 ns, got {}",
                delays_ns[0]
            )));
        }
        if delays_ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("tap delays must be strictly increasing".into()));
        }
        let delays_norm = delays_ns.iter().map(|d| d * bw_hz / 1e9).collect();
        let raw: Vec<f64> = powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect();
        let total: f64 = raw.iter().sum();
        let powers_lin = raw.iter().map(|p| p / total).collect();
        Ok(Self {
            delays_ns,
            powers_db,
            delays_norm,
            powers_lin,
        })
    }

    pub fn veh_a(bw_hz: f64) -> Self {
        Self::from_taps(VEH_A_DELAYS_NS.to_vec(), VEH_A_POWERS_DB.to_vec(), bw_hz)
            .expect("Vehicular A profile is valid for positive bandwidth")
    }

    /// Parses a whitespace-separated `delay_ns power_db` table. `#` starts a comment.
    pub fn parse_table(text: &str, bw_hz: f64) -> Result<Self> {
        let mut delays = Vec::new();
        let mut powers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected `delay_ns power_db`, got {} columns", cols.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("{s:?}: {e}"),
                })
            };
            delays.push(parse(cols[0])?);
            powers.push(parse(cols[1])?);
        }
        Self::from_taps(delays, powers, bw_hz)
    }

    pub fn load(path: impl AsRef<Path>, bw_hz: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_table(&text, bw_hz)
    }

    pub fn num_taps(&self) -> usize {
        self.delays_norm.len()
    }

    /// Checks the sufficient-CP condition: every delay shorter than `l_cp` samples.
    pub fn check_cp(&self, l_cp: usize) -> Result<()> {
        match self.delays_norm.last() {
            Some(&d) if d >= l_cp as f64 => Err(Error::Config(format!(
                "max tap delay {d:.2} samples is not inside the cyclic prefix ({l_cp})"
            ))),
            _ => Ok(()),
        }
    }
}

/// Normalised tap autocorrelation under the Jakes spectrum, `J0(2π f_d T_s |m|)`.
pub fn time_correlation(f_d: f64, t_s: f64, m: i64) -> f64 {
    bessel_j0(2.0 * PI * f_d * t_s * m.unsigned_abs() as f64)
}

/// Tap gains `γ_l(n)` sampled once per OFDMA symbol.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    /// `L × n_symbols`; column `n` holds all tap gains at symbol `n`.
    pub gains: CMatrix,
    pub f_d: f64,
    pub t_s: f64,
}

impl FadingProcess {
    pub fn num_symbols(&self) -> usize {
        self.gains.ncols()
    }

    pub fn gains_at(&self, n: usize) -> Vec<C64> {
        self.gains.column(n).iter().copied().collect()
    }
}

/// Generates independent Rayleigh tap processes with a Jakes Doppler spectrum.
///
/// Each tap is a sum of [`OSCILLATORS_PER_TAP`] complex exponentials with
/// arrival angles `α_i = 2π(i + θ_l)/M` and independent uniform phases. The
/// offsets `θ_l = (l + 1/4)/L` interleave the taps so no two taps share a
/// Doppler frequency (including the mirror `cos α = cos(-α)`), which keeps
/// the taps uncorrelated over long runs. The time-averaged autocorrelation of one tap is the
/// `M`-point rectangle rule for `(1/2π)∫exp(j x cos α) dα`, which equals
/// `J0(x)` to machine precision whenever `M` comfortably exceeds `x`.
pub fn generate_fading(
    profile: &ChannelProfile,
    f_d: f64,
    t_s: f64,
    n_symbols: usize,
    seed: u64,
) -> Result<FadingProcess> {
    if n_symbols == 0 {
        return Err(Error::Config("fading process needs at least one symbol".into()));
    }
    if !(f_d >= 0.0) || !(t_s > 0.0) {
        return Err(Error::Config(format!(
            "invalid Doppler {f_d} Hz or symbol time {t_s} s"
        )));
    }
    let taps = profile.num_taps();
    let m = OSCILLATORS_PER_TAP;
    let mut gains = CMatrix::zeros(taps, n_symbols);
    for l in 0..taps {
        let mut rng = seeded_rng(seed, l as u64);
        let theta = (l as f64 + 0.25) / taps as f64;
        let osc: Vec<(f64, f64)> = (0..m)
            .map(|i| {
                let alpha = 2.0 * PI * (i as f64 + theta) / m as f64;
                let omega = 2.0 * PI * f_d * alpha.cos() * t_s;
                let phase = 2.0 * PI * rng.random::<f64>();
                (omega, phase)
            })
            .collect();
        let amp = (profile.powers_lin[l] / m as f64).sqrt();
        for n in 0..n_symbols {
            let t = n as f64;
            let z: C64 = osc
                .iter()
                .map(|&(omega, phase)| C64::from_polar(1.0, omega * t + phase))
                .sum();
            gains[(l, n)] = z * amp;
        }
    }
    Ok(FadingProcess { gains, f_d, t_s })
}

/// CFR on the given tones: `H[k] = Σ_l γ_l · exp(-j2π k τ_l / N)`.
pub fn cfr_at_tones(gains: &[C64], delays_norm: &[f64], tones: &[usize], n_fft: usize) -> Result<Vec<C64>> {
    let steering = ToneSteering::new(delays_norm, tones, n_fft)?;
    steering.cfr(gains)
}

/// Rows of the non-balanced Fourier matrix `F_τ` restricted to a tone set.
///
/// Precomputing this once per window turns per-symbol CFR evaluation into a
/// small matrix-vector product.
#[derive(Debug, Clone)]
pub struct ToneSteering {
    pub tones: Vec<usize>,
    /// `|tones| × L`
    pub matrix: CMatrix,
}

impl ToneSteering {
    pub fn new(delays_norm: &[f64], tones: &[usize], n_fft: usize) -> Result<Self> {
        if n_fft == 0 {
            return Err(Error::Config("FFT size must be positive".into()));
        }
        if let Some(&bad) = tones.iter().find(|&&k| k >= n_fft) {
            return Err(Error::Index {
                index: bad,
                bound: n_fft,
            });
        }
        let matrix = CMatrix::from_fn(tones.len(), delays_norm.len(), |i, l| {
            C64::from_polar(1.0, -2.0 * PI * tones[i] as f64 * delays_norm[l] / n_fft as f64)
        });
        Ok(Self {
            tones: tones.to_vec(),
            matrix,
        })
    }

    pub fn cfr(&self, gains: &[C64]) -> Result<Vec<C64>> {
        if gains.len() != self.matrix.ncols() {
            return Err(Error::Dimension(format!(
                "{} tap gains for {} delays",
                gains.len(),
                self.matrix.ncols()
            )));
        }
        Ok(self
            .matrix
            .row_iter()
            .map(|row| row.iter().zip(gains).map(|(f, g)| f * g).sum())
            .collect())
    }
}
