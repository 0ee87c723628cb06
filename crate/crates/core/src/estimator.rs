//! Hopping-pilot ESPRIT channel estimation and the local-linear baseline.
//!
//! Per estimation window the pipeline is:
//!
//! 1. LS estimates on the even and odd pilot sets of every symbol pair,
//!    stacked into one `2P` vector per pair.
//! 2. Sample covariance of the stacked vectors ([`CorrAccumulator`]).
//! 3. Lag-one time correlation `η̂` from the block norms, and Doppler
//!    compensation of the off-diagonal blocks.
//! 4. Model order from MDL on the averaged diagonal blocks.
//! 5. ESPRIT on the compensated covariance. Since the odd pilots are the even
//!    pilots shifted by `ν`, the lower half of the signal subspace is the
//!    upper half rotated by `diag(exp(-j2πντ_l/N))`.
//! 6. A window of `±β` integer delays around each estimate, clipped to the
//!    cyclic prefix, spans the interpolation basis `G = F_d · F_p†`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::frame::PilotPattern;
use crate::numerics::{
    general_eigenvalues, hermitian_evd, pseudo_inverse, solve_shift_operator, CMatrix, CVector, ShiftSolver, C64,
};

/// Lower clamp for `η̂`; the off-diagonal blocks are divided by it.
pub const ETA_FLOOR: f64 = 0.05;
/// Upper bound on the MDL candidate order.
pub const MDL_ORDER_CAP: usize = 24;
/// Largest capture half-width considered.
pub const MAX_BETA: usize = 5;
pub const DEFAULT_BETA: usize = 5;

const HERMITIAN_TOL: f64 = 1e-9;
const PINV_RTOL: f64 = 1e-10;

/// LS estimate on pilot tones: `Ĥ_p = rx ⊘ x_p`.
pub fn ls_pilot_estimate(rx_pilots: &[C64], pilot_tx: &[C64]) -> Result<Vec<C64>> {
    if rx_pilots.len() != pilot_tx.len() {
        return Err(Error::Dimension(format!(
            "{} received pilots for {} transmitted",
            rx_pilots.len(),
            pilot_tx.len()
        )));
    }
    rx_pilots
        .iter()
        .zip(pilot_tx)
        .map(|(y, x)| {
            if x.norm_sqr() == 0.0 {
                Err(Error::Domain("zero pilot value".into()))
            } else {
                Ok(y / x)
            }
        })
        .collect()
}

/// Even-symbol pilot estimates on top of the odd-symbol ones.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedPilotEstimate {
    pub vector: Vec<C64>,
    pub pair_index: usize,
}

impl StackedPilotEstimate {
    pub fn p(&self) -> usize {
        self.vector.len() / 2
    }

    pub fn split(&self) -> (&[C64], &[C64]) {
        self.vector.split_at(self.p())
    }
}

pub fn stack_pair(even_est: &[C64], odd_est: &[C64], pair_index: usize) -> Result<StackedPilotEstimate> {
    if even_est.len() != odd_est.len() {
        return Err(Error::Dimension(format!(
            "even estimate has {} entries, odd has {}",
            even_est.len(),
            odd_est.len()
        )));
    }
    let mut vector = Vec::with_capacity(2 * even_est.len());
    vector.extend_from_slice(even_est);
    vector.extend_from_slice(odd_est);
    Ok(StackedPilotEstimate { vector, pair_index })
}

/// Running sum of `v·vᴴ` over stacked pilot vectors.
#[derive(Debug, Clone)]
pub struct CorrAccumulator {
    pub sum: CMatrix,
    pub count: usize,
}

impl CorrAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: CMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.nrows()
    }

    pub fn accumulate(&mut self, v: &StackedPilotEstimate) -> Result<()> {
        if v.vector.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "stacked vector of length {} for a {}-dim accumulator",
                v.vector.len(),
                self.dim()
            )));
        }
        let x = CVector::from_column_slice(&v.vector);
        let one = Complex::new(1.0, 0.0);
        self.sum.gerc(one, &x, &x, one);
        self.count += 1;
        Ok(())
    }

    /// Number of OFDMA symbols behind the estimate (two per pair).
    pub fn symbols(&self) -> usize {
        2 * self.count
    }

    /// Sample covariance `sum / count`.
    pub fn finalize(&self) -> Result<CMatrix> {
        if self.count == 0 {
            return Err(Error::Degenerate("no snapshots accumulated".into()));
        }
        Ok(&self.sum / Complex::new(self.count as f64, 0.0))
    }
}

struct Blocks {
    a11: CMatrix,
    a12: CMatrix,
    a21: CMatrix,
    a22: CMatrix,
}

fn split_blocks(r: &CMatrix) -> Result<Blocks> {
    let n = r.nrows();
    if n != r.ncols() || n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "expected an even-sized square matrix, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let p = n / 2;
    Ok(Blocks {
        a11: r.view((0, 0), (p, p)).into_owned(),
        a12: r.view((0, p), (p, p)).into_owned(),
        a21: r.view((p, 0), (p, p)).into_owned(),
        a22: r.view((p, p), (p, p)).into_owned(),
    })
}

/// Lag-one correlation from the block norms, clamped to `[ETA_FLOOR, 1]`.
///
/// `η̂² = (‖A12‖² + ‖A21‖²) / (‖A11‖² + ‖A22‖²)`.
pub fn estimate_eta(r: &CMatrix) -> Result<f64> {
    let b = split_blocks(r)?;
    let den = b.a11.norm_squared() + b.a22.norm_squared();
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::Degenerate("diagonal blocks have zero energy".into()));
    }
    let num = b.a12.norm_squared() + b.a21.norm_squared();
    Ok((num / den).sqrt().clamp(ETA_FLOOR, 1.0))
}

/// Divides the off-diagonal blocks by `eta` and re-symmetrises.
pub fn compensate_doppler(r: &CMatrix, eta: f64) -> Result<CMatrix> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("eta must be in (0, 1], got {eta}")));
    }
    split_blocks(r)?;
    let p = r.nrows() / 2;
    let mut out = r.clone();
    out.view_mut((0, p), (p, p)).scale_mut(1.0 / eta);
    out.view_mut((p, 0), (p, p)).scale_mut(1.0 / eta);
    Ok((&out + out.adjoint()) * Complex::new(0.5, 0.0))
}

/// Covariance of a single symbol's pilot estimate: `(A11 + A22)/2`.
pub fn reduce_to_rp(r: &CMatrix) -> Result<CMatrix> {
    let b = split_blocks(r)?;
    Ok((b.a11 + b.a22) * Complex::new(0.5, 0.0))
}

/// Candidate cap for MDL: `min(p - 1, effective_rank, 24)`, where the
/// effective rank counts eigenvalues above `1e-10·λ_max`.
///
/// A noiseless rank-`L` covariance must be allowed to return `L`; the floored
/// all-equal tail keeps the score finite there.
pub fn mdl_candidate_cap(eigenvalues: &[f64]) -> usize {
    let p = eigenvalues.len();
    let lmax = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = eigenvalues.iter().filter(|&&v| v > 1e-10 * lmax).count();
    p.saturating_sub(1).min(rank).min(MDL_ORDER_CAP)
}

/// Wax–Kailath MDL value for order `k` on a descending spectrum floored at `1e-12·λ_max`.
pub fn mdl_score(floored: &[f64], snapshots: usize, k: usize) -> f64 {
    let p = floored.len();
    let tail = &floored[k..];
    let m = tail.len() as f64;
    let arith = tail.iter().sum::<f64>() / m;
    let log_geo = tail.iter().map(|v| v.ln()).sum::<f64>() / m;
    let ns = snapshots as f64;
    -ns * m * (log_geo - arith.ln()) + 0.5 * (k * (2 * p - k)) as f64 * ns.ln()
}

/// Number of significant eigenvalues by MDL, searched over `1..=max(k_max, 1)`.
pub fn mdl_order(eigenvalues: &[f64], snapshots: usize, k_max: usize) -> Result<usize> {
    let p = eigenvalues.len();
    if p == 0 || snapshots == 0 {
        return Err(Error::Degenerate(
            "MDL needs a spectrum and at least one snapshot".into(),
        ));
    }
    if k_max >= p {
        return Err(Error::Domain(format!("k_max {k_max} must be below the dimension {p}")));
    }
    if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Domain("eigenvalues must be sorted descending".into()));
    }
    let lmax = eigenvalues[0];
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Err(Error::Degenerate("spectrum has no positive energy".into()));
    }
    if k_max == 0 {
        return Ok(1);
    }
    let floor = 1e-12 * lmax;
    let floored: Vec<f64> = eigenvalues.iter().map(|&v| v.max(floor)).collect();
    let best = (1..=k_max)
        .map(|k| (k, mdl_score(&floored, snapshots, k)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .unwrap_or(1);
    Ok(best)
}

/// ESPRIT output. `ls_fallback` is set when TLS was requested but the LS
/// solution had to be used.
#[derive(Debug, Clone, PartialEq)]
pub struct EspritDelays {
    pub taus: Vec<f64>,
    pub ls_fallback: bool,
}

/// Delays in samples from a Doppler-compensated stacked covariance.
///
/// Estimates lie in `[0, N/|ν|)`, sorted ascending.
pub fn esprit_delays(
    r_tilde: &CMatrix,
    l_hat: usize,
    nu: i64,
    n_fft: usize,
    mode: ShiftSolver,
) -> Result<EspritDelays> {
    split_blocks(r_tilde)?;
    let p = r_tilde.nrows() / 2;
    if l_hat == 0 || l_hat > p {
        return Err(Error::Domain(format!("order {l_hat} must be in [1, {p}]")));
    }
    if nu == 0 {
        return Err(Error::Domain("hopping offset must be non-zero".into()));
    }
    let evd = hermitian_evd(r_tilde, HERMITIAN_TOL)?;
    let lmax = evd.values[0].abs();
    if let Some(&next) = evd.values.get(l_hat) {
        if evd.values[l_hat - 1] - next < 1e-12 * lmax {
            return Err(Error::Subspace(format!("no eigen-gap after {l_hat} components")));
        }
    }
    let u = evd.vectors.columns(0, l_hat);
    let u_up = u.rows(0, p).into_owned();
    let u_dw = u.rows(p, p).into_owned();

    let (q, ls_fallback) = match solve_shift_operator(&u_up, &u_dw, mode) {
        Ok(q) => (q, false),
        Err(Error::Subspace(msg)) if mode == ShiftSolver::Tls => {
            tracing::warn!("TLS shift solve failed ({msg}); falling back to LS");
            (solve_shift_operator(&u_up, &u_dw, ShiftSolver::Ls)?, true)
        }
        Err(e) => return Err(e),
    };
    let period = n_fft as f64 / nu.unsigned_abs() as f64;
    let mut taus: Vec<f64> = general_eigenvalues(&q)?
        .into_iter()
        .map(|lambda| phase_to_delay(lambda, nu, n_fft, period))
        .collect();
    taus.sort_by(f64::total_cmp);
    Ok(EspritDelays { taus, ls_fallback })
}

fn phase_to_delay(lambda: C64, nu: i64, n_fft: usize, period: f64) -> f64 {
    let phase = lambda.conj().arg().rem_euclid(2.0 * PI);
    let tau = phase * n_fft as f64 / (2.0 * PI * nu as f64);
    let wrapped = tau.rem_euclid(period);
    // rem_euclid can round up to the period itself
    if wrapped >= period {
        0.0
    } else {
        wrapped
    }
}

/// Maps an estimate in `[0, period)` to a signed delay. Values closer to the
/// wrap point than to the CP end are read as slightly negative delays.
pub fn unwrap_delay(tau: f64, period: f64, l_cp: usize) -> f64 {
    let cut = l_cp as f64 + 0.5 * (period - l_cp as f64).max(0.0);
    if tau >= cut {
        tau - period
    } else {
        tau
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Delay support and the half-width that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelaySupport {
    pub support: Vec<usize>,
    pub beta: usize,
}

/// Union of `±β` integer windows around the rounded delays, clipped to `[0, l_cp)`.
///
/// Window centres outside the CP are moved to its nearest edge first, so an
/// estimate that drifted below zero still covers the first path.
///
/// `β` is reduced until `2·β·|taus| <= p` and the support has at most `p`
/// entries. `period` is the ESPRIT ambiguity range `N/|ν|`; see [`unwrap_delay`].
pub fn expand_delay_support(taus: &[f64], beta: usize, l_cp: usize, p: usize, period: f64) -> DelaySupport {
    let centers: Vec<i64> = taus
        .iter()
        .map(|&t| round_half_up(unwrap_delay(t, period, l_cp)).clamp(0, l_cp as i64 - 1))
        .collect();
    let mut b = beta;
    loop {
        let support = window_union(&centers, b, l_cp);
        let fits = 2 * b * taus.len() <= p && support.len() <= p;
        if fits || b == 0 {
            return DelaySupport { support, beta: b };
        }
        b -= 1;
    }
}

fn window_union(centers: &[i64], beta: usize, l_cp: usize) -> Vec<usize> {
    let b = beta as i64;
    let mut out: Vec<usize> = centers
        .iter()
        .flat_map(|&c| (c - b)..=(c + b))
        .filter(|&d| d >= 0 && d < l_cp as i64)
        .map(|d| d as usize)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// `[F]_{k,l} = exp(-j2π k d_l / N)` for tones `k` and integer delays `d_l`.
pub fn fourier_rows(tones: &[usize], delays: &[usize], n_fft: usize) -> CMatrix {
    CMatrix::from_fn(tones.len(), delays.len(), |i, l| {
        let phase = -2.0 * PI * ((tones[i] * delays[l]) % n_fft) as f64 / n_fft as f64;
        C64::from_polar(1.0, phase)
    })
}

/// `G = F_d · F_p†` over the delay support.
pub fn build_interpolator(
    data_tones: &[usize],
    pilot_tones: &[usize],
    support: &[usize],
    n_fft: usize,
) -> Result<CMatrix> {
    if support.is_empty() {
        return Err(Error::Degenerate("empty delay support".into()));
    }
    if pilot_tones.is_empty() {
        return Err(Error::Degenerate("no pilot tones".into()));
    }
    if let Some(&k) = data_tones.iter().chain(pilot_tones).find(|&&k| k >= n_fft) {
        return Err(Error::Index { index: k, bound: n_fft });
    }
    let f_d = fourier_rows(data_tones, support, n_fft);
    let f_p = fourier_rows(pilot_tones, support, n_fft);
    Ok(f_d * pseudo_inverse(&f_p, PINV_RTOL)?)
}

pub fn interpolate_cfr(g: &CMatrix, pilot_est: &[C64]) -> Result<Vec<C64>> {
    if g.ncols() != pilot_est.len() {
        return Err(Error::Dimension(format!(
            "interpolator expects {} pilots, got {}",
            g.ncols(),
            pilot_est.len()
        )));
    }
    let h = CVector::from_column_slice(pilot_est);
    Ok((g * h).iter().copied().collect())
}

/// Interpolators for both parities of a hopping pair.
#[derive(Debug, Clone)]
pub struct Interpolator {
    pub g_even: CMatrix,
    pub g_odd: CMatrix,
    pub data_tones_even: Vec<usize>,
    pub data_tones_odd: Vec<usize>,
}

impl Interpolator {
    pub fn new(
        pattern: &PilotPattern,
        data_tones_even: &[usize],
        data_tones_odd: &[usize],
        support: &[usize],
        n_fft: usize,
    ) -> Result<Self> {
        Ok(Self {
            g_even: build_interpolator(data_tones_even, &pattern.pilots_even, support, n_fft)?,
            g_odd: build_interpolator(data_tones_odd, &pattern.pilots_odd, support, n_fft)?,
            data_tones_even: data_tones_even.to_vec(),
            data_tones_odd: data_tones_odd.to_vec(),
        })
    }

    pub fn even(&self, pilot_est: &[C64]) -> Result<Vec<C64>> {
        interpolate_cfr(&self.g_even, pilot_est)
    }

    pub fn odd(&self, pilot_est: &[C64]) -> Result<Vec<C64>> {
        interpolate_cfr(&self.g_odd, pilot_est)
    }
}

/// Local-linear baseline: one value per tile, the mean of the tile's two pilot estimates.
pub fn ll_baseline(tile_pilots: &[(C64, C64)]) -> Vec<C64> {
    tile_pilots.iter().map(|(a, b)| (a + b) * 0.5).collect()
}

/// CFR of the pilot-free middle symbol: midpoint of its neighbours.
pub fn middle_symbol_cfr(first: &[C64], third: &[C64]) -> Result<Vec<C64>> {
    if first.len() != third.len() {
        return Err(Error::Dimension(format!(
            "middle symbol: {} vs {} entries",
            first.len(),
            third.len()
        )));
    }
    Ok(first.iter().zip(third).map(|(a, b)| (a + b) * 0.5).collect())
}

/// Parameters of the window-level delay estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhConfig {
    pub nu: i64,
    pub n_fft: usize,
    pub l_cp: usize,
    pub beta: usize,
    pub mode: ShiftSolver,
}

/// Result of one estimation window.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayEstimate {
    pub eta_hat: f64,
    pub order: usize,
    pub taus: Vec<f64>,
    pub support: Vec<usize>,
    pub beta: usize,
    pub ls_fallback: bool,
}

impl DelayEstimate {
    /// `eta_hat L_hat tau_0 ... tau_{L-1}`
    pub fn record(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DelayEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.eta_hat, self.order)?;
        for t in &self.taus {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

/// Parsed form of a [`DelayEstimate`] record.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayRecord {
    pub eta_hat: f64,
    pub order: usize,
    pub taus: Vec<f64>,
}

impl FromStr for DelayRecord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse { line: 1, msg };
        let mut it = s.split_whitespace();
        let eta_hat: f64 = it
            .next()
            .ok_or_else(|| bad("missing eta_hat".into()))?
            .parse()
            .map_err(|e| bad(format!("eta_hat: {e}")))?;
        let order: usize = it
            .next()
            .ok_or_else(|| bad("missing L_hat".into()))?
            .parse()
            .map_err(|e| bad(format!("L_hat: {e}")))?;
        let taus = it
            .map(|t| t.parse::<f64>().map_err(|e| bad(format!("tau {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if taus.len() != order {
            return Err(bad(format!("L_hat is {order} but {} delays follow", taus.len())));
        }
        Ok(Self { eta_hat, order, taus })
    }
}

/// Runs η estimation, MDL, ESPRIT and support expansion on an accumulated window.
///
/// If the shift operator cannot be solved at the MDL order, the order is
/// lowered until it can.
pub fn estimate_delays(acc: &CorrAccumulator, cfg: &PhConfig) -> Result<DelayEstimate> {
    let r = acc.finalize()?;
    let p = r.nrows() / 2;
    let eta_hat = estimate_eta(&r)?;
    let r_tilde = compensate_doppler(&r, eta_hat)?;

    let rp = reduce_to_rp(&r)?;
    let spectrum = hermitian_evd(&rp, HERMITIAN_TOL)?.values;
    let k_max = mdl_candidate_cap(&spectrum);
    let mut order = mdl_order(&spectrum, acc.symbols(), k_max)?.clamp(1, p);

    let esprit = loop {
        match esprit_delays(&r_tilde, order, cfg.nu, cfg.n_fft, cfg.mode) {
            Ok(d) => break d,
            Err(Error::Subspace(msg)) if order > 1 => {
                tracing::warn!("ESPRIT failed at order {order} ({msg}); retrying with {}", order - 1);
                order -= 1;
            }
            Err(e) => return Err(e),
        }
    };
    let period = cfg.n_fft as f64 / cfg.nu.unsigned_abs() as f64;
    let DelaySupport { support, beta } = expand_delay_support(&esprit.taus, cfg.beta, cfg.l_cp, p, period);
    Ok(DelayEstimate {
        eta_hat,
        order,
        taus: esprit.taus,
        support,
        beta,
        ls_fallback: esprit.ls_fallback,
    })
}
