//! Dense complex kernels used by the estimator.
//!
//! Matrices are `nalgebra::DMatrix<Complex<f64>>`. The decompositions come
//! from nalgebra; this module pins down the conventions the rest of the crate
//! relies on (descending eigenvalue order, relative rank thresholds, typed
//! errors for degenerate subspaces) and adds the scalar pieces nalgebra does
//! not provide.

use nalgebra::{Complex, DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Simulation RNG: ChaCha with 8 rounds, a 64-bit seed and a 64-bit stream id.
///
/// ChaCha is counter based, so `(seed, stream)` fully determines the
/// sequence on every platform.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for work item `index` under `seed`: `splitmix64(seed ^ splitmix64(index))`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Eigenvalues sorted non-increasing, with the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

fn check_finite(a: &CMatrix, what: &str) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what}: non-finite entry")))
    }
}

fn check_square(a: &CMatrix, what: &str) -> Result<()> {
    if a.nrows() == a.ncols() && a.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what}: expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// The input is symmetrised as `(A + Aᴴ)/2` before decomposition. Inputs whose
/// anti-Hermitian part exceeds `tol·‖A‖_F` are rejected.
pub fn hermitian_evd(a: &CMatrix, tol: f64) -> Result<EigenPairs> {
    check_square(a, "hermitian_evd")?;
    check_finite(a, "hermitian_evd")?;
    let adj = a.adjoint();
    let skew = (a - &adj).norm();
    if skew > tol * a.norm() {
        return Err(Error::Domain(format!(
            "hermitian_evd: ‖A - Aᴴ‖_F = {skew:e} exceeds tolerance"
        )));
    }
    let sym = (a + adj) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(order.iter());
    Ok(EigenPairs { values, vectors })
}

/// Singular values sorted descending together with the permutation applied.
fn sorted_svd(a: &CMatrix) -> (SVD<C64, nalgebra::Dyn, nalgebra::Dyn>, Vec<usize>) {
    let svd = SVD::new(a.clone(), true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    (svd, order)
}

/// Moore–Penrose pseudo-inverse. Singular values below `rtol·σ_max` are treated as zero.
pub fn pseudo_inverse(a: &CMatrix, rtol: f64) -> Result<CMatrix> {
    check_finite(a, "pseudo_inverse")?;
    if !(rtol > 0.0 && rtol < 1.0) {
        return Err(Error::Domain(format!("pseudo_inverse: rtol {rtol} not in (0, 1)")));
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(CMatrix::zeros(n, m));
    }
    let svd = SVD::new(a.clone(), true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    if sigma_max == 0.0 {
        return Ok(CMatrix::zeros(n, m));
    }
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᴴ requested");
    let cutoff = rtol * sigma_max;

    let mut out = CMatrix::zeros(n, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        // out += v_k · (1/s) · u_kᴴ
        let v_k = v_t.row(k).adjoint();
        let u_k = u.column(k);
        out += (v_k * u_k.adjoint()) * C64::new(1.0 / s, 0.0);
    }
    Ok(out)
}

/// Criterion used to solve `U_dw ≈ U_up · Q` for the shift operator `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShiftSolver {
    /// Ordinary least squares, `Q = U_up† · U_dw`.
    Ls,
    /// Total least squares on `[U_up | U_dw]`.
    #[default]
    Tls,
}

const RANK_RTOL: f64 = 1e-12;

fn min_max_singular(a: &CMatrix) -> (f64, f64) {
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// Solves the rotational-invariance relation `U_dw = U_up · Q`.
///
/// Returns [`Error::Subspace`] when `U_up` is rank deficient (LS) or when the
/// lower-right block of the TLS null-space basis is singular, so callers can
/// fall back to LS or drop the order.
pub fn solve_shift_operator(u_up: &CMatrix, u_dw: &CMatrix, mode: ShiftSolver) -> Result<CMatrix> {
    if u_up.shape() != u_dw.shape() {
        return Err(Error::Dimension(format!(
            "shift operator: U_up is {:?}, U_dw is {:?}",
            u_up.shape(),
            u_dw.shape()
        )));
    }
    let (p, l) = u_up.shape();
    if l == 0 || p < l {
        return Err(Error::Dimension(format!(
            "shift operator: need P >= L >= 1, got P={p}, L={l}"
        )));
    }
    check_finite(u_up, "shift operator")?;
    check_finite(u_dw, "shift operator")?;

    match mode {
        ShiftSolver::Ls => {
            let (smin, smax) = min_max_singular(u_up);
            if smax == 0.0 || smin <= RANK_RTOL * smax {
                return Err(Error::Subspace("U_up is rank deficient".into()));
            }
            Ok(pseudo_inverse(u_up, 1e-10)? * u_dw)
        }
        ShiftSolver::Tls => {
            // Zero padding keeps the full 2L-dimensional right basis available when P < 2L.
            let rows = p.max(2 * l);
            let mut c = CMatrix::zeros(rows, 2 * l);
            c.view_mut((0, 0), (p, l)).copy_from(u_up);
            c.view_mut((0, l), (p, l)).copy_from(u_dw);
            let (svd, order) = sorted_svd(&c);
            let s_max = svd.singular_values[order[0]];
            if !(s_max > 0.0) || svd.singular_values[order[l - 1]] <= RANK_RTOL * s_max {
                return Err(Error::Subspace("[U_up U_dw] has rank below L".into()));
            }
            let v = svd.v_t.as_ref().expect("Vᴴ requested").adjoint();
            let v = v.select_columns(order.iter());
            let v12 = v.view((0, l), (l, l)).into_owned();
            let v22 = v.view((l, l), (l, l)).into_owned();
            let (smin, smax) = min_max_singular(&v22);
            if smax == 0.0 || smin <= RANK_RTOL * smax.max(1.0) {
                return Err(Error::Subspace("TLS block V22 is singular".into()));
            }
            let v22_inv = v22
                .try_inverse()
                .ok_or_else(|| Error::Subspace("TLS block V22 is singular".into()))?;
            Ok(-(v12 * v22_inv))
        }
    }
}

/// Eigenvalues of a general (non-Hermitian) complex square matrix, unordered.
pub fn general_eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    check_square(a, "general_eigenvalues")?;
    check_finite(a, "general_eigenvalues")?;
    if a.nrows() == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Degenerate("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

/// Zeroth-order Bessel function of the first kind for `0 <= x <= 1e3`.
///
/// Power series below 12, Hankel asymptotic expansion above. Absolute error
/// is below 1e-11 over the supported range.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        j0_series(x)
    } else {
        j0_hankel(x)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut k = 1.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-3) {
        term *= -q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn j0_hankel(x: f64) -> f64 {
    // t_k = a_k(0) / x^k with a_k(0) = prod_{i<=k} (-(2i-1)^2) / (k! 8^k).
    let mut p = 1.0;
    let mut q = 0.0;
    let mut t = 1.0_f64;
    for k in 1..60 {
        let kf = k as f64;
        let next = t * (-(2.0 * kf - 1.0).powi(2)) / (8.0 * kf * x);
        if next.abs() >= t.abs() {
            break;
        }
        t = next;
        // P collects (-1)^m a_{2m}, Q collects (-1)^m a_{2m+1}.
        let m = k / 2;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q += sign * t;
        }
        if t.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - std::f64::consts::FRAC_PI_4;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// I.i.d. circularly-symmetric complex Gaussian samples with `E|z|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(n: usize, variance: f64, rng: &mut R) -> Vec<C64> {
    if variance <= 0.0 {
        return vec![C64::new(0.0, 0.0); n];
    }
    let scale = (0.5 * variance).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(scale * re, scale * im)
        })
        .collect()
}
