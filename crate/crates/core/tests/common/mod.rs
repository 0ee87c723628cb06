//! Analytic fixtures and property checks shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use hopest::estimator::{esprit_delays, expand_delay_support, CorrAccumulator, StackedPilotEstimate};
use hopest::frame::{pilot_pattern, random_tile_allocation, PilotPattern, SystemConfig, UserRole};
use hopest::harness::{run_sweeps, write_csv_to, EstimatorChoice, ExperimentConfig};
use hopest::numerics::{hermitian_evd, ShiftSolver};
use hopest::{CMatrix, C64};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const N_FFT: usize = 1024;
pub const VEH_A_NORM: [f64; 6] = [0.0, 3.1, 7.1, 10.9, 17.3, 25.1];

pub fn veh_a_powers() -> Vec<f64> {
    let lin: Vec<f64> = [0.0, -1.0, -9.0, -10.0, -15.0, -20.0]
        .iter()
        .map(|db: &f64| 10f64.powf(db / 10.0))
        .collect();
    let total: f64 = lin.iter().sum();
    lin.iter().map(|p| p / total).collect()
}

/// `[F]_{k,l} = exp(-j2π k τ_l / N)`, evaluated from scratch.
pub fn steering(tones: &[usize], delays: &[f64], n_fft: usize) -> CMatrix {
    CMatrix::from_fn(tones.len(), delays.len(), |i, l| {
        C64::from_polar(1.0, -2.0 * PI * tones[i] as f64 * delays[l] / n_fft as f64)
    })
}

fn diag(powers: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        powers.len(),
        powers.iter().map(|&p| C64::new(p, 0.0)),
    ))
}

/// `F Λ Fᴴ + σ² I` for one pilot symbol.
pub fn single_cov(pilots: &[usize], delays: &[f64], powers: &[f64], noise_var: f64, n_fft: usize) -> CMatrix {
    let f = steering(pilots, delays, n_fft);
    let mut r = &f * diag(powers) * f.adjoint();
    for i in 0..pilots.len() {
        r[(i, i)] += C64::new(noise_var, 0.0);
    }
    r
}

/// Covariance of stacked even/odd pilot estimates: diagonal blocks `F_e Λ F_eᴴ`,
/// `F_o Λ F_oᴴ`, off-diagonal blocks scaled by `eta`, white noise on the diagonal.
pub fn stacked_cov(
    pilots_even: &[usize],
    pilots_odd: &[usize],
    delays: &[f64],
    powers: &[f64],
    eta: f64,
    noise_var: f64,
    n_fft: usize,
) -> CMatrix {
    let p = pilots_even.len();
    let fe = steering(pilots_even, delays, n_fft);
    let fo = steering(pilots_odd, delays, n_fft);
    let lam = diag(powers);
    let mut r = CMatrix::zeros(2 * p, 2 * p);
    r.view_mut((0, 0), (p, p)).copy_from(&(&fe * &lam * fe.adjoint()));
    r.view_mut((p, p), (p, p)).copy_from(&(&fo * &lam * fo.adjoint()));
    let cross = &fe * &lam * fo.adjoint() * C64::new(eta, 0.0);
    r.view_mut((0, p), (p, p)).copy_from(&cross);
    r.view_mut((p, 0), (p, p)).copy_from(&cross.adjoint());
    for i in 0..2 * p {
        r[(i, i)] += C64::new(noise_var, 0.0);
    }
    r
}

/// `P` equispaced tones `m·N/P`.
pub fn equispaced(p: usize, n_fft: usize) -> Vec<usize> {
    (0..p).map(|m| m * n_fft / p).collect()
}

pub fn shifted(tones: &[usize], nu: i64, n_fft: usize) -> Vec<usize> {
    tones
        .iter()
        .map(|&k| (k as i64 + nu).rem_euclid(n_fft as i64) as usize)
        .collect()
}

pub fn pattern(n_sch: usize, seed: u64, role: UserRole) -> PilotPattern {
    let alloc = random_tile_allocation(&SystemConfig::default(), n_sch, seed, 0).unwrap();
    pilot_pattern(&alloc, role)
}

pub fn nmse_db_plain(est: &[C64], truth: &[C64]) -> f64 {
    let err: f64 = est.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let energy: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    10.0 * (err / energy).log10()
}

/// Circular distance between two delays on a period.
pub fn wrap_dist(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Each true delay matched to its nearest estimate.
pub fn max_delay_error(est: &[f64], truth: &[f64], period: f64) -> f64 {
    truth
        .iter()
        .map(|&t| {
            est.iter()
                .map(|&e| wrap_dist(e, t, period))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

// ---- properties ----

pub fn snapshot_strategy() -> impl Strategy<Value = (usize, Vec<Vec<(f64, f64)>>)> {
    (1usize..6).prop_flat_map(|p| {
        let v = prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2 * p);
        (Just(p), prop::collection::vec(v, 1..12))
    })
}

/// Finalized covariance is Hermitian and positive semidefinite.
pub fn prop_covariance_hermitian_psd(p: usize, snaps: &[Vec<(f64, f64)>]) -> Result<(), TestCaseError> {
    let mut acc = CorrAccumulator::new(2 * p);
    for (i, s) in snaps.iter().enumerate() {
        let v: Vec<C64> = s.iter().map(|&(re, im)| C64::new(re, im)).collect();
        let stacked = hopest::estimator::stack_pair(&v[..p], &v[p..], i).unwrap();
        acc.accumulate(&stacked).unwrap();
    }
    let r = acc.finalize().unwrap();
    let norm = r.norm();
    prop_assert!((&r - r.adjoint()).norm() <= 1e-12 * norm.max(1e-300));
    let evd = hermitian_evd(&r, 1e-9).unwrap();
    let lmax = evd.values[0];
    prop_assert!(evd.values.iter().all(|&v| v >= -1e-9 * lmax.max(1e-300)));
    Ok(())
}

/// Odd pilots are the even pilots shifted by ν, for both users.
pub fn prop_hopping_identity(n_sch: usize, seed: u64) -> Result<(), TestCaseError> {
    for role in [UserRole::A, UserRole::B] {
        let pat = pattern(n_sch, seed, role);
        prop_assert_eq!(pat.p, 6 * n_sch);
        for (e, o) in pat.pilots_even.iter().zip(&pat.pilots_odd) {
            prop_assert_eq!(*o as i64, *e as i64 + role.nu());
        }
    }
    Ok(())
}

/// A delay and the same delay plus a multiple of `N/|ν|` give the same estimate,
/// which always lies in `[0, N/|ν|)`.
pub fn prop_wrap_around(tau: f64, m: u32, nu: i64) -> Result<(), TestCaseError> {
    // offset so that even ± ν never wraps around the band edge
    let pilots: Vec<usize> = equispaced(16, N_FFT).iter().map(|k| k + 8).collect();
    let odd = shifted(&pilots, nu, N_FFT);
    let period = N_FFT as f64 / nu.unsigned_abs() as f64;
    let est = |t: f64| {
        let r = stacked_cov(&pilots, &odd, &[t], &[1.0], 1.0, 0.0, N_FFT);
        esprit_delays(&r, 1, nu, N_FFT, ShiftSolver::Tls).unwrap().taus[0]
    };
    let a = est(tau);
    let b = est(tau + m as f64 * period);
    prop_assert!((0.0..period).contains(&a) && (0.0..period).contains(&b));
    prop_assert!(wrap_dist(a, b, period) < 1e-6, "{} vs {}", a, b);
    prop_assert!(wrap_dist(a, tau, period) < 1e-6, "{} vs {}", a, tau);
    Ok(())
}

pub fn distinct_delays() -> impl Strategy<Value = Vec<f64>> {
    // gaps of at least 1.5 samples keep the steering columns well separated
    prop::collection::vec((1.5f64..12.0, 0.0f64..1.0), 1..5).prop_map(|steps| {
        let mut t = 0.0;
        steps
            .iter()
            .map(|&(gap, frac)| {
                let d = t + frac;
                t += gap + 1.0;
                d
            })
            .collect()
    })
}

/// Adding `σ² I` changes the eigenvalues but not the signal subspace.
pub fn prop_noise_shift(delays: &[f64], sigma2: f64, mode: ShiftSolver) -> Result<(), TestCaseError> {
    let pat = pattern(10, 3, UserRole::A);
    let powers = vec![1.0 / delays.len() as f64; delays.len()];
    let clean = stacked_cov(&pat.pilots_even, &pat.pilots_odd, delays, &powers, 1.0, 0.0, N_FFT);
    let mut noisy = clean.clone();
    for i in 0..noisy.nrows() {
        noisy[(i, i)] += C64::new(sigma2, 0.0);
    }
    let l = delays.len();
    let a = esprit_delays(&clean, l, 3, N_FFT, mode).unwrap().taus;
    let b = esprit_delays(&noisy, l, 3, N_FFT, mode).unwrap().taus;
    for (x, y) in a.iter().zip(&b) {
        prop_assert!((x - y).abs() < 1e-6, "{:?} vs {:?}", a, b);
    }
    Ok(())
}

/// Widening the window never shrinks the support.
pub fn prop_support_monotone(taus: &[f64], b1: usize, b2: usize) -> Result<(), TestCaseError> {
    let (lo, hi) = (b1.min(b2), b1.max(b2));
    let period = N_FFT as f64 / 3.0;
    let p = 1000;
    let s1 = expand_delay_support(taus, lo, 128, p, period).support;
    let s2 = expand_delay_support(taus, hi, 128, p, period).support;
    prop_assert!(s1.iter().all(|d| s2.contains(d)));
    prop_assert!(s2.windows(2).all(|w| w[0] < w[1]));
    prop_assert!(s2.iter().all(|&d| d < 128));
    Ok(())
}

/// Two runs of the same sweep produce byte-identical CSV.
pub fn csv_bytes(seed: u64) -> Vec<u8> {
    let cfg = ExperimentConfig {
        n_t: 8,
        n_sch: 4,
        n_trials: 3,
        snr_db_list: vec![0.0, 20.0],
        estimator: EstimatorChoice::Both,
        seed,
        ..ExperimentConfig::default()
    };
    let recs = run_sweeps(&[cfg]).unwrap();
    let mut out = Vec::new();
    write_csv_to(&recs, &mut out).unwrap();
    out
}

pub fn prop_csv_deterministic(seed: u64) -> Result<(), TestCaseError> {
    prop_assert_eq!(csv_bytes(seed), csv_bytes(seed));
    Ok(())
}

pub fn stacked(v: Vec<C64>, p: usize, index: usize) -> StackedPilotEstimate {
    hopest::estimator::stack_pair(&v[..p], &v[p..], index).unwrap()
}

// ---- channel statistics ----

/// Largest deviation of any tap's normalized autocorrelation from J0 over lags `0..=10`.
pub fn fading_autocorr_deviation(n_symbols: usize, seed: u64) -> f64 {
    use hopest::channel::{generate_fading, time_correlation, ChannelProfile};
    let profile = ChannelProfile::veh_a(10e6);
    let t_s = SystemConfig::default().symbol_duration();
    let fading = generate_fading(&profile, 200.0, t_s, n_symbols, seed).unwrap();
    let mut worst: f64 = 0.0;
    for l in 0..profile.num_taps() {
        let g: Vec<C64> = fading.gains.row(l).iter().copied().collect();
        let power = g.iter().map(|z| z.norm_sqr()).sum::<f64>() / n_symbols as f64;
        for m in 0..=10usize {
            let r: C64 =
                (0..n_symbols - m).map(|n| g[n + m] * g[n].conj()).sum::<C64>() / (n_symbols - m) as f64 / power;
            worst = worst.max((r - C64::new(time_correlation(200.0, t_s, m as i64), 0.0)).norm());
        }
    }
    worst
}

/// Largest normalized cross-correlation between two distinct taps at lag zero.
pub fn fading_cross_correlation(n_symbols: usize, seed: u64) -> f64 {
    use hopest::channel::{generate_fading, ChannelProfile};
    let profile = ChannelProfile::veh_a(10e6);
    let t_s = SystemConfig::default().symbol_duration();
    let fading = generate_fading(&profile, 200.0, t_s, n_symbols, seed).unwrap();
    let rows: Vec<Vec<C64>> = (0..profile.num_taps())
        .map(|l| fading.gains.row(l).iter().copied().collect())
        .collect();
    let energy = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut worst: f64 = 0.0;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let c: C64 = rows[a].iter().zip(&rows[b]).map(|(x, y)| x * y.conj()).sum();
            worst = worst.max(c.norm() / (energy(&rows[a]) * energy(&rows[b])).sqrt());
        }
    }
    worst
}

// ---- MDL ----

pub const MDL_DELAYS: [f64; 4] = [0.0, 6.0, 15.0, 31.0];

/// Runs (out of `runs`) where MDL on a 192-snapshot sample covariance of a
/// 4-equal-tap channel at 20 dB picks order 4.
pub fn mdl_sampled_hits(runs: u64) -> u64 {
    use hopest::estimator::{mdl_candidate_cap, mdl_order};
    use hopest::numerics::{complex_gaussian, seeded_rng};
    let pat = pattern(20, 11, UserRole::A);
    let f = steering(&pat.pilots_even, &MDL_DELAYS, N_FFT);
    let p = pat.p;
    (0..runs)
        .filter(|&seed| {
            let mut rng = seeded_rng(seed, 77);
            let mut r = CMatrix::zeros(p, p);
            for _ in 0..192 {
                let g = nalgebra::DVector::from_vec(complex_gaussian(4, 0.25, &mut rng));
                let w = nalgebra::DVector::from_vec(complex_gaussian(p, 0.01, &mut rng));
                let h = &f * g + w;
                r.gerc(C64::new(1.0 / 192.0, 0.0), &h, &h, C64::new(1.0, 0.0));
            }
            let ev = hermitian_evd(&r, 1e-9).unwrap().values;
            mdl_order(&ev, 192, mdl_candidate_cap(&ev)).unwrap() == 4
        })
        .count() as u64
}

pub fn mdl_analytic_order() -> usize {
    use hopest::estimator::{mdl_candidate_cap, mdl_order};
    let pat = pattern(20, 11, UserRole::A);
    let rp = single_cov(&pat.pilots_even, &MDL_DELAYS, &[0.25; 4], 0.01, N_FFT);
    let ev = hermitian_evd(&rp, 1e-9).unwrap().values;
    mdl_order(&ev, 192, mdl_candidate_cap(&ev)).unwrap()
}
