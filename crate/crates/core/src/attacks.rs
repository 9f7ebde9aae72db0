//! Attack suite: closed-form success-probability bounds for brute-force and
//! layer-reversing attacks, Monte-Carlo validation of the geometric lemmas
//! behind them, and the known-pair linear recovery attack.
//!
//! Probabilities such as 2^(-9,437,184) have no linear-space representation,
//! so every bound is carried as a base-2 logarithm in [`LogProb`].

use crate::error::{Error, Result};
use crate::linalg::{invert, solve, Matrix, RowVector};
use crate::metrics::erms;
use crate::morphing::choose_q;
use crate::rng::SeededRng;
use serde::Serialize;

/// A probability held as `log2(p)`. Conversion to linear space is refused
/// below `2^-1000`, where it would only produce a meaningless zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogProb {
    log2_value: f64,
}

impl LogProb {
    pub fn from_log2(log2_value: f64) -> Self {
        debug_assert!(log2_value <= 0.0 || log2_value.is_nan());
        Self { log2_value }
    }

    pub fn log2(&self) -> f64 {
        self.log2_value
    }

    /// The linear probability, when representable without total loss of
    /// precision.
    pub fn linear(&self) -> Option<f64> {
        if self.log2_value < -1000.0 {
            None
        } else {
            Some(self.log2_value.exp2())
        }
    }
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms).
///
/// Good to ~1e-13 relative error for positive arguments, which is all the
/// factorial bounds here need.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection for completeness; the crate only calls x >= 1.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Closed-form bound on the probability that a random unit-norm point lands
/// within l2 distance `d` of a fixed one on the (N-1)-sphere:
/// `log2(P) ≤ -1 + (N-1)·log2(d)`.
pub fn lemma1_bound(n_dims: u64, d: f64) -> Result<LogProb> {
    if n_dims < 2 {
        return Err(Error::DomainError(format!(
            "bound needs at least 2 dimensions, got {n_dims}"
        )));
    }
    if !(0.0 < d && d <= 1.0) {
        return Err(Error::DomainError(format!(
            "distance must lie in (0, 1], got {d}"
        )));
    }
    Ok(LogProb::from_log2(-1.0 + (n_dims - 1) as f64 * d.log2()))
}

/// Uniform point on the unit sphere in `n` dimensions.
fn sample_unit_vector(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Empirical hit rate for the event bounded by [`lemma1_bound`]: pairs of
/// uniform sphere points with l2 distance at most `d`.
///
/// Restricted to `N ≤ 16`; beyond that the event is too rare to ever observe
/// and the bound too loose to say anything testable.
pub fn lemma1_montecarlo(n_dims: usize, d: f64, trials: usize, rng: &mut SeededRng) -> Result<f64> {
    if !(2..=16).contains(&n_dims) {
        return Err(Error::DomainError(format!(
            "monte-carlo check supports 2..=16 dimensions, got {n_dims}"
        )));
    }
    if !(0.0 < d && d <= 1.0) {
        return Err(Error::DomainError(format!(
            "distance must lie in (0, 1], got {d}"
        )));
    }
    if trials < 10_000 {
        return Err(Error::DomainError(format!(
            "at least 10^4 trials required, got {trials}"
        )));
    }
    let d2 = d * d;
    let mut hits = 0usize;
    for _ in 0..trials {
        let a = sample_unit_vector(n_dims, rng);
        let b = sample_unit_vector(n_dims, rng);
        let dist2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        if dist2 <= d2 {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Result of one expectation-identity check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lemma2Outcome {
    pub mean_sse: f64,
    pub expected_sse: f64,
    /// `|mean - expected| / expected`, or 0 when the expectation vanishes.
    pub residual: f64,
}

/// Core of [`lemma2_check`] with caller-supplied matrices: estimates
/// `E‖T·(A - B)‖²` over unit rows `T` and compares it against the closed
/// form `‖A - B‖_F² / N'`.
pub fn lemma2_residual(
    minv: &Matrix,
    g: &Matrix,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<Lemma2Outcome> {
    if !minv.is_square() || minv.rows() != g.rows() || minv.cols() != g.cols() {
        return Err(Error::DimensionMismatch(format!(
            "lemma check over {}x{} vs {}x{}",
            minv.rows(),
            minv.cols(),
            g.rows(),
            g.cols()
        )));
    }
    let n = minv.rows();
    let diff = minv.sub(g)?;
    let expected = {
        let f = diff.frobenius_norm();
        f * f / n as f64
    };
    let mut acc = 0.0;
    for _ in 0..trials {
        let t = sample_unit_vector(n, rng);
        let row = RowVector::from_vec(t)?;
        let image = row.mul_matrix(&diff)?;
        acc += image.data().iter().map(|x| x * x).sum::<f64>();
    }
    let mean = acc / trials as f64;
    let residual = if expected == 0.0 {
        0.0
    } else {
        (mean - expected).abs() / expected
    };
    Ok(Lemma2Outcome {
        mean_sse: mean,
        expected_sse: expected,
        residual,
    })
}

/// Monte-Carlo check of the expectation identity used by the recovery-error
/// lemma: draws a random inverse-morph/approximation pair scaled to squared
/// Frobenius norm `N'`, unit rows with i.i.d. entries, and returns the
/// relative residual between the empirical mean squared error and
/// `‖M⁻¹ - G‖_F² / N'`.
pub fn lemma2_check(n_prime: usize, trials: usize, rng: &mut SeededRng) -> Result<f64> {
    if !(4..=64).contains(&n_prime) {
        return Err(Error::DomainError(format!(
            "expectation check supports 4..=64 dimensions, got {n_prime}"
        )));
    }
    let scale_to = (n_prime as f64).sqrt();
    let draw = |rng: &mut SeededRng| -> Result<Matrix> {
        let data: Vec<f64> = (0..n_prime * n_prime)
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect();
        let m = Matrix::from_vec(n_prime, n_prime, data)?;
        let norm = m.frobenius_norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(m.scaled(scale_to / norm))
    };
    let minv = draw(rng)?;
    let g = draw(rng)?;
    Ok(lemma2_residual(&minv, &g, trials, rng)?.residual)
}

/// Brute-force bound on guessing the morphing matrix itself:
/// `N = (αm²/κ)²` elements, `log2(P) ≤ -1 + (N-1)·log2(σ)`.
pub fn bf_bound_m(sigma: f64, alpha: usize, m: usize, kappa: usize) -> Result<LogProb> {
    if !(0.0 < sigma && sigma < 1.0) {
        return Err(Error::DomainError(format!(
            "privacy reservation must lie in (0,1), got {sigma}"
        )));
    }
    let q = choose_q(alpha, m, kappa)? as f64;
    let n = q * q;
    Ok(LogProb::from_log2(-1.0 + (n - 1.0) * sigma.log2()))
}

/// Brute-force bound on guessing the channel shuffle: `1/β!`.
pub fn bf_bound_rand(beta: usize) -> LogProb {
    let log2_factorial = ln_gamma(beta as f64 + 1.0) / std::f64::consts::LN_2;
    LogProb::from_log2(-log2_factorial)
}

/// Equation-counting analysis of the layer-reversing attack.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReverseAnalysis {
    /// Unknowns facing the attacker: `αm²/κ + αp²`.
    pub n_unknowns: u64,
    /// Equations one output channel provides: `n²`.
    pub n_equations: u64,
    /// Largest safe scale factor: `⌊αm²/n²⌋`.
    pub kappa_max: u64,
    pub sigma: f64,
    /// `log2` of the reduced brute-force bound, clamped at 0.
    pub log2_p_ar: f64,
    /// Set exactly when `κ > αm²/n²`: the equation set becomes solvable and
    /// the configuration is insecure.
    pub solvable: bool,
}

/// Analyze the reverse-engineering attack on the augmented layer for the
/// given geometry and privacy reservation `sigma`.
pub fn augconv_reverse_analysis(
    alpha: usize,
    m: usize,
    n: usize,
    p: usize,
    kappa: usize,
    sigma: f64,
) -> Result<ReverseAnalysis> {
    if n == 0 || p == 0 || alpha == 0 || m == 0 {
        return Err(Error::InvalidGeometry(format!(
            "degenerate geometry alpha={alpha} m={m} n={n} p={p}"
        )));
    }
    if !(0.0 < sigma && sigma < 1.0) {
        return Err(Error::DomainError(format!(
            "privacy reservation must lie in (0,1), got {sigma}"
        )));
    }
    let q = choose_q(alpha, m, kappa)?;
    let n_unknowns = (q + alpha * p * p) as u64;
    let n_equations = (n * n) as u64;
    let kappa_max = (alpha * m * m / (n * n)) as u64;
    // Reduced element count (q - n^2)·q + αp² - 1 goes negative exactly when
    // the configuration is solvable outright; the bound is then vacuous.
    let reduced = (q as i64 - (n * n) as i64) * q as i64 + (alpha * p * p) as i64 - 1;
    let log2_p_ar = (-1.0 + reduced as f64 * sigma.log2()).min(0.0);
    Ok(ReverseAnalysis {
        n_unknowns,
        n_equations,
        kappa_max,
        sigma,
        log2_p_ar,
        solvable: n * n > q,
    })
}

/// How known pairs are stacked into the square system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// One row per pair (its first block segment): needs `q` pairs.
    Strict,
    /// Every block segment of every pair contributes a row: needs `⌈q/κ⌉`
    /// pairs, since each morphed sample reuses the same core per segment.
    Segment,
}

/// Known-pair attack: recover the core by solving the stacked linear system
/// `D_stack · M' = T_stack` with LU and partial pivoting.
pub fn dt_pair_attack(
    pairs: &[(RowVector, RowVector)],
    q: usize,
    kappa: usize,
    mode: PairMode,
) -> Result<Matrix> {
    if q == 0 || kappa == 0 {
        return Err(Error::InvalidGeometry(
            "q and kappa must be positive".into(),
        ));
    }
    let total = q * kappa;
    for (idx, (d, t)) in pairs.iter().enumerate() {
        if d.len() != total || t.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "pair {idx} has lengths {}/{}, expected {total}",
                d.len(),
                t.len()
            )));
        }
    }
    let needed = match mode {
        PairMode::Strict => q,
        PairMode::Segment => q.div_ceil(kappa),
    };
    if pairs.len() < needed {
        return Err(Error::InsufficientPairs {
            needed,
            got: pairs.len(),
        });
    }
    let mut d_stack = Matrix::zeros(q, q);
    let mut t_stack = Matrix::zeros(q, q);
    match mode {
        PairMode::Strict => {
            for (row, (d, t)) in pairs.iter().take(q).enumerate() {
                d_stack.row_mut(row).copy_from_slice(&d.data()[..q]);
                t_stack.row_mut(row).copy_from_slice(&t.data()[..q]);
            }
        }
        PairMode::Segment => {
            let mut row = 0;
            'fill: for (d, t) in pairs {
                for s in 0..kappa {
                    if row == q {
                        break 'fill;
                    }
                    d_stack
                        .row_mut(row)
                        .copy_from_slice(&d.data()[s * q..(s + 1) * q]);
                    t_stack
                        .row_mut(row)
                        .copy_from_slice(&t.data()[s * q..(s + 1) * q]);
                    row += 1;
                }
            }
        }
    }
    match solve(&d_stack, &t_stack) {
        Ok(mprime) => Ok(mprime),
        Err(Error::SingularMatrix { .. }) => Err(Error::RankDeficient),
        Err(e) => Err(e),
    }
}

/// Outcome of one attempted recovery with an approximation of the morphing
/// matrix.
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub recovered: RowVector,
    pub e_rms: f64,
    pub sigma_threshold: f64,
    /// Whether the recovery beat the privacy-reservation threshold
    /// `σ / N^{1/4}` with `N` the element count of the guessed matrix.
    pub success: bool,
}

/// Recover data through a guessed morphing matrix `g` and grade the result
/// against the truth.
pub fn brute_force_recover(
    tr: &RowVector,
    g: &Matrix,
    true_dr: &RowVector,
    sigma: f64,
) -> Result<RecoveryReport> {
    if !(0.0 < sigma && sigma < 1.0) {
        return Err(Error::DomainError(format!(
            "privacy reservation must lie in (0,1), got {sigma}"
        )));
    }
    if !g.is_square() || g.rows() != tr.len() {
        return Err(Error::DimensionMismatch(format!(
            "guess {}x{} against row of length {}",
            g.rows(),
            g.cols(),
            tr.len()
        )));
    }
    if true_dr.len() != tr.len() {
        return Err(Error::DimensionMismatch(format!(
            "truth length {} against row length {}",
            true_dr.len(),
            tr.len()
        )));
    }
    let g_inv = invert(g)?;
    let recovered = tr.mul_matrix(&g_inv)?;
    let e = erms(&recovered, true_dr)?;
    // N = len^2 elements in the guess, so the fourth root of N is sqrt(len).
    let threshold = sigma / (tr.len() as f64).sqrt();
    Ok(RecoveryReport {
        recovered,
        e_rms: e,
        sigma_threshold: threshold,
        success: e <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{
        matmul, random_invertible, unit_l2_normalize, unit_l2_normalize_columns,
        unit_l2_normalize_row,
    };
    use crate::morphing::{morph, MorphCore};

    #[test]
    fn ln_gamma_matches_log_factorial_sum() {
        for n in 1..=40u32 {
            let exact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
            let approx = ln_gamma(n as f64 + 1.0);
            let err = (approx - exact).abs() / exact.max(1.0);
            assert!(err < 1e-12, "n={n} err={err}");
        }
    }

    #[test]
    fn lemma1_bound_edge_cases() {
        assert_eq!(lemma1_bound(2, 1.0).unwrap().log2(), -1.0);
        let big = lemma1_bound(3072 * 3072, 0.5).unwrap();
        assert_eq!(big.log2(), -9_437_184.0);
        assert!(big.linear().is_none());
        let small = lemma1_bound(3, 0.5).unwrap();
        assert!((small.linear().unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn lemma1_bound_domain_errors() {
        assert!(lemma1_bound(1, 0.5).is_err());
        assert!(lemma1_bound(4, 1.5).is_err());
        assert!(lemma1_bound(4, 0.0).is_err());
    }

    #[test]
    fn lemma1_bound_monotone() {
        let mut prev = lemma1_bound(2, 0.5).unwrap().log2();
        for n in [4u64, 8, 64, 1024] {
            let cur = lemma1_bound(n, 0.5).unwrap().log2();
            assert!(cur < prev);
            prev = cur;
        }
        assert!(lemma1_bound(8, 0.3).unwrap().log2() < lemma1_bound(8, 0.7).unwrap().log2());
    }

    #[test]
    fn lemma1_montecarlo_sphere_cap() {
        // On the 2-sphere the exact hit probability is d^2/4.
        let mut rng = SeededRng::new(100);
        let frac = lemma1_montecarlo(3, 0.5, 100_000, &mut rng).unwrap();
        assert!((frac - 0.0625).abs() < 0.003, "fraction {frac}");
        assert!(frac <= 0.125);
    }

    #[test]
    fn lemma1_montecarlo_rejects_bad_domain() {
        let mut rng = SeededRng::new(101);
        assert!(lemma1_montecarlo(2, 2.0, 10_000, &mut rng).is_err());
        assert!(lemma1_montecarlo(32, 0.5, 10_000, &mut rng).is_err());
        assert!(lemma1_montecarlo(3, 0.5, 100, &mut rng).is_err());
    }

    #[test]
    fn lemma1_montecarlo_respects_bound() {
        let mut rng = SeededRng::new(102);
        for &n in &[2usize, 4, 8] {
            for &d in &[0.3, 1.0] {
                let trials = 20_000;
                let frac = lemma1_montecarlo(n, d, trials, &mut rng).unwrap();
                let bound = lemma1_bound(n as u64, d).unwrap().linear().unwrap();
                let se = (frac * (1.0 - frac) / trials as f64).sqrt();
                assert!(
                    frac <= bound + 3.0 * se,
                    "n={n} d={d} frac={frac} bound={bound}"
                );
            }
        }
    }

    #[test]
    fn lemma2_zero_distance() {
        let mut rng = SeededRng::new(103);
        let m = random_invertible(6, &mut rng, 1e6).unwrap();
        let out = lemma2_residual(&m, &m, 1000, &mut rng).unwrap();
        assert_eq!(out.mean_sse, 0.0);
        assert_eq!(out.residual, 0.0);
    }

    #[test]
    fn lemma2_residual_small() {
        let mut rng = SeededRng::new(104);
        let r = lemma2_check(8, 100_000, &mut rng).unwrap();
        assert!(r <= 0.1, "residual {r}");
    }

    #[test]
    fn lemma2_scales_quadratically() {
        let mut rng_a = SeededRng::new(105);
        let mut rng_b = SeededRng::new(105);
        let base = random_invertible(5, &mut rng_a, 1e6).unwrap();
        let other = random_invertible(5, &mut rng_a, 1e6).unwrap();
        // Burn the same draws so both generators see identical trial rows.
        let _ = random_invertible(5, &mut rng_b, 1e6).unwrap();
        let _ = random_invertible(5, &mut rng_b, 1e6).unwrap();
        let out1 = lemma2_residual(&base, &other, 2000, &mut rng_a).unwrap();
        let c = 3.0;
        let out2 = lemma2_residual(&base.scaled(c), &other.scaled(c), 2000, &mut rng_b).unwrap();
        assert!(
            (out2.mean_sse / out1.mean_sse - c * c).abs() < 1e-9,
            "ratio {}",
            out2.mean_sse / out1.mean_sse
        );
        assert!((out2.expected_sse / out1.expected_sse - c * c).abs() < 1e-9);
    }

    #[test]
    fn bf_bound_m_cifar() {
        let b = bf_bound_m(0.5, 3, 32, 1).unwrap();
        assert_eq!(b.log2(), -9_437_184.0);
        assert!(b.linear().is_none());
    }

    #[test]
    fn bf_bound_m_small_and_limit() {
        // alpha=1, m=2, kappa=1: q=4, N=16, bound (1/2)·σ^15.
        let b = bf_bound_m(0.5, 1, 2, 1).unwrap();
        assert_eq!(b.log2(), -16.0);
        assert!((b.linear().unwrap() - 0.5 * 0.5f64.powi(15)).abs() < 1e-20);
        // σ → 1 pushes the bound to 1/2 regardless of N.
        let near_one = bf_bound_m(1.0 - 1e-13, 1, 4, 1).unwrap();
        assert!((near_one.log2() + 1.0).abs() < 1e-3, "{}", near_one.log2());
        assert!(bf_bound_m(1.0, 1, 2, 1).is_err());
        assert!(bf_bound_m(0.5, 1, 4, 5).is_err());
    }

    #[test]
    fn bf_bound_rand_values() {
        assert_eq!(bf_bound_rand(1).log2(), 0.0);
        assert_eq!(bf_bound_rand(1).linear(), Some(1.0));
        let ten = bf_bound_rand(10).linear().unwrap();
        assert!((ten - 1.0 / 3_628_800.0).abs() / ten < 1e-12);
        let sixty_four = bf_bound_rand(64).linear().unwrap();
        assert!(
            (sixty_four - 7.9e-90).abs() <= 0.01 * 7.9e-90,
            "got {sixty_four:e}"
        );
        // Monotone decreasing in beta.
        assert!(bf_bound_rand(11).log2() < bf_bound_rand(10).log2());
    }

    #[test]
    fn reverse_analysis_cifar() {
        let r = augconv_reverse_analysis(3, 32, 32, 3, 1, 0.5).unwrap();
        assert_eq!(r.n_unknowns, 3072 + 27);
        assert_eq!(r.n_equations, 1024);
        assert_eq!(r.kappa_max, 3);
        assert!(!r.solvable);
        // Exact reduced exponent: (3072-1024)*3072 + 27 - 1 = 6_291_482.
        assert_eq!(r.log2_p_ar, -6_291_483.0);
        // The headline figure keeps only the leading term, -3072*2048.
        assert!((r.log2_p_ar - (-6_291_456.0)).abs() <= 30.0);
    }

    #[test]
    fn reverse_analysis_solvable_flag() {
        // kappa beyond alpha*m^2/n^2 makes the equation set solvable.
        let r = augconv_reverse_analysis(3, 32, 32, 3, 4, 0.5).unwrap();
        assert!(r.solvable);
        assert_eq!(r.log2_p_ar, 0.0);
        let edge = augconv_reverse_analysis(3, 32, 32, 3, 3, 0.5).unwrap();
        assert!(!edge.solvable);
    }

    #[test]
    fn reverse_analysis_rejects_degenerate() {
        assert!(augconv_reverse_analysis(3, 32, 0, 3, 1, 0.5).is_err());
    }

    fn make_pairs(
        core: &MorphCore,
        count: usize,
        rng: &mut SeededRng,
    ) -> Vec<(RowVector, RowVector)> {
        let len = core.total_len();
        (0..count)
            .map(|_| {
                let d =
                    RowVector::from_vec((0..len).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
                        .unwrap();
                let t = morph(&d, core).unwrap();
                (d, t)
            })
            .collect()
    }

    #[test]
    fn dt_pair_attack_recovers_core() {
        let mut rng = SeededRng::new(106);
        let core = MorphCore::generate(4, 1, &mut rng, 1e6).unwrap();
        let pairs = make_pairs(&core, 4, &mut rng);
        let recovered = dt_pair_attack(&pairs, 4, 1, PairMode::Strict).unwrap();
        let rel = recovered.sub(core.mprime()).unwrap().max_abs() / core.mprime().max_abs();
        assert!(rel <= 1e-8, "relative error {rel}");
    }

    #[test]
    fn dt_pair_attack_insufficient() {
        let mut rng = SeededRng::new(107);
        let core = MorphCore::generate(4, 1, &mut rng, 1e6).unwrap();
        let pairs = make_pairs(&core, 3, &mut rng);
        assert!(matches!(
            dt_pair_attack(&pairs, 4, 1, PairMode::Strict),
            Err(Error::InsufficientPairs { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn dt_pair_attack_duplicate_rows_rank_deficient() {
        let mut rng = SeededRng::new(108);
        let core = MorphCore::generate(4, 1, &mut rng, 1e6).unwrap();
        let mut pairs = make_pairs(&core, 3, &mut rng);
        pairs.push(pairs[0].clone());
        assert!(matches!(
            dt_pair_attack(&pairs, 4, 1, PairMode::Strict),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn dt_pair_attack_segment_mode_needs_fewer_pairs() {
        let mut rng = SeededRng::new(109);
        let core = MorphCore::generate(8, 4, &mut rng, 1e6).unwrap();
        let pairs = make_pairs(&core, 2, &mut rng);
        // Strict mode wants q = 8 pairs; segment mode needs ceil(8/4) = 2.
        assert!(matches!(
            dt_pair_attack(&pairs, 8, 4, PairMode::Strict),
            Err(Error::InsufficientPairs { needed: 8, got: 2 })
        ));
        let recovered = dt_pair_attack(&pairs, 8, 4, PairMode::Segment).unwrap();
        let rel = recovered.sub(core.mprime()).unwrap().max_abs() / core.mprime().max_abs();
        assert!(rel <= 1e-6, "relative error {rel}");
    }

    #[test]
    fn dt_pair_attack_strict_with_kappa_uses_first_segment() {
        let mut rng = SeededRng::new(110);
        let core = MorphCore::generate(4, 2, &mut rng, 1e6).unwrap();
        let pairs = make_pairs(&core, 4, &mut rng);
        let recovered = dt_pair_attack(&pairs, 4, 2, PairMode::Strict).unwrap();
        let rel = recovered.sub(core.mprime()).unwrap().max_abs() / core.mprime().max_abs();
        assert!(rel <= 1e-6, "relative error {rel}");
    }

    #[test]
    fn recover_with_exact_guess() {
        let mut rng = SeededRng::new(111);
        let m = random_invertible(6, &mut rng, 1e6).unwrap();
        let d = unit_l2_normalize_row(
            &RowVector::from_vec((0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap(),
        )
        .unwrap();
        let t = d.mul_matrix(&m).unwrap();
        let report = brute_force_recover(&t, &m, &d, 0.5).unwrap();
        assert!(report.e_rms < 1e-12);
        assert!(report.success);
    }

    #[test]
    fn recover_with_doubled_guess() {
        // G = 2M recovers D/2; for unit-norm D the rms error is 1/(2·sqrt(len)).
        let mut rng = SeededRng::new(112);
        let m = random_invertible(8, &mut rng, 1e6).unwrap();
        let d = unit_l2_normalize_row(
            &RowVector::from_vec((0..8).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap(),
        )
        .unwrap();
        let t = d.mul_matrix(&m).unwrap();
        let report = brute_force_recover(&t, &m.scaled(2.0), &d, 0.5).unwrap();
        let expect = 1.0 / (2.0 * 8.0f64.sqrt());
        assert!(
            (report.e_rms - expect).abs() < 1e-10,
            "e_rms {}",
            report.e_rms
        );
    }

    #[test]
    fn recover_success_frequency_below_bound() {
        // Random unit-norm guesses essentially never beat the threshold; the
        // empirical frequency must stay within 3 standard errors of the
        // closed-form bound (1/2)·σ^(N-1).
        let mut rng = SeededRng::new(113);
        let q = 8;
        let m =
            unit_l2_normalize_columns(&random_invertible(q, &mut rng, 1e6).unwrap()).unwrap();
        let d = unit_l2_normalize_row(
            &RowVector::from_vec((0..q).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap(),
        )
        .unwrap();
        let t = d.mul_matrix(&m).unwrap();
        let sigma = 0.5;
        let trials = 10_000;
        let mut successes = 0usize;
        for _ in 0..trials {
            let raw =
                Matrix::from_vec(q, q, (0..q * q).map(|_| rng.normal()).collect()).unwrap();
            let g = unit_l2_normalize(&raw).unwrap();
            match brute_force_recover(&t, &g, &d, sigma) {
                Ok(rep) if rep.success => successes += 1,
                _ => {}
            }
        }
        let freq = successes as f64 / trials as f64;
        let n = (q * q) as f64;
        let bound_linear = 0.5 * sigma.powf(n - 1.0);
        let se = (freq * (1.0 - freq) / trials as f64).sqrt();
        assert!(
            freq <= bound_linear + 3.0 * se,
            "freq {freq} exceeds bound {bound_linear}"
        );
    }

    #[test]
    fn recover_rejects_singular_guess() {
        let t = RowVector::from_vec(vec![1.0, 2.0]).unwrap();
        let d = RowVector::from_vec(vec![1.0, 2.0]).unwrap();
        let g = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(
            brute_force_recover(&t, &g, &d, 0.5),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn guess_inverse_agrees_with_direct_inverse() {
        let mut rng = SeededRng::new(114);
        let m = random_invertible(5, &mut rng, 1e6).unwrap();
        let minv = invert(&m).unwrap();
        let prod = matmul(&m, &minv).unwrap();
        assert!(prod.sub(&Matrix::identity(5)).unwrap().max_abs() < 1e-9);
    }
}
