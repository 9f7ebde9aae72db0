//! Data morphing: the provider-side secret linear shift.
//!
//! The morphing matrix `M` is block-diagonal — `kappa` copies of one secret
//! `q×q` core `M'` — so morphing is always applied segment-by-segment and the
//! full `αm² × αm²` matrix is only ever materialized for oracles and demos.
//! The scale factor `kappa = αm²/q` trades provider-side compute for privacy:
//! more, smaller blocks are cheaper and leak more structure.

use crate::augconv::ChannelPermutation;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, RowVector, DEFAULT_COND_MAX};
use crate::rng::SeededRng;

/// Core morphing matrix `M'` with its cached inverse and conditioning.
#[derive(Debug, Clone)]
pub struct MorphCore {
    q: usize,
    kappa: usize,
    mprime: Matrix,
    inverse: Matrix,
    condition: f64,
}

impl MorphCore {
    /// Generate a fresh random core: entries uniform on
    /// `[-1, -0.05] ∪ [0.05, 1]`, resampled until the condition estimate
    /// passes `cond_max`. The inverse computed for the gate is kept.
    pub fn generate(q: usize, kappa: usize, rng: &mut SeededRng, cond_max: f64) -> Result<Self> {
        if q == 0 || kappa == 0 {
            return Err(Error::InvalidGeometry(
                "q and kappa must be positive".into(),
            ));
        }
        let sample = linalg::sample_gated(q, rng, cond_max)?;
        Ok(Self {
            q,
            kappa,
            mprime: sample.matrix,
            inverse: sample.inverse,
            condition: sample.condition,
        })
    }

    /// Wrap an explicit core matrix (tests, demos, identity cores).
    ///
    /// Generated cores additionally guarantee nonzero entries; an explicit
    /// core only has to be square, finite and acceptably conditioned.
    pub fn from_matrix(mprime: Matrix, kappa: usize) -> Result<Self> {
        if !mprime.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "core must be square, got {}x{}",
                mprime.rows(),
                mprime.cols()
            )));
        }
        if kappa == 0 {
            return Err(Error::InvalidGeometry("kappa must be positive".into()));
        }
        let inverse = linalg::invert(&mprime)?;
        let condition = mprime.norm1() * inverse.norm1();
        if condition > DEFAULT_COND_MAX {
            return Err(Error::DomainError(format!(
                "core condition {condition:e} exceeds {DEFAULT_COND_MAX:e}"
            )));
        }
        let q = mprime.rows();
        Ok(Self {
            q,
            kappa,
            mprime,
            inverse,
            condition,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// Length of the row vectors this core morphs: `kappa · q = αm²`.
    pub fn total_len(&self) -> usize {
        self.q * self.kappa
    }

    pub fn mprime(&self) -> &Matrix {
        &self.mprime
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }
}

/// Provider secret: the core, the RNG seed, the channel permutation and the
/// image geometry the core was sized for.
#[derive(Debug, Clone)]
pub struct MorphSecret {
    pub core: MorphCore,
    pub seed: u64,
    pub permutation: ChannelPermutation,
    pub alpha: usize,
    pub m: usize,
}

impl MorphSecret {
    pub fn new(
        core: MorphCore,
        seed: u64,
        permutation: ChannelPermutation,
        alpha: usize,
        m: usize,
    ) -> Result<Self> {
        if core.total_len() != alpha * m * m {
            return Err(Error::InvalidGeometry(format!(
                "core covers {} elements but alpha*m^2 = {}",
                core.total_len(),
                alpha * m * m
            )));
        }
        Ok(Self {
            core,
            seed,
            permutation,
            alpha,
            m,
        })
    }
}

/// Block side `q = αm²/kappa`; errors when `kappa` does not divide `αm²`.
pub fn choose_q(alpha: usize, m: usize, kappa: usize) -> Result<usize> {
    let total = alpha * m * m;
    if kappa == 0 || total % kappa != 0 {
        return Err(Error::NonDivisible { kappa, total });
    }
    Ok(total / kappa)
}

/// Whether `kappa` respects the reversing-attack upper bound `kappa ≤ αm²/n²`.
pub fn kappa_within_bound(alpha: usize, m: usize, n: usize, kappa: usize) -> bool {
    // Equivalent to kappa <= alpha*m^2 / n^2 without integer truncation.
    kappa * n * n <= alpha * m * m
}

/// Materialize the full `αm² × αm²` block-diagonal morphing matrix.
///
/// Oracle/demo path only; the block-wise routines below never build this.
pub fn build_morph_matrix(core: &MorphCore) -> Matrix {
    let (q, kappa) = (core.q(), core.kappa());
    let total = q * kappa;
    let mut m = Matrix::zeros(total, total);
    for block in 0..kappa {
        let base = block * q;
        for r in 0..q {
            for c in 0..q {
                m.set(base + r, base + c, core.mprime().get(r, c));
            }
        }
    }
    m
}

fn apply_blockwise(v: &RowVector, block: &Matrix, kappa: usize) -> Result<RowVector> {
    let q = block.rows();
    if v.len() != q * kappa {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} does not match kappa*q = {}",
            v.len(),
            q * kappa
        )));
    }
    let mut out = vec![0.0; v.len()];
    for s in 0..kappa {
        let seg = &v.data()[s * q..(s + 1) * q];
        let out_seg = &mut out[s * q..(s + 1) * q];
        for (i, &x) in seg.iter().enumerate() {
            let row = block.row(i);
            for (o, &w) in out_seg.iter_mut().zip(row) {
                *o += x * w;
            }
        }
    }
    RowVector::from_vec(out)
}

/// Morph an unrolled data row: `T = D · M`, computed segment-by-segment.
pub fn morph(dr: &RowVector, core: &MorphCore) -> Result<RowVector> {
    apply_blockwise(dr, core.mprime(), core.kappa())
}

/// Reverse the morph: `D = T · M⁻¹`, computed segment-by-segment.
pub fn unmorph(tr: &RowVector, core: &MorphCore) -> Result<RowVector> {
    apply_blockwise(tr, core.inverse(), core.kappa())
}

/// Morph against a core that is generated on the fly and never stored.
///
/// Entries stream from `rng` in the same row-major order a materialized core
/// would use, so for a given generator state this matches `morph` with the
/// matrix those draws would have produced. There is no conditioning gate —
/// the forward product needs no inverse — which is what makes block sides far
/// beyond materializable sizes reachable.
pub fn morph_streamed(dr: &RowVector, q: usize, kappa: usize, rng: &mut SeededRng) -> Result<RowVector> {
    if q == 0 || kappa == 0 {
        return Err(Error::InvalidGeometry(
            "q and kappa must be positive".into(),
        ));
    }
    if dr.len() != q * kappa {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} does not match kappa*q = {}",
            dr.len(),
            q * kappa
        )));
    }
    let mut out = vec![0.0; dr.len()];
    let mut row = vec![0.0; q];
    for i in 0..q {
        for slot in row.iter_mut() {
            *slot = rng.core_entry();
        }
        for s in 0..kappa {
            let x = dr.get(s * q + i);
            let out_seg = &mut out[s * q..(s + 1) * q];
            for (o, &w) in out_seg.iter_mut().zip(&row) {
                *o += x * w;
            }
        }
    }
    RowVector::from_vec(out)
}

/// Provider-side extra multiply-accumulate work per morphed datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DpMacCount {
    /// `α·q²`: the closed-form figure the overhead analysis quotes.
    pub paper: u64,
    /// `kappa·q²`: multiplications the block-wise morph actually executes.
    pub direct: u64,
}

/// Both readings of the provider-side MAC count. They disagree whenever
/// `kappa ≠ α`; callers get both rather than a silent choice.
pub fn dp_mac_count(alpha: usize, q: usize, kappa: usize) -> DpMacCount {
    let q2 = (q as u64) * (q as u64);
    DpMacCount {
        paper: alpha as u64 * q2,
        direct: kappa as u64 * q2,
    }
}
