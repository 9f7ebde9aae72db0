//! Augmented convolution layer: `C_ac = M⁻¹ · C` with shuffled output-channel
//! column groups.
//!
//! The developer ships the trained first-layer kernels; the provider combines
//! the inverse morph with the lowered convolution so that morphed rows yield
//! the original features (reordered by a secret channel permutation) without
//! the data ever being unmorphed on the developer's side.

use crate::d2r::{reroll_features, ConvMatrix, FeatureTensor, Padding};
use crate::error::{Error, Result};
use crate::linalg::{matmul, Matrix, RowVector};
use crate::morphing::MorphCore;
use crate::rng::SeededRng;

/// A bijection on output channels. `order[slot] = source` means output slot
/// `slot` carries what the unshuffled convolution would emit on channel
/// `source`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPermutation {
    order: Vec<usize>,
}

impl ChannelPermutation {
    pub fn identity(beta: usize) -> Self {
        Self {
            order: (0..beta).collect(),
        }
    }

    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let beta = order.len();
        let mut seen = vec![false; beta];
        for &j in &order {
            if j >= beta || seen[j] {
                return Err(Error::InvalidGeometry(format!(
                    "order {order:?} is not a permutation of 0..{beta}"
                )));
            }
            seen[j] = true;
        }
        Ok(Self { order })
    }

    pub fn beta(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// The permutation that undoes this one.
    pub fn inverse(&self) -> ChannelPermutation {
        let mut inv = vec![0; self.order.len()];
        for (slot, &src) in self.order.iter().enumerate() {
            inv[src] = slot;
        }
        ChannelPermutation { order: inv }
    }

    /// Reorder the channels of a feature tensor.
    pub fn apply(&self, f: &FeatureTensor) -> Result<FeatureTensor> {
        if f.beta() != self.beta() {
            return Err(Error::DimensionMismatch(format!(
                "permutation over {} channels applied to {} channels",
                self.beta(),
                f.beta()
            )));
        }
        let n = f.n();
        let group = n * n;
        let mut data = vec![0.0; f.data().len()];
        for (slot, &src) in self.order.iter().enumerate() {
            data[slot * group..(slot + 1) * group]
                .copy_from_slice(&f.data()[src * group..(src + 1) * group]);
        }
        FeatureTensor::new(self.beta(), n, data)
    }
}

/// Uniform random channel permutation (Fisher-Yates), deterministic per seed.
pub fn random_permutation(beta: usize, rng: &mut SeededRng) -> ChannelPermutation {
    let mut order: Vec<usize> = (0..beta).collect();
    rng.shuffle(&mut order);
    ChannelPermutation { order }
}

/// The matrix shipped to the developer, with the geometry needed to apply it.
#[derive(Debug, Clone)]
pub struct AugConvMatrix {
    pub matrix: Matrix,
    pub alpha: usize,
    pub m: usize,
    pub beta: usize,
    pub n: usize,
    pub p: usize,
    pub padding: Padding,
    pub permuted: bool,
}

/// Build `C_ac = M⁻¹ · C` and shuffle its column groups.
///
/// `M⁻¹` is block-diagonal, so each band of `q` rows of `C` is
/// left-multiplied by the cached core inverse; the full morphing matrix is
/// never formed. Column groups are `n²` contiguous columns, one per output
/// channel, with the group width taken from the conv matrix's recorded `n`.
pub fn build_augconv(
    core: &MorphCore,
    c: &ConvMatrix,
    perm: &ChannelPermutation,
) -> Result<AugConvMatrix> {
    let total = c.alpha * c.m * c.m;
    if core.total_len() != total {
        return Err(Error::InvalidGeometry(format!(
            "core covers {} elements but conv matrix expects alpha*m^2 = {total}",
            core.total_len()
        )));
    }
    if perm.beta() != c.beta {
        return Err(Error::InvalidGeometry(format!(
            "permutation over {} channels but conv matrix has beta = {}",
            perm.beta(),
            c.beta
        )));
    }
    let q = core.q();
    let cols = c.matrix.cols();
    let mut product = Matrix::zeros(total, cols);

    // Band-wise M'^{-1} * C.
    let mut band = Matrix::zeros(q, cols);
    for s in 0..core.kappa() {
        for r in 0..q {
            band.row_mut(r).copy_from_slice(c.matrix.row(s * q + r));
        }
        let mixed = matmul(core.inverse(), &band)?;
        for r in 0..q {
            product.row_mut(s * q + r).copy_from_slice(mixed.row(r));
        }
    }

    // Shuffle column groups of n^2 contiguous columns.
    let group = c.n * c.n;
    let permuted = !perm.is_identity();
    let matrix = if permuted {
        let mut shuffled = Matrix::zeros(total, cols);
        for r in 0..total {
            let src_row = product.row(r);
            let dst_row = shuffled.row_mut(r);
            for (slot, &src) in perm.order().iter().enumerate() {
                dst_row[slot * group..(slot + 1) * group]
                    .copy_from_slice(&src_row[src * group..(src + 1) * group]);
            }
        }
        shuffled
    } else {
        product
    };

    Ok(AugConvMatrix {
        matrix,
        alpha: c.alpha,
        m: c.m,
        beta: c.beta,
        n: c.n,
        p: c.p,
        padding: c.padding,
        permuted,
    })
}

/// Extract features from a morphed row: `reroll(T · C_ac)`.
pub fn apply_augconv(tr: &RowVector, ac: &AugConvMatrix) -> Result<FeatureTensor> {
    if tr.len() != ac.matrix.rows() {
        return Err(Error::DimensionMismatch(format!(
            "morphed row of length {} against {} matrix rows",
            tr.len(),
            ac.matrix.rows()
        )));
    }
    let fr = tr.mul_matrix(&ac.matrix)?;
    reroll_features(&fr, ac.beta, ac.n)
}

/// Transmission cost of shipping the augmented layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataOverhead {
    /// Number of elements in the shipped matrix: `(αm²)²`.
    pub elements: u64,
    /// `elements / dataset_elems`.
    pub ratio: f64,
}

/// Size of the shipped matrix relative to the dataset it replaces resending.
pub fn data_overhead(alpha: usize, m: usize, dataset_elems: u64) -> Result<DataOverhead> {
    if dataset_elems == 0 {
        return Err(Error::DomainError("dataset_elems must be positive".into()));
    }
    let side = (alpha * m * m) as u64;
    let elements = side * side;
    Ok(DataOverhead {
        elements,
        ratio: elements as f64 / dataset_elems as f64,
    })
}

/// Developer-side extra MACs per inference: `(m² − p²)·α·β·n²`.
pub fn dev_mac_overhead(alpha: usize, m: usize, p: usize, beta: usize, n: usize) -> Result<u64> {
    if m < p {
        return Err(Error::InvalidGeometry(format!(
            "kernel side {p} exceeds image side {m}"
        )));
    }
    let diff = (m * m - p * p) as u64;
    Ok(diff * alpha as u64 * beta as u64 * (n * n) as u64)
}
