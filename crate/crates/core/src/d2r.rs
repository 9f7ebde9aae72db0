//! Data-to-row lowering: converts a convolution layer into a single
//! row-vector × matrix product and back.
//!
//! The layout rule everywhere is channel-major, then row-major within a
//! channel: element `(channel i, row c, col d)` of an `m×m` tensor lands at
//! flat index `i·m² + c·m + d`. With that layout a convolution with kernel
//! set `K` becomes `unroll(D) · C` where `C` is the sparse-but-dense-stored
//! lowering matrix built by [`build_conv_matrix`]. [`conv_direct`] is the
//! sliding-window reference the lowered path is checked against.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RowVector};
use serde::{Deserialize, Serialize};

/// Zero-based padding behavior of the lowered convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding: output side `n = m − p + 1`.
    Valid,
    /// Zero padding preserving the spatial side: `n = m` (odd `p` only).
    SameZero,
}

impl Padding {
    /// Output side for input side `m` and kernel side `p`.
    pub fn output_side(self, m: usize, p: usize) -> Result<usize> {
        match self {
            Padding::Valid => {
                if m < p {
                    Err(Error::InvalidGeometry(format!(
                        "valid padding needs m >= p, got m={m}, p={p}"
                    )))
                } else {
                    Ok(m - p + 1)
                }
            }
            Padding::SameZero => {
                if p % 2 == 0 {
                    Err(Error::InvalidGeometry(format!(
                        "same-zero padding needs odd kernel side, got p={p}"
                    )))
                } else {
                    Ok(m)
                }
            }
        }
    }
}

/// An `alpha`-channel `m×m` real image, stored channel-major row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    alpha: usize,
    m: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(alpha: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if alpha == 0 || m == 0 {
            return Err(Error::InvalidGeometry(format!(
                "image needs positive alpha and m, got alpha={alpha}, m={m}"
            )));
        }
        if data.len() != alpha * m * m {
            return Err(Error::DimensionMismatch(format!(
                "image data length {} does not match alpha*m^2 = {}",
                data.len(),
                alpha * m * m
            )));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("image entry {bad}")));
        }
        Ok(Self { alpha, m, data })
    }

    pub fn zeros(alpha: usize, m: usize) -> Self {
        Self::new(alpha, m, vec![0.0; alpha * m * m]).unwrap()
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[channel * self.m * self.m + row * self.m + col]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, v: f64) {
        self.data[channel * self.m * self.m + row * self.m + col] = v;
    }
}

/// An `alpha × beta` set of `p×p` kernels, indexed `(input, output, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    alpha: usize,
    beta: usize,
    p: usize,
    weights: Vec<f64>,
}

impl KernelSet {
    pub fn new(alpha: usize, beta: usize, p: usize, weights: Vec<f64>) -> Result<Self> {
        if alpha == 0 || beta == 0 || p == 0 {
            return Err(Error::InvalidGeometry(format!(
                "kernel set needs positive alpha/beta/p, got {alpha}/{beta}/{p}"
            )));
        }
        if weights.len() != alpha * beta * p * p {
            return Err(Error::DimensionMismatch(format!(
                "kernel data length {} does not match alpha*beta*p^2 = {}",
                weights.len(),
                alpha * beta * p * p
            )));
        }
        if let Some(bad) = weights.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("kernel entry {bad}")));
        }
        Ok(Self {
            alpha,
            beta,
            p,
            weights,
        })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, input: usize, output: usize, a: usize, b: usize) -> f64 {
        self.weights[((input * self.beta + output) * self.p + a) * self.p + b]
    }
}

/// A `beta`-channel `n×n` feature map, stored channel-major row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    beta: usize,
    n: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(beta: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if beta == 0 || n == 0 {
            return Err(Error::InvalidGeometry(format!(
                "feature tensor needs positive beta and n, got beta={beta}, n={n}"
            )));
        }
        if data.len() != beta * n * n {
            return Err(Error::DimensionMismatch(format!(
                "feature data length {} does not match beta*n^2 = {}",
                data.len(),
                beta * n * n
            )));
        }
        Ok(Self { beta, n, data })
    }

    pub fn zeros(beta: usize, n: usize) -> Self {
        Self::new(beta, n, vec![0.0; beta * n * n]).unwrap()
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[channel * self.n * self.n + row * self.n + col]
    }
}

/// The lowered convolution matrix `C` plus the geometry it was built for.
#[derive(Debug, Clone)]
pub struct ConvMatrix {
    pub matrix: Matrix,
    pub alpha: usize,
    pub m: usize,
    pub beta: usize,
    pub n: usize,
    pub p: usize,
    pub padding: Padding,
}

/// Unroll an image into a row vector, channels concatenated left to right,
/// rows within a channel likewise.
pub fn unroll(d: &ImageTensor) -> RowVector {
    // The storage layout is already the unrolled order.
    RowVector::from_vec(d.data().to_vec()).expect("image data is finite and non-empty")
}

/// Inverse of [`unroll`].
pub fn reroll_image(v: &RowVector, alpha: usize, m: usize) -> Result<ImageTensor> {
    if v.len() != alpha * m * m {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} cannot reroll to alpha={alpha}, m={m}",
            v.len()
        )));
    }
    ImageTensor::new(alpha, m, v.data().to_vec())
}

/// Inverse of the feature-vector unrolling used by the lowered product.
pub fn reroll_features(v: &RowVector, beta: usize, n: usize) -> Result<FeatureTensor> {
    if v.len() != beta * n * n {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} cannot reroll to beta={beta}, n={n}",
            v.len()
        )));
    }
    FeatureTensor::new(beta, n, v.data().to_vec())
}

/// Flatten a feature tensor back into its row-vector form.
pub fn unroll_features(f: &FeatureTensor) -> RowVector {
    RowVector::from_vec(f.data().to_vec()).expect("feature data is non-empty")
}

/// Build the `αm² × βn²` lowering matrix for kernel set `k` on `m×m` inputs.
///
/// For every kernel weight `k[(i,j),(a,b)]` and output coordinate `(c,d)` the
/// entry at row `i·m² + (c+a)·m + (d+b)` (shifted up-left by `⌊p/2⌋` under
/// same-zero padding, with out-of-range input coordinates dropped) and column
/// `j·n² + c·n + d` is set to that weight.
pub fn build_conv_matrix(k: &KernelSet, m: usize, padding: Padding) -> Result<ConvMatrix> {
    let (alpha, beta, p) = (k.alpha(), k.beta(), k.p());
    let n = padding.output_side(m, p)?;
    let offset = match padding {
        Padding::Valid => 0i64,
        Padding::SameZero => (p / 2) as i64,
    };
    let mut c_mat = Matrix::zeros(alpha * m * m, beta * n * n);
    for i in 0..alpha {
        for j in 0..beta {
            for a in 0..p {
                for b in 0..p {
                    let w = k.get(i, j, a, b);
                    for c in 0..n {
                        let in_row = c as i64 + a as i64 - offset;
                        if in_row < 0 || in_row >= m as i64 {
                            continue;
                        }
                        for d in 0..n {
                            let in_col = d as i64 + b as i64 - offset;
                            if in_col < 0 || in_col >= m as i64 {
                                continue;
                            }
                            let x = i * m * m + in_row as usize * m + in_col as usize;
                            let y = j * n * n + c * n + d;
                            c_mat.set(x, y, w);
                        }
                    }
                }
            }
        }
    }
    Ok(ConvMatrix {
        matrix: c_mat,
        alpha,
        m,
        beta,
        n,
        p,
        padding,
    })
}

/// Sliding-window reference convolution: stride-1 cross-correlation summed
/// over input channels, no bias, no activation.
pub fn conv_direct(d: &ImageTensor, k: &KernelSet, padding: Padding) -> Result<FeatureTensor> {
    if d.alpha() != k.alpha() {
        return Err(Error::InvalidGeometry(format!(
            "image has {} channels, kernels expect {}",
            d.alpha(),
            k.alpha()
        )));
    }
    let (m, p) = (d.m(), k.p());
    let n = padding.output_side(m, p)?;
    let offset = match padding {
        Padding::Valid => 0i64,
        Padding::SameZero => (p / 2) as i64,
    };
    let mut out = FeatureTensor::zeros(k.beta(), n);
    for j in 0..k.beta() {
        for c in 0..n {
            for dcol in 0..n {
                let mut acc = 0.0;
                for i in 0..k.alpha() {
                    for a in 0..p {
                        let in_row = c as i64 + a as i64 - offset;
                        if in_row < 0 || in_row >= m as i64 {
                            continue;
                        }
                        for b in 0..p {
                            let in_col = dcol as i64 + b as i64 - offset;
                            if in_col < 0 || in_col >= m as i64 {
                                continue;
                            }
                            acc += d.get(i, in_row as usize, in_col as usize) * k.get(i, j, a, b);
                        }
                    }
                }
                out.data[j * n * n + c * n + dcol] = acc;
            }
        }
    }
    Ok(out)
}

/// Run the convolution through the lowered matrix: `reroll(unroll(d) · C)`.
pub fn conv_via_d2r(d: &ImageTensor, c: &ConvMatrix) -> Result<FeatureTensor> {
    if d.alpha() != c.alpha || d.m() != c.m {
        return Err(Error::InvalidGeometry(format!(
            "image geometry {}x{} does not match conv matrix geometry {}x{}",
            d.alpha(),
            d.m(),
            c.alpha,
            c.m
        )));
    }
    let fr = unroll(d).mul_matrix(&c.matrix)?;
    reroll_features(&fr, c.beta, c.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_image(alpha: usize, m: usize, rng: &mut SeededRng) -> ImageTensor {
        let data = (0..alpha * m * m).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        ImageTensor::new(alpha, m, data).unwrap()
    }

    fn random_kernels(alpha: usize, beta: usize, p: usize, rng: &mut SeededRng) -> KernelSet {
        let w = (0..alpha * beta * p * p)
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect();
        KernelSet::new(alpha, beta, p, w).unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn unroll_single_channel() {
        let d = ImageTensor::new(1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(unroll(&d).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unroll_two_channels() {
        let d = ImageTensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(
            unroll(&d).data(),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
        );
    }

    #[test]
    fn unroll_reroll_round_trip() {
        let mut rng = SeededRng::new(1);
        let d = random_image(3, 5, &mut rng);
        let back = reroll_image(&unroll(&d), 3, 5).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn reroll_features_layout() {
        let v = RowVector::from_vec(vec![12.0, 16.0, 24.0, 28.0]).unwrap();
        let f = reroll_features(&v, 1, 2).unwrap();
        assert_eq!(f.get(0, 0, 0), 12.0);
        assert_eq!(f.get(0, 0, 1), 16.0);
        assert_eq!(f.get(0, 1, 0), 24.0);
        assert_eq!(f.get(0, 1, 1), 28.0);
    }

    #[test]
    fn reroll_features_two_channels_of_one() {
        let v = RowVector::from_vec(vec![3.5, -1.25]).unwrap();
        let f = reroll_features(&v, 2, 1).unwrap();
        assert_eq!(f.get(0, 0, 0), 3.5);
        assert_eq!(f.get(1, 0, 0), -1.25);
    }

    #[test]
    fn reroll_length_mismatch() {
        let v = RowVector::from_vec(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(reroll_features(&v, 1, 2).is_err());
    }

    #[test]
    fn conv_direct_hand_case() {
        // 3x3 ramp image, all-ones 2x2 kernel, valid padding.
        let d = ImageTensor::new(
            1,
            3,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let k = KernelSet::new(1, 1, 2, vec![1.0; 4]).unwrap();
        let f = conv_direct(&d, &k, Padding::Valid).unwrap();
        assert_eq!(f.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn conv_direct_zero_image() {
        let d = ImageTensor::zeros(2, 4);
        let mut rng = SeededRng::new(2);
        let k = random_kernels(2, 3, 2, &mut rng);
        let f = conv_direct(&d, &k, Padding::Valid).unwrap();
        assert!(f.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn conv_direct_impulse_response() {
        // Delta at the center with same-zero padding reproduces each kernel
        // footprint centered on the impulse (cross-correlation: no flip).
        let m = 5;
        let p = 3;
        let mut d = ImageTensor::zeros(1, m);
        d.set(0, 2, 2, 1.0);
        let mut rng = SeededRng::new(3);
        let k = random_kernels(1, 2, p, &mut rng);
        let f = conv_direct(&d, &k, Padding::SameZero).unwrap();
        for j in 0..2 {
            for a in 0..p {
                for b in 0..p {
                    // Output (c,d) sees input (c+a-1, d+b-1); it equals the
                    // impulse when c = 3-a, d = 3-b.
                    let c = 3 - a;
                    let dd = 3 - b;
                    assert!(
                        (f.get(j, c, dd) - k.get(0, j, a, b)).abs() < 1e-15,
                        "impulse mismatch at j={j} a={a} b={b}"
                    );
                }
            }
        }
    }

    #[test]
    fn build_conv_matrix_product_matches_hand_case() {
        let d = ImageTensor::new(
            1,
            3,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let k = KernelSet::new(1, 1, 2, vec![1.0; 4]).unwrap();
        let c = build_conv_matrix(&k, 3, Padding::Valid).unwrap();
        let f = unroll(&d).mul_matrix(&c.matrix).unwrap();
        assert_eq!(f.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn one_by_one_kernel_is_scaling() {
        let w = -2.5;
        let k = KernelSet::new(1, 1, 1, vec![w]).unwrap();
        let c = build_conv_matrix(&k, 4, Padding::Valid).unwrap();
        let expected = Matrix::identity(16).scaled(w);
        assert_eq!(c.matrix, expected);
    }

    #[test]
    fn lowered_matches_direct_same_zero() {
        let mut rng = SeededRng::new(4);
        let k = random_kernels(2, 3, 3, &mut rng);
        let c = build_conv_matrix(&k, 5, Padding::SameZero).unwrap();
        for _ in 0..100 {
            let d = random_image(2, 5, &mut rng);
            let via = conv_via_d2r(&d, &c).unwrap();
            let direct = conv_direct(&d, &k, Padding::SameZero).unwrap();
            assert!(max_abs_diff(via.data(), direct.data()) <= 1e-12);
        }
    }

    #[test]
    fn lowered_matches_direct_randomized_geometries() {
        let mut rng = SeededRng::new(5);
        for trial in 0..200 {
            let alpha = 1 + trial % 3;
            let beta = 1 + (trial / 3) % 4;
            let p = 1 + trial % 3;
            let m = (p + 1) + trial % 5;
            let padding = if trial % 2 == 0 || p % 2 == 0 {
                Padding::Valid
            } else {
                Padding::SameZero
            };
            let k = random_kernels(alpha, beta, p, &mut rng);
            let c = build_conv_matrix(&k, m, padding).unwrap();
            let d = random_image(alpha, m, &mut rng);
            let via = conv_via_d2r(&d, &c).unwrap();
            let direct = conv_direct(&d, &k, padding).unwrap();
            assert!(
                max_abs_diff(via.data(), direct.data()) <= 1e-12,
                "trial {trial} alpha={alpha} beta={beta} m={m} p={p} {padding:?}"
            );
        }
    }

    #[test]
    fn conv_via_d2r_linear() {
        let mut rng = SeededRng::new(6);
        let k = random_kernels(2, 2, 2, &mut rng);
        let c = build_conv_matrix(&k, 4, Padding::Valid).unwrap();
        let d1 = random_image(2, 4, &mut rng);
        let d2 = random_image(2, 4, &mut rng);
        let (a, b) = (0.7, -1.3);
        let combo_data: Vec<f64> = d1
            .data()
            .iter()
            .zip(d2.data())
            .map(|(x, y)| a * x + b * y)
            .collect();
        let combo = ImageTensor::new(2, 4, combo_data).unwrap();
        let f_combo = conv_via_d2r(&combo, &c).unwrap();
        let f1 = conv_via_d2r(&d1, &c).unwrap();
        let f2 = conv_via_d2r(&d2, &c).unwrap();
        let expect: Vec<f64> = f1
            .data()
            .iter()
            .zip(f2.data())
            .map(|(x, y)| a * x + b * y)
            .collect();
        assert!(max_abs_diff(f_combo.data(), &expect) <= 1e-12);
    }

    #[test]
    fn kernel_weight_multiplicity_valid_mode() {
        // In valid mode every kernel weight appears exactly n^2 times in C.
        let mut rng = SeededRng::new(7);
        let k = random_kernels(2, 2, 2, &mut rng);
        let m = 4;
        let c = build_conv_matrix(&k, m, Padding::Valid).unwrap();
        let n = c.n;
        let nonzeros = c.matrix.data().iter().filter(|&&x| x != 0.0).count();
        assert_eq!(nonzeros, 2 * 2 * 4 * n * n);
        // Count appearances of one specific weight value.
        let w = k.get(1, 0, 1, 0);
        let count = c.matrix.data().iter().filter(|&&x| x == w).count();
        assert_eq!(count, n * n);
    }

    #[test]
    fn exhaustive_binary_images_match() {
        let mut rng = SeededRng::new(8);
        let k = random_kernels(1, 1, 2, &mut rng);
        let c = build_conv_matrix(&k, 3, Padding::Valid).unwrap();
        for bits in 0..512u32 {
            let data: Vec<f64> = (0..9).map(|i| ((bits >> i) & 1) as f64).collect();
            let d = ImageTensor::new(1, 3, data).unwrap();
            let via = conv_via_d2r(&d, &c).unwrap();
            let direct = conv_direct(&d, &k, Padding::Valid).unwrap();
            assert!(max_abs_diff(via.data(), direct.data()) <= 1e-12);
        }
    }

    #[test]
    fn same_zero_needs_odd_kernel() {
        let k = KernelSet::new(1, 1, 2, vec![1.0; 4]).unwrap();
        assert!(build_conv_matrix(&k, 4, Padding::SameZero).is_err());
    }

    #[test]
    fn valid_needs_kernel_at_most_image() {
        let k = KernelSet::new(1, 1, 3, vec![1.0; 9]).unwrap();
        assert!(build_conv_matrix(&k, 2, Padding::Valid).is_err());
    }
}
