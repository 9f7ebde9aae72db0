//! Privacy and overhead metrics: structural similarity of morphed images,
//! the recovery-threshold check, and consolidated operation counts.

use crate::augconv::{data_overhead, dev_mac_overhead};
use crate::d2r::{reroll_image, unroll, ImageTensor};
use crate::error::{Error, Result};
use crate::linalg::{RowVector, DEFAULT_COND_MAX};
use crate::morphing::{choose_q, dp_mac_count, morph, morph_streamed, MorphCore};
use crate::rng::SeededRng;
use serde::Serialize;

/// Above this block side the privacy sweep streams core entries instead of
/// materializing and condition-gating a core; the forward morph never needs
/// the inverse, and a dense core at the largest sweep sizes would not fit.
pub const SWEEP_MATERIALIZE_LIMIT: usize = 256;

/// SSIM configuration: uniform non-overlapping windows with the usual
/// stabilizers `c1 = (0.01·L)²`, `c2 = (0.03·L)²`.
#[derive(Debug, Clone, Copy)]
pub struct SsimParams {
    pub window: usize,
    pub dynamic_range: f64,
    pub c1: f64,
    pub c2: f64,
}

impl SsimParams {
    pub fn new(window: usize, dynamic_range: f64) -> Self {
        Self {
            window,
            dynamic_range,
            c1: (0.01 * dynamic_range).powi(2),
            c2: (0.03 * dynamic_range).powi(2),
        }
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        // 8x8 windows over [0, 1] images.
        Self::new(8, 1.0)
    }
}

/// Mean SSIM over all channels and all non-overlapping full windows.
///
/// Inputs are expected to lie in `[0, L]`; window statistics use population
/// moments. The result lies in `[-1, 1]` and equals 1 exactly for `a == b`.
pub fn ssim(a: &ImageTensor, b: &ImageTensor, params: &SsimParams) -> Result<f64> {
    if a.alpha() != b.alpha() || a.m() != b.m() {
        return Err(Error::InvalidGeometry(format!(
            "ssim inputs {}x{} vs {}x{}",
            a.alpha(),
            a.m(),
            b.alpha(),
            b.m()
        )));
    }
    let m = a.m();
    let w = params.window;
    if w < 2 || w > m {
        return Err(Error::DomainError(format!(
            "window {w} invalid for image side {m}"
        )));
    }
    let per_side = m / w;
    let count = (w * w) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for channel in 0..a.alpha() {
        for wr in 0..per_side {
            for wc in 0..per_side {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in wr * w..(wr + 1) * w {
                    for c in wc * w..(wc + 1) * w {
                        let x = a.get(channel, r, c);
                        let y = b.get(channel, r, c);
                        sx += x;
                        sy += y;
                        sxx += x * x;
                        syy += y * y;
                        sxy += x * y;
                    }
                }
                let mx = sx / count;
                let my = sy / count;
                let vx = sxx / count - mx * mx;
                let vy = syy / count - my * my;
                let cov = sxy / count - mx * my;
                let val = ((2.0 * mx * my + params.c1) * (2.0 * cov + params.c2))
                    / ((mx * mx + my * my + params.c1) * (vx + vy + params.c2));
                total += val;
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}

/// Morph an image with the given core and score the clamped result against
/// the original.
pub fn morphed_ssim(image: &ImageTensor, core: &MorphCore, params: &SsimParams) -> Result<f64> {
    let tr = morph(&unroll(image), core)?;
    let clamped = clamp_to_image(&tr, image.alpha(), image.m(), params.dynamic_range)?;
    ssim(image, &clamped, params)
}

fn clamp_to_image(tr: &RowVector, alpha: usize, m: usize, l: f64) -> Result<ImageTensor> {
    let data = tr.data().iter().map(|&x| x.clamp(0.0, l)).collect();
    reroll_image(&RowVector::from_vec(data)?, alpha, m)
}

/// One row of the privacy sweep table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub kappa: usize,
    pub q: usize,
    pub ssim: f64,
}

/// Morph the image once per scale factor and report the SSIM against the
/// original, rows ordered by descending `kappa` (growing block side).
///
/// Each row draws its core from a sub-stream derived from `rng`'s seed and
/// the row's `kappa`, so a fixed seed fixes the whole table. Rows whose block
/// side exceeds [`SWEEP_MATERIALIZE_LIMIT`] use the streamed morph.
pub fn privacy_sweep(
    image: &ImageTensor,
    kappas: &[usize],
    rng: &SeededRng,
    params: &SsimParams,
) -> Result<Vec<SweepRow>> {
    let total = image.alpha() * image.m() * image.m();
    let mut order: Vec<usize> = kappas.to_vec();
    order.sort_unstable_by(|a, b| b.cmp(a));
    let mut rows = Vec::with_capacity(order.len());
    for kappa in order {
        let q = choose_q(image.alpha(), image.m(), kappa)?;
        let mut row_rng = rng.derive(kappa as u64);
        let score = if q <= SWEEP_MATERIALIZE_LIMIT {
            let core = MorphCore::generate(q, kappa, &mut row_rng, DEFAULT_COND_MAX)?;
            morphed_ssim(image, &core, params)?
        } else {
            let tr = morph_streamed(&unroll(image), q, kappa, &mut row_rng)?;
            let clamped = clamp_to_image(&tr, image.alpha(), image.m(), params.dynamic_range)?;
            ssim(image, &clamped, params)?
        };
        debug_assert_eq!(q * kappa, total);
        rows.push(SweepRow {
            kappa,
            q,
            ssim: score,
        });
    }
    Ok(rows)
}

/// Root mean square error between two equal-length rows.
pub fn erms(a: &RowVector, b: &RowVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "erms over lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sse / a.len() as f64).sqrt())
}

/// Recovery-threshold test: `e ≤ σ / N^{1/4}` for an `N`-element morphing
/// matrix. Recoveries below the threshold count as privacy breaches.
pub fn privacy_reservation_check(e: f64, sigma: f64, n_elements: u64) -> Result<bool> {
    if !(0.0 < sigma && sigma < 1.0) {
        return Err(Error::DomainError(format!(
            "privacy reservation must lie in (0,1), got {sigma}"
        )));
    }
    if n_elements == 0 {
        return Err(Error::DomainError("n_elements must be positive".into()));
    }
    if !e.is_finite() || e < 0.0 {
        return Err(Error::DomainError(format!("invalid rms error {e}")));
    }
    Ok(e <= sigma / (n_elements as f64).powf(0.25))
}

/// Consolidated overhead counts for one layer geometry.
///
/// Counts depend only on the layer geometry and the morphing scale factor;
/// nothing in them encodes network depth or dataset size. Ratios appear only
/// when the caller supplies the corresponding baseline.
#[derive(Debug, Clone, Serialize)]
pub struct OverheadReport {
    pub alpha: usize,
    pub m: usize,
    pub p: usize,
    pub beta: usize,
    pub n: usize,
    pub kappa: usize,
    pub q: usize,
    /// Provider-side MACs, closed-form figure `α·q²`.
    pub dp_macs_paper: u64,
    /// Provider-side MACs actually executed by the block-wise morph, `κ·q²`.
    pub dp_macs_direct: u64,
    /// Developer-side extra MACs, `(m² − p²)·α·β·n²`.
    pub dev_macs: u64,
    /// Elements in the shipped augmented layer, `(αm²)²`.
    pub data_elements: u64,
    pub dp_ratio_paper: Option<f64>,
    pub dp_ratio_direct: Option<f64>,
    pub dev_ratio: Option<f64>,
    pub data_ratio: Option<f64>,
    /// Reminder that no count above involves network depth or dataset size.
    pub note: String,
}

#[allow(clippy::too_many_arguments)]
pub fn overhead_report(
    alpha: usize,
    m: usize,
    p: usize,
    beta: usize,
    n: usize,
    kappa: usize,
    base_macs: Option<u64>,
    dataset_elems: Option<u64>,
) -> Result<OverheadReport> {
    let q = choose_q(alpha, m, kappa)?;
    let dp = dp_mac_count(alpha, q, kappa);
    let dev = dev_mac_overhead(alpha, m, p, beta, n)?;
    let side = (alpha * m * m) as u64;
    let data_elements = side * side;
    let ratio = |num: u64, den: Option<u64>| den.map(|d| num as f64 / d as f64);
    let data_ratio = match dataset_elems {
        Some(d) => Some(data_overhead(alpha, m, d)?.ratio),
        None => None,
    };
    Ok(OverheadReport {
        alpha,
        m,
        p,
        beta,
        n,
        kappa,
        q,
        dp_macs_paper: dp.paper,
        dp_macs_direct: dp.direct,
        dev_macs: dev,
        data_elements,
        dp_ratio_paper: ratio(dp.paper, base_macs),
        dp_ratio_direct: ratio(dp.direct, base_macs),
        dev_ratio: ratio(dev, base_macs),
        data_ratio,
        note: "all counts are functions of layer geometry and kappa only; \
               network depth and dataset size never enter"
            .to_string(),
    })
}

/// Deterministic smooth test image: layered sinusoids, a soft gradient and a
/// few blobs, clamped to `[0, 1]`. Stands in for natural photographs in
/// privacy sweeps; `variant` selects frequencies, phases and blob layout.
pub fn synthetic_natural_image(alpha: usize, m: usize, variant: u64) -> ImageTensor {
    let mut rng = SeededRng::new(variant).derive(0x1ac3);
    let fx = 1.0 + rng.index(3) as f64;
    let fy = 1.0 + rng.index(3) as f64;
    let phase_x = rng.uniform_in(0.0, std::f64::consts::TAU);
    let phase_y = rng.uniform_in(0.0, std::f64::consts::TAU);
    let n_blobs = 3 + rng.index(3);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            (
                rng.uniform_in(0.15, 0.85) * m as f64,
                rng.uniform_in(0.15, 0.85) * m as f64,
                rng.uniform_in(0.08, 0.2) * m as f64,
                rng.uniform_in(-0.45, 0.45),
            )
        })
        .collect();
    let grad = rng.uniform_in(-0.25, 0.25);
    let mut data = Vec::with_capacity(alpha * m * m);
    for channel in 0..alpha {
        let tint = 1.0 - 0.15 * channel as f64;
        for r in 0..m {
            for c in 0..m {
                let (rf, cf) = (r as f64, c as f64);
                let mut v = 0.5
                    + 0.22
                        * tint
                        * (std::f64::consts::TAU * fx * rf / m as f64 + phase_x).sin()
                        * (std::f64::consts::TAU * fy * cf / m as f64 + phase_y).cos()
                    + grad * (rf + cf) / (2.0 * m as f64);
                for &(br, bc, sigma, amp) in &blobs {
                    let d2 = (rf - br) * (rf - br) + (cf - bc) * (cf - bc);
                    v += amp * tint * (-d2 / (2.0 * sigma * sigma)).exp();
                }
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    ImageTensor::new(alpha, m, data).expect("generated image is finite")
}
