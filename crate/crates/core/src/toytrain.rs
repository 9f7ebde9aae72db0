//! Toy-scale head-training experiment: a softmax head on top of a frozen
//! feature extractor, run three ways — clean data through the plain
//! convolution, morphed data through the augmented layer, and morphed data
//! pushed through the plain convolution. The first two should tie; the third
//! collapses, since the plain layer cannot see through the morph.

use crate::augconv::{apply_augconv, build_augconv, ChannelPermutation};
use crate::d2r::{
    build_conv_matrix, conv_direct, reroll_features, unroll, FeatureTensor, ImageTensor,
    KernelSet, Padding,
};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, DEFAULT_COND_MAX};
use crate::morphing::{morph, MorphCore};
use crate::rng::{SeededRng, DEFAULT_SEED};
use serde::Serialize;

/// Labeled synthetic images with class-conditional templates.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

/// Class template: a shared smooth background plus one bright blob whose
/// position depends only on the class.
fn class_template(class: usize, classes: usize, alpha: usize, m: usize) -> ImageTensor {
    let mf = m as f64;
    let angle = std::f64::consts::TAU * class as f64 / classes as f64;
    let blob_r = mf / 2.0 + (mf / 4.0) * angle.cos();
    let blob_c = mf / 2.0 + (mf / 4.0) * angle.sin();
    let sigma = mf / 5.0;
    let mut data = Vec::with_capacity(alpha * m * m);
    for channel in 0..alpha {
        let tint = 1.0 - 0.1 * channel as f64;
        for r in 0..m {
            for c in 0..m {
                let (rf, cf) = (r as f64, c as f64);
                let base = 0.45 + 0.2 * (std::f64::consts::TAU * (rf + cf) / (2.0 * mf)).sin();
                let d2 = (rf - blob_r) * (rf - blob_r) + (cf - blob_c) * (cf - blob_c);
                let blob = 0.35 * (-d2 / (2.0 * sigma * sigma)).exp();
                data.push(tint * (base + blob));
            }
        }
    }
    ImageTensor::new(alpha, m, data).expect("template is finite")
}

/// Balanced class-conditional dataset with the given additive noise level.
pub fn gen_synthetic_with_noise(
    classes: usize,
    per_class: usize,
    alpha: usize,
    m: usize,
    noise_std: f64,
    rng: &mut SeededRng,
) -> Result<SyntheticDataset> {
    if classes < 2 {
        return Err(Error::DomainError(format!(
            "at least 2 classes required, got {classes}"
        )));
    }
    if m < 4 {
        return Err(Error::DomainError(format!(
            "image side must be at least 4, got {m}"
        )));
    }
    if per_class == 0 {
        return Err(Error::DomainError("per_class must be positive".into()));
    }
    let templates: Vec<ImageTensor> = (0..classes)
        .map(|k| class_template(k, classes, alpha, m))
        .collect();
    let mut images = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (k, template) in templates.iter().enumerate() {
        for _ in 0..per_class {
            let data: Vec<f64> = template
                .data()
                .iter()
                .map(|&v| v + noise_std * rng.normal())
                .collect();
            images.push(ImageTensor::new(alpha, m, data)?);
            labels.push(k);
        }
    }
    Ok(SyntheticDataset {
        images,
        labels,
        classes,
    })
}

/// Balanced class-conditional dataset; noise std is 0.1 of the unit template
/// amplitude.
pub fn gen_synthetic(
    classes: usize,
    per_class: usize,
    alpha: usize,
    m: usize,
    rng: &mut SeededRng,
) -> Result<SyntheticDataset> {
    gen_synthetic_with_noise(classes, per_class, alpha, m, 0.1, rng)
}

/// Hyperparameters for the softmax head.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 16,
            seed: DEFAULT_SEED,
        }
    }
}

/// Affine softmax classifier over flattened features; the last weight row is
/// the bias.
#[derive(Debug, Clone)]
pub struct LinearHead {
    weights: Matrix,
}

impl LinearHead {
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn classes(&self) -> usize {
        self.weights.cols()
    }

    fn logits(&self, flat: &[f64]) -> Vec<f64> {
        let dim = self.weights.rows() - 1;
        debug_assert_eq!(flat.len(), dim);
        let classes = self.weights.cols();
        let mut out = vec![0.0; classes];
        for (d, &x) in flat.iter().enumerate() {
            let row = self.weights.row(d);
            for (o, &w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
        for (o, &b) in out.iter_mut().zip(self.weights.row(dim)) {
            *o += b;
        }
        out
    }

    pub fn predict(&self, f: &FeatureTensor) -> usize {
        let logits = self.logits(f.data());
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        best
    }
}

/// Fraction of samples the head labels correctly.
pub fn accuracy(head: &LinearHead, features: &[FeatureTensor], labels: &[usize]) -> f64 {
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(f, &y)| head.predict(f) == y)
        .count();
    correct as f64 / features.len().max(1) as f64
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Train the head by mini-batch gradient descent on softmax cross-entropy,
/// returning the head and the per-epoch mean training loss.
///
/// Features are z-scored internally for a stable step size; the scaling is
/// folded back into the returned weights, so the head applies to raw
/// features.
pub fn train_head_with_losses(
    features: &[FeatureTensor],
    labels: &[usize],
    classes: usize,
    config: &TrainConfig,
) -> Result<(LinearHead, Vec<f64>)> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} features against {} labels",
            features.len(),
            labels.len()
        )));
    }
    if classes < 2 {
        return Err(Error::DomainError("at least 2 classes required".into()));
    }
    let (beta, n) = (features[0].beta(), features[0].n());
    for f in features {
        if f.beta() != beta || f.n() != n {
            return Err(Error::DimensionMismatch(
                "inconsistent feature shapes".into(),
            ));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::DomainError(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    if config.learning_rate < 0.0 || config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::DomainError("invalid training configuration".into()));
    }

    let dim = beta * n * n;
    let count = features.len();
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, &x) in mean.iter_mut().zip(f.data()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    let mut std = vec![0.0; dim];
    for f in features {
        for (s, (&x, &m)) in std.iter_mut().zip(f.data().iter().zip(&mean)) {
            *s += (x - m) * (x - m);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / count as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            f.data()
                .iter()
                .zip(mean.iter().zip(&std))
                .map(|(&x, (&m, &s))| (x - m) / s)
                .collect()
        })
        .collect();

    let mut w = Matrix::zeros(dim + 1, classes);
    let mut rng = SeededRng::new(config.seed).derive(0x7ea1);
    let mut order: Vec<usize> = (0..count).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut logits = vec![0.0; classes];
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut loss_acc = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = Matrix::zeros(dim + 1, classes);
            for &idx in batch {
                let z = &standardized[idx];
                let y = labels[idx];
                logits.iter_mut().for_each(|v| *v = 0.0);
                for (d, &x) in z.iter().enumerate() {
                    let row = w.row(d);
                    for (o, &wv) in logits.iter_mut().zip(row) {
                        *o += x * wv;
                    }
                }
                for (o, &b) in logits.iter_mut().zip(w.row(dim)) {
                    *o += b;
                }
                softmax_in_place(&mut logits);
                loss_acc -= logits[y].max(1e-300).ln();
                for c in 0..classes {
                    let coef = logits[c] - if c == y { 1.0 } else { 0.0 };
                    if coef != 0.0 {
                        for (d, &x) in z.iter().enumerate() {
                            let g = grad.get(d, c) + coef * x;
                            grad.set(d, c, g);
                        }
                        grad.set(dim, c, grad.get(dim, c) + coef);
                    }
                }
            }
            let step = config.learning_rate / batch.len() as f64;
            for d in 0..=dim {
                let wrow = w.row_mut(d);
                let grow = grad.row(d);
                for (wv, &g) in wrow.iter_mut().zip(grow) {
                    *wv -= step * g;
                }
            }
        }
        epoch_losses.push(loss_acc / count as f64);
    }

    // Fold the z-scoring into the weights so the head acts on raw features.
    let mut folded = Matrix::zeros(dim + 1, classes);
    for c in 0..classes {
        let mut bias = w.get(dim, c);
        for d in 0..dim {
            let scaled = w.get(d, c) / std[d];
            folded.set(d, c, scaled);
            bias -= mean[d] * scaled;
        }
        folded.set(dim, c, bias);
    }
    Ok((LinearHead { weights: folded }, epoch_losses))
}

/// Train the head and discard the loss trace.
pub fn train_head(
    features: &[FeatureTensor],
    labels: &[usize],
    classes: usize,
    config: &TrainConfig,
) -> Result<LinearHead> {
    train_head_with_losses(features, labels, classes, config).map(|(head, _)| head)
}

/// Feature sets for the three experiment arms.
#[derive(Debug, Clone)]
pub struct ParityFeatures {
    /// Clean data through the plain convolution.
    pub clean: Vec<FeatureTensor>,
    /// Morphed data through the augmented layer.
    pub morphed_augconv: Vec<FeatureTensor>,
    /// Morphed data through the plain convolution matrix.
    pub morphed_plainc: Vec<FeatureTensor>,
}

/// Extract all three feature sets for a dataset.
pub fn parity_features(
    dataset: &SyntheticDataset,
    kernels: &KernelSet,
    core: &MorphCore,
    perm: &ChannelPermutation,
    padding: Padding,
) -> Result<ParityFeatures> {
    let first = dataset
        .images
        .first()
        .ok_or_else(|| Error::DomainError("empty dataset".into()))?;
    let (alpha, m) = (first.alpha(), first.m());
    let conv = build_conv_matrix(kernels, m, padding)?;
    let ac = build_augconv(core, &conv, perm)?;
    let mut clean = Vec::with_capacity(dataset.images.len());
    let mut morphed_augconv = Vec::with_capacity(dataset.images.len());
    let mut morphed_plainc = Vec::with_capacity(dataset.images.len());
    for (idx, img) in dataset.images.iter().enumerate() {
        if img.alpha() != alpha || img.m() != m {
            return Err(Error::InvalidGeometry(format!(
                "image {idx} geometry differs from the first image"
            )));
        }
        clean.push(conv_direct(img, kernels, padding)?);
        let tr = morph(&unroll(img), core)?;
        morphed_augconv.push(apply_augconv(&tr, &ac)?);
        let fr = tr.mul_matrix(&conv.matrix)?;
        morphed_plainc.push(reroll_features(&fr, conv.beta, conv.n)?);
    }
    Ok(ParityFeatures {
        clean,
        morphed_augconv,
        morphed_plainc,
    })
}

/// Test-set accuracies of the three experiment arms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParityOutcome {
    pub acc_clean: f64,
    pub acc_morphed_augconv: f64,
    pub acc_morphed_plainc: f64,
}

/// Run the three-arm experiment: 80/20 split, a fresh head per arm with the
/// same configuration and seed.
pub fn parity_experiment(
    dataset: &SyntheticDataset,
    kernels: &KernelSet,
    core: &MorphCore,
    perm: &ChannelPermutation,
    padding: Padding,
    config: &TrainConfig,
) -> Result<ParityOutcome> {
    let feats = parity_features(dataset, kernels, core, perm, padding)?;
    let count = dataset.images.len();
    if count < 5 {
        return Err(Error::DomainError(
            "dataset too small for an 80/20 split".into(),
        ));
    }
    let mut order: Vec<usize> = (0..count).collect();
    SeededRng::new(config.seed).derive(0x511f).shuffle(&mut order);
    let cut = count * 4 / 5;
    let (train_idx, test_idx) = order.split_at(cut);

    let run = |all: &[FeatureTensor]| -> Result<f64> {
        let train_feats: Vec<FeatureTensor> = train_idx.iter().map(|&i| all[i].clone()).collect();
        let train_labels: Vec<usize> = train_idx.iter().map(|&i| dataset.labels[i]).collect();
        let head = train_head(&train_feats, &train_labels, dataset.classes, config)?;
        let test_feats: Vec<FeatureTensor> = test_idx.iter().map(|&i| all[i].clone()).collect();
        let test_labels: Vec<usize> = test_idx.iter().map(|&i| dataset.labels[i]).collect();
        Ok(accuracy(&head, &test_feats, &test_labels))
    };

    Ok(ParityOutcome {
        acc_clean: run(&feats.clean)?,
        acc_morphed_augconv: run(&feats.morphed_augconv)?,
        acc_morphed_plainc: run(&feats.morphed_plainc)?,
    })
}

/// The default experiment setup: four blob classes, whole-vector morphing,
/// smoothing kernels and a two-channel swap.
#[derive(Debug, Clone)]
pub struct ParityTask {
    pub dataset: SyntheticDataset,
    pub kernels: KernelSet,
    pub core: MorphCore,
    pub perm: ChannelPermutation,
    pub padding: Padding,
    pub config: TrainConfig,
}

impl ParityTask {
    /// Build the default task deterministically from one seed.
    ///
    /// Kernels are positive (smoothing), so clean templates pass through
    /// while morphed rows, which look like broadband noise to a local
    /// averaging filter, lose their class signal.
    pub fn default_task(seed: u64) -> Result<Self> {
        let base = SeededRng::new(seed);
        let mut data_rng = base.derive(1);
        let dataset = gen_synthetic(4, 40, 1, 8, &mut data_rng)?;
        let mut kernel_rng = base.derive(2);
        let p = 5;
        let weights: Vec<f64> = (0..2 * p * p)
            .map(|_| kernel_rng.uniform_in(0.3, 1.0))
            .collect();
        let kernels = KernelSet::new(1, 2, p, weights)?;
        let mut core_rng = base.derive(3);
        let core = MorphCore::generate(64, 1, &mut core_rng, DEFAULT_COND_MAX)?;
        let perm = ChannelPermutation::from_order(vec![1, 0])?;
        Ok(Self {
            dataset,
            kernels,
            core,
            perm,
            padding: Padding::Valid,
            config: TrainConfig::with_seed(seed),
        })
    }

    pub fn run(&self) -> Result<ParityOutcome> {
        parity_experiment(
            &self.dataset,
            &self.kernels,
            &self.core,
            &self.perm,
            self.padding,
            &self.config,
        )
    }
}
