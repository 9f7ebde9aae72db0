// Scratch parameter scan for the default parity task. Not shipped; removed
// once the defaults are frozen.

use mole_core::augconv::ChannelPermutation;
use mole_core::d2r::{KernelSet, Padding};
use mole_core::linalg::DEFAULT_COND_MAX;
use mole_core::morphing::MorphCore;
use mole_core::rng::SeededRng;
use mole_core::toytrain::*;

fn gen_with_amp(
    classes: usize,
    per_class: usize,
    m: usize,
    amp: f64,
    rng: &mut SeededRng,
) -> SyntheticDataset {
    // Rebuild templates like toytrain::class_template but with adjustable
    // blob amplitude, noise fixed at 0.1.
    let mf = m as f64;
    let sigma = mf / 5.0;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for k in 0..classes {
        let angle = std::f64::consts::TAU * k as f64 / classes as f64;
        let br = mf / 2.0 + (mf / 4.0) * angle.cos();
        let bc = mf / 2.0 + (mf / 4.0) * angle.sin();
        let mut tmpl = Vec::with_capacity(m * m);
        for r in 0..m {
            for c in 0..m {
                let (rf, cf) = (r as f64, c as f64);
                let base = 0.45 + 0.2 * (std::f64::consts::TAU * (rf + cf) / (2.0 * mf)).sin();
                let d2 = (rf - br) * (rf - br) + (cf - bc) * (cf - bc);
                tmpl.push(base + amp * (-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
        for _ in 0..per_class {
            let data: Vec<f64> = tmpl.iter().map(|&v| v + 0.1 * rng.normal()).collect();
            images.push(mole_core::d2r::ImageTensor::new(1, m, data).unwrap());
            labels.push(k);
        }
    }
    SyntheticDataset {
        images,
        labels,
        classes,
    }
}

fn main() {
    let m = 8;
    for &classes in &[3usize, 4] {
        for &beta in &[1usize, 2] {
            for &p in &[5usize, 6] {
                for &amp in &[0.12, 0.16, 0.20, 0.25, 0.35] {
                    let seed = 2026u64;
                    let base = SeededRng::new(seed);
                    let mut data_rng = base.derive(1);
                    let ds = gen_with_amp(classes, 50, m, amp, &mut data_rng);
                    let mut kernel_rng = base.derive(2);
                    let weights: Vec<f64> = (0..beta * p * p)
                        .map(|_| kernel_rng.uniform_in(0.3, 1.0))
                        .collect();
                    let kernels = KernelSet::new(1, beta, p, weights).unwrap();
                    let mut core_rng = base.derive(3);
                    let core =
                        MorphCore::generate(m * m, 1, &mut core_rng, DEFAULT_COND_MAX).unwrap();
                    let perm = if beta > 1 {
                        ChannelPermutation::from_order(vec![1, 0]).unwrap()
                    } else {
                        ChannelPermutation::identity(1)
                    };
                    let config = TrainConfig::with_seed(seed);
                    let out = parity_experiment(
                        &ds,
                        &kernels,
                        &core,
                        &perm,
                        Padding::Valid,
                        &config,
                    )
                    .unwrap();
                    println!(
                        "classes={classes} beta={beta} p={p} amp={amp:.2}: clean={:.3} aug={:.3} plainc={:.3} gap={:.3}",
                        out.acc_clean,
                        out.acc_morphed_augconv,
                        out.acc_morphed_plainc,
                        out.acc_morphed_augconv - out.acc_morphed_plainc
                    );
                }
            }
        }
    }
}
