//! Shared fixtures for the criterion benchmarks.

use fhdnn_core::rng::CounterRng;
use fhdnn_core::*;

pub fn mid_layer() -> (Tensor3, DenseFilterBank, ClusteredLayer) {
    let spec = ConvLayerSpec {
        in_channels: 16,
        out_channels: 32,
        kernel: 3,
        stride: 1,
        padding: 1,
        in_height: 16,
        in_width: 16,
    };
    let mut rng = CounterRng::new(1, 0);
    let input = Tensor3::random(16, 16, 16, &mut rng);
    let bank = DenseFilterBank::random(spec, &mut rng).unwrap();
    let layer = share_patterns(&bank, 16, 32).unwrap();
    (input, bank, layer)
}

pub fn feature_vector(f: usize) -> Vec<f32> {
    let mut rng = CounterRng::new(2, 0);
    (0..f).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect()
}

pub fn trained_memory(n: usize, d: usize) -> (ClassMemory, CrpSeedBlock, HdcConfig) {
    let cfg = HdcConfig::new(64, d, n, 7);
    let block = CrpSeedBlock::from_seed(cfg.seed);
    let mut mem = ClassMemory::new(n, d);
    let mut rng = CounterRng::new(3, 0);
    let samples: Vec<(Vec<f32>, usize)> = (0..n * 5)
        .map(|i| {
            let x: Vec<f32> = (0..64).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
            (x, i % n)
        })
        .collect();
    fsl_train_single_pass(
        samples.iter().map(|(x, l)| (x.as_slice(), *l)),
        &mut mem,
        &block,
        &cfg,
    )
    .unwrap();
    (mem, block, cfg)
}
