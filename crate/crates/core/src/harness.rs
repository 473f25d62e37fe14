//! Few-shot episode construction, the kNN-L1 baseline, synthetic benchmark
//! data, frozen-feature extraction through a clustered model, and episode
//! sweeps with mean/stderr reporting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdc::{
    classify, fsl_train_single_pass, ClassMemory, CrpSeedBlock, HdcConfig, UpdateRule,
};
use crate::rng::{streams, CounterRng};
use crate::tensor::{global_avg_pool, max_pool2, relu, Tensor3};
use crate::wclust::{clustered_conv2d, ClusteredLayer};

/// A flat labeled feature set: one `dim`-length row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub dim: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl LabeledFeatures {
    pub fn new(dim: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(Error::Shape {
                axis: "features",
                expected: dim * labels.len(),
                actual: features.len(),
            });
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        let mut classes: Vec<u32> = self.labels.clone();
        classes.sort_unstable();
        classes.dedup();
        classes
    }
}

/// One N-way K-shot trial. Support and query sets carry episode-local labels
/// in `[0, way)`; `class_ids[local]` is the original dataset label.
#[derive(Debug, Clone)]
pub struct Episode {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub seed: u64,
    pub class_ids: Vec<u32>,
    pub support: LabeledFeatures,
    pub queries: LabeledFeatures,
}

/// Per-episode accuracy/cost record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode: u64,
    pub seed: u64,
    pub way: usize,
    pub shot: usize,
    pub d: usize,
    pub infer_bits: u8,
    pub hdc_accuracy: f64,
    pub knn_accuracy: f64,
    /// Row-major `way x way` counts, true class by predicted class.
    pub confusion: Vec<u32>,
}

/// Gaussian blobs around unit-norm random class directions; the desk-scale
/// stand-in for frozen CNN features.
pub fn make_synthetic_dataset(
    classes: usize,
    per_class: usize,
    f: usize,
    spread: f64,
    seed: u64,
) -> LabeledFeatures {
    let mut means_rng = CounterRng::new(seed, streams::DATASET_MEANS);
    let mut noise_rng = CounterRng::new(seed, streams::DATASET_NOISE);
    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut m: Vec<f64> = (0..f).map(|_| means_rng.next_gaussian()).collect();
        let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        m.iter_mut().for_each(|v| *v /= norm);
        means.push(m);
    }
    let mut features = Vec::with_capacity(classes * per_class * f);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                features.push((m + spread * noise_rng.next_gaussian()) as f32);
            }
            labels.push(c as u32);
        }
    }
    LabeledFeatures {
        dim: f,
        features,
        labels,
    }
}

/// Draw an N-way K-shot episode: classes and samples without replacement,
/// deterministic per seed. Support and query sets are disjoint by
/// construction and stored class-major.
pub fn sample_episode(
    dataset: &LabeledFeatures,
    way: usize,
    shot: usize,
    query: usize,
    seed: u64,
) -> Result<Episode> {
    let classes = dataset.classes();
    if classes.len() < way {
        return Err(Error::Validation(format!(
            "dataset has {} classes, episode needs {way}",
            classes.len()
        )));
    }
    let mut class_rng = CounterRng::new(seed, streams::EPISODE_CLASSES);
    let picked = class_rng.sample_distinct(classes.len(), way);
    let class_ids: Vec<u32> = picked.iter().map(|&i| classes[i]).collect();

    let mut sample_rng = CounterRng::new(seed, streams::EPISODE_SAMPLES);
    let mut support_feats = Vec::with_capacity(way * shot * dataset.dim);
    let mut support_labels = Vec::with_capacity(way * shot);
    let mut query_feats = Vec::with_capacity(way * query * dataset.dim);
    let mut query_labels = Vec::with_capacity(way * query);
    for (local, &class) in class_ids.iter().enumerate() {
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels()[i] == class)
            .collect();
        if members.len() < shot + query {
            return Err(Error::InsufficientSamples {
                class,
                available: members.len(),
                needed: shot + query,
            });
        }
        let picks = sample_rng.sample_distinct(members.len(), shot + query);
        for (j, &p) in picks.iter().enumerate() {
            let row = dataset.feature(members[p]);
            if j < shot {
                support_feats.extend_from_slice(row);
                support_labels.push(local as u32);
            } else {
                query_feats.extend_from_slice(row);
                query_labels.push(local as u32);
            }
        }
    }
    Ok(Episode {
        way,
        shot,
        query,
        seed,
        class_ids,
        support: LabeledFeatures::new(dataset.dim, support_feats, support_labels)?,
        queries: LabeledFeatures::new(dataset.dim, query_feats, query_labels)?,
    })
}

/// L1 distance between raw feature rows, in f64.
fn l1_feature_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum()
}

/// k-nearest-neighbor baseline under L1 in raw feature space. Neighbor ties
/// break toward the earlier support row (class-major storage, so toward the
/// lower class); vote ties break toward the lowest class id.
pub fn knn_l1(episode: &Episode, k: usize) -> Result<f64> {
    let n_support = episode.support.len();
    if k == 0 || k > n_support {
        return Err(Error::Validation(format!(
            "k={k} outside [1, {n_support}]"
        )));
    }
    let mut correct = 0usize;
    for qi in 0..episode.queries.len() {
        let q = episode.queries.feature(qi);
        let mut order: Vec<usize> = (0..n_support).collect();
        let dists: Vec<f64> = (0..n_support)
            .map(|si| l1_feature_distance(q, episode.support.feature(si)))
            .collect();
        order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
        let mut votes = vec![0usize; episode.way];
        for &si in order.iter().take(k) {
            votes[episode.support.labels()[si] as usize] += 1;
        }
        let mut winner = 0usize;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[winner] {
                winner = c;
            }
        }
        if winner as u32 == episode.queries.labels()[qi] {
            correct += 1;
        }
    }
    Ok(correct as f64 / episode.queries.len() as f64)
}

/// Train a fresh class memory on the episode's support set, classify its
/// queries, and compare against 1-nearest-neighbor L1 on the same episode.
///
/// Support samples are fed to the single-pass learner in interleaved order
/// (first shot of every class, then the second, ...). Integer prototypes
/// grow with every absorbed sample and raw-L1 distance grows with prototype
/// scale, so feeding a class's shots back to back would make untouched
/// all-zero classes look closer than the class being trained.
pub fn run_pipeline(episode: &Episode, cfg: &HdcConfig) -> Result<EpisodeReport> {
    cfg.validate()?;
    if episode.support.dim != cfg.f {
        return Err(Error::Shape {
            axis: "feature-dim",
            expected: cfg.f,
            actual: episode.support.dim,
        });
    }
    if episode.way != cfg.n {
        return Err(Error::Shape {
            axis: "classes",
            expected: cfg.n,
            actual: episode.way,
        });
    }
    for i in 0..episode.support.len() {
        if episode.support.feature(i).iter().all(|&v| v == 0.0) {
            log::warn!("support sample {i} is all-zero; it encodes to the all-ones hypervector");
        }
    }
    let block = CrpSeedBlock::from_seed(cfg.seed);
    let mut mem = ClassMemory::new(cfg.n, cfg.d);
    // Storage is class-major; train shot-major.
    let support_iter = (0..episode.shot).flat_map(|s| {
        (0..episode.way).map(move |c| c * episode.shot + s)
    });
    let support_iter = support_iter
        .map(|i| (episode.support.feature(i), episode.support.labels()[i] as usize));
    fsl_train_single_pass(support_iter, &mut mem, &block, cfg)?;

    let mut confusion = vec![0u32; episode.way * episode.way];
    let mut correct = 0usize;
    for qi in 0..episode.queries.len() {
        let x = episode.queries.feature(qi);
        if x.iter().all(|&v| v == 0.0) {
            log::warn!("query sample {qi} is all-zero; it encodes to the all-ones hypervector");
        }
        let h = crate::hdc::encode(x, &block, cfg.d)?;
        let (predicted, _) = classify(&h, &mem, cfg.infer_bits)?;
        let truth = episode.queries.labels()[qi] as usize;
        confusion[truth * episode.way + predicted] += 1;
        if predicted == truth {
            correct += 1;
        }
    }
    Ok(EpisodeReport {
        episode: 0,
        seed: episode.seed,
        way: episode.way,
        shot: episode.shot,
        d: cfg.d,
        infer_bits: cfg.infer_bits,
        hdc_accuracy: correct as f64 / episode.queries.len() as f64,
        knn_accuracy: knn_l1(episode, 1)?,
        confusion,
    })
}

/// Run a frozen clustered feature extractor: per layer clustered convolution
/// then ReLU, with a 2x2 max pool inserted wherever the next layer's input
/// is exactly half the current output, and a global average pool at the end.
pub fn extract_features(
    images: &[Tensor3],
    labels: &[u32],
    model: &[ClusteredLayer],
) -> Result<LabeledFeatures> {
    if images.len() != labels.len() {
        return Err(Error::Shape {
            axis: "labels",
            expected: images.len(),
            actual: labels.len(),
        });
    }
    if model.is_empty() {
        return Err(Error::Validation("model has no layers".into()));
    }
    let feat_dim = model.last().unwrap().spec.out_channels;
    let mut features = Vec::with_capacity(images.len() * feat_dim);
    for image in images {
        let mut x = image.clone();
        for (li, layer) in model.iter().enumerate() {
            let spec = &layer.spec;
            if x.height != spec.in_height || x.width != spec.in_width
                || x.channels != spec.in_channels
            {
                return Err(Error::Validation(format!(
                    "layer {li}: expects {}x{}x{} input, got {}x{}x{}",
                    spec.in_height, spec.in_width, spec.in_channels, x.height, x.width, x.channels
                )));
            }
            x = relu(&clustered_conv2d(&x, layer)?);
            if let Some(next) = model.get(li + 1) {
                let ns = &next.spec;
                if ns.in_height == x.height && ns.in_width == x.width
                    && ns.in_channels == x.channels
                {
                    // direct chain
                } else if ns.in_height * 2 == x.height && ns.in_width * 2 == x.width
                    && ns.in_channels == x.channels
                {
                    x = max_pool2(&x);
                } else {
                    return Err(Error::Validation(format!(
                        "layer {li}: output {}x{}x{} feeds neither layer {} nor its 2x2 pool",
                        x.height,
                        x.width,
                        x.channels,
                        li + 1
                    )));
                }
            }
        }
        features.extend(global_avg_pool(&x));
    }
    LabeledFeatures::new(feat_dim, features, labels.to_vec())
}

/// Inputs of one seeded episode sweep over the synthetic benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepParams {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub episodes: usize,
    pub f: usize,
    pub d: usize,
    pub infer_bits: u8,
    /// Dataset classes; must be >= way.
    pub classes: usize,
    /// Dataset samples per class; must be >= shot + query.
    pub per_class: usize,
    pub spread: f64,
    pub seed: u64,
    pub update_rule: UpdateRule,
}

impl SweepParams {
    pub fn validate(&self) -> Result<()> {
        self.hdc_config(self.seed).validate()?;
        if self.classes < self.way {
            return Err(Error::Validation(format!(
                "dataset classes {} < way {}",
                self.classes, self.way
            )));
        }
        if self.per_class < self.shot + self.query {
            return Err(Error::Validation(format!(
                "per_class {} < shot + query = {}",
                self.per_class,
                self.shot + self.query
            )));
        }
        if self.episodes == 0 {
            return Err(Error::Validation("episodes must be >= 1".into()));
        }
        Ok(())
    }

    fn hdc_config(&self, seed: u64) -> HdcConfig {
        HdcConfig {
            f: self.f,
            d: self.d,
            n: self.way,
            train_bits: 16,
            infer_bits: self.infer_bits,
            seed,
            update_rule: self.update_rule,
        }
    }
}

/// Aggregate statistics over a sweep: mean and standard error of both
/// accuracies and of their paired difference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub episodes: usize,
    pub mean_hdc: f64,
    pub stderr_hdc: f64,
    pub mean_knn: f64,
    pub stderr_knn: f64,
    pub mean_diff: f64,
    pub stderr_diff: f64,
    pub params: SweepParams,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Seeded episodes over a shared synthetic dataset, run in parallel; reports
/// come back in episode order so output files are reproducible.
pub fn run_episode_sweep(params: &SweepParams) -> Result<(Vec<EpisodeReport>, SweepSummary)> {
    params.validate()?;
    let dataset = make_synthetic_dataset(
        params.classes,
        params.per_class,
        params.f,
        params.spread,
        params.seed,
    );
    let derive = CounterRng::new(params.seed, streams::EPISODE_DERIVE);
    let mut reports: Vec<EpisodeReport> = (0..params.episodes)
        .into_par_iter()
        .map(|i| {
            let ep_seed = derive.at(i as u64);
            let episode =
                sample_episode(&dataset, params.way, params.shot, params.query, ep_seed)?;
            let mut report = run_pipeline(&episode, &params.hdc_config(ep_seed))?;
            report.episode = i as u64;
            Ok(report)
        })
        .collect::<Result<_>>()?;
    reports.sort_by_key(|r| r.episode);

    let hdc: Vec<f64> = reports.iter().map(|r| r.hdc_accuracy).collect();
    let knn: Vec<f64> = reports.iter().map(|r| r.knn_accuracy).collect();
    let diff: Vec<f64> = hdc.iter().zip(&knn).map(|(h, k)| h - k).collect();
    let (mean_hdc, stderr_hdc) = mean_stderr(&hdc);
    let (mean_knn, stderr_knn) = mean_stderr(&knn);
    let (mean_diff, stderr_diff) = mean_stderr(&diff);
    Ok((
        reports,
        SweepSummary {
            episodes: params.episodes,
            mean_hdc,
            stderr_hdc,
            mean_knn,
            stderr_knn,
            mean_diff,
            stderr_diff,
            params: params.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseFilterBank;
    use crate::wclust::{expand, share_patterns};
    use crate::tensor::{dense_conv2d, ConvLayerSpec};

    fn base_params() -> SweepParams {
        SweepParams {
            way: 5,
            shot: 5,
            query: 5,
            episodes: 20,
            f: 64,
            d: 1024,
            infer_bits: 16,
            classes: 10,
            per_class: 20,
            spread: 0.2,
            seed: 7,
            update_rule: UpdateRule::PenalizeOnly,
        }
    }

    #[test]
    fn dataset_is_deterministic_and_point_mass_at_zero_spread() {
        let a = make_synthetic_dataset(4, 6, 16, 0.0, 3);
        let b = make_synthetic_dataset(4, 6, 16, 0.0, 3);
        assert_eq!(a, b);
        for c in 0..4 {
            let rows: Vec<&[f32]> = (0..a.len())
                .filter(|&i| a.labels()[i] == c)
                .map(|i| a.feature(i))
                .collect();
            for r in &rows[1..] {
                assert_eq!(*r, rows[0]);
            }
        }
    }

    #[test]
    fn episode_determinism_and_disjointness() {
        let data = make_synthetic_dataset(8, 12, 16, 0.3, 5);
        let a = sample_episode(&data, 4, 3, 2, 99).unwrap();
        let b = sample_episode(&data, 4, 3, 2, 99).unwrap();
        assert_eq!(a.support, b.support);
        assert_eq!(a.queries, b.queries);
        assert_eq!(a.class_ids, b.class_ids);
        assert_eq!(a.support.len(), 12);
        assert_eq!(a.queries.len(), 8);
        // Disjoint: no support row equals a query row (continuous features
        // collide only if the same sample was drawn twice).
        for si in 0..a.support.len() {
            for qi in 0..a.queries.len() {
                assert_ne!(a.support.feature(si), a.queries.feature(qi));
            }
        }
    }

    #[test]
    fn insufficient_samples_names_the_class() {
        let data = make_synthetic_dataset(3, 4, 8, 0.1, 1);
        match sample_episode(&data, 3, 3, 2, 0) {
            Err(Error::InsufficientSamples { class, available, needed }) => {
                assert!(class < 3);
                assert_eq!(available, 4);
                assert_eq!(needed, 5);
            }
            other => panic!("expected insufficient-samples error, got {other:?}"),
        }
    }

    #[test]
    fn class_coverage_chi_square_over_episodes() {
        let data = make_synthetic_dataset(10, 6, 16, 0.2, 11);
        let episodes = 20u64;
        let way = 5usize;
        let mut counts = vec![0f64; 10];
        let derive = CounterRng::new(123, streams::EPISODE_DERIVE);
        for i in 0..episodes {
            let ep = sample_episode(&data, way, 2, 2, derive.at(i)).unwrap();
            for &c in &ep.class_ids {
                counts[c as usize] += 1.0;
            }
        }
        let expected = (episodes * way as u64) as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&o| (o - expected) * (o - expected) / expected).sum();
        // df = 9; 27.9 is the 0.1% tail.
        assert!(chi2 < 27.9, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn knn_exact_match_and_tie_rule() {
        let support = LabeledFeatures::new(2, vec![0.0, 0.0, 2.0, 2.0], vec![0, 1]).unwrap();
        let queries = LabeledFeatures::new(2, vec![0.0, 0.0, 1.0, 1.0], vec![0, 0]).unwrap();
        let ep = Episode {
            way: 2,
            shot: 1,
            query: 1,
            seed: 0,
            class_ids: vec![0, 1],
            support,
            queries,
        };
        // First query sits on the class-0 support point; the second is
        // equidistant from both supports and the lower class id wins.
        assert_eq!(knn_l1(&ep, 1).unwrap(), 1.0);
        assert!(knn_l1(&ep, 3).is_err());
    }

    #[test]
    fn knn_matches_all_pairs_reference() {
        let data = make_synthetic_dataset(6, 10, 12, 0.5, 21);
        let ep = sample_episode(&data, 4, 4, 3, 9).unwrap();
        for k in [1usize, 3, 5] {
            let got = knn_l1(&ep, k).unwrap();
            // Independent all-pairs reimplementation.
            let mut correct = 0usize;
            for qi in 0..ep.queries.len() {
                let q = ep.queries.feature(qi);
                let mut pairs: Vec<(f64, usize, u32)> = (0..ep.support.len())
                    .map(|si| {
                        let d: f64 = q
                            .iter()
                            .zip(ep.support.feature(si))
                            .map(|(&a, &b)| (a as f64 - b as f64).abs())
                            .sum();
                        (d, si, ep.support.labels()[si])
                    })
                    .collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut votes = std::collections::BTreeMap::new();
                for (_, _, label) in pairs.iter().take(k) {
                    *votes.entry(*label).or_insert(0usize) += 1;
                }
                let max_count = votes.values().copied().max().unwrap();
                // Ascending iteration: first hit is the lowest class id.
                let winner = *votes.iter().find(|(_, &c)| c == max_count).unwrap().0;
                if winner == ep.queries.labels()[qi] {
                    correct += 1;
                }
            }
            assert_eq!(got, correct as f64 / ep.queries.len() as f64, "k={k}");
        }
    }

    #[test]
    fn separable_gaussians_are_perfect() {
        let params = SweepParams {
            spread: 0.001,
            episodes: 5,
            ..base_params()
        };
        let (reports, summary) = run_episode_sweep(&params).unwrap();
        for r in &reports {
            assert_eq!(r.hdc_accuracy, 1.0);
            assert_eq!(r.knn_accuracy, 1.0);
            let total: u32 = r.confusion.iter().sum();
            assert_eq!(total as usize, params.way * params.query);
        }
        assert_eq!(summary.mean_diff, 0.0);
    }

    #[test]
    fn point_mass_episode_is_perfect() {
        let data = make_synthetic_dataset(5, 8, 32, 0.0, 2);
        let ep = sample_episode(&data, 5, 3, 3, 4).unwrap();
        let cfg = HdcConfig::new(32, 1024, 5, 17);
        let report = run_pipeline(&ep, &cfg).unwrap();
        assert_eq!(report.hdc_accuracy, 1.0);
        assert_eq!(report.knn_accuracy, 1.0);
    }

    #[test]
    fn accuracy_non_decreasing_in_d_on_average() {
        let lo = SweepParams { d: 1024, infer_bits: 8, spread: 0.25, ..base_params() };
        let hi = SweepParams { d: 8192, infer_bits: 8, spread: 0.25, ..base_params() };
        let (_, s_lo) = run_episode_sweep(&lo).unwrap();
        let (_, s_hi) = run_episode_sweep(&hi).unwrap();
        assert!(
            s_hi.mean_hdc >= s_lo.mean_hdc,
            "D=8192 mean {} < D=1024 mean {}",
            s_hi.mean_hdc,
            s_lo.mean_hdc
        );
    }

    #[test]
    fn chance_level_at_extreme_spread() {
        let params = SweepParams {
            way: 10,
            shot: 2,
            query: 2,            // 20 queries per episode, 10 episodes = 200
            episodes: 10,
            classes: 10,
            per_class: 8,
            spread: 50.0,
            ..base_params()
        };
        let (_, summary) = run_episode_sweep(&params).unwrap();
        assert!((summary.mean_hdc - 0.1).abs() < 0.1, "hdc {}", summary.mean_hdc);
        assert!((summary.mean_knn - 0.1).abs() < 0.1, "knn {}", summary.mean_knn);
    }

    #[test]
    fn confusion_marginals_sum_to_query_totals() {
        let (reports, _) = run_episode_sweep(&SweepParams { episodes: 3, ..base_params() }).unwrap();
        for r in &reports {
            for truth in 0..r.way {
                let row: u32 = r.confusion[truth * r.way..(truth + 1) * r.way].iter().sum();
                assert_eq!(row as usize, 5, "episode {} class {truth}", r.episode);
            }
        }
    }

    fn extractor_model() -> Vec<ClusteredLayer> {
        let spec1 = ConvLayerSpec {
            in_channels: 1,
            out_channels: 4,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_height: 8,
            in_width: 8,
        };
        let spec2 = ConvLayerSpec {
            in_channels: 4,
            out_channels: 6,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_height: 4,
            in_width: 4,
        };
        let mut rng = CounterRng::new(9, 1);
        let bank1 = DenseFilterBank::random(spec1, &mut rng).unwrap();
        let bank2 = DenseFilterBank::random(spec2, &mut rng).unwrap();
        vec![
            share_patterns(&bank1, 8, 4).unwrap(),
            share_patterns(&bank2, 8, 6).unwrap(),
        ]
    }

    #[test]
    fn constant_image_single_layer_closed_form() {
        let spec = ConvLayerSpec {
            in_channels: 1,
            out_channels: 2,
            kernel: 3,
            stride: 1,
            padding: 0,
            in_height: 5,
            in_width: 5,
        };
        let c = 0.25f32;
        let bank = DenseFilterBank::new(spec, vec![c; spec.weight_count()]).unwrap();
        let model = vec![share_patterns(&bank, 1, 2).unwrap()];
        let v = 2.0f32;
        let image = Tensor3::new(5, 5, 1, vec![v; 25]).unwrap();
        let feats = extract_features(&[image], &[0], &model).unwrap();
        // Interior-only windows: every output pixel is c * 9 * v, positive,
        // so ReLU and average pooling preserve it.
        let want = c * 9.0 * v;
        for &f in feats.feature(0) {
            assert!((f - want).abs() < 1e-5);
        }
    }

    #[test]
    fn clustered_and_expanded_dense_extraction_agree() {
        let model = extractor_model();
        let mut rng = CounterRng::new(30, 0);
        for _ in 0..10 {
            let image = Tensor3::random(8, 8, 1, &mut rng);
            let clustered = extract_features(std::slice::from_ref(&image), &[0], &model).unwrap();

            // Dense path through the expanded banks, same layer recipe.
            let mut x = image;
            for (li, layer) in model.iter().enumerate() {
                x = relu(&dense_conv2d(&x, &expand(layer).unwrap()).unwrap());
                if li + 1 < model.len() {
                    x = max_pool2(&x);
                }
            }
            let dense: Vec<f32> = global_avg_pool(&x);
            let err = crate::tensor::max_rel_err(clustered.feature(0), &dense);
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn zero_image_gives_zero_features() {
        let model = extractor_model();
        let image = Tensor3::zeros(8, 8, 1);
        let feats = extract_features(&[image], &[3], &model).unwrap();
        assert!(feats.feature(0).iter().all(|&v| v == 0.0));
        assert_eq!(feats.labels(), &[3]);
    }

    #[test]
    fn dim_chain_mismatch_names_layer() {
        let model = extractor_model();
        let image = Tensor3::zeros(6, 6, 1);
        match extract_features(&[image], &[0], &model) {
            Err(Error::Validation(msg)) => assert!(msg.contains("layer 0"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
