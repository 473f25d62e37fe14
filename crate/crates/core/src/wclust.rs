//! Per-filter weight clustering, cross-filter pattern sharing, the
//! accumulate-then-multiply clustered convolution executor, and the
//! operation/parameter cost accounting.
//!
//! A filter's scalar weights are clustered into at most 16 centroids
//! ("average weight clustering"); the per-position 4-bit cluster-index map
//! can be shared by a whole run of output channels so the per-cluster input
//! accumulations are computed once and reused by every member channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ConvLayerSpec, DenseFilterBank, OpCounters, Tensor3};

/// Maximum centroid count: a 4-bit index budget.
pub const MAX_GROUPS: usize = 16;

/// Operation and parameter counts for one layer configuration.
///
/// `bytes_params` assumes 4-bit index entries and 16-bit weight/centroid
/// values, so it may land on half-byte boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub multiplies: u64,
    pub adds: u64,
    /// 4-bit cluster-index entries stored.
    pub index_params: u64,
    /// Weight values stored (dense weights or clustered centroids).
    pub centroid_params: u64,
    /// `index_params * 0.5 + centroid_params * 2`.
    pub bytes_params: f64,
}

impl CostRecord {
    pub fn ops(&self) -> u64 {
        self.multiplies + self.adds
    }
}

/// One filter compressed to `<= 16` centroids plus a per-position index map.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredFilter {
    /// Cluster index per `(ky, kx, in_channel)` position.
    pub index_map: Vec<u8>,
    /// One centroid per effective cluster; every index below
    /// `centroids.len()` occurs in `index_map`.
    pub centroids: Vec<f32>,
}

impl ClusteredFilter {
    pub fn group_count(&self) -> usize {
        self.centroids.len()
    }

    /// Per-position reconstruction: the assigned centroid values.
    pub fn expand(&self) -> Vec<f32> {
        self.index_map
            .iter()
            .map(|&i| self.centroids[i as usize])
            .collect()
    }

    /// Within-cluster squared reconstruction error against `weights`.
    pub fn wcss(&self, weights: &[f32]) -> f64 {
        weights
            .iter()
            .zip(&self.index_map)
            .map(|(&w, &i)| {
                let d = w as f64 - self.centroids[i as usize] as f64;
                d * d
            })
            .sum()
    }
}

/// A run of output channels sharing one cluster-index map.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternGroup {
    /// Shared cluster index per `(ky, kx, in_channel)` position.
    pub index_map: Vec<u8>,
    pub member_channels: Vec<usize>,
    /// `g` centroid values per member, padded with zeros past the effective
    /// cluster count so every member carries a full 16-entry-style table.
    pub per_channel_centroids: Vec<Vec<f32>>,
}

/// A convolution layer in clustered form.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredLayer {
    pub spec: ConvLayerSpec,
    /// Centroid slots per member channel (the configured G, `<= 16`).
    pub g: usize,
    pub groups: Vec<PatternGroup>,
}

impl ClusteredLayer {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.g == 0 || self.g > MAX_GROUPS {
            return Err(Error::Validation(format!("G must be in [1, 16], got {}", self.g)));
        }
        let positions = self.spec.positions();
        let mut seen = vec![false; self.spec.out_channels];
        for (gi, group) in self.groups.iter().enumerate() {
            if group.index_map.len() != positions {
                return Err(Error::Integrity(format!(
                    "group {gi}: index map has {} entries, layer has {positions} positions",
                    group.index_map.len()
                )));
            }
            if let Some(&bad) = group.index_map.iter().find(|&&i| i as usize >= self.g) {
                return Err(Error::Integrity(format!(
                    "group {gi}: index {bad} references cluster >= G={}",
                    self.g
                )));
            }
            if group.per_channel_centroids.len() != group.member_channels.len() {
                return Err(Error::Integrity(format!(
                    "group {gi}: {} centroid tables for {} members",
                    group.per_channel_centroids.len(),
                    group.member_channels.len()
                )));
            }
            for table in &group.per_channel_centroids {
                if table.len() != self.g {
                    return Err(Error::Integrity(format!(
                        "group {gi}: centroid table has {} entries, expected G={}",
                        table.len(),
                        self.g
                    )));
                }
            }
            for &m in &group.member_channels {
                if m >= seen.len() || seen[m] {
                    return Err(Error::Integrity(format!(
                        "group {gi}: channel {m} missing or assigned twice"
                    )));
                }
                seen[m] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::Integrity("groups do not cover all output channels".into()));
        }
        Ok(())
    }
}

/// Exact 1-D k-means over a filter's scalar weights.
///
/// Duplicate values collapse first, then a dynamic program over the sorted
/// distinct values finds the partition into `min(G, distinct)` contiguous
/// intervals with minimum within-cluster squared error. Centroids are the
/// interval means ("average value"), listed in ascending order, and every
/// weight is assigned to its interval — which at the optimum is also its
/// nearest centroid. Deterministic, no RNG.
pub fn cluster_filter(weights: &[f32], g: usize) -> Result<ClusteredFilter> {
    if weights.is_empty() {
        return Err(Error::Validation("cannot cluster an empty weight slice".into()));
    }
    if g == 0 || g > MAX_GROUPS {
        return Err(Error::Validation(format!("G must be in [1, 16], got {g}")));
    }
    let n = weights.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));

    // Collapse duplicates into (value, count) runs; remember each original
    // position's distinct-value index.
    let mut values: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut pos_to_distinct = vec![0usize; n];
    for &p in &order {
        let w = weights[p];
        if values.last().is_none_or(|&v| v != w as f64) {
            values.push(w as f64);
            counts.push(0.0);
        }
        counts[values.len() - 1] += 1.0;
        pos_to_distinct[p] = values.len() - 1;
    }
    let m = values.len();
    let k = g.min(m);

    // Weighted prefix sums for O(1) interval SSE.
    let mut pw = vec![0.0f64; m + 1];
    let mut pwx = vec![0.0f64; m + 1];
    let mut pwx2 = vec![0.0f64; m + 1];
    for i in 0..m {
        pw[i + 1] = pw[i] + counts[i];
        pwx[i + 1] = pwx[i] + counts[i] * values[i];
        pwx2[i + 1] = pwx2[i] + counts[i] * values[i] * values[i];
    }
    let sse = |a: usize, b: usize| -> f64 {
        let w = pw[b] - pw[a];
        let s = pwx[b] - pwx[a];
        let s2 = pwx2[b] - pwx2[a];
        (s2 - s * s / w).max(0.0)
    };

    // dp[j][i]: minimum WCSS splitting the first i distinct values into j
    // intervals. Ties break toward the earliest split for determinism.
    let mut dp = vec![vec![f64::INFINITY; m + 1]; k + 1];
    let mut split = vec![vec![0usize; m + 1]; k + 1];
    for i in 1..=m {
        dp[1][i] = sse(0, i);
    }
    for j in 2..=k {
        for i in j..=m {
            for t in (j - 1)..i {
                let c = dp[j - 1][t] + sse(t, i);
                if c < dp[j][i] {
                    dp[j][i] = c;
                    split[j][i] = t;
                }
            }
        }
    }

    // Recover interval boundaries and map distinct values to clusters.
    let mut bounds = vec![m; k + 1];
    for j in (1..=k).rev() {
        bounds[j - 1] = split[j][bounds[j]];
    }
    let mut distinct_to_cluster = vec![0u8; m];
    let mut centroids = Vec::with_capacity(k);
    for j in 0..k {
        let (a, b) = (bounds[j], bounds[j + 1]);
        centroids.push(((pwx[b] - pwx[a]) / (pw[b] - pw[a])) as f32);
        for item in distinct_to_cluster.iter_mut().take(b).skip(a) {
            *item = j as u8;
        }
    }
    let index_map = pos_to_distinct
        .iter()
        .map(|&d| distinct_to_cluster[d])
        .collect();
    Ok(ClusteredFilter { index_map, centroids })
}

/// Cluster a whole bank with one shared index map per run of `group_size`
/// consecutive output channels.
///
/// The shared map is fit on the per-position mean weight across the run's
/// members; each member's centroids are then refit as the mean of its own
/// weights within each index class. `group_size >= out_channels` collapses
/// to a single fully shared group; the last run may be smaller when
/// `group_size` does not divide the channel count.
pub fn share_patterns(bank: &DenseFilterBank, g: usize, group_size: usize) -> Result<ClusteredLayer> {
    if group_size == 0 {
        return Err(Error::Validation("group_size must be >= 1".into()));
    }
    if g == 0 || g > MAX_GROUPS {
        return Err(Error::Validation(format!("G must be in [1, 16], got {g}")));
    }
    let spec = bank.spec;
    let positions = spec.positions();
    let mut groups = Vec::new();
    let mut start = 0;
    while start < spec.out_channels {
        let end = (start + group_size).min(spec.out_channels);
        let members: Vec<usize> = (start..end).collect();

        let mut means = vec![0.0f64; positions];
        for &oc in &members {
            for (p, &w) in bank.channel_slice(oc).iter().enumerate() {
                means[p] += w as f64;
            }
        }
        let inv = 1.0 / members.len() as f64;
        let means: Vec<f32> = means.iter().map(|&s| (s * inv) as f32).collect();
        let shared = cluster_filter(&means, g)?;

        let mut per_channel_centroids = Vec::with_capacity(members.len());
        for &oc in &members {
            let slice = bank.channel_slice(oc);
            let mut sums = vec![0.0f64; shared.group_count()];
            let mut counts = vec![0.0f64; shared.group_count()];
            for (p, &idx) in shared.index_map.iter().enumerate() {
                sums[idx as usize] += slice[p] as f64;
                counts[idx as usize] += 1.0;
            }
            let mut table = vec![0.0f32; g];
            for (gi, slot) in table.iter_mut().enumerate().take(shared.group_count()) {
                *slot = (sums[gi] / counts[gi]) as f32;
            }
            per_channel_centroids.push(table);
        }
        groups.push(PatternGroup {
            index_map: shared.index_map.clone(),
            member_channels: members,
            per_channel_centroids,
        });
        start = end;
    }
    let layer = ClusteredLayer { spec, g, groups };
    layer.validate()?;
    Ok(layer)
}

/// Accumulate-then-multiply executor: per output position and pattern group
/// the per-cluster input sums are built once, then each member channel is a
/// `G`-term dot product of its centroid table against those sums.
pub fn clustered_conv2d(input: &Tensor3, layer: &ClusteredLayer) -> Result<Tensor3> {
    let mut counters = OpCounters::default();
    clustered_conv2d_counted(input, layer, &mut counters)
}

pub fn clustered_conv2d_counted(
    input: &Tensor3,
    layer: &ClusteredLayer,
    counters: &mut OpCounters,
) -> Result<Tensor3> {
    layer.validate()?;
    let spec = &layer.spec;
    if input.channels != spec.in_channels {
        return Err(Error::Shape {
            axis: "channels",
            expected: spec.in_channels,
            actual: input.channels,
        });
    }
    if input.height != spec.in_height {
        return Err(Error::Shape {
            axis: "height",
            expected: spec.in_height,
            actual: input.height,
        });
    }
    if input.width != spec.in_width {
        return Err(Error::Shape {
            axis: "width",
            expected: spec.in_width,
            actual: input.width,
        });
    }
    let (out_h, out_w) = (spec.out_height(), spec.out_width());
    let mut out = Tensor3::zeros(out_h, out_w, spec.out_channels);
    let mut sums = vec![0.0f64; layer.g];
    for oy in 0..out_h {
        for ox in 0..out_w {
            for group in &layer.groups {
                sums.iter_mut().for_each(|s| *s = 0.0);
                let mut pos = 0;
                for ky in 0..spec.kernel {
                    for kx in 0..spec.kernel {
                        let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                        let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                        let in_bounds = iy >= 0
                            && ix >= 0
                            && (iy as usize) < input.height
                            && (ix as usize) < input.width;
                        for ci in 0..spec.in_channels {
                            let x = if in_bounds {
                                input.at(iy as usize, ix as usize, ci) as f64
                            } else {
                                0.0
                            };
                            sums[group.index_map[pos] as usize] += x;
                            counters.adds += 1;
                            pos += 1;
                        }
                    }
                }
                for (table, &oc) in group.per_channel_centroids.iter().zip(&group.member_channels) {
                    let mut acc = 0.0f64;
                    for (gi, &c) in table.iter().enumerate() {
                        acc += c as f64 * sums[gi];
                        counters.multiplies += 1;
                        counters.adds += 1;
                    }
                    out.set(oy, ox, oc, acc as f32);
                }
            }
        }
    }
    Ok(out)
}

/// Closed-form cost of a clustered layer. Accumulation is paid once per
/// pattern group; every member channel then pays `G` multiplies and `G`
/// centroid-sum adds per output pixel.
pub fn clustered_cost(spec: &ConvLayerSpec, g: usize, group_size: usize) -> Result<CostRecord> {
    spec.validate()?;
    if g == 0 || g > MAX_GROUPS {
        return Err(Error::Validation(format!("G must be in [1, 16], got {g}")));
    }
    if group_size == 0 {
        return Err(Error::Validation("group_size must be >= 1".into()));
    }
    let group_count = spec.out_channels.div_ceil(group_size) as u64;
    let positions = spec.positions() as u64;
    let pixels = (spec.out_height() * spec.out_width()) as u64;
    let cout = spec.out_channels as u64;
    let g = g as u64;
    let index_params = positions * group_count;
    let centroid_params = g * cout;
    Ok(CostRecord {
        multiplies: g * cout * pixels,
        adds: positions * pixels * group_count + g * cout * pixels,
        index_params,
        centroid_params,
        bytes_params: index_params as f64 * 0.5 + centroid_params as f64 * 2.0,
    })
}

/// Reconstruct the dense filter bank a clustered layer represents.
pub fn expand(layer: &ClusteredLayer) -> Result<DenseFilterBank> {
    layer.validate()?;
    let spec = layer.spec;
    let positions = spec.positions();
    let mut weights = vec![0.0f32; spec.weight_count()];
    for group in &layer.groups {
        for (table, &oc) in group.per_channel_centroids.iter().zip(&group.member_channels) {
            for (p, &idx) in group.index_map.iter().enumerate() {
                weights[oc * positions + p] = table[idx as usize];
            }
        }
    }
    DenseFilterBank::new(spec, weights)
}
