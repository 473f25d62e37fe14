//! Hyperdimensional classifier and few-shot learner.
//!
//! Features are encoded into D-dimensional bipolar hypervectors by a cyclic
//! random projection: instead of storing the full F x D bipolar matrix, a
//! 256-element seed block is stored and matrix entries are generated on the
//! fly, row f being the unit cyclic shift of row f-1. Class prototypes are
//! 16-bit integer hypervectors trained in a single pass; inference is
//! minimum L1 distance against class prototypes quantized to 1-16 bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{streams, CounterRng};

/// Entries in the stored seed block.
pub const SEED_BLOCK_LEN: usize = 256;

/// Cyclic shift applied per row of the projection matrix.
pub const CRP_STRIDE: usize = 1;

/// Supported configuration ranges.
pub const F_RANGE: std::ops::RangeInclusive<usize> = 16..=1024;
pub const D_RANGE: std::ops::RangeInclusive<usize> = 1024..=8192;
pub const N_RANGE: std::ops::RangeInclusive<usize> = 2..=128;

/// What happens to the true class when the classifier mispredicts during
/// training: the mispredicted class is always penalized; reinforcement of
/// the true class is optional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateRule {
    PenalizeOnly,
    PenalizeAndReinforce,
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalize-only" => Ok(Self::PenalizeOnly),
            "penalize-reinforce" => Ok(Self::PenalizeAndReinforce),
            other => Err(Error::Validation(format!(
                "unknown update rule `{other}` (use penalize-only or penalize-reinforce)"
            ))),
        }
    }
}

/// Classifier configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdcConfig {
    /// Feature dimension.
    pub f: usize,
    /// Hypervector dimension.
    pub d: usize,
    /// Class count.
    pub n: usize,
    /// Training precision; fixed at 16.
    pub train_bits: u8,
    /// Inference precision of class hypervectors, 1-16.
    pub infer_bits: u8,
    pub seed: u64,
    pub update_rule: UpdateRule,
}

impl HdcConfig {
    pub fn new(f: usize, d: usize, n: usize, seed: u64) -> Self {
        Self {
            f,
            d,
            n,
            train_bits: 16,
            infer_bits: 16,
            seed,
            update_rule: UpdateRule::PenalizeOnly,
        }
    }

    /// Check the chip-supported ranges. Core operations work outside them;
    /// pipelines and the CLI refuse configurations a deployment could not run.
    pub fn validate(&self) -> Result<()> {
        if !F_RANGE.contains(&self.f) {
            return Err(Error::Validation(format!("F={} outside [16, 1024]", self.f)));
        }
        if !D_RANGE.contains(&self.d) {
            return Err(Error::Validation(format!("D={} outside [1024, 8192]", self.d)));
        }
        if !N_RANGE.contains(&self.n) {
            return Err(Error::Validation(format!("N={} outside [2, 128]", self.n)));
        }
        if self.train_bits != 16 {
            return Err(Error::Validation("train_bits is fixed at 16".into()));
        }
        if !(1..=16).contains(&self.infer_bits) {
            return Err(Error::Validation(format!(
                "infer_bits={} outside [1, 16]",
                self.infer_bits
            )));
        }
        Ok(())
    }
}

/// The 256-element bipolar working block of the cyclic encoder, plus the
/// seed that regenerates it and every later block.
///
/// The projection matrix is organized in column blocks of 256: block `k`
/// covers columns `[256k, 256k + 256)` and is backed by its own 256-element
/// bipolar vector, regenerated on the fly from the seed one block per
/// encoder cycle. Only one block is ever held, so the stored footprint
/// stays at 256 entries for any D. `values` caches block 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrpSeedBlock {
    values: Vec<i8>,
    pub seed: u64,
}

impl CrpSeedBlock {
    /// Deterministic block: entry `i` of column block `k` is +1 iff the low
    /// bit of draw `256k + i` of the `CRP_BLOCK` stream under `seed` is set.
    pub fn from_seed(seed: u64) -> Self {
        let rng = CounterRng::new(seed, streams::CRP_BLOCK);
        let values = (0..SEED_BLOCK_LEN)
            .map(|i| Self::bipolar_draw(&rng, i))
            .collect();
        Self { values, seed }
    }

    #[inline]
    fn bipolar_draw(rng: &CounterRng, i: usize) -> i8 {
        if rng.at(i as u64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Block 0 of the matrix (the block held at encoder start-up).
    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Entry `i` of column block `k`.
    #[inline]
    pub fn block_value(&self, k: usize, i: usize) -> i8 {
        if k == 0 {
            self.values[i]
        } else {
            Self::bipolar_draw(
                &CounterRng::new(self.seed, streams::CRP_BLOCK),
                k * SEED_BLOCK_LEN + i,
            )
        }
    }

    /// Materialize the first `d` columns' blocks contiguously (entry `i` of
    /// block `k` lands at `256k + i`).
    pub fn expand_blocks(&self, d: usize) -> Vec<i8> {
        let rng = CounterRng::new(self.seed, streams::CRP_BLOCK);
        let blocks = d.div_ceil(SEED_BLOCK_LEN);
        (0..blocks * SEED_BLOCK_LEN)
            .map(|i| Self::bipolar_draw(&rng, i))
            .collect()
    }
}

/// Projection-matrix entry `B[f][d]`, generated on the fly. With
/// `k = d / 256` and `c = d mod 256`:
///
/// ```text
/// B[f][d] = block_k[(c + f * CRP_STRIDE) mod 256]
/// ```
///
/// Row 0 of each column block is that block's vector; each following row is
/// the unit cyclic shift of the previous one, wrapping within the block
/// (`B[f + 1][d]` equals `B[f]` at the mod-256-aligned next column).
#[inline]
pub fn crp_matrix_entry(f: usize, d: usize, block: &CrpSeedBlock) -> i8 {
    let k = d / SEED_BLOCK_LEN;
    let c = d % SEED_BLOCK_LEN;
    block.block_value(k, (c + f * CRP_STRIDE) % SEED_BLOCK_LEN)
}

/// A D-dimensional integer hypervector. Freshly encoded vectors are bipolar;
/// class prototypes accumulate in the signed 16-bit range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypervector {
    pub values: Vec<i16>,
}

impl Hypervector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Encode a feature vector: `h[j] = sign(sum_f B[f][j] * x[f])` with
/// `sign(0) = +1`. Equals encoding against the explicitly materialized
/// matrix exactly (same summation order, f ascending).
pub fn encode(x: &[f32], block: &CrpSeedBlock, d: usize) -> Result<Hypervector> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("feature vector contains non-finite values".into()));
    }
    let values = encode_raw(x, block, d)
        .into_iter()
        .map(|acc| if acc >= 0.0 { 1i16 } else { -1i16 })
        .collect();
    Ok(Hypervector { values })
}

/// The raw projection before the sign nonlinearity, for ablation studies.
pub fn encode_raw(x: &[f32], block: &CrpSeedBlock, d: usize) -> Vec<f64> {
    let expanded = block.expand_blocks(d);
    (0..d)
        .map(|j| {
            let base = (j / SEED_BLOCK_LEN) * SEED_BLOCK_LEN;
            let col = j % SEED_BLOCK_LEN;
            let mut acc = 0.0f64;
            for (f, &xf) in x.iter().enumerate() {
                let entry = expanded[base + (col + f * CRP_STRIDE) % SEED_BLOCK_LEN];
                acc += entry as f64 * xf as f64;
            }
            acc
        })
        .collect()
}

/// Exact integer L1 distance between equal-length integer vectors.
pub fn l1_distance(a: &[i16], b: &[i16]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            axis: "dim",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs() as u64)
        .sum())
}

/// Quantize a 16-bit class hypervector to `bits` of precision.
///
/// 16 bits is the identity; 1 bit is the sign (zero maps to +1); otherwise
/// symmetric uniform quantization to integer codes in
/// `[-(2^(bits-1) - 1), 2^(bits-1) - 1]` scaled by the vector's max
/// magnitude. An all-zero vector quantizes to all zeros.
pub fn quantize(c: &[i16], bits: u8) -> Vec<i16> {
    match bits {
        16 => c.to_vec(),
        1 => c.iter().map(|&v| if v >= 0 { 1 } else { -1 }).collect(),
        2..=15 => {
            let levels = ((1u32 << (bits - 1)) - 1) as f64;
            let scale = c.iter().map(|&v| (v as i32).abs()).max().unwrap_or(0) as f64;
            if scale == 0.0 {
                return vec![0; c.len()];
            }
            c.iter()
                .map(|&v| (v as f64 / scale * levels).round() as i16)
                .collect()
        }
        _ => panic!("bits must be in [1, 16], got {bits}"),
    }
}

/// N class prototypes plus per-class sample counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMemory {
    n: usize,
    d: usize,
    rows: Vec<i16>,
    counters: Vec<u32>,
    saturation_events: u64,
}

impl ClassMemory {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            rows: vec![0; n * d],
            counters: vec![0; n],
            saturation_events: 0,
        }
    }

    pub fn from_parts(n: usize, d: usize, rows: Vec<i16>, counters: Vec<u32>) -> Result<Self> {
        if rows.len() != n * d {
            return Err(Error::Shape {
                axis: "rows",
                expected: n * d,
                actual: rows.len(),
            });
        }
        if counters.len() != n {
            return Err(Error::Shape {
                axis: "counters",
                expected: n,
                actual: counters.len(),
            });
        }
        Ok(Self {
            n,
            d,
            rows,
            counters,
            saturation_events: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn class_hv(&self, class: usize) -> &[i16] {
        &self.rows[class * self.d..(class + 1) * self.d]
    }

    pub fn counters(&self) -> &[u32] {
        &self.counters
    }

    pub fn rows(&self) -> &[i16] {
        &self.rows
    }

    /// Saturating-add events seen so far (clamps at the i16 bounds).
    pub fn saturation_events(&self) -> u64 {
        self.saturation_events
    }

    fn is_zero_class(&self, class: usize) -> bool {
        self.class_hv(class).iter().all(|&v| v == 0)
    }

    /// `row[class] += sign * h`, saturating at the 16-bit bounds.
    fn accumulate(&mut self, class: usize, h: &Hypervector, sign: i32) {
        let base = class * self.d;
        for (j, &hv) in h.values.iter().enumerate() {
            let cur = self.rows[base + j] as i32;
            let next = cur + sign * hv as i32;
            let clamped = next.clamp(i16::MIN as i32, i16::MAX as i32);
            if clamped != next {
                self.saturation_events += 1;
            }
            self.rows[base + j] = clamped as i16;
        }
    }
}

/// Minimum-L1 classification at the given inference precision. Returns the
/// winning class (ties break toward the lowest id) and the full distance
/// vector.
///
/// At 16 bits the bipolar query meets the raw prototypes directly; at 1 bit
/// both sides are bipolar and the distance is twice the Hamming distance.
/// At intermediate precisions the query is scaled to the quantized code
/// range (`+-levels`), which makes the accumulated absolute differences a
/// constant minus the query/prototype dot product — without the scaling,
/// the per-class code mass would swamp the similarity term.
pub fn classify(h: &Hypervector, mem: &ClassMemory, infer_bits: u8) -> Result<(usize, Vec<u64>)> {
    if h.dim() != mem.d {
        return Err(Error::Shape {
            axis: "dim",
            expected: mem.d,
            actual: h.dim(),
        });
    }
    let query: std::borrow::Cow<[i16]> = match infer_bits {
        1 | 16 => std::borrow::Cow::Borrowed(&h.values),
        2..=15 => {
            let levels = ((1i32 << (infer_bits - 1)) - 1) as i16;
            std::borrow::Cow::Owned(h.values.iter().map(|&v| v * levels).collect())
        }
        _ => {
            return Err(Error::Validation(format!(
                "infer_bits={infer_bits} outside [1, 16]"
            )))
        }
    };
    let mut distances = Vec::with_capacity(mem.n);
    for class in 0..mem.n {
        let row = mem.class_hv(class);
        let dist = if infer_bits == 16 {
            l1_distance(&query, row)?
        } else {
            l1_distance(&query, &quantize(row, infer_bits))?
        };
        distances.push(dist);
    }
    let mut best = 0;
    for (class, &d) in distances.iter().enumerate() {
        if d < distances[best] {
            best = class;
        }
    }
    Ok((best, distances))
}

/// Outcome counters of one training pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub seen: u64,
    pub bootstraps: u64,
    pub correct: u64,
    pub mispredictions: u64,
}

/// Single-pass few-shot training: every sample is encoded, classified
/// against the current memory at the configured inference precision, and
/// folded in exactly once, in the given order. Prototype storage stays at
/// 16 bits (`train_bits`) regardless of the classification precision.
///
/// Rules per sample: a class never seen before (all-zero prototype) absorbs
/// its sample directly without penalizing anyone; a correct prediction
/// accumulates the sample onto its class; a misprediction subtracts it from
/// the wrongly chosen class and, under
/// [`UpdateRule::PenalizeAndReinforce`], also adds it to the true class.
pub fn fsl_train_single_pass<'a, I>(
    samples: I,
    mem: &mut ClassMemory,
    block: &CrpSeedBlock,
    cfg: &HdcConfig,
) -> Result<TrainStats>
where
    I: IntoIterator<Item = (&'a [f32], usize)>,
{
    let mut stats = TrainStats::default();
    for (x, label) in samples {
        if label >= mem.n {
            return Err(Error::Validation(format!(
                "label {label} out of range for {} classes",
                mem.n
            )));
        }
        let h = encode(x, block, mem.d)?;
        stats.seen += 1;
        if mem.is_zero_class(label) {
            mem.accumulate(label, &h, 1);
            mem.counters[label] += 1;
            stats.bootstraps += 1;
            continue;
        }
        let (predicted, _) = classify(&h, mem, cfg.infer_bits)?;
        if predicted == label {
            mem.accumulate(label, &h, 1);
            stats.correct += 1;
        } else {
            mem.accumulate(predicted, &h, -1);
            if cfg.update_rule == UpdateRule::PenalizeAndReinforce {
                mem.accumulate(label, &h, 1);
            }
            stats.mispredictions += 1;
        }
        mem.counters[label] += 1;
    }
    Ok(stats)
}

/// Projection-matrix storage mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    ExplicitRp,
    Crp,
}

/// Stored projection elements under `mode`, and the cRP reduction ratio
/// `F * D / 256` independent of mode.
pub fn memory_footprint(cfg: &HdcConfig, mode: EncoderMode) -> (u64, f64) {
    let full = (cfg.f * cfg.d) as u64;
    let stored = match mode {
        EncoderMode::ExplicitRp => full,
        EncoderMode::Crp => SEED_BLOCK_LEN as u64,
    };
    (stored, full as f64 / SEED_BLOCK_LEN as f64)
}
