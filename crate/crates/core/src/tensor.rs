//! Dense tensor types, convolution-layer specs, and the reference dense
//! convolution used as the correctness oracle for the clustered executor.
//!
//! Accumulation is always performed in `f64` regardless of the storage type;
//! 16-bit brain-float storage is emulated only as an optional rounding step
//! applied to values at load time (`round_to_bf16`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::wclust::CostRecord;

/// Dense rank-3 tensor in row-major `(h, w, c)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape {
                axis: "data",
                expected: height * width * channels,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("tensor contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Uniform values in `[-1, 1)` from the given stream.
    pub fn random(height: usize, width: usize, channels: usize, rng: &mut CounterRng) -> Self {
        let data = (0..height * width * channels)
            .map(|_| (rng.next_f64() * 2.0 - 1.0) as f32)
            .collect();
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn at(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[(h * self.width + w) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, c: usize, v: f32) {
        self.data[(h * self.width + w) * self.channels + c] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Geometry of one convolution layer (square kernel, symmetric padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_height: usize,
    pub in_width: usize,
}

impl ConvLayerSpec {
    pub fn validate(&self) -> Result<()> {
        if ![1, 3, 5].contains(&self.kernel) {
            return Err(Error::Validation(format!(
                "kernel must be 1, 3 or 5, got {}",
                self.kernel
            )));
        }
        if self.stride == 0 {
            return Err(Error::Validation("stride must be >= 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Validation("channel counts must be >= 1".into()));
        }
        for (axis, dim) in [("height", self.in_height), ("width", self.in_width)] {
            let span = dim + 2 * self.padding;
            if span < self.kernel || !(span - self.kernel).is_multiple_of(self.stride) {
                return Err(Error::Validation(format!(
                    "output {axis} is not a positive integer for in={dim} pad={} k={} stride={}",
                    self.padding, self.kernel, self.stride
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn out_height(&self) -> usize {
        (self.in_height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    #[inline]
    pub fn out_width(&self) -> usize {
        (self.in_width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Number of filter positions: `kernel^2 * in_channels`.
    #[inline]
    pub fn positions(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    /// Weight count of the dense bank: `positions * out_channels`.
    #[inline]
    pub fn weight_count(&self) -> usize {
        self.positions() * self.out_channels
    }
}

/// Dense filter bank, weights indexed `(out_channel, ky, kx, in_channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFilterBank {
    pub spec: ConvLayerSpec,
    weights: Vec<f32>,
}

impl DenseFilterBank {
    pub fn new(spec: ConvLayerSpec, weights: Vec<f32>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.weight_count() {
            return Err(Error::Shape {
                axis: "weights",
                expected: spec.weight_count(),
                actual: weights.len(),
            });
        }
        Ok(Self { spec, weights })
    }

    pub fn random(spec: ConvLayerSpec, rng: &mut CounterRng) -> Result<Self> {
        let weights = (0..spec.weight_count())
            .map(|_| (rng.next_f64() * 2.0 - 1.0) as f32)
            .collect();
        Self::new(spec, weights)
    }

    #[inline]
    pub fn weight(&self, oc: usize, ky: usize, kx: usize, ci: usize) -> f32 {
        let k = self.spec.kernel;
        let cin = self.spec.in_channels;
        self.weights[((oc * k + ky) * k + kx) * cin + ci]
    }

    /// The flat `(ky, kx, ci)` slice of one output channel.
    pub fn channel_slice(&self, oc: usize) -> &[f32] {
        let p = self.spec.positions();
        &self.weights[oc * p..(oc + 1) * p]
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }
}

/// Per-call multiply/add accumulators for instrumented executors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub multiplies: u64,
    pub adds: u64,
}

/// Standard cross-correlation (no kernel flip), zero padding, `f64`
/// accumulation. Taps falling in the padding region are charged to the
/// counters like any other tap so that instrumented counts match the
/// closed-form cost model exactly.
pub fn dense_conv2d(input: &Tensor3, bank: &DenseFilterBank) -> Result<Tensor3> {
    let mut counters = OpCounters::default();
    dense_conv2d_counted(input, bank, &mut counters)
}

pub fn dense_conv2d_counted(
    input: &Tensor3,
    bank: &DenseFilterBank,
    counters: &mut OpCounters,
) -> Result<Tensor3> {
    let spec = &bank.spec;
    check_input(input, spec)?;
    let (out_h, out_w) = (spec.out_height(), spec.out_width());
    let mut out = Tensor3::zeros(out_h, out_w, spec.out_channels);
    for oy in 0..out_h {
        for ox in 0..out_w {
            for oc in 0..spec.out_channels {
                let mut acc = 0.0f64;
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
                            acc += bank.weight(oc, ky, kx, ci) as f64 * x;
                            counters.multiplies += 1;
                            counters.adds += 1;
                        }
                    }
                }
                out.set(oy, ox, oc, acc as f32);
            }
        }
    }
    Ok(out)
}

fn check_input(input: &Tensor3, spec: &ConvLayerSpec) -> Result<()> {
    spec.validate()?;
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
    Ok(())
}

/// Closed-form cost of the dense layer. One MAC is one multiply plus one
/// add; taps in the padding are charged like interior taps.
pub fn dense_cost(spec: &ConvLayerSpec) -> Result<CostRecord> {
    spec.validate()?;
    let taps = (spec.positions() * spec.out_channels) as u64;
    let pixels = (spec.out_height() * spec.out_width()) as u64;
    let params = spec.weight_count() as u64;
    Ok(CostRecord {
        multiplies: taps * pixels,
        adds: taps * pixels,
        index_params: 0,
        centroid_params: params,
        bytes_params: params as f64 * 2.0,
    })
}

/// Elementwise `max(0, x)`.
pub fn relu(t: &Tensor3) -> Tensor3 {
    t.map(|v| v.max(0.0))
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn max_pool2(t: &Tensor3) -> Tensor3 {
    let (oh, ow) = (t.height / 2, t.width / 2);
    let mut out = Tensor3::zeros(oh, ow, t.channels);
    for y in 0..oh {
        for x in 0..ow {
            for c in 0..t.channels {
                let m = t
                    .at(2 * y, 2 * x, c)
                    .max(t.at(2 * y, 2 * x + 1, c))
                    .max(t.at(2 * y + 1, 2 * x, c))
                    .max(t.at(2 * y + 1, 2 * x + 1, c));
                out.set(y, x, c, m);
            }
        }
    }
    out
}

/// Global average pool: one value per channel, `f64` accumulation.
pub fn global_avg_pool(t: &Tensor3) -> Vec<f32> {
    let n = (t.height * t.width) as f64;
    (0..t.channels)
        .map(|c| {
            let mut acc = 0.0f64;
            for y in 0..t.height {
                for x in 0..t.width {
                    acc += t.at(y, x, c) as f64;
                }
            }
            (acc / n) as f32
        })
        .collect()
}

/// Round an `f32` to the nearest brain-float16 value (round-to-nearest-even
/// on the upper 16 bits), returned widened back to `f32`.
pub fn round_to_bf16(x: f32) -> f32 {
    if x.is_nan() {
        return x;
    }
    let bits = x.to_bits();
    let round_bit = (bits >> 15) & 1;
    let sticky = bits & 0x7FFF;
    let mut upper = bits >> 16;
    if round_bit == 1 && (sticky != 0 || upper & 1 == 1) {
        upper += 1;
    }
    f32::from_bits(upper << 16)
}

/// Largest elementwise relative error between two slices, with an absolute
/// floor of 1e-12 in the denominator.
pub fn max_rel_err(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x as f64, y as f64);
            (x - y).abs() / x.abs().max(y.abs()).max(1e-12)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent brute-force reference: explicit padded copy of the input
    /// and a flat loop over output coordinates. Kept structurally different
    /// from `dense_conv2d` on purpose.
    fn naive_conv(input: &Tensor3, bank: &DenseFilterBank) -> Tensor3 {
        let s = &bank.spec;
        let ph = s.in_height + 2 * s.padding;
        let pw = s.in_width + 2 * s.padding;
        let mut padded = Tensor3::zeros(ph, pw, s.in_channels);
        for y in 0..s.in_height {
            for x in 0..s.in_width {
                for c in 0..s.in_channels {
                    padded.set(y + s.padding, x + s.padding, c, input.at(y, x, c));
                }
            }
        }
        let mut out = Tensor3::zeros(s.out_height(), s.out_width(), s.out_channels);
        for oc in 0..s.out_channels {
            for oy in 0..s.out_height() {
                for ox in 0..s.out_width() {
                    let mut acc = 0.0f64;
                    for ky in 0..s.kernel {
                        for kx in 0..s.kernel {
                            for ci in 0..s.in_channels {
                                acc += bank.weight(oc, ky, kx, ci) as f64
                                    * padded.at(oy * s.stride + ky, ox * s.stride + kx, ci) as f64;
                            }
                        }
                    }
                    out.set(oy, ox, oc, acc as f32);
                }
            }
        }
        out
    }

    fn spec_1x1() -> ConvLayerSpec {
        ConvLayerSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: 1,
            stride: 1,
            padding: 0,
            in_height: 1,
            in_width: 1,
        }
    }

    #[test]
    fn scalar_product() {
        let input = Tensor3::new(1, 1, 1, vec![2.0]).unwrap();
        let bank = DenseFilterBank::new(spec_1x1(), vec![3.0]).unwrap();
        let out = dense_conv2d(&input, &bank).unwrap();
        assert_eq!(out.data(), &[6.0]);
    }

    #[test]
    fn impulse_response_reproduces_kernel() {
        let spec = ConvLayerSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_height: 3,
            in_width: 3,
        };
        let mut input = Tensor3::zeros(3, 3, 1);
        input.set(1, 1, 0, 1.0);
        let kernel: Vec<f32> = (1..=9).map(|v| v as f32).collect();
        let bank = DenseFilterBank::new(spec, kernel.clone()).unwrap();
        let out = dense_conv2d(&input, &bank).unwrap();
        // Output (y, x) sees the kernel entry that overlaps the impulse:
        // w[2 - y][2 - x] under cross-correlation.
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(out.at(y, x, 0), kernel[(2 - y) * 3 + (2 - x)]);
            }
        }
    }

    #[test]
    fn matches_naive_oracle_on_random_layer() {
        let spec = ConvLayerSpec {
            in_channels: 4,
            out_channels: 8,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_height: 8,
            in_width: 8,
        };
        let mut rng = CounterRng::new(11, 0);
        let input = Tensor3::random(8, 8, 4, &mut rng);
        let bank = DenseFilterBank::random(spec, &mut rng).unwrap();
        let got = dense_conv2d(&input, &bank).unwrap();
        let want = naive_conv(&input, &bank);
        assert!(max_rel_err(got.data(), want.data()) < 1e-6);
    }

    #[test]
    fn linearity_within_tolerance() {
        let spec = ConvLayerSpec {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
            stride: 1,
            padding: 0,
            in_height: 6,
            in_width: 6,
        };
        let mut rng = CounterRng::new(21, 0);
        let x = Tensor3::random(6, 6, 2, &mut rng);
        let y = Tensor3::random(6, 6, 2, &mut rng);
        let bank = DenseFilterBank::random(spec, &mut rng).unwrap();
        let (a, b) = (0.7f32, -1.3f32);
        let mixed = Tensor3::new(
            6,
            6,
            2,
            x.data()
                .iter()
                .zip(y.data())
                .map(|(&xv, &yv)| a * xv + b * yv)
                .collect(),
        )
        .unwrap();
        let lhs = dense_conv2d(&mixed, &bank).unwrap();
        let cx = dense_conv2d(&x, &bank).unwrap();
        let cy = dense_conv2d(&y, &bank).unwrap();
        let rhs: Vec<f32> = cx
            .data()
            .iter()
            .zip(cy.data())
            .map(|(&xv, &yv)| a * xv + b * yv)
            .collect();
        // Relative to the output scale: near-zero entries cancel in f32.
        let scale = rhs.iter().fold(0.0f32, |m, &v| m.max(v.abs())) as f64;
        let worst = lhs
            .data()
            .iter()
            .zip(&rhs)
            .map(|(&p, &q)| (p as f64 - q as f64).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6 * scale, "abs err {worst}, scale {scale}");
    }

    #[test]
    fn dense_cost_trivial_and_closed_form() {
        let small = ConvLayerSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            padding: 0,
            in_height: 3,
            in_width: 3,
        };
        let c = dense_cost(&small).unwrap();
        assert_eq!(c.multiplies, 9);
        assert_eq!(c.centroid_params, 9);

        let big = ConvLayerSpec {
            in_channels: 64,
            out_channels: 64,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_height: 224,
            in_width: 224,
        };
        assert_eq!(dense_cost(&big).unwrap().multiplies, 1_849_688_064);
    }

    #[test]
    fn dense_cost_matches_instrumented_executor() {
        // 4x4 output crop of the large-layer geometry.
        let spec = ConvLayerSpec {
            in_channels: 3,
            out_channels: 5,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_height: 4,
            in_width: 4,
        };
        let mut rng = CounterRng::new(5, 0);
        let input = Tensor3::random(4, 4, 3, &mut rng);
        let bank = DenseFilterBank::random(spec, &mut rng).unwrap();
        let mut counters = OpCounters::default();
        dense_conv2d_counted(&input, &bank, &mut counters).unwrap();
        let cost = dense_cost(&spec).unwrap();
        assert_eq!(counters.multiplies, cost.multiplies);
        assert_eq!(counters.adds, cost.adds);
    }

    #[test]
    fn shape_error_names_axis() {
        let spec = ConvLayerSpec {
            in_channels: 2,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            padding: 0,
            in_height: 5,
            in_width: 5,
        };
        let bank = DenseFilterBank::new(spec, vec![0.0; spec.weight_count()]).unwrap();
        let input = Tensor3::zeros(5, 5, 3);
        match dense_conv2d(&input, &bank) {
            Err(Error::Shape { axis, .. }) => assert_eq!(axis, "channels"),
            other => panic!("expected shape error, got {other:?}"),
        }
        let input = Tensor3::zeros(4, 5, 2);
        match dense_conv2d(&input, &bank) {
            Err(Error::Shape { axis, .. }) => assert_eq!(axis, "height"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn spec_rejects_fractional_output() {
        let spec = ConvLayerSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 2,
            padding: 0,
            in_height: 6, // (6 - 3) % 2 != 0
            in_width: 7,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn pooling_and_relu() {
        let t = Tensor3::new(2, 2, 1, vec![-1.0, 2.0, 3.0, -4.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 2.0, 3.0, 0.0]);
        assert_eq!(max_pool2(&t).data(), &[3.0]);
        assert_eq!(global_avg_pool(&t), vec![0.0]);
    }

    #[test]
    fn bf16_rounding() {
        assert_eq!(round_to_bf16(1.0), 1.0);
        assert_eq!(round_to_bf16(-2.5), -2.5);
        // 1 + 2^-9 is not representable; rounds to nearest even (1.0).
        let x = 1.0 + 2f32.powi(-9);
        assert_eq!(round_to_bf16(x), 1.0);
        // 1 + 3*2^-9 rounds up to the next bf16, 1 + 2^-7.
        let y = 1.0 + 3.0 * 2f32.powi(-9);
        assert_eq!(round_to_bf16(y), 1.0 + 2f32.powi(-7));
    }
}
