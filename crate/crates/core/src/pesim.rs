//! Cycle-approximate model of the 4x16 PE array executing a clustered
//! convolution layer.
//!
//! The model is phase-level, not port-level: one input-pixel broadcast is one
//! cycle (driving up to three RF accumulations, one per horizontally
//! neighboring window), one centroid multiply is one cycle, RF reads/writes
//! are free, and the multiply stream of already-complete windows overlaps
//! the accumulate stream of the next ones. Vertical kernel offsets are
//! covered by re-streaming input rows, one pass per offset. These choices
//! are the model's own and are stated here because the hardware's exact
//! interleaving is finer-grained than a phase diagram can pin down.
//!
//! Op counters are logical, not physical: they count the arithmetic of the
//! accumulate-then-multiply algorithm itself (shared accumulations paid once
//! per pattern group) so they reconcile exactly with [`CostRecord`]. Bus and
//! broadcast meters are physical and live in [`TraceCounters`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ConvLayerSpec, Tensor3};
use crate::wclust::{ClusteredLayer, CostRecord};

/// PE array geometry. Defaults match the 64-PE, 4x16 configuration with
/// 16-entry register files: three accumulation RFs and one multiply RF per PE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    /// Entries per register file; bounds the largest supported G.
    pub rf_groups: usize,
    pub accum_rfs_per_pe: usize,
    pub mult_rfs_per_pe: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 16,
            rf_groups: 16,
            accum_rfs_per_pe: 3,
            mult_rfs_per_pe: 1,
        }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.rf_groups == 0 {
            return Err(Error::Validation("array dimensions must be non-zero".into()));
        }
        if self.accum_rfs_per_pe != 3 || self.mult_rfs_per_pe != 1 {
            return Err(Error::Validation(
                "PE register-file split is fixed at 3 accumulate + 1 multiply".into(),
            ));
        }
        Ok(())
    }
}

/// Per-row-tile phase timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePhase {
    pub tile: usize,
    /// Broadcast slots: kernel rows x input width x input channels.
    pub accumulate_cycles: u64,
    /// Multiply slots of the busiest column: out_w x G x channels-per-column.
    pub multiply_cycles: u64,
    /// Pipeline fill (first full window) plus drain (last window's multiplies).
    pub fill_drain_cycles: u64,
    /// Distinct input words the tile pulls from activation memory.
    pub input_slab_words: u64,
}

/// Mapping of one layer onto the array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub spec: ConvLayerSpec,
    pub g: usize,
    /// Pattern groups the accumulations are paid for (1 = fully shared).
    pub group_count: usize,
    pub row_tiles: usize,
    pub chans_per_col: usize,
    pub phases: Vec<TilePhase>,
}

/// Simulation outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub cycles: u64,
    pub input_bus_words: u64,
    pub weight_bus_words: u64,
    pub accum_ops: u64,
    pub mult_ops: u64,
    pub pe_utilization: f64,
    pub overlap_efficiency: f64,
}

/// Physical event meters from a value-tracked run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceCounters {
    /// Input words broadcast, one per distinct tile pixel.
    pub broadcasts: u64,
    /// RF accumulation events: one per (real pixel, window, group) incidence.
    pub rf_accumulations: u64,
}

/// Schedule a layer assuming one fully shared pattern group.
pub fn schedule_layer(spec: &ConvLayerSpec, g: usize, cfg: &ArrayConfig) -> Result<LayerSchedule> {
    build_schedule(spec, g, 1, cfg)
}

/// Schedule a clustered layer with its actual pattern groups.
pub fn schedule_clustered(layer: &ClusteredLayer, cfg: &ArrayConfig) -> Result<LayerSchedule> {
    layer.validate()?;
    build_schedule(&layer.spec, layer.g, layer.groups.len(), cfg)
}

fn build_schedule(
    spec: &ConvLayerSpec,
    g: usize,
    group_count: usize,
    cfg: &ArrayConfig,
) -> Result<LayerSchedule> {
    spec.validate()?;
    cfg.validate()?;
    if spec.kernel != 3 {
        return Err(Error::UnsupportedShape(format!(
            "PE array handles 3x3 kernels only (got {0}x{0}); use the functional executor",
            spec.kernel
        )));
    }
    if g == 0 || g > cfg.rf_groups {
        return Err(Error::Validation(format!(
            "G={g} exceeds the {} register-file entries",
            cfg.rf_groups
        )));
    }
    let out_h = spec.out_height();
    let row_tiles = out_h.div_ceil(cfg.rows);
    let chans_per_col = spec.out_channels.div_ceil(cfg.cols);
    let accumulate = (spec.kernel * spec.in_width * spec.in_channels) as u64;
    let multiply = (spec.out_width() * g * chans_per_col) as u64;
    let fill_drain = (spec.kernel * spec.kernel * spec.in_channels + g * chans_per_col) as u64;
    let phases = (0..row_tiles)
        .map(|tile| TilePhase {
            tile,
            accumulate_cycles: accumulate,
            multiply_cycles: multiply,
            fill_drain_cycles: fill_drain,
            input_slab_words: tile_slab_words(spec, tile, cfg.rows),
        })
        .collect();
    Ok(LayerSchedule {
        spec: *spec,
        g,
        group_count,
        row_tiles,
        chans_per_col,
        phases,
    })
}

/// Distinct input words a row tile needs: the union of the kernel footprints
/// of its output rows, clipped to the image.
fn tile_slab_words(spec: &ConvLayerSpec, tile: usize, rows: usize) -> u64 {
    let first_out = tile * rows;
    let last_out = ((tile + 1) * rows).min(spec.out_height()) - 1;
    let lo = (first_out * spec.stride) as isize - spec.padding as isize;
    let hi = (last_out * spec.stride + spec.kernel - 1) as isize - spec.padding as isize;
    let lo = lo.max(0) as usize;
    let hi = (hi.min(spec.in_height as isize - 1)) as usize;
    ((hi - lo + 1) * spec.in_width * spec.in_channels) as u64
}

/// Run the timing and op-count model.
pub fn simulate(schedule: &LayerSchedule, cfg: &ArrayConfig) -> Result<SimReport> {
    cfg.validate()?;
    let spec = &schedule.spec;
    let mut cycles = 0u64;
    let mut input_bus_words = 0u64;
    for phase in &schedule.phases {
        cycles += phase.accumulate_cycles.max(phase.multiply_cycles) + phase.fill_drain_cycles;
        input_bus_words += phase.input_slab_words;
    }

    let cost = schedule_cost(schedule)?;
    let weight_bus_words = cost.index_params
        + schedule.row_tiles as u64 * (schedule.g * spec.out_channels) as u64;

    let row_occupancy = spec.out_height() as f64 / (cfg.rows * schedule.row_tiles) as f64;
    let col_occupancy =
        spec.out_channels as f64 / (cfg.cols * schedule.chans_per_col) as f64;
    let (a, m) = (
        schedule.phases[0].accumulate_cycles,
        schedule.phases[0].multiply_cycles,
    );
    Ok(SimReport {
        cycles,
        input_bus_words,
        weight_bus_words,
        accum_ops: cost.adds,
        mult_ops: cost.multiplies,
        pe_utilization: row_occupancy * col_occupancy,
        overlap_efficiency: a.min(m) as f64 / a.max(m) as f64,
    })
}

/// The cost record a schedule's op counters must reconcile with: the
/// clustered-convolution accounting at this schedule's sharing granularity.
/// Equal to `clustered_cost` for any layer produced by `share_patterns`.
pub fn schedule_cost(schedule: &LayerSchedule) -> Result<CostRecord> {
    let spec = &schedule.spec;
    let positions = spec.positions() as u64;
    let pixels = (spec.out_height() * spec.out_width()) as u64;
    let cout = spec.out_channels as u64;
    let g = schedule.g as u64;
    let group_count = schedule.group_count as u64;
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

/// Cycle model plus exact value tracking: each PE computes its owned output
/// pixels through the same accumulate-then-multiply arithmetic as
/// `clustered_conv2d`, so outputs match the functional executor bit for bit.
pub fn simulate_traced(
    layer: &ClusteredLayer,
    input: &Tensor3,
    cfg: &ArrayConfig,
) -> Result<(SimReport, Tensor3, TraceCounters)> {
    let schedule = schedule_clustered(layer, cfg)?;
    let report = simulate(&schedule, cfg)?;
    let spec = &layer.spec;
    if input.channels != spec.in_channels || input.height != spec.in_height
        || input.width != spec.in_width
    {
        return Err(Error::Shape {
            axis: "input",
            expected: spec.in_height * spec.in_width * spec.in_channels,
            actual: input.height * input.width * input.channels,
        });
    }
    let (out_h, out_w) = (spec.out_height(), spec.out_width());
    let mut out = Tensor3::zeros(out_h, out_w, spec.out_channels);
    let mut trace = TraceCounters::default();
    for phase in &schedule.phases {
        trace.broadcasts += phase.input_slab_words;
    }

    // Row tiling drives the iteration order (tile, then PE row within it);
    // column ownership only affects timing, never values, so each group's
    // accumulation runs once per output pixel and every member channel is
    // drained from it, exactly like the functional executor.
    let mut sums = vec![0.0f64; layer.g];
    for tile in 0..schedule.row_tiles {
        for pe_row in 0..cfg.rows {
            let oy = tile * cfg.rows + pe_row;
            if oy >= out_h {
                continue;
            }
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
                                if in_bounds {
                                    sums[group.index_map[pos] as usize] +=
                                        input.at(iy as usize, ix as usize, ci) as f64;
                                    trace.rf_accumulations += 1;
                                }
                                pos += 1;
                            }
                        }
                    }
                    for (table, &oc) in
                        group.per_channel_centroids.iter().zip(&group.member_channels)
                    {
                        let mut acc = 0.0f64;
                        for (gi, &c) in table.iter().enumerate() {
                            acc += c as f64 * sums[gi];
                        }
                        out.set(oy, ox, oc, acc as f32);
                    }
                }
            }
        }
    }
    Ok((report, out, trace))
}
