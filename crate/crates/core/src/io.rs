//! Binary file formats and report writers.
//!
//! All integers are little-endian. Formats, by magic:
//!
//! - `FHT1` tensor: u32 height, u32 width, u32 channels, then f32 values
//!   row-major `(h, w, c)`. Feature sets use height = samples, width = 1,
//!   channels = feature dim.
//! - `FHL1` labels: u32 count, then u32 labels.
//! - `FHW1` dense model: u32 layer count, then per layer the seven
//!   `ConvLayerSpec` fields as u32 (in_channels, out_channels, kernel,
//!   stride, padding, in_height, in_width) followed by f32 weights indexed
//!   `(out_channel, ky, kx, in_channel)`.
//! - `FHC1` clustered model: u32 layer count, then per layer the seven spec
//!   u32s, u32 G, u32 group count, and per group u32 member count, the
//!   member ids, the index map packed as 4-bit nibbles (low nibble first),
//!   and f32 centroids (G per member, member-major).
//! - `FHV1` class memory: u32 N, u32 D, u8 train_bits, N*D i16 values,
//!   then N u32 per-class sample counters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{EpisodeReport, LabeledFeatures};
use crate::hdc::ClassMemory;
use crate::pesim::SimReport;
use crate::tensor::{ConvLayerSpec, DenseFilterBank, Tensor3};
use crate::wclust::{ClusteredLayer, PatternGroup};

fn wr_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn wr_f32(w: &mut impl Write, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn rd_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn rd_f32(r: &mut impl Read) -> Result<f32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

fn check_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor3) -> Result<()> {
    w.write_all(b"FHT1")?;
    wr_u32(w, t.height as u32)?;
    wr_u32(w, t.width as u32)?;
    wr_u32(w, t.channels as u32)?;
    for &v in t.data() {
        wr_f32(w, v)?;
    }
    Ok(())
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor3> {
    check_magic(r, b"FHT1")?;
    let h = rd_u32(r)? as usize;
    let w = rd_u32(r)? as usize;
    let c = rd_u32(r)? as usize;
    let mut data = Vec::with_capacity(h * w * c);
    for _ in 0..h * w * c {
        data.push(rd_f32(r)?);
    }
    Tensor3::new(h, w, c, data)
}

pub fn write_labels(w: &mut impl Write, labels: &[u32]) -> Result<()> {
    w.write_all(b"FHL1")?;
    wr_u32(w, labels.len() as u32)?;
    for &l in labels {
        wr_u32(w, l)?;
    }
    Ok(())
}

pub fn read_labels(r: &mut impl Read) -> Result<Vec<u32>> {
    check_magic(r, b"FHL1")?;
    let n = rd_u32(r)? as usize;
    (0..n).map(|_| rd_u32(r)).collect()
}

/// Feature sets travel as an `FHT1` tensor (samples x 1 x dim) plus an
/// `FHL1` sidecar.
pub fn write_features(
    feat_w: &mut impl Write,
    label_w: &mut impl Write,
    set: &LabeledFeatures,
) -> Result<()> {
    let t = Tensor3::new(set.len(), 1, set.dim, set.features().to_vec())?;
    write_tensor(feat_w, &t)?;
    write_labels(label_w, set.labels())
}

pub fn read_features(feat_r: &mut impl Read, label_r: &mut impl Read) -> Result<LabeledFeatures> {
    let t = read_tensor(feat_r)?;
    let labels = read_labels(label_r)?;
    if t.width != 1 {
        return Err(Error::Format(format!(
            "feature tensor must have width 1, got {}",
            t.width
        )));
    }
    if t.height != labels.len() {
        return Err(Error::Format(format!(
            "{} feature rows but {} labels",
            t.height,
            labels.len()
        )));
    }
    LabeledFeatures::new(t.channels, t.data().to_vec(), labels)
}

fn write_spec(w: &mut impl Write, s: &ConvLayerSpec) -> Result<()> {
    for v in [
        s.in_channels,
        s.out_channels,
        s.kernel,
        s.stride,
        s.padding,
        s.in_height,
        s.in_width,
    ] {
        wr_u32(w, v as u32)?;
    }
    Ok(())
}

fn read_spec(r: &mut impl Read) -> Result<ConvLayerSpec> {
    let mut v = [0usize; 7];
    for slot in v.iter_mut() {
        *slot = rd_u32(r)? as usize;
    }
    let spec = ConvLayerSpec {
        in_channels: v[0],
        out_channels: v[1],
        kernel: v[2],
        stride: v[3],
        padding: v[4],
        in_height: v[5],
        in_width: v[6],
    };
    spec.validate()?;
    Ok(spec)
}

pub fn write_dense_model(w: &mut impl Write, layers: &[DenseFilterBank]) -> Result<()> {
    w.write_all(b"FHW1")?;
    wr_u32(w, layers.len() as u32)?;
    for bank in layers {
        write_spec(w, &bank.spec)?;
        for &v in bank.weights() {
            wr_f32(w, v)?;
        }
    }
    Ok(())
}

pub fn read_dense_model(r: &mut impl Read) -> Result<Vec<DenseFilterBank>> {
    check_magic(r, b"FHW1")?;
    let n = rd_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let spec = read_spec(r)?;
        let mut weights = Vec::with_capacity(spec.weight_count());
        for _ in 0..spec.weight_count() {
            weights.push(rd_f32(r)?);
        }
        layers.push(DenseFilterBank::new(spec, weights)?);
    }
    Ok(layers)
}

/// Index maps are packed two entries per byte, low nibble first.
fn pack_nibbles(indices: &[u8]) -> Vec<u8> {
    let mut bytes = vec![0u8; indices.len().div_ceil(2)];
    for (i, &idx) in indices.iter().enumerate() {
        bytes[i / 2] |= (idx & 0x0F) << (4 * (i % 2));
    }
    bytes
}

fn unpack_nibbles(bytes: &[u8], count: usize) -> Vec<u8> {
    (0..count)
        .map(|i| (bytes[i / 2] >> (4 * (i % 2))) & 0x0F)
        .collect()
}

pub fn write_clustered_model(w: &mut impl Write, layers: &[ClusteredLayer]) -> Result<()> {
    w.write_all(b"FHC1")?;
    wr_u32(w, layers.len() as u32)?;
    for layer in layers {
        layer.validate()?;
        write_spec(w, &layer.spec)?;
        wr_u32(w, layer.g as u32)?;
        wr_u32(w, layer.groups.len() as u32)?;
        for group in &layer.groups {
            wr_u32(w, group.member_channels.len() as u32)?;
            for &m in &group.member_channels {
                wr_u32(w, m as u32)?;
            }
            w.write_all(&pack_nibbles(&group.index_map))?;
            for table in &group.per_channel_centroids {
                for &c in table {
                    wr_f32(w, c)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_clustered_model(r: &mut impl Read) -> Result<Vec<ClusteredLayer>> {
    check_magic(r, b"FHC1")?;
    let n = rd_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let spec = read_spec(r)?;
        let g = rd_u32(r)? as usize;
        let group_count = rd_u32(r)? as usize;
        let positions = spec.positions();
        let mut groups = Vec::with_capacity(group_count);
        for _ in 0..group_count {
            let members = rd_u32(r)? as usize;
            let member_channels: Result<Vec<usize>> =
                (0..members).map(|_| rd_u32(r).map(|v| v as usize)).collect();
            let member_channels = member_channels?;
            let mut packed = vec![0u8; positions.div_ceil(2)];
            r.read_exact(&mut packed)?;
            let index_map = unpack_nibbles(&packed, positions);
            let mut per_channel_centroids = Vec::with_capacity(members);
            for _ in 0..members {
                let mut table = Vec::with_capacity(g);
                for _ in 0..g {
                    table.push(rd_f32(r)?);
                }
                per_channel_centroids.push(table);
            }
            groups.push(PatternGroup {
                index_map,
                member_channels,
                per_channel_centroids,
            });
        }
        let layer = ClusteredLayer { spec, g, groups };
        layer.validate()?;
        layers.push(layer);
    }
    Ok(layers)
}

pub fn write_class_memory(w: &mut impl Write, mem: &ClassMemory, train_bits: u8) -> Result<()> {
    w.write_all(b"FHV1")?;
    wr_u32(w, mem.n() as u32)?;
    wr_u32(w, mem.d() as u32)?;
    w.write_all(&[train_bits])?;
    for &v in mem.rows() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &c in mem.counters() {
        wr_u32(w, c)?;
    }
    Ok(())
}

pub fn read_class_memory(r: &mut impl Read) -> Result<(ClassMemory, u8)> {
    check_magic(r, b"FHV1")?;
    let n = rd_u32(r)? as usize;
    let d = rd_u32(r)? as usize;
    let mut bits = [0u8; 1];
    r.read_exact(&mut bits)?;
    let mut rows = Vec::with_capacity(n * d);
    let mut buf = [0u8; 2];
    for _ in 0..n * d {
        r.read_exact(&mut buf)?;
        rows.push(i16::from_le_bytes(buf));
    }
    let counters: Result<Vec<u32>> = (0..n).map(|_| rd_u32(r)).collect();
    Ok((ClassMemory::from_parts(n, d, rows, counters?)?, bits[0]))
}

/// Episode CSV: `episode,seed,way,shot,D,infer_bits,hdc_acc,knn_acc`.
pub const EPISODE_CSV_HEADER: &str = "episode,seed,way,shot,D,infer_bits,hdc_acc,knn_acc";

pub fn episode_csv(reports: &[EpisodeReport]) -> String {
    let mut out = String::from(EPISODE_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6}\n",
            r.episode, r.seed, r.way, r.shot, r.d, r.infer_bits, r.hdc_accuracy, r.knn_accuracy
        ));
    }
    out
}

/// One `simulate` CSV row: `layer,cycles,utilization,ops`.
pub fn sim_csv_row(layer: usize, report: &SimReport) -> String {
    format!(
        "{},{},{:.6},{}\n",
        layer,
        report.cycles,
        report.pe_utilization,
        report.accum_ops + report.mult_ops
    )
}

pub const SIM_CSV_HEADER: &str = "layer,cycles,utilization,ops";

// Path conveniences.

pub fn save<T>(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<T>) -> Result<T> {
    let mut w = BufWriter::new(File::create(path)?);
    let v = write(&mut w)?;
    w.flush()?;
    Ok(v)
}

pub fn load<T>(path: &Path, read: impl FnOnce(&mut BufReader<File>) -> Result<T>) -> Result<T> {
    let mut r = BufReader::new(File::open(path)?);
    read(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdc::{fsl_train_single_pass, CrpSeedBlock, HdcConfig};
    use crate::rng::CounterRng;
    use crate::tensor::DenseFilterBank;
    use crate::wclust::share_patterns;

    fn round_trip<T>(
        value: &T,
        write: impl Fn(&mut Vec<u8>, &T) -> Result<()>,
        read: impl Fn(&mut &[u8]) -> Result<T>,
    ) -> T {
        let mut buf = Vec::new();
        write(&mut buf, value).unwrap();
        let mut slice = buf.as_slice();
        let back = read(&mut slice).unwrap();
        assert!(slice.is_empty(), "trailing bytes after read");
        back
    }

    #[test]
    fn tensor_round_trip() {
        let mut rng = CounterRng::new(1, 0);
        let t = Tensor3::random(3, 4, 2, &mut rng);
        let back = round_trip(&t, write_tensor, |r| read_tensor(r));
        assert_eq!(t, back);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut buf = Vec::new();
        write_tensor(&mut buf, &Tensor3::zeros(1, 1, 1)).unwrap();
        buf[0] = b'X';
        match read_tensor(&mut buf.as_slice()) {
            Err(Error::Format(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn dense_and_clustered_model_round_trip() {
        let spec = ConvLayerSpec {
            in_channels: 3,
            out_channels: 6,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_height: 8,
            in_width: 8,
        };
        let mut rng = CounterRng::new(2, 0);
        let bank = DenseFilterBank::random(spec, &mut rng).unwrap();
        let dense_back = round_trip(
            &vec![bank.clone()],
            |w, v| write_dense_model(w, v),
            |r| read_dense_model(r),
        );
        assert_eq!(dense_back[0], bank);

        let layer = share_patterns(&bank, 5, 4).unwrap();
        let clustered_back = round_trip(
            &vec![layer.clone()],
            |w, v| write_clustered_model(w, v),
            |r| read_clustered_model(r),
        );
        assert_eq!(clustered_back[0], layer);
    }

    #[test]
    fn nibble_packing_is_low_first() {
        assert_eq!(pack_nibbles(&[0x3, 0xA, 0xF]), vec![0xA3, 0x0F]);
        assert_eq!(unpack_nibbles(&[0xA3, 0x0F], 3), vec![0x3, 0xA, 0xF]);
    }

    #[test]
    fn class_memory_round_trip() {
        let cfg = HdcConfig::new(16, 1024, 3, 5);
        let block = CrpSeedBlock::from_seed(cfg.seed);
        let mut rng = CounterRng::new(3, 0);
        let mut mem = crate::hdc::ClassMemory::new(cfg.n, cfg.d);
        let samples: Vec<(Vec<f32>, usize)> = (0..6)
            .map(|i| {
                let x: Vec<f32> =
                    (0..16).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
                (x, i % 3)
            })
            .collect();
        fsl_train_single_pass(
            samples.iter().map(|(x, l)| (x.as_slice(), *l)),
            &mut mem,
            &block,
            &cfg,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_class_memory(&mut buf, &mem, 16).unwrap();
        let (back, bits) = read_class_memory(&mut buf.as_slice()).unwrap();
        assert_eq!(bits, 16);
        assert_eq!(back.rows(), mem.rows());
        assert_eq!(back.counters(), mem.counters());
    }

    #[test]
    fn feature_set_round_trip() {
        let set = crate::harness::make_synthetic_dataset(3, 4, 8, 0.2, 9);
        let mut fb = Vec::new();
        let mut lb = Vec::new();
        write_features(&mut fb, &mut lb, &set).unwrap();
        let back = read_features(&mut fb.as_slice(), &mut lb.as_slice()).unwrap();
        assert_eq!(set, back);
    }
}
