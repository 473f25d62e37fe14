//! Subcommand implementations.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use fhdnn_core::io;
use fhdnn_core::{
    classify, clustered_cost, dense_cost, encode, fsl_train_single_pass, round_to_bf16,
    schedule_clustered, share_patterns, simulate, vgg16_conv_stack, ArrayConfig, ClassMemory,
    ConvLayerSpec, CostRecord, CrpSeedBlock, DenseFilterBank, HdcConfig, LabeledFeatures,
    SweepParams, UpdateRule,
};

use crate::args::*;
use crate::manifest::RunRecorder;

fn to_vec<T>(write: impl FnOnce(&mut Vec<u8>) -> fhdnn_core::Result<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn cluster(args: &ClusterArgs, rec: &mut RunRecorder) -> Result<()> {
    rec.set("input", args.input.display());
    rec.set("output", args.output.display());
    rec.set("g", args.g);
    rec.set("group-size", args.group_size);
    rec.set("bf16", args.bf16);

    let dense = io::load(&args.input, io::read_dense_model)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let mut layers = Vec::with_capacity(dense.len());
    for (li, bank) in dense.iter().enumerate() {
        let bank = if args.bf16 {
            let weights = bank.weights().iter().map(|&w| round_to_bf16(w)).collect();
            DenseFilterBank::new(bank.spec, weights)?
        } else {
            bank.clone()
        };
        let group_size = if args.group_size == 0 {
            bank.spec.out_channels
        } else {
            args.group_size
        };
        let layer = share_patterns(&bank, args.g, group_size)
            .with_context(|| format!("clustering layer {li}"))?;
        layers.push(layer);
    }
    let bytes = to_vec(|w| io::write_clustered_model(w, &layers))?;
    rec.write_artifact(&args.output, &bytes)?;
    println!(
        "clustered {} layer(s) at G={} into {}",
        layers.len(),
        args.g,
        args.output.display()
    );
    Ok(())
}

pub fn simulate_cmd(args: &SimulateArgs, rec: &mut RunRecorder) -> Result<()> {
    rec.set("model", args.model.display());
    rec.set("layer", args.layer);
    rec.set("report", args.report.display());

    let layers = io::load(&args.model, io::read_clustered_model)?;
    let layer = layers
        .get(args.layer)
        .ok_or_else(|| anyhow!("model has {} layers, index {}", layers.len(), args.layer))?;
    let cfg = ArrayConfig::default();
    let schedule = schedule_clustered(layer, &cfg)?;
    let report = simulate(&schedule, &cfg)?;

    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.json {
        rec.set("json", path.display());
        rec.write_artifact(path, json.as_bytes())?;
    }

    // Append a CSV row, creating the header on first use.
    let mut csv = match fs::read_to_string(&args.report) {
        Ok(existing) => existing,
        Err(_) => format!("{}\n", io::SIM_CSV_HEADER),
    };
    csv.push_str(&io::sim_csv_row(args.layer, &report));
    crate::manifest::write_atomic(&args.report, csv.as_bytes())?;
    rec.record_existing(&args.report)?;
    Ok(())
}

fn read_feature_file(features: &Path, labels: &Path) -> Result<LabeledFeatures> {
    let mut fr = std::io::BufReader::new(fs::File::open(features)?);
    let mut lr = std::io::BufReader::new(fs::File::open(labels)?);
    Ok(io::read_features(&mut fr, &mut lr)?)
}

pub fn hdc_train(args: &HdcTrainArgs, rec: &mut RunRecorder) -> Result<()> {
    rec.set("features", args.features.display());
    rec.set("labels", args.labels.display());
    rec.set("output", args.output.display());
    rec.set("d", args.d);
    rec.set("infer-bits", args.infer_bits);
    rec.set("seed", args.seed);
    rec.set("update-rule", &args.update_rule);

    let set = read_feature_file(&args.features, &args.labels)?;
    let n = match args.classes {
        Some(n) => n,
        None => set.labels().iter().max().map_or(0, |&m| m as usize + 1),
    };
    rec.set("classes", n);
    let cfg = HdcConfig {
        infer_bits: args.infer_bits,
        update_rule: args.update_rule.parse::<UpdateRule>()?,
        ..HdcConfig::new(set.dim, args.d, n, args.seed)
    };
    cfg.validate()?;

    let block = CrpSeedBlock::from_seed(cfg.seed);
    let mut mem = ClassMemory::new(n, args.d);
    let samples = (0..set.len()).map(|i| (set.feature(i), set.labels()[i] as usize));
    let stats = fsl_train_single_pass(samples, &mut mem, &block, &cfg)?;

    let bytes = to_vec(|w| io::write_class_memory(w, &mem, cfg.train_bits))?;
    rec.write_artifact(&args.output, &bytes)?;
    println!(
        "trained {} samples ({} bootstraps, {} correct, {} misses) -> {}",
        stats.seen,
        stats.bootstraps,
        stats.correct,
        stats.mispredictions,
        args.output.display()
    );
    Ok(())
}

pub fn hdc_infer(args: &HdcInferArgs, rec: &mut RunRecorder) -> Result<()> {
    rec.set("features", args.features.display());
    rec.set("memory", args.memory.display());
    rec.set("output", args.output.display());
    rec.set("infer-bits", args.infer_bits);
    rec.set("seed", args.seed);

    let tensor = io::load(&args.features, io::read_tensor)?;
    if tensor.width != 1 {
        bail!("feature tensor must be samples x 1 x F");
    }
    let labels: Option<Vec<u32>> = match &args.labels {
        Some(p) => {
            rec.set("labels", p.display());
            Some(io::load(p, io::read_labels)?)
        }
        None => None,
    };
    let (mem, _train_bits) = io::load(&args.memory, io::read_class_memory)?;
    let cfg = HdcConfig {
        infer_bits: args.infer_bits,
        ..HdcConfig::new(tensor.channels, mem.d(), mem.n(), args.seed)
    };
    cfg.validate()?;

    let block = CrpSeedBlock::from_seed(args.seed);
    let mut csv = String::from("sample_id,predicted,label,min_distance\n");
    let mut correct = 0usize;
    let f = tensor.channels;
    for i in 0..tensor.height {
        let row = &tensor.data()[i * f..(i + 1) * f];
        let h = encode(row, &block, mem.d())?;
        let (predicted, dists) = classify(&h, &mem, args.infer_bits)?;
        let label = labels.as_ref().map(|l| l[i]);
        if label == Some(predicted as u32) {
            correct += 1;
        }
        csv.push_str(&format!(
            "{i},{predicted},{},{}\n",
            label.map_or(String::new(), |l| l.to_string()),
            dists[predicted]
        ));
    }
    rec.write_artifact(&args.output, csv.as_bytes())?;
    match &labels {
        Some(l) => println!(
            "classified {} samples, accuracy {:.6}",
            tensor.height,
            correct as f64 / l.len().max(1) as f64
        ),
        None => println!("classified {} samples (no labels given)", tensor.height),
    }
    Ok(())
}

pub fn episodes(args: &EpisodesArgs, rec: &mut RunRecorder) -> Result<()> {
    for (k, v) in [
        ("way", args.way.to_string()),
        ("shot", args.shot.to_string()),
        ("query", args.query.to_string()),
        ("episodes", args.episodes.to_string()),
        ("f", args.f.to_string()),
        ("d", args.d.to_string()),
        ("infer-bits", args.infer_bits.to_string()),
        ("classes", args.classes.to_string()),
        ("per-class", args.per_class.to_string()),
        ("spread", args.spread.to_string()),
        ("seed", args.seed.to_string()),
        ("update-rule", args.update_rule.clone()),
        ("output", args.output.display().to_string()),
    ] {
        rec.set(k, v);
    }
    if !args.d_list.is_empty() {
        rec.set(
            "d-list",
            args.d_list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        );
    }
    if !args.bits_list.is_empty() {
        rec.set(
            "bits-list",
            args.bits_list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        );
    }
    if !args.shot_list.is_empty() {
        rec.set(
            "shot-list",
            args.shot_list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        );
    }

    let update_rule = args.update_rule.parse::<UpdateRule>()?;
    let ds = if args.d_list.is_empty() { vec![args.d] } else { args.d_list.clone() };
    let bits = if args.bits_list.is_empty() { vec![args.infer_bits] } else { args.bits_list.clone() };
    let shots = if args.shot_list.is_empty() { vec![args.shot] } else { args.shot_list.clone() };

    let mut csv = String::from(io::EPISODE_CSV_HEADER);
    csv.push('\n');
    let mut summaries = Vec::new();
    for &shot in &shots {
        for &d in &ds {
            for &infer_bits in &bits {
                let params = SweepParams {
                    way: args.way,
                    shot,
                    query: args.query,
                    episodes: args.episodes,
                    f: args.f,
                    d,
                    infer_bits,
                    classes: args.classes,
                    per_class: args.per_class,
                    spread: args.spread,
                    seed: args.seed,
                    update_rule,
                };
                let (reports, summary) = fhdnn_core::run_episode_sweep(&params)?;
                let block = io::episode_csv(&reports);
                csv.push_str(block.split_once('\n').map(|(_, body)| body).unwrap_or(""));
                println!(
                    "shot {shot} D {d} bits {infer_bits}: hdc {:.4} +- {:.4}, knn {:.4} +- {:.4}",
                    summary.mean_hdc, summary.stderr_hdc, summary.mean_knn, summary.stderr_knn
                );
                summaries.push(summary);
            }
        }
    }
    rec.write_artifact(&args.output, csv.as_bytes())?;
    if let Some(path) = &args.summary {
        rec.set("summary", path.display());
        let json = serde_json::to_vec_pretty(&summaries)?;
        rec.write_artifact(path, &json)?;
    }
    if let (Some(fp), Some(lp)) = (&args.dump_features, &args.dump_labels) {
        rec.set("dump-features", fp.display());
        rec.set("dump-labels", lp.display());
        let dataset = fhdnn_core::make_synthetic_dataset(
            args.classes,
            args.per_class,
            args.f,
            args.spread,
            args.seed,
        );
        // Round-robin over classes so file order is also a sane training
        // order for `hdc-train`.
        let mut feats = Vec::with_capacity(dataset.len() * dataset.dim);
        let mut labels = Vec::with_capacity(dataset.len());
        for s in 0..args.per_class {
            for c in 0..args.classes {
                let i = c * args.per_class + s;
                feats.extend_from_slice(dataset.feature(i));
                labels.push(dataset.labels()[i]);
            }
        }
        let interleaved = LabeledFeatures::new(dataset.dim, feats, labels)?;
        let mut fb = Vec::new();
        let mut lb = Vec::new();
        io::write_features(&mut fb, &mut lb, &interleaved)?;
        rec.write_artifact(fp, &fb)?;
        rec.write_artifact(lp, &lb)?;
    } else if args.dump_features.is_some() || args.dump_labels.is_some() {
        bail!("--dump-features and --dump-labels must be given together");
    }
    Ok(())
}

struct LayerCost {
    spec: ConvLayerSpec,
    dense: CostRecord,
    clustered: CostRecord,
}

pub fn costs(args: &CostsArgs, rec: &mut RunRecorder) -> Result<()> {
    rec.set("model", &args.model);
    rec.set("g", args.g);
    rec.set("group-size", args.group_size);

    let rows: Vec<LayerCost> = if args.model == "vgg16" {
        vgg16_conv_stack()
            .iter()
            .map(|spec| {
                let group_size = if args.group_size == 0 {
                    spec.out_channels
                } else {
                    args.group_size
                };
                Ok(LayerCost {
                    spec: *spec,
                    dense: dense_cost(spec)?,
                    clustered: clustered_cost(spec, args.g, group_size)?,
                })
            })
            .collect::<Result<_>>()?
    } else {
        let layers = io::load(Path::new(&args.model), io::read_clustered_model)?;
        layers
            .iter()
            .map(|layer| {
                let group_size = layer.spec.out_channels.div_ceil(layer.groups.len());
                Ok(LayerCost {
                    spec: layer.spec,
                    dense: dense_cost(&layer.spec)?,
                    clustered: clustered_cost(&layer.spec, layer.g, group_size)?,
                })
            })
            .collect::<Result<_>>()?
    };

    let mut csv = String::from(
        "layer,cin,cout,out,dense_mults,clust_mults,dense_ops,clust_ops,ops_x,dense_bytes,clust_bytes,params_x\n",
    );
    println!(
        "{:>5} {:>5} {:>5} {:>9} {:>14} {:>13} {:>7} {:>13} {:>12} {:>8}",
        "layer", "cin", "cout", "out", "dense_ops", "clust_ops", "ops_x", "dense_bytes", "clust_bytes", "params_x"
    );
    let mut dense_total = (0u64, 0u64, 0.0f64); // mults, ops, bytes
    let mut clust_total = (0u64, 0u64, 0.0f64);
    for (i, row) in rows.iter().enumerate() {
        let (d, c) = (&row.dense, &row.clustered);
        let ops_x = d.ops() as f64 / c.ops() as f64;
        let params_x = d.bytes_params / c.bytes_params;
        println!(
            "{:>5} {:>5} {:>5} {:>9} {:>14} {:>13} {:>7.2} {:>13.1} {:>12.1} {:>8.2}",
            i,
            row.spec.in_channels,
            row.spec.out_channels,
            format!("{}x{}", row.spec.out_height(), row.spec.out_width()),
            d.ops(),
            c.ops(),
            ops_x,
            d.bytes_params,
            c.bytes_params,
            params_x
        );
        csv.push_str(&format!(
            "{},{},{},{}x{},{},{},{},{},{:.4},{:.1},{:.1},{:.4}\n",
            i,
            row.spec.in_channels,
            row.spec.out_channels,
            row.spec.out_height(),
            row.spec.out_width(),
            d.multiplies,
            c.multiplies,
            d.ops(),
            c.ops(),
            ops_x,
            d.bytes_params,
            c.bytes_params,
            params_x
        ));
        dense_total = (
            dense_total.0 + d.multiplies,
            dense_total.1 + d.ops(),
            dense_total.2 + d.bytes_params,
        );
        clust_total = (
            clust_total.0 + c.multiplies,
            clust_total.1 + c.ops(),
            clust_total.2 + c.bytes_params,
        );
    }
    let mult_x = dense_total.0 as f64 / clust_total.0 as f64;
    let ops_x = dense_total.1 as f64 / clust_total.1 as f64;
    let params_x = dense_total.2 / clust_total.2;
    println!("total multiply reduction: {mult_x:.2}x");
    println!("total ops reduction: {ops_x:.2}x");
    println!("total params reduction: {params_x:.2}x");
    csv.push_str(&format!(
        "total,,,,{},{},{},{},{:.4},{:.1},{:.1},{:.4}\n",
        dense_total.0, clust_total.0, dense_total.1, clust_total.1, ops_x, dense_total.2, clust_total.2, params_x
    ));
    if let Some(path) = &args.output {
        rec.set("output", path.display());
        rec.write_artifact(path, csv.as_bytes())?;
    }
    Ok(())
}

