//! End-to-end tests of the `fhdnn` binary: exit codes, file formats, the
//! config/manifest machinery, and cross-checks against in-process results.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fhdnn_core::io;
use fhdnn_core::rng::CounterRng;
use fhdnn_core::*;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fhdnn"))
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = bin().args(args).current_dir(dir).output().unwrap();
    assert!(
        out.status.success(),
        "fhdnn {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_dense_model(path: &Path, seed: u64) {
    let spec1 = ConvLayerSpec {
        in_channels: 1,
        out_channels: 8,
        kernel: 3,
        stride: 1,
        padding: 1,
        in_height: 8,
        in_width: 8,
    };
    let spec2 = ConvLayerSpec {
        in_channels: 8,
        out_channels: 16,
        kernel: 3,
        stride: 1,
        padding: 1,
        in_height: 4,
        in_width: 4,
    };
    let mut rng = CounterRng::new(seed, 0);
    let banks = vec![
        DenseFilterBank::random(spec1, &mut rng).unwrap(),
        DenseFilterBank::random(spec2, &mut rng).unwrap(),
    ];
    let mut buf = Vec::new();
    io::write_dense_model(&mut buf, &banks).unwrap();
    fs::write(path, buf).unwrap();
}

#[test]
fn usage_error_exits_2() {
    let out = bin().arg("no-such-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["cluster", "--input", "missing.fhw", "--output", "out.fhc"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn cluster_matches_in_process_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_dense_model(&dir.path().join("dense.fhw"), 5);
    run_ok(
        &["cluster", "--input", "dense.fhw", "--output", "a.fhc", "--g", "8"],
        dir.path(),
    );
    run_ok(
        &["cluster", "--input", "dense.fhw", "--output", "b.fhc", "--g", "8"],
        dir.path(),
    );
    let a = fs::read(dir.path().join("a.fhc")).unwrap();
    let b = fs::read(dir.path().join("b.fhc")).unwrap();
    assert_eq!(a, b, "clustering must be deterministic");

    // The file parses and equals the in-process clustering of the same bank.
    let dense = io::load(&dir.path().join("dense.fhw"), io::read_dense_model).unwrap();
    let loaded = io::read_clustered_model(&mut a.as_slice()).unwrap();
    for (bank, layer) in dense.iter().zip(&loaded) {
        let expect = share_patterns(bank, 8, bank.spec.out_channels).unwrap();
        assert_eq!(layer, &expect);
    }
}

#[test]
fn simulate_emits_json_and_appends_csv() {
    let dir = tempfile::tempdir().unwrap();
    write_dense_model(&dir.path().join("dense.fhw"), 6);
    run_ok(
        &["cluster", "--input", "dense.fhw", "--output", "m.fhc", "--g", "8"],
        dir.path(),
    );
    let out = run_ok(
        &["simulate", "--model", "m.fhc", "--layer", "0", "--report", "sim.csv"],
        dir.path(),
    );
    let report: SimReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.cycles > 0);
    run_ok(
        &["simulate", "--model", "m.fhc", "--layer", "1", "--report", "sim.csv"],
        dir.path(),
    );
    let csv = fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], io::SIM_CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,"));
    assert!(lines[2].starts_with("1,"));
}

#[test]
fn train_then_infer_reconciles_with_in_process_path() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "episodes",
            "--way", "5", "--shot", "3", "--query", "3",
            "--episodes", "2",
            "--f", "32", "--d", "1024",
            "--classes", "6", "--per-class", "10",
            "--seed", "9",
            "--output", "eps.csv",
            "--dump-features", "feats.fht",
            "--dump-labels", "feats.fhl",
        ],
        dir.path(),
    );
    run_ok(
        &[
            "hdc-train",
            "--features", "feats.fht", "--labels", "feats.fhl",
            "--output", "mem.fhv",
            "--d", "1024", "--seed", "33", "--infer-bits", "1",
        ],
        dir.path(),
    );
    let out = run_ok(
        &[
            "hdc-infer",
            "--features", "feats.fht", "--labels", "feats.fhl",
            "--memory", "mem.fhv",
            "--output", "pred.csv",
            "--seed", "33", "--infer-bits", "1",
        ],
        dir.path(),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    let acc: f64 = stdout
        .split("accuracy ")
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(acc >= 1.0 / 6.0, "training-set accuracy {acc} below chance");

    // In-process replay: same file order, same config, same seed.
    let set = {
        let mut fr = std::io::BufReader::new(fs::File::open(dir.path().join("feats.fht")).unwrap());
        let mut lr = std::io::BufReader::new(fs::File::open(dir.path().join("feats.fhl")).unwrap());
        io::read_features(&mut fr, &mut lr).unwrap()
    };
    let cfg = HdcConfig {
        infer_bits: 1,
        ..HdcConfig::new(32, 1024, 6, 33)
    };
    let block = CrpSeedBlock::from_seed(33);
    let mut mem = ClassMemory::new(6, 1024);
    fsl_train_single_pass(
        (0..set.len()).map(|i| (set.feature(i), set.labels()[i] as usize)),
        &mut mem,
        &block,
        &cfg,
    )
    .unwrap();
    let (disk_mem, _) = io::load(&dir.path().join("mem.fhv"), io::read_class_memory).unwrap();
    assert_eq!(disk_mem.rows(), mem.rows(), "trained memory differs from in-process");

    let pred_csv = fs::read_to_string(dir.path().join("pred.csv")).unwrap();
    for (i, line) in pred_csv.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let h = encode(set.feature(i), &block, 1024).unwrap();
        let (want, dists) = classify(&h, &mem, 1).unwrap();
        assert_eq!(fields[1].parse::<usize>().unwrap(), want, "row {i}");
        assert_eq!(fields[3].parse::<u64>().unwrap(), dists[want], "row {i}");
    }
}

#[test]
fn config_file_merges_beneath_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.kv"),
        "way=4\nshot=2\nquery=2\nepisodes=2\nf=32\nd=1024\nclasses=6\nper-class=8\nseed=5\noutput=from-config.csv\n",
    )
    .unwrap();
    // Flags: override the output path; everything else comes from config.
    run_ok(
        &["episodes", "--config", "run.kv", "--output", "a.csv"],
        dir.path(),
    );
    assert!(dir.path().join("a.csv").exists());
    assert!(!dir.path().join("from-config.csv").exists());
    let csv = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",4,2,1024,"), "{csv}");
}

#[test]
fn manifest_reruns_to_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "episodes",
            "--way", "4", "--shot", "2", "--query", "2",
            "--episodes", "3",
            "--f", "32", "--d", "1024",
            "--classes", "6", "--per-class", "8",
            "--seed", "21",
            "--output", "first.csv",
            "--summary", "first.json",
            "--manifest", "run.manifest.json",
        ],
        dir.path(),
    );
    // Rerun from the manifest, redirecting only the file names.
    run_ok(
        &[
            "episodes",
            "--config", "run.manifest.json",
            "--output", "second.csv",
            "--summary", "second.json",
        ],
        dir.path(),
    );
    let a = fs::read(dir.path().join("first.csv")).unwrap();
    let b = fs::read(dir.path().join("second.csv")).unwrap();
    assert_eq!(a, b, "manifest rerun must reproduce the episode CSV");

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "episodes");
    let artifacts = manifest["artifacts"].as_array().unwrap();
    assert!(artifacts.iter().any(|a| {
        a["path"].as_str().unwrap().ends_with("first.csv") && a["sha256"].as_str().unwrap().len() == 64
    }));
}

#[test]
fn episode_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "episodes",
        "--way", "4", "--shot", "2", "--query", "2",
        "--episodes", "4",
        "--f", "32", "--d", "1024",
        "--classes", "6", "--per-class", "8",
        "--seed", "77",
    ];
    let with_out = |name: &str| {
        let mut v: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        v.push("--output".into());
        v.push(name.into());
        v
    };
    run_ok(
        &with_out("x.csv").iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        dir.path(),
    );
    run_ok(
        &with_out("y.csv").iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        dir.path(),
    );
    assert_eq!(
        fs::read(dir.path().join("x.csv")).unwrap(),
        fs::read(dir.path().join("y.csv")).unwrap()
    );
}

#[test]
fn bad_magic_model_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.fhc"), b"JUNKJUNKJUNK").unwrap();
    let out = bin()
        .args(["simulate", "--model", "junk.fhc", "--report", "r.csv"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_lists_expand_combinations() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "episodes",
            "--way", "4", "--shot", "2", "--query", "2",
            "--episodes", "2",
            "--f", "32",
            "--d-list", "1024,2048",
            "--bits-list", "1,16",
            "--classes", "6", "--per-class", "8",
            "--seed", "3",
            "--output", "sweep.csv",
        ],
        dir.path(),
    );
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    // header + 2 episodes x 2 D x 2 bit settings
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    let _path: PathBuf = dir.path().join("sweep.csv.manifest.json");
    assert!(_path.exists(), "default manifest placed next to the output");
}
