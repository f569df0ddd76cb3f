mod common;

use qsyn::bias_tune::{bias_tune, BiasDeltaReport, BiasTuneConfig};
use qsyn::experiment::{
    emit_report, load_data, parse_report_csv, render_report, render_sweep, run_combo_grid, run_combo_grid_on,
    run_variation_sweep_on, ExperimentSpec, Methods, NetworkKind, ReportFormat,
};
use qsyn::nn::{evaluate, train, TrainConfig};
use qsyn::quantizer::{quantize_network, train_with_qr, LevelSet, QrConfig, QuantizationScheme};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_spec(dir: &std::path::Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::defaults(NetworkKind::Mlp);
    spec.dataset_dir = dir.to_path_buf();
    spec.val_count = 60;
    spec.train.epochs = 2;
    spec.qr_train.epochs = 1;
    spec.bias.epochs = 1;
    spec.sweep_seeds = vec![1, 2];
    spec.sweep_tune_limit = Some(100);
    spec
}

fn synthetic_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    common::write_mnist(dir.path(), 300, 80, &mut ChaCha8Rng::seed_from_u64(7));
    dir
}

#[test]
fn qr_then_quantize_then_bias_tune_composes() {
    let dir = synthetic_dir();
    let spec = tiny_spec(dir.path());
    let data = load_data(&spec).unwrap();
    let mut net = NetworkKind::Mlp.build::<f32>(3).unwrap();
    train(&mut net, &data.train, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
    let scheme = QuantizationScheme::uniform(&net, &LevelSet::single(0.05).unwrap());
    let (qr, _) = train_with_qr(&net, &data.train, &TrainConfig { epochs: 1, ..Default::default() }, &QrConfig::default(), &scheme).unwrap();
    let snapped = quantize_network(&qr, &scheme).unwrap();
    let cfg = BiasTuneConfig { epochs: 2, ..Default::default() };
    let (a, _) = bias_tune(&snapped, &data.train, &cfg).unwrap();
    let (b, _) = bias_tune(&snapped, &data.train, &cfg).unwrap();
    assert_eq!(qsyn::checkpoint::to_bytes(&a), qsyn::checkpoint::to_bytes(&b));
    // tuning never touches weights, so the result is still on the levels
    assert_eq!(quantize_network(&a, &scheme).unwrap(), a);
    let before = evaluate(&snapped, &data.train).unwrap();
    assert!(evaluate(&a, &data.train).unwrap() >= before - 0.005);
    let report = BiasDeltaReport::between(&snapped, &a).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.to_text().starts_with("layer mean_abs_delta max_abs_delta\nip1 "));
}

#[test]
fn grid_is_reproducible_and_ordered() {
    let dir = synthetic_dir();
    let spec = tiny_spec(dir.path());
    let a = run_combo_grid(&spec).unwrap();
    let b = run_combo_grid(&spec).unwrap();
    let labels: Vec<String> = a.rows.iter().map(|r| r.1.label.clone()).collect();
    assert_eq!(labels, ["naive", "DQ", "QR", "DQ+QR", "BT", "DQ+BT", "QR+BT", "DQ+QR+BT"]);
    assert_eq!(a.float_accuracy, b.float_accuracy);
    for ((ma, ra), (mb, rb)) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ma, mb);
        assert_eq!((ra.accuracy, ra.drop), (rb.accuracy, rb.drop));
        assert_eq!(ra.drop, a.float_accuracy - ra.accuracy);
    }
    for ((_, na), (_, nb)) in a.networks.iter().zip(&b.networks) {
        assert_eq!(qsyn::checkpoint::to_bytes(na), qsyn::checkpoint::to_bytes(nb));
    }
    let md = render_report(&a.report_rows(), ReportFormat::Markdown).unwrap();
    assert_eq!(md.lines().count(), 10);

    let out = dir.path().join("grid.csv");
    emit_report(&a.report_rows(), ReportFormat::Csv, &out).unwrap();
    let parsed = parse_report_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(parsed.len(), 8);
    assert!(emit_report(&a.report_rows(), ReportFormat::Csv, dir.path().join("missing/x.csv")).is_err());
}

#[test]
fn missing_data_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(&dir.path().join("nowhere"));
    let t = std::time::Instant::now();
    assert!(matches!(run_combo_grid(&spec), Err(qsyn::Error::Io { .. })));
    assert!(t.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn sweep_zero_sigma_matches_reference() {
    let dir = synthetic_dir();
    let mut spec = tiny_spec(dir.path());
    spec.sigmas = vec![0.0, 1.0];
    let data = load_data(&spec).unwrap();
    let grid = run_combo_grid_on(&spec, &data, None, &[Methods { dq: true, qr: true, bt: false }]).unwrap();
    let m = grid.rows[0].0;
    let rows = run_variation_sweep_on(&spec, &data, grid.network(m).unwrap(), grid.scheme(m)).unwrap();
    assert_eq!(rows[0].noisy, vec![rows[0].reference; 2]);
    assert_eq!(rows[0].reference, grid.rows[0].1.accuracy);
    assert!(rows[1].sigma > 0.0);
    let csv = render_sweep(&rows, ReportFormat::Csv).unwrap();
    assert!(csv.starts_with("sigma_multiple,sigma,noisy_accuracy,tuned_accuracy,reference_accuracy\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn config_file_overrides_defaults() {
    let mut spec = ExperimentSpec::defaults(NetworkKind::Lenet);
    spec.apply_config("# comment\nepochs = 3\nmethods = dq,bt\nsigma = 0.5, 2\nseed = 9\ntrain_limit = 100\n").unwrap();
    assert_eq!(spec.train.epochs, 3);
    assert_eq!(spec.methods, Methods { dq: true, qr: false, bt: true });
    assert_eq!(spec.sigmas, vec![0.5, 2.0]);
    assert_eq!((spec.train.seed, spec.qr_train.seed, spec.bias.seed), (9, 10, 11));
    assert_eq!(spec.train_limit, Some(100));
    assert!(spec.apply_config("colour = blue").is_err());
    assert!(spec.apply_config("epochs 3").is_err());
}
