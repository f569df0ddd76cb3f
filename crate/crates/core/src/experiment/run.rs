use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use super::report::{ReportFormat, ReportRow};
use super::spec::{ExperimentSpec, Methods};
use crate::bias_tune::bias_tune;
use crate::crossbar::{CrossbarNetwork, VariationModel};
use crate::data::{load_cifar10_dir, load_mnist_dir, split, Dataset};
use crate::error::{Error, Result};
use crate::nn::{evaluate, train, Network};
use crate::quantizer::{
    quantize_network, refine_levels, select_global_level, sigma_candidates, train_with_qr, LevelSearch,
    QuantizationScheme,
};

/// Train / validation / test sets for one experiment.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Loads the dataset named by `spec.network` from `spec.dataset_dir`, splits
/// off `val_count` validation images from the training set (seeded by
/// `spec.seed`) and applies the size limits.
pub fn load_data(spec: &ExperimentSpec) -> Result<PreparedData> {
    let (full, test) = if spec.network.is_cifar() {
        load_cifar10_dir(&spec.dataset_dir)?
    } else {
        load_mnist_dir(&spec.dataset_dir)?
    };
    prepare_data(spec, &full, test)
}

/// [`load_data`] on already-loaded training and test sets.
pub fn prepare_data(spec: &ExperimentSpec, full_train: &Dataset, test: Dataset) -> Result<PreparedData> {
    let (mut train, mut val) = split(full_train, spec.val_count, spec.seed)?;
    let mut test = test;
    if let Some(n) = spec.train_limit {
        train = train.head(n);
    }
    if let Some(n) = spec.test_limit {
        test = test.head(n);
    }
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if spec.mean_subtract {
        let means = train.channel_means();
        for ds in [&mut train, &mut val, &mut test] {
            ds.subtract_channel_means(&means);
        }
    }
    Ok(PreparedData { train, val, test })
}

/// Trains the float reference network.
pub fn train_float(spec: &ExperimentSpec, data: &PreparedData) -> Result<Network<f32>> {
    let mut net = spec.network.build::<f32>(spec.seed)?;
    train(&mut net, &data.train, &spec.train)?;
    Ok(net)
}

/// Results of [`run_combo_grid`].
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub float_accuracy: f64,
    pub float_seconds: f64,
    pub float_net: Network<f32>,
    /// Best single shared level (the naive baseline's scheme).
    pub naive: LevelSearch,
    /// Per-layer levels from the distribution-aware search.
    pub dq: LevelSearch,
    /// One row per combination, in table order.
    pub rows: Vec<(Methods, ReportRow)>,
    /// Deployed (quantized, possibly bias-tuned) network per combination.
    pub networks: Vec<(Methods, Network<f32>)>,
}

impl GridOutcome {
    pub fn row(&self, m: Methods) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.0 == m).map(|r| &r.1)
    }

    pub fn network(&self, m: Methods) -> Option<&Network<f32>> {
        self.networks.iter().find(|r| r.0 == m).map(|r| &r.1)
    }

    pub fn scheme(&self, m: Methods) -> &QuantizationScheme {
        if m.dq {
            &self.dq.scheme
        } else {
            &self.naive.scheme
        }
    }

    pub fn report_rows(&self) -> Vec<ReportRow> {
        self.rows.iter().map(|r| r.1.clone()).collect()
    }
}

/// Loads data and runs [`run_combo_grid_on`]. Missing data is reported
/// before any training starts.
pub fn run_combo_grid(spec: &ExperimentSpec) -> Result<GridOutcome> {
    spec.validate()?;
    let data = load_data(spec)?;
    run_combo_grid_on(spec, &data, None, &spec.methods.subsets())
}

/// The method-combination grid.
///
/// One float network is trained (or `float` is used) and shared by every
/// row. The naive and per-layer schemes are selected on the validation set;
/// each QR retraining is done once per scheme and shared by the rows that
/// use it. Per row: pick the scheme, take the QR-retrained or float
/// weights, snap to the levels, optionally bias-tune, and evaluate on the
/// test set. A row's time includes the work it would need on its own
/// (level search, QR retraining, bias tuning, evaluation), not the float
/// training.
pub fn run_combo_grid_on(
    spec: &ExperimentSpec,
    data: &PreparedData,
    float: Option<Network<f32>>,
    combos: &[Methods],
) -> Result<GridOutcome> {
    spec.validate()?;
    let t = Instant::now();
    let float_net = match float {
        Some(n) => n,
        None => train_float(spec, data)?,
    };
    let float_accuracy = evaluate(&float_net, &data.test)?;
    let float_seconds = t.elapsed().as_secs_f64();
    log::info!("{}: float accuracy {:.4} ({float_seconds:.1}s)", spec.network, float_accuracy);

    let t = Instant::now();
    let naive = select_global_level(&float_net, &data.val, &spec.grid)?;
    let naive_secs = t.elapsed().as_secs_f64();
    log::info!("naive level {} (val {:.4})", naive.scheme.iter().next().unwrap().1, naive.val_accuracy);
    let t = Instant::now();
    let dq = if combos.iter().any(|m| m.dq) {
        refine_levels(&float_net, &data.val, &sigma_candidates(&float_net, &spec.grid)?, naive.clone())?
    } else {
        naive.clone()
    };
    let dq_secs = naive_secs + t.elapsed().as_secs_f64();
    log::info!("dq levels {} (val {:.4})", dq.scheme.to_text().replace('\n', "; "), dq.val_accuracy);

    let mut qr_nets: HashMap<bool, (Network<f32>, f64)> = HashMap::new();
    for use_dq in [false, true] {
        if combos.iter().any(|m| m.qr && m.dq == use_dq) {
            let t = Instant::now();
            let scheme = if use_dq { &dq.scheme } else { &naive.scheme };
            let (net, _) = train_with_qr(&float_net, &data.train, &spec.qr_train, &spec.qr, scheme)?;
            qr_nets.insert(use_dq, (net, t.elapsed().as_secs_f64()));
        }
    }

    let mut rows = Vec::new();
    let mut networks = Vec::new();
    for &m in combos {
        let t = Instant::now();
        let (scheme, mut secs) = if m.dq { (&dq.scheme, dq_secs) } else { (&naive.scheme, naive_secs) };
        let base = match m.qr {
            true => {
                let (net, s) = &qr_nets[&m.dq];
                secs += s;
                net
            }
            false => &float_net,
        };
        let mut net = quantize_network(base, scheme)?;
        if m.bt {
            net = bias_tune(&net, &data.train, &spec.bias)?.0;
        }
        let accuracy = evaluate(&net, &data.test)?;
        secs += t.elapsed().as_secs_f64();
        log::info!("{}: {m} accuracy {accuracy:.4} ({secs:.1}s)", spec.network);
        rows.push((m, ReportRow { label: m.label(), accuracy, drop: float_accuracy - accuracy, seconds: secs }));
        networks.push((m, net));
    }
    Ok(GridOutcome { float_accuracy, float_seconds, float_net, naive, dq, rows, networks })
}

/// One combination end to end: returns the deployed network, its scheme,
/// its row and the float accuracy. Trains the float network unless `float`
/// is given.
pub fn run_pipeline(
    spec: &ExperimentSpec,
    data: &PreparedData,
    float: Option<Network<f32>>,
    methods: Methods,
) -> Result<(Network<f32>, QuantizationScheme, ReportRow, f64)> {
    let mut out = run_combo_grid_on(spec, data, float, &[methods])?;
    let scheme = out.scheme(methods).clone();
    let (_, net) = out.networks.pop().unwrap();
    let (_, row) = out.rows.pop().unwrap();
    Ok((net, scheme, row, out.float_accuracy))
}

/// One variation level of [`run_variation_sweep_on`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// σ as a multiple of the smallest level magnitude.
    pub multiple: f64,
    /// σ in weight units.
    pub sigma: f64,
    /// Accuracy with variation, one entry per seed.
    pub noisy: Vec<f64>,
    /// Accuracy after bias tuning, one entry per seed.
    pub tuned: Vec<f64>,
    /// Accuracy of the programmed network without variation.
    pub reference: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl SweepRow {
    pub fn noisy_mean(&self) -> f64 {
        mean(&self.noisy)
    }

    pub fn tuned_mean(&self) -> f64 {
        mean(&self.tuned)
    }

    /// Fraction of the accuracy lost to variation that bias tuning wins
    /// back; `None` when nothing was lost.
    pub fn recovery(&self) -> Option<f64> {
        let lost = self.reference - self.noisy_mean();
        (lost > 0.0).then(|| (self.tuned_mean() - self.noisy_mean()) / lost)
    }
}

/// Variation sweep on a quantized network.
///
/// The network is mapped onto crossbars (scale = each layer's largest
/// level, biases in the neuron circuit). For each σ multiple and seed the
/// arrays get Gaussian variation of `σ = multiple · q_min`, where `q_min`
/// is the smallest level magnitude in `scheme`; the programmed weights are
/// read back, evaluated on the test set, bias-tuned on (a prefix of) the
/// training set with the noisy weights frozen, and evaluated again.
pub fn run_variation_sweep_on(
    spec: &ExperimentSpec,
    data: &PreparedData,
    net: &Network<f32>,
    scheme: &QuantizationScheme,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let xnet = CrossbarNetwork::map(net, Some(scheme), false)?;
    let reference = evaluate(&xnet.read_back()?.cast::<f32>(), &data.test)?;
    let q_min = scheme.iter().map(|(_, l)| l.smallest()).fold(f64::INFINITY, f64::min);
    let tune = match spec.sweep_tune_limit {
        Some(n) => data.train.head(n),
        None => data.train.clone(),
    };
    let mut rows = Vec::new();
    for &multiple in &spec.sigmas {
        let sigma = multiple * q_min;
        let (mut noisy, mut tuned) = (Vec::new(), Vec::new());
        for &seed in &spec.sweep_seeds {
            let programmed = xnet.with_variation(&VariationModel::gaussian(sigma, seed))?.read_back()?.cast::<f32>();
            noisy.push(evaluate(&programmed, &data.test)?);
            let (fixed, _) = bias_tune(&programmed, &tune, &spec.bias)?;
            tuned.push(evaluate(&fixed, &data.test)?);
        }
        let row = SweepRow { multiple, sigma, noisy, tuned, reference };
        log::info!("sigma {sigma:.5}: noisy {:.4} tuned {:.4} (reference {reference:.4})", row.noisy_mean(), row.tuned_mean());
        rows.push(row);
    }
    Ok(rows)
}

/// CSV or Markdown table of sweep means, accuracies in percent.
pub fn render_sweep(rows: &[SweepRow], format: ReportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("sweep report needs at least one row".into()));
    }
    let mut out = String::new();
    match format {
        ReportFormat::Csv => out.push_str("sigma_multiple,sigma,noisy_accuracy,tuned_accuracy,reference_accuracy\n"),
        ReportFormat::Markdown => out.push_str(
            "| σ / q_min | σ | Noisy (%) | After BT (%) | Noise-free (%) |\n|---:|---:|---:|---:|---:|\n",
        ),
    }
    for r in rows {
        let cells = [
            format!("{}", r.multiple),
            format!("{:.6}", r.sigma),
            format!("{:.2}", 100.0 * r.noisy_mean()),
            format!("{:.2}", 100.0 * r.tuned_mean()),
            format!("{:.2}", 100.0 * r.reference),
        ];
        match format {
            ReportFormat::Csv => writeln!(out, "{}", cells.join(",")).unwrap(),
            ReportFormat::Markdown => writeln!(out, "| {} |", cells.join(" | ")).unwrap(),
        }
    }
    Ok(out)
}
