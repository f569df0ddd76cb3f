use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::bias_tune::BiasTuneConfig;
use crate::error::{Error, Result};
use crate::nn::{arch, LrSchedule, Network, TrainConfig};
use crate::quantizer::{QrConfig, QrSchedule, DEFAULT_GRID};
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    Mlp,
    Lenet,
    Cifar,
}

impl NetworkKind {
    pub fn build<T: Real>(self, seed: u64) -> Result<Network<T>> {
        match self {
            NetworkKind::Mlp => arch::mlp(seed),
            NetworkKind::Lenet => arch::lenet(seed),
            NetworkKind::Cifar => arch::cifar_cnn(seed),
        }
    }

    pub fn is_cifar(self) -> bool {
        self == NetworkKind::Cifar
    }
}

impl FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlp" => Ok(NetworkKind::Mlp),
            "lenet" => Ok(NetworkKind::Lenet),
            "cifar" => Ok(NetworkKind::Cifar),
            other => Err(Error::Config(format!("unknown network `{other}` (expected mlp, lenet or cifar)"))),
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkKind::Mlp => "mlp",
            NetworkKind::Lenet => "lenet",
            NetworkKind::Cifar => "cifar",
        })
    }
}

/// Which accuracy-recovery methods a pipeline applies. All off is the
/// naive 1-level baseline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Methods {
    pub dq: bool,
    pub qr: bool,
    pub bt: bool,
}

impl Methods {
    pub const NAIVE: Methods = Methods { dq: false, qr: false, bt: false };
    pub const ALL: Methods = Methods { dq: true, qr: true, bt: true };

    /// The eight combinations in table order: naive, DQ, QR, DQ+QR, BT,
    /// DQ+BT, QR+BT, DQ+QR+BT.
    pub fn combinations() -> [Methods; 8] {
        std::array::from_fn(|i| Methods { dq: i & 1 != 0, qr: i & 2 != 0, bt: i & 4 != 0 })
    }

    /// Combinations (in table order) that use only methods from `self`.
    pub fn subsets(self) -> Vec<Methods> {
        Self::combinations().into_iter().filter(|m| (!m.dq || self.dq) && (!m.qr || self.qr) && (!m.bt || self.bt)).collect()
    }

    pub fn label(self) -> String {
        let parts: Vec<&str> = [(self.dq, "DQ"), (self.qr, "QR"), (self.bt, "BT")].iter().filter(|p| p.0).map(|p| p.1).collect();
        if parts.is_empty() {
            "naive".into()
        } else {
            parts.join("+")
        }
    }
}

impl fmt::Display for Methods {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Methods {
    type Err = Error;

    /// Comma- or plus-separated method names, e.g. `dq,qr` or `DQ+BT`;
    /// `none`, `naive` or an empty string is the baseline.
    fn from_str(s: &str) -> Result<Self> {
        let mut m = Methods::NAIVE;
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "dq" => m.dq = true,
                "qr" => m.qr = true,
                "bt" => m.bt = true,
                "none" | "naive" => {}
                other => return Err(Error::Config(format!("unknown method `{other}` (expected dq, qr or bt)"))),
            }
        }
        Ok(m)
    }
}

/// Everything one experiment run needs. Built from per-network defaults,
/// then overridden by a config file and command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub network: NetworkKind,
    pub dataset_dir: PathBuf,
    /// Methods available to the grid; the grid runs every subset.
    pub methods: Methods,
    pub train: TrainConfig,
    /// Retraining run for the QR methods, starting from the float network.
    pub qr_train: TrainConfig,
    pub qr: QrConfig,
    pub bias: BiasTuneConfig,
    /// Level-search multiples of each layer's weight standard deviation.
    pub grid: Vec<f64>,
    pub val_count: usize,
    /// Use only the first N training images (after the validation split).
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Variation levels as multiples of the smallest level magnitude.
    pub sigmas: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
    /// Training images used for bias tuning in the sweep.
    pub sweep_tune_limit: Option<usize>,
    /// Subtract per-channel training means (CIFAR only).
    pub mean_subtract: bool,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn defaults(network: NetworkKind) -> Self {
        let (epochs, lr, wd, qr_epochs, lambda) = match network {
            NetworkKind::Mlp => (12, 0.02, 1e-4, 6, 3e-3),
            NetworkKind::Lenet => (10, 0.01, 5e-4, 5, 1e-2),
            NetworkKind::Cifar => (30, 0.005, 5e-4, 10, 1e-2),
        };
        let train = TrainConfig {
            learning_rate: lr,
            epochs,
            batch_size: 64,
            momentum: 0.9,
            weight_decay: wd,
            schedule: LrSchedule::StepDecay { at_fraction: 0.75, factor: 0.1 },
            seed: 1,
        };
        let qr_train = TrainConfig { epochs: qr_epochs, seed: 2, ..train.clone() };
        Self {
            network,
            dataset_dir: PathBuf::from(if network.is_cifar() { "data/cifar-10-batches-bin" } else { "data/mnist" }),
            methods: Methods::ALL,
            bias: BiasTuneConfig::from_training(&train, 3),
            train,
            qr_train,
            qr: QrConfig { lambda, schedule: QrSchedule::LinearRamp { fraction: 0.25 } },
            grid: DEFAULT_GRID.to_vec(),
            val_count: 5000,
            train_limit: None,
            test_limit: None,
            sigmas: vec![0.25, 0.5, 1.0],
            sweep_seeds: vec![11, 12, 13],
            sweep_tune_limit: Some(10_000),
            mean_subtract: network.is_cifar(),
            seed: 1,
        }
    }

    /// Sets every seed from one master seed: float training `s`, QR
    /// retraining `s + 1`, bias tuning `s + 2`.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.qr_train.seed = seed.wrapping_add(1);
        self.bias.seed = seed.wrapping_add(2);
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.qr_train.validate()?;
        self.qr.validate()?;
        self.bias.validate()?;
        if self.grid.is_empty() {
            return Err(Error::Config("empty candidate grid".into()));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("sigma multiples must be nonnegative".into()));
        }
        if self.sweep_seeds.is_empty() {
            return Err(Error::Config("the sweep needs at least one seed".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. See [`ExperimentSpec::apply_config`]
    /// for the keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "network" => self.network = value.parse()?,
            "dataset_dir" => self.dataset_dir = PathBuf::from(value),
            "methods" => self.methods = value.parse()?,
            "seed" => self.set_seed(num(key, value)?),
            "epochs" => self.train.epochs = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "batch_size" => {
                let b = num(key, value)?;
                self.train.batch_size = b;
                self.qr_train.batch_size = b;
                self.bias.batch_size = b;
            }
            "momentum" => {
                let m = num(key, value)?;
                self.train.momentum = m;
                self.qr_train.momentum = m;
                self.bias.momentum = m;
            }
            "weight_decay" => {
                let w = num(key, value)?;
                self.train.weight_decay = w;
                self.qr_train.weight_decay = w;
            }
            "qr_lambda" => self.qr.lambda = num(key, value)?,
            "qr_ramp" => {
                let f: f64 = num(key, value)?;
                self.qr.schedule = if f > 0.0 { QrSchedule::LinearRamp { fraction: f } } else { QrSchedule::Constant };
            }
            "qr_epochs" => self.qr_train.epochs = num(key, value)?,
            "qr_learning_rate" => self.qr_train.learning_rate = num(key, value)?,
            "bt_epochs" => self.bias.epochs = num(key, value)?,
            "bt_learning_rate" => self.bias.learning_rate = num(key, value)?,
            "grid" => self.grid = list(key, value)?,
            "val_count" => self.val_count = num(key, value)?,
            "train_limit" => self.train_limit = optional(key, value)?,
            "test_limit" => self.test_limit = optional(key, value)?,
            "sigma" => self.sigmas = list(key, value)?,
            "sweep_seeds" => self.sweep_seeds = list(key, value)?,
            "sweep_tune_limit" => self.sweep_tune_limit = optional(key, value)?,
            "mean_subtract" => self.mean_subtract = num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` config file. Blank lines and `#` comments are
    /// ignored; later lines override earlier ones.
    ///
    /// Keys: `network`, `dataset_dir`, `methods`, `seed`, `epochs`,
    /// `learning_rate`, `batch_size`, `momentum`, `weight_decay`,
    /// `qr_lambda`, `qr_ramp`, `qr_epochs`, `qr_learning_rate`, `bt_epochs`,
    /// `bt_learning_rate`, `grid`, `val_count`, `train_limit`, `test_limit`,
    /// `sigma`, `sweep_seeds`, `sweep_tune_limit`, `mean_subtract`. Lists are
    /// comma-separated; `none` clears an optional limit.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key, value).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("`{key}`: cannot parse {value:?}: {e}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value.split(',').map(str::trim).filter(|v| !v.is_empty()).map(|v| num(key, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_in_table_order() {
        let labels: Vec<String> = Methods::combinations().iter().map(|m| m.label()).collect();
        assert_eq!(labels, ["naive", "DQ", "QR", "DQ+QR", "BT", "DQ+BT", "QR+BT", "DQ+QR+BT"]);
        assert_eq!("dq,qr,bt".parse::<Methods>().unwrap(), Methods::ALL);
        assert_eq!("DQ+BT".parse::<Methods>().unwrap().subsets().len(), 4);
        assert!("dq,xx".parse::<Methods>().is_err());
    }

    #[test]
    fn config_file_overrides() {
        let mut spec = ExperimentSpec::defaults(NetworkKind::Mlp);
        spec.apply_config("# comment\nnetwork = lenet\nepochs=3\nsigma = 0.1, 0.2\ntrain_limit = 100\nseed = 9 # trailing\n").unwrap();
        assert_eq!(spec.network, NetworkKind::Lenet);
        assert_eq!(spec.train.epochs, 3);
        assert_eq!(spec.sigmas, vec![0.1, 0.2]);
        assert_eq!(spec.train_limit, Some(100));
        assert_eq!((spec.train.seed, spec.qr_train.seed, spec.bias.seed), (9, 10, 11));
        assert!(spec.apply_config("bogus = 1").is_err());
        assert!(spec.apply_config("epochs").is_err());
        assert!(spec.apply_config("epochs = x").is_err());
    }
}
