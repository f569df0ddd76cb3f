use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::levels::LevelSet;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Real;

/// One [`LevelSet`] per weight-bearing layer, keyed by layer name.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationScheme {
    layers: Vec<(String, LevelSet)>,
}

impl QuantizationScheme {
    pub fn new(layers: Vec<(String, LevelSet)>) -> Result<Self> {
        for (i, (name, _)) in layers.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::Parse(format!("invalid layer name {name:?}")));
            }
            if layers[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Parse(format!("duplicate layer `{name}`")));
            }
        }
        Ok(Self { layers })
    }

    /// Every weight layer of `net` gets the same level set.
    pub fn uniform<T: Real>(net: &Network<T>, levels: &LevelSet) -> Self {
        Self { layers: net.weight_layers().map(|(_, name)| (name.to_string(), levels.clone())).collect() }
    }

    pub fn get(&self, layer: &str) -> Option<&LevelSet> {
        self.layers.iter().find(|(n, _)| n == layer).map(|(_, l)| l)
    }

    pub fn set(&mut self, layer: &str, levels: LevelSet) {
        match self.layers.iter_mut().find(|(n, _)| n == layer) {
            Some(entry) => entry.1 = levels,
            None => self.layers.push((layer.to_string(), levels)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LevelSet)> {
        self.layers.iter().map(|(n, l)| (n.as_str(), l))
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Checks that every weight layer of `net` has an entry and that no entry
    /// names an unknown layer.
    pub fn check_covers<T: Real>(&self, net: &Network<T>) -> Result<()> {
        for (_, name) in net.weight_layers() {
            if self.get(name).is_none() {
                return Err(Error::MissingLayer(name.to_string()));
            }
        }
        if let Some((extra, _)) = self.layers.iter().find(|(n, _)| !net.weight_layers().any(|(_, m)| m == n)) {
            return Err(Error::Config(format!("scheme names unknown layer `{extra}`")));
        }
        Ok(())
    }

    /// Level set for each layer index of `net` (None for layers without
    /// weights).
    pub(crate) fn per_layer<T: Real>(&self, net: &Network<T>) -> Result<Vec<Option<&LevelSet>>> {
        self.check_covers(net)?;
        Ok((0..net.layers().len()).map(|i| net.layer_name(i).and_then(|n| self.get(n))).collect())
    }

    /// Plain-text form: one `layer_name q_1 [q_2 …]` line per layer.
    /// Magnitudes use shortest round-trip formatting, so parsing the output
    /// restores identical bits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, levels) in &self.layers {
            writeln!(out, "{name} {levels}").unwrap();
        }
        out
    }

    /// Parses [`QuantizationScheme::to_text`] output. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let name = fields.next().unwrap().to_string();
            let magnitudes = fields
                .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {f:?}: {e}", lineno + 1))))
                .collect::<Result<Vec<_>>>()?;
            let levels = LevelSet::new(magnitudes).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            layers.push((name, levels));
        }
        Self::new(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Replaces every weight with its nearest level under its layer's level set.
/// Biases are copied unchanged. Idempotent.
pub fn quantize_network<T: Real>(net: &Network<T>, scheme: &QuantizationScheme) -> Result<Network<T>> {
    let per_layer = scheme.per_layer(net)?;
    let mut out = net.clone();
    for (i, levels) in per_layer.into_iter().enumerate() {
        if let Some(levels) = levels {
            let p = out.param_mut(i).expect("weight layer has parameters");
            for w in p.weight.data_mut() {
                *w = levels.nearest_in(*w);
            }
        }
    }
    Ok(out)
}
