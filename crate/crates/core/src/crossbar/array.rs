use std::fmt::Write as _;

use rand::Rng;

use super::variation::{VariationKind, VariationModel};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Largest array dimension; bigger matrices are tiled.
pub const TILE: usize = 256;

/// One crossbar array of differential conductance pairs.
///
/// Conductances are dimensionless (1.0 encodes a weight of `scale`).
#[derive(Debug, Clone, PartialEq)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    g_plus: Vec<f64>,
    g_minus: Vec<f64>,
    scale: f64,
}

impl Crossbar {
    /// Programs a `rows × cols` weight matrix (row = wordline/input,
    /// column = bitline/output). A positive weight sets only `g⁺ = w/scale`,
    /// a negative one only `g⁻ = |w|/scale`.
    ///
    /// Reading back multiplies by `scale` again, which is exact whenever
    /// `w/scale` is exact: ternary weights `{−q, 0, q}` with `scale = q`, or
    /// any weights with a power-of-two scale.
    pub fn program<T: Real>(weights: &Tensor<T>, scale: f64) -> Result<Self> {
        let &[rows, cols] = weights.shape() else {
            return Err(Error::Shape(format!("crossbar weights must be 2-D, got {:?}", weights.shape())));
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("crossbar scale must be positive, got {scale}")));
        }
        if let Some(i) = weights.data().iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let mut g_plus = vec![0.0; rows * cols];
        let mut g_minus = vec![0.0; rows * cols];
        for (k, &w) in weights.data().iter().enumerate() {
            let w = w.as_f64();
            if w > 0.0 {
                g_plus[k] = w / scale;
            } else if w < 0.0 {
                g_minus[k] = -w / scale;
            }
        }
        Ok(Self { rows, cols, g_plus, g_minus, scale })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn g_plus(&self) -> &[f64] {
        &self.g_plus
    }

    pub fn g_minus(&self) -> &[f64] {
        &self.g_minus
    }

    /// Effective weights `scale·(g⁺ − g⁻)`, `rows × cols`.
    pub fn read_back(&self) -> Tensor<f64> {
        let data = self.g_plus.iter().zip(&self.g_minus).map(|(p, m)| self.scale * (p - m)).collect();
        Tensor::new(vec![self.rows, self.cols], data).unwrap()
    }

    /// Bitline currents for wordline voltages `x`:
    /// `out_j = scale·Σ_i (g⁺_ij − g⁻_ij)·x_i`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::Shape(format!("crossbar has {} wordlines, input has {}", self.rows, x.len())));
        }
        let mut out = vec![0.0; self.cols];
        self.accumulate(x, &mut out);
        Ok(out)
    }

    fn accumulate(&self, x: &[f64], out: &mut [f64]) {
        let mut acc = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (p, m) = (&self.g_plus[i * self.cols..][..self.cols], &self.g_minus[i * self.cols..][..self.cols]);
            for ((a, &p), &m) in acc.iter_mut().zip(p).zip(m) {
                *a += (p - m) * xi;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o += self.scale * a;
        }
    }

    /// Copy with programming variation applied; `self` is the target state.
    pub fn with_variation(&self, model: &VariationModel, rng: &mut impl Rng) -> Result<Self> {
        model.validate()?;
        let mut out = self.clone();
        match model.kind {
            VariationKind::Gaussian { sigma, perturb_zero } => {
                if sigma == 0.0 {
                    return Ok(out);
                }
                let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
                for k in 0..self.g_plus.len() {
                    let target = self.scale * (self.g_plus[k] - self.g_minus[k]);
                    if target == 0.0 && !perturb_zero {
                        continue;
                    }
                    let w = target + rng.sample(normal);
                    (out.g_plus[k], out.g_minus[k]) = if w >= 0.0 { (w / self.scale, 0.0) } else { (0.0, -w / self.scale) };
                }
            }
            VariationKind::Lognormal(p) => {
                let hrs = rand_distr::LogNormal::new(p.mu_hrs, p.sigma_hrs).unwrap();
                let lrs = rand_distr::LogNormal::new(p.mu_lrs, p.sigma_lrs).unwrap();
                for g in out.g_plus.iter_mut().chain(out.g_minus.iter_mut()) {
                    *g = if *g > 0.0 { *g * rng.sample(lrs) } else { rng.sample(hrs) };
                }
            }
        }
        Ok(out)
    }

    /// Plain-text dump: a header line, then the `g⁺` and `g⁻` matrices one
    /// row per line. Values use shortest round-trip formatting.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "crossbar {} {} scale {}", self.rows, self.cols, self.scale).unwrap();
        for (label, g) in [("g_plus", &self.g_plus), ("g_minus", &self.g_minus)] {
            writeln!(out, "{label}").unwrap();
            for row in g.chunks(self.cols.max(1)) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        out
    }
}

/// A logical weight matrix spread over arrays of at most `tile × tile`.
/// Output partial sums from tiles stacked along the wordlines are added in
/// the digital domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledCrossbar {
    rows: usize,
    cols: usize,
    tile: usize,
    /// Row-major over tile positions.
    tiles: Vec<Crossbar>,
}

impl TiledCrossbar {
    pub fn program<T: Real>(weights: &Tensor<T>, scale: f64, tile: usize) -> Result<Self> {
        let &[rows, cols] = weights.shape() else {
            return Err(Error::Shape(format!("crossbar weights must be 2-D, got {:?}", weights.shape())));
        };
        if tile == 0 {
            return Err(Error::Config("tile size must be positive".into()));
        }
        let mut tiles = Vec::new();
        for r0 in (0..rows).step_by(tile) {
            let r1 = (r0 + tile).min(rows);
            for c0 in (0..cols).step_by(tile) {
                let c1 = (c0 + tile).min(cols);
                let mut block = Vec::with_capacity((r1 - r0) * (c1 - c0));
                for r in r0..r1 {
                    block.extend_from_slice(&weights.data()[r * cols + c0..r * cols + c1]);
                }
                tiles.push(Crossbar::program(&Tensor::new(vec![r1 - r0, c1 - c0], block)?, scale)?);
            }
        }
        Ok(Self { rows, cols, tile, tiles })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tiles(&self) -> &[Crossbar] {
        &self.tiles
    }

    fn col_tiles(&self) -> usize {
        self.cols.div_ceil(self.tile)
    }

    pub fn read_back(&self) -> Tensor<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        let ct = self.col_tiles();
        for (t, xbar) in self.tiles.iter().enumerate() {
            let (r0, c0) = ((t / ct) * self.tile, (t % ct) * self.tile);
            let block = xbar.read_back();
            for (r, row) in block.data().chunks_exact(xbar.cols()).enumerate() {
                out[(r0 + r) * self.cols + c0..][..row.len()].copy_from_slice(row);
            }
        }
        Tensor::new(vec![self.rows, self.cols], out).unwrap()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::Shape(format!("crossbar has {} wordlines, input has {}", self.rows, x.len())));
        }
        let mut out = vec![0.0; self.cols];
        let ct = self.col_tiles();
        for (t, xbar) in self.tiles.iter().enumerate() {
            let (r0, c0) = ((t / ct) * self.tile, (t % ct) * self.tile);
            xbar.accumulate(&x[r0..r0 + xbar.rows()], &mut out[c0..c0 + xbar.cols()]);
        }
        Ok(out)
    }

    pub fn with_variation(&self, model: &VariationModel, rng: &mut impl Rng) -> Result<Self> {
        let tiles = self.tiles.iter().map(|t| t.with_variation(model, rng)).collect::<Result<_>>()?;
        Ok(Self { tiles, ..self.clone() })
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "tiled {} {} tile {} count {}", self.rows, self.cols, self.tile, self.tiles.len()).unwrap();
        for (t, xbar) in self.tiles.iter().enumerate() {
            writeln!(out, "tile {t}").unwrap();
            out.push_str(&xbar.dump());
        }
        out
    }
}
