//! Synthetic skewed datasets over fixed representations, and a plain-text
//! embedding file format for externally computed vectors.
//!
//! Label conventions: `y = 1` is the positive ("happy") class; `g = 1` is the
//! minority-dialect group ("AAE"), `g = 0` the majority ("SAE").

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numkit::RealMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown split '{s}'")))
    }
}

/// Labelled rows of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: RealMatrix,
    pub y: Vec<usize>,
    pub g: Vec<usize>,
}

impl Samples {
    pub fn new(x: RealMatrix, y: Vec<usize>, g: Vec<usize>) -> Result<Self> {
        if y.len() != x.rows() || g.len() != x.rows() {
            return Err(Error::validation(format!(
                "{} rows but {} main and {} protected labels",
                x.rows(),
                y.len(),
                g.len()
            )));
        }
        Ok(Self { x, y, g })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Samples {
        Samples {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            g: rows.iter().map(|&i| self.g[i]).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.y.iter().max().map_or(2, |m| (m + 1).max(2))
    }

    pub fn num_protected(&self) -> usize {
        self.g.iter().max().map_or(2, |m| (m + 1).max(2))
    }

    /// Same labels, replaced features (e.g. hidden representations).
    pub fn with_features(&self, x: RealMatrix) -> Result<Samples> {
        Samples::new(x, self.y.clone(), self.g.clone())
    }
}

/// The four `(y, g)` cells in reporting order:
/// AAE–happy, SAE–happy, AAE–sad, SAE–sad.
pub const CELLS: [(usize, usize); 4] = [(1, 1), (1, 0), (0, 1), (0, 0)];

fn cell_index(y: usize, g: usize) -> usize {
    CELLS.iter().position(|&c| c == (y, g)).expect("binary labels")
}

/// Proportions over the four `(y, g)` cells, in [`CELLS`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewSpec {
    proportions: [f64; 4],
}

impl SkewSpec {
    pub fn new(proportions: [f64; 4]) -> Result<Self> {
        if proportions.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation(format!("cell proportions must lie in [0, 1]: {proportions:?}")));
        }
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("cell proportions sum to {sum}, not 1")));
        }
        Ok(Self { proportions })
    }

    /// 40 / 10 / 10 / 40: label and group agree in 80% of rows.
    pub fn skewed() -> Self {
        Self {
            proportions: [0.4, 0.1, 0.1, 0.4],
        }
    }

    pub fn uniform() -> Self {
        Self {
            proportions: [0.25; 4],
        }
    }

    pub fn proportions(&self) -> [f64; 4] {
        self.proportions
    }

    /// Exact cell sizes for `n` rows by largest-remainder apportionment.
    pub fn cell_counts(&self, n: usize) -> [usize; 4] {
        let parts = apportion(n, &self.proportions);
        [parts[0], parts[1], parts[2], parts[3]]
    }
}

/// Largest-remainder apportionment of `n` over `weights` (summing to 1).
/// Ties in the fractional part go to the lower index.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).expect("finite quotas").then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Feature generator standing in for a frozen pretrained encoder.
///
/// A row of class `y` and group `g` is `noise_sigma · z + main_signal ·
/// (2y − 1) · u_y + protected_signal · (2g − 1) · u_g`, where `z` is standard
/// normal and `u_y`, `u_g` are unit vectors spread evenly over `y_dims` and
/// `g_dims`. The signals are therefore class-mean offsets measured along each
/// subspace, independent of how many coordinates the subspace spans.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub d: usize,
    pub main_signal: f64,
    pub protected_signal: f64,
    pub noise_sigma: f64,
    pub y_dims: Vec<usize>,
    pub g_dims: Vec<usize>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            d: 48,
            main_signal: 1.0,
            protected_signal: 1.0,
            noise_sigma: 1.0,
            y_dims: (0..8).collect(),
            g_dims: (8..16).collect(),
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.y_dims.is_empty() || self.g_dims.is_empty() {
            return Err(Error::validation("y_dims and g_dims must be non-empty"));
        }
        if let Some(&bad) = self.y_dims.iter().chain(&self.g_dims).find(|&&i| i >= self.d) {
            return Err(Error::validation(format!("signal coordinate {bad} outside dimension {}", self.d)));
        }
        if self.y_dims.iter().any(|i| self.g_dims.contains(i)) {
            return Err(Error::validation("y_dims and g_dims must be disjoint"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::validation("noise_sigma must be > 0"));
        }
        if !self.main_signal.is_finite() || !self.protected_signal.is_finite() {
            return Err(Error::validation("signals must be finite"));
        }
        Ok(())
    }

    /// Deterministic row `index`: noise comes from a generator keyed by
    /// `(seed, index)` alone.
    fn row(&self, index: u64, y: usize, g: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut row: Vec<f64> = (0..self.d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.noise_sigma * z
            })
            .collect();
        let ys = self.main_signal * (2.0 * y as f64 - 1.0) / (self.y_dims.len() as f64).sqrt();
        let gs = self.protected_signal * (2.0 * g as f64 - 1.0) / (self.g_dims.len() as f64).sqrt();
        for &i in &self.y_dims {
            row[i] += ys;
        }
        for &i in &self.g_dims {
            row[i] += gs;
        }
        row
    }
}

/// Features with binary main and protected labels and a split tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: RealMatrix,
    pub y: Vec<usize>,
    pub g: Vec<usize>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn new(x: RealMatrix, y: Vec<usize>, g: Vec<usize>, split: Vec<Split>) -> Result<Self> {
        let n = x.rows();
        if y.len() != n || g.len() != n || split.len() != n {
            return Err(Error::validation(format!(
                "inconsistent lengths: x {n}, y {}, g {}, split {}",
                y.len(),
                g.len(),
                split.len()
            )));
        }
        if y.iter().chain(&g).any(|&v| v > 1) {
            return Err(Error::validation("labels must be 0 or 1"));
        }
        Ok(Self { x, y, g, split })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn subset(&self, split: Split) -> Samples {
        let idx = self.indices(split);
        Samples {
            x: self.x.select_rows(&idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            g: idx.iter().map(|&i| self.g[i]).collect(),
        }
    }

    /// Cell sizes of one split in [`CELLS`] order.
    pub fn cell_counts(&self, split: Split) -> [usize; 4] {
        let mut c = [0; 4];
        for i in self.indices(split) {
            c[cell_index(self.y[i], self.g[i])] += 1;
        }
        c
    }

    /// Writes the embedding text format: `n d` then `split y g v1 .. vd`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for i in 0..self.len() {
            out.push_str(&format!("{} {} {}", self.split[i], self.y[i], self.g[i]));
            for v in self.x.row(i) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or_else(|| perr(1, "missing header 'n d'".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (n, d) = match head.as_slice() {
            [a, b] => parse_usize(a)
                .zip(parse_usize(b))
                .ok_or_else(|| perr(ln, format!("bad header '{header}'")))?,
            _ => return Err(perr(ln, format!("header must be 'n d', got '{header}'"))),
        };
        let mut data = Vec::with_capacity(n * d);
        let (mut y, mut g, mut split) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if split.len() == n {
                return Err(perr(ln, format!("more than the {n} rows declared in the header")));
            }
            if f.len() != d + 3 {
                return Err(Error::Shape {
                    op: "load_embeddings",
                    left: crate::error::Shape(ln, f.len().saturating_sub(3)),
                    right: crate::error::Shape(n, d),
                });
            }
            let tag: Split = f[0].parse().map_err(|e: Error| perr(ln, e.to_string()))?;
            let label = |s: &str, name: &str| match s {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(perr(ln, format!("{name} must be 0 or 1, got '{s}'"))),
            };
            y.push(label(f[1], "y")?);
            g.push(label(f[2], "g")?);
            split.push(tag);
            for t in &f[3..] {
                let v: f64 = t.parse().map_err(|_| perr(ln, format!("bad value '{t}'")))?;
                if !v.is_finite() {
                    return Err(perr(ln, format!("non-finite value '{t}'")));
                }
                data.push(v);
            }
        }
        if split.len() != n {
            return Err(perr(0, format!("header declares {n} rows, found {}", split.len())));
        }
        Dataset::new(RealMatrix::from_vec(n, d, data)?, y, g, split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Reads an embedding file (see [`Dataset::to_text`]).
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_text(&fs::read_to_string(path)?)
}

/// Builds train/dev/test rows with exact cell counts: train and dev follow
/// `skew`, test is uniform over the four cells. Rows within a split are
/// shuffled deterministically.
pub fn generate_synthetic(
    gen: &GeneratorSpec,
    n_train: usize,
    n_dev: usize,
    n_test: usize,
    skew: &SkewSpec,
) -> Result<Dataset> {
    gen.validate()?;
    let n = n_train + n_dev + n_test;
    let mut data = Vec::with_capacity(n * gen.d);
    let (mut y, mut g, mut split) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let plan = [
        (Split::Train, n_train, *skew),
        (Split::Dev, n_dev, *skew),
        (Split::Test, n_test, SkewSpec::uniform()),
    ];
    for (s, (tag, size, spec)) in plan.into_iter().enumerate() {
        let mut labels: Vec<(usize, usize)> = spec
            .cell_counts(size)
            .iter()
            .zip(CELLS)
            .flat_map(|(&c, cell)| std::iter::repeat_n(cell, c))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(gen.seed ^ 0xD1B5_4A32_D192_ED03);
        rng.set_stream(s as u64);
        labels.shuffle(&mut rng);
        for (yi, gi) in labels {
            data.extend(gen.row(y.len() as u64, yi, gi));
            y.push(yi);
            g.push(gi);
            split.push(tag);
        }
    }
    Dataset::new(RealMatrix::from_vec(n, gen.d, data)?, y, g, split)
}

/// Assigns train/dev/test tags, stratified by `(y, g)` cell so that every
/// cell is split in the given ratio (up to one row).
pub fn make_splits(x: RealMatrix, y: Vec<usize>, g: Vec<usize>, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("split fractions must be in [0, 1] and sum to 1: {fractions:?}")));
    }
    let n = x.rows();
    let mut split = vec![Split::Train; n];
    let probe = Dataset::new(x, y, g, split.clone())?;
    for (c, &(cy, cg)) in CELLS.iter().enumerate() {
        let mut members: Vec<usize> = (0..n).filter(|&i| probe.y[i] == cy && probe.g[i] == cg).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        members.shuffle(&mut rng);
        let sizes = apportion(members.len(), &fractions);
        let mut it = members.into_iter();
        for (tag, size) in Split::ALL.into_iter().zip(sizes) {
            for i in it.by_ref().take(size) {
                split[i] = tag;
            }
        }
    }
    Dataset::new(probe.x, probe.y, probe.g, split)
}
