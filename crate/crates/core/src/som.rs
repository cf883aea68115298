//! Self-organizing map categorization of node features.
//!
//! Features are min-max scaled per column, a rectangular lattice of weight
//! vectors is trained with the online Kohonen rule, and every node goes to
//! its best-matching unit (BMU). Cell `(x, y)` has linear index
//! `y * width + x`; `x` grows rightward and `y` upward when drawn.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{FEATURE_COUNT, FEATURE_NAMES};
use crate::{seeded_rng, SimRng};

pub type FeatureVec = [f64; FEATURE_COUNT];

/// Per-column scaling: optional `log10(1 + x)`, then `(x - min) / (max - min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: FeatureVec,
    pub max: FeatureVec,
    pub log_scaled: [bool; FEATURE_COUNT],
}

impl NormParams {
    pub fn normalize(&self, raw: &FeatureVec) -> FeatureVec {
        std::array::from_fn(|c| {
            let x = if self.log_scaled[c] {
                (1.0 + raw[c]).log10()
            } else {
                raw[c]
            };
            let span = self.max[c] - self.min[c];
            if span > 0.0 {
                (x - self.min[c]) / span
            } else {
                0.5
            }
        })
    }

    /// Inverse of [`normalize`](Self::normalize) for non-constant columns.
    pub fn denormalize(&self, scaled: &FeatureVec) -> FeatureVec {
        std::array::from_fn(|c| {
            let span = self.max[c] - self.min[c];
            let x = if span > 0.0 {
                self.min[c] + scaled[c] * span
            } else {
                self.min[c]
            };
            if self.log_scaled[c] {
                10f64.powf(x) - 1.0
            } else {
                x
            }
        })
    }
}

/// Parses a comma-separated list of feature names (e.g. `"k,b"`) into a
/// log-scaling mask.
pub fn parse_log_features(list: &str) -> Result<[bool; FEATURE_COUNT]> {
    let mut mask = [false; FEATURE_COUNT];
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let idx = FEATURE_NAMES
            .iter()
            .position(|f| *f == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature {name:?}")))?;
        mask[idx] = true;
    }
    Ok(mask)
}

/// Min-max scales every column to `[0, 1]`; constant columns map to 0.5.
pub fn normalize_features(
    raw: &[FeatureVec],
    log_scaled: [bool; FEATURE_COUNT],
) -> Result<(Vec<FeatureVec>, NormParams)> {
    if raw.len() < 2 {
        return Err(Error::TooSmall(format!(
            "normalization needs at least 2 rows, got {}",
            raw.len()
        )));
    }
    let mut min = [f64::INFINITY; FEATURE_COUNT];
    let mut max = [f64::NEG_INFINITY; FEATURE_COUNT];
    for (row, values) in raw.iter().enumerate() {
        for column in 0..FEATURE_COUNT {
            let x = values[column];
            let x = if log_scaled[column] {
                (1.0 + x).log10()
            } else {
                x
            };
            if !x.is_finite() {
                return Err(Error::NonFinite { column, row });
            }
            min[column] = min[column].min(x);
            max[column] = max[column].max(x);
        }
    }
    let params = NormParams {
        min,
        max,
        log_scaled,
    };
    let scaled = raw.iter().map(|r| params.normalize(r)).collect();
    Ok((scaled, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomConfig {
    pub width: usize,
    pub height: usize,
    pub epochs: usize,
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// Defaults to `max(width, height) / 2` when `None`.
    pub sigma_start: Option<f64>,
    pub sigma_end: f64,
}

impl Default for SomConfig {
    fn default() -> Self {
        SomConfig {
            width: 5,
            height: 5,
            epochs: 20,
            alpha_start: 0.5,
            alpha_end: 0.01,
            sigma_start: None,
            sigma_end: 0.5,
        }
    }
}

impl SomConfig {
    pub fn sigma_start(&self) -> f64 {
        self.sigma_start
            .unwrap_or(self.width.max(self.height) as f64 / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomGrid {
    pub width: usize,
    pub height: usize,
    pub norm_params: NormParams,
    /// Row-major: cell `(x, y)` at `y * width + x`.
    pub weights: Vec<FeatureVec>,
}

impl SomGrid {
    /// Uniform random weights in `[0, 1]^5`.
    pub fn random(
        width: usize,
        height: usize,
        norm_params: NormParams,
        rng: &mut SimRng,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let weights = (0..width * height)
            .map(|_| std::array::from_fn(|_| rng.gen::<f64>()))
            .collect();
        Ok(SomGrid {
            width,
            height,
            norm_params,
            weights,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    /// Best-matching unit by Euclidean distance; ties go to the lowest
    /// linear index.
    pub fn bmu(&self, sample: &FeatureVec) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (idx, w) in self.weights.iter().enumerate() {
            let d = squared_distance(w, sample);
            if d < best_dist {
                best = idx;
                best_dist = d;
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: SomGrid = serde_json::from_str(text)?;
        check_dims(grid.width, grid.height)?;
        if grid.weights.len() != grid.cell_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.cell_count(),
                got: grid.weights.len(),
            });
        }
        if grid.weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("non-finite SOM weight".into()));
        }
        Ok(grid)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width * height < 2 {
        return Err(Error::InvalidParameter(format!(
            "SOM lattice {width}x{height} needs at least 2 cells"
        )));
    }
    Ok(())
}

#[inline]
fn squared_distance(a: &FeatureVec, b: &FeatureVec) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean Euclidean distance from each sample to its BMU weight.
pub fn quantization_error(grid: &SomGrid, data: &[FeatureVec]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let total: f64 = data
        .iter()
        .map(|x| squared_distance(&grid.weights[grid.bmu(x)], x).sqrt())
        .sum();
    total / data.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSummary {
    pub initial_quantization_error: f64,
    pub final_quantization_error: f64,
}

pub fn train_som(
    data: &[FeatureVec],
    norm_params: NormParams,
    config: &SomConfig,
    seed: u64,
) -> Result<SomGrid> {
    train_som_with_summary(data, norm_params, config, seed).map(|(g, _)| g)
}

/// Online Kohonen training with exponentially decaying learning rate and
/// Gaussian neighborhood width over `epochs * N` presentations. Samples are
/// visited in a freshly shuffled order each epoch.
pub fn train_som_with_summary(
    data: &[FeatureVec],
    norm_params: NormParams,
    config: &SomConfig,
    seed: u64,
) -> Result<(SomGrid, TrainingSummary)> {
    if data.is_empty() {
        return Err(Error::TooSmall(
            "SOM training needs at least one sample".into(),
        ));
    }
    if config.epochs < 1 {
        return Err(Error::InvalidParameter("SOM epochs must be >= 1".into()));
    }
    let sigma_start = config.sigma_start();
    for (name, v) in [
        ("alpha_start", config.alpha_start),
        ("alpha_end", config.alpha_end),
        ("sigma_start", sigma_start),
        ("sigma_end", config.sigma_end),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }

    let mut rng = seeded_rng(seed);
    let mut grid = SomGrid::random(config.width, config.height, norm_params, &mut rng)?;
    let initial = quantization_error(&grid, data);

    let coords: Vec<(f64, f64)> = (0..grid.cell_count())
        .map(|i| {
            let (x, y) = grid.coords(i);
            (x as f64, y as f64)
        })
        .collect();
    let total = config.epochs * data.len();
    let denom = (total.saturating_sub(1)).max(1) as f64;
    let alpha_ratio = config.alpha_end / config.alpha_start;
    let sigma_ratio = config.sigma_end / sigma_start;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let frac = step as f64 / denom;
            let alpha = config.alpha_start * alpha_ratio.powf(frac);
            let sigma = sigma_start * sigma_ratio.powf(frac);
            let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);

            let sample = &data[idx];
            let (bx, by) = coords[grid.bmu(sample)];
            for (w, &(cx, cy)) in grid.weights.iter_mut().zip(&coords) {
                let d2 = (cx - bx) * (cx - bx) + (cy - by) * (cy - by);
                let rate = alpha * (-d2 * inv_two_sigma_sq).exp();
                for (wc, xc) in w.iter_mut().zip(sample) {
                    *wc += rate * (xc - *wc);
                }
            }
            step += 1;
        }
    }

    let summary = TrainingSummary {
        initial_quantization_error: initial,
        final_quantization_error: quantization_error(&grid, data),
    };
    Ok((grid, summary))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellAssignment {
    pub width: usize,
    pub height: usize,
    /// Linear cell index per node.
    pub cells: Vec<usize>,
}

impl CellAssignment {
    pub fn node_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        let c = self.cells[node];
        (c % self.width, c / self.width)
    }

    /// Number of nodes in each cell.
    pub fn populations(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cell_count()];
        for &c in &self.cells {
            counts[c] += 1;
        }
        counts
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["node", "X", "Y"])?;
        for node in 0..self.node_count() {
            let (x, y) = self.coords(node);
            w.write_record([node.to_string(), x.to_string(), y.to_string()])?;
        }
        crate::error::finish_csv(w)
    }

    /// Parses `node,X,Y`. Lattice dimensions come from `dims` when given,
    /// otherwise from the largest coordinates present.
    pub fn from_csv(text: &str, dims: Option<(usize, usize)>, origin: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut coords = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 2,
                msg,
            };
            let parse = |col: usize| -> Result<usize> {
                record
                    .get(col)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(format!("bad integer in column {col}")))
            };
            if parse(0)? != idx {
                return Err(bad("rows must be in node order".into()));
            }
            coords.push((parse(1)?, parse(2)?));
        }
        let (width, height) = dims.unwrap_or_else(|| {
            let w = coords.iter().map(|c| c.0).max().map_or(1, |m| m + 1);
            let h = coords.iter().map(|c| c.1).max().map_or(1, |m| m + 1);
            (w, h)
        });
        let mut cells = Vec::with_capacity(coords.len());
        for (node, (x, y)) in coords.into_iter().enumerate() {
            if x >= width || y >= height {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: node + 2,
                    msg: format!("cell ({x},{y}) outside {width}x{height} lattice"),
                });
            }
            cells.push(y * width + x);
        }
        Ok(CellAssignment {
            width,
            height,
            cells,
        })
    }
}

/// Maps each (normalized) sample to its BMU.
pub fn assign_nodes(grid: &SomGrid, data: &[FeatureVec]) -> CellAssignment {
    CellAssignment {
        width: grid.width,
        height: grid.height,
        cells: data.iter().map(|x| grid.bmu(x)).collect(),
    }
}

/// Per-cell node count and mean of each raw feature. Empty cells carry
/// `None` rather than zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<usize>,
    pub means: Vec<Option<FeatureVec>>,
}

pub fn cell_stats(assignment: &CellAssignment, raw: &[FeatureVec]) -> Result<CellStats> {
    if raw.len() != assignment.node_count() {
        return Err(Error::DimensionMismatch {
            expected: assignment.node_count(),
            got: raw.len(),
        });
    }
    let cells = assignment.cell_count();
    let mut sums = vec![[0.0; FEATURE_COUNT]; cells];
    let counts = assignment.populations();
    for (row, &cell) in raw.iter().zip(&assignment.cells) {
        for (s, v) in sums[cell].iter_mut().zip(row) {
            *s += v;
        }
    }
    let means = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s.map(|v| v / n as f64)))
        .collect();
    Ok(CellStats {
        width: assignment.width,
        height: assignment.height,
        counts,
        means,
    })
}

impl CellStats {
    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Mean of one feature per cell (`None` for empty cells).
    pub fn component(&self, feature: usize) -> Vec<Option<f64>> {
        self.means.iter().map(|m| m.map(|v| v[feature])).collect()
    }

    /// Rows `X,Y,count,mean_k,...` in linear cell order; empty cells leave
    /// the mean fields blank.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "X",
            "Y",
            "count",
            "mean_k",
            "mean_k_nn",
            "mean_b",
            "mean_L",
            "mean_C",
        ])?;
        for idx in 0..self.cell_count() {
            let mut rec = vec![
                (idx % self.width).to_string(),
                (idx / self.width).to_string(),
                self.counts[idx].to_string(),
            ];
            match &self.means[idx] {
                Some(m) => rec.extend(m.iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), FEATURE_COUNT)),
            }
            w.write_record(&rec)?;
        }
        crate::error::finish_csv(w)
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 2,
                msg,
            };
            let int = |col: usize| -> Result<usize> {
                record
                    .get(col)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(format!("bad integer in column {col}")))
            };
            let (x, y, count) = (int(0)?, int(1)?, int(2)?);
            let fields: Vec<&str> = (3..3 + FEATURE_COUNT)
                .map(|c| record.get(c).unwrap_or(""))
                .collect();
            let means = if fields.iter().all(|f| f.is_empty()) {
                None
            } else {
                let mut m = [0.0; FEATURE_COUNT];
                for (slot, f) in m.iter_mut().zip(&fields) {
                    *slot = f.parse().map_err(|_| bad(format!("bad mean {f:?}")))?;
                }
                Some(m)
            };
            rows.push((x, y, count, means));
        }
        let width = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let height = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if rows.len() != width * height {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 0,
                msg: format!(
                    "expected {} cell rows, found {}",
                    width * height,
                    rows.len()
                ),
            });
        }
        let mut counts = vec![0; width * height];
        let mut means = vec![None; width * height];
        for (x, y, count, m) in rows {
            counts[y * width + x] = count;
            means[y * width + x] = m;
        }
        Ok(CellStats {
            width,
            height,
            counts,
            means,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_rows(col: &[f64]) -> Vec<FeatureVec> {
        col.iter().map(|&v| [v, 1.0, 2.0, 3.0, 4.0]).collect()
    }

    #[test]
    fn constant_column_maps_to_half() {
        let (scaled, _) = normalize_features(&column_rows(&[2.0, 2.0, 2.0]), [false; 5]).unwrap();
        assert!(scaled.iter().all(|r| r[0] == 0.5));
    }

    #[test]
    fn min_max_scaling() {
        let (scaled, p) = normalize_features(&column_rows(&[0.0, 5.0, 10.0]), [false; 5]).unwrap();
        assert_eq!(
            scaled.iter().map(|r| r[0]).collect::<Vec<_>>(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!((p.min[0], p.max[0]), (0.0, 10.0));
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let raw = vec![
            [3.0, 7.5, 0.01, 2.2, 0.3],
            [9.0, 4.0, 0.2, 3.1, 0.0],
            [4.0, 5.5, 0.0, 2.7, 1.0],
        ];
        for log in [[false; 5], [true, false, true, false, false]] {
            let (scaled, p) = normalize_features(&raw, log).unwrap();
            for (r, s) in raw.iter().zip(&scaled) {
                let back = p.denormalize(s);
                for c in 0..5 {
                    assert!((back[c] - r[c]).abs() < 1e-12, "{back:?} vs {r:?}");
                }
            }
        }
    }

    #[test]
    fn normalization_errors() {
        assert!(normalize_features(&column_rows(&[1.0]), [false; 5]).is_err());
        assert!(matches!(
            normalize_features(&column_rows(&[1.0, f64::NAN]), [false; 5]),
            Err(Error::NonFinite { column: 0, row: 1 })
        ));
    }

    #[test]
    fn log_feature_names() {
        assert_eq!(
            parse_log_features("k,b").unwrap(),
            [true, false, true, false, false]
        );
        assert_eq!(parse_log_features("").unwrap(), [false; 5]);
        assert!(parse_log_features("q").is_err());
    }

    fn trivial_norm() -> NormParams {
        NormParams {
            min: [0.0; 5],
            max: [1.0; 5],
            log_scaled: [false; 5],
        }
    }

    #[test]
    fn identical_samples_share_one_cell() {
        let data = vec![[0.3, 0.6, 0.1, 0.9, 0.5]; 50];
        let grid = train_som(&data, trivial_norm(), &SomConfig::default(), 4).unwrap();
        let a = assign_nodes(&grid, &data);
        assert!(a.cells.iter().all(|&c| c == a.cells[0]));
    }

    #[test]
    fn assignment_picks_exact_weight_and_breaks_ties_low() {
        let mut rng = seeded_rng(1);
        let mut grid = SomGrid::random(3, 2, trivial_norm(), &mut rng).unwrap();
        let probe = grid.weights[4];
        assert_eq!(assign_nodes(&grid, &[probe]).cells, vec![4]);

        grid.weights[1] = [0.0; 5];
        grid.weights[5] = [0.0; 5];
        grid.weights[0] = [1.0; 5];
        let sample = [[0.0; 5]];
        assert_eq!(assign_nodes(&grid, &sample).cells, vec![1]);
    }

    #[test]
    fn training_rejects_bad_config() {
        let data = vec![[0.0; 5]; 3];
        let cfg = SomConfig {
            width: 1,
            height: 1,
            ..Default::default()
        };
        assert!(train_som(&data, trivial_norm(), &cfg, 0).is_err());
        let cfg = SomConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(train_som(&data, trivial_norm(), &cfg, 0).is_err());
        assert!(train_som(&[], trivial_norm(), &SomConfig::default(), 0).is_err());
    }

    #[test]
    fn grid_json_round_trip_and_validation() {
        let data = vec![[0.1, 0.2, 0.3, 0.4, 0.5], [0.9, 0.8, 0.7, 0.6, 0.5]];
        let grid = train_som(&data, trivial_norm(), &SomConfig::default(), 2).unwrap();
        assert_eq!(SomGrid::from_json(&grid.to_json().unwrap()).unwrap(), grid);

        let mut broken = grid.clone();
        broken.weights.pop();
        assert!(matches!(
            SomGrid::from_json(&broken.to_json().unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stats_means_and_empty_cells() {
        let a = CellAssignment {
            width: 2,
            height: 1,
            cells: vec![0, 0],
        };
        let raw = vec![[2.0, 1.0, 0.0, 1.0, 0.0], [4.0, 3.0, 0.5, 2.0, 1.0]];
        let s = cell_stats(&a, &raw).unwrap();
        assert_eq!(s.counts, vec![2, 0]);
        assert_eq!(s.means[0].unwrap()[0], 3.0);
        assert!(s.means[1].is_none());
        assert_eq!(s.total(), 2);
    }

    #[test]
    fn csv_round_trips() {
        let a = CellAssignment {
            width: 3,
            height: 2,
            cells: vec![0, 5, 2, 2],
        };
        let text = a.to_csv().unwrap();
        assert!(text.starts_with("node,X,Y\n0,0,0\n1,2,1\n"));
        assert_eq!(
            CellAssignment::from_csv(&text, Some((3, 2)), Path::new("a")).unwrap(),
            a
        );

        let raw = vec![[1.0; 5], [2.0; 5], [3.0; 5], [0.25; 5]];
        let s = cell_stats(&a, &raw).unwrap();
        let text = s.to_csv().unwrap();
        assert!(text.contains("\n1,0,0,,,,,\n"));
        assert_eq!(CellStats::from_csv(&text, Path::new("s")).unwrap(), s);
    }
}
