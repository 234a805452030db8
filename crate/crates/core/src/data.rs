//! Paired samples, CSV persistence, splitting, standardization and batching.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::{self, Purpose};
use crate::surrogate::{CircuitParams, TransformerGeometry};

pub const INPUT_DIM: usize = 6;

pub const INPUT_COLUMNS: [&str; 6] = ["lp_pH", "ls_pH", "k", "srf_GHz", "qp", "qs"];
pub const TARGET_COLUMNS: [&str; 6] = ["w_oa_um", "w_ob_um", "r0_um", "r1_um", "x_gnd_um", "l_f_um"];

/// Index of the feed length in the full target vector.
pub const FEED_LENGTH: usize = 5;

/// Circuit parameters `x` (n × 6) paired with geometry targets `y` (n × d).
///
/// `d` is 6, or 5 when the feed length has been dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        let ds = Dataset { x, y };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_pairs(pairs: &[(CircuitParams, TransformerGeometry)]) -> Result<Self> {
        let n = pairs.len();
        let mut x = Array2::zeros((n, INPUT_DIM));
        let mut y = Array2::zeros((n, 6));
        for (i, (c, g)) in pairs.iter().enumerate() {
            x.row_mut(i).assign(&Array1::from(c.to_array().to_vec()));
            y.row_mut(i).assign(&Array1::from(g.to_array().to_vec()));
        }
        Dataset::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target_dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn has_feed_length(&self) -> bool {
        self.target_dim() == 6
    }

    pub fn target_columns(&self) -> &'static [&'static str] {
        &TARGET_COLUMNS[..self.target_dim()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.ncols() != INPUT_DIM {
            return Err(Error::InvalidDataset(format!(
                "expected {INPUT_DIM} input columns, found {}",
                self.x.ncols()
            )));
        }
        if self.x.nrows() != self.y.nrows() {
            return Err(Error::InvalidDataset(format!(
                "row count mismatch: {} inputs vs {} targets",
                self.x.nrows(),
                self.y.nrows()
            )));
        }
        if !(self.target_dim() == 5 || self.target_dim() == 6) {
            return Err(Error::InvalidDataset(format!(
                "expected 5 or 6 target columns, found {}",
                self.target_dim()
            )));
        }
        if let Some(v) = self.x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite input {v}")));
        }
        for ((row, col), &v) in self.y.indexed_iter() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidDataset(format!(
                    "target ({row}, {col}) = {v} must be positive and finite"
                )));
            }
        }
        Ok(())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
        }
    }

    /// Drops the feed-length target column.
    pub fn exclude_feed_length(&self) -> Result<Dataset> {
        if !self.has_feed_length() {
            return Err(Error::AlreadyExcluded);
        }
        let keep: Vec<usize> = (0..6).filter(|&j| j != FEED_LENGTH).collect();
        Ok(Dataset {
            x: self.x.clone(),
            y: self.y.select(Axis(1), &keep),
        })
    }

    pub fn circuit(&self, row: usize) -> CircuitParams {
        let r = self.x.row(row);
        CircuitParams::from_array([r[0], r[1], r[2], r[3], r[4], r[5]])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<&str> = INPUT_COLUMNS
            .iter()
            .chain(self.target_columns())
            .copied()
            .collect();
        w.write_record(&header)?;
        for (xr, yr) in self.x.rows().into_iter().zip(self.y.rows()) {
            w.write_record(xr.iter().chain(yr.iter()).map(|v| fmt_f64(*v)))?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(f))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let d = header.len().saturating_sub(INPUT_DIM);
        let expected: Vec<&str> = INPUT_COLUMNS
            .iter()
            .chain(&TARGET_COLUMNS[..d.min(6)])
            .copied()
            .collect();
        let full_minus_feed: Vec<&str> = INPUT_COLUMNS
            .iter()
            .chain(&TARGET_COLUMNS[..FEED_LENGTH])
            .copied()
            .collect();
        if !(d == 6 && header == expected || d == 5 && header == full_minus_feed) {
            return Err(Error::InvalidDataset(format!(
                "unexpected header {}",
                header.join(",")
            )));
        }
        let mut flat = Vec::new();
        let mut n = 0;
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::InvalidDataset(format!(
                    "row {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    header.len()
                )));
            }
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| {
                        Error::InvalidDataset(format!("row {}: bad number {field:?}", line + 1))
                    })?;
                flat.push(v);
            }
            n += 1;
        }
        let all = Array2::from_shape_vec((n, INPUT_DIM + d), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let x = all.slice(ndarray::s![.., ..INPUT_DIM]).to_owned();
        let y = all.slice(ndarray::s![.., INPUT_DIM..]).to_owned();
        Dataset::new(x, y)
    }

    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(BufReader::new(f))
    }
}

/// Formats with 17 significant digits; parsing the result gives back the
/// same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Splits into `(test, train)`. The test rows are the first `test_n` entries
/// of a seeded permutation and the training rows the next `train_n`, so for a
/// fixed seed all training sizes share one test set and smaller training sets
/// are prefixes of larger ones.
pub fn split(ds: &Dataset, test_n: usize, train_n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let (test_idx, train_idx) = split_indices(ds.len(), test_n, train_n, seed)?;
    Ok((ds.select(&test_idx), ds.select(&train_idx)))
}

pub fn split_indices(
    n: usize,
    test_n: usize,
    train_n: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if test_n + train_n > n {
        return Err(Error::SplitSize {
            test: test_n,
            train: train_n,
            available: n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    let test = perm[..test_n].to_vec();
    let train = perm[test_n..test_n + train_n].to_vec();
    Ok((test, train))
}

/// Per-feature affine map to zero mean and unit population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidDataset("cannot standardize an empty set".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0);
        for (j, col) in x.columns().into_iter().enumerate() {
            let first = col[0];
            if col.iter().all(|&v| v == first) || !(std[j] > 0.0) {
                return Err(Error::DegenerateFeature(j));
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }

    pub fn invert(&self, z: &Array2<f64>) -> Array2<f64> {
        z * &self.std + &self.mean
    }
}

/// Index batches for one epoch: a shuffle seeded by `(seed, epoch)` cut into
/// consecutive chunks of `batch`; the last chunk may be short.
pub fn minibatches(n: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch >= 1, "batch size must be positive");
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::derived_rng(seed, Purpose::Batching, epoch as u64));
    perm.chunks(batch).map(|c| c.to_vec()).collect()
}
