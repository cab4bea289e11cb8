//! Per-(sample, anchor) weights `W_ji` for sample `j` at anchor time `T_i`.

use std::path::Path;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum WeightMatrix {
    /// `W ≡ 1`.
    Unit,
    /// `W_ji = c_i`: one constant per anchor column.
    Column(Vec<f64>),
    /// Row-major `n × n`, entry `(j, i)` at `data[j * n + i]`.
    Dense { n: usize, data: Vec<f64> },
}

impl WeightMatrix {
    pub fn dense_from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                data.push(f(j, i));
            }
        }
        WeightMatrix::Dense { n, data }
    }

    #[inline]
    pub fn get(&self, j: usize, i: usize) -> f64 {
        match self {
            WeightMatrix::Unit => 1.0,
            WeightMatrix::Column(c) => c[i],
            WeightMatrix::Dense { n, data } => data[j * n + i],
        }
    }

    /// True when `W_ji` does not depend on `j`.
    pub fn is_column_constant(&self) -> bool {
        !matches!(self, WeightMatrix::Dense { .. })
    }

    pub fn column_constant(&self, i: usize) -> Option<f64> {
        match self {
            WeightMatrix::Unit => Some(1.0),
            WeightMatrix::Column(c) => Some(c[i]),
            WeightMatrix::Dense { .. } => None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let entries: &[f64] = match self {
            WeightMatrix::Unit => return Ok(()),
            WeightMatrix::Column(c) => {
                if c.len() != n {
                    return Err(invalid(format!(
                        "weight columns: {} entries for n = {n}",
                        c.len()
                    )));
                }
                c
            }
            WeightMatrix::Dense { n: m, data } => {
                if *m != n || data.len() != n * n {
                    return Err(invalid(format!(
                        "dense weights sized for n = {m}, dataset has n = {n}"
                    )));
                }
                data
            }
        };
        if let Some(k) = entries.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid(format!(
                "weight entry {k} is not positive and finite"
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64, n: usize) -> Self {
        match self {
            WeightMatrix::Unit => WeightMatrix::Column(vec![c; n]),
            WeightMatrix::Column(v) => WeightMatrix::Column(v.iter().map(|w| w * c).collect()),
            WeightMatrix::Dense { n, data } => WeightMatrix::Dense {
                n: *n,
                data: data.iter().map(|w| w * c).collect(),
            },
        }
    }

    /// Restricts rows and columns to `indices` (in that order).
    pub fn restrict(&self, indices: &[usize]) -> Self {
        match self {
            WeightMatrix::Unit => WeightMatrix::Unit,
            WeightMatrix::Column(c) => {
                WeightMatrix::Column(indices.iter().map(|&i| c[i]).collect())
            }
            WeightMatrix::Dense { .. } => {
                WeightMatrix::dense_from_fn(indices.len(), |a, b| self.get(indices[a], indices[b]))
            }
        }
    }

    /// Long-format CSV with columns `sample,anchor,weight`; unlisted entries are 1.
    pub fn load_csv(path: &Path, n: usize) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut data = vec![1.0; n * n];
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || {
                invalid(format!(
                    "weights row {}: expected sample,anchor,weight",
                    r + 1
                ))
            };
            if rec.len() != 3 {
                return Err(bad());
            }
            let j: usize = rec[0].parse().map_err(|_| bad())?;
            let i: usize = rec[1].parse().map_err(|_| bad())?;
            let w: f64 = rec[2].parse().map_err(|_| bad())?;
            if j >= n || i >= n {
                return Err(invalid(format!(
                    "weights row {}: index out of range",
                    r + 1
                )));
            }
            data[j * n + i] = w;
        }
        let out = WeightMatrix::Dense { n, data };
        out.validate(n)?;
        Ok(out)
    }
}
