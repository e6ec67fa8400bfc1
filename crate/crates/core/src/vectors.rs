//! Keyword vector tables and dimensionality reduction.
//!
//! Tables are stored in a plain text format: a header line
//! `dim=<m> count=<n>` followed by `n` lines of `keyword<TAB>f1 f2 ... fm`.
//! Values are written with shortest round-trip formatting, so a table written
//! and read back is bit-identical.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("keyword {keyword:?} has dimension {found}, expected {expected}")]
    Dimension {
        keyword: String,
        expected: usize,
        found: usize,
    },
    #[error("keyword {keyword:?} has a non-finite component")]
    NonFinite { keyword: String },
    #[error("table dimension {found} does not match configured n_components {expected}")]
    ComponentMismatch { expected: usize, found: usize },
    #[error("cannot reduce to {m} components from dimension {d}")]
    Components { m: usize, d: usize },
    #[error("need at least 2 rows for PCA, got {0}")]
    TooFewRows(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Keyword to fixed-dimension vector map. Row order is the order of first
/// appearance in the source.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorTable {
    dim: usize,
    keys: Vec<String>,
    rows: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

/// Raw sentence embeddings of keywords.
pub type EmbeddingTable = VectorTable;
/// Reduced keyword vectors used for clustering.
pub type ReducedTable = VectorTable;

impl VectorTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    /// Insert or replace a row. Returns `true` when the keyword already existed.
    pub fn insert(&mut self, keyword: String, row: Vec<f64>) -> Result<bool, VectorError> {
        if row.len() != self.dim {
            return Err(VectorError::Dimension {
                keyword,
                expected: self.dim,
                found: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(VectorError::NonFinite { keyword });
        }
        match self.index.get(&keyword) {
            Some(&i) => {
                self.rows[i] = row;
                Ok(true)
            }
            None => {
                self.index.insert(keyword.clone(), self.keys.len());
                self.keys.push(keyword);
                self.rows.push(row);
                Ok(false)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, keyword: &str) -> Option<&[f64]> {
        self.index.get(keyword).map(|&i| self.rows[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.keys
            .iter()
            .zip(&self.rows)
            .map(|(k, r)| (k.as_str(), r.as_slice()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim={} count={}\n", self.dim, self.len());
        for (k, row) in self.iter() {
            out.push_str(k);
            out.push('\t');
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write!(out, "{x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), VectorError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut dim = None;
    let mut count = None;
    for part in line.split_whitespace() {
        let (key, value) = part.split_once('=')?;
        match key {
            "dim" => dim = value.parse().ok(),
            "count" => count = value.parse().ok(),
            _ => return None,
        }
    }
    Some((dim?, count?))
}

/// Parse a vector table. An input with no header is an empty table.
///
/// Repeated keywords keep their first position and take the last value.
pub fn read_vectors<R: BufRead>(reader: R) -> Result<VectorTable, VectorError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Ok(VectorTable::new(0)),
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
        }
    };
    let (dim, count) = parse_header(&header).ok_or_else(|| VectorError::Format {
        line: 1,
        message: format!("expected header `dim=<m> count=<n>`, got {header:?}"),
    })?;
    let mut table = VectorTable::new(dim);
    let mut rows = 0;
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (keyword, values) = line.split_once('\t').ok_or_else(|| VectorError::Format {
            line: i + 1,
            message: "missing tab after keyword".into(),
        })?;
        let row = values
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| VectorError::Format {
                line: i + 1,
                message: format!("bad number for {keyword:?}: {e}"),
            })?;
        if table.insert(keyword.to_string(), row)? {
            log::warn!("duplicate keyword {keyword:?} on line {}; keeping the last row", i + 1);
        }
        rows += 1;
    }
    if rows != count {
        return Err(VectorError::Format {
            line: 1,
            message: format!("header declares {count} rows, found {rows}"),
        });
    }
    Ok(table)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, VectorError> {
    let file = std::fs::File::open(path)?;
    read_vectors(BufReader::new(file))
}

/// Load externally reduced vectors and check they have `n_components` columns.
pub fn load_reduced(path: &Path, n_components: usize) -> Result<ReducedTable, VectorError> {
    let table = load_embeddings(path)?;
    if !table.is_empty() && table.dim() != n_components {
        return Err(VectorError::ComponentMismatch {
            expected: n_components,
            found: table.dim(),
        });
    }
    Ok(table)
}

/// Principal axes of a table, ordered by descending explained variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One unit-length axis per row.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each axis.
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn fit(table: &EmbeddingTable, m: usize) -> Result<Self, VectorError> {
        let d = table.dim();
        let n = table.len();
        if m == 0 || m > d {
            return Err(VectorError::Components { m, d });
        }
        if n < 2 {
            return Err(VectorError::TooFewRows(n));
        }
        let mut mean = vec![0.0; d];
        for row in table.rows() {
            for (acc, x) in mean.iter_mut().zip(row) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|x| *x /= n as f64);

        let mut cov = DMatrix::<f64>::zeros(d, d);
        for row in table.rows() {
            let centered: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for a in 0..d {
                for b in a..d {
                    cov[(a, b)] += centered[a] * centered[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / (n - 1) as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let mut components = Vec::with_capacity(m);
        let mut variances = Vec::with_capacity(m);
        for &k in order.iter().take(m) {
            let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // sign convention: largest-magnitude entry is positive
            let pivot = axis
                .iter()
                .enumerate()
                .fold(0, |best, (i, v)| if v.abs() > axis[best].abs() { i } else { best });
            if axis[pivot] < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            components.push(axis);
            variances.push(eig.eigenvalues[k].max(0.0));
        }
        Ok(PcaModel {
            mean,
            components,
            variances,
        })
    }

    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|axis| {
                axis.iter()
                    .zip(row.iter().zip(&self.mean))
                    .map(|(a, (x, m))| a * (x - m))
                    .sum()
            })
            .collect()
    }

    /// Map reduced coordinates back into the original space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, axis) in coords.iter().zip(&self.components) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += c * a;
            }
        }
        out
    }

    pub fn transform(&self, table: &EmbeddingTable) -> ReducedTable {
        let projected: Vec<Vec<f64>> = table.rows().par_iter().map(|r| self.project(r)).collect();
        let mut out = VectorTable::new(self.components.len());
        for (k, row) in table.keys().iter().zip(projected) {
            out.insert(k.clone(), row)
                .expect("projection keeps dimension and finiteness");
        }
        out
    }
}

/// Project a table onto its top `m` principal components.
pub fn pca_reduce(table: &EmbeddingTable, m: usize) -> Result<ReducedTable, VectorError> {
    Ok(PcaModel::fit(table, m)?.transform(table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, Vec<f64>)]) -> VectorTable {
        let mut t = VectorTable::new(rows[0].1.len());
        for (k, r) in rows {
            t.insert(k.to_string(), r.clone()).unwrap();
        }
        t
    }

    #[test]
    fn reads_three_rows() {
        let mut text = String::from("dim=8 count=3\n");
        for k in ["a", "b", "c"] {
            text.push_str(&format!("{k}\t1 2 3 4 5 6 7 8\n"));
        }
        let t = read_vectors(text.as_bytes()).unwrap();
        assert_eq!((t.len(), t.dim()), (3, 8));
    }

    #[test]
    fn short_row_names_keyword() {
        let text = "dim=8 count=2\na\t1 2 3 4 5 6 7 8\nbad\t1 2 3 4 5 6 7\n";
        match read_vectors(text.as_bytes()) {
            Err(VectorError::Dimension { keyword, found, .. }) => {
                assert_eq!(keyword, "bad");
                assert_eq!(found, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_rejected_and_empty_ok() {
        assert!(matches!(
            read_vectors("dim=2 count=1\nx\t1 NaN\n".as_bytes()),
            Err(VectorError::NonFinite { .. })
        ));
        assert!(read_vectors("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_rows_last_wins() {
        let t = read_vectors("dim=1 count=3\na\t1\nb\t2\na\t3\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("a").unwrap(), &[3.0]);
        assert_eq!(t.keys(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn reduced_dimension_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.vec");
        std::fs::write(&p, "dim=5 count=1\nk\t1 2 3 4 5\n").unwrap();
        assert_eq!(load_reduced(&p, 5).unwrap().dim(), 5);
        assert!(matches!(
            load_reduced(&p, 3),
            Err(VectorError::ComponentMismatch { expected: 3, found: 5 })
        ));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = table(&[("a", vec![0.1, -1.0 / 3.0]), ("b", vec![1e-300, 2.5])]);
        let back = read_vectors(t.to_text().as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn pca_errors() {
        let t = table(&[("a", vec![1.0, 2.0])]);
        assert!(matches!(pca_reduce(&t, 1), Err(VectorError::TooFewRows(1))));
        let t = table(&[("a", vec![1.0, 2.0]), ("b", vec![0.0, 1.0])]);
        assert!(matches!(pca_reduce(&t, 3), Err(VectorError::Components { .. })));
        assert!(matches!(pca_reduce(&t, 0), Err(VectorError::Components { .. })));
    }

    #[test]
    fn identical_rows_reduce_identically() {
        let t = table(&[("a", vec![1.0, 2.0, 3.0]), ("b", vec![1.0, 2.0, 3.0]), ("c", vec![1.0, 2.0, 3.0])]);
        let r = pca_reduce(&t, 2).unwrap();
        assert!(r.rows().windows(2).all(|w| w[0] == w[1]));
    }
}
