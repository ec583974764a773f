//! Markov-chain baseline: transition matrices estimated from grid pairs and
//! two ways of extrapolating them over time.
//!
//! `extrapolate_matrix_power` is the Chapman-Kolmogorov route (A^k over k
//! unit periods) and the default in pipelines for integer period ratios.
//! `extrapolate_elementwise_power` raises every entry to the period-ratio
//! exponent and renormalizes rows; raw elementwise powers are not
//! stochastic, so the renormalization is part of the operation.

use crate::error::{Error, Result};
use crate::grid::{CategoricalGrid, ClassCode};

pub const ROW_SUM_TOL: f64 = 1e-9;

/// Row-stochastic class-to-class transition probabilities.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct TransitionMatrix {
    classes: Vec<ClassCode>,
    probs: Vec<Vec<f64>>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct MatrixRepr {
    classes: Vec<ClassCode>,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<MatrixRepr> for TransitionMatrix {
    type Error = Error;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        TransitionMatrix::new(r.classes, r.probs)
    }
}

impl From<TransitionMatrix> for MatrixRepr {
    fn from(m: TransitionMatrix) -> Self {
        MatrixRepr {
            classes: m.classes,
            probs: m.probs,
        }
    }
}

impl TransitionMatrix {
    /// Validates squareness, entries in [0, 1], and row sums within
    /// `ROW_SUM_TOL` of 1. Entries are stored as given (no renormalizing).
    pub fn new(classes: Vec<ClassCode>, probs: Vec<Vec<f64>>) -> Result<Self> {
        let n = classes.len();
        if n == 0 {
            return Err(Error::EmptyClassList);
        }
        for &c in &classes {
            if c < 1 {
                return Err(Error::InvalidMatrix(format!(
                    "class code {c} is reserved or negative"
                )));
            }
        }
        let mut sorted = classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n {
            return Err(Error::InvalidMatrix("duplicate class codes".to_string()));
        }
        if probs.len() != n {
            return Err(Error::InvalidMatrix(format!(
                "{} rows for {} classes",
                probs.len(),
                n
            )));
        }
        for (i, row) in probs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for &p in row {
                if !p.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry {p} in row {i} outside [0, 1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { classes, probs })
    }

    pub fn identity(classes: Vec<ClassCode>) -> Result<Self> {
        let n = classes.len();
        let probs = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(classes, probs)
    }

    pub fn classes(&self) -> &[ClassCode] {
        &self.classes
    }

    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i][j]
    }

    pub fn class_index(&self, code: ClassCode) -> Option<usize> {
        self.classes.iter().position(|&c| c == code)
    }

    /// Diagonal entry for a class code — its persistence probability.
    pub fn persistence(&self, code: ClassCode) -> Option<f64> {
        self.class_index(code).map(|i| self.probs[i][i])
    }

    pub fn to_json_file(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}

/// Raw cross-tabulation counts: `counts[i][j]` = unmasked non-nodata cells
/// of class `classes[i]` at t0 and `classes[j]` at t1.
pub fn transition_counts(
    grid_t0: &CategoricalGrid,
    grid_t1: &CategoricalGrid,
    classes: &[ClassCode],
    mask: Option<&CategoricalGrid>,
) -> Result<Vec<Vec<u64>>> {
    if classes.is_empty() {
        return Err(Error::EmptyClassList);
    }
    grid_t0.header().ensure_aligned(grid_t1.header())?;
    if let Some(m) = mask {
        grid_t0.header().ensure_aligned(m.header())?;
    }
    let n = classes.len();
    let ncols = grid_t0.header().ncols;
    let mut counts = vec![vec![0u64; n]; n];
    for (idx, (&c0, &c1)) in grid_t0
        .cells()
        .iter()
        .zip(grid_t1.cells().iter())
        .enumerate()
    {
        if mask.is_some_and(|m| m.masks_out(idx)) {
            continue;
        }
        if grid_t0.is_nodata(c0) || grid_t1.is_nodata(c1) || c0 == 0 || c1 == 0 {
            continue;
        }
        let locate = |code: ClassCode| -> Result<usize> {
            classes
                .iter()
                .position(|&k| k == code)
                .ok_or(Error::UnexpectedClass {
                    code,
                    row: idx / ncols,
                    col: idx % ncols,
                })
        };
        counts[locate(c0)?][locate(c1)?] += 1;
    }
    Ok(counts)
}

/// Estimates a transition matrix by cross-tabulating a grid pair:
/// `a_ij = n_ij / n_i`. Classes with no t0 cells become identity rows.
pub fn estimate_transition_matrix(
    grid_t0: &CategoricalGrid,
    grid_t1: &CategoricalGrid,
    classes: &[ClassCode],
    mask: Option<&CategoricalGrid>,
) -> Result<TransitionMatrix> {
    let counts = transition_counts(grid_t0, grid_t1, classes, mask)?;
    let n = classes.len();
    let mut probs = vec![vec![0.0; n]; n];
    for i in 0..n {
        let row_total: u64 = counts[i].iter().sum();
        if row_total == 0 {
            probs[i][i] = 1.0;
        } else {
            for j in 0..n {
                probs[i][j] = counts[i][j] as f64 / row_total as f64;
            }
        }
    }
    TransitionMatrix::new(classes.to_vec(), probs)
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// A^k by repeated multiplication; k = 0 gives the identity.
pub fn extrapolate_matrix_power(a: &TransitionMatrix, k: u32) -> Result<TransitionMatrix> {
    let n = a.size();
    let mut acc: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..k {
        acc = matmul(&acc, a.probs());
    }
    // products of stochastic rows drift by at most a few ulps; renormalize
    // so deep powers still validate
    for row in &mut acc {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
    }
    TransitionMatrix::new(a.classes().to_vec(), acc)
}

/// Raises every entry to `exponent` elementwise and renormalizes each row
/// to sum 1. One-hot rows are exact fixed points.
pub fn extrapolate_elementwise_power(
    a: &TransitionMatrix,
    exponent: f64,
) -> Result<TransitionMatrix> {
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(Error::NonPositiveExponent(exponent));
    }
    let mut probs = Vec::with_capacity(a.size());
    for row in a.probs() {
        let powered: Vec<f64> = row.iter().map(|&p| p.powf(exponent)).collect();
        let sum: f64 = powered.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidMatrix(
                "row vanished under elementwise power".to_string(),
            ));
        }
        probs.push(powered.into_iter().map(|p| p / sum).collect());
    }
    TransitionMatrix::new(a.classes().to_vec(), probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{canonical_legend, CategoricalGrid, GridHeader};

    fn grid(cells: Vec<ClassCode>) -> CategoricalGrid {
        let n = cells.len();
        let h = GridHeader::new(n, 1, 0.0, 0.0, 30.0, -9999.0).unwrap();
        CategoricalGrid::new(h, cells, canonical_legend()).unwrap()
    }

    #[test]
    fn estimate_hand_cross_tabulation() {
        let t0 = grid(vec![1, 1, 2, 3]);
        let t1 = grid(vec![1, 2, 2, 3]);
        let m = estimate_transition_matrix(&t0, &t1, &[1, 2, 3], None).unwrap();
        assert_eq!(m.probs()[0], vec![0.5, 0.5, 0.0]);
        assert_eq!(m.probs()[1], vec![0.0, 1.0, 0.0]);
        assert_eq!(m.probs()[2], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn estimate_no_change_gives_identity() {
        let t0 = grid(vec![1, 2, 3, 1]);
        let m = estimate_transition_matrix(&t0, &t0, &[1, 2, 3], None).unwrap();
        assert_eq!(m, TransitionMatrix::identity(vec![1, 2, 3]).unwrap());
    }

    #[test]
    fn estimate_absent_class_gets_identity_row() {
        let t0 = grid(vec![1, 1, 2, 2]);
        let t1 = grid(vec![1, 1, 2, 2]);
        let m = estimate_transition_matrix(&t0, &t1, &[1, 2, 3], None).unwrap();
        assert_eq!(m.probs()[2], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn estimate_rejects_stray_class() {
        let t0 = grid(vec![1, 4, 2, 2]);
        let t1 = grid(vec![1, 4, 2, 2]);
        assert!(matches!(
            estimate_transition_matrix(&t0, &t1, &[1, 2, 3], None),
            Err(Error::UnexpectedClass { code: 4, .. })
        ));
        // but a mask covering the stray cell makes it fine
        let mask = grid(vec![0, 1, 0, 0]);
        assert!(estimate_transition_matrix(&t0, &t1, &[1, 2, 3], Some(&mask)).is_ok());
    }

    #[test]
    fn matrix_power_hand_example() {
        let a = TransitionMatrix::new(vec![1, 2], vec![vec![0.9, 0.1], vec![0.5, 0.5]])
            .unwrap();
        let a2 = extrapolate_matrix_power(&a, 2).unwrap();
        for (row, expect) in a2.probs().iter().zip([[0.86, 0.14], [0.70, 0.30]]) {
            for (got, want) in row.iter().zip(expect) {
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            }
        }
        assert_eq!(
            extrapolate_matrix_power(&a, 0).unwrap(),
            TransitionMatrix::identity(vec![1, 2]).unwrap()
        );
        assert_eq!(extrapolate_matrix_power(&a, 1).unwrap(), a);
    }

    #[test]
    fn elementwise_power_table_row() {
        // persistence row squared and renormalized
        let a = TransitionMatrix::new(
            vec![1, 2, 3],
            vec![
                vec![0.7920, 0.1067, 0.1013],
                vec![0.0503, 0.8996, 0.0501],
                vec![0.3058, 0.1321, 0.5621],
            ],
        )
        .unwrap();
        let e = extrapolate_elementwise_power(&a, 2.0).unwrap();
        let row = &e.probs()[0];
        assert!((row[0] - 0.96664).abs() < 5e-5, "{}", row[0]);
        assert!((row[1] - 0.01754).abs() < 5e-5, "{}", row[1]);
        assert!((row[2] - 0.01581).abs() < 5e-5, "{}", row[2]);
    }

    #[test]
    fn elementwise_power_identity_and_one_hot() {
        let a = TransitionMatrix::new(
            vec![1, 2, 3],
            vec![
                vec![0.2, 0.5, 0.3],
                vec![0.0, 1.0, 0.0],
                vec![0.1, 0.1, 0.8],
            ],
        )
        .unwrap();
        let e1 = extrapolate_elementwise_power(&a, 1.0).unwrap();
        for (r1, r0) in e1.probs().iter().zip(a.probs()) {
            for (x, y) in r1.iter().zip(r0) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        let e7 = extrapolate_elementwise_power(&a, 7.3).unwrap();
        assert_eq!(e7.probs()[1], vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            extrapolate_elementwise_power(&a, 0.0),
            Err(Error::NonPositiveExponent(_))
        ));
    }

    #[test]
    fn elementwise_power_preserves_argmax() {
        let a = TransitionMatrix::new(
            vec![1, 2],
            vec![vec![0.7, 0.3], vec![0.45, 0.55]],
        )
        .unwrap();
        for exp in [0.3, 0.8, 1.5, 4.0] {
            let e = extrapolate_elementwise_power(&a, exp).unwrap();
            assert!(e.get(0, 0) > e.get(0, 1));
            assert!(e.get(1, 1) > e.get(1, 0));
        }
    }

    #[test]
    fn json_round_trip() {
        let a = TransitionMatrix::new(vec![1, 2], vec![vec![0.9, 0.1], vec![0.5, 0.5]])
            .unwrap();
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.contains("\"classes\""));
        assert!(text.contains("\"probs\""));
        let back: TransitionMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(a, back);
        // invalid rows rejected on deserialize
        let bad = "{\"classes\":[1,2],\"probs\":[[0.9,0.3],[0.5,0.5]]}";
        assert!(serde_json::from_str::<TransitionMatrix>(bad).is_err());
    }
}
