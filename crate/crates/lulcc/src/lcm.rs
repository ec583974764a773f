//! Land-change modeler: per-transition logistic sub-models over driver
//! rasters, transition potential maps, conversion of a transition matrix
//! into integer cell quanta, and quantum-constrained allocation of changes
//! onto a grid.
//!
//! Allocation is rank-based: each eligible cell goes to the transition
//! where it holds its highest potential, and each transition then takes its
//! quota of cells in descending potential order. Every tie has a
//! deterministic break (ascending (from, to) pair, then ascending row-major
//! cell index), so identical inputs produce bit-identical predictions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{CategoricalGrid, ClassCode, ContinuousGrid};
use crate::markov::TransitionMatrix;

/// Default L2 penalty: keeps separable fits finite without materially
/// biasing coefficients.
pub const DEFAULT_L2: f64 = 1e-6;

const GRADIENT_TOL: f64 = 1e-8;
const MAX_NEWTON_ITER: usize = 500;

/// Per-feature standardization constants captured at fit time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureScale {
    pub mean: f64,
    pub stddev: f64,
}

/// A fitted binary logistic regression with internal z-standardization.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub standardization: Vec<FeatureScale>,
}

impl LogisticModel {
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Probability of the positive class for raw (unstandardized) features.
    pub fn predict_proba(&self, raw: &[f64]) -> Result<f64> {
        if raw.len() != self.feature_count() {
            return Err(Error::FeatureCountMismatch {
                model: self.feature_count(),
                given: raw.len(),
            });
        }
        let mut eta = self.intercept;
        for ((x, scale), coef) in raw
            .iter()
            .zip(&self.standardization)
            .zip(&self.coefficients)
        {
            eta += coef * (x - scale.mean) / scale.stddev;
        }
        Ok(sigmoid(eta))
    }
}

/// One (from, to) transition's logistic model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransitionSubModel {
    pub from_class: ClassCode,
    pub to_class: ClassCode,
    pub model: LogisticModel,
}

impl TransitionSubModel {
    pub fn new(from_class: ClassCode, to_class: ClassCode, model: LogisticModel) -> Result<Self> {
        if from_class == to_class {
            return Err(Error::InvalidGrid(format!(
                "sub-model from and to class are both {from_class}"
            )));
        }
        Ok(Self {
            from_class,
            to_class,
            model,
        })
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

/// Labeled samples for one transition. `label_balance` carries the
/// one-sided-label warning distinctly from hard errors; fitting a
/// one-sided set is allowed (the L2 penalty keeps it finite) but callers
/// should surface the warning.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub label_balance: LabelBalance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelBalance {
    Mixed,
    AllPositive,
    AllNegative,
}

/// One sample per unmasked `from_class` cell of `grid_t0`; the label is 1
/// iff the cell is `to_class` at t1. Cells with nodata in any driver are
/// skipped.
pub fn build_transition_samples(
    grid_t0: &CategoricalGrid,
    grid_t1: &CategoricalGrid,
    drivers: &[(&str, &ContinuousGrid)],
    from_class: ClassCode,
    to_class: ClassCode,
    mask: Option<&CategoricalGrid>,
) -> Result<SampleSet> {
    grid_t0.header().ensure_aligned(grid_t1.header())?;
    for (_, d) in drivers {
        grid_t0.header().ensure_aligned(d.header())?;
    }
    if let Some(m) = mask {
        grid_t0.header().ensure_aligned(m.header())?;
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    'cells: for idx in 0..grid_t0.cells().len() {
        if grid_t0.cells()[idx] != from_class {
            continue;
        }
        if mask.is_some_and(|m| m.masks_out(idx)) {
            continue;
        }
        let c1 = grid_t1.cells()[idx];
        if grid_t1.is_nodata(c1) {
            continue;
        }
        let mut row = Vec::with_capacity(drivers.len());
        for (_, d) in drivers {
            let v = d.cells()[idx];
            if d.is_nodata(v) {
                continue 'cells;
            }
            row.push(v);
        }
        features.push(row);
        labels.push(c1 == to_class);
    }
    if labels.is_empty() {
        return Err(Error::ZeroEligibleCells {
            from: from_class,
            to: to_class,
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let label_balance = if positives == 0 {
        LabelBalance::AllNegative
    } else if positives == labels.len() {
        LabelBalance::AllPositive
    } else {
        LabelBalance::Mixed
    };
    Ok(SampleSet {
        feature_names: drivers.iter().map(|(n, _)| n.to_string()).collect(),
        features,
        labels,
        label_balance,
    })
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^eta)` without overflow.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// L2-penalized Bernoulli log-likelihood; the penalty applies to the
/// coefficients only, never the intercept.
pub fn penalized_log_likelihood(
    features: &[Vec<f64>],
    labels: &[bool],
    intercept: f64,
    coefficients: &[f64],
    l2: f64,
) -> f64 {
    let mut ll = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let eta = intercept + x.iter().zip(coefficients).map(|(v, c)| v * c).sum::<f64>();
        ll += if y { eta } else { 0.0 };
        ll -= log1p_exp(eta);
    }
    ll - 0.5 * l2 * coefficients.iter().map(|c| c * c).sum::<f64>()
}

/// Gradient of [`penalized_log_likelihood`]; element 0 is the intercept
/// derivative, the rest follow the coefficients.
pub fn penalized_gradient(
    features: &[Vec<f64>],
    labels: &[bool],
    intercept: f64,
    coefficients: &[f64],
    l2: f64,
) -> Vec<f64> {
    let d = coefficients.len();
    let mut g = vec![0.0; d + 1];
    for (x, &y) in features.iter().zip(labels) {
        let eta = intercept + x.iter().zip(coefficients).map(|(v, c)| v * c).sum::<f64>();
        let resid = (y as u8 as f64) - sigmoid(eta);
        g[0] += resid;
        for j in 0..d {
            g[j + 1] += x[j] * resid;
        }
    }
    for j in 0..d {
        g[j + 1] -= l2 * coefficients[j];
    }
    g
}

/// Solves the symmetric positive-definite system `m x = b` by Cholesky,
/// retrying with growing diagonal jitter if the factorization stalls.
fn solve_spd(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut l = vec![vec![0.0; n]; n];
        let mut ok = true;
        'factor: for i in 0..n {
            for j in 0..=i {
                let mut s = m[i][j];
                if i == j {
                    s += jitter;
                }
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= 0.0 {
                        ok = false;
                        break 'factor;
                    }
                    l[i][j] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        if ok {
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut s = b[i];
                for k in 0..i {
                    s -= l[i][k] * y[k];
                }
                y[i] = s / l[i][i];
            }
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in i + 1..n {
                    s -= l[k][i] * x[k];
                }
                x[i] = s / l[i][i];
            }
            return Some(x);
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
    }
    None
}

/// Fits the penalized logistic regression by Newton iterations with
/// backtracking, to gradient max-norm below 1e-8. Features are
/// z-standardized first; the scales are stored in the model.
pub fn fit_logistic(samples: &SampleSet, l2: f64) -> Result<LogisticModel> {
    let n = samples.labels.len();
    if n < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let d = samples.feature_names.len();
    let mut standardization = Vec::with_capacity(d);
    for j in 0..d {
        let name = &samples.feature_names[j];
        let mut mean = 0.0;
        for row in &samples.features {
            let v = row[j];
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature(name.clone()));
            }
            mean += v;
        }
        mean /= n as f64;
        let var: f64 = samples
            .features
            .iter()
            .map(|row| (row[j] - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let stddev = var.sqrt();
        if stddev == 0.0 {
            return Err(Error::ConstantFeature(name.clone()));
        }
        standardization.push(FeatureScale { mean, stddev });
    }
    let z: Vec<Vec<f64>> = samples
        .features
        .iter()
        .map(|row| {
            row.iter()
                .zip(&standardization)
                .map(|(v, s)| (v - s.mean) / s.stddev)
                .collect()
        })
        .collect();

    let mut intercept = 0.0;
    let mut coefs = vec![0.0; d];
    let mut converged = false;
    for _ in 0..MAX_NEWTON_ITER {
        let g = penalized_gradient(&z, &samples.labels, intercept, &coefs, l2);
        if g.iter().all(|v| v.abs() < GRADIENT_TOL) {
            converged = true;
            break;
        }
        // negative Hessian of the penalized log-likelihood
        let mut h = vec![vec![0.0; d + 1]; d + 1];
        for x in &z {
            let eta = intercept + x.iter().zip(&coefs).map(|(v, c)| v * c).sum::<f64>();
            let p = sigmoid(eta);
            let w = (p * (1.0 - p)).max(1e-12);
            h[0][0] += w;
            for j in 0..d {
                h[0][j + 1] += w * x[j];
                h[j + 1][0] += w * x[j];
                for k in 0..d {
                    h[j + 1][k + 1] += w * x[j] * x[k];
                }
            }
        }
        for j in 0..d {
            h[j + 1][j + 1] += l2;
        }
        let delta = match solve_spd(&h, &g) {
            Some(x) => x,
            None => return Err(Error::FitDidNotConverge(MAX_NEWTON_ITER)),
        };
        let ll0 = penalized_log_likelihood(&z, &samples.labels, intercept, &coefs, l2);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let ti = intercept + step * delta[0];
            let tc: Vec<f64> = coefs
                .iter()
                .zip(&delta[1..])
                .map(|(c, dl)| c + step * dl)
                .collect();
            let ll = penalized_log_likelihood(&z, &samples.labels, ti, &tc, l2);
            if ll >= ll0 {
                intercept = ti;
                coefs = tc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // gradient can no longer be improved along the Newton direction
            break;
        }
    }
    if !converged {
        let g = penalized_gradient(&z, &samples.labels, intercept, &coefs, l2);
        if !g.iter().all(|v| v.abs() < GRADIENT_TOL) {
            return Err(Error::FitDidNotConverge(MAX_NEWTON_ITER));
        }
    }
    Ok(LogisticModel {
        feature_names: samples.feature_names.clone(),
        intercept,
        coefficients: coefs,
        standardization,
    })
}

/// Transition probability surface for one sub-model: defined (in [0, 1])
/// on unmasked `from_class` cells, nodata elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialMap {
    pub from_class: ClassCode,
    pub to_class: ClassCode,
    pub grid: ContinuousGrid,
}

pub fn potential_map(
    submodel: &TransitionSubModel,
    drivers: &[&ContinuousGrid],
    base: &CategoricalGrid,
    mask: Option<&CategoricalGrid>,
) -> Result<PotentialMap> {
    if drivers.len() != submodel.model.feature_count() {
        return Err(Error::FeatureCountMismatch {
            model: submodel.model.feature_count(),
            given: drivers.len(),
        });
    }
    for d in drivers {
        base.header().ensure_aligned(d.header())?;
    }
    if let Some(m) = mask {
        base.header().ensure_aligned(m.header())?;
    }
    let h = *base.header();
    let mut cells = vec![h.nodata_value; h.cell_count()];
    let mut raw = vec![0.0; drivers.len()];
    'cells: for idx in 0..base.cells().len() {
        if base.cells()[idx] != submodel.from_class {
            continue;
        }
        if mask.is_some_and(|m| m.masks_out(idx)) {
            continue;
        }
        for (j, d) in drivers.iter().enumerate() {
            let v = d.cells()[idx];
            if d.is_nodata(v) {
                continue 'cells;
            }
            raw[j] = v;
        }
        cells[idx] = submodel.model.predict_proba(&raw)?;
    }
    Ok(PotentialMap {
        from_class: submodel.from_class,
        to_class: submodel.to_class,
        grid: ContinuousGrid::new(h, cells)?,
    })
}

/// Integer cell quota per (from, to) transition.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<QuantumEntry>", into = "Vec<QuantumEntry>")]
pub struct QuantumTable {
    entries: BTreeMap<(ClassCode, ClassCode), u64>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct QuantumEntry {
    from: ClassCode,
    to: ClassCode,
    count: u64,
}

impl TryFrom<Vec<QuantumEntry>> for QuantumTable {
    type Error = Error;
    fn try_from(v: Vec<QuantumEntry>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for e in v {
            if entries.insert((e.from, e.to), e.count).is_some() {
                return Err(Error::InvalidGrid(format!(
                    "duplicate quantum entry {} -> {}",
                    e.from, e.to
                )));
            }
        }
        Ok(Self { entries })
    }
}

impl From<QuantumTable> for Vec<QuantumEntry> {
    fn from(t: QuantumTable) -> Self {
        t.entries
            .into_iter()
            .map(|((from, to), count)| QuantumEntry { from, to, count })
            .collect()
    }
}

impl QuantumTable {
    pub fn entries(&self) -> &BTreeMap<(ClassCode, ClassCode), u64> {
        &self.entries
    }

    pub fn get(&self, from: ClassCode, to: ClassCode) -> u64 {
        self.entries.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }
}

/// Converts a transition matrix into integer cell quanta for the allowed
/// transitions: `q_ij = a_ij * n_i`, integerized per from-class by largest
/// remainder against the rounded total. Probability mass of transitions
/// outside `allowed` folds into persistence.
pub fn compute_quantum(
    a: &TransitionMatrix,
    base: &CategoricalGrid,
    mask: Option<&CategoricalGrid>,
    allowed: &[(ClassCode, ClassCode)],
) -> Result<QuantumTable> {
    if let Some(m) = mask {
        base.header().ensure_aligned(m.header())?;
    }
    for &(from, to) in allowed {
        if a.class_index(from).is_none() || a.class_index(to).is_none() {
            return Err(Error::InvalidMatrix(format!(
                "allowed transition {from} -> {to} not covered by the matrix classes"
            )));
        }
    }
    let mut class_counts: BTreeMap<ClassCode, u64> = BTreeMap::new();
    for idx in 0..base.cells().len() {
        let c = base.cells()[idx];
        if base.is_nodata(c) || c == 0 {
            continue;
        }
        if mask.is_some_and(|m| m.masks_out(idx)) {
            continue;
        }
        *class_counts.entry(c).or_insert(0) += 1;
    }
    let mut entries = BTreeMap::new();
    for (i, &from) in a.classes().iter().enumerate() {
        let n_i = class_counts.get(&from).copied().unwrap_or(0);
        let mut raws: Vec<(ClassCode, f64)> = Vec::new();
        for (j, &to) in a.classes().iter().enumerate() {
            if from == to || !allowed.contains(&(from, to)) {
                continue;
            }
            raws.push((to, a.get(i, j) * n_i as f64));
        }
        if raws.is_empty() {
            continue;
        }
        let total_raw: f64 = raws.iter().map(|r| r.1).sum();
        let total = (total_raw.round() as u64).min(n_i);
        let mut floors: Vec<(ClassCode, u64, f64)> = raws
            .iter()
            .map(|&(to, q)| (to, q.floor() as u64, q - q.floor()))
            .collect();
        let mut assigned: u64 = floors.iter().map(|f| f.1).sum();
        // hand out the remaining cells by largest fractional part,
        // ties to the smallest to-code
        let mut order: Vec<usize> = (0..floors.len()).collect();
        order.sort_by(|&x, &y| {
            floors[y]
                .2
                .total_cmp(&floors[x].2)
                .then(floors[x].0.cmp(&floors[y].0))
        });
        let mut k = 0;
        while assigned < total {
            floors[order[k % order.len()]].1 += 1;
            assigned += 1;
            k += 1;
        }
        for (to, q, _) in floors {
            entries.insert((from, to), q);
        }
    }
    Ok(QuantumTable { entries })
}

/// Per-transition allocation outcome.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransitionOutcome {
    pub from: ClassCode,
    pub to: ClassCode,
    pub quota: u64,
    /// Eligible cells assigned to this transition after conflict
    /// resolution (each cell goes to its best transition only).
    pub candidates: u64,
    pub allocated: u64,
    /// True when the quota exceeded the candidate count.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct AllocationReport {
    pub transitions: Vec<TransitionOutcome>,
}

/// Applies the quantum onto the base grid using the potential maps.
///
/// Each unmasked eligible cell is assigned to the positive-quota
/// transition where it holds the highest potential; each transition then
/// converts its `min(quota, candidates)` best cells. Masked cells are
/// copied verbatim and no cell changes more than once.
pub fn allocate_changes(
    base: &CategoricalGrid,
    potentials: &[PotentialMap],
    quantum: &QuantumTable,
    mask: Option<&CategoricalGrid>,
) -> Result<(CategoricalGrid, AllocationReport)> {
    for p in potentials {
        base.header().ensure_aligned(p.grid.header())?;
    }
    if let Some(m) = mask {
        base.header().ensure_aligned(m.header())?;
    }
    let mut by_pair: BTreeMap<(ClassCode, ClassCode), &PotentialMap> = BTreeMap::new();
    for p in potentials {
        by_pair.insert((p.from_class, p.to_class), p);
    }
    let mut active: Vec<((ClassCode, ClassCode), &PotentialMap, u64)> = Vec::new();
    for (&(from, to), &count) in quantum.entries() {
        if count == 0 {
            continue;
        }
        match by_pair.get(&(from, to)) {
            Some(p) => active.push(((from, to), p, count)),
            None => {
                return Err(Error::MissingPotential {
                    from,
                    to,
                    quantum: count,
                })
            }
        }
    }

    let mut candidates: BTreeMap<(ClassCode, ClassCode), Vec<(usize, f64)>> = BTreeMap::new();
    for idx in 0..base.cells().len() {
        let class = base.cells()[idx];
        if base.is_nodata(class) || class == 0 {
            continue;
        }
        if mask.is_some_and(|m| m.masks_out(idx)) {
            continue;
        }
        let mut best: Option<((ClassCode, ClassCode), f64)> = None;
        for &(pair, pot, _) in &active {
            if pair.0 != class {
                continue;
            }
            let v = pot.grid.cells()[idx];
            if pot.grid.is_nodata(v) {
                continue;
            }
            // higher potential wins; exact ties go to the smaller
            // (from, to) pair, which is the iteration order here
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((pair, v)),
            }
        }
        if let Some((pair, v)) = best {
            candidates.entry(pair).or_default().push((idx, v));
        }
    }

    let mut cells = base.cells().to_vec();
    let mut report = AllocationReport::default();
    for &(pair, _, quota) in &active {
        let mut list = candidates.remove(&pair).unwrap_or_default();
        list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let take = (quota as usize).min(list.len());
        for &(idx, _) in &list[..take] {
            cells[idx] = pair.1;
        }
        report.transitions.push(TransitionOutcome {
            from: pair.0,
            to: pair.1,
            quota,
            candidates: list.len() as u64,
            allocated: take as u64,
            capped: (quota as usize) > list.len(),
        });
    }
    let mut legend = base.legend().clone();
    let canonical = crate::grid::canonical_legend();
    for &(pair, _, _) in &active {
        legend
            .entry(pair.1)
            .or_insert_with(|| canonical.get(&pair.1).cloned().unwrap_or_else(|| format!("class_{}", pair.1)));
    }
    let grid = CategoricalGrid::new(*base.header(), cells, legend)?;
    Ok((grid, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{canonical_legend, CategoricalGrid, GridHeader};

    fn header(ncols: usize, nrows: usize) -> GridHeader {
        GridHeader::new(ncols, nrows, 0.0, 0.0, 30.0, -9999.0).unwrap()
    }

    fn cat(ncols: usize, cells: Vec<i32>) -> CategoricalGrid {
        CategoricalGrid::new(header(ncols, 1), cells, canonical_legend()).unwrap()
    }

    fn cont(ncols: usize, cells: Vec<f64>) -> ContinuousGrid {
        ContinuousGrid::new(header(ncols, 1), cells).unwrap()
    }

    #[test]
    fn samples_half_positive() {
        let t0 = cat(4, vec![1, 1, 1, 1]);
        let t1 = cat(4, vec![2, 2, 1, 1]);
        let d = cont(4, vec![0.9, 0.8, 0.1, 0.2]);
        let s =
            build_transition_samples(&t0, &t1, &[("drv", &d)], 1, 2, None).unwrap();
        assert_eq!(s.labels, vec![true, true, false, false]);
        assert_eq!(s.label_balance, LabelBalance::Mixed);
        assert_eq!(s.features.len(), 4);
    }

    #[test]
    fn samples_error_and_warning_paths() {
        let t0 = cat(2, vec![2, 2]);
        let t1 = cat(2, vec![2, 2]);
        let d = cont(2, vec![0.5, 0.6]);
        assert!(matches!(
            build_transition_samples(&t0, &t1, &[("drv", &d)], 1, 2, None),
            Err(Error::ZeroEligibleCells { from: 1, to: 2 })
        ));
        let mask = cat(2, vec![1, 1]);
        let t0 = cat(2, vec![1, 1]);
        assert!(matches!(
            build_transition_samples(&t0, &t1, &[("drv", &d)], 1, 2, Some(&mask)),
            Err(Error::ZeroEligibleCells { .. })
        ));
        // all labels negative is a warning, not an error
        let t1n = cat(2, vec![1, 1]);
        let s = build_transition_samples(&t0, &t1n, &[("drv", &d)], 1, 2, None).unwrap();
        assert_eq!(s.label_balance, LabelBalance::AllNegative);
    }

    fn raw_samples(features: Vec<Vec<f64>>, labels: Vec<bool>) -> SampleSet {
        let d = features.first().map_or(0, Vec::len);
        SampleSet {
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
            features,
            labels,
            label_balance: LabelBalance::Mixed,
        }
    }

    #[test]
    fn intercept_only_fit_hits_logit_of_mean() {
        let s = raw_samples(vec![vec![]; 4], vec![true, true, true, false]);
        let m = fit_logistic(&s, DEFAULT_L2).unwrap();
        assert!((m.intercept - 3f64.ln()).abs() < 1e-6, "{}", m.intercept);
        assert!((m.predict_proba(&[]).unwrap() - 0.75).abs() < 1e-9);
    }

    #[test]
    fn balanced_symmetric_fit_is_flat() {
        let s = raw_samples(
            vec![vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]],
            vec![true, false, false, true],
        );
        let m = fit_logistic(&s, DEFAULT_L2).unwrap();
        assert!(m.intercept.abs() < 1e-6);
        let p = m.predict_proba(&[0.0]).unwrap();
        assert!((p - 0.5).abs() < 1e-6);
    }

    #[test]
    fn separable_fit_reaches_full_accuracy() {
        let s = raw_samples(
            vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]],
            vec![false, false, true, true],
        );
        let m = fit_logistic(&s, DEFAULT_L2).unwrap();
        for (x, &y) in s.features.iter().zip(&s.labels) {
            let p = m.predict_proba(x).unwrap();
            assert_eq!(p > 0.5, y, "x={x:?} p={p}");
            assert!(p.is_finite());
        }
    }

    #[test]
    fn constant_feature_rejected() {
        let s = raw_samples(
            vec![vec![3.0], vec![3.0], vec![3.0]],
            vec![true, false, true],
        );
        assert!(matches!(
            fit_logistic(&s, DEFAULT_L2),
            Err(Error::ConstantFeature(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let features = vec![
            vec![0.3, -1.2],
            vec![-0.7, 0.4],
            vec![1.5, 0.9],
            vec![-0.2, -0.5],
            vec![0.8, 1.1],
        ];
        let labels = vec![true, false, true, false, true];
        let intercept = 0.3;
        let coefs = vec![-0.4, 0.7];
        let l2 = 0.01;
        let g = penalized_gradient(&features, &labels, intercept, &coefs, l2);
        let h = 1e-5;
        let f0 = |ic: f64, cs: &[f64]| penalized_log_likelihood(&features, &labels, ic, cs, l2);
        let fd0 = (f0(intercept + h, &coefs) - f0(intercept - h, &coefs)) / (2.0 * h);
        assert!((g[0] - fd0).abs() < 1e-6);
        for j in 0..2 {
            let mut up = coefs.clone();
            up[j] += h;
            let mut dn = coefs.clone();
            dn[j] -= h;
            let fd = (f0(intercept, &up) - f0(intercept, &dn)) / (2.0 * h);
            assert!((g[j + 1] - fd).abs() < 1e-6);
        }
    }

    fn flat_model(from: i32, to: i32, intercept: f64, coef: Option<f64>) -> TransitionSubModel {
        let (names, coefs, scales) = match coef {
            Some(c) => (
                vec!["drv".to_string()],
                vec![c],
                vec![FeatureScale {
                    mean: 0.0,
                    stddev: 1.0,
                }],
            ),
            None => (vec![], vec![], vec![]),
        };
        TransitionSubModel::new(
            from,
            to,
            LogisticModel {
                feature_names: names,
                intercept,
                coefficients: coefs,
                standardization: scales,
            },
        )
        .unwrap()
    }

    #[test]
    fn potential_map_domain_and_values() {
        let base = cat(4, vec![1, 1, 2, -9999]);
        let sub = flat_model(1, 2, 0.0, None);
        let p = potential_map(&sub, &[], &base, None).unwrap();
        assert_eq!(p.grid.get(0, 0), 0.5);
        assert_eq!(p.grid.get(0, 1), 0.5);
        assert!(p.grid.is_nodata(p.grid.get(0, 2)));
        assert!(p.grid.is_nodata(p.grid.get(0, 3)));
    }

    #[test]
    fn potential_map_monotone_in_driver() {
        let base = cat(3, vec![1, 1, 1]);
        let d = cont(3, vec![0.1, 0.5, 0.9]);
        let sub = flat_model(1, 2, 0.0, Some(2.0));
        let p = potential_map(&sub, &[&d], &base, None).unwrap();
        assert!(p.grid.get(0, 0) < p.grid.get(0, 1));
        assert!(p.grid.get(0, 1) < p.grid.get(0, 2));
    }

    #[test]
    fn quantum_hand_example() {
        // 100 vegetation cells, row (0.8, 0.15, 0.05)
        let cells = vec![1; 100];
        let base = CategoricalGrid::new(header(100, 1), cells, canonical_legend()).unwrap();
        let a = TransitionMatrix::new(
            vec![1, 2, 3],
            vec![
                vec![0.8, 0.15, 0.05],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        let q = compute_quantum(&a, &base, None, &[(1, 2), (1, 3)]).unwrap();
        assert_eq!(q.get(1, 2), 15);
        assert_eq!(q.get(1, 3), 5);
        assert_eq!(q.total(), 20);
    }

    #[test]
    fn quantum_identity_and_empty_class() {
        let base = cat(4, vec![1, 1, 2, 2]);
        let a = TransitionMatrix::identity(vec![1, 2, 3]).unwrap();
        let q = compute_quantum(&a, &base, None, &[(1, 2), (3, 2)]).unwrap();
        assert_eq!(q.total(), 0);
    }

    #[test]
    fn quantum_largest_remainder_is_exact() {
        // 7 cells, row (0.5, 0.3, 0.2): raws 2.1 and 1.4, total 3.5 -> 4
        let base = cat(7, vec![1; 7]);
        let a = TransitionMatrix::new(
            vec![1, 2, 3],
            vec![
                vec![0.5, 0.3, 0.2],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        let q = compute_quantum(&a, &base, None, &[(1, 2), (1, 3)]).unwrap();
        // raw 2.1 floors to 2, raw 1.4 floors to 1, one remainder goes to
        // the larger fraction (0.4 on class 3)
        assert_eq!(q.get(1, 2), 2);
        assert_eq!(q.get(1, 3), 2);
    }

    fn potential_with(
        base: &CategoricalGrid,
        from: i32,
        to: i32,
        values: Vec<f64>,
    ) -> PotentialMap {
        let h = *base.header();
        let cells = base
            .cells()
            .iter()
            .zip(values)
            .map(|(&c, v)| if c == from { v } else { h.nodata_value })
            .collect();
        PotentialMap {
            from_class: from,
            to_class: to,
            grid: ContinuousGrid::new(h, cells).unwrap(),
        }
    }

    fn quantum_of(pairs: &[(i32, i32, u64)]) -> QuantumTable {
        QuantumTable {
            entries: pairs.iter().map(|&(f, t, c)| ((f, t), c)).collect(),
        }
    }

    #[test]
    fn allocation_takes_top_potentials() {
        let base = cat(3, vec![1, 1, 1]);
        let p = potential_with(&base, 1, 2, vec![0.9, 0.5, 0.1]);
        let (out, report) =
            allocate_changes(&base, &[p], &quantum_of(&[(1, 2, 2)]), None).unwrap();
        assert_eq!(out.cells(), &[2, 2, 1]);
        assert_eq!(report.transitions[0].allocated, 2);
        assert!(!report.transitions[0].capped);
    }

    #[test]
    fn allocation_zero_quanta_is_identity() {
        let base = cat(3, vec![1, 2, 3]);
        let (out, _) = allocate_changes(&base, &[], &quantum_of(&[]), None).unwrap();
        assert_eq!(out.cells(), base.cells());
    }

    #[test]
    fn allocation_tie_breaks_by_row_major_index() {
        let base = cat(4, vec![1, 1, 1, 1]);
        let p = potential_with(&base, 1, 3, vec![0.4, 0.4, 0.4, 0.4]);
        let (out, _) =
            allocate_changes(&base, &[p], &quantum_of(&[(1, 3, 1)]), None).unwrap();
        assert_eq!(out.cells(), &[3, 1, 1, 1]);
    }

    #[test]
    fn allocation_conflict_goes_to_higher_potential() {
        let base = cat(2, vec![1, 1]);
        let p12 = potential_with(&base, 1, 2, vec![0.9, 0.2]);
        let p13 = potential_with(&base, 1, 3, vec![0.3, 0.8]);
        let (out, report) = allocate_changes(
            &base,
            &[p12, p13],
            &quantum_of(&[(1, 2, 1), (1, 3, 1)]),
            None,
        )
        .unwrap();
        assert_eq!(out.cells(), &[2, 3]);
        for t in &report.transitions {
            assert_eq!(t.candidates, 1);
            assert_eq!(t.allocated, 1);
        }
    }

    #[test]
    fn allocation_equal_potential_conflict_prefers_smaller_pair() {
        let base = cat(1, vec![1]);
        let p12 = potential_with(&base, 1, 2, vec![0.7]);
        let p13 = potential_with(&base, 1, 3, vec![0.7]);
        let (out, _) = allocate_changes(
            &base,
            &[p13, p12],
            &quantum_of(&[(1, 2, 1), (1, 3, 1)]),
            None,
        )
        .unwrap();
        assert_eq!(out.cells(), &[2]);
    }

    #[test]
    fn allocation_caps_at_candidates_and_reports() {
        let base = cat(2, vec![1, 2]);
        let p = potential_with(&base, 1, 3, vec![0.5, 0.0]);
        let (out, report) =
            allocate_changes(&base, &[p], &quantum_of(&[(1, 3, 5)]), None).unwrap();
        assert_eq!(out.cells(), &[3, 2]);
        assert!(report.transitions[0].capped);
        assert_eq!(report.transitions[0].allocated, 1);
    }

    #[test]
    fn allocation_copies_masked_cells() {
        let base = cat(3, vec![1, 1, 4]);
        let mask = cat(3, vec![0, 1, 1]);
        let p = potential_with(&base, 1, 2, vec![0.1, 0.9, 0.0]);
        let (out, _) =
            allocate_changes(&base, &[p], &quantum_of(&[(1, 2, 2)]), Some(&mask)).unwrap();
        // only the unmasked first cell may change
        assert_eq!(out.cells(), &[2, 1, 4]);
    }

    #[test]
    fn allocation_missing_potential_is_an_error() {
        let base = cat(1, vec![1]);
        assert!(matches!(
            allocate_changes(&base, &[], &quantum_of(&[(1, 2, 1)]), None),
            Err(Error::MissingPotential { from: 1, to: 2, quantum: 1 })
        ));
    }

    #[test]
    fn quantum_json_round_trip() {
        let q = quantum_of(&[(1, 2, 15), (1, 3, 5), (3, 2, 7)]);
        let text = serde_json::to_string(&q).unwrap();
        let back: QuantumTable = serde_json::from_str(&text).unwrap();
        assert_eq!(q, back);
    }
}
