//! Gaussian-emission hidden Markov model over socioeconomic observation
//! sequences.
//!
//! Land-cover classes are the hidden states; the yearly factor vectors are
//! the emissions, modeled as diagonal Gaussians per state. Training is
//! expectation-maximization: the E-step runs a scaled forward-backward pass
//! (underflow-free for sequences up to ~10^5 steps), the M-step applies the
//! standard re-estimation formulas with a variance floor. The learned
//! transition matrix is read off as the temporal change model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::factors::ObservationSequence;
use crate::grid::ClassCode;
use crate::markov::TransitionMatrix;

/// Smallest admissible emission variance. Replicated observations can make
/// a state's assigned vectors identical; without the floor the variance
/// collapses and the likelihood spikes to infinity.
pub const VAR_FLOOR: f64 = 1e-6;

/// Floor applied to zero probabilities when seeding pi and the transition
/// rows from frequency counts.
pub const PROB_FLOOR: f64 = 1e-6;

const RESP_EPS: f64 = 1e-12;

/// Full parameter set of the Gaussian-emission HMM.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct GaussianHmmParams {
    pub classes: Vec<ClassCode>,
    pub pi: Vec<f64>,
    pub trans: TransitionMatrix,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ParamsRepr {
    classes: Vec<ClassCode>,
    pi: Vec<f64>,
    trans: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

impl TryFrom<ParamsRepr> for GaussianHmmParams {
    type Error = Error;
    fn try_from(r: ParamsRepr) -> Result<Self> {
        GaussianHmmParams::new(
            r.classes.clone(),
            r.pi,
            TransitionMatrix::new(r.classes, r.trans)?,
            r.means,
            r.vars,
        )
    }
}

impl From<GaussianHmmParams> for ParamsRepr {
    fn from(p: GaussianHmmParams) -> Self {
        ParamsRepr {
            classes: p.classes,
            pi: p.pi,
            trans: p.trans.probs().to_vec(),
            means: p.means,
            vars: p.vars,
        }
    }
}

impl GaussianHmmParams {
    pub fn new(
        classes: Vec<ClassCode>,
        pi: Vec<f64>,
        trans: TransitionMatrix,
        means: Vec<Vec<f64>>,
        vars: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let p = Self {
            classes,
            pi,
            trans,
            means,
            vars,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn state_count(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.classes.len();
        if n == 0 {
            return Err(Error::InvalidParams("no states".to_string()));
        }
        if self.trans.classes() != self.classes.as_slice() {
            return Err(Error::InvalidParams(
                "transition matrix classes differ from state classes".to_string(),
            ));
        }
        if self.pi.len() != n {
            return Err(Error::InvalidParams(format!(
                "pi has {} entries for {} states",
                self.pi.len(),
                n
            )));
        }
        let mut sum = 0.0;
        for &p in &self.pi {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidParams(format!("pi entry {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("pi sums to {sum}, not 1")));
        }
        if self.means.len() != n || self.vars.len() != n {
            return Err(Error::InvalidParams(
                "means/vars must have one row per state".to_string(),
            ));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidParams("zero emission dimensions".to_string()));
        }
        for i in 0..n {
            if self.means[i].len() != d || self.vars[i].len() != d {
                return Err(Error::InvalidParams(format!(
                    "ragged means/vars at state {i}"
                )));
            }
            for &m in &self.means[i] {
                if !m.is_finite() {
                    return Err(Error::InvalidParams(format!("mean {m} at state {i}")));
                }
            }
            for &v in &self.vars[i] {
                if !v.is_finite() || v < VAR_FLOOR {
                    return Err(Error::InvalidParams(format!(
                        "variance {v} at state {i} below floor {VAR_FLOOR}"
                    )));
                }
            }
        }
        Ok(())
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

/// Per-iteration log-likelihoods of a training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingTrace {
    pub log_likelihoods: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl TrainingTrace {
    /// Writes the trace as a bare JSON array of log-likelihoods.
    pub fn to_json_file(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(&self.log_likelihoods).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Floors entries below `PROB_FLOOR` and renormalizes — but only when a
/// floor actually fired, so clean inputs are copied bit-for-bit.
fn floor_and_renormalize(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    let mut floored = false;
    for p in out.iter_mut() {
        if *p < PROB_FLOOR {
            *p = PROB_FLOOR;
            floored = true;
        }
    }
    if floored {
        let sum: f64 = out.iter().sum();
        for p in out.iter_mut() {
            *p /= sum;
        }
    }
    out
}

/// Seeds HMM parameters: pi from class frequencies, transitions from the
/// Markov-chain estimate (zeros floored), emission means from a seeded
/// k-means over the observations (centroids assigned to states in
/// descending cluster-size order), and per-dimension global sample
/// variances.
pub fn init_params(
    mc_trans: &TransitionMatrix,
    initial_freq: &[f64],
    obs: &ObservationSequence,
    seed: u64,
) -> Result<GaussianHmmParams> {
    let n = mc_trans.size();
    if initial_freq.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} frequencies for {} states",
            initial_freq.len(),
            n
        )));
    }
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let d = obs.dim();
    check_observations(obs, d)?;

    let pi = floor_and_renormalize(initial_freq);
    let trans_rows: Vec<Vec<f64>> = mc_trans
        .probs()
        .iter()
        .map(|row| floor_and_renormalize(row))
        .collect();
    let trans = TransitionMatrix::new(mc_trans.classes().to_vec(), trans_rows)?;

    let (centroids, sizes) = kmeans(&obs.observations, n, seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| (std::cmp::Reverse(sizes[k]), k));
    let means: Vec<Vec<f64>> = order.iter().map(|&k| centroids[k].clone()).collect();

    let t_len = obs.len();
    let mut var = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for x in &obs.observations {
        for (j, &v) in x.iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= t_len as f64;
    }
    for x in &obs.observations {
        for (j, &v) in x.iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    let denom = if t_len > 1 { (t_len - 1) as f64 } else { 1.0 };
    let global_var: Vec<f64> = var.iter().map(|&s| (s / denom).max(VAR_FLOOR)).collect();
    let vars = vec![global_var; n];

    GaussianHmmParams::new(mc_trans.classes().to_vec(), pi, trans, means, vars)
}

fn check_observations(obs: &ObservationSequence, d: usize) -> Result<()> {
    for (i, x) in obs.observations.iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "observation {i} has {} dimensions, expected {d}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NanObservation { index: i });
        }
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Deterministic seeded k-means (k-means++ seeding, Lloyd iterations).
/// Returns centroids and final cluster sizes.
fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all points coincide with some centroid; duplicates are fine
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cent) in centroids.iter().enumerate() {
                let d = sq_dist(p, cent);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (j, &v) in p.iter().enumerate() {
                sums[assignment[i]][j] += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c][j] = sums[c][j] / counts[c] as f64;
                }
            } else {
                // reseed an empty cluster with the worst-fit point
                let (far, far_d) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assignment[i]])))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                if far_d > 0.0 {
                    centroids[c] = points[far].clone();
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut sizes = vec![0usize; k];
    for &a in &assignment {
        sizes[a] += 1;
    }
    (centroids, sizes)
}

/// Log-density of `x` under state `state`'s diagonal Gaussian.
pub fn log_emission_density(params: &GaussianHmmParams, state: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (d, &v) in x.iter().enumerate() {
        let var = params.vars[state][d];
        let diff = v - params.means[state][d];
        acc += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - diff * diff / (2.0 * var);
    }
    acc
}

/// E-step outputs: sequence log-likelihood, state posteriors `gamma[t][i]`,
/// and pairwise posteriors `xi[t][i][j]` for t in 0..T-1.
#[derive(Debug, Clone)]
pub struct ForwardBackward {
    pub log_likelihood: f64,
    pub gamma: Vec<Vec<f64>>,
    pub xi: Vec<Vec<Vec<f64>>>,
}

/// Scaled forward-backward. Emission densities are offset by their per-step
/// maximum before exponentiation, so neither long sequences nor tight
/// variances underflow; the offsets are restored in the log-likelihood.
pub fn forward_backward(
    params: &GaussianHmmParams,
    obs: &ObservationSequence,
) -> Result<ForwardBackward> {
    params.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let n = params.state_count();
    let d = params.dim();
    check_observations(obs, d)?;
    let t_len = obs.len();
    let a = params.trans.probs();

    let mut b = vec![vec![0.0; n]; t_len];
    let mut offsets = vec![0.0; t_len];
    for t in 0..t_len {
        let logs: Vec<f64> = (0..n)
            .map(|i| log_emission_density(params, i, &obs.observations[t]))
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        offsets[t] = m;
        for i in 0..n {
            b[t][i] = (logs[i] - m).exp();
        }
    }

    let mut alpha = vec![vec![0.0; n]; t_len];
    let mut scale = vec![0.0; t_len];
    for i in 0..n {
        alpha[0][i] = params.pi[i] * b[0][i];
    }
    scale[0] = alpha[0].iter().sum();
    if !(scale[0] > 0.0) || !scale[0].is_finite() {
        return Err(Error::ZeroForwardMass { step: 0 });
    }
    for i in 0..n {
        alpha[0][i] /= scale[0];
    }
    for t in 1..t_len {
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += alpha[t - 1][i] * a[i][j];
            }
            alpha[t][j] = s * b[t][j];
        }
        scale[t] = alpha[t].iter().sum();
        if !(scale[t] > 0.0) || !scale[t].is_finite() {
            return Err(Error::ZeroForwardMass { step: t });
        }
        for j in 0..n {
            alpha[t][j] /= scale[t];
        }
    }
    let log_likelihood: f64 = scale
        .iter()
        .zip(&offsets)
        .map(|(&c, &m)| c.ln() + m)
        .sum();

    let mut beta = vec![vec![1.0; n]; t_len];
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += a[i][j] * b[t + 1][j] * beta[t + 1][j];
            }
            beta[t][i] = s / scale[t + 1];
        }
    }

    let mut gamma = vec![vec![0.0; n]; t_len];
    for t in 0..t_len {
        let mut sum = 0.0;
        for i in 0..n {
            gamma[t][i] = alpha[t][i] * beta[t][i];
            sum += gamma[t][i];
        }
        for i in 0..n {
            gamma[t][i] /= sum;
        }
    }

    let mut xi = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 0..t_len - 1 {
        let mut slice = vec![vec![0.0; n]; n];
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = alpha[t][i] * a[i][j] * b[t + 1][j] * beta[t + 1][j] / scale[t + 1];
                slice[i][j] = v;
                sum += v;
            }
        }
        for row in &mut slice {
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        xi.push(slice);
    }

    Ok(ForwardBackward {
        log_likelihood,
        gamma,
        xi,
    })
}

fn m_step(
    params: &GaussianHmmParams,
    obs: &ObservationSequence,
    fb: &ForwardBackward,
) -> Result<GaussianHmmParams> {
    let n = params.state_count();
    let d = params.dim();
    let t_len = obs.len();

    let mut pi: Vec<f64> = fb.gamma[0].clone();
    let pi_sum: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= pi_sum;
    }

    let mut trans_rows = Vec::with_capacity(n);
    for i in 0..n {
        let denom: f64 = (0..t_len - 1).map(|t| fb.gamma[t][i]).sum();
        if denom > RESP_EPS {
            let mut row: Vec<f64> = (0..n)
                .map(|j| (0..t_len - 1).map(|t| fb.xi[t][i][j]).sum::<f64>() / denom)
                .collect();
            let s: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= s;
            }
            trans_rows.push(row);
        } else {
            // state carries no responsibility mass; its row is unidentified
            trans_rows.push(params.trans.probs()[i].clone());
        }
    }
    let trans = TransitionMatrix::new(params.classes.clone(), trans_rows)?;

    let mut means = params.means.clone();
    let mut vars = params.vars.clone();
    for i in 0..n {
        let w: f64 = (0..t_len).map(|t| fb.gamma[t][i]).sum();
        if w <= RESP_EPS {
            continue;
        }
        for j in 0..d {
            let m: f64 = (0..t_len)
                .map(|t| fb.gamma[t][i] * obs.observations[t][j])
                .sum::<f64>()
                / w;
            let v: f64 = (0..t_len)
                .map(|t| {
                    let diff = obs.observations[t][j] - m;
                    fb.gamma[t][i] * diff * diff
                })
                .sum::<f64>()
                / w;
            means[i][j] = m;
            vars[i][j] = v.max(VAR_FLOOR);
        }
    }

    GaussianHmmParams::new(params.classes.clone(), pi, trans, means, vars)
}

/// Baum-Welch training. Stops when the log-likelihood improvement drops
/// below `tol` or after `max_iter` iterations; the trace records the
/// likelihood of every E-step evaluated.
pub fn baum_welch_train(
    params: &GaussianHmmParams,
    obs: &ObservationSequence,
    max_iter: usize,
    tol: f64,
) -> Result<(GaussianHmmParams, TrainingTrace)> {
    params.validate()?;
    if obs.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "training needs at least 2 observations, got {}",
            obs.len()
        )));
    }
    let mut current = params.clone();
    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    let mut prev: Option<f64> = None;
    for iteration in 0..max_iter {
        let fb = forward_backward(&current, obs).map_err(|e| match e {
            Error::ZeroForwardMass { step } => Error::TrainingDiverged {
                iteration,
                detail: format!("zero forward mass at step {step}"),
            },
            other => other,
        })?;
        if !fb.log_likelihood.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration,
                detail: format!("log-likelihood {}", fb.log_likelihood),
            });
        }
        log_likelihoods.push(fb.log_likelihood);
        if let Some(p) = prev {
            if fb.log_likelihood - p < tol {
                converged = true;
                break;
            }
        }
        current = m_step(&current, obs, &fb)?;
        prev = Some(fb.log_likelihood);
    }
    let trace = TrainingTrace {
        iterations_run: log_likelihoods.len(),
        log_likelihoods,
        converged,
    };
    Ok((current, trace))
}

/// The learned transition matrix — the temporal change quantum model.
pub fn learned_quantum(params: &GaussianHmmParams) -> Result<TransitionMatrix> {
    params.validate()?;
    Ok(params.trans.clone())
}
