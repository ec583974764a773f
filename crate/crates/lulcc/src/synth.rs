//! Synthetic ground-truth scenarios: HMM sequence sampling and co-evolving
//! land-cover grids with known, possibly non-stationary, transition
//! dynamics.
//!
//! Every random draw flows from the single config seed through a per-stage
//! label hash, so adding a stage never perturbs the draws of earlier
//! stages. Transition targets are placed by a blend of driver affinity and
//! noise (rank-biased placement), which gives the logistic sub-models a
//! learnable spatial signal.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::factors::{FactorTable, ObservationSequence};
use crate::grid::{
    canonical_legend, class_frequencies, CategoricalGrid, ClassCode, ContinuousGrid,
    GridHeader,
};
use crate::hmm::GaussianHmmParams;
use crate::markov::TransitionMatrix;
use crate::suitability::{proximity_transform, slope_from_dem, slope_suitability};

/// One stretch of years governed by a single true transition matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochSpec {
    /// Number of year-to-year transition steps in this epoch.
    pub steps: usize,
    /// Row-stochastic matrix over the config's class list.
    pub probs: Vec<Vec<f64>>,
}

fn default_cellsize() -> f64 {
    30.0
}
fn default_repeat() -> usize {
    6
}
fn default_water_code() -> ClassCode {
    4
}
fn default_placement_weight() -> f64 {
    0.35
}
fn default_noise() -> f64 {
    0.03
}
fn default_start_year() -> i32 {
    2001
}
fn default_relief() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScenarioConfig {
    pub nrows: usize,
    pub ncols: usize,
    #[serde(default = "default_cellsize")]
    pub cellsize: f64,
    #[serde(default)]
    pub xllcorner: f64,
    #[serde(default)]
    pub yllcorner: f64,
    pub classes: Vec<ClassCode>,
    pub initial_mix: Vec<f64>,
    pub epochs: Vec<EpochSpec>,
    pub emission_means: Vec<Vec<f64>>,
    pub emission_vars: Vec<Vec<f64>>,
    pub factor_names: Vec<String>,
    #[serde(default = "default_noise")]
    pub factor_noise_sd: f64,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    #[serde(default = "default_repeat")]
    pub repeat_factor: usize,
    /// Weight of the driver affinity (vs. uniform noise) when ranking
    /// cells for placement; 0 is pure noise, 1 pure affinity.
    #[serde(default = "default_placement_weight")]
    pub placement_weight: f64,
    /// Total relief of the synthetic DEM in map units.
    #[serde(default = "default_relief")]
    pub dem_relief: f64,
    #[serde(default)]
    pub road_cols: Vec<usize>,
    #[serde(default)]
    pub road_rows: Vec<usize>,
    /// Water rectangles as [row0, col0, row1, col1], inclusive.
    #[serde(default)]
    pub water_rects: Vec<[usize; 4]>,
    #[serde(default = "default_water_code")]
    pub water_code: ClassCode,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn year_count(&self) -> usize {
        1 + self.epochs.iter().map(|e| e.steps).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.classes.len();
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.nrows == 0 || self.ncols == 0 {
            return bad("empty grid".to_string());
        }
        if n == 0 {
            return bad("no classes".to_string());
        }
        if self.classes.contains(&self.water_code) {
            return bad(format!(
                "water code {} must not be a modeled class",
                self.water_code
            ));
        }
        if self.initial_mix.len() != n {
            return bad(format!(
                "initial_mix has {} entries for {n} classes",
                self.initial_mix.len()
            ));
        }
        let mix_sum: f64 = self.initial_mix.iter().sum();
        if (mix_sum - 1.0).abs() > 1e-9 || self.initial_mix.iter().any(|&p| p < 0.0) {
            return bad(format!("initial_mix sums to {mix_sum}"));
        }
        if self.epochs.is_empty() || self.year_count() < 2 {
            return bad("need at least one epoch with at least one step".to_string());
        }
        for (i, e) in self.epochs.iter().enumerate() {
            if e.steps == 0 {
                return bad(format!("epoch {i} has zero steps"));
            }
            TransitionMatrix::new(self.classes.clone(), e.probs.clone())
                .map_err(|err| Error::InvalidConfig(format!("epoch {i}: {err}")))?;
        }
        let d = self.factor_names.len();
        if d == 0 {
            return bad("no factors".to_string());
        }
        if self.emission_means.len() != n || self.emission_vars.len() != n {
            return bad("emission means/vars must have one row per class".to_string());
        }
        for i in 0..n {
            if self.emission_means[i].len() != d || self.emission_vars[i].len() != d {
                return bad(format!("ragged emissions at class index {i}"));
            }
            if self.emission_vars[i].iter().any(|&v| !(v > 0.0)) {
                return bad(format!("non-positive variance at class index {i}"));
            }
        }
        if !(0.0..=1.0).contains(&self.placement_weight) {
            return bad(format!(
                "placement_weight {} outside [0, 1]",
                self.placement_weight
            ));
        }
        if self.factor_noise_sd < 0.0 {
            return bad("negative factor noise".to_string());
        }
        if self.road_cols.is_empty() && self.road_rows.is_empty() {
            return bad("at least one road line is required".to_string());
        }
        for &c in &self.road_cols {
            if c >= self.ncols {
                return bad(format!("road column {c} out of bounds"));
            }
        }
        for &r in &self.road_rows {
            if r >= self.nrows {
                return bad(format!("road row {r} out of bounds"));
            }
        }
        for rect in &self.water_rects {
            if rect[0] > rect[2] || rect[1] > rect[3] || rect[2] >= self.nrows || rect[3] >= self.ncols
            {
                return bad(format!("water rect {rect:?} out of bounds"));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn epoch_matrices(&self) -> Result<Vec<(usize, TransitionMatrix)>> {
        self.epochs
            .iter()
            .map(|e| {
                Ok((
                    e.steps,
                    TransitionMatrix::new(self.classes.clone(), e.probs.clone())?,
                ))
            })
            .collect()
    }
}

/// Everything a generated scenario produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub years: Vec<i32>,
    pub lc_grids: Vec<CategoricalGrid>,
    pub factors: FactorTable,
    pub dem: ContinuousGrid,
    pub slope: ContinuousGrid,
    pub slope_suitability: ContinuousGrid,
    pub road_proximity: ContinuousGrid,
    pub water_mask: CategoricalGrid,
    pub true_epochs: Vec<(usize, TransitionMatrix)>,
}

/// Derives an independent RNG from the scenario seed and a stage label
/// (FNV-1a over the label, mixed into the seed).
pub fn stage_rng(seed: u64, stage: &str) -> ChaCha20Rng {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in stage.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha20Rng::seed_from_u64(seed ^ h.rotate_left(17).wrapping_mul(0x9e3779b97f4a7c15))
}

fn sample_index(weights: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let r = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc >= r {
            return i;
        }
    }
    weights.len() - 1
}

/// Draws a hidden state path and Gaussian observations from the model.
pub fn sample_hmm_sequence(
    params: &GaussianHmmParams,
    length: usize,
    seed: u64,
) -> Result<(Vec<usize>, ObservationSequence)> {
    params.validate()?;
    if length == 0 {
        return Err(Error::EmptyObservations);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = params.dim();
    let mut states = Vec::with_capacity(length);
    let mut observations = Vec::with_capacity(length);
    let mut state = sample_index(&params.pi, &mut rng);
    for _ in 0..length {
        states.push(state);
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            let normal = Normal::new(params.means[state][j], params.vars[state][j].sqrt())
                .expect("positive stddev");
            x.push(normal.sample(&mut rng));
        }
        observations.push(x);
        state = sample_index(params.trans.probs()[state].as_slice(), &mut rng);
    }
    Ok((states, ObservationSequence::raw(observations)))
}

fn synthetic_dem(header: GridHeader, relief: f64) -> ContinuousGrid {
    let (nrows, ncols) = (header.nrows, header.ncols);
    let mut cells = Vec::with_capacity(nrows * ncols);
    for r in 0..nrows {
        let fr = r as f64 / (nrows.max(2) - 1) as f64;
        for c in 0..ncols {
            let fc = c as f64 / (ncols.max(2) - 1) as f64;
            let z = relief * (fr * fr + 0.2 * fr * (1.0 + (4.0 * std::f64::consts::PI * fc).sin()));
            cells.push(z);
        }
    }
    ContinuousGrid::new(header, cells).expect("finite DEM")
}

/// Affinity of a destination class for a cell, from road closeness and
/// slope suitability (both already in [0, 1]). Built for the canonical
/// codes; other codes get a neutral 0.5.
fn placement_affinity(to: ClassCode, closeness: f64, suit: f64) -> f64 {
    match to {
        1 => 0.6 * (1.0 - closeness) + 0.4 * (1.0 - suit),
        2 => 0.6 * closeness + 0.4 * suit,
        3 => 0.5 * suit + 0.5 * (1.0 - closeness),
        _ => 0.5,
    }
}

/// Largest-remainder integerization of `a_row * n` over the off-diagonal
/// targets; returns (to-index, count) pairs.
fn mover_quotas(row: &[f64], from: usize, n_cells: usize) -> Vec<(usize, u64)> {
    let raws: Vec<(usize, f64)> = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != from)
        .map(|(j, &p)| (j, p * n_cells as f64))
        .collect();
    let total_raw: f64 = raws.iter().map(|r| r.1).sum();
    let total = (total_raw.round() as u64).min(n_cells as u64);
    let mut quotas: Vec<(usize, u64, f64)> = raws
        .iter()
        .map(|&(j, q)| (j, q.floor() as u64, q - q.floor()))
        .collect();
    let mut assigned: u64 = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&x, &y| {
        quotas[y]
            .2
            .total_cmp(&quotas[x].2)
            .then(quotas[x].0.cmp(&quotas[y].0))
    });
    let mut k = 0;
    while assigned < total && !order.is_empty() {
        quotas[order[k % order.len()]].1 += 1;
        assigned += 1;
        k += 1;
    }
    quotas.into_iter().map(|(j, q, _)| (j, q)).collect()
}

pub fn generate_scenario(config: &ScenarioConfig) -> Result<ScenarioBundle> {
    config.validate()?;
    let header = GridHeader::new(
        config.ncols,
        config.nrows,
        config.xllcorner,
        config.yllcorner,
        config.cellsize,
        -9999.0,
    )?;
    let (nrows, ncols) = (config.nrows, config.ncols);
    let cell_count = nrows * ncols;

    // drivers
    let dem = synthetic_dem(header, config.dem_relief);
    let slope = slope_from_dem(&dem)?;
    let suit = slope_suitability(&slope)?;
    let mut road_cells = vec![0; cell_count];
    for &c in &config.road_cols {
        for r in 0..nrows {
            road_cells[r * ncols + c] = 1;
        }
    }
    for &r in &config.road_rows {
        for c in 0..ncols {
            road_cells[r * ncols + c] = 1;
        }
    }
    let road_mask = CategoricalGrid::new(
        header,
        road_cells,
        [(1, "road".to_string())].into_iter().collect(),
    )?;
    let proximity = proximity_transform(&road_mask, 1)?;
    let max_prox = proximity
        .cells()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let closeness: Vec<f64> = proximity
        .cells()
        .iter()
        .map(|&d| if max_prox > 0.0 { 1.0 - d / max_prox } else { 1.0 })
        .collect();

    // water mask
    let mut water_cells = vec![0; cell_count];
    for rect in &config.water_rects {
        for r in rect[0]..=rect[2] {
            for c in rect[1]..=rect[3] {
                water_cells[r * ncols + c] = 1;
            }
        }
    }
    let water_mask = CategoricalGrid::new(
        header,
        water_cells.clone(),
        [(1, "water".to_string())].into_iter().collect(),
    )?;

    // legend for land-cover grids
    let canonical = canonical_legend();
    let mut legend = BTreeMap::new();
    for &c in config.classes.iter().chain(std::iter::once(&config.water_code)) {
        legend.insert(
            c,
            canonical
                .get(&c)
                .cloned()
                .unwrap_or_else(|| format!("class_{c}")),
        );
    }

    // year 0: seeded class mixture outside water
    let mut rng = stage_rng(config.seed, "initial-grid");
    let mut cells = vec![0; cell_count];
    for idx in 0..cell_count {
        cells[idx] = if water_cells[idx] == 1 {
            config.water_code
        } else {
            config.classes[sample_index(&config.initial_mix, &mut rng)]
        };
    }
    let mut lc_grids = vec![CategoricalGrid::new(header, cells, legend.clone())?];

    // evolve year by year
    let epochs = config.epoch_matrices()?;
    let mut step = 0usize;
    for (steps, matrix) in &epochs {
        for _ in 0..*steps {
            let mut rng = stage_rng(config.seed, &format!("evolve-step-{step}"));
            let prev = lc_grids.last().unwrap();
            let mut next = prev.cells().to_vec();
            let mut moved = vec![false; cell_count];
            for (i, &from) in config.classes.iter().enumerate() {
                let members: Vec<usize> = (0..cell_count)
                    .filter(|&idx| prev.cells()[idx] == from && water_cells[idx] == 0)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                for (j, quota) in mover_quotas(&matrix.probs()[i], i, members.len()) {
                    if quota == 0 {
                        continue;
                    }
                    let to = config.classes[j];
                    let w = config.placement_weight;
                    let mut scored: Vec<(usize, f64)> = members
                        .iter()
                        .filter(|&&idx| !moved[idx])
                        .map(|&idx| {
                            let aff = placement_affinity(
                                to,
                                closeness[idx],
                                suit.cells()[idx].clamp(0.0, 1.0),
                            );
                            (idx, w * aff + (1.0 - w) * rng.random::<f64>())
                        })
                        .collect();
                    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    for &(idx, _) in scored.iter().take(quota as usize) {
                        next[idx] = to;
                        moved[idx] = true;
                    }
                }
            }
            lc_grids.push(CategoricalGrid::new(header, next, legend.clone())?);
            step += 1;
        }
    }

    // factor table: frequency-weighted emission means plus noise
    let t_len = config.year_count();
    let d = config.factor_names.len();
    let mut rng = stage_rng(config.seed, "factors");
    let mut values = Vec::with_capacity(t_len);
    for grid in &lc_grids {
        let freq = class_frequencies(grid, &config.classes, Some(&water_mask))?;
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            let mut x = 0.0;
            for (i, &f) in freq.iter().enumerate() {
                x += f * config.emission_means[i][j];
            }
            if config.factor_noise_sd > 0.0 {
                let normal = Normal::new(0.0, config.factor_noise_sd).expect("positive sd");
                x += normal.sample(&mut rng);
            }
            row.push(x);
        }
        values.push(row);
    }
    let years: Vec<i32> = (0..t_len as i32).map(|t| config.start_year + t).collect();
    let factors = FactorTable::new(years.clone(), config.factor_names.clone(), values, 1)?;

    Ok(ScenarioBundle {
        config: config.clone(),
        years,
        lc_grids,
        factors,
        dem,
        slope,
        slope_suitability: suit,
        road_proximity: proximity,
        water_mask,
        true_epochs: epochs,
    })
}

/// Ground truth record stored next to the generated artifacts.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TruthRecord {
    pub seed: u64,
    pub classes: Vec<ClassCode>,
    pub epochs: Vec<EpochSpec>,
    pub emission_means: Vec<Vec<f64>>,
    pub emission_vars: Vec<Vec<f64>>,
}

/// Writes the bundle as a directory of ASCII grids, the factor CSV, and a
/// truth JSON; returns the paths written (legend sidecars included).
pub fn write_bundle(bundle: &ScenarioBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let grid = |name: String| dir.join(name);
    for (year, lc) in bundle.years.iter().zip(&bundle.lc_grids) {
        let path = grid(format!("lc_{year}.asc"));
        lc.write_ascii(&path)?;
        written.push(crate::grid::legend_sidecar_path(&path));
        written.push(path);
    }
    for (name, g) in [
        ("dem.asc", &bundle.dem),
        ("slope.asc", &bundle.slope),
        ("slope_suitability.asc", &bundle.slope_suitability),
        ("road_proximity.asc", &bundle.road_proximity),
    ] {
        let path = grid(name.to_string());
        g.write_ascii(&path)?;
        written.push(path);
    }
    let water_path = grid("water_mask.asc".to_string());
    bundle.water_mask.write_ascii(&water_path)?;
    written.push(crate::grid::legend_sidecar_path(&water_path));
    written.push(water_path);
    let csv_path = dir.join("factors.csv");
    bundle.factors.write_csv(&csv_path)?;
    written.push(csv_path);
    let truth = TruthRecord {
        seed: bundle.config.seed,
        classes: bundle.config.classes.clone(),
        epochs: bundle.config.epochs.clone(),
        emission_means: bundle.config.emission_means.clone(),
        emission_vars: bundle.config.emission_vars.clone(),
    };
    let truth_path = dir.join("truth.json");
    let text = serde_json::to_string_pretty(&truth).map_err(|e| Error::Json {
        path: truth_path.clone(),
        detail: e.to_string(),
    })?;
    std::fs::write(&truth_path, text).map_err(|source| Error::Write {
        path: truth_path.clone(),
        source,
    })?;
    written.push(truth_path);
    written.sort();
    Ok(written)
}
