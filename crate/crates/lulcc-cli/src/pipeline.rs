//! Full pipeline: estimate the Markov-chain baseline, train the HMM on the
//! factor series, fit the logistic sub-models, allocate both quanta onto
//! the later estimation grid, and validate both predictions against the
//! actual target grid.
//!
//! The config file carries relative paths resolved against `--data-dir`
//! (default: the config file's directory), so a run is reproducible from
//! any working directory. Flags override config fields. Every artifact is
//! hashed into the comparison report; two runs with the same inputs and
//! seed produce bit-identical artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use lulcc::factors::{build_observation_sequence, load_factor_table, normalize_min_max};
use lulcc::grid::{
    class_frequencies, read_categorical_ascii, read_continuous_ascii, ClassCode,
    ContinuousGrid,
};
use lulcc::hmm;
use lulcc::lcm;
use lulcc::markov::{
    estimate_transition_matrix, extrapolate_elementwise_power, extrapolate_matrix_power,
    TransitionMatrix,
};
use lulcc::suitability;
use lulcc::validate;
use lulcc::Error as LulccError;

#[derive(Args)]
pub struct PipelineArgs {
    /// Pipeline config JSON
    #[arg(long)]
    config: PathBuf,
    /// Directory that relative paths in the config resolve against
    /// (default: the config file's directory)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    repeat: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct YearGrid {
    year: i32,
    path: String,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct NamedPath {
    name: String,
    path: String,
}

fn default_urban() -> ClassCode {
    2
}
fn default_allowed() -> Vec<(ClassCode, ClassCode)> {
    vec![(1, 3), (1, 2), (3, 1), (3, 2)]
}
fn default_repeat() -> usize {
    6
}
fn default_max_iter() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-6
}
fn default_l2() -> f64 {
    lcm::DEFAULT_L2
}
fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct PipelineConfig {
    /// Classified grids by year; the first two estimate the baseline and
    /// fit the sub-models, the last is the actual grid predictions are
    /// validated against.
    lc_grids: Vec<YearGrid>,
    factor_csv: String,
    drivers: Vec<NamedPath>,
    water_mask: Option<String>,
    classes: Vec<ClassCode>,
    #[serde(default = "default_urban")]
    urban_code: ClassCode,
    /// Transitions with logistic sub-models; mass of other transitions
    /// folds into persistence.
    #[serde(default = "default_allowed")]
    allowed_transitions: Vec<(ClassCode, ClassCode)>,
    #[serde(default = "default_repeat")]
    repeat_factor: usize,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_l2")]
    l2: f64,
    #[serde(default = "default_bins")]
    bins: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    out_dir: Option<String>,
}

#[derive(Debug, serde::Serialize)]
struct ModelSummary {
    overall_accuracy: f64,
    urban_persistence: f64,
    quantum_total: u64,
    cells_changed: u64,
}

#[derive(Debug, serde::Serialize)]
struct ComparisonReport {
    config_hash: String,
    seed: u64,
    classes: Vec<ClassCode>,
    estimation_years: [i32; 2],
    target_year: i32,
    extrapolation_mode: String,
    extrapolation_exponent: f64,
    mc: ModelSummary,
    hmm: ModelSummary,
    hmm_iterations: usize,
    hmm_converged: bool,
    hmm_final_log_likelihood: f64,
    fitted_transitions: Vec<(ClassCode, ClassCode)>,
    cramers_v: BTreeMap<String, f64>,
    warnings: Vec<String>,
    artifacts: BTreeMap<String, String>,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn run(args: PipelineArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("read config {}", args.config.display()))?;
    let mut config: PipelineConfig =
        serde_json::from_str(&text).with_context(|| "parse pipeline config")?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(v) = args.max_iter {
        config.max_iter = v;
    }
    if let Some(v) = args.tol {
        config.tol = v;
    }
    if let Some(v) = args.l2 {
        config.l2 = v;
    }
    if let Some(v) = args.repeat {
        config.repeat_factor = v;
    }
    if let Some(v) = args.bins {
        config.bins = v;
    }
    let config_hash = crate::sha256_hex(serde_json::to_string(&config)?.as_bytes());
    let base_dir = match &args.data_dir {
        Some(d) => d.clone(),
        None => args
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let out_dir = match (&args.out, &config.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(&base_dir, o),
        (None, None) => bail!("no output directory: set out_dir in the config or pass --out"),
    };
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("create {}", out_dir.display()))?;

    // ── inputs ──────────────────────────────────────────────────────
    if config.lc_grids.len() < 3 {
        bail!(
            "need at least 3 lc_grids (two to estimate from, one to validate against), got {}",
            config.lc_grids.len()
        );
    }
    let mut year_grids = config.lc_grids.clone();
    year_grids.sort_by_key(|g| g.year);
    let mut grids = Vec::new();
    for yg in &year_grids {
        let g = read_categorical_ascii(&resolve(&base_dir, &yg.path))
            .with_context(|| format!("land-cover grid {}", yg.path))?;
        grids.push((yg.year, g));
    }
    let (t0_year, t0) = (grids[0].0, &grids[0].1);
    let (t1_year, t1) = (grids[1].0, &grids[1].1);
    let (target_year, actual) = (grids.last().unwrap().0, &grids.last().unwrap().1);
    if t1_year <= t0_year || target_year <= t1_year {
        bail!("lc_grids years must be strictly increasing with the target last");
    }
    let mask = match &config.water_mask {
        Some(p) => Some(
            read_categorical_ascii(&resolve(&base_dir, p))
                .with_context(|| format!("water mask {p}"))?,
        ),
        None => None,
    };
    let drivers: Vec<(String, ContinuousGrid)> = config
        .drivers
        .iter()
        .map(|np| {
            Ok((
                np.name.clone(),
                read_continuous_ascii(&resolve(&base_dir, &np.path))
                    .with_context(|| format!("driver {}", np.path))?,
            ))
        })
        .collect::<Result<_>>()?;
    let driver_refs: Vec<(&str, &ContinuousGrid)> =
        drivers.iter().map(|(n, g)| (n.as_str(), g)).collect();
    let driver_grid_refs: Vec<&ContinuousGrid> = drivers.iter().map(|(_, g)| g).collect();

    let mut warnings = Vec::new();
    let mut artifacts: Vec<PathBuf> = Vec::new();

    // ── temporal models ─────────────────────────────────────────────
    let mc_base = estimate_transition_matrix(t0, t1, &config.classes, mask.as_ref())?;
    let mc_base_path = out_dir.join("mc_base_matrix.json");
    mc_base.to_json_file(&mc_base_path)?;
    artifacts.push(mc_base_path);

    let span = (t1_year - t0_year) as f64;
    let horizon = (target_year - t1_year) as f64;
    let exponent = horizon / span;
    let (mc_extrap, mode) = if exponent.fract() == 0.0 {
        (
            extrapolate_matrix_power(&mc_base, exponent as u32)?,
            "matrix_power",
        )
    } else {
        (
            extrapolate_elementwise_power(&mc_base, exponent)?,
            "elementwise_power",
        )
    };
    let mc_extrap_path = out_dir.join("mc_extrapolated_matrix.json");
    mc_extrap.to_json_file(&mc_extrap_path)?;
    artifacts.push(mc_extrap_path);

    let table = load_factor_table(&resolve(&base_dir, &config.factor_csv))?;
    let normalized = normalize_min_max(&table);
    let obs = build_observation_sequence(&normalized, config.repeat_factor)?;
    let freq = class_frequencies(t0, &config.classes, mask.as_ref())?;
    let init = hmm::init_params(&mc_base, &freq, &obs, config.seed)?;
    let (params, trace) = hmm::baum_welch_train(&init, &obs, config.max_iter, config.tol)?;
    let hmm_learned = hmm::learned_quantum(&params)?;
    let params_path = out_dir.join("hmm_params.json");
    params.to_json_file(&params_path)?;
    artifacts.push(params_path);
    let trace_path = out_dir.join("hmm_trace.json");
    trace.to_json_file(&trace_path)?;
    artifacts.push(trace_path);

    // ── spatial sub-models ──────────────────────────────────────────
    let mut submodels = Vec::new();
    for &(from, to) in &config.allowed_transitions {
        let samples = match lcm::build_transition_samples(
            t0,
            t1,
            &driver_refs,
            from,
            to,
            mask.as_ref(),
        ) {
            Ok(s) => s,
            Err(e @ LulccError::ZeroEligibleCells { .. }) => {
                warnings.push(format!("skipping sub-model {from}>{to}: {e}"));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if samples.label_balance != lcm::LabelBalance::Mixed {
            warnings.push(format!(
                "labels for {from}>{to} are one-sided ({:?})",
                samples.label_balance
            ));
        }
        match lcm::fit_logistic(&samples, config.l2) {
            Ok(model) => {
                let sub = lcm::TransitionSubModel::new(from, to, model)?;
                let path = out_dir.join(format!("submodel_{from}_{to}.json"));
                sub.to_json_file(&path)?;
                artifacts.push(path);
                submodels.push(sub);
            }
            Err(e @ (LulccError::ConstantFeature(_) | LulccError::FitDidNotConverge(_))) => {
                warnings.push(format!("skipping sub-model {from}>{to}: {e}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if submodels.is_empty() {
        bail!("no transition sub-model could be fitted");
    }
    let fitted: Vec<(ClassCode, ClassCode)> = submodels
        .iter()
        .map(|s| (s.from_class, s.to_class))
        .collect();
    let potentials: Vec<lcm::PotentialMap> = submodels
        .iter()
        .map(|s| Ok(lcm::potential_map(s, &driver_grid_refs, t1, mask.as_ref())?))
        .collect::<Result<_>>()?;

    // ── prediction + validation per temporal model ──────────────────
    let mut cramers = BTreeMap::new();
    for (name, grid) in &drivers {
        cramers.insert(
            name.clone(),
            suitability::cramers_v(grid, actual, config.bins, mask.as_ref())?,
        );
    }

    let run_model = |tag: &str,
                         matrix: &TransitionMatrix,
                         warnings: &mut Vec<String>,
                         artifacts: &mut Vec<PathBuf>|
     -> Result<ModelSummary> {
        let quantum = lcm::compute_quantum(matrix, t1, mask.as_ref(), &fitted)?;
        let qpath = out_dir.join(format!("quantum_{tag}.json"));
        std::fs::write(&qpath, serde_json::to_string_pretty(&quantum)?)?;
        artifacts.push(qpath);
        let (predicted, report) =
            lcm::allocate_changes(t1, &potentials, &quantum, mask.as_ref())?;
        for t in &report.transitions {
            if t.capped {
                warnings.push(format!(
                    "{tag}: quota {} for {}>{} capped at {} eligible cells",
                    t.quota, t.from, t.to, t.candidates
                ));
            }
        }
        let ppath = out_dir.join(format!("predicted_{tag}.asc"));
        predicted.write_ascii(&ppath)?;
        artifacts.push(lulcc::grid::legend_sidecar_path(&ppath));
        artifacts.push(ppath);
        let cm = validate::confusion_matrix(actual, &predicted, &config.classes, mask.as_ref())?;
        let blob = validate::blob_analysis(actual, &predicted, config.urban_code, mask.as_ref())?;
        let vreport = validate::build_report(&cm, blob, cramers.clone());
        let vpath = out_dir.join(format!("validation_{tag}.json"));
        std::fs::write(&vpath, serde_json::to_string_pretty(&vreport)?)?;
        artifacts.push(vpath);
        let opath = out_dir.join(format!("overlay_{tag}.ppm"));
        validate::render_overlay(actual, &predicted, config.urban_code, mask.as_ref(), &opath)?;
        artifacts.push(opath);
        let cells_changed = t1
            .cells()
            .iter()
            .zip(predicted.cells())
            .filter(|(a, b)| a != b)
            .count() as u64;
        Ok(ModelSummary {
            overall_accuracy: vreport.overall_accuracy,
            urban_persistence: matrix.persistence(config.urban_code).unwrap_or(f64::NAN),
            quantum_total: quantum.total(),
            cells_changed,
        })
    };

    let mc_summary = run_model("mc", &mc_extrap, &mut warnings, &mut artifacts)?;
    let hmm_summary = run_model("hmm", &hmm_learned, &mut warnings, &mut artifacts)?;

    // ── comparison report ───────────────────────────────────────────
    let mut hashes = BTreeMap::new();
    for path in &artifacts {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        hashes.insert(name, crate::sha256_file(path)?);
    }
    let report = ComparisonReport {
        config_hash,
        seed: config.seed,
        classes: config.classes.clone(),
        estimation_years: [t0_year, t1_year],
        target_year,
        extrapolation_mode: mode.to_string(),
        extrapolation_exponent: exponent,
        mc: mc_summary,
        hmm: hmm_summary,
        hmm_iterations: trace.iterations_run,
        hmm_converged: trace.converged,
        hmm_final_log_likelihood: trace.log_likelihoods.last().copied().unwrap_or(f64::NAN),
        fitted_transitions: fitted,
        cramers_v: cramers,
        warnings,
        artifacts: hashes,
    };
    let report_path = out_dir.join("comparison.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "MC-LR accuracy {:.6}, HMM-LR accuracy {:.6}; wrote {}",
        report.mc.overall_accuracy,
        report.hmm.overall_accuracy,
        report_path.display()
    );
    Ok(())
}
