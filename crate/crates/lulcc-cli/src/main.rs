//! `lulcc` — command-line driver for the land-change modeling toolkit.
//!
//! Subcommands wire the library into the two integrated prediction models
//! (a Markov-chain quantum with logistic allocation, and an HMM quantum
//! with the same allocation) plus the supporting utilities. Failures print
//! one machine-readable JSON error line on stderr and exit 1; usage errors
//! exit 2.

mod pipeline;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lulcc::factors::{build_observation_sequence, load_factor_table, normalize_min_max};
use lulcc::grid::{
    class_frequencies, read_categorical_ascii, read_continuous_ascii, CategoricalGrid,
    ClassCode,
};
use lulcc::hmm;
use lulcc::lcm;
use lulcc::markov::{
    estimate_transition_matrix, extrapolate_elementwise_power, extrapolate_matrix_power,
    TransitionMatrix,
};
use lulcc::radiometry;
use lulcc::suitability;
use lulcc::synth;
use lulcc::validate;

#[derive(Parser)]
#[command(
    name = "lulcc",
    version,
    about = "Land-use/land-cover change modeling: Markov-chain and HMM temporal models with logistic-regression allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a transition matrix from two classified grids
    McEstimate(McEstimateArgs),
    /// Extrapolate a transition matrix by matrix or elementwise power
    McExtrapolate(McExtrapolateArgs),
    /// Train the Gaussian-emission HMM on a factor CSV
    HmmTrain(HmmTrainArgs),
    /// Fit one logistic transition sub-model from a grid pair and drivers
    LrFit(LrFitArgs),
    /// Allocate predicted changes onto a grid
    Predict(PredictArgs),
    /// Compare predicted and actual grids
    Validate(ValidateArgs),
    /// Single-band preprocessing utilities
    #[command(subcommand)]
    Radiometry(RadiometryCmd),
    /// Generate a synthetic scenario bundle
    Synth(SynthArgs),
    /// Run the full MC-LR and HMM-LR pipelines and compare them
    Pipeline(pipeline::PipelineArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::McEstimate(a) => mc_estimate(a),
        Command::McExtrapolate(a) => mc_extrapolate(a),
        Command::HmmTrain(a) => hmm_train(a),
        Command::LrFit(a) => lr_fit(a),
        Command::Predict(a) => predict(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Radiometry(a) => radiometry_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Pipeline(a) => pipeline::run(a),
    }
}

pub(crate) fn parse_class_list(s: &str) -> Result<Vec<ClassCode>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<ClassCode>()
                .map_err(|_| anyhow!("bad class code {t:?}"))
        })
        .collect()
}

pub(crate) fn parse_transition(s: &str) -> Result<(ClassCode, ClassCode)> {
    let (from, to) = s
        .split_once('>')
        .ok_or_else(|| anyhow!("transition must look like FROM>TO, got {s:?}"))?;
    Ok((
        from.trim().parse().map_err(|_| anyhow!("bad class {from:?}"))?,
        to.trim().parse().map_err(|_| anyhow!("bad class {to:?}"))?,
    ))
}

pub(crate) fn parse_named_path(s: &str) -> Result<(String, PathBuf)> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("driver must look like NAME=PATH, got {s:?}"))?;
    Ok((name.trim().to_string(), PathBuf::from(path.trim())))
}

fn load_mask(path: &Option<PathBuf>) -> Result<Option<CategoricalGrid>> {
    match path {
        Some(p) => Ok(Some(
            read_categorical_ascii(p).with_context(|| format!("mask {}", p.display()))?,
        )),
        None => Ok(None),
    }
}

#[derive(Args)]
struct McEstimateArgs {
    /// Earlier classified grid
    #[arg(long)]
    t0: PathBuf,
    /// Later classified grid
    #[arg(long)]
    t1: PathBuf,
    /// Comma-separated class codes, e.g. 1,2,3
    #[arg(long)]
    classes: String,
    /// Mask grid; non-zero cells are excluded
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output transition matrix JSON
    #[arg(long)]
    out: PathBuf,
}

fn mc_estimate(a: McEstimateArgs) -> Result<()> {
    let t0 = read_categorical_ascii(&a.t0)?;
    let t1 = read_categorical_ascii(&a.t1)?;
    let classes = parse_class_list(&a.classes)?;
    let mask = load_mask(&a.mask)?;
    let m = estimate_transition_matrix(&t0, &t1, &classes, mask.as_ref())?;
    m.to_json_file(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Args)]
struct McExtrapolateArgs {
    /// Input transition matrix JSON
    #[arg(long)]
    matrix: PathBuf,
    /// Integer period count for Chapman-Kolmogorov matrix power
    #[arg(long, conflicts_with = "exponent")]
    power: Option<u32>,
    /// Real exponent for the elementwise power-law variant
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn mc_extrapolate(a: McExtrapolateArgs) -> Result<()> {
    let m = TransitionMatrix::from_json_file(&a.matrix)?;
    let out = match (a.power, a.exponent) {
        (Some(k), None) => extrapolate_matrix_power(&m, k)?,
        (None, Some(e)) => extrapolate_elementwise_power(&m, e)?,
        _ => bail!("exactly one of --power or --exponent is required"),
    };
    out.to_json_file(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Args)]
struct HmmTrainArgs {
    /// Factor CSV (year,<name>,...)
    #[arg(long)]
    factors: PathBuf,
    /// Initial transition matrix JSON (typically the MC estimate)
    #[arg(long)]
    init_matrix: PathBuf,
    /// Initial state frequencies as comma-separated reals
    #[arg(long, conflicts_with = "freq_grid")]
    freq: Option<String>,
    /// Or: classified grid to count frequencies from
    #[arg(long)]
    freq_grid: Option<PathBuf>,
    /// Mask used with --freq-grid
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Observations per year
    #[arg(long, default_value_t = 6)]
    repeat: usize,
    #[arg(long, default_value_t = 50000)]
    max_iter: usize,
    /// Stop when the log-likelihood improves by less than this
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_params: PathBuf,
    #[arg(long)]
    out_trace: PathBuf,
}

fn hmm_train(a: HmmTrainArgs) -> Result<()> {
    let table = load_factor_table(&a.factors)?;
    let normalized = normalize_min_max(&table);
    let obs = build_observation_sequence(&normalized, a.repeat)?;
    let init_matrix = TransitionMatrix::from_json_file(&a.init_matrix)?;
    let freq = match (&a.freq, &a.freq_grid) {
        (Some(text), None) => text
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| anyhow!("bad frequency {t:?}")))
            .collect::<Result<Vec<f64>>>()?,
        (None, Some(path)) => {
            let grid = read_categorical_ascii(path)?;
            let mask = load_mask(&a.mask)?;
            class_frequencies(&grid, init_matrix.classes(), mask.as_ref())?
        }
        _ => bail!("exactly one of --freq or --freq-grid is required"),
    };
    let init = hmm::init_params(&init_matrix, &freq, &obs, a.seed)?;
    let (params, trace) = hmm::baum_welch_train(&init, &obs, a.max_iter, a.tol)?;
    params.to_json_file(&a.out_params)?;
    trace.to_json_file(&a.out_trace)?;
    println!(
        "trained {} iterations (converged: {}), wrote {} and {}",
        trace.iterations_run,
        trace.converged,
        a.out_params.display(),
        a.out_trace.display()
    );
    Ok(())
}

#[derive(Args)]
struct LrFitArgs {
    #[arg(long)]
    t0: PathBuf,
    #[arg(long)]
    t1: PathBuf,
    /// Driver raster as NAME=PATH; repeatable
    #[arg(long = "driver", required = true)]
    drivers: Vec<String>,
    #[arg(long)]
    from: ClassCode,
    #[arg(long)]
    to: ClassCode,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = lcm::DEFAULT_L2)]
    l2: f64,
    #[arg(long)]
    out: PathBuf,
}

fn lr_fit(a: LrFitArgs) -> Result<()> {
    let t0 = read_categorical_ascii(&a.t0)?;
    let t1 = read_categorical_ascii(&a.t1)?;
    let mask = load_mask(&a.mask)?;
    let named: Vec<(String, PathBuf)> = a
        .drivers
        .iter()
        .map(|s| parse_named_path(s))
        .collect::<Result<_>>()?;
    let grids: Vec<(String, lulcc::grid::ContinuousGrid)> = named
        .into_iter()
        .map(|(name, path)| Ok((name, read_continuous_ascii(&path)?)))
        .collect::<Result<_>>()?;
    let refs: Vec<(&str, &lulcc::grid::ContinuousGrid)> =
        grids.iter().map(|(n, g)| (n.as_str(), g)).collect();
    let samples =
        lcm::build_transition_samples(&t0, &t1, &refs, a.from, a.to, mask.as_ref())?;
    if samples.label_balance != lcm::LabelBalance::Mixed {
        eprintln!(
            "{}",
            serde_json::json!({
                "warning": format!("labels for {}>{} are one-sided ({:?})", a.from, a.to, samples.label_balance)
            })
        );
    }
    let model = lcm::fit_logistic(&samples, a.l2)?;
    let sub = lcm::TransitionSubModel::new(a.from, a.to, model)?;
    sub.to_json_file(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Args)]
struct PredictArgs {
    /// Grid to allocate changes onto
    #[arg(long)]
    base: PathBuf,
    /// Source of the change quantum
    #[arg(long, value_parser = ["mc", "hmm"])]
    quantum: String,
    /// Transition matrix JSON (with --quantum mc)
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Elementwise exponent applied to --matrix before use
    #[arg(long)]
    exponent: Option<f64>,
    /// Trained HMM params JSON (with --quantum hmm)
    #[arg(long)]
    params: Option<PathBuf>,
    /// Sub-model JSON; repeatable
    #[arg(long = "submodel", required = true)]
    submodels: Vec<PathBuf>,
    /// Driver raster as NAME=PATH, in each sub-model's feature order
    #[arg(long = "driver", required = true)]
    drivers: Vec<String>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the computed quantum table
    #[arg(long)]
    out_quantum: Option<PathBuf>,
}

fn predict(a: PredictArgs) -> Result<()> {
    let base = read_categorical_ascii(&a.base)?;
    let mask = load_mask(&a.mask)?;
    let matrix = match a.quantum.as_str() {
        "mc" => {
            let path = a
                .matrix
                .as_ref()
                .ok_or_else(|| anyhow!("--quantum mc requires --matrix"))?;
            let m = TransitionMatrix::from_json_file(path)?;
            match a.exponent {
                Some(e) => extrapolate_elementwise_power(&m, e)?,
                None => m,
            }
        }
        "hmm" => {
            let path = a
                .params
                .as_ref()
                .ok_or_else(|| anyhow!("--quantum hmm requires --params"))?;
            let params = hmm::GaussianHmmParams::from_json_file(path)?;
            hmm::learned_quantum(&params)?
        }
        other => bail!("unknown quantum source {other:?}"),
    };
    let named: Vec<(String, PathBuf)> = a
        .drivers
        .iter()
        .map(|s| parse_named_path(s))
        .collect::<Result<_>>()?;
    let driver_grids: Vec<lulcc::grid::ContinuousGrid> = named
        .iter()
        .map(|(_, path)| Ok(read_continuous_ascii(path)?))
        .collect::<Result<_>>()?;
    let driver_refs: Vec<&lulcc::grid::ContinuousGrid> = driver_grids.iter().collect();
    let subs: Vec<lcm::TransitionSubModel> = a
        .submodels
        .iter()
        .map(|p| Ok(lcm::TransitionSubModel::from_json_file(p)?))
        .collect::<Result<_>>()?;
    let allowed: Vec<(ClassCode, ClassCode)> =
        subs.iter().map(|s| (s.from_class, s.to_class)).collect();
    let quantum = lcm::compute_quantum(&matrix, &base, mask.as_ref(), &allowed)?;
    let potentials: Vec<lcm::PotentialMap> = subs
        .iter()
        .map(|s| Ok(lcm::potential_map(s, &driver_refs, &base, mask.as_ref())?))
        .collect::<Result<_>>()?;
    let (predicted, report) =
        lcm::allocate_changes(&base, &potentials, &quantum, mask.as_ref())?;
    predicted.write_ascii(&a.out)?;
    if let Some(qpath) = &a.out_quantum {
        let text = serde_json::to_string_pretty(&quantum)?;
        std::fs::write(qpath, text)?;
    }
    for t in &report.transitions {
        if t.capped {
            eprintln!(
                "{}",
                serde_json::json!({
                    "warning": format!("quota {} for {}>{} capped at {} eligible cells", t.quota, t.from, t.to, t.candidates)
                })
            );
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    actual: PathBuf,
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long)]
    classes: String,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    urban_code: ClassCode,
    /// Driver raster as NAME=PATH for Cramér's V; repeatable
    #[arg(long = "driver")]
    drivers: Vec<String>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    overlay: Option<PathBuf>,
}

fn validate_cmd(a: ValidateArgs) -> Result<()> {
    let actual = read_categorical_ascii(&a.actual)?;
    let predicted = read_categorical_ascii(&a.predicted)?;
    let classes = parse_class_list(&a.classes)?;
    let mask = load_mask(&a.mask)?;
    let cm = validate::confusion_matrix(&actual, &predicted, &classes, mask.as_ref())?;
    let blob = validate::blob_analysis(&actual, &predicted, a.urban_code, mask.as_ref())?;
    let mut cramers = std::collections::BTreeMap::new();
    for spec in &a.drivers {
        let (name, path) = parse_named_path(spec)?;
        let grid = read_continuous_ascii(&path)?;
        let v = suitability::cramers_v(&grid, &actual, a.bins, mask.as_ref())?;
        cramers.insert(name, v);
    }
    let report = validate::build_report(&cm, blob, cramers);
    std::fs::write(&a.report, serde_json::to_string_pretty(&report)?)?;
    if let Some(overlay) = &a.overlay {
        validate::render_overlay(&actual, &predicted, a.urban_code, mask.as_ref(), overlay)?;
    }
    println!(
        "overall accuracy {:.6}, wrote {}",
        report.overall_accuracy,
        a.report.display()
    );
    Ok(())
}

#[derive(Subcommand)]
enum RadiometryCmd {
    /// Fill nodata scan-line gaps by windowed mode
    GapFill {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 9)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        passes: usize,
    },
    /// Subtract a dark-object DN, clamping at zero
    DarkSubtract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dark_dn: f64,
    },
    /// Convert a DN band to radiance or TOA reflectance
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Calibration JSON (l_min, l_max, esun, sun_zenith_deg,
        /// earth_sun_distance_au)
        #[arg(long)]
        cal: PathBuf,
        #[arg(long, value_parser = ["radiance", "reflectance"], default_value = "reflectance")]
        to: String,
    },
}

fn radiometry_cmd(cmd: RadiometryCmd) -> Result<()> {
    match cmd {
        RadiometryCmd::GapFill {
            input,
            out,
            window,
            passes,
        } => {
            let band = read_continuous_ascii(&input)?;
            let filled = radiometry::slc_gap_fill(&band, window, passes)?;
            filled.write_ascii(&out)?;
            println!("wrote {}", out.display());
        }
        RadiometryCmd::DarkSubtract { input, out, dark_dn } => {
            let band = read_continuous_ascii(&input)?;
            let sub = radiometry::dark_object_subtract(&band, dark_dn)?;
            sub.write_ascii(&out)?;
            println!("wrote {}", out.display());
        }
        RadiometryCmd::Calibrate { input, out, cal, to } => {
            let band = read_continuous_ascii(&input)?;
            let cal = radiometry::BandCalibration::from_json_file(&cal)?;
            let header = *band.header();
            let mut cells = Vec::with_capacity(band.cells().len());
            for &v in band.cells() {
                if band.is_nodata(v) {
                    cells.push(v);
                    continue;
                }
                let radiance = radiometry::dn_to_radiance(v, &cal)?;
                cells.push(match to.as_str() {
                    "radiance" => radiance,
                    _ => radiometry::toa_reflectance(radiance, &cal)?,
                });
            }
            lulcc::grid::ContinuousGrid::new(header, cells)?.write_ascii(&out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario config JSON
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the bundle
    #[arg(long)]
    out: PathBuf,
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let config = synth::ScenarioConfig::from_json_file(&a.config)?;
    let bundle = synth::generate_scenario(&config)?;
    let files = synth::write_bundle(&bundle, &a.out)?;
    println!("wrote {} files to {}", files.len(), a.out.display());
    Ok(())
}

pub(crate) fn sha256_hex(data: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut out = String::with_capacity(64);
    for b in Sha256::digest(data) {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub(crate) fn sha256_file(path: &Path) -> Result<String> {
    let data = std::fs::read(path).with_context(|| format!("hash {}", path.display()))?;
    Ok(sha256_hex(&data))
}
