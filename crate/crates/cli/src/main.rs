use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::json;

use mixsar::functional::RawCurveObservations;
use mixsar::io::{
    align, default_ids, read_compositions, read_curves_long, read_curves_wide, read_id_table,
    read_locations, read_response, read_weights_dense, read_weights_triplet, table_to_compositions,
    write_weights_dense, write_weights_triplet, IdTable,
};
use mixsar::model::{fit, FitInputs, FitOptions, FitResult, FunctionalInput, RhoMode};
use mixsar::report::{beta_t_csv, beta_t_svg, fit_summary, residual_lag_svg, residuals_csv};
use mixsar::simulation::{run_monte_carlo_with_workers, SimConfig};
use mixsar::spatial::{knn_inverse_distance, morans_i, rook_lattice, DistanceMetric, WeightMatrix};
use mixsar::Error;

mod manifest;
use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "mixsar",
    version,
    about = "Spatial autoregressive models with mixed covariates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a spatial weight matrix.
    Weights {
        #[command(subcommand)]
        kind: WeightsKind,
    },
    /// Fit the model to data files.
    Fit(FitArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
    /// Moran's I of a variable.
    Moran(MoranArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsFormat {
    Dense,
    Triplet,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurvesFormat {
    Long,
    Wide,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Euclidean,
    Greatcircle,
}

impl From<Metric> for DistanceMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Euclidean => DistanceMetric::Euclidean,
            Metric::Greatcircle => DistanceMetric::GreatCircle,
        }
    }
}

#[derive(Subcommand)]
enum WeightsKind {
    /// Rook contiguity on a rows × cols lattice, row-major ids 1..n.
    Rook {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[command(flatten)]
        out: WeightsOut,
    },
    /// Inverse-distance weights over the k nearest neighbours within a cutoff.
    Knn {
        /// CSV with columns id,x,y (lon,lat in degrees for greatcircle).
        #[arg(long)]
        locations: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        cutoff: f64,
        #[arg(long, value_enum, default_value = "euclidean")]
        metric: Metric,
        #[command(flatten)]
        out: WeightsOut,
    },
}

#[derive(Args)]
struct WeightsOut {
    #[arg(long, value_enum, default_value = "dense")]
    format: WeightsFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsIn {
    /// Weight matrix CSV.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dense")]
    weights_format: WeightsFormat,
    /// Row-standardize the weights on ingestion.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct FitArgs {
    /// CSV id,<response>.
    #[arg(long)]
    response: PathBuf,
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "long")]
    curves_format: CurvesFormat,
    #[arg(long)]
    compositions: Option<PathBuf>,
    #[arg(long)]
    scalars: Option<PathBuf>,
    #[command(flatten)]
    weights: WeightsIn,
    /// Build kNN weights from locations instead of reading a matrix.
    #[arg(long, conflicts_with = "weights")]
    locations: Option<PathBuf>,
    /// Neighbour count, or a range `a..b` (inclusive) to sweep and select
    /// by log-likelihood.
    #[arg(long, requires = "locations")]
    knn_k: Option<String>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long, value_enum, default_value = "euclidean")]
    metric: Metric,
    #[arg(long, default_value_t = 0.7)]
    pve: f64,
    /// Smoothing bandwidth; twice the median time spacing when absent.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
    /// Use derivatives of the smoothed curves.
    #[arg(long)]
    derivative: bool,
    /// Pin the spatial parameter instead of estimating it.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Skip Wald standard errors.
    #[arg(long)]
    no_wald: bool,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key = value config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    pve: Option<f64>,
    #[arg(long, env = "MIXSAR_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    grid_size: Option<usize>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MoranArgs {
    /// CSV id,<value>.
    #[arg(long)]
    values: PathBuf,
    #[command(flatten)]
    weights: WeightsIn,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_input_error() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn input_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Weights { kind } => cmd_weights(kind),
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Moran(args) => cmd_moran(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| input_failure(format!("{}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    fs::write(dir.join(name), contents)
        .map_err(|e| input_failure(format!("{}: {e}", dir.join(name).display())))
}

fn cmd_weights(kind: WeightsKind) -> CliResult<()> {
    let (ids, w, out) = match kind {
        WeightsKind::Rook { rows, cols, out } => {
            let w = rook_lattice(rows, cols)?;
            (default_ids(rows * cols), w, out)
        }
        WeightsKind::Knn {
            locations,
            k,
            cutoff,
            metric,
            out,
        } => {
            let (ids, coords) = read_locations(open(&locations)?)?;
            let w = knn_weights(&ids, &coords, metric.into(), k, cutoff)?;
            (ids, w, out)
        }
    };
    let mut buf = Vec::new();
    match out.format {
        WeightsFormat::Dense => write_weights_dense(&mut buf, &ids, &w)?,
        WeightsFormat::Triplet => write_weights_triplet(&mut buf, &ids, &w)?,
    }
    match out.output {
        Some(path) => {
            fs::write(&path, buf).map_err(|e| input_failure(format!("{}: {e}", path.display())))?
        }
        None => io::stdout().write_all(&buf)?,
    }
    Ok(())
}

/// kNN weights with isolated units reported by id.
fn knn_weights(
    ids: &[String],
    coords: &[[f64; 2]],
    metric: DistanceMetric,
    k: usize,
    cutoff: f64,
) -> CliResult<WeightMatrix> {
    knn_inverse_distance(coords, metric, k, cutoff).map_err(|e| match e {
        Error::IsolatedUnit { .. } => {
            // Name every isolated unit, not only the first.
            let isolated: Vec<&str> = (0..coords.len())
                .filter(|&i| {
                    !coords
                        .iter()
                        .enumerate()
                        .any(|(j, c)| j != i && metric.distance(coords[i], *c) <= cutoff)
                })
                .map(|i| ids[i].as_str())
                .collect();
            input_failure(format!(
                "units with no neighbour within cutoff {cutoff}: {}",
                isolated.join(", ")
            ))
        }
        other => other.into(),
    })
}

fn read_weights(args: &WeightsIn, ids: &[String]) -> CliResult<WeightMatrix> {
    let path = args
        .weights
        .as_ref()
        .ok_or_else(|| input_failure("either --weights or --locations is required"))?;
    let (w_ids, w) = match args.weights_format {
        WeightsFormat::Dense => read_weights_dense(open(path)?, args.normalize)?,
        WeightsFormat::Triplet => read_weights_triplet(open(path)?, args.normalize)?,
    };
    align_weights(&w_ids, &w, ids)
}

fn align_weights(w_ids: &[String], w: &WeightMatrix, ids: &[String]) -> CliResult<WeightMatrix> {
    let placeholder = IdTable {
        columns: vec!["row".into()],
        ids: w_ids.to_vec(),
        values: DMatrix::from_fn(w_ids.len(), 1, |i, _| i as f64),
    };
    let aligned = align(&placeholder, ids, "weights")?;
    let order: Vec<usize> = aligned
        .values
        .column(0)
        .iter()
        .map(|v| *v as usize)
        .collect();
    if order.iter().enumerate().all(|(i, o)| i == *o) {
        return Ok(w.clone());
    }
    Ok(w.permuted(&order)?)
}

fn parse_k_range(spec: &str) -> CliResult<Vec<usize>> {
    let bad = || input_failure(format!("--knn-k expects N or A..B, got {spec:?}"));
    match spec.split_once("..") {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b
                .trim()
                .trim_start_matches('=')
                .parse()
                .map_err(|_| bad())?;
            if a == 0 || b < a {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => {
            let k: usize = spec.trim().parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(bad());
            }
            Ok(vec![k])
        }
    }
}

fn cmd_fit(args: FitArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("fit");
    manifest.input("response", &args.response)?;
    let (ids, y) = read_response(open(&args.response)?)?;

    let functional = match &args.curves {
        None => None,
        Some(path) => {
            manifest.input("curves", path)?;
            let (cids, raw) = match args.curves_format {
                CurvesFormat::Long => read_curves_long(open(path)?)?,
                CurvesFormat::Wide => read_curves_wide(open(path)?)?,
            };
            let table = IdTable {
                columns: raw.times().iter().map(|t| t.to_string()).collect(),
                ids: cids,
                values: raw.values().clone(),
            };
            let aligned = align(&table, &ids, "curves")?;
            let observations = RawCurveObservations::new(raw.times().to_vec(), aligned.values)?;
            Some(FunctionalInput::Raw {
                observations,
                bandwidth: args.bandwidth,
            })
        }
    };
    let compositions = match &args.compositions {
        None => None,
        Some(path) => {
            manifest.input("compositions", path)?;
            let (table, _) = read_compositions(open(path)?)?;
            Some(table_to_compositions(&align(
                &table,
                &ids,
                "compositions",
            )?)?)
        }
    };
    let (scalars, scalar_names) = match &args.scalars {
        None => (None, None),
        Some(path) => {
            manifest.input("scalars", path)?;
            let table = align(&read_id_table(open(path)?, "scalars")?, &ids, "scalars")?;
            (Some(table.values), Some(table.columns))
        }
    };

    let options = FitOptions {
        pve: args.pve,
        grid_size: args.grid_size,
        derivative: args.derivative,
        rho: args.rho.map_or(RhoMode::Free, RhoMode::Fixed),
        diagnostics: true,
        wald: !args.no_wald,
    };
    manifest.param("pve", args.pve);
    manifest.param("grid_size", args.grid_size);
    manifest.param("derivative", args.derivative);
    manifest.param(
        "rho",
        args.rho.map_or("free".to_string(), |r| r.to_string()),
    );
    if let Some(h) = args.bandwidth {
        manifest.param("bandwidth", h);
    }
    fs::create_dir_all(&args.out_dir)?;

    let data = FitData {
        y,
        functional,
        compositions,
        scalars,
        scalar_names,
    };

    let weights = match &args.locations {
        None => {
            if let Some(p) = &args.weights.weights {
                manifest.input("weights", p)?;
            }
            manifest.param("normalize", args.weights.normalize);
            read_weights(&args.weights, &ids)?
        }
        Some(path) => {
            manifest.input("locations", path)?;
            let cutoff = args
                .cutoff
                .ok_or_else(|| input_failure("--cutoff is required with --locations"))?;
            let ks = parse_k_range(args.knn_k.as_deref().unwrap_or("5"))?;
            let (lids, coords) = read_locations(open(path)?)?;
            let table = IdTable {
                columns: vec!["x".into(), "y".into()],
                ids: lids,
                values: DMatrix::from_fn(coords.len(), 2, |i, j| coords[i][j]),
            };
            let aligned = align(&table, &ids, "locations")?;
            let coords: Vec<[f64; 2]> = (0..ids.len())
                .map(|i| [aligned.values[(i, 0)], aligned.values[(i, 1)]])
                .collect();
            let metric: DistanceMetric = args.metric.into();
            manifest.param("cutoff", cutoff);
            manifest.param("metric", format!("{metric:?}").to_lowercase());
            manifest.param("knn_k", args.knn_k.as_deref().unwrap_or("5"));

            let mut sweep = Vec::new();
            for &k in &ks {
                let w = knn_weights(&ids, &coords, metric, k, cutoff)?;
                let quick = FitOptions {
                    diagnostics: false,
                    wald: false,
                    ..options.clone()
                };
                let res = fit(&data.inputs(&w), &quick)?;
                sweep.push((k, res.loglik, w));
            }
            if ks.len() > 1 {
                let mut table = String::from("k,loglik\n");
                println!("{:>4} {:>16}", "k", "log-likelihood");
                for (k, ll, _) in &sweep {
                    table.push_str(&format!("{k},{ll}\n"));
                    println!("{k:>4} {ll:>16.6}");
                }
                write_file(&args.out_dir, "knn_sweep.csv", &table)?;
            }
            let best = sweep
                .into_iter()
                .fold(None::<(usize, f64, WeightMatrix)>, |acc, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                })
                .expect("at least one k");
            if ks.len() > 1 {
                println!("selected k = {}\n", best.0);
            }
            manifest.param("selected_k", best.0);
            best.2
        }
    };

    let result = fit(&data.inputs(&weights), &options)?;
    write_fit_outputs(&args, &manifest, &ids, &result, &weights)?;
    print!("{}", fit_summary(&result));
    eprintln!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    Ok(())
}

/// Everything a fit needs except the weights.
struct FitData {
    y: Vec<f64>,
    functional: Option<FunctionalInput>,
    compositions: Option<Vec<mixsar::geometry::Composition>>,
    scalars: Option<DMatrix<f64>>,
    scalar_names: Option<Vec<String>>,
}

impl FitData {
    fn inputs<'w>(&self, weights: &'w WeightMatrix) -> FitInputs<'w> {
        FitInputs {
            y: self.y.clone(),
            functional: self.functional.clone(),
            compositions: self.compositions.clone(),
            scalars: self.scalars.clone(),
            scalar_names: self.scalar_names.clone(),
            weights,
        }
    }
}

fn write_fit_outputs(
    args: &FitArgs,
    manifest: &RunManifest,
    ids: &[String],
    result: &FitResult,
    w: &WeightMatrix,
) -> CliResult<()> {
    let report = json!({
        "manifest": manifest.to_json(),
        "ids": ids,
        "result": result,
    });
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| input_failure(format!("cannot serialize report: {e}")))?;
    write_file(&args.out_dir, "fit_report.json", &(text + "\n"))?;
    if let Some(csv) = beta_t_csv(result) {
        write_file(&args.out_dir, "beta_t.csv", &csv)?;
    }
    write_file(
        &args.out_dir,
        "residuals.csv",
        &residuals_csv(ids, result, w)?,
    )?;
    if args.plots {
        if let Some(svg) = beta_t_svg(result) {
            write_file(&args.out_dir, "beta_t.svg", &svg)?;
        }
        write_file(
            &args.out_dir,
            "residual_lag.svg",
            &residual_lag_svg(result, w),
        )?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("simulate");
    let mut config = match &args.config {
        Some(path) => {
            manifest.input("config", path)?;
            let text = fs::read_to_string(path)
                .map_err(|e| input_failure(format!("{}: {e}", path.display())))?;
            SimConfig::from_kv_str(&text)?
        }
        None => SimConfig::default(),
    };
    if let Some(v) = args.rho {
        config.rho = v;
    }
    if let Some(v) = args.rows {
        config.rows = v;
    }
    if let Some(v) = args.cols {
        config.cols = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.reps {
        config.reps = v;
    }
    if let Some(v) = args.pve {
        config.pve = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.noise_scale {
        config.noise_scale = v;
    }
    if let Some(v) = args.grid_size {
        config.grid_size = v;
    }
    config.validate()?;
    for (k, v) in config.to_pairs() {
        manifest.param(k, v);
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let report = run_monte_carlo_with_workers(&config, workers)?;
    fs::create_dir_all(&args.out_dir)?;
    let table = format!("{}{}", manifest.to_comment_block(), report.to_table());
    write_file(&args.out_dir, "simulation_table.txt", &table)?;
    write_file(
        &args.out_dir,
        "simulation_summary.csv",
        &report.summary_csv()?,
    )?;
    write_file(
        &args.out_dir,
        "simulation_replications.csv",
        &report.replications_csv()?,
    )?;
    write_file(
        &args.out_dir,
        "simulation_beta_curves.csv",
        &report.curves_csv()?,
    )?;
    let json = json!({ "manifest": manifest.to_json(), "report": report });
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| input_failure(format!("cannot serialize report: {e}")))?;
    write_file(&args.out_dir, "simulation_report.json", &(text + "\n"))?;

    print!("{}", report.to_table());
    eprintln!(
        "elapsed: {:.3}s ({} workers)",
        start.elapsed().as_secs_f64(),
        workers
    );
    Ok(())
}

fn cmd_moran(args: MoranArgs) -> CliResult<()> {
    let (ids, values) = read_response(open(&args.values)?)?;
    let w = read_weights(&args.weights, &ids)?;
    let report = morans_i(&values, &w)?;
    println!("statistic   {:.6}", report.statistic);
    println!("expectation {:.6}", report.expectation);
    println!("variance    {:.6}", report.variance);
    println!("z           {:.4}", report.z_score);
    println!("p           {:.6}", report.p_value);
    Ok(())
}
