//! Command-line interface. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use otshift_core::{
    analyze_shift, apply_gaussian_noise_shift, make_gaussian_blobs, solve_between_classes, AnalysisConfig,
    Epsilon, Method, PairRanking, Regularizer, ShiftAnalysis, SolverConfig,
};

use crate::csv_format::{read_csv, render_csv_labeled, write_csv};
use crate::error::{CliError, CliResult};
use crate::input::{load, InputFormat, LoadedDataset};
use crate::pgm::{write_heatmap_pgm, HeatmapScale};
use crate::report::{
    normalized, read_report, write_atomic, write_report, ConfigEcho, CouplingEntry, DatasetsSection, MismatchEntry, MismatchPairsEntry,
    PairEntry, PairList, PairsReport, PairsSection, ShiftReport, TransportSummary,
};

#[derive(Debug, Parser)]
#[command(name = "otshift", version, about = "Detect and explain distribution shift between labeled datasets with optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full shift analysis between a source and a target dataset.
    Compare(CompareArgs),
    /// Render the class mass matrix of a report as a PGM image.
    Heatmap(HeatmapArgs),
    /// Closest and farthest pairs between one source and one target class.
    Pairs(PairsArgs),
    /// Generate synthetic datasets.
    Synth {
        #[command(subcommand)]
        kind: SynthCommand,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Source dataset (for IDX: the images file).
    #[arg(long)]
    source: PathBuf,
    /// Target dataset (for IDX: the images file).
    #[arg(long)]
    target: PathBuf,
    /// IDX labels for the source; defaults to the MNIST companion name.
    #[arg(long)]
    source_labels: Option<PathBuf>,
    /// IDX labels for the target; defaults to the MNIST companion name.
    #[arg(long)]
    target_labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Csv)]
    format: InputFormat,
    /// Keep at most N samples per class in each dataset.
    #[arg(long, value_name = "N")]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Exact,
    Sinkhorn,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = SolverKind::Exact)]
    solver: SolverKind,
    /// Absolute entropic regularization (Sinkhorn).
    #[arg(long, conflicts_with = "epsilon_scale")]
    epsilon: Option<f64>,
    /// Regularization as a multiple of the mean cost (Sinkhorn; default 0.05).
    #[arg(long)]
    epsilon_scale: Option<f64>,
    /// Marginal tolerance for Sinkhorn convergence.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    /// Largest n·m the exact solver accepts.
    #[arg(long, default_value_t = 250_000)]
    exact_cell_cap: usize,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Minimum share of a source class for a mismatch.
    #[arg(long, default_value_t = 0.5)]
    mismatch_fraction: f64,
    /// Pairs reported on each side.
    #[arg(long, default_value_t = 5)]
    pairs: usize,
    /// Coupling mass floor for pair ranking (default: median nonzero mass).
    #[arg(long)]
    mass_floor: Option<f64>,
    /// Covariance ridge: `trace-scaled` or a nonnegative number.
    #[arg(long, default_value = "trace-scaled")]
    regularizer: String,
    /// Include every nonzero coupling cell in the report.
    #[arg(long)]
    dump_coupling: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = HeatmapScale::Linear)]
    scale: HeatmapScale,
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Source class, as labeled in the source file.
    #[arg(long)]
    class_a: String,
    /// Target class, as labeled in the target file.
    #[arg(long)]
    class_b: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Gaussian blobs in [0, 1]^dim.
    Blobs {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        dim: usize,
        /// Center spread in [0, 1]; centers stay in [0.2, 0.8]^dim.
        #[arg(long, default_value_t = 1.0)]
        centers_scale: f64,
        /// Per-coordinate standard deviation around each center.
        #[arg(long, default_value_t = 0.05)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add clamped Gaussian noise to one class of a CSV dataset.
    Noise {
        #[arg(long)]
        input: PathBuf,
        /// Class to shift, as labeled in the input file.
        #[arg(long)]
        class: String,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code: 0 on success, 1 on validation errors, 2 on I/O errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            }
        }
    };
    match execute(cli.command) {
        Ok(message) => {
            println!("{message}");
            0
        }
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn execute(command: Command) -> CliResult<String> {
    match command {
        Command::Compare(args) => compare(&args),
        Command::Heatmap(args) => heatmap(&args),
        Command::Pairs(args) => pairs(&args),
        Command::Synth { kind } => synth(kind),
    }
}

fn solver_config(args: &SolverArgs) -> CliResult<SolverConfig> {
    let method = match args.solver {
        SolverKind::Exact => Method::Exact,
        SolverKind::Sinkhorn => Method::Sinkhorn,
    };
    if method == Method::Exact && (args.epsilon.is_some() || args.epsilon_scale.is_some()) {
        return Err(CliError::Invalid("--epsilon and --epsilon-scale apply to --solver sinkhorn only".into()));
    }
    let epsilon = match (args.epsilon, args.epsilon_scale) {
        (Some(e), _) => Epsilon::Absolute(e),
        (None, Some(s)) => Epsilon::RelativeToMeanCost(s),
        (None, None) => SolverConfig::default().epsilon,
    };
    let config = SolverConfig {
        method,
        epsilon,
        tolerance: args.tolerance,
        max_iterations: args.max_iterations,
        exact_cell_cap: args.exact_cell_cap,
    };
    config.validate()?;
    Ok(config)
}

fn parse_regularizer(text: &str) -> CliResult<Regularizer> {
    if text == "trace-scaled" {
        return Ok(Regularizer::TraceScaled);
    }
    match text.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(Regularizer::Fixed(v)),
        _ => Err(CliError::Invalid(format!("--regularizer expects `trace-scaled` or a nonnegative number, got {text:?}"))),
    }
}

fn regularizer_name(r: Regularizer) -> String {
    match r {
        Regularizer::TraceScaled => "trace-scaled".into(),
        Regularizer::Fixed(v) => format!("fixed:{v}"),
    }
}

fn load_inputs(args: &InputArgs) -> CliResult<(LoadedDataset, LoadedDataset)> {
    let mut source = load(args.format, &args.source, args.source_labels.as_deref())?;
    let mut target = load(args.format, &args.target, args.target_labels.as_deref())?;
    if let Some(per_class) = args.subsample {
        if per_class == 0 {
            return Err(CliError::Invalid("--subsample must be at least 1".into()));
        }
        source = source.subsample(per_class, args.seed)?;
        target = target.subsample(per_class, args.seed)?;
    }
    Ok((source, target))
}

/// Compact class index for a label as written in the input file.
fn class_index(data: &LoadedDataset, label: &str) -> CliResult<usize> {
    data.label_mapping.get(label.trim()).copied().ok_or_else(|| {
        let known: Vec<&str> = data.label_mapping.keys().map(String::as_str).collect();
        CliError::Invalid(format!("{}: no class labeled {label:?} (labels: {})", data.path.display(), known.join(", ")))
    })
}

fn config_echo(solver: &SolverConfig, input: &InputArgs, epsilon: Option<f64>) -> ConfigEcho {
    let (name, scale) = match (solver.method, solver.epsilon) {
        (Method::Exact, _) => ("exact", None),
        (Method::Sinkhorn, Epsilon::RelativeToMeanCost(s)) => ("sinkhorn", Some(s)),
        (Method::Sinkhorn, Epsilon::Absolute(_)) => ("sinkhorn", None),
    };
    ConfigEcho {
        solver: name.into(),
        epsilon,
        epsilon_scale: scale,
        tolerance: solver.tolerance,
        max_iterations: solver.max_iterations,
        exact_cell_cap: solver.exact_cell_cap,
        regularizer: String::new(),
        mismatch_fraction: 0.0,
        pairs: 0,
        mass_floor: None,
        subsample: input.subsample,
        seed: input.seed,
        feature_metric: "squared-euclidean".into(),
        label_model: "gaussian-bures".into(),
    }
}

fn pair_list(ranking: &PairRanking, source: &LoadedDataset, target: &LoadedDataset) -> PairList {
    let entry = |p: &otshift_core::RankedPair| PairEntry {
        source_index: p.source_index,
        target_index: p.target_index,
        source_record: source.records[p.source_index],
        target_record: target.records[p.target_index],
        source_offset: source.offsets[p.source_index],
        target_offset: target.offsets[p.target_index],
        ground_cost: p.ground_cost,
        coupling_mass: p.coupling_mass,
        score: p.score,
    };
    PairList {
        closest: ranking.closest.iter().map(entry).collect(),
        farthest: ranking.farthest.iter().map(entry).collect(),
        mass_floor: ranking.mass_floor,
        candidates: ranking.candidates,
        empty: ranking.empty,
    }
}

fn rows(m: &otshift_core::DenseMatrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

/// Assembles the report for a finished analysis.
pub fn build_report(
    analysis: &ShiftAnalysis,
    source: &LoadedDataset,
    target: &LoadedDataset,
    config: ConfigEcho,
    dump_coupling: bool,
) -> ShiftReport {
    let solution = &analysis.solution;
    let coupling = dump_coupling.then(|| {
        let plan = solution.coupling.values();
        let mut cells = Vec::new();
        for i in 0..plan.rows() {
            for j in 0..plan.cols() {
                if plan[(i, j)] > 0.0 {
                    cells.push(CouplingEntry { source_index: i, target_index: j, mass: plan[(i, j)], cost: analysis.cost.values()[(i, j)] });
                }
            }
        }
        cells
    });
    ShiftReport {
        otdd_squared: analysis.otdd_squared(),
        otdd: analysis.otdd(),
        class_mass_matrix: rows(&analysis.class_mass.values),
        label_distances: rows(&analysis.label_distances.values),
        mismatches: analysis
            .mismatches
            .iter()
            .map(|m| MismatchEntry {
                source_class: m.source_class,
                target_class: m.target_class,
                source_label: source.class_label(m.source_class),
                target_label: target.class_label(m.target_class),
                mass: m.mass,
                mass_fraction: m.mass_fraction,
                diagonal_fraction: m.diagonal_fraction,
            })
            .collect(),
        pairs: PairsSection {
            global: pair_list(&analysis.global_pairs, source, target),
            mismatches: analysis
                .mismatch_pairs
                .iter()
                .map(|mp| MismatchPairsEntry {
                    source_class: mp.mismatch.source_class,
                    target_class: mp.mismatch.target_class,
                    fresh: pair_list(&mp.fresh, source, target),
                    sub_block: pair_list(&mp.sub_block, source, target),
                })
                .collect(),
        },
        config,
        datasets: DatasetsSection { source: source.summary(), target: target.summary() },
        diagonal_fractions: analysis.class_mass.diagonal_fractions(),
        vocabulary_mismatch: analysis.vocabulary_mismatch(),
        transport: TransportSummary {
            method: match solution.method {
                Method::Exact => "exact".into(),
                Method::Sinkhorn => "sinkhorn".into(),
            },
            epsilon: solution.epsilon,
            iterations: solution.iterations_used,
            converged: solution.converged,
            row_marginal_error: solution.coupling.row_marginal_error(),
            col_marginal_error: solution.coupling.col_marginal_error(),
            support_size: solution.coupling.support_size(),
            cost_metric: "otdd-combined".into(),
        },
        coupling,
    }
}

fn compare(args: &CompareArgs) -> CliResult<String> {
    let solver = solver_config(&args.solver)?;
    let regularizer = parse_regularizer(&args.regularizer)?;
    let (source, target) = load_inputs(&args.input)?;
    let config = AnalysisConfig {
        solver,
        regularizer,
        mismatch_fraction: args.mismatch_fraction,
        pairs: args.pairs,
        mass_floor: args.mass_floor,
    };
    let analysis = analyze_shift(&source.dataset, &target.dataset, &config)?;
    let mut echo = config_echo(&solver, &args.input, analysis.solution.epsilon);
    echo.regularizer = regularizer_name(regularizer);
    echo.mismatch_fraction = args.mismatch_fraction;
    echo.pairs = args.pairs;
    echo.mass_floor = args.mass_floor;
    let report = normalized(&build_report(&analysis, &source, &target, echo, args.dump_coupling))?;
    write_report(&report, &args.out)?;
    let converged = if report.transport.converged { "" } else { " (solver did not converge)" };
    Ok(format!(
        "otdd_squared={} mismatches={}{converged}; report written to {}",
        report.otdd_squared,
        report.mismatches.len(),
        args.out.display()
    ))
}

fn heatmap(args: &HeatmapArgs) -> CliResult<String> {
    let report: ShiftReport = read_report(&args.report)?;
    let rows = &report.class_mass_matrix;
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(CliError::format(&args.report, "class_mass_matrix is ragged"));
    }
    let matrix = otshift_core::DenseMatrix::from_rows(rows)?;
    write_heatmap_pgm(&matrix, &args.out, args.scale)?;
    Ok(format!("heatmap {}x{} written to {}", matrix.cols(), matrix.rows(), args.out.display()))
}

fn pairs(args: &PairsArgs) -> CliResult<String> {
    let solver = solver_config(&args.solver)?;
    let (source, target) = load_inputs(&args.input)?;
    let class_a = class_index(&source, &args.class_a)?;
    let class_b = class_index(&target, &args.class_b)?;
    let transport = solve_between_classes(&source.dataset, &target.dataset, class_a, class_b, &solver)?;
    let ranking = transport.rank(args.k, None)?;
    let solution = &transport.solution;
    let report = PairsReport {
        class_a,
        class_b,
        transport_cost: solution.transport_cost,
        converged: solution.converged,
        pairs: pair_list(&ranking, &source, &target),
        config: config_echo(&solver, &args.input, solution.epsilon),
        datasets: DatasetsSection { source: source.summary(), target: target.summary() },
    };
    let report = normalized(&report)?;
    write_report(&report, &args.out)?;
    Ok(format!("{} closest / {} farthest pairs written to {}", report.pairs.closest.len(), report.pairs.farthest.len(), args.out.display()))
}

fn synth(kind: SynthCommand) -> CliResult<String> {
    match kind {
        SynthCommand::Blobs { classes, per_class, dim, centers_scale, spread, seed, out } => {
            let ds = make_gaussian_blobs(classes, per_class, dim, centers_scale, spread, seed)?;
            write_csv(&ds, &out)?;
            Ok(format!("{} samples written to {}", ds.len(), out.display()))
        }
        SynthCommand::Noise { input, class, sigma, seed, out } => noise(&input, &class, sigma, seed, &out),
    }
}

fn noise(input: &Path, class: &str, sigma: f64, seed: u64, out: &Path) -> CliResult<String> {
    let data = read_csv(input)?;
    let label: u64 = class
        .trim()
        .parse()
        .map_err(|_| CliError::Invalid(format!("--class expects a nonnegative integer label, got {class:?}")))?;
    let k = *data
        .label_mapping
        .get(&label)
        .ok_or_else(|| CliError::Invalid(format!("{}: no class labeled {label}", input.display())))?;
    let shifted = apply_gaussian_noise_shift(&data.dataset, k, sigma, seed)?;
    // Written with the input's own label values.
    let inverse: std::collections::BTreeMap<usize, u64> = data.label_mapping.iter().map(|(&l, &k)| (k, l)).collect();
    let labels: Vec<u64> = shifted.labels().iter().map(|k| inverse[k]).collect();
    write_atomic(out, &render_csv_labeled(shifted.features(), &labels))?;
    Ok(format!("class {label} shifted with sigma {sigma}; written to {}", out.display()))
}
