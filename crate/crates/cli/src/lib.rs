//! Command dispatch for the `chainfis` binary.
//!
//! Exit codes: 0 success, 1 data or verification failure, 2 usage error.
//! Machine files carry 17 significant digits; summaries carry 4.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chainfis::anfis::{
    build_with_fcm, holdout_split, select_cluster_count, train_hybrid, LabeledDataset,
    TrainingConfig,
};
use chainfis::dataset::{read_numeric_csv, NumericTable};
use chainfis::fcm::{dataset_from_rows, run_fcm, FcmConfig};
use chainfis::forecast::{forecast_series, SbaVariant};
use chainfis::ledger::{verify_chain, LedgerChain, LedgerError};
use chainfis::simulator::{
    fmt_machine, run_simulation, MetricsFile, Scenario, COMPARISON_ROWS, INDICATOR_ROWS,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "CHAINFIS_SEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub report_paths: Vec<PathBuf>,
    pub summary: String,
}

impl CommandResult {
    fn ok(summary: String, report_paths: Vec<PathBuf>) -> Self {
        Self {
            exit_code: 0,
            report_paths,
            summary,
        }
    }

    fn failure(summary: String) -> Self {
        Self {
            exit_code: 1,
            report_paths: Vec::new(),
            summary,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "chainfis", version, about = "Neuro-fuzzy supply-chain toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuzzy C-means over numeric CSV columns.
    Cluster(ClusterArgs),
    /// Build a TSK model from FCM clusters and train it.
    Train(TrainArgs),
    /// Exponential smoothing and Croston/SBA over a demand series.
    Forecast(ForecastArgs),
    /// Run a scenario; writes metrics.csv and chain.jsonl.
    Simulate(SimulateArgs),
    /// Ledger tools.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Render the comparison tables from a metrics file.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum LedgerCommand {
    /// Check a JSON-lines chain export end to end.
    Verify { file: PathBuf },
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    clusters: usize,
    /// Comma-separated column names; defaults to every column but `stage`.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long, default_value_t = 2.0)]
    fuzzifier: f64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 300)]
    max_iterations: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Long-format CSV of centers and memberships.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    inputs: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    targets: Vec<String>,
    /// Rule count, or `auto` to pick by held-out error.
    #[arg(long, default_value = "auto")]
    clusters: String,
    /// Largest count tried by `--clusters auto`.
    #[arg(long, default_value_t = 5)]
    max_clusters: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    error_goal: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Shifted,
    Standard,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[arg(long, requires = "column", conflicts_with = "series")]
    input: Option<PathBuf>,
    #[arg(long)]
    column: Option<String>,
    /// Inline comma-separated demands.
    #[arg(long, value_delimiter = ',', required_unless_present = "input")]
    series: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Shifted)]
    variant: VariantArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// `reference` or a path to a TOML scenario.
    #[arg(long, default_value = "reference")]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first) and runs the subcommand, taking the
/// seed fallback from `CHAINFIS_SEED`.
pub fn run_command<I, S>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_command_with_env(argv, std::env::var(SEED_ENV).ok())
}

/// [`run_command`] with the environment seed passed explicitly.
pub fn run_command_with_env<I, S>(argv: I, env_seed: Option<String>) -> CommandResult
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let exit_code = if e.use_stderr() { 2 } else { 0 };
            return CommandResult {
                exit_code,
                report_paths: Vec::new(),
                summary: e.render().to_string(),
            };
        }
    };
    let env_seed = match env_seed.map(|s| s.trim().parse::<u64>().map_err(|_| s)) {
        None => None,
        Some(Ok(seed)) => Some(seed),
        Some(Err(raw)) => {
            return CommandResult {
                exit_code: 2,
                report_paths: Vec::new(),
                summary: format!("{SEED_ENV}=`{raw}` is not an unsigned integer"),
            }
        }
    };
    let outcome = match cli.command {
        Command::Cluster(a) => cluster(a, env_seed),
        Command::Train(a) => train(a, env_seed),
        Command::Forecast(a) => forecast(a),
        Command::Simulate(a) => simulate(a, env_seed),
        Command::Ledger {
            command: LedgerCommand::Verify { file },
        } => return ledger_verify(&file),
        Command::Report(a) => report(a),
    };
    outcome.unwrap_or_else(CommandResult::failure)
}

type Outcome = Result<CommandResult, String>;

fn read_text(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_table(path: &Path) -> Result<NumericTable, String> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_numeric_csv(file).map_err(|e| format!("{}: {e}", path.display()))
}

/// Human-summary format: 4 significant digits.
pub fn fmt_human(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..=6).contains(&magnitude) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - magnitude).max(0) as usize;
    let scale = 10f64.powi(3 - magnitude);
    format!("{:.*}", decimals, (x * scale).round() / scale)
}

fn cluster(a: ClusterArgs, env_seed: Option<u64>) -> Outcome {
    let table = read_table(&a.input)?;
    let columns = if a.columns.is_empty() {
        table
            .header
            .iter()
            .filter(|h| h.as_str() != "stage")
            .cloned()
            .collect()
    } else {
        a.columns
    };
    let rows = table.select(&columns).map_err(|e| e.to_string())?;
    let points = dataset_from_rows(&rows).map_err(|e| e.to_string())?;
    let config = FcmConfig {
        fuzzifier: a.fuzzifier,
        tolerance: a.tolerance,
        max_iterations: a.max_iterations,
        seed: a.seed.or(env_seed).unwrap_or(0),
    };
    let result = run_fcm(&points, a.clusters, &config).map_err(|e| e.to_string())?;

    let mut summary = format!(
        "fcm: {} clusters over {} samples, {} iterations, {}, objective {}\n",
        a.clusters,
        points.len(),
        result.trace.len(),
        if result.converged {
            "converged"
        } else {
            "iteration budget reached"
        },
        result.trace.last().map_or("n/a".into(), |&j| fmt_human(j)),
    );
    for (i, center) in result.clusters.centers.iter().enumerate() {
        let coords: Vec<String> = center.iter().map(|&v| fmt_human(v)).collect();
        let _ = writeln!(summary, "center {}: [{}]", i + 1, coords.join(", "));
    }

    let mut paths = Vec::new();
    if let Some(out) = a.out {
        let mut csv = String::from("section,row,column,value\n");
        for (i, center) in result.clusters.centers.iter().enumerate() {
            for (name, &v) in columns.iter().zip(center) {
                let _ = writeln!(csv, "center,{},{name},{}", i + 1, fmt_machine(v));
            }
        }
        for k in 0..result.memberships.samples() {
            for i in 0..result.memberships.clusters() {
                let u = result.memberships.get(i, k);
                let _ = writeln!(
                    csv,
                    "membership,{},cluster{},{}",
                    k + 1,
                    i + 1,
                    fmt_machine(u)
                );
            }
        }
        for (t, &j) in result.trace.iter().enumerate() {
            let _ = writeln!(csv, "objective,{},value,{}", t + 1, fmt_machine(j));
        }
        write_text(&out, &csv)?;
        paths.push(out);
    }
    Ok(CommandResult::ok(summary, paths))
}

fn train(a: TrainArgs, env_seed: Option<u64>) -> Outcome {
    let table = read_table(&a.input)?;
    let inputs = table.select(&a.inputs).map_err(|e| e.to_string())?;
    let targets = table.select(&a.targets).map_err(|e| e.to_string())?;
    let data = LabeledDataset::new(inputs, targets).map_err(|e| e.to_string())?;
    let seed = a.seed.or(env_seed).unwrap_or(0);
    let config = TrainingConfig {
        learning_rate: a.learning_rate,
        error_goal: a.error_goal,
        max_epochs: a.max_epochs,
        seed,
        ..TrainingConfig::default()
    };
    let clusters = if a.clusters == "auto" {
        let search = select_cluster_count(&data, a.max_clusters.min(data.len()), &config)
            .map_err(|e| e.to_string())?;
        search.best
    } else {
        a.clusters
            .parse::<usize>()
            .map_err(|_| format!("--clusters: `{}` is neither a count nor `auto`", a.clusters))?
    };
    let (train_set, held_out) = holdout_split(&data, seed);
    let fcm_config = FcmConfig {
        seed,
        ..FcmConfig::default()
    };
    let (initial, mut warnings) =
        build_with_fcm(&train_set, clusters, &fcm_config).map_err(|e| e.to_string())?;
    let outcome =
        train_hybrid(&initial, &train_set, &held_out, &config).map_err(|e| e.to_string())?;
    warnings.extend(outcome.warnings);
    write_text(&a.model, &outcome.model.to_text())?;

    let last = outcome.history.last();
    let mut summary = format!(
        "anfis: {} rules, {} epochs ({:?}), train rmse {}, held-out rmse {}\n",
        clusters,
        outcome.history.len(),
        outcome.stop_reason,
        last.map_or("n/a".into(), |r| fmt_human(r.train_rmse)),
        last.map_or("n/a".into(), |r| fmt_human(r.test_rmse)),
    );
    for w in warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    Ok(CommandResult::ok(summary, vec![a.model]))
}

fn forecast(a: ForecastArgs) -> Outcome {
    let demands = match (&a.input, &a.column) {
        (Some(input), Some(column)) => read_table(input)?
            .column(column)
            .map_err(|e| format!("{}: {e}", input.display()))?,
        _ => a.series,
    };
    let variant = match a.variant {
        VariantArg::Shifted => SbaVariant::Shifted,
        VariantArg::Standard => SbaVariant::Standard,
    };
    let rows = forecast_series(&demands, a.alpha, variant).map_err(|e| e.to_string())?;
    let opt = |v: Option<f64>| v.map(fmt_machine).unwrap_or_default();

    let last = rows.last().expect("non-empty series");
    let summary = format!(
        "forecast: {} periods, smoothed {}, croston rate {}, sba {}\n",
        rows.len(),
        fmt_human(last.smoothed),
        last.croston_rate.map_or("n/a".into(), fmt_human),
        last.sba_forecast.map_or("n/a".into(), fmt_human),
    );
    let mut paths = Vec::new();
    if let Some(out) = a.out {
        let mut csv = String::from(
            "period,demand,smoothed,size_estimate,interval_estimate,croston_rate,sba_forecast\n",
        );
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                r.period,
                fmt_machine(r.demand),
                fmt_machine(r.smoothed),
                opt(r.size_estimate),
                opt(r.interval_estimate),
                opt(r.croston_rate),
                opt(r.sba_forecast),
            );
        }
        write_text(&out, &csv)?;
        paths.push(out);
    }
    Ok(CommandResult::ok(summary, paths))
}

fn simulate(a: SimulateArgs, env_seed: Option<u64>) -> Outcome {
    let mut scenario = if a.scenario == "reference" {
        Scenario::reference()
    } else {
        let path = Path::new(&a.scenario);
        Scenario::from_toml_str(&read_text(path)?)
            .map_err(|e| format!("{}: {e}", path.display()))?
    };
    if let Some(seed) = a.seed.or(env_seed) {
        scenario.seed = seed;
    }
    if let Some(r) = a.replications {
        scenario.replications = r;
    }
    let (report, chain) = run_simulation(&scenario).map_err(|e| e.to_string())?;
    let metrics = a.out_dir.join("metrics.csv");
    let chain_path = a.out_dir.join("chain.jsonl");
    write_text(&metrics, &report.metrics_file().to_csv())?;
    write_text(&chain_path, &chain.to_jsonl())?;

    let (b, n) = (&report.baseline, &report.anfis);
    let summary = format!(
        "simulate: seed {}, {} days x {} replications, chain height {}, {} reorders sealed\n\
         delivery time  {} -> {} min\n\
         reorder every  {} -> {} days\n\
         order quantity {} -> {} units\n\
         efficiency     {} -> {}\n",
        scenario.seed,
        scenario.horizon_days,
        scenario.replications,
        report.chain_height,
        report.chain_reorders,
        fmt_human(b.avg_delivery_time_minutes),
        fmt_human(n.avg_delivery_time_minutes),
        fmt_human(b.avg_reorder_interval_days),
        fmt_human(n.avg_reorder_interval_days),
        fmt_human(b.avg_order_quantity),
        fmt_human(n.avg_order_quantity),
        b.efficiency,
        n.efficiency,
    );
    Ok(CommandResult::ok(summary, vec![metrics, chain_path]))
}

/// Height of the block on 1-based `line`, counting only non-blank lines.
fn height_of_line(text: &str, line: usize) -> usize {
    text.lines()
        .take(line.saturating_sub(1))
        .filter(|l| !l.trim().is_empty())
        .count()
}

fn ledger_verify(path: &Path) -> CommandResult {
    let text = match read_text(path) {
        Ok(t) => t,
        Err(e) => return CommandResult::failure(e),
    };
    let chain = match LedgerChain::from_jsonl(&text) {
        Ok(chain) => chain,
        Err(LedgerError::Parse { line, message }) => {
            return CommandResult::failure(format!(
                "bad height {}: line {line}, {message}\n",
                height_of_line(&text, line)
            ))
        }
        Err(e) => return CommandResult::failure(format!("{e}\n")),
    };
    // Hashes are only checked semantically by verification; the file itself
    // must also be the canonical encoding, byte for byte.
    let canonical = text.lines().filter(|l| !l.trim().is_empty());
    for (block, line) in chain.blocks().iter().zip(canonical) {
        if block.to_json_line() != line {
            return CommandResult::failure(format!(
                "bad height {}: block is not canonically encoded\n",
                block.height
            ));
        }
    }
    let report = verify_chain(&chain);
    CommandResult {
        exit_code: if report.is_ok() { 0 } else { 1 },
        report_paths: Vec::new(),
        summary: format!("{report}\n"),
    }
}

fn report(a: ReportArgs) -> Outcome {
    let text = read_text(&a.metrics)?;
    let metrics =
        MetricsFile::from_csv(&text).map_err(|e| format!("{}: {e}", a.metrics.display()))?;
    let rendered = render_report(&metrics)?;
    let mut paths = Vec::new();
    if let Some(out) = a.out {
        write_text(&out, &rendered)?;
        paths.push(out);
    }
    Ok(CommandResult::ok(rendered, paths))
}

fn need(m: &MetricsFile, section: &str, row: &str, column: &str) -> Result<f64, String> {
    m.get(section, row, column)
        .ok_or_else(|| format!("metrics file lacks {section}/{row}/{column}"))
}

/// Renders the policy comparison, the indicator report and the perturbed
/// states.
pub fn render_report(m: &MetricsFile) -> Result<String, String> {
    let mut s = String::new();
    let seed = need(m, "run", "seed", "value")?;
    let days = need(m, "run", "horizon_days", "value")?;
    let reps = need(m, "run", "replications", "value")?;
    let _ = writeln!(s, "seed {seed}, {days} days, {reps} replications\n");

    let _ = writeln!(s, "Policy comparison");
    let _ = writeln!(
        s,
        "{:<28}{:>12}{:>12}{:>10}",
        "metric", "baseline", "anfis", "ratio"
    );
    for row in COMPARISON_ROWS {
        let _ = writeln!(
            s,
            "{:<28}{:>12}{:>12}{:>10}",
            row,
            fmt_human(need(m, "comparison", row, "baseline")?),
            fmt_human(need(m, "comparison", row, "anfis")?),
            fmt_human(need(m, "comparison", row, "ratio")?),
        );
    }

    let _ = writeln!(s, "\nIndicator report");
    let _ = writeln!(s, "{:<28}{:>12}{:>12}", "indicator", "baseline", "anfis");
    for row in INDICATOR_ROWS {
        let _ = writeln!(
            s,
            "{:<28}{:>12}{:>12}",
            row,
            fmt_human(need(m, "indicators", row, "baseline")?),
            fmt_human(need(m, "indicators", row, "anfis")?),
        );
    }
    for col in ["baseline", "anfis"] {
        let mut one_hot = Vec::new();
        let mut label = "";
        for class in ["perfect", "good", "medium", "poor"] {
            let bit = need(m, "indicators", &format!("efficiency_{class}"), col)?;
            if bit == 1.0 {
                label = class;
            }
            one_hot.push(format!("{bit}"));
        }
        let _ = writeln!(s, "efficiency {:<17}({}) {label}", col, one_hot.join(","));
    }

    let _ = writeln!(s, "\nPerturbed states");
    let _ = writeln!(
        s,
        "{:<6}{:>10}{:>10}{:>10}{:>10}{:>10}{:>6}",
        "state", "metric1", "metric2", "metric3", "metric4", "demand", "lead"
    );
    let mut labels: Vec<&str> = Vec::new();
    for r in m.section("perturbed") {
        if !labels.contains(&r.row.as_str()) {
            labels.push(&r.row);
        }
    }
    for label in labels {
        let mut cells = Vec::new();
        for k in 1..=4 {
            cells.push(fmt_human(need(
                m,
                "perturbed",
                label,
                &format!("metric{k}"),
            )?));
        }
        let _ = writeln!(
            s,
            "{:<6}{:>10}{:>10}{:>10}{:>10}{:>10}{:>6}",
            label,
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            fmt_human(need(m, "perturbed", label, "demand_factor")?),
            need(m, "perturbed", label, "lead_time_days")?,
        );
    }
    Ok(s)
}
