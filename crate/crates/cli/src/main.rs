//! `liftsense` experiments: eigenvalue tables, success rates, projected
//! trajectories and bound reports.
//!
//! Exit codes: 0 on success, 2 for bad flags or unreadable input, 3 when a
//! numerical routine fails (non-convergence, divergence, degenerate point).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use liftsense::landscape::{classify, find_sops, CriticalPoint, SopSearch, Tolerances};
use liftsense::objective::Problem;
use liftsense::optimize::{project_trajectory, success_rate, AdamConfig, TrialConfig};
use liftsense::tensor::{rank1_power, ProjectionConfig};
use liftsense::theory::{bound_report, region_bounds, BoundReport, Constants};
use liftsense::{Error, SensingOperator};

/// Starts used when searching for spurious second-order points.
const SOP_STARTS: usize = 200;

#[derive(Parser, Debug)]
#[command(
    name = "liftsense",
    version,
    about = "Tensor lifting experiments for rank-1 matrix sensing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Gradient norms and smallest Hessian eigenvalues at lifted z and a spurious point.
    Table1,
    /// ADAM success rates, unlifted against lifted.
    Table2,
    /// Rank-1 projected ADAM trajectories as JSON lines.
    Trajectories,
    /// Theoretical bounds at every spurious second-order point.
    Bounds,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct Opts {
    /// Problem sizes, comma separated. Commands other than table1/table2 take one.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    n: Vec<usize>,
    /// Benchmark parameter in (0, 1].
    #[arg(long, global = true, conflicts_with = "operator_file")]
    eps: Option<f64>,
    /// Lift order (table1: a single row order; table2/trajectories: the lifted order).
    #[arg(long, global = true)]
    l: Option<usize>,
    /// Largest order: table1 rows run 1..=lmax, bounds evaluates odd orders up to lmax.
    #[arg(long, global = true)]
    lmax: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// JSON operator fixture replacing the benchmark family.
    #[arg(long, global = true)]
    operator_file: Option<PathBuf>,
    #[arg(long, global = true)]
    tol_grad: Option<f64>,
    #[arg(long, global = true)]
    tol_eig: Option<f64>,
    /// Record every k-th ADAM step in trajectories (0 keeps only the last).
    #[arg(long, global = true)]
    record_every: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Lib(Error::Io(io::Error::other(e)))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(Error::Json(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) => match e {
                Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::CapExceeded { .. }
                | Error::Json(_)
                | Error::Io(_) => 2,
                Error::NotConverged { .. }
                | Error::NonFinite { .. }
                | Error::NotCritical { .. }
                | Error::NotSecondOrder { .. }
                | Error::ZeroDistance
                | Error::ZeroTensor => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(s) => write!(f, "{s}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Flags shared by every command after validation.
struct Setup {
    problems: Vec<Problem>,
    eps: Option<f64>,
    tol: Tolerances,
}

impl Opts {
    fn setup(&self, default_n: &[usize], single: bool) -> CliResult<Setup> {
        for (name, v) in [("--tol-grad", self.tol_grad), ("--tol-eig", self.tol_eig)] {
            if let Some(t) = v {
                if !(t > 0.0 && t.is_finite()) {
                    return usage(format!("{name} must be a positive number, got {t}"));
                }
            }
        }
        let tol = Tolerances {
            grad: self.tol_grad,
            eig: self.tol_eig,
        };
        if let Some(path) = &self.operator_file {
            let op = SensingOperator::read_json(path)?;
            if self.n.iter().any(|&n| n != op.n()) {
                return usage(format!(
                    "--n does not match the operator file dimension {}",
                    op.n()
                ));
            }
            let z = Problem::canonical_ground_truth(op.n());
            return Ok(Setup {
                problems: vec![Problem::new(op, z)?],
                eps: None,
                tol,
            });
        }
        let ns = if self.n.is_empty() {
            default_n.to_vec()
        } else {
            self.n.clone()
        };
        if single && ns.len() != 1 {
            return usage("this command takes a single --n");
        }
        let eps = self.eps.unwrap_or(0.3);
        let problems = ns
            .iter()
            .map(|&n| Problem::benchmark(n, eps))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Setup {
            problems,
            eps: Some(eps),
            tol,
        })
    }

    fn format(&self, allowed: Format) -> CliResult<Format> {
        match self.format {
            Some(f) if f != allowed && allowed == Format::Json => {
                usage("this command only writes JSON; --format csv is not supported")
            }
            Some(f) => Ok(f),
            None => Ok(allowed),
        }
    }

    fn sink(&self) -> CliResult<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn search(p: &Problem, seed: u64, tol: Tolerances) -> CliResult<SopSearch> {
    Ok(find_sops(p, SOP_STARTS, &AdamConfig::default(), seed, tol)?)
}

fn spurious(p: &Problem, found: &SopSearch) -> Vec<CriticalPoint> {
    found
        .sops
        .iter()
        .filter(|c| !c.is_global(p))
        .cloned()
        .collect()
}

/// Row of a CSV table; JSON output goes through `Serialize` instead.
trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

fn write_rows<R: CsvRow>(out: &mut dyn Write, format: Format, rows: &[R]) -> CliResult<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(R::HEADER)?;
            for r in rows {
                w.write_record(r.record())?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, rows)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Marker for table cells that have no value.
const NONE: &str = "NONE";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| NONE.to_string(), |x| x.to_string())
}

/// Columns for the spurious point are `NONE` in CSV and `null` in JSON when
/// the search finds no spurious second-order point.
#[derive(Serialize)]
struct Table1Row {
    n: usize,
    l: usize,
    grad_norm_z: f64,
    grad_norm_xhat: Option<f64>,
    min_eig_z: f64,
    min_eig_xhat: Option<f64>,
}

impl CsvRow for Table1Row {
    const HEADER: &'static [&'static str] = &[
        "n",
        "l",
        "grad_norm_z",
        "grad_norm_xhat",
        "min_eig_z",
        "min_eig_xhat",
    ];
    fn record(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.l.to_string(),
            self.grad_norm_z.to_string(),
            cell(self.grad_norm_xhat),
            self.min_eig_z.to_string(),
            cell(self.min_eig_xhat),
        ]
    }
}

fn table1(opts: &Opts) -> CliResult<()> {
    let format = opts.format(Format::Csv)?;
    let setup = opts.setup(&[3], false)?;
    let orders: Vec<usize> = match (opts.l, opts.lmax) {
        (Some(_), Some(_)) => return usage("give either --l or --lmax"),
        (Some(l), None) => vec![l],
        (None, m) => (1..=m.unwrap_or(4)).collect(),
    };
    if orders.is_empty() || orders.contains(&0) {
        return usage("lift orders must be >= 1");
    }
    let mut rows = Vec::new();
    for p in &setup.problems {
        // ground-truth rows first: they hit the size caps before the search runs
        let at_z = orders
            .iter()
            .map(|&l| classify(p, l, &rank1_power(p.z().as_slice(), l)?, setup.tol))
            .collect::<Result<Vec<_>, _>>()?;
        let xhat = spurious(p, &search(p, opts.seed, setup.tol)?)
            .into_iter()
            .next()
            .map(|c| c.point);
        for (&l, z) in orders.iter().zip(at_z) {
            let x = match &xhat {
                Some(x) => Some(classify(p, l, &rank1_power(x, l)?, setup.tol)?),
                None => None,
            };
            rows.push(Table1Row {
                n: p.n(),
                l,
                grad_norm_z: z.grad_norm,
                grad_norm_xhat: x.as_ref().map(|r| r.grad_norm),
                min_eig_z: z.min_eig,
                min_eig_xhat: x.as_ref().map(|r| r.min_eig),
            });
        }
    }
    write_rows(opts.sink()?.as_mut(), format, &rows)
}

#[derive(Serialize)]
struct Table2Row {
    n: usize,
    l: usize,
    trials: usize,
    successes: usize,
    rate: f64,
}

impl CsvRow for Table2Row {
    const HEADER: &'static [&'static str] = &["n", "l", "trials", "successes", "rate"];
    fn record(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.l.to_string(),
            self.trials.to_string(),
            self.successes.to_string(),
            self.rate.to_string(),
        ]
    }
}

fn table2(opts: &Opts) -> CliResult<()> {
    let format = opts.format(Format::Csv)?;
    if opts.lmax.is_some() {
        return usage("table2 takes --l, not --lmax");
    }
    let setup = opts.setup(&[3, 4, 5], false)?;
    let lifted = opts.l.unwrap_or(3);
    let trials = opts.trials.unwrap_or(40);
    if trials == 0 || lifted == 0 {
        return usage("--trials and --l must be >= 1");
    }
    let cfg = TrialConfig {
        adam: AdamConfig {
            record_every: 0,
            ..AdamConfig::default()
        },
        ..TrialConfig::default()
    };
    let mut orders = vec![1];
    if lifted != 1 {
        orders.push(lifted);
    }
    let mut rows = Vec::new();
    for p in &setup.problems {
        for &l in &orders {
            let r = success_rate(p, l, trials, opts.seed, &cfg)?;
            rows.push(Table2Row {
                n: p.n(),
                l,
                trials,
                successes: r.successes,
                rate: r.rate,
            });
        }
    }
    write_rows(opts.sink()?.as_mut(), format, &rows)
}

#[derive(Serialize)]
struct Landmark {
    kind: &'static str,
    point: Vec<f64>,
}

fn trajectories(opts: &Opts) -> CliResult<()> {
    opts.format(Format::Json)?;
    if opts.lmax.is_some() {
        return usage("trajectories takes --l, not --lmax");
    }
    let setup = opts.setup(&[3], true)?;
    let p = &setup.problems[0];
    let l = opts.l.unwrap_or(3);
    let trials = opts.trials.unwrap_or(4);
    if trials == 0 || l == 0 {
        return usage("--trials and --l must be >= 1");
    }
    let cfg = TrialConfig {
        adam: AdamConfig {
            record_every: opts.record_every.unwrap_or(10),
            ..AdamConfig::default()
        },
        ..TrialConfig::default()
    };

    let mut landmarks = Vec::new();
    let z: Vec<f64> = p.z().iter().copied().collect();
    for (kind, x) in std::iter::once(("ground_truth", z)).chain(
        spurious(p, &search(p, opts.seed, setup.tol)?)
            .into_iter()
            .map(|c| ("spurious", c.point)),
    ) {
        let negated = x.iter().map(|v| -v).collect();
        landmarks.push(Landmark { kind, point: x });
        landmarks.push(Landmark {
            kind,
            point: negated,
        });
    }

    let runs = success_rate(p, l, trials, opts.seed, &cfg)?;
    let mut out = opts.sink()?;
    let header = json!({
        "n": p.n(),
        "l": l,
        "eps": setup.eps,
        "trials": trials,
        "seed": opts.seed,
        "record_every": cfg.adam.record_every,
        "landmarks": landmarks,
    });
    writeln!(out, "{header}")?;
    let projection = ProjectionConfig::default();
    for (trial, rec) in runs.records.iter().enumerate() {
        // diverged runs keep no steps and contribute no lines
        if rec.steps.is_empty() {
            continue;
        }
        for step in project_trajectory(rec, &projection)? {
            let line = json!({
                "trial": trial,
                "seed": rec.seed,
                "iter": step.iter,
                "loss": step.loss,
                "point": step.point,
                "residual": step.residual,
            });
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BoundsOutput {
    n: usize,
    eps: Option<f64>,
    seed: u64,
    starts: usize,
    constants: Constants,
    local_region_radius: f64,
    corollary_bound_rhs: f64,
    sops_found: usize,
    dropped_starts: usize,
    spurious: Vec<BoundReport>,
}

fn bounds(opts: &Opts) -> CliResult<()> {
    opts.format(Format::Json)?;
    if opts.l.is_some() || opts.trials.is_some() {
        return usage("bounds takes --lmax, not --l or --trials");
    }
    let setup = opts.setup(&[3], true)?;
    let p = &setup.problems[0];
    let lmax = opts.lmax.unwrap_or(7);
    let orders: Vec<usize> = (3..=lmax).step_by(2).collect();
    let c = Constants::surrogate(p);
    let region = region_bounds(p, c)?;
    let found = search(p, opts.seed, setup.tol)?;
    let spurious = spurious(p, &found)
        .iter()
        .map(|s| bound_report(p, &s.point, c, &orders, setup.tol))
        .collect::<Result<Vec<_>, _>>()?;
    let report = BoundsOutput {
        n: p.n(),
        eps: setup.eps,
        seed: opts.seed,
        starts: SOP_STARTS,
        constants: c,
        local_region_radius: region.local_region_radius,
        corollary_bound_rhs: region.corollary_rhs,
        sops_found: found.sops.len(),
        dropped_starts: found.dropped,
        spurious,
    };
    let mut out = opts.sink()?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Table1 => table1(&cli.opts),
        Command::Table2 => table2(&cli.opts),
        Command::Trajectories => trajectories(&cli.opts),
        Command::Bounds => bounds(&cli.opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
