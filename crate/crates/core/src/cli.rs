//! `ghz-detect` command line: threshold runs, visibility sweeps, figure data
//! for the line geometry, verification suites and the 8-party check.
//!
//! Every command emits a flat table. CSV output starts with a `#` comment
//! naming the schema and its version; JSON output mirrors the column names.
//! Exact rationals are written as `_num`/`_den` column pairs next to a float
//! convenience column.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;

use crate::asymptotics::eta_star_noiseless;
use crate::envelope::{
    build_envelope, collect_lines, mode_envelope, optimize_for_visibility, visibility_sweep,
    LineMode, Optimum,
};
use crate::error::{Error, Result};
use crate::model::validate_scenario;
use crate::quantum::reference_visibility_bounds;
use crate::rational::{self, parse_rational, Rational};
use crate::strategies::DEFAULT_BUDGET;
use crate::verify::{self, Status, VerifyConfig};

#[derive(Debug, Parser)]
#[command(
    name = "ghz-detect",
    version,
    about = "Detection-efficiency thresholds for multipartite GHZ Bell tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal (x, y) and threshold efficiency for each (n, m) at one visibility.
    Threshold(ThresholdArgs),
    /// Threshold efficiency over a visibility grid, or the exact breakpoint map.
    Sweep(SweepArgs),
    /// All constraint lines with a relevance flag, plus envelope vertices.
    Lines(ScenarioArgs),
    /// Run the invariant suites; exit code 3 on any failure.
    Verify(VerifyArgs),
    /// Best threshold over m for a fixed n and visibility, against ~60%.
    ConclusionCheck(ConclusionArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    Exhaustive,
    Regular,
    RegularBalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Party counts (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Settings counts (comma-separated); ignored with --diagonal.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<usize>,
    /// Use m = n for every n.
    #[arg(long)]
    pub diagonal: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Visibility, decimal or fraction.
    #[arg(long, default_value = "1")]
    pub v: String,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Visibility grid `lo:hi:step`, taken as exact decimals.
    #[arg(long, default_value = "0.5:1:0.05")]
    pub v_grid: String,
    /// Emit the exact piecewise map of visibility intervals instead of a grid.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Suite to run (oracle, envelope, local-bound, marginal, threshold, conjecture, all).
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Largest n for the conjecture suite.
    #[arg(long, default_value_t = 30)]
    pub nmax: usize,
    /// Largest m for the conjecture suite.
    #[arg(long, default_value_t = 13)]
    pub mmax: usize,
    /// Exhaustive checks cover n up to this.
    #[arg(long, default_value_t = 4)]
    pub small_nmax: usize,
    /// Exhaustive checks cover m up to this.
    #[arg(long, default_value_t = 5)]
    pub small_mmax: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    /// Fault injection: raise every certified y by this amount.
    #[arg(long, hide = true)]
    pub perturb_y: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ConclusionArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7,11")]
    pub m: Vec<usize>,
    /// Visibility standing in for the reported state fidelity.
    #[arg(long, default_value = "0.70")]
    pub v: String,
    #[arg(long, default_value = "0.60")]
    pub target: String,
    #[arg(long, default_value = "0.03")]
    pub tolerance: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

// ---------------------------------------------------------------------------
// Tables

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    /// Arbitrary-precision integer in decimal.
    Big(String),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Big(s) | Cell::Text(s) => s.clone(),
            Cell::Float(f) => f.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Big(s) | Cell::Text(s) => Value::from(s.clone()),
            Cell::Float(f) => Value::from(*f),
            Cell::Bool(b) => Value::from(*b),
            Cell::Empty => Value::Null,
        }
    }
}

/// `(name_num, name_den, name)` cells for an exact value.
fn exact(r: &Rational) -> [Cell; 3] {
    [
        Cell::Big(r.numer().to_string()),
        Cell::Big(r.denom().to_string()),
        Cell::Float(rational::to_f64(r)),
    ]
}

fn exact_columns(name: &'static str) -> [String; 3] {
    [
        format!("{name}_num"),
        format!("{name}_den"),
        name.to_string(),
    ]
}

#[derive(Debug, Clone)]
pub struct Table {
    /// Schema name and version, written as the CSV comment line.
    pub schema: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(schema: &'static str, columns: Vec<String>) -> Self {
        Table {
            schema,
            columns,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> Result<()> {
        match format {
            Format::Csv => {
                writeln!(out, "# {}", self.schema)?;
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: serde_json::Map<String, serde_json::Value> = self
                            .columns
                            .iter()
                            .cloned()
                            .zip(row.iter().map(Cell::json))
                            .collect();
                        serde_json::Value::Object(obj)
                    })
                    .collect();
                let doc = serde_json::json!({ "schema": self.schema, "rows": rows });
                serde_json::to_writer_pretty(&mut *out, &doc)?;
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Commands

pub struct Report {
    pub table: Table,
    /// Human-readable lines for stderr.
    pub notes: Vec<String>,
    pub exit_code: i32,
}

fn resolve_mode(mode: ModeArg, n: usize, m: usize, budget: u64) -> LineMode {
    match mode {
        ModeArg::Auto => LineMode::auto(n, m, budget),
        ModeArg::Exhaustive => LineMode::Exhaustive,
        ModeArg::Regular => LineMode::Regular,
        ModeArg::RegularBalanced => LineMode::RegularBalanced,
    }
}

fn pairs(args: &ScenarioArgs) -> Result<Vec<(usize, usize)>> {
    if args.diagonal {
        return Ok(args.n.iter().map(|&n| (n, n)).collect());
    }
    if args.m.is_empty() {
        return Err(Error::validation(
            "m",
            "--m is required unless --diagonal is set",
        ));
    }
    Ok(args
        .n
        .iter()
        .flat_map(|&n| args.m.iter().map(move |&m| (n, m)))
        .collect())
}

fn threshold_columns() -> Vec<String> {
    let mut cols: Vec<String> = vec!["n".into(), "m".into()];
    for name in ["v", "x", "y", "eta_star"] {
        cols.extend(exact_columns(name));
    }
    cols.extend(
        [
            "violation_possible",
            "mode",
            "conjecture_conditional",
            "v_separable",
            "v_two_setting",
        ]
        .map(String::from),
    );
    cols
}

struct EnvelopeRun {
    n: usize,
    m: usize,
    mode: LineMode,
    envelope: crate::envelope::Envelope,
}

fn envelope_for(n: usize, m: usize, mode: ModeArg, budget: u64) -> Result<EnvelopeRun> {
    validate_scenario(n, m, Rational::from_integer(1.into()))?;
    let mode = resolve_mode(mode, n, m, budget);
    let envelope = mode_envelope(n, m, mode, budget)?;
    Ok(EnvelopeRun {
        n,
        m,
        mode,
        envelope,
    })
}

fn threshold_row(run: &EnvelopeRun, v: &Rational) -> Result<Vec<Cell>> {
    let scenario = validate_scenario(run.n, run.m, v.clone())?;
    let r = optimize_for_visibility(&run.envelope, &scenario)?;
    let (sep, two) = reference_visibility_bounds(run.n)?;
    let mut row = vec![Cell::Int(run.n as i64), Cell::Int(run.m as i64)];
    for value in [v, &r.params.x, &r.params.y, &r.eta_star] {
        row.extend(exact(value));
    }
    row.extend([
        Cell::Bool(r.violation_possible),
        Cell::Text(run.mode.to_string()),
        Cell::Bool(run.mode.conjecture_conditional()),
        Cell::Float(sep),
        Cell::Float(two),
    ]);
    Ok(row)
}

pub fn cmd_threshold(args: &ThresholdArgs) -> Result<Report> {
    let v = parse_rational(&args.v)?;
    let mut table = Table::new("ghz-detect/threshold v1", threshold_columns());
    let mut notes = Vec::new();
    for (n, m) in pairs(&args.scenario)? {
        let run = envelope_for(n, m, args.scenario.mode, args.scenario.budget)?;
        let row = threshold_row(&run, &v)?;
        let eta_col = table.column("eta_star").expect("column");
        if let Cell::Float(eta) = row[eta_col] {
            notes.push(format!(
                "n={n} m={m} v={} eta*={} ({eta:.6}) mode={}{}",
                rational::display(&v),
                match (&row[eta_col - 2], &row[eta_col - 1]) {
                    (Cell::Big(a), Cell::Big(b)) if b == "1" => a.clone(),
                    (Cell::Big(a), Cell::Big(b)) => format!("{a}/{b}"),
                    _ => String::new(),
                },
                run.mode,
                if run.mode.conjecture_conditional() {
                    " [conjecture-conditional]"
                } else {
                    ""
                }
            ));
        }
        table.push(row);
    }
    Ok(Report {
        table,
        notes,
        exit_code: 0,
    })
}

/// Parses `lo:hi:step` into exact grid points `lo, lo + step, ..` up to `hi`.
pub fn parse_grid(text: &str) -> Result<Vec<Rational>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, step] = parts[..] else {
        return Err(Error::validation(
            "v-grid",
            format!("expected lo:hi:step, got {text:?}"),
        ));
    };
    let (lo, hi, step) = (
        parse_rational(lo)?,
        parse_rational(hi)?,
        parse_rational(step)?,
    );
    if step <= Rational::from_integer(0.into()) {
        return Err(Error::validation("v-grid", "step must be positive"));
    }
    let mut out = Vec::new();
    let mut v = lo;
    while v <= hi {
        out.push(v.clone());
        v += &step;
    }
    Ok(out)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Report> {
    let mut notes = Vec::new();
    if args.exact {
        let mut cols: Vec<String> = vec!["n".into(), "m".into()];
        for name in ["v_lo", "v_hi", "x", "y", "eta_at_v_hi"] {
            cols.extend(exact_columns(name));
        }
        cols.extend(["vertex", "mode", "v_separable", "v_two_setting"].map(String::from));
        let mut table = Table::new("ghz-detect/sweep-exact v1", cols);
        for (n, m) in pairs(&args.scenario)? {
            let run = envelope_for(n, m, args.scenario.mode, args.scenario.budget)?;
            let scenario = validate_scenario(n, m, Rational::from_integer(1.into()))?;
            let map = visibility_sweep(&run.envelope, &scenario);
            let (sep, two) = reference_visibility_bounds(n)?;
            for iv in &map.intervals {
                let eta = map.eta_star_at(&iv.v_hi)?;
                let mut row = vec![Cell::Int(n as i64), Cell::Int(m as i64)];
                for value in [&iv.v_lo, &iv.v_hi, &iv.x, &iv.y, &eta] {
                    row.extend(exact(value));
                }
                row.extend([
                    Cell::Int(match iv.optimum {
                        Optimum::Vertex(k) | Optimum::Line(k) => k as i64,
                    }),
                    Cell::Text(run.mode.to_string()),
                    Cell::Float(sep),
                    Cell::Float(two),
                ]);
                table.push(row);
            }
            notes.push(format!(
                "n={n} m={m}: {} visibility intervals ({})",
                map.intervals.len(),
                run.mode
            ));
        }
        return Ok(Report {
            table,
            notes,
            exit_code: 0,
        });
    }

    let grid = parse_grid(&args.v_grid)?;
    let mut table = Table::new("ghz-detect/sweep v1", threshold_columns());
    for (n, m) in pairs(&args.scenario)? {
        let run = envelope_for(n, m, args.scenario.mode, args.scenario.budget)?;
        for v in &grid {
            table.push(threshold_row(&run, v)?);
        }
        if let Ok(eta) = eta_star_noiseless(n, m) {
            notes.push(format!(
                "n={n} m={m}: {} grid points; partition-form eta*(v=1) = {}",
                grid.len(),
                rational::display(&eta)
            ));
        }
    }
    Ok(Report {
        table,
        notes,
        exit_code: 0,
    })
}

pub fn cmd_lines(args: &ScenarioArgs) -> Result<Report> {
    let mut cols: Vec<String> = ["n", "m", "kind"].map(String::from).to_vec();
    for name in ["p", "q", "x", "y"] {
        cols.extend(exact_columns(name));
    }
    cols.extend(["relevant", "provenance"].map(String::from));
    let mut table = Table::new("ghz-detect/lines v1", cols);
    let mut notes = Vec::new();
    for (n, m) in pairs(args)? {
        validate_scenario(n, m, Rational::from_integer(1.into()))?;
        let mode = resolve_mode(args.mode, n, m, args.budget);
        let lines = collect_lines(n, m, mode, args.budget)?;
        let envelope = build_envelope(&lines)?;
        let relevant = envelope.keys();
        let blank = || [Cell::Empty, Cell::Empty, Cell::Empty];
        for line in &lines {
            let mut row = vec![
                Cell::Int(n as i64),
                Cell::Int(m as i64),
                Cell::Text("line".into()),
            ];
            row.extend(exact(&line.p));
            row.extend(exact(&line.q));
            row.extend(blank());
            row.extend(blank());
            row.push(Cell::Bool(relevant.binary_search(&line.key()).is_ok()));
            row.push(Cell::Text(line.source.to_string()));
            table.push(row);
        }
        for (x, y) in &envelope.vertices {
            let mut row = vec![
                Cell::Int(n as i64),
                Cell::Int(m as i64),
                Cell::Text("vertex".into()),
            ];
            row.extend(blank());
            row.extend(blank());
            row.extend(exact(x));
            row.extend(exact(y));
            row.push(Cell::Bool(true));
            row.push(Cell::Empty);
            table.push(row);
        }
        notes.push(format!(
            "n={n} m={m}: {} distinct lines, {} relevant, {} vertices ({mode})",
            lines.len(),
            envelope.lines.len(),
            envelope.vertices.len()
        ));
    }
    Ok(Report {
        table,
        notes,
        exit_code: 0,
    })
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Report> {
    let cfg = VerifyConfig {
        nmax_small: args.small_nmax,
        mmax_small: args.small_mmax,
        random_samples: args.samples,
        seed: args.seed,
        perturb_y: args.perturb_y.as_deref().map(parse_rational).transpose()?,
        conjecture_nmax: args.nmax,
        conjecture_mmax: args.mmax,
        budget: args.budget,
    };
    let suites: Vec<&str> = if args.suite == "all" {
        verify::SUITES.to_vec()
    } else {
        args.suite.split(',').map(str::trim).collect()
    };
    let mut table = Table::new(
        "ghz-detect/verify v1",
        ["suite", "property", "status", "detail"]
            .map(String::from)
            .to_vec(),
    );
    let mut notes = Vec::new();
    let mut failures = 0;
    for suite in suites {
        let checks = verify::run_suite(suite, &cfg)?;
        let bad = verify::failed(&checks);
        failures += bad.len();
        notes.push(format!(
            "{suite}: {} checks, {} failed",
            checks.len(),
            bad.len()
        ));
        for c in &bad {
            notes.push(format!("  FAIL {}: {}", c.property, c.detail));
        }
        for c in checks {
            table.push(vec![
                Cell::Text(c.suite.into()),
                Cell::Text(c.property),
                Cell::Text(c.status.to_string()),
                Cell::Text(c.detail),
            ]);
        }
    }
    debug_assert!(table
        .rows
        .iter()
        .all(|r| r[2] != Cell::Text(Status::Fail.to_string()) || failures > 0));
    Ok(Report {
        table,
        notes,
        exit_code: if failures > 0 { 3 } else { 0 },
    })
}

pub fn cmd_conclusion_check(args: &ConclusionArgs) -> Result<Report> {
    let v = parse_rational(&args.v)?;
    let target = parse_rational(&args.target)?;
    let tolerance = parse_rational(&args.tolerance)?;
    let mut cols: Vec<String> = vec!["n".into(), "m".into()];
    for name in ["v", "x", "y", "eta_star"] {
        cols.extend(exact_columns(name));
    }
    cols.extend(["violation_possible", "mode", "best", "within_target"].map(String::from));
    let mut table = Table::new("ghz-detect/conclusion v1", cols);

    let mut results = Vec::new();
    for &m in &args.m {
        let run = envelope_for(args.n, m, args.mode, args.budget)?;
        let scenario = validate_scenario(args.n, m, v.clone())?;
        let r = optimize_for_visibility(&run.envelope, &scenario)?;
        results.push((m, run.mode, r));
    }
    let best = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .2.eta_star.cmp(&b.1 .2.eta_star))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::validation("m", "no settings counts given"))?;
    let mut notes = Vec::new();
    for (k, (m, mode, r)) in results.iter().enumerate() {
        let within = (&r.eta_star - &target).abs() <= tolerance;
        let mut row = vec![Cell::Int(args.n as i64), Cell::Int(*m as i64)];
        for value in [&v, &r.params.x, &r.params.y, &r.eta_star] {
            row.extend(exact(value));
        }
        row.extend([
            Cell::Bool(r.violation_possible),
            Cell::Text(mode.to_string()),
            Cell::Bool(k == best),
            Cell::Bool(within),
        ]);
        table.push(row);
        if k == best {
            notes.push(format!(
                "best m={m}: eta* = {} ({:.4}); target {} +/- {}: {}{}",
                rational::display(&r.eta_star),
                r.eta_star_f64,
                rational::display(&target),
                rational::display(&tolerance),
                if within { "agrees" } else { "disagrees" },
                if r.violation_possible {
                    ""
                } else {
                    " [no violation possible]"
                }
            ));
        }
    }
    Ok(Report {
        table,
        notes,
        exit_code: 0,
    })
}

use num::Signed;

pub fn execute(cli: &Cli) -> Result<(Report, OutputArgs)> {
    match &cli.command {
        Command::Threshold(a) => Ok((cmd_threshold(a)?, a.scenario.output.clone())),
        Command::Sweep(a) => Ok((cmd_sweep(a)?, a.scenario.output.clone())),
        Command::Lines(a) => Ok((cmd_lines(a)?, a.output.clone())),
        Command::Verify(a) => Ok((cmd_verify(a)?, a.output.clone())),
        Command::ConclusionCheck(a) => Ok((cmd_conclusion_check(a)?, a.output.clone())),
    }
}

/// Parses `args` (including the program name), runs the command and writes
/// the table to `--out` or `stdout`. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    let outcome = execute(&cli).and_then(|(report, output)| {
        match &output.out {
            Some(path) => {
                let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
                report.table.write(output.format, &mut file)?;
                file.flush()?;
            }
            None => report.table.write(output.format, stdout)?,
        }
        for note in &report.notes {
            writeln!(stderr, "{note}")?;
        }
        Ok(report.exit_code)
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
