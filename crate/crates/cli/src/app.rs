//! Argument handling and the four subcommands.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use symred::parser::{parse_problem, CheckMode, ProblemBundle};

use crate::run::{exit_code, CaseResult, Overrides, RunError, Runner};

pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    JsonLines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Classical,
    Conditional,
    Lb,
}

impl From<Mode> for CheckMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Classical => CheckMode::Classical,
            Mode::Conditional => CheckMode::Conditional,
            Mode::Lb => CheckMode::LieBacklund,
        }
    }
}

/// A single seed `K` or an inclusive range `A..B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSpec(pub Vec<u64>);

impl FromStr for SeedSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("`{s}` is not a seed or an inclusive range A..B");
        match s.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if a > b || b - a >= 1024 {
                    return Err(bad());
                }
                Ok(SeedSpec((a..=b).collect()))
            }
            None => Ok(SeedSpec(vec![s.trim().parse().map_err(|_| bad())?])),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "symred", version, about = "Symmetry and reduction checks for nonlinear PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// Seed, or an inclusive range such as 1..5.
    #[arg(long, env = "SYMRED_SEED", default_value = "0")]
    seed: SeedSpec,
    /// Override the zero-test (or residual) tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run symmetry checks (all declared ones unless --operator is given).
    Check {
        bundle: PathBuf,
        #[arg(long)]
        operator: Vec<String>,
        #[arg(long)]
        novelty: Vec<String>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[command(flatten)]
        common: Common,
    },
    /// Derive a reduced system, or verify a candidate.
    Reduce {
        bundle: PathBuf,
        #[arg(long)]
        ansatz: String,
        #[arg(long)]
        candidate: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Verify solutions, Backlund relations and overdetermined systems.
    Verify {
        bundle: PathBuf,
        #[arg(long)]
        solution: Vec<String>,
        #[arg(long)]
        backlund: Vec<String>,
        #[arg(long)]
        overdetermined: Vec<String>,
        /// Use finite-difference residuals for solutions.
        #[arg(long)]
        fd: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run every bundle in the problems directory and print a matrix.
    PaperSuite {
        /// Directory of .prob files (or a single file).
        dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Entry point with injectable streams; returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

fn load(path: &Path) -> Result<ProblemBundle, String> {
    let src = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_problem(&src).map_err(|e| format!("{}: {e}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn emit(results: &[CaseResult], format: Format, out: &mut dyn Write) {
    for r in results {
        let _ = match format {
            Format::Text => writeln!(out, "{}", r.to_text()),
            Format::JsonLines => writeln!(out, "{}", serde_json::to_string(r).expect("plain data")),
        };
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    match cli.command {
        Command::Check {
            bundle,
            operator,
            novelty,
            mode,
            common,
        } => {
            let b = load(&bundle)?;
            for n in &operator {
                if b.operator(n).is_none() {
                    return Err(format!("unknown operator `{n}`"));
                }
            }
            for n in &novelty {
                if b.novelty_case(n).is_none() {
                    return Err(format!("unknown novelty case `{n}`"));
                }
            }
            let all = operator.is_empty() && novelty.is_empty();
            run_seeds(&b, &bundle, &common, mode.map(Into::into), false, out, |r| {
                let mut v = Vec::new();
                if all {
                    for op in r.bundle.operators.iter().filter(|o| o.check.is_some()) {
                        v.push(r.operator(&op.name)?);
                    }
                    for n in &r.bundle.novelty {
                        v.push(r.novelty(&n.name)?);
                    }
                }
                for n in &operator {
                    v.push(r.operator(n)?);
                }
                for n in &novelty {
                    v.push(r.novelty(n)?);
                }
                Ok(v)
            })
        }
        Command::Reduce {
            bundle,
            ansatz,
            candidate,
            common,
        } => {
            let b = load(&bundle)?;
            if b.ansatz(&ansatz).is_none() {
                return Err(format!("unknown ansatz `{ansatz}`"));
            }
            if let Some(c) = &candidate {
                if b.reduced_system(c).is_none() {
                    return Err(format!("unknown reduced system `{c}`"));
                }
            }
            let code = run_seeds(&b, &bundle, &common, None, false, out, |r| {
                Ok(vec![r.reduction(&ansatz, candidate.as_deref())?])
            })?;
            if code == 1 && candidate.is_none() {
                let _ = writeln!(err, "reduction of `{ansatz}` failed; see the diagnostic above");
            }
            Ok(code)
        }
        Command::Verify {
            bundle,
            solution,
            backlund,
            overdetermined,
            fd,
            common,
        } => {
            let b = load(&bundle)?;
            for n in &solution {
                if b.solution(n).is_none() {
                    return Err(format!("unknown solution `{n}`"));
                }
            }
            for n in &backlund {
                if b.backlund_relation(n).is_none() {
                    return Err(format!("unknown Backlund relation `{n}`"));
                }
            }
            for n in &overdetermined {
                if b.overdetermined_system(n).is_none() {
                    return Err(format!("unknown overdetermined system `{n}`"));
                }
            }
            let all = solution.is_empty() && backlund.is_empty() && overdetermined.is_empty();
            run_seeds(&b, &bundle, &common, None, fd, out, |r| {
                let mut v = Vec::new();
                let sols: Vec<String> = if all {
                    r.bundle.solutions.iter().map(|s| s.solution.name.clone()).collect()
                } else {
                    solution.clone()
                };
                let bts: Vec<String> = if all {
                    r.bundle.backlund.iter().map(|s| s.relation.name.clone()).collect()
                } else {
                    backlund.clone()
                };
                let ods: Vec<String> = if all {
                    r.bundle.overdetermined.iter().map(|s| s.name.clone()).collect()
                } else {
                    overdetermined.clone()
                };
                for n in &sols {
                    v.push(r.solution(n)?);
                }
                for n in &bts {
                    v.push(r.backlund(n)?);
                }
                for n in &ods {
                    v.push(r.overdetermined(n)?);
                }
                Ok(v)
            })
        }
        Command::PaperSuite { dir, common } => paper_suite(dir, &common, out, err),
    }
}

fn run_seeds(
    b: &ProblemBundle,
    path: &Path,
    common: &Common,
    mode: Option<CheckMode>,
    fd: bool,
    out: &mut dyn Write,
    f: impl Fn(&Runner) -> Result<Vec<CaseResult>, RunError>,
) -> Result<i32, String> {
    let mut verdicts = Vec::new();
    for &seed in &common.seed.0 {
        let r = Runner::new(b, stem(path), seed).with_overrides(Overrides {
            tol: common.tol,
            fd,
            mode,
        });
        let results = f(&r).map_err(|e| e.to_string())?;
        emit(&results, common.format, out);
        verdicts.extend(results.iter().map(|r| r.verdict));
    }
    Ok(exit_code(&verdicts))
}

/// Where the shipped bundles live: $SYMRED_PROBLEMS, ./problems, or the
/// source tree this binary was built from.
pub fn default_problems_dir() -> PathBuf {
    if let Some(d) = std::env::var_os("SYMRED_PROBLEMS") {
        return PathBuf::from(d);
    }
    let local = PathBuf::from("problems");
    if local.is_dir() {
        return local;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

/// Bundle files of a directory, sorted by name.
pub fn bundle_files(dir: &Path) -> Result<Vec<PathBuf>, String> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "prob"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(format!("no .prob files in {}", dir.display()));
    }
    Ok(files)
}

/// Runs every bundle under every seed; rows are OK when the verdict matches
/// the bundle's expectation.
pub fn run_suite(dir: &Path, seeds: &[u64], tol: Option<f64>) -> Result<Vec<Vec<CaseResult>>, String> {
    let files = bundle_files(dir)?;
    let bundles: Vec<(PathBuf, ProblemBundle)> = files
        .into_iter()
        .map(|p| load(&p).map(|b| (p, b)))
        .collect::<Result<_, _>>()?;
    let mut per_seed = Vec::new();
    for &seed in seeds {
        let mut rows = Vec::new();
        for (p, b) in &bundles {
            let r = Runner::new(b, stem(p), seed).with_overrides(Overrides {
                tol,
                ..Default::default()
            });
            rows.extend(r.all().map_err(|e| format!("{}: {e}", p.display()))?);
        }
        per_seed.push(rows);
    }
    Ok(per_seed)
}

fn paper_suite(dir: Option<PathBuf>, common: &Common, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let dir = dir.unwrap_or_else(default_problems_dir);
    let seeds = &common.seed.0;
    let per_seed = run_suite(&dir, seeds, common.tol)?;
    let mut all_ok = true;
    if common.format == Format::JsonLines {
        for rows in &per_seed {
            emit(rows, Format::JsonLines, out);
            all_ok &= rows.iter().all(|r| r.ok());
        }
        return Ok(if all_ok { 0 } else { 1 });
    }
    let _ = writeln!(
        out,
        "seeds: {}",
        seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    );
    let mut header = format!("{:<34} {:<14} {:<9}", "case", "kind", "expect");
    for s in seeds {
        let _ = write!(header, " {:<13}", format!("seed {s}"));
    }
    let _ = writeln!(out, "{header} {:<5} {:<10} tolerances", "row", "max res");
    let rows = per_seed[0].len();
    for i in 0..rows {
        let first = &per_seed[0][i];
        let mut line = format!("{:<34} {:<14} {:<9}", first.case, first.kind.as_str(), first.expected.to_string());
        let mut ok = true;
        let mut stable = true;
        let mut max = 0.0f64;
        for rows in &per_seed {
            let r = &rows[i];
            ok &= r.ok();
            stable &= r.verdict == first.verdict;
            max = max.max(r.residual_max);
            let _ = write!(line, " {:<13}", r.verdict.to_string());
        }
        all_ok &= ok && stable;
        let _ = writeln!(
            out,
            "{line} {:<5} {:<10} {}",
            if ok && stable { "OK" } else { "BAD" },
            format!("{max:.2e}"),
            first.tolerances
        );
        if !(ok && stable) {
            for d in &first.details {
                let _ = writeln!(err, "  {}: {d}", first.case);
            }
        }
    }
    let bad = per_seed[0]
        .iter()
        .enumerate()
        .filter(|(i, r)| !per_seed.iter().all(|rows| rows[*i].ok() && rows[*i].verdict == r.verdict))
        .count();
    let _ = writeln!(out, "{} rows, {} not as expected", rows, bad);
    Ok(if all_ok { 0 } else { 1 })
}
