use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quasisol_core::builtin;
use quasisol_core::coupled::{check_quasisolution, forward_residual, iterate_coupled, steps_oracle};
use quasisol_core::expr::{Env, Var};
use quasisol_core::file::{parse_problem, ProblemFile};
use quasisol_core::grid::write_columns;
use quasisol_core::lattice::{run_suite, FiniteLattice};
use quasisol_core::problem::{check_hypotheses, HypothesisReport, ProblemSpec, SolveOptions};
use quasisol_core::Error;
use serde_json::json;

const EXIT_FAIL: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_EVAL: u8 = 3;
const EXIT_QUASI: u8 = 4;
const EXIT_NOT_APPLICABLE: u8 = 5;

#[derive(Parser)]
#[command(name = "quasisol", version, about = "Coupled quasisolutions of advanced final-value problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Problem file (JSON)
    file: PathBuf,
    /// Subintervals on [a, b]
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files
    #[arg(long, default_value = ".")]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the running-variation split f = g + h
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Base point of the running variation (defaults to the file's)
        #[arg(long, allow_hyphen_values = true)]
        base: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        t: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
        #[arg(long, default_value_t = 401)]
        samples: usize,
    },
    /// Check the lower/upper solution inequalities and H1-H4
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Run the coupled iteration
    Solve {
        #[command(flatten)]
        common: Common,
        /// Solve even if the hypothesis check fails
        #[arg(long)]
        force: bool,
    },
    /// Method-of-steps solution compared with the coupled solve
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Exhaustive check of coupled fixed points on random finite lattices
    Lattice {
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "8,8", value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0.25)]
        density: f64,
        #[arg(long)]
        inject_violation: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the built-in worked example
    ExamplePaper {
        /// Destination file (stdout if omitted)
        path: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. } | Error::MissingField(_) | Error::InvalidField { .. } => EXIT_PARSE,
            Error::NotApplicable(_) => EXIT_NOT_APPLICABLE,
            Error::NotOrdered { .. } | Error::WindowViolation { .. } => EXIT_FAIL,
            _ => EXIT_EVAL,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: EXIT_EVAL, message: e.to_string() }
    }
}

type Outcome = Result<u8, Failure>;

struct Loaded {
    file: ProblemFile,
    spec: ProblemSpec,
    opts: SolveOptions,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&common.file)
        .map_err(|e| Failure { code: EXIT_PARSE, message: format!("{}: {e}", common.file.display()) })?;
    let file = parse_problem(&text)?;
    let spec = file.to_spec()?;
    let mut opts = file.options()?;
    if let Some(g) = common.grid {
        opts.grid = g;
    }
    if let Some(t) = common.tol {
        opts.tol = t;
    }
    if let Some(m) = common.max_iter {
        opts.max_iter = m;
    }
    if let Some(s) = common.seed {
        opts.seed = s;
    }
    if opts.grid == 0 || opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(Failure { code: EXIT_PARSE, message: "grid, tol and max-iter must be positive".into() });
    }
    Ok(Loaded { file, spec, opts })
}

fn create(dir: &Path, name: &str) -> Result<io::BufWriter<fs::File>, Failure> {
    fs::create_dir_all(dir)?;
    Ok(io::BufWriter::new(fs::File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let mut f = create(dir, name)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    write_text(dir, name, &(serde_json::to_string_pretty(value).unwrap_or_default() + "\n"))
}

fn cmd_decompose(common: &Common, base: Option<f64>, t: Option<f64>, x: Option<f64>, samples: usize) -> Outcome {
    let loaded = load(common)?;
    let Some((f, file_base)) = loaded.file.whole_f()? else {
        return Err(Failure { code: EXIT_PARSE, message: "decompose needs the right-hand side given as `rhs.f`".into() });
    };
    let env = Env::new(t.unwrap_or(loaded.spec.a), x.unwrap_or(0.0), 0.0);
    let f = f.bind(env)?;
    let pair = f.jordan_decompose(base.unwrap_or(file_base))?;
    let (lo, hi) = f.domain();
    let mut out = csv_writer(common, "decompose.csv")?;
    out.write_record(["y", "kind", "f", "g", "h"]).map_err(csv_err)?;
    let n = samples.max(2);
    for k in 0..n {
        let y = if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 };
        let (g, h) = pair.eval(y)?;
        out.write_record(&[y.to_string(), "sample".into(), f.eval(y)?.to_string(), g.to_string(), h.to_string()])
            .map_err(csv_err)?;
    }
    for &y in f.breakpoints() {
        let (g, h) = pair.eval(y)?;
        out.write_record(&[y.to_string(), "node".into(), f.eval(y)?.to_string(), g.to_string(), h.to_string()])
            .map_err(csv_err)?;
        if y > lo {
            let row = [f.left_limit(y)?, pair.g.left_limit(y)?, pair.h.left_limit(y)?];
            out.write_record(&[y.to_string(), "left".into(), row[0].to_string(), row[1].to_string(), row[2].to_string()])
                .map_err(csv_err)?;
        }
        if y < hi {
            let row = [f.right_limit(y)?, pair.g.right_limit(y)?, pair.h.right_limit(y)?];
            out.write_record(&[y.to_string(), "right".into(), row[0].to_string(), row[1].to_string(), row[2].to_string()])
                .map_err(csv_err)?;
        }
    }
    out.flush()?;
    if f.depends_on(Var::T) || f.depends_on(Var::X) {
        eprintln!("f evaluated at t = {}, x = {}", env.t, env.x);
    }
    Ok(0)
}

fn csv_err(e: csv::Error) -> Failure {
    Failure { code: EXIT_EVAL, message: e.to_string() }
}

/// CSV to `<output>/<name>` when `--output` is given explicitly, else stdout.
fn csv_writer(common: &Common, name: &str) -> Result<csv::Writer<Box<dyn Write>>, Failure> {
    let sink: Box<dyn Write> = if common.output == Path::new(".") {
        Box::new(io::stdout().lock())
    } else {
        Box::new(create(&common.output, name)?)
    };
    Ok(csv::Writer::from_writer(sink))
}

fn hypotheses(loaded: &Loaded) -> Result<HypothesisReport, Failure> {
    Ok(check_hypotheses(&loaded.spec, &loaded.opts)?)
}

fn cmd_check(common: &Common) -> Outcome {
    let loaded = load(common)?;
    let report = hypotheses(&loaded)?;
    print!("{}", report.render_text());
    match report.first_failure() {
        None => Ok(0),
        Some(f) => {
            eprintln!("check failed: {f}");
            Ok(EXIT_FAIL)
        }
    }
}

fn cmd_solve(common: &Common, force: bool) -> Outcome {
    let loaded = load(common)?;
    let report = match hypotheses(&loaded) {
        Ok(r) => Some(r),
        Err(e) if force => {
            eprintln!("warning: {}", e.message);
            None
        }
        Err(e) => return Err(e),
    };
    if let Some(f) = report.as_ref().and_then(|r| r.first_failure()) {
        if !force {
            if let Some(r) = &report {
                print!("{}", r.render_text());
            }
            eprintln!("check failed: {f} (use --force to solve anyway)");
            return Ok(EXIT_FAIL);
        }
        eprintln!("warning: {f} fails; solving anyway");
    }
    let disc = loaded.spec.discretize(loaded.opts.grid)?;
    let (pair, trace) = iterate_coupled(&loaded.spec, &disc, loaded.opts.tol, loaded.opts.max_iter)?;
    let residual = check_quasisolution(&loaded.spec, &disc, &pair.lower, &pair.upper)?;
    let forward = forward_residual(&loaded.spec, &disc, &pair.lower)?;
    let dir = &common.output;
    let mut sol = create(dir, "solution.csv")?;
    write_columns(&mut sol, &["t", "x_star", "x_upper"], &[&pair.lower, &pair.upper])?;
    sol.flush()?;
    let mut tr = create(dir, "trace.csv")?;
    trace.write_csv(&mut tr)?;
    tr.flush()?;

    let mut text = report.as_ref().map(|r| r.render_text()).unwrap_or_default();
    text += &format!(
        "coupled iteration\n  iterations = {}\n  final gap = {:e}\n  is_solution = {}\n  quasisolution residuals = {:e} (lower), {:e} (upper)\n",
        pair.iterations, pair.gap, pair.is_solution, residual.lower, residual.upper
    );
    for s in &trace.stats {
        text += &format!("  iteration {:3}: gap {:e}\n", s.iteration, s.gap);
    }
    write_text(dir, "report.txt", &text)?;
    print!("{text}");
    write_json(
        dir,
        "summary.json",
        &json!({
            "options": loaded.opts,
            "hypotheses": report.as_ref().map(|r| r.summary()),
            "solve": {
                "is_solution": pair.is_solution,
                "iterations": pair.iterations,
                "gap": pair.gap,
                "gaps": trace.gaps(),
                "residual": residual,
                "forward_residual": forward,
            },
        }),
    )?;
    Ok(if pair.is_solution { 0 } else { EXIT_QUASI })
}

fn cmd_oracle(common: &Common) -> Outcome {
    let loaded = load(common)?;
    let disc = loaded.spec.discretize(loaded.opts.grid)?;
    let oracle = steps_oracle(&loaded.spec, &disc)?;
    let (pair, _) = iterate_coupled(&loaded.spec, &disc, loaded.opts.tol, loaded.opts.max_iter)?;
    let distance = oracle.x.sup_distance(&pair.lower)?;
    let dir = &common.output;
    let mut out = create(dir, "oracle.csv")?;
    write_columns(&mut out, &["t", "x_oracle", "x_star"], &[&oracle.x, &pair.lower])?;
    out.flush()?;
    let summary = json!({
        "levels": oracle.levels,
        "closing_bound": oracle.closing_bound,
        "sup_distance": distance,
        "is_solution": pair.is_solution,
    });
    write_json(dir, "oracle_summary.json", &summary)?;
    println!("method of steps: {} levels, closing bound {:e}", oracle.levels.len() - 1, oracle.closing_bound);
    println!("sup distance to coupled solve: {distance:e}");
    Ok(0)
}

fn cmd_lattice(seeds: u64, seed: u64, dims: Vec<usize>, density: f64, inject: bool, output: Option<PathBuf>) -> Outcome {
    if dims.is_empty() || dims.iter().any(|&d| d < 2) {
        return Err(Failure { code: EXIT_PARSE, message: "every dimension must be at least 2".into() });
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Failure { code: EXIT_PARSE, message: "density must lie in [0, 1]".into() });
    }
    let lattice = FiniteLattice::full(dims)?;
    let list: Vec<u64> = (seed..seed + seeds).collect();
    let report = run_suite(&list, &lattice, density, inject);
    println!("lattice {:?}: {}/{} operators satisfy the characterization", report.dims, report.passed, report.seeds);
    if let Some(dir) = output {
        write_json(&dir, "lattice_summary.json", &serde_json::to_value(&report).unwrap_or_default())?;
    }
    match &report.first_failure {
        None => Ok(0),
        Some((s, rep)) => {
            let witness = serde_json::to_string(&rep.witness).unwrap_or_default();
            eprintln!("seed {s} fails: {witness}");
            Ok(EXIT_FAIL)
        }
    }
}

fn cmd_example_paper(path: Option<PathBuf>) -> Outcome {
    let text = builtin::paper_file().to_json() + "\n";
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Decompose { common, base, t, x, samples } => cmd_decompose(&common, base, t, x, samples),
        Command::Check { common } => cmd_check(&common),
        Command::Solve { common, force } => cmd_solve(&common, force),
        Command::Oracle { common } => cmd_oracle(&common),
        Command::Lattice { seeds, seed, dims, density, inject_violation, output } => {
            cmd_lattice(seeds, seed, dims, density, inject_violation, output)
        }
        Command::ExamplePaper { path } => cmd_example_paper(path),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
