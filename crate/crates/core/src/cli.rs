//! The `fraclop` command line: single solves, sweeps, scaling benchmarks and
//! small inspection tools. Exit code 0 on success, 1 for usage errors (no
//! files are written), 2 for numerical failures.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::control::{
    default_op_eps, make_design, solve_control, ControlProblem, ControlSolution, DesignGeometry, DesignKind,
    PrecondKind, PrecondSpec, OPERATOR_RANK_CAP,
};
use crate::discretization::{Boundary, Coefficient1D, SturmLiouville1D};
use crate::invariants;
use crate::operator_algebra::{compress_coefficient_tensor, CoefficientGrid, Mode, SpectralFunction};
use crate::pcg::{PcgConfig, StopRule, TruncationPoints};
use crate::preconditioner::{estimate_condition, DEFAULT_PRECOND_EPS, DEFAULT_PRECOND_RANK};
use crate::tensor_formats::{load_canon, save_canon, CanonicalTensor};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "fraclop", version, about = "Low-rank solver for fractional elliptic optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one control problem.
    Solve(SolveArgs),
    /// Solve every combination of the given n, alpha and gamma values.
    Sweep(SolveArgs),
    /// Time PCG iterations over a list of grid sizes.
    Bench(BenchArgs),
    /// Eigenvalues of one 1D Sturm-Liouville operator.
    Eig(EigArgs),
    /// Compress a coefficient tensor of F1, F2 or F3.
    Op(OpArgs),
    /// Build a preconditioner and report its constants.
    Precond(PrecondArgs),
    /// 2D slice of a CANON file as CSV.
    Slice(SliceArgs),
    /// Single entries of a CANON file.
    Eval(EvalArgs),
    /// Randomized invariant checks of the tensor algebra.
    Validate(ValidateArgs),
}

/// Every parameter of a control problem.
#[derive(Args, Clone, Debug)]
struct ProblemArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Interior points per direction; repeat to sweep.
    #[arg(long, num_args = 1.., allow_negative_numbers = true, default_values_t = [63i64])]
    n: Vec<i64>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true, default_values_t = [1.0])]
    alpha: Vec<f64>,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, num_args = 1.., allow_negative_numbers = true, default_values_t = [1.0])]
    gamma: Vec<f64>,
    /// Truncation tolerance of the PCG iterates.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-5)]
    stop_tol: f64,
    /// `relative` (|R|/|B|) or `integral` (|integral of R|).
    #[arg(long, default_value = "relative")]
    stop_rule: StopRule,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// Largest rank of a truncated PCG iterate.
    #[arg(long, default_value_t = 120)]
    rank_cap: usize,
    /// `box`, `h` or a CANON file.
    #[arg(long, default_value = "box")]
    design: String,
    /// `default`, `modified`, `unit`, or one id/CSV file per direction.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = ["default".to_string()])]
    coeffs: Vec<String>,
    /// `laplace`, `aniso` or `direct`; direct in 2D and laplace in 3D by default.
    #[arg(long, visible_alias = "mode")]
    precond: Option<PrecondKind>,
    #[arg(long, default_value_t = DEFAULT_PRECOND_RANK)]
    precond_rank: usize,
    #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_PRECOND_EPS)]
    precond_eps: f64,
    #[arg(long, default_value = "paper")]
    boundary: Boundary,
    #[arg(long)]
    allow_degenerate: bool,
    /// Omit wall-clock times from the written files so reruns are bitwise identical.
    #[arg(long)]
    deterministic: bool,
    /// Compression tolerance of the forward operator.
    #[arg(long, allow_negative_numbers = true)]
    op_eps: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iterates left untruncated, from `s,x,r,z,p`.
    #[arg(long, value_delimiter = ',')]
    skip_trunc: Vec<String>,
    /// Design geometry overrides, each `a,b`.
    #[arg(long)]
    box_interval: Option<String>,
    #[arg(long)]
    h_left: Option<String>,
    #[arg(long)]
    h_right: Option<String>,
    #[arg(long)]
    h_height: Option<String>,
    #[arg(long)]
    h_cross: Option<String>,
    #[arg(long)]
    extrude: Option<String>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Take every parameter from a previous run's meta.txt.
    #[arg(long)]
    rerun: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EigArgs {
    /// Coefficient id or CSV file.
    #[arg(long, default_value = "a1")]
    coef: String,
    #[arg(long, allow_negative_numbers = true, default_value_t = 63)]
    n: i64,
    #[arg(long, default_value = "paper")]
    boundary: Boundary,
    #[arg(long)]
    allow_degenerate: bool,
    /// CSV file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OpArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// `f1` = A^alpha, `f2` = the Lagrange operator, `f3` = its inverse.
    #[arg(long, default_value = "f2")]
    func: String,
    #[arg(long, default_value_t = OPERATOR_RANK_CAP)]
    op_rank_cap: usize,
    /// Cross-check this many random entries against direct evaluation.
    #[arg(long)]
    validate: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrecondArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Print the constants as CSV.
    #[arg(long)]
    report: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SliceArgs {
    #[arg(long)]
    file: PathBuf,
    /// `x`, `y`, `z` or `0`, `1`, `2`; needed in 3D.
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    index: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    file: PathBuf,
    #[arg(long, num_args = 1..)]
    i: Vec<usize>,
    #[arg(long, num_args = 1..)]
    j: Vec<usize>,
    #[arg(long, num_args = 1..)]
    k: Vec<usize>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        // a closed stdout (`fraclop slice ... | head`) is not a failure
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        1
    } else {
        2
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Bench(a) => bench(a),
        Command::Eig(a) => eig(a),
        Command::Op(a) => op(a),
        Command::Precond(a) => precond(a),
        Command::Slice(a) => slice(a),
        Command::Eval(a) => eval(a),
        Command::Validate(a) => validate(a),
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn grid_size(n: i64) -> Result<usize> {
    if n < 2 {
        return Err(usage(format!("--n {n}: need at least 2 interior points")));
    }
    usize::try_from(n).map_err(|_| usage(format!("--n {n} too large")))
}

fn pair(flag: &str, s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let parse = |t: &str| t.parse::<f64>().map_err(|_| usage(format!("--{flag} {s}: expected `a,b`")));
    match parts.as_slice() {
        [a, b] => {
            let (a, b) = (parse(a)?, parse(b)?);
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
                return Err(usage(format!("--{flag} {s}: need 0 <= a <= b <= 1")));
            }
            Ok((a, b))
        }
        _ => Err(usage(format!("--{flag} {s}: expected `a,b`"))),
    }
}

fn fmt_list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// One point of a sweep.
#[derive(Clone, Debug)]
struct Point {
    n: usize,
    alpha: f64,
    gamma: f64,
}

impl Point {
    fn dir_name(&self) -> String {
        format!("n{}_alpha{}_gamma{}", self.n, self.alpha, self.gamma)
    }
}

impl ProblemArgs {
    fn points(&self) -> Result<Vec<Point>> {
        let ns = self.n.iter().map(|&n| grid_size(n)).collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for &n in &ns {
            for &alpha in &self.alpha {
                for &gamma in &self.gamma {
                    out.push(Point { n, alpha, gamma });
                }
            }
        }
        Ok(out)
    }

    fn coefficients(&self) -> Result<Vec<Coefficient1D>> {
        let d = self.dim;
        let named = |ids: [&str; 3]| ids[..d].iter().map(|s| Coefficient1D::parse(s, false)).collect();
        match self.coeffs.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["default"] => named(["a1", "a2", "a3"]),
            ["modified"] => named(["a1", "a2_modified", "a3"]),
            ["unit"] if d > 1 => named(["unit", "unit", "unit"]),
            specs if specs.len() == d => specs.iter().map(|s| Coefficient1D::parse(s, self.allow_degenerate)).collect(),
            specs => Err(usage(format!("--coeffs: {} entries for {d} directions", specs.len()))),
        }
    }

    fn geometry(&self) -> Result<DesignGeometry> {
        let mut g = DesignGeometry::default();
        let fields: [(&str, &Option<String>, &mut (f64, f64)); 6] = [
            ("box-interval", &self.box_interval, &mut g.box_interval),
            ("h-left", &self.h_left, &mut g.h_left),
            ("h-right", &self.h_right, &mut g.h_right),
            ("h-height", &self.h_height, &mut g.h_height),
            ("h-cross", &self.h_cross, &mut g.h_cross),
            ("extrude", &self.extrude, &mut g.extrude),
        ];
        for (flag, value, slot) in fields {
            if let Some(s) = value {
                *slot = pair(flag, s)?;
            }
        }
        Ok(g)
    }

    fn truncation(&self) -> Result<TruncationPoints> {
        let mut t = TruncationPoints::ALL;
        for s in &self.skip_trunc {
            match s.as_str() {
                "s" | "S" => t.s = false,
                "x" | "X" => t.x = false,
                "r" | "R" => t.r = false,
                "z" | "Z" => t.z = false,
                "p" | "P" => t.p = false,
                other => return Err(usage(format!("--skip-trunc: unknown iterate `{other}`"))),
            }
        }
        Ok(t)
    }

    fn precond_kind(&self) -> PrecondKind {
        self.precond.unwrap_or(if self.dim == 2 { PrecondKind::Direct } else { PrecondKind::Laplace })
    }

    fn problem(&self, pt: &Point) -> Result<ControlProblem> {
        let d = self.dim;
        if !(2..=3).contains(&d) {
            return Err(usage(format!("--dim {d}: expected 2 or 3")));
        }
        let shape = vec![pt.n; d];
        let design = match self.design.as_str() {
            "box" | "h" | "H" => make_design(self.design.parse::<DesignKind>()?, &shape, &self.geometry()?)?,
            path => {
                let t = load_canon(path)?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::Shape(format!(
                        "design file {path} has shape {:?}, grid is {shape:?}",
                        t.shape()
                    )));
                }
                t
            }
        };
        let mut precond = PrecondSpec::new(self.precond_kind());
        precond.rank = self.precond_rank;
        precond.eps = self.precond_eps;
        let pcg = PcgConfig {
            eps: self.eps,
            stop_tol: self.stop_tol,
            stop_rule: self.stop_rule,
            max_iter: self.max_iter,
            rank_cap: self.rank_cap,
            truncation: self.truncation()?,
            deterministic: self.deterministic,
        };
        let p = ControlProblem {
            n: shape,
            alpha: pt.alpha,
            beta: self.beta,
            gamma: pt.gamma,
            coefficients: self.coefficients()?,
            boundary: self.boundary,
            design,
            precond,
            op_eps: self.op_eps.unwrap_or(default_op_eps(d)),
            pcg,
        };
        p.validate()?;
        Ok(p)
    }

    /// The parameter lines of meta.txt, keyed by flag name so that `--rerun`
    /// can turn them back into arguments.
    fn meta(&self, pt: &Point) -> Vec<(&'static str, String)> {
        let opt = |o: &Option<String>| o.clone().unwrap_or_default();
        vec![
            ("dim", self.dim.to_string()),
            ("n", pt.n.to_string()),
            ("alpha", pt.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", pt.gamma.to_string()),
            ("eps", self.eps.to_string()),
            ("stop-tol", self.stop_tol.to_string()),
            ("stop-rule", self.stop_rule.as_str().into()),
            ("max-iter", self.max_iter.to_string()),
            ("rank-cap", self.rank_cap.to_string()),
            ("design", self.design.clone()),
            ("coeffs", fmt_list(&self.coeffs)),
            ("precond", self.precond_kind().as_str().into()),
            ("precond-rank", self.precond_rank.to_string()),
            ("precond-eps", self.precond_eps.to_string()),
            ("boundary", if self.boundary == Boundary::DoubledEdge { "paper" } else { "standard" }.into()),
            ("allow-degenerate", self.allow_degenerate.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("op-eps", self.op_eps.unwrap_or(default_op_eps(self.dim)).to_string()),
            ("seed", self.seed.to_string()),
            ("skip-trunc", fmt_list(&self.skip_trunc)),
            ("box-interval", opt(&self.box_interval)),
            ("h-left", opt(&self.h_left)),
            ("h-right", opt(&self.h_right)),
            ("h-height", opt(&self.h_height)),
            ("h-cross", opt(&self.h_cross)),
            ("extrude", opt(&self.extrude)),
        ]
    }
}

/// Flags that take a list and are written comma separated in meta.txt.
const LIST_FLAGS: [&str; 2] = ["coeffs", "skip-trunc"];
const BOOL_FLAGS: [&str; 2] = ["allow-degenerate", "deterministic"];
const PARAM_FLAGS: [&str; 27] = [
    "dim",
    "n",
    "alpha",
    "beta",
    "gamma",
    "eps",
    "stop-tol",
    "stop-rule",
    "max-iter",
    "rank-cap",
    "design",
    "coeffs",
    "precond",
    "precond-rank",
    "precond-eps",
    "boundary",
    "allow-degenerate",
    "deterministic",
    "op-eps",
    "seed",
    "skip-trunc",
    "box-interval",
    "h-left",
    "h-right",
    "h-height",
    "h-cross",
    "extrude",
];

fn read_meta(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key=value, got `{line}`") })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Problem arguments recorded in a meta.txt.
fn rerun_args(path: &Path) -> Result<ProblemArgs> {
    let meta = read_meta(path)?;
    let mut argv: Vec<String> = vec!["fraclop".into(), "solve".into()];
    for (k, v) in &meta {
        if !PARAM_FLAGS.contains(&k.as_str()) || v.is_empty() {
            continue;
        }
        if BOOL_FLAGS.contains(&k.as_str()) {
            if v == "true" {
                argv.push(format!("--{k}"));
            }
        } else if LIST_FLAGS.contains(&k.as_str()) {
            argv.push(format!("--{k}"));
            argv.extend(v.split(',').map(String::from));
        } else {
            argv.push(format!("--{k}={v}"));
        }
    }
    match Cli::try_parse_from(&argv) {
        Ok(Cli { command: Command::Solve(a) }) => Ok(a.problem),
        Ok(_) => unreachable!("rerun arguments always name the solve subcommand"),
        Err(e) => Err(usage(format!("{}: {}", path.display(), e.kind()))),
    }
}

struct Outcome {
    iterations: usize,
    rel_residual: f64,
    max_rank: usize,
    seconds: f64,
    termination: &'static str,
    converged: bool,
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    body(&mut f)?;
    f.flush()?;
    Ok(())
}

/// Solves `p` and writes control.canon, state.canon, history.csv and
/// meta.txt into `dir`.
fn solve_into(p: &ControlProblem, params: &[(&'static str, String)], dir: &Path, command: &str) -> Result<Outcome> {
    let start = Instant::now();
    let sol: ControlSolution = solve_control(p)?;
    let state = sol.assembly.state(p, sol.control())?;
    let seconds = start.elapsed().as_secs_f64();
    let mut report = sol.report.clone();
    if p.pcg.deterministic {
        report.history.iter_mut().for_each(|r| r.seconds = 0.0);
    }
    fs::create_dir_all(dir)?;
    save_canon(dir.join("control.canon"), sol.control())?;
    save_canon(dir.join("state.canon"), &state)?;
    write_file(&dir.join("history.csv"), |w| report.write_history(w))?;
    let asm = &sol.assembly;
    write_file(&dir.join("meta.txt"), |w| {
        writeln!(w, "command={command}")?;
        writeln!(w, "version={}", env!("CARGO_PKG_VERSION"))?;
        for (k, v) in params {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "coefficients={}", fmt_list(&p.coefficients.iter().map(|c| c.name()).collect::<Vec<_>>()))?;
        writeln!(w, "b0={}", fmt_list(&asm.aniso.b0))?;
        writeln!(w, "q={}", asm.aniso.q)?;
        if let Some(b) = asm.aniso.analytic_bound(p.alpha) {
            writeln!(w, "analytic_bound={b}")?;
        }
        writeln!(w, "forward_rank={}", asm.forward.rank())?;
        writeln!(w, "precond_rank_used={}", asm.precond.rank())?;
        writeln!(w, "precond_capped={}", asm.precond_capped)?;
        writeln!(w, "iterations={}", sol.report.iterations)?;
        writeln!(w, "termination={}", sol.report.termination.as_str())?;
        writeln!(w, "rel_residual={:e}", sol.report.final_rel_residual())?;
        writeln!(w, "max_rank={}", sol.report.max_rank())?;
        writeln!(w, "rank_capped={}", sol.report.rank_capped)?;
        writeln!(w, "control_rank={}", sol.control().rank())?;
        writeln!(w, "state_rank={}", state.rank())?;
        if !p.pcg.deterministic {
            writeln!(w, "assembly_seconds={:.6}", asm.seconds)?;
            writeln!(w, "solve_seconds={:.6}", sol.solve_seconds)?;
            writeln!(w, "total_seconds={seconds:.6}")?;
        }
        Ok(())
    })?;
    Ok(Outcome {
        iterations: sol.report.iterations,
        rel_residual: sol.report.final_rel_residual(),
        max_rank: sol.report.max_rank(),
        seconds,
        termination: sol.report.termination.as_str(),
        converged: sol.report.converged,
    })
}

fn summary(o: &Outcome) -> String {
    format!(
        "{} after {} iterations, residual {:.3e}, max rank {}, {:.2} s",
        o.termination, o.iterations, o.rel_residual, o.max_rank, o.seconds
    )
}

fn resolve(a: SolveArgs) -> Result<(ProblemArgs, PathBuf)> {
    let out = a.out.unwrap_or_else(|| PathBuf::from("fraclop_out"));
    match a.rerun {
        Some(meta) => Ok((rerun_args(&meta)?, out)),
        None => Ok((a.problem, out)),
    }
}

fn solve(a: SolveArgs) -> Result<i32> {
    let (args, out) = resolve(a)?;
    let points = args.points()?;
    let [pt] = points.as_slice() else {
        return Err(usage("solve takes one n, alpha and gamma; use sweep for several"));
    };
    let p = args.problem(pt)?;
    let o = solve_into(&p, &args.meta(pt), &out, "solve")?;
    println!("{}", summary(&o));
    Ok(if o.converged { 0 } else { 2 })
}

fn threads() -> usize {
    std::env::var("FRACLOP_THREADS").ok().and_then(|s| s.parse().ok()).filter(|&t| t > 0).unwrap_or(1)
}

fn sweep(a: SolveArgs) -> Result<i32> {
    let (args, out) = resolve(a)?;
    let points = args.points()?;
    // every point is validated before anything runs or is written
    let problems = points.iter().map(|pt| args.problem(pt)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&out)?;
    let results: Mutex<Vec<Option<Result<Outcome>>>> = Mutex::new((0..points.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads().min(points.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let pt = &points[i];
                let r = solve_into(&problems[i], &args.meta(pt), &out.join(pt.dir_name()), "sweep");
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().unwrap();
    let mut code = 0;
    write_file(&out.join("sweep.csv"), |w| {
        writeln!(w, "n,alpha,gamma,iterations,rel_residual,max_rank,seconds,termination")?;
        for (pt, r) in points.iter().zip(results) {
            match r.expect("every sweep point ran") {
                Ok(o) => {
                    let secs = if args.deterministic { 0.0 } else { o.seconds };
                    writeln!(
                        w,
                        "{},{},{},{},{:.6e},{},{:.6e},{}",
                        pt.n, pt.alpha, pt.gamma, o.iterations, o.rel_residual, o.max_rank, secs, o.termination
                    )?;
                    println!("{}: {}", pt.dir_name(), summary(&o));
                    if !o.converged {
                        code = 2;
                    }
                }
                Err(e) => {
                    writeln!(w, "{},{},{},,,,,error", pt.n, pt.alpha, pt.gamma)?;
                    eprintln!("{}: error: {e}", pt.dir_name());
                    code = code.max(exit_code(&e));
                }
            }
        }
        Ok(())
    })?;
    Ok(code)
}

/// Peak resident set size of this process in kB.
pub fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// One row of the scaling benchmark.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub seconds_per_iter: f64,
    pub iterations: usize,
    pub max_rank: usize,
    pub coefficient_entries: usize,
    pub operator_entries: usize,
    /// `N^2` for `N = n^d` unknowns; computed, never allocated.
    pub dense_entries: f64,
    pub peak_rss_kb: Option<u64>,
}

/// Solves `p` and times its PCG iterations.
pub fn bench_point(p: &ControlProblem) -> Result<BenchRow> {
    let sol = solve_control(p)?;
    let mut secs: Vec<f64> = sol.report.history.iter().map(|r| r.seconds).collect();
    let unknowns: f64 = p.n.iter().map(|&n| n as f64).product();
    Ok(BenchRow {
        n: p.n[0],
        seconds_per_iter: median(&mut secs),
        iterations: sol.report.iterations,
        max_rank: sol.report.max_rank(),
        coefficient_entries: sol.assembly.forward.coefficients().storage(),
        operator_entries: sol.assembly.forward.storage(),
        dense_entries: unknowns * unknowns,
        peak_rss_kb: peak_rss_kb(),
    })
}

fn bench(a: BenchArgs) -> Result<i32> {
    let args = a.problem;
    let out = a.out.unwrap_or_else(|| PathBuf::from("fraclop_bench"));
    let (alpha, gamma) = (args.alpha[0], args.gamma[0]);
    let ns = args.n.iter().map(|&n| grid_size(n)).collect::<Result<Vec<_>>>()?;
    let problems = ns.iter().map(|&n| args.problem(&Point { n, alpha, gamma })).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&out)?;
    let mut rows = Vec::new();
    for p in &problems {
        let row = bench_point(p)?;
        println!(
            "n={} {:.4e} s/iter, {} iterations, max rank {}, peak RSS {} kB",
            row.n,
            row.seconds_per_iter,
            row.iterations,
            row.max_rank,
            row.peak_rss_kb.map_or("?".into(), |v| v.to_string())
        );
        rows.push(row);
    }
    write_file(&out.join("bench.csv"), |w| {
        writeln!(w, "n,seconds_per_iter,iters,max_rank")?;
        for r in &rows {
            writeln!(w, "{},{:.6e},{},{}", r.n, r.seconds_per_iter, r.iterations, r.max_rank)?;
        }
        Ok(())
    })?;
    write_file(&out.join("storage.csv"), |w| {
        writeln!(w, "n,coefficient_entries,operator_entries,dense_entries,peak_rss_kb")?;
        for r in &rows {
            let rss = r.peak_rss_kb.map_or(String::new(), |v| v.to_string());
            writeln!(w, "{},{},{},{:.6e},{}", r.n, r.coefficient_entries, r.operator_entries, r.dense_entries, rss)?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn output(out: &Option<PathBuf>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => write_file(path, body),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)
        }
    }
}

fn eig(a: EigArgs) -> Result<i32> {
    let n = grid_size(a.n)?;
    let coef = Coefficient1D::parse(&a.coef, a.allow_degenerate)?;
    let e = SturmLiouville1D::assemble(&coef, n, a.boundary)?.eigen()?;
    output(&a.out, |w| {
        writeln!(w, "index,eigenvalue")?;
        for (i, v) in e.values.iter().enumerate() {
            writeln!(w, "{i},{v:.17e}")?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn op(a: OpArgs) -> Result<i32> {
    let args = a.problem;
    let points = args.points()?;
    let [pt] = points.as_slice() else {
        return Err(usage("op takes one n, alpha and gamma"));
    };
    let f = match a.func.as_str() {
        "f1" => SpectralFunction::power(pt.alpha)?,
        "f2" => SpectralFunction::lagrange(pt.alpha, args.beta, pt.gamma)?,
        "f3" => SpectralFunction::lagrange_inverse(pt.alpha, args.beta, pt.gamma)?,
        other => return Err(usage(format!("--func {other}: expected f1, f2 or f3"))),
    };
    let p = args.problem(pt)?;
    if a.op_rank_cap == 0 {
        return Err(usage("--op-rank-cap must be positive"));
    }
    let start = Instant::now();
    let modes =
        p.n.iter()
            .zip(&p.coefficients)
            .map(|(&n, c)| Mode::sturm_liouville(c, n, p.boundary))
            .collect::<Result<Vec<_>>>()?;
    let grid = CoefficientGrid::new(modes.iter().map(|m| m.eigenvalues.clone()).collect(), f)?;
    let t = compress_coefficient_tensor(&grid, p.op_eps, a.op_rank_cap)?;
    let seconds = start.elapsed().as_secs_f64();
    if let Some(path) = &a.out {
        save_canon(path, &t)?;
    }
    let mut line = format!("{} rank {} at eps {:e}, {:.2} s", a.func, t.rank(), p.op_eps, seconds);
    if let Some(s) = a.validate {
        let mut rng = StdRng::seed_from_u64(args.seed);
        let mut worst: f64 = 0.0;
        for _ in 0..s {
            let idx: Vec<usize> = p.n.iter().map(|&n| rng.random_range(0..n)).collect();
            let exact = grid.entry(&idx);
            worst = worst.max((t.entry(&idx) - exact).abs() / exact.abs());
        }
        line.push_str(&format!(", max relative error {worst:.3e} over {s} entries"));
    }
    println!("{line}");
    Ok(0)
}

fn precond(a: PrecondArgs) -> Result<i32> {
    let args = a.problem;
    let points = args.points()?;
    let [pt] = points.as_slice() else {
        return Err(usage("precond takes one n, alpha and gamma"));
    };
    let p = args.problem(pt)?;
    let asm = p.assemble()?;
    let unknowns: usize = p.n.iter().product();
    let condition =
        if unknowns <= 10_000 { Some(estimate_condition(&asm.precond, &asm.forward)?.condition()) } else { None };
    let c = &asm.aniso;
    let bound = c.analytic_bound(p.alpha);
    println!(
        "{} preconditioner rank {}{}, q {:.4}, bound {}, condition {}",
        p.precond.kind.as_str(),
        asm.precond.rank(),
        if asm.precond_capped { " (capped)" } else { "" },
        c.q,
        bound.map_or("none".into(), |b| format!("{b:.4}")),
        condition.map_or("not computed".into(), |k| format!("{k:.4}"))
    );
    if a.report || a.out.is_some() {
        let out = if a.report && a.out.is_none() { None } else { a.out.clone() };
        output(&out, |w| {
            writeln!(w, "quantity,value")?;
            for l in 0..c.b0.len() {
                writeln!(w, "b0_{},{}", l + 1, c.b0[l])?;
                writeln!(w, "a_min_{},{}", l + 1, c.min[l])?;
                writeln!(w, "a_max_{},{}", l + 1, c.max[l])?;
            }
            writeln!(w, "q,{}", c.q)?;
            writeln!(w, "analytic_bound,{}", bound.map_or(String::new(), |b| b.to_string()))?;
            writeln!(w, "rank,{}", asm.precond.rank())?;
            writeln!(w, "capped,{}", asm.precond_capped)?;
            writeln!(w, "condition,{}", condition.map_or(String::new(), |k| k.to_string()))?;
            Ok(())
        })?;
    }
    Ok(0)
}

fn axis_index(s: &str) -> Result<usize> {
    match s {
        "x" | "0" => Ok(0),
        "y" | "1" => Ok(1),
        "z" | "2" => Ok(2),
        _ => Err(usage(format!("--axis {s}: expected x, y or z"))),
    }
}

/// The 2D section of `t` with `axis` fixed at `index`, computed from the
/// factors (a 3D tensor is never densified).
pub fn slice_matrix(t: &CanonicalTensor, axis: Option<usize>, index: usize) -> Result<Vec<Vec<f64>>> {
    let shape = t.shape().to_vec();
    let (rows, cols, fixed) = match (shape.len(), axis) {
        (2, None) => (0, 1, None),
        (3, Some(ax)) if ax < 3 => {
            if index >= shape[ax] {
                return Err(usage(format!("--index {index} outside 0..{}", shape[ax])));
            }
            let free: Vec<usize> = (0..3).filter(|&l| l != ax).collect();
            (free[0], free[1], Some(ax))
        }
        (3, _) => return Err(usage("3D slices need --axis x|y|z and --index")),
        (d, _) => return Err(usage(format!("cannot slice a {d}-way tensor"))),
    };
    let mut idx = vec![0; shape.len()];
    if let Some(ax) = fixed {
        idx[ax] = index;
    }
    Ok((0..shape[rows])
        .map(|i| {
            (0..shape[cols])
                .map(|j| {
                    let mut at = idx.clone();
                    at[rows] = i;
                    at[cols] = j;
                    t.entry(&at)
                })
                .collect()
        })
        .collect())
}

fn slice(a: SliceArgs) -> Result<i32> {
    let t = load_canon(&a.file)?;
    let axis = a.axis.as_deref().map(axis_index).transpose()?;
    if t.shape().len() == 3 && a.index.is_none() {
        return Err(usage("3D slices need --index"));
    }
    let m = slice_matrix(&t, axis, a.index.unwrap_or(0))?;
    output(&a.out, |w| {
        for row in &m {
            writeln!(w, "{}", row.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(","))?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn eval(a: EvalArgs) -> Result<i32> {
    let t = load_canon(&a.file)?;
    let d = t.shape().len();
    let lists = [&a.i, &a.j, &a.k];
    let given = lists.iter().take_while(|l| !l.is_empty()).count();
    if given != d || lists[given..].iter().any(|l| !l.is_empty()) {
        return Err(usage(format!("a {d}-way tensor needs exactly {}", ["--i", "--j", "--k"][..d].join(" "))));
    }
    let count = lists[0].len();
    if lists[..d].iter().any(|l| l.len() != count) {
        return Err(usage("--i, --j and --k need the same number of values"));
    }
    for e in 0..count {
        let idx: Vec<usize> = lists[..d].iter().map(|l| l[e]).collect();
        if let Some(l) = (0..d).find(|&l| idx[l] >= t.shape()[l]) {
            return Err(usage(format!("index {} outside 0..{} in direction {l}", idx[l], t.shape()[l])));
        }
        println!("{:.17e}", t.entry(&idx));
    }
    Ok(0)
}

fn validate(a: ValidateArgs) -> Result<i32> {
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let start = Instant::now();
    let outcomes = invariants::run_all(a.trials, a.seed)?;
    let mut failed = 0;
    for c in &outcomes {
        let status = if c.passed() { "ok" } else { "FAIL" };
        println!("{status:4} {:22} max error {:.3e} (tolerance {:.1e})", c.name, c.max_error, c.tolerance);
        failed += usize::from(!c.passed());
    }
    if let Some(path) = &a.out {
        write_file(path, |w| {
            writeln!(w, "check,trials,max_error,tolerance,passed")?;
            for c in &outcomes {
                writeln!(w, "{},{},{:e},{:e},{}", c.name, c.trials, c.max_error, c.tolerance, c.passed())?;
            }
            Ok(())
        })?;
    }
    println!("{} of {} checks passed, {:.1} s", outcomes.len() - failed, outcomes.len(), start.elapsed().as_secs_f64());
    Ok(if failed == 0 { 0 } else { 2 })
}
