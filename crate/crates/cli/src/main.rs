//! `crp`: solve, compare and generate multi-area dispatch cases.

mod trace;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crp_core::coordinator::{run_crp, CrpConfig, CrpRun, CrpStatus};
use crp_core::jed::{solve_jed, JedError, JedResult};
use crp_core::nalgebra::DVector;
use crp_core::netmodel::{load_case, random_case, random_case_file, MultiAreaSystem, RandomCaseSpec};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(name = "crp", version, about = "Multi-area DC economic dispatch by critical region projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case with JED or CRP.
    Solve(SolveArgs),
    /// Run both methods and report the cost delta.
    Compare(CompareArgs),
    /// Write a random case file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Jed,
    Crp,
}

#[derive(Args, Clone)]
struct CrpFlags {
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon1: f64,
    #[arg(long, default_value_t = 1e-4)]
    alpha: f64,
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,
    /// Comma-separated reduced boundary angles (rad); zeros when omitted.
    #[arg(long = "initial-theta")]
    initial_theta: Option<String>,
}

impl CrpFlags {
    fn config(&self) -> Result<CrpConfig, String> {
        let initial_theta = match &self.initial_theta {
            None => None,
            Some(s) => {
                let v: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
                Some(DVector::from_vec(v.map_err(|e| format!("--initial-theta: {e}"))?))
            }
        };
        Ok(CrpConfig {
            epsilon: self.epsilon,
            epsilon1: self.epsilon1,
            alpha: self.alpha,
            max_iter: self.max_iter,
            initial_theta,
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, value_enum, default_value = "crp")]
    method: Method,
    #[command(flatten)]
    crp: CrpFlags,
    /// Per-iteration CSV trace (CRP only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, conflicts_with = "seeds", required_unless_present = "seeds")]
    case: Option<PathBuf>,
    /// Inclusive seed range such as `1..50`, for generated cases.
    #[arg(long)]
    seeds: Option<Range>,
    #[arg(long, default_value_t = 2)]
    areas: usize,
    #[arg(long, default_value = "4..20")]
    buses: Range,
    /// Largest accepted relative cost delta.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[command(flatten)]
    crp: CrpFlags,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    areas: usize,
    /// Buses per area: `N` or `MIN..MAX`.
    #[arg(long)]
    buses: Range,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Inclusive integer range written `N` or `A..B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Range {
    lo: u64,
    hi: u64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("`{t}`: {e}"));
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let n = parse(s)?;
                (n, n)
            }
        };
        if lo > hi {
            return Err(format!("empty range {s}"));
        }
        Ok(Range { lo, hi })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors share the input-error code
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Gen(a) => cmd_gen(&a),
    };
    ExitCode::from(code)
}

fn load(path: &Path) -> Result<MultiAreaSystem, u8> {
    load_case(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_INPUT
    })
}

fn crp_exit(status: CrpStatus) -> u8 {
    match status {
        CrpStatus::Converged => EXIT_OK,
        CrpStatus::Infeasible => EXIT_INFEASIBLE,
        CrpStatus::MaxIter | CrpStatus::StepUnderflow => EXIT_NOT_CONVERGED,
    }
}

fn status_name(s: CrpStatus) -> &'static str {
    match s {
        CrpStatus::Converged => "converged",
        CrpStatus::MaxIter => "max_iter",
        CrpStatus::Infeasible => "infeasible",
        CrpStatus::StepUnderflow => "step_underflow",
    }
}

fn run_crp_timed(system: &MultiAreaSystem, flags: &CrpFlags) -> Result<(CrpRun, f64), u8> {
    let config = flags.config().map_err(|e| {
        eprintln!("error: {e}");
        EXIT_INPUT
    })?;
    let t0 = Instant::now();
    let run = run_crp(system, &config).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_INPUT
    })?;
    Ok((run, t0.elapsed().as_secs_f64() * 1e3))
}

fn run_jed_timed(system: &MultiAreaSystem) -> (Result<JedResult, JedError>, f64) {
    let t0 = Instant::now();
    let r = solve_jed(system);
    (r, t0.elapsed().as_secs_f64() * 1e3)
}

fn print_jed(j: &JedResult, system: &MultiAreaSystem, ms: f64) {
    println!("method      jed");
    println!("status      optimal");
    println!("cost        {:.6} $/h", j.cost);
    println!("wall_time   {ms:.3} ms");
    for (k, f) in j.tie_flows.iter().enumerate() {
        println!("tie {k:<7} {:.6} MW", f * system.base_mva);
    }
    if j.binding.is_empty() {
        println!("binding     none");
    } else {
        println!("binding");
        for b in &j.binding {
            println!("  {b}");
        }
    }
}

fn print_crp(run: &CrpRun, system: &MultiAreaSystem, ms: f64, trace: Option<&Path>) {
    println!("method      crp");
    println!("status      {}", status_name(run.status));
    if run.final_cost.is_finite() {
        println!("cost        {:.6} $/h", run.final_cost);
    } else {
        println!("cost        n/a");
    }
    println!("iterations  {}", run.iterations.len());
    println!("floats_up   {}", run.floats_up());
    println!("floats_down {}", run.floats_down());
    println!("wall_time   {ms:.3} ms");
    let theta: Vec<String> = run.final_theta.iter().map(|v| format!("{v:.9}")).collect();
    println!("theta       [{}]", theta.join(", "));
    for k in 0..system.tie_lines.len() {
        println!(
            "tie {k:<7} {:.6} MW",
            system.tie_flow(k, run.final_theta.as_slice()) * system.base_mva
        );
    }
    match run.step_bound {
        Some(b) => println!("step_bound  {b:.6e}"),
        None => println!("step_bound  unbounded"),
    }
    if let Some(p) = trace {
        println!("trace       {}", p.display());
    }
    for w in &run.warnings {
        println!("warning     {w}");
    }
}

fn cmd_solve(a: &SolveArgs) -> u8 {
    let system = match load(&a.case) {
        Ok(s) => s,
        Err(c) => return c,
    };
    match a.method {
        Method::Jed => match run_jed_timed(&system) {
            (Ok(j), ms) => {
                print_jed(&j, &system, ms);
                EXIT_OK
            }
            (Err(JedError::Infeasible(v)), _) => {
                println!("method      jed");
                println!("status      infeasible (violation {v:.3e})");
                EXIT_INFEASIBLE
            }
            (Err(e), _) => {
                eprintln!("error: {e}");
                EXIT_NOT_CONVERGED
            }
        },
        Method::Crp => {
            let (run, ms) = match run_crp_timed(&system, &a.crp) {
                Ok(r) => r,
                Err(c) => return c,
            };
            if let Some(p) = &a.trace {
                if let Err(e) = trace::write(p, &run) {
                    eprintln!("error: {}: {e}", p.display());
                    return EXIT_INPUT;
                }
            }
            print_crp(&run, &system, ms, a.trace.as_deref());
            crp_exit(run.status)
        }
    }
}

struct Comparison {
    code: u8,
    line: String,
}

fn compare_one(system: &MultiAreaSystem, flags: &CrpFlags, tolerance: f64, verbose: bool) -> Comparison {
    let (jed, jed_ms) = run_jed_timed(system);
    let (run, crp_ms) = match run_crp_timed(system, flags) {
        Ok(r) => r,
        Err(code) => {
            return Comparison {
                code,
                line: "crp failed".into(),
            }
        }
    };
    let jed = match jed {
        Ok(j) => j,
        Err(JedError::Infeasible(_)) => {
            return Comparison {
                code: EXIT_INFEASIBLE,
                line: format!("jed infeasible, crp {}", status_name(run.status)),
            }
        }
        Err(e) => {
            return Comparison {
                code: EXIT_NOT_CONVERGED,
                line: format!("jed failed: {e}"),
            }
        }
    };
    let delta = run.final_cost - jed.cost;
    let rel = delta.abs() / jed.cost.abs().max(f64::MIN_POSITIVE);
    if verbose {
        println!("{:<12} {:>18} {:>18}", "", "jed", "crp");
        println!("{:<12} {:>18.6} {:>18.6}", "cost $/h", jed.cost, run.final_cost);
        println!("{:<12} {:>18} {:>18}", "iterations", "-", run.iterations.len());
        println!("{:<12} {:>18} {:>18}", "floats_up", "-", run.floats_up());
        println!("{:<12} {:>18} {:>18}", "floats_down", "-", run.floats_down());
        println!("{:<12} {:>18.3} {:>18.3}", "wall ms", jed_ms, crp_ms);
        println!("{:<12} {:>18} {:>18}", "status", "optimal", status_name(run.status));
        println!("delta       {delta:.6e} $/h (relative {rel:.3e}, tolerance {tolerance:.1e})");
    }
    let code = if run.status != CrpStatus::Converged {
        crp_exit(run.status)
    } else if rel.is_nan() || rel > tolerance {
        EXIT_MISMATCH
    } else {
        EXIT_OK
    };
    Comparison {
        code,
        line: format!(
            "jed {:.6} crp {:.6} rel {rel:.3e} iterations {} status {}",
            jed.cost,
            run.final_cost,
            run.iterations.len(),
            status_name(run.status)
        ),
    }
}

fn cmd_compare(a: &CompareArgs) -> u8 {
    if let Some(path) = &a.case {
        let system = match load(path) {
            Ok(s) => s,
            Err(c) => return c,
        };
        return compare_one(&system, &a.crp, a.tolerance, true).code;
    }
    let seeds = a.seeds.expect("clap requires --case or --seeds");
    let mut worst = EXIT_OK;
    let mut passed = 0;
    let total = seeds.hi - seeds.lo + 1;
    for seed in seeds.lo..=seeds.hi {
        let spec = RandomCaseSpec::new(a.areas, a.buses.lo as usize, a.buses.hi as usize, seed);
        let c = match random_case(&spec) {
            Ok(system) => compare_one(&system, &a.crp, a.tolerance, false),
            Err(e) => Comparison {
                code: EXIT_INPUT,
                line: format!("generation failed: {e}"),
            },
        };
        let verdict = if c.code == EXIT_OK { "pass" } else { "FAIL" };
        println!("seed {seed:>5}  {verdict}  {}", c.line);
        if c.code == EXIT_OK {
            passed += 1;
        }
        worst = worst.max(c.code);
    }
    println!("{passed}/{total} pass");
    worst
}

fn cmd_gen(a: &GenArgs) -> u8 {
    let spec = RandomCaseSpec::new(a.areas, a.buses.lo as usize, a.buses.hi as usize, a.seed);
    let file = match random_case_file(&spec) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let mut text = serde_json::to_string_pretty(&file).expect("case files serialize");
    text.push('\n');
    if let Err(e) = std::fs::write(&a.out, text) {
        eprintln!("error: {}: {e}", a.out.display());
        return EXIT_INPUT;
    }
    println!("wrote {}", a.out.display());
    EXIT_OK
}
