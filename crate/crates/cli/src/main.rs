mod problem;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use lti_opacity::affine::{solve_affine, warm_start_from_structured, AffineConfig, AffineStatus};
use lti_opacity::structured::{approx_min_norm_at_s, norm_surface, solve_structured, ApproxConfig};
use lti_opacity::{AffinePattern, PencilZeros, SolveError, SparsityPattern, StructuredConfig, StructuredPattern};
use serde_json::{json, Value};

use problem::{parse_problem, Problem, ProblemError};
use report::{cells_json, complex_json, matrix_json, verification, Orientation};

/// Thread count for the solvers' parallel loops.
const THREADS_ENV: &str = "LTI_OPACITY_THREADS";

#[derive(Parser)]
#[command(name = "lti-opacity", version, about = "Minimum-norm sparse perturbations that create invariant zeros")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invariant zeros of the system.
    Zeros { problem: PathBuf },
    /// Weakly unobservable subspace: dimension and basis.
    Wus { problem: PathBuf },
    /// Global minimum over s for a row/column pattern.
    SolveStructured {
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterative rank relaxation for a cell pattern.
    SolveAffine {
        problem: PathBuf,
        /// Start from the structured optimum on the cells' bounding rows and columns.
        #[arg(long)]
        warm_start_structured: bool,
        /// Use tau = 1e-5 regardless of the problem file.
        #[arg(long)]
        fast: bool,
        /// Write the convergence history as CSV (k,F,norm,lambda,mu).
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimum norm over a rectangular grid of s, as CSV (re,im,norm).
    Surface {
        problem: PathBuf,
        /// re_min,re_max,im_min,im_max
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        region: Vec<f64>,
        /// Points along the real and imaginary axes.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank and WUS check of a perturbation given as JSON ({"delta": ..., "s": [re, im]}
    /// or a solve result).
    Verify {
        problem: PathBuf,
        #[arg(long)]
        delta: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Infeasible(String),
    NotConverged(String, Option<Value>),
}

impl From<ProblemError> for Failure {
    fn from(e: ProblemError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Infeasible(_) | SolveError::InfeasiblePattern(_) => Failure::Infeasible(e.to_string()),
            SolveError::System(_) | SolveError::Pattern(_) => Failure::Input(e.to_string()),
            _ => Failure::NotConverged(e.to_string(), None),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(m)) => {
            eprintln!("infeasible: {m}");
            ExitCode::from(3)
        }
        Err(Failure::NotConverged(m, partial)) => {
            if let Some(p) = partial {
                println!("{}", serde_json::to_string_pretty(&p).expect("serializable"));
            }
            eprintln!("not converged: {m}");
            ExitCode::from(4)
        }
    }
}

fn emit(v: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn structured_pattern(p: &Option<SparsityPattern>) -> Result<StructuredPattern, Failure> {
    match p {
        Some(SparsityPattern::Structured(s)) => Ok(s.clone()),
        Some(SparsityPattern::Affine(a)) => a
            .as_structured()
            .ok_or_else(|| Failure::Input("affine cells do not form a full row/column block".into())),
        None => Err(Failure::Input("this command needs a \"pattern\"".into())),
    }
}

fn affine_pattern(p: &Option<SparsityPattern>) -> Result<AffinePattern, Failure> {
    match p {
        Some(SparsityPattern::Affine(a)) => Ok(a.clone()),
        Some(SparsityPattern::Structured(s)) => Ok(AffinePattern::from_structured(s)),
        None => Err(Failure::Input("this command needs a \"pattern\"".into())),
    }
}

fn header(command: &str, path: &Path, orient: &Orientation) -> Value {
    json!({
        "command": command,
        "problem": path.display().to_string(),
        "orientation": orient.json(),
    })
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Zeros { problem } => {
            let p = parse_problem(&problem)?;
            let (sys, _) = p.working();
            let orient = Orientation::of(&sys);
            let mut v = header("zeros", &problem, &orient);
            v["zeros"] = match sys.invariant_zeros_with(p.options.rank_tol, p.options.seed) {
                PencilZeros::All => json!("all"),
                PencilZeros::Finite(z) => Value::Array(z.iter().map(|&s| complex_json(s)).collect()),
            };
            emit(&v, None)
        }
        Command::Wus { problem } => {
            let p = parse_problem(&problem)?;
            let (sys, _) = p.working();
            let orient = Orientation::of(&sys);
            let w = sys.weakly_unobservable_subspace_with(p.options.rank_tol);
            let mut v = header("wus", &problem, &orient);
            v["dimension"] = json!(w.dim());
            v["basis"] = matrix_json(&w.basis);
            v["iterations"] = json!(w.iterations);
            v["opaque"] = json!(w.dim() > 0);
            emit(&v, None)
        }
        Command::SolveStructured { problem, out } => {
            let p = parse_problem(&problem)?;
            let v = solve_structured_cmd(&p, &problem)?;
            emit(&v, out.as_deref())
        }
        Command::SolveAffine { problem, warm_start_structured, fast, history, out } => {
            let p = parse_problem(&problem)?;
            solve_affine_cmd(&p, &problem, warm_start_structured, fast, history.as_deref(), out.as_deref())
        }
        Command::Surface { problem, region, grid, out } => {
            let p = parse_problem(&problem)?;
            let (sys, pat) = p.working();
            let pat = structured_pattern(&pat)?;
            if region.len() != 4 || grid.len() != 2 {
                return Err(Failure::Input("--region takes four numbers and --grid two".into()));
            }
            if region[0] > region[1] || region[2] > region[3] {
                return Err(Failure::Input("--region must be re_min,re_max,im_min,im_max".into()));
            }
            // transposing Λ_s and Δ together leaves the norm unchanged
            let pts = norm_surface(&sys, &pat, (region[0], region[1]), (region[2], region[3]), (grid[0], grid[1]));
            let mut text = String::from("re,im,norm\n");
            for pt in pts {
                let norm = pt.norm.map(|v| v.to_string()).unwrap_or_default();
                text.push_str(&format!("{},{},{}\n", pt.s.re, pt.s.im, norm));
            }
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Input(e.to_string())),
            }
        }
        Command::Verify { problem, delta } => {
            let p = parse_problem(&problem)?;
            let (sys, _) = p.working();
            let orient = Orientation::of(&sys);
            let text = std::fs::read_to_string(&delta).map_err(|e| Failure::Input(format!("{}: {e}", delta.display())))?;
            let (d, s) = report::parse_delta(&text, &p.original)?;
            let d_work = orient.to_working(&d);
            let mut v = header("verify", &problem, &orient);
            let ver = verification(&sys, &d_work, s, &p.options);
            let opaque = ver["opaque"].as_bool().unwrap_or(false);
            v["verification"] = ver;
            v["summary"] = json!(if opaque { "opaque" } else { "not opaque" });
            emit(&v, None)
        }
    }
}

fn solve_structured_cmd(p: &Problem, path: &Path) -> Result<Value, Failure> {
    let t = Instant::now();
    let (sys, pat) = p.working();
    let orient = Orientation::of(&sys);
    let pat = structured_pattern(&pat)?;
    let cfg = StructuredConfig {
        theta_step: p.options.theta_step,
        rank_tol: p.options.rank_tol,
        seed: p.options.seed,
        s0: p.options.s0,
        ..Default::default()
    };
    let sol = solve_structured(&sys, &pat, &cfg)?;
    let approx_cfg = match p.options.epsilon {
        Some(e) => ApproxConfig::with_epsilon(e, ApproxConfig::for_system(&sys).delta_m),
        None => ApproxConfig::for_system(&sys),
    };
    let approx = match approx_min_norm_at_s(&sys, &pat, sol.s_star, &approx_cfg) {
        Ok(v) => json!({"epsilon": approx_cfg.epsilon, "delta_m": approx_cfg.delta_m, "norm": v}),
        Err(e) => json!({"epsilon": approx_cfg.epsilon, "delta_m": approx_cfg.delta_m, "error": e.to_string()}),
    };
    let delta = orient.to_original(&sol.delta_full);
    let delta_r = if orient.transposed { sol.delta_r.transpose() } else { sol.delta_r.clone() };
    let mut v = header("solve-structured", path, &orient);
    v["solution"] = json!({
        "s": complex_json(sol.s_star),
        "norm": sol.norm,
        "gamma": sol.gamma_star,
        "delta": matrix_json(&delta),
        "delta_r": matrix_json(&delta_r),
        "cells": cells_json(&delta, &p.original, |r, c| orient_cell(&orient, &pat, r, c)),
        "history": sol.history.iter().map(|(s, n)| json!([s.re, s.im, n])).collect::<Vec<_>>(),
    });
    v["approx_check"] = approx;
    v["verification"] = verification(&sys, &sol.delta_full, Some(sol.s_star), &p.options);
    v["timing_seconds"] = json!(t.elapsed().as_secs_f64());
    Ok(v)
}

/// Whether cell `(r, c)` of the original `[A B; C D]` is perturbable.
fn orient_cell(o: &Orientation, pat: &StructuredPattern, r: usize, c: usize) -> bool {
    let (r, c) = if o.transposed { (c, r) } else { (r, c) };
    pat.row_mask[r] && pat.col_mask[c]
}

fn solve_affine_cmd(
    p: &Problem,
    path: &Path,
    warm: bool,
    fast: bool,
    history: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let t = Instant::now();
    let (sys, pat) = p.working();
    let orient = Orientation::of(&sys);
    let pat = affine_pattern(&pat)?;
    let cfg = AffineConfig {
        tau: if fast { 1e-5 } else { p.options.tau },
        eps_zeta: p.options.eps_zeta,
        max_outer: p.options.max_outer,
        starts: p.options.starts,
        seed: p.options.seed,
        ..Default::default()
    };
    let mut v = header("solve-affine", path, &orient);
    let init = if warm {
        let rows: Vec<usize> = pat.cells.iter().map(|c| c.0).collect();
        let cols: Vec<usize> = pat.cells.iter().map(|c| c.1).collect();
        let rect = StructuredPattern::new(&rows, &cols, pat.total_rows, pat.total_cols)?;
        let scfg = StructuredConfig { theta_step: p.options.theta_step, rank_tol: p.options.rank_tol, seed: p.options.seed, s0: p.options.s0, ..Default::default() };
        let st = solve_structured(&sys, &rect, &scfg)?;
        let (d, l, m) = warm_start_from_structured(&st, &pat);
        v["warm_start"] = json!({
            "s": complex_json(st.s_star),
            "structured_norm": st.norm,
            "delta": matrix_json(&orient.to_original(&d)),
        });
        Some((d, l, m))
    } else {
        None
    };
    let sol = solve_affine(&sys, &pat, init, &cfg)?;
    if let Some(h) = history {
        let mut text = String::from("k,F,norm,lambda,mu\n");
        for it in &sol.f_history {
            text.push_str(&format!("{},{},{},{},{}\n", it.k, it.f, it.norm, it.lambda, it.mu));
        }
        std::fs::write(h, text).map_err(|e| Failure::Input(format!("{}: {e}", h.display())))?;
    }
    let delta = orient.to_original(&sol.delta);
    let cells: Vec<(usize, usize)> =
        pat.cells.iter().map(|&(r, c)| if orient.transposed { (c, r) } else { (r, c) }).collect();
    v["solution"] = json!({
        "s": complex_json(sol.s()),
        "lambda_mu": [sol.lambda_mu.0, sol.lambda_mu.1],
        "norm": sol.norm,
        "delta": matrix_json(&delta),
        "cells": cells_json(&delta, &p.original, |r, c| cells.contains(&(r, c))),
        "status": match sol.status { AffineStatus::Converged => "converged", AffineStatus::MaxIterations => "max-iterations" },
        "iterations": sol.f_history.len() - 1,
        "final_objective": sol.f_history.last().map(|h| h.f),
        "rank_gap": sol.rank_gap,
    });
    v["verification"] = verification(&sys, &sol.delta, Some(sol.s()), &p.options);
    v["timing_seconds"] = json!(t.elapsed().as_secs_f64());
    if sol.status == AffineStatus::MaxIterations {
        return Err(Failure::NotConverged(format!("stopped after {} outer iterations", cfg.max_outer), Some(v)));
    }
    emit(&v, out)
}
