use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    existence_check_tol, feasible_almost_everywhere, finite_candidate_set, min_norm_at_s_tol, perturbation_at_s_tol,
    sigma_at_fixed_gamma, Feasibility, StructuredConfig, StructuredSolution,
};
use crate::error::SolveError;
use crate::linalg::{max_abs, nullspace_basis, RMat, DEFAULT_RANK_TOL};
use crate::optim::{brent_root, golden_min};
use crate::par_map;
use crate::pencil::PencilZeros;
use crate::sparsity::{expand, StructuredPattern};
use crate::system::StateSpaceSystem;

/// Snapshot of the ray search after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetState {
    pub iteration: usize,
    /// Angles still carrying an improving region.
    pub theta_set: Vec<f64>,
    /// Per retained angle, the `|s|` intervals whose trial point improved.
    pub regions: Vec<Vec<(f64, f64)>>,
    pub incumbent: (Complex64, f64, f64),
}

/// All `r ≥ 0` with `σ_{2t−1}(Π(γ, Λ^α Q₂), Π(γ, Q₂^α)) = target` at `s = r·e^{jθ}`.
pub fn ray_level_set(sys: &StateSpaceSystem, pat: &StructuredPattern, theta: f64, target: f64, gamma: f64) -> Vec<f64> {
    ray_level_set_tol(sys, pat, theta, target, gamma, DEFAULT_RANK_TOL)
}

pub fn ray_level_set_tol(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    theta: f64,
    target: f64,
    gamma: f64,
    tol: f64,
) -> Vec<f64> {
    let dir = Complex64::from_polar(1.0, theta);
    let g = |r: f64| -> f64 { sigma_at_fixed_gamma(sys, pat, dir * r, gamma, tol).map_or(f64::NAN, |v| v - target) };

    let mut rmax = 10.0 * (1.0 + max_abs(&sys.lambda0()));
    for _ in 0..60 {
        if g(rmax) >= 0.0 {
            break;
        }
        rmax *= 10.0;
    }
    let mut rs: Vec<f64> = vec![0.0];
    rs.extend((1..=128).map(|i| rmax * i as f64 / 128.0));
    rs.extend((0..=96).map(|i| rmax * 10f64.powf(-12.0 + 12.0 * i as f64 / 96.0)));
    rs.sort_by(f64::total_cmp);
    rs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs());
    let vs: Vec<f64> = rs.iter().map(|&r| g(r)).collect();

    let root_in = |a: f64, b: f64| brent_root(g, a, b, 1e-15 * b.abs().max(1e-300));
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..rs.len() {
        if vs[i] == 0.0 {
            roots.push(rs[i]);
        }
        if i + 1 < rs.len() && vs[i].is_finite() && vs[i + 1].is_finite() && vs[i] * vs[i + 1] < 0.0 {
            if let Some(r) = root_in(rs[i], rs[i + 1]) {
                roots.push(r);
            }
        }
    }
    // a dip or bump that touches the target between two samples of equal sign
    for i in 1..rs.len().saturating_sub(1) {
        let (a, b, c) = (vs[i - 1], vs[i], vs[i + 1]);
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            continue;
        }
        let sign = if b > 0.0 && b < a && b < c {
            1.0
        } else if b < 0.0 && b > a && b > c {
            -1.0
        } else {
            continue;
        };
        if b.abs() > 0.5 * target {
            continue;
        }
        let h = |r: f64| sign * g(r);
        let Some((rstar, hv)) = golden_min(h, rs[i - 1], rs[i + 1], 1e-12) else { continue };
        if hv < 0.0 {
            if let Some(r) = root_in(rs[i - 1], rstar) {
                roots.push(r);
            }
            if let Some(r) = root_in(rstar, rs[i + 1]) {
                roots.push(r);
            }
        }
    }
    let mut out: Vec<f64> = roots
        .into_iter()
        .filter(|&r| {
            let v = g(r);
            v.is_finite() && v.abs() <= 1e-8 * target
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * b.abs().max(1e-300));
    out
}

/// Per ray: improving regions and the best improving trial point.
fn ray_step(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    theta: f64,
    incumbent: f64,
    gamma: f64,
    tol: f64,
) -> (Vec<(f64, f64)>, Option<(f64, Complex64, f64)>) {
    let roots = ray_level_set_tol(sys, pat, theta, incumbent, gamma, tol);
    let mut bounds = vec![0.0];
    bounds.extend(roots.iter().copied().filter(|&r| r > 0.0));
    let mut trials: Vec<(f64, f64, f64)> = bounds.windows(2).map(|w| (w[0], w[1], 0.5 * (w[0] + w[1]))).collect();
    if let Some(&last) = bounds.last() {
        if last > 0.0 {
            trials.push((last, f64::INFINITY, 2.0 * last));
        }
    }
    let dir = Complex64::from_polar(1.0, theta);
    let mut regions = Vec::new();
    let mut best: Option<(f64, Complex64, f64)> = None;
    for (a, b, r) in trials {
        let s = dir * r;
        if let Ok((v, g)) = min_norm_at_s_tol(sys, pat, s, tol) {
            if v < incumbent {
                regions.push((a, b));
                if best.is_none_or(|bb| v < bb.0) {
                    best = Some((v, s, g));
                }
            }
        }
    }
    (regions, best)
}

fn zero_solution(sys: &StateSpaceSystem, pat: &StructuredPattern, s: Complex64) -> Result<StructuredSolution, SolveError> {
    let (q, r) = (pat.rows().len(), pat.cols().len());
    let null = nullspace_basis(&sys.lambda_pencil(s));
    let d = if null.ncols() > 0 { null.columns(0, 1).into_owned() } else { null };
    Ok(StructuredSolution {
        s_star: s,
        norm: 0.0,
        delta_r: RMat::zeros(q, r),
        delta_full: expand(&RMat::zeros(q, r), pat)?,
        d,
        gamma_star: 1.0,
        history: vec![(s, 0.0)],
    })
}

pub fn solve_structured(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    cfg: &StructuredConfig,
) -> Result<StructuredSolution, SolveError> {
    solve_structured_traced(sys, pat, cfg, |_| {})
}

/// Ray/level-set search for `inf_s ‖Δ*_s‖`, reporting each iteration.
pub fn solve_structured_traced(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    cfg: &StructuredConfig,
    mut observe: impl FnMut(&LevelSetState),
) -> Result<StructuredSolution, SolveError> {
    if sys.m() < sys.p() {
        return Err(SolveError::System("normalize the orientation first (m < p)".into()));
    }
    let tol = cfg.rank_tol;
    match sys.invariant_zeros_with(tol, cfg.seed) {
        PencilZeros::All => return zero_solution(sys, pat, cfg.s0),
        PencilZeros::Finite(z) if !z.is_empty() => {
            let s = *z
                .iter()
                .min_by(|a, b| a.norm().total_cmp(&b.norm()).then(b.im.total_cmp(&a.im)))
                .expect("nonempty");
            return zero_solution(sys, pat, s);
        }
        _ => {}
    }

    if !feasible_almost_everywhere(sys, pat, tol, cfg.seed) {
        let cands = finite_candidate_set(sys, pat, tol, cfg.seed)?;
        let mut best: Option<(f64, Complex64)> = None;
        for &s in &cands {
            if let Ok((v, _)) = min_norm_at_s_tol(sys, pat, s, tol.max(1e-7)) {
                let better = match best {
                    None => true,
                    Some((bv, bs)) => {
                        v < bv * (1.0 - 1e-12) || (v <= bv * (1.0 + 1e-12) && (s.im > bs.im))
                    }
                };
                if better {
                    best = Some((v, s));
                }
            }
        }
        let (_, s) = best.ok_or_else(|| SolveError::InfeasiblePattern("no candidate admits a solution".into()))?;
        let mut sol = perturbation_at_s_tol(sys, pat, s, tol.max(1e-7))?;
        sol.history = vec![(s, sol.norm)];
        return Ok(sol);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1e5e);
    let scale = 1.0 + max_abs(&sys.lambda0());
    let mut s_k = cfg.s0;
    let mut start = min_norm_at_s_tol(sys, pat, s_k, tol);
    for _ in 0..100 {
        if start.is_ok() {
            break;
        }
        s_k = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)) * scale;
        if existence_check_tol(sys, pat, s_k, tol) == Feasibility::Feasible {
            start = min_norm_at_s_tol(sys, pat, s_k, tol);
        }
    }
    let (mut norm_k, mut gamma_k) = start?;
    let mut history = vec![(s_k, norm_k)];
    let count = (2.0 * PI / cfg.theta_step).ceil() as usize;
    let mut thetas: Vec<f64> = (0..count).map(|k| k as f64 * cfg.theta_step).filter(|&t| t < 2.0 * PI).collect();

    for iteration in 1..=cfg.max_iter {
        let (nk, gk) = (norm_k, gamma_k);
        let results = par_map(&thetas, |&th| ray_step(sys, pat, th, nk, gk, tol));
        let mut best: Option<(f64, Complex64, f64)> = None;
        let mut kept = Vec::new();
        let mut regions = Vec::new();
        for (th, (reg, b)) in thetas.iter().zip(results) {
            if reg.is_empty() {
                continue;
            }
            kept.push(*th);
            regions.push(reg);
            if let Some(b) = b {
                if best.is_none_or(|bb| b.0 < bb.0) {
                    best = Some(b);
                }
            }
        }
        let Some((v, s, g)) = best else { break };
        let improvement = (norm_k - v) / norm_k;
        norm_k = v;
        s_k = s;
        gamma_k = g;
        history.push((s_k, norm_k));
        thetas = kept;
        observe(&LevelSetState {
            iteration,
            theta_set: thetas.clone(),
            regions,
            incumbent: (s_k, norm_k, gamma_k),
        });
        if thetas.len() <= 1 || improvement < cfg.rel_tol {
            break;
        }
    }
    let mut sol = perturbation_at_s_tol(sys, pat, s_k, tol)?;
    sol.history = history;
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub s: Complex64,
    /// `None` where no solution exists.
    pub norm: Option<f64>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `min_norm_at_s` over a rectangle; real part varies slowest.
pub fn norm_surface(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    re: (f64, f64),
    im: (f64, f64),
    grid: (usize, usize),
) -> Vec<SurfacePoint> {
    let pts: Vec<Complex64> = linspace(re.0, re.1, grid.0)
        .into_iter()
        .flat_map(|x| linspace(im.0, im.1, grid.1).into_iter().map(move |y| Complex64::new(x, y)))
        .collect();
    par_map(&pts, |&s| SurfacePoint { s, norm: min_norm_at_s_tol(sys, pat, s, DEFAULT_RANK_TOL).ok().map(|v| v.0) })
}
