//! Structured (row/column mask) problem: fixed-`s` norm and perturbation,
//! finitely many feasible `s`, the ε-relaxation, and the ray search.

mod approx;
mod search;

pub use approx::{approx_min_norm_at_s, ApproxConfig};
pub use search::{
    norm_surface, ray_level_set, ray_level_set_tol, solve_structured, solve_structured_traced, LevelSetState, SurfacePoint,
};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{InfeasibleReason, SolveError};
use crate::linalg::{
    equilibrated_rank, gsvd_values, max_abs, nullspace_basis_tol, pi_unchecked, real_lift_solve, singular_values,
    CMat, RMat, DEFAULT_RANK_TOL,
};
use crate::optim::{golden_min, nelder_mead};
use crate::pencil::rank_drop_points;
use crate::sparsity::{expand, partition_lambda, StructuredPattern};
use crate::system::StateSpaceSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredConfig {
    /// Angular step of the initial ray set, radians.
    pub theta_step: f64,
    pub rank_tol: f64,
    pub seed: u64,
    pub s0: Complex64,
    pub max_iter: usize,
    /// Stop once the incumbent improves by less than this fraction.
    pub rel_tol: f64,
}

impl Default for StructuredConfig {
    fn default() -> Self {
        StructuredConfig {
            theta_step: 0.01,
            rank_tol: DEFAULT_RANK_TOL,
            seed: 0,
            s0: Complex64::new(1.0, 1.0),
            max_iter: 100,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredSolution {
    pub s_star: Complex64,
    pub norm: f64,
    pub delta_r: RMat,
    pub delta_full: RMat,
    /// Witness combination of the nullspace basis.
    pub d: CMat,
    pub gamma_star: f64,
    /// Incumbent `(s, norm)` after each accepted step of the ray search.
    pub history: Vec<(Complex64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible(InfeasibleReason),
}

/// `M = Λ^α Q₂`, `N = J Q₂` at one `s`.
#[derive(Debug, Clone)]
pub(crate) struct ReducedPair {
    pub q2: CMat,
    pub m: CMat,
    pub n: CMat,
}

impl ReducedPair {
    pub fn t(&self) -> usize {
        self.q2.ncols()
    }

    /// `σ_{2t−1}(Π(γ,M), Π(γ,N))`.
    pub fn sigma_at(&self, gamma: f64) -> f64 {
        let t = self.t();
        if self.m.nrows() < t {
            // more null directions than constraints: already rank deficient
            return 0.0;
        }
        let pm = pi_unchecked(gamma, &self.m);
        let pn = pi_unchecked(gamma, &self.n);
        match gsvd_values(&pm, &pn) {
            Ok(g) => g.sigma(2 * t - 1),
            Err(_) => f64::NAN,
        }
    }
}

pub(crate) fn reduced_pair(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    s: Complex64,
    tol: f64,
) -> Result<ReducedPair, SolveError> {
    let l = sys.lambda_pencil(s);
    let part = partition_lambda(&l, pat)?;
    let q2 = if part.lambda_beta.nrows() == 0 {
        CMat::identity(l.ncols(), l.ncols())
    } else {
        nullspace_basis_tol(&part.lambda_beta, tol)
    };
    if q2.ncols() == 0 {
        return Err(SolveError::Infeasible(InfeasibleReason::BetaFullRank));
    }
    let m = &part.lambda_alpha * &q2;
    let n = CMat::from_fn(part.cols.len(), q2.ncols(), |i, j| q2[(part.cols[i], j)]);
    if max_abs(&n) == 0.0 {
        return Err(SolveError::Infeasible(InfeasibleReason::NoPerturbableComponent));
    }
    Ok(ReducedPair { q2, m, n })
}

pub fn existence_check(sys: &StateSpaceSystem, pat: &StructuredPattern, s: Complex64) -> Feasibility {
    existence_check_tol(sys, pat, s, DEFAULT_RANK_TOL)
}

/// Both conditions for a solution at `s`: `rank(Λ^β) < n+p` and `Q₂^α ≠ 0`.
pub fn existence_check_tol(sys: &StateSpaceSystem, pat: &StructuredPattern, s: Complex64, tol: f64) -> Feasibility {
    let l = sys.lambda_pencil(s);
    let Ok(part) = partition_lambda(&l, pat) else {
        return Feasibility::Infeasible(InfeasibleReason::BetaFullRank);
    };
    let cols = l.ncols();
    if part.lambda_beta.nrows() == 0 {
        return Feasibility::Feasible;
    }
    let rb = equilibrated_rank(&part.lambda_beta, tol);
    if rb >= cols {
        return Feasibility::Infeasible(InfeasibleReason::BetaFullRank);
    }
    // a null vector reaches the perturbable columns iff appending J raises the rank
    let rows = part.lambda_beta.nrows();
    let jn = part.j.nrows();
    let mut stacked = CMat::zeros(rows + jn, cols);
    stacked.view_mut((0, 0), (rows, cols)).copy_from(&part.lambda_beta);
    let scale = max_abs(&part.lambda_beta).max(f64::MIN_POSITIVE);
    for (i, &c) in part.cols.iter().enumerate() {
        stacked[(rows + i, c)] = Complex64::new(scale, 0.0);
    }
    if equilibrated_rank(&stacked, tol) > rb {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible(InfeasibleReason::NoPerturbableComponent)
    }
}

/// Maximize over `γ ∈ (0, 1]`: a 200-point log grid on `[1e-6, 1]`, then a
/// golden-section refinement around the best grid point.
pub(crate) fn sup_over_gamma(f: impl Fn(f64) -> f64) -> (f64, f64) {
    const N: usize = 200;
    let lo = -6.0f64;
    let grid: Vec<f64> = (0..N).map(|i| lo - lo * i as f64 / (N - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&e| f(10f64.powf(e))).collect();
    let mut bi = 0;
    for i in 1..N {
        if vals[i] > vals[bi] {
            bi = i;
        }
    }
    let (mut best, mut bg) = (vals[bi], 10f64.powf(grid[bi]));
    if !best.is_finite() {
        return (best, bg);
    }
    let a = grid[bi.saturating_sub(1)];
    let b = grid[(bi + 1).min(N - 1)];
    if let Some((x, v)) = golden_min(|e| -f(10f64.powf(e)), a, b, 1e-9) {
        if -v > best {
            best = -v;
            bg = 10f64.powf(x).min(1.0);
        }
    }
    (best, bg)
}

/// `sup_γ σ_{2t−1}(Π(γ, Λ^α Q₂), Π(γ, Q₂^α))` and the maximizing `γ`.
pub fn min_norm_at_s(sys: &StateSpaceSystem, pat: &StructuredPattern, s: Complex64) -> Result<(f64, f64), SolveError> {
    min_norm_at_s_tol(sys, pat, s, DEFAULT_RANK_TOL)
}

pub fn min_norm_at_s_tol(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    s: Complex64,
    tol: f64,
) -> Result<(f64, f64), SolveError> {
    if let Feasibility::Infeasible(r) = existence_check_tol(sys, pat, s, tol) {
        return Err(SolveError::Infeasible(r));
    }
    let pair = reduced_pair(sys, pat, s, tol)?;
    let (v, g) = sup_over_gamma(|g| pair.sigma_at(g));
    if !v.is_finite() {
        return Err(SolveError::Infeasible(InfeasibleReason::NoPerturbableComponent));
    }
    Ok((v, g))
}

/// The σ-expression at a fixed `γ`; `None` where no solution exists.
pub fn sigma_at_fixed_gamma(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    s: Complex64,
    gamma: f64,
    tol: f64,
) -> Option<f64> {
    let pair = reduced_pair(sys, pat, s, tol).ok()?;
    let v = pair.sigma_at(gamma);
    v.is_finite().then_some(v)
}

fn delta_for(pair: &ReducedPair, d: &CMat) -> Option<(RMat, f64)> {
    let x = &pair.n * d;
    let y = &pair.m * d;
    let dr = real_lift_solve(&y, &x).ok()?;
    let xr = RMat::from_fn(x.nrows(), 2, |i, j| if j == 0 { x[i].re } else { x[i].im });
    let yr = RMat::from_fn(y.nrows(), 2, |i, j| if j == 0 { y[i].re } else { y[i].im });
    let res = (&dr * xr - &yr).norm() / yr.norm().max(f64::MIN_POSITIVE);
    Some((dr, res))
}

fn spectral(m: &RMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Minimum-norm perturbation at `s` together with its witness `d`.
pub fn perturbation_at_s(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    s: Complex64,
) -> Result<StructuredSolution, SolveError> {
    perturbation_at_s_tol(sys, pat, s, DEFAULT_RANK_TOL)
}

pub fn perturbation_at_s_tol(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    s: Complex64,
    tol: f64,
) -> Result<StructuredSolution, SolveError> {
    let (norm, gamma_star) = min_norm_at_s_tol(sys, pat, s, tol)?;
    let pair = reduced_pair(sys, pat, s, tol)?;
    let t = pair.t();
    let (q, r) = (pat.rows().len(), pat.cols().len());
    let zero_solution = |d: CMat| -> Result<StructuredSolution, SolveError> {
        Ok(StructuredSolution {
            s_star: s,
            norm: 0.0,
            delta_r: RMat::zeros(q, r),
            delta_full: expand(&RMat::zeros(q, r), pat)?,
            d,
            gamma_star,
            history: vec![],
        })
    };
    if norm == 0.0 {
        // s is already a zero: some combination of the basis is annihilated
        let null = nullspace_basis_tol(&pair.m, tol);
        let d = if null.ncols() > 0 { null.columns(0, 1).into_owned() } else { unit(t, 0) };
        return zero_solution(d);
    }
    let (d, dr) = if t == 1 {
        // a unit phase rotates X and Y together and cancels
        let d = unit(1, 0);
        let (dr, res) = delta_for(&pair, &d).ok_or_else(|| SolveError::WitnessSearch("degenerate direction".into()))?;
        if res > 1e-8 {
            return Err(SolveError::WitnessSearch(format!("residual {res:.2e}")));
        }
        (d, dr)
    } else {
        witness_search(&pair, norm, tol)?
    };
    let delta_full = expand(&dr, pat)?;
    Ok(StructuredSolution {
        s_star: s,
        norm: spectral(&dr),
        delta_r: dr,
        delta_full,
        d,
        gamma_star,
        history: vec![],
    })
}

fn unit(t: usize, k: usize) -> CMat {
    CMat::from_fn(t, 1, |i, _| if i == k { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
}

fn vec_to_d(v: &[f64]) -> CMat {
    let t = v.len() / 2;
    CMat::from_fn(t, 1, |i, _| Complex64::new(v[i], v[t + i]))
}

/// Multi-start search over `d ∈ ℂᵗ` for a feasible least-norm `Δ^r`.
fn witness_search(pair: &ReducedPair, norm: f64, _tol: f64) -> Result<(CMat, RMat), SolveError> {
    let t = pair.t();
    let objective = |v: &[f64]| -> f64 {
        let d = vec_to_d(v);
        let nd = d.norm();
        if nd == 0.0 {
            return f64::INFINITY;
        }
        match delta_for(pair, &d.unscale(nd)) {
            Some((dr, res)) => spectral(&dr) * (1.0 + 1e3 * res),
            None => f64::INFINITY,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x0d0d);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for k in 0..t {
        for ph in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(1.0, 1.0)] {
            let mut v = vec![0.0; 2 * t];
            v[k] = ph.re;
            v[t + k] = ph.im;
            starts.push(v);
        }
    }
    for _ in 0..16 {
        starts.push((0..2 * t).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for st in starts {
        let mut simplex = vec![st.clone()];
        for i in 0..st.len() {
            let mut p = st.clone();
            p[i] += 0.2;
            simplex.push(p);
        }
        let (p, v) = nelder_mead(objective, simplex, 3000, 1e-15);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((p, v));
        }
        if let Some(b) = &best {
            if b.1 <= norm * (1.0 + 1e-9) {
                break;
            }
        }
    }
    let (p, _) = best.expect("at least one start");
    let d = vec_to_d(&p);
    let d = d.unscale(d.norm());
    let (dr, res) = delta_for(pair, &d).ok_or_else(|| SolveError::WitnessSearch("degenerate direction".into()))?;
    if res > 1e-8 {
        return Err(SolveError::WitnessSearch(format!("residual {res:.2e}")));
    }
    let achieved = spectral(&dr);
    if achieved > norm * (1.0 + 1e-4) + 1e-14 {
        return Err(SolveError::WitnessSearch(format!("best witness norm {achieved} exceeds bound {norm}")));
    }
    Ok((d, dr))
}

/// Feasible `s` when the conditions hold only at isolated points.
pub fn finite_candidate_set(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    tol: f64,
    seed: u64,
) -> Result<Vec<Complex64>, SolveError> {
    let l0 = sys.lambda0();
    let sel = sys.selector();
    let beta: Vec<usize> = (0..l0.nrows()).filter(|&i| !pat.row_mask[i]).collect();
    let pb0 = RMat::from_fn(beta.len(), l0.ncols(), |i, j| l0[(beta[i], j)]);
    let pb1 = RMat::from_fn(beta.len(), l0.ncols(), |i, j| sel[(beta[i], j)]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca4d);
    let (_, pts) = rank_drop_points(&pb0, &pb1, tol, &mut rng);
    let loose = tol.max(1e-7);
    let out: Vec<Complex64> = pts
        .into_iter()
        .filter(|&z| existence_check_tol(sys, pat, z, loose) == Feasibility::Feasible)
        .collect();
    if out.is_empty() {
        return Err(SolveError::InfeasiblePattern("no s satisfies both solvability conditions".into()));
    }
    Ok(out)
}

/// Three random probes; feasible at none of them means the finite regime.
pub fn feasible_almost_everywhere(sys: &StateSpaceSystem, pat: &StructuredPattern, tol: f64, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let scale = 1.0 + max_abs(&sys.lambda0());
    (0..3).any(|_| {
        let s = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
        existence_check_tol(sys, pat, s, tol) == Feasibility::Feasible
    })
}
