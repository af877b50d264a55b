//! Cell-wise (affine) sparsity: rank relaxation of the real lifted pencil,
//! nuclear norm minus a linearized Ky Fan norm, solved by ADMM per step.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::SolveError;
use crate::linalg::{max_abs, singular_values, RMat};
use crate::par_map;
use crate::sparsity::AffinePattern;
use crate::structured::StructuredSolution;
use crate::system::StateSpaceSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineConfig {
    /// Stop once `|F(Z^k) − F(Z^{k−1})| ≤ tau`.
    pub tau: f64,
    /// `ζ = ‖Δ⁰‖ / eps_zeta`.
    pub eps_zeta: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Random starts when no initial point is given.
    pub starts: usize,
    pub seed: u64,
}

impl Default for AffineConfig {
    fn default() -> Self {
        AffineConfig {
            tau: 1e-8,
            eps_zeta: 1e-4,
            max_outer: 50_000,
            // warm-started steps move x by O(1/ζ); a looser stop stalls the outer loop
            inner_tol: 1e-12,
            inner_max_iter: 50_000,
            starts: 8,
            seed: 0,
        }
    }
}

impl AffineConfig {
    /// Looser threshold, for quick runs.
    pub fn fast() -> Self {
        AffineConfig { tau: 1e-5, ..Default::default() }
    }

    fn validate(&self) -> Result<(), SolveError> {
        if !(self.tau > 0.0) {
            return Err(SolveError::Pattern(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.eps_zeta > 0.0 && self.eps_zeta < 1.0) {
            return Err(SolveError::Pattern(format!("eps_zeta must lie in (0,1), got {}", self.eps_zeta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffineStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineIterate {
    pub k: usize,
    pub f: f64,
    pub norm: f64,
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSolution {
    /// `s = λ + μj`.
    pub lambda_mu: (f64, f64),
    /// Zero off the pattern cells.
    pub delta: RMat,
    pub norm: f64,
    pub f_history: Vec<AffineIterate>,
    pub status: AffineStatus,
    /// `σ_{2(n+p)}(Z) / σ_1(Z)` at the returned point.
    pub rank_gap: f64,
}

impl AffineSolution {
    pub fn s(&self) -> Complex64 {
        Complex64::new(self.lambda_mu.0, self.lambda_mu.1)
    }
}

/// Real `2(n+m) × 2(n+p)` lift of `Λ_s − Δ`, rank deficient iff `λ ± μj` is
/// an invariant zero of the perturbed system.
pub fn lifted_pencil(sys: &StateSpaceSystem, delta: &RMat, lambda: f64, mu: f64) -> Result<RMat, SolveError> {
    let l0 = sys.lambda0();
    if delta.shape() != l0.shape() {
        return Err(SolveError::Pattern(format!(
            "perturbation is {}x{}, expected {}x{}",
            delta.nrows(),
            delta.ncols(),
            l0.nrows(),
            l0.ncols()
        )));
    }
    let (r, c, n) = (l0.nrows(), l0.ncols(), sys.n());
    let mut diag = &l0 - delta;
    for i in 0..n {
        diag[(i, i)] -= lambda;
    }
    let mut z = RMat::zeros(2 * r, 2 * c);
    z.view_mut((0, 0), (r, c)).copy_from(&diag);
    z.view_mut((r, c), (r, c)).copy_from(&diag);
    for i in 0..n {
        z[(i, c + i)] = -mu;
        z[(r + i, i)] = mu;
    }
    Ok(z)
}

/// Sum of the `r` largest singular values.
pub fn ky_fan(z: &RMat, r: usize) -> Result<f64, SolveError> {
    let k = z.nrows().min(z.ncols());
    if r > k {
        return Err(SolveError::Linalg(crate::error::LinalgError::DimensionMismatch(format!(
            "Ky Fan order {r} exceeds min dimension {k}"
        ))));
    }
    Ok(singular_values(z).iter().take(r).sum())
}

fn spectral(z: &RMat) -> f64 {
    singular_values(z).first().copied().unwrap_or(0.0)
}

/// `Z(x) = L₀ + Σ xᵢ Gᵢ` with `x = (cell values, λ, μ)`.
struct AffineMap {
    l0: RMat,
    gens: Vec<RMat>,
    /// Normal matrix of the x-update, independent of the penalty.
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    cells: usize,
    pattern: AffinePattern,
}

impl AffineMap {
    fn new(sys: &StateSpaceSystem, pat: &AffinePattern) -> Result<Self, SolveError> {
        let zero = RMat::zeros(pat.total_rows, pat.total_cols);
        let l0 = lifted_pencil(sys, &zero, 0.0, 0.0)?;
        let mut gens = Vec::new();
        for &(r, c) in &pat.cells {
            let mut d = zero.clone();
            d[(r, c)] = 1.0;
            gens.push(lifted_pencil(sys, &d, 0.0, 0.0)? - &l0);
        }
        gens.push(lifted_pencil(sys, &zero, 1.0, 0.0)? - &l0);
        gens.push(lifted_pencil(sys, &zero, 0.0, 1.0)? - &l0);
        let k = gens.len();
        let cells = pat.len();
        let h = DMatrix::from_fn(k, k, |i, j| gens[i].dot(&gens[j]) + if i == j && i < cells { 1.0 } else { 0.0 });
        let chol = h
            .cholesky()
            .ok_or_else(|| SolveError::Pattern("affine map is degenerate".into()))?;
        Ok(AffineMap { l0, gens, chol, cells, pattern: pat.clone() })
    }

    fn scale(&self) -> f64 {
        1.0f64.max(self.l0.norm())
    }

    fn eval(&self, x: &[f64]) -> RMat {
        let mut z = self.l0.clone();
        for (g, &v) in self.gens.iter().zip(x) {
            z += g * v;
        }
        z
    }

    fn place(&self, x: &[f64]) -> RMat {
        self.pattern.place(&x[..self.cells])
    }

    /// `argmin ‖Z(x) − cz‖² + ‖place(x) − cp‖²`.
    fn least_squares(&self, cz: &RMat, cp: &RMat) -> Vec<f64> {
        let rhs_z = cz - &self.l0;
        let mut b = DVector::from_fn(self.gens.len(), |i, _| self.gens[i].dot(&rhs_z));
        for (i, &(r, c)) in self.pattern.cells.iter().enumerate() {
            b[i] += cp[(r, c)];
        }
        self.chol.solve(&b).iter().copied().collect()
    }
}

const RANK_STEPS: usize = 200;

/// Singular value soft threshold.
fn svt(c: &RMat, t: f64) -> RMat {
    let svd = c.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = svd.singular_values.map(|v| (v - t).max(0.0));
    u * DMatrix::from_diagonal(&s) * vt
}

/// Projection of a nonnegative vector onto `{Σ vᵢ ≤ r}`.
fn project_l1_nonneg(v: &[f64], r: f64) -> Vec<f64> {
    if v.iter().sum::<f64>() <= r {
        return v.to_vec();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - r) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// `prox_{t‖·‖₂}(c) = c − Proj_{‖·‖_* ≤ t}(c)`.
fn prox_spectral(c: &RMat, t: f64) -> RMat {
    let svd = c.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let p = project_l1_nonneg(&s, t);
    let d: Vec<f64> = s.iter().zip(&p).map(|(a, b)| a - b).collect();
    u * DMatrix::from_diagonal(&DVector::from_vec(d)) * vt
}

/// ADMM iterate carried between outer steps.
#[derive(Debug, Clone)]
struct AdmmState {
    x: Vec<f64>,
    z: RMat,
    p: RMat,
    yz: RMat,
    yp: RMat,
    rho: f64,
}

impl AdmmState {
    fn new(map: &AffineMap, x: Vec<f64>) -> Self {
        let z = map.eval(&x);
        let p = map.place(&x);
        AdmmState { yz: RMat::zeros(z.nrows(), z.ncols()), yp: RMat::zeros(p.nrows(), p.ncols()), x, z, p, rho: 1.0 }
    }
}

/// One convex step: `min w‖place(x)‖ + ‖Z‖_* − ⟨W, Z⟩` over `Z = Z(x)`.
/// Returns whether the residuals met the tolerance.
fn admm(map: &AffineMap, st: &mut AdmmState, w: &RMat, weight: f64, tol: f64, max_iter: usize) -> bool {
    let thresh = tol * map.scale();
    let mut lz = map.eval(&st.x);
    let mut lp = map.place(&st.x);
    for it in 0..max_iter {
        let rho = st.rho;
        st.z = svt(&(&lz - &st.yz / rho + w / rho), 1.0 / rho);
        st.p = if weight > 0.0 { prox_spectral(&(&lp - &st.yp / rho), weight / rho) } else { &lp - &st.yp / rho };
        let x = map.least_squares(&(&st.z + &st.yz / rho), &(&st.p + &st.yp / rho));
        let lz_new = map.eval(&x);
        let lp_new = map.place(&x);
        let rz = &st.z - &lz_new;
        let rp = &st.p - &lp_new;
        st.yz += &rz * rho;
        st.yp += &rp * rho;
        let primal = (rz.norm_squared() + rp.norm_squared()).sqrt();
        let dual = rho * ((&lz_new - &lz).norm_squared() + (&lp_new - &lp).norm_squared()).sqrt();
        st.x = x;
        lz = lz_new;
        lp = lp_new;
        if primal <= thresh && dual <= thresh {
            return true;
        }
        if it % 10 == 9 {
            // residual balancing; duals are unscaled so they survive a change of rho
            if primal > 10.0 * dual {
                st.rho = (rho * 2.0).min(1e8);
            } else if dual > 10.0 * primal {
                st.rho = (rho / 2.0).max(1e-8);
            }
        }
    }
    false
}

fn top_vectors(z: &RMat, r: usize) -> RMat {
    let svd = z.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    // nalgebra returns singular values sorted nonincreasing
    u.columns(0, r) * vt.rows(0, r)
}

#[derive(Debug, Clone)]
pub struct InnerStep {
    pub delta: RMat,
    pub lambda: f64,
    pub mu: f64,
    /// Evaluated exactly at the returned parameters.
    pub z: RMat,
}

/// Solves the linearized convex problem from `(Δ, λ, μ)` with `U₁V₁ᵀ = w`.
/// Errors (carrying the last iterate in the message) when the inner cap is hit.
pub fn inner_convex_step(
    sys: &StateSpaceSystem,
    pat: &AffinePattern,
    start: (&RMat, f64, f64),
    u1v1t: &RMat,
    zeta: f64,
    cfg: &AffineConfig,
) -> Result<InnerStep, SolveError> {
    let map = AffineMap::new(sys, pat)?;
    let mut x = pat.values(start.0);
    x.push(start.1);
    x.push(start.2);
    let mut st = AdmmState::new(&map, x);
    let weight = if zeta > 0.0 { 1.0 / zeta } else { 0.0 };
    let ok = if zeta == 0.0 {
        // the rank term alone: Δ is free to vanish
        st.x[..map.cells].iter_mut().for_each(|v| *v = 0.0);
        true
    } else {
        admm(&map, &mut st, u1v1t, weight, cfg.inner_tol, cfg.inner_max_iter)
    };
    let step = InnerStep { delta: map.place(&st.x), lambda: st.x[map.cells], mu: st.x[map.cells + 1], z: map.eval(&st.x) };
    if !ok {
        return Err(SolveError::NotConverged(format!(
            "inner solver hit {} iterations at lambda={}, mu={}, |delta|={}",
            cfg.inner_max_iter,
            step.lambda,
            step.mu,
            spectral(&step.delta)
        )));
    }
    Ok(step)
}

/// Masks the structured optimum to the cells and takes `(λ, μ) = (Re s*, Im s*)`.
pub fn warm_start_from_structured(sol: &StructuredSolution, pat: &AffinePattern) -> (RMat, f64, f64) {
    (pat.mask(&sol.delta_full), sol.s_star.re, sol.s_star.im)
}

fn objective(map: &AffineMap, x: &[f64], zeta: f64, order: usize) -> (f64, f64, f64) {
    let z = map.eval(x);
    let sv = singular_values(&z);
    let tail: f64 = sv.iter().skip(order).sum();
    let norm = spectral(&map.place(x));
    (norm + zeta * tail, norm, tail / sv[0].max(f64::MIN_POSITIVE))
}

fn solve_from(
    sys: &StateSpaceSystem,
    map: &AffineMap,
    init: Vec<f64>,
    cfg: &AffineConfig,
) -> Result<AffineSolution, SolveError> {
    let order = 2 * (sys.n() + sys.p()) - 1;
    let cells = map.cells;
    // Steps 2-3: rank term only, linearized at the initial point; repeated
    // while a single step leaves the pencil of full rank
    let mut st = AdmmState::new(map, init);
    let gap = |x: &[f64]| objective(map, x, 0.0, order).2;
    let mut g = gap(&st.x);
    for _ in 0..RANK_STEPS {
        let w = top_vectors(&map.eval(&st.x), order);
        admm(map, &mut st, &w, 0.0, cfg.inner_tol, cfg.inner_max_iter);
        let next = gap(&st.x);
        let stalled = next > 0.9 * g;
        g = next;
        if g <= 1e-10 || stalled {
            break;
        }
    }
    let d0 = spectral(&map.place(&st.x));
    if d0 <= 1e-12 * map.scale() && g <= 1e-10 {
        // no perturbation needed: the system already has a zero
        let (f, norm, gap) = objective(map, &st.x, 0.0, order);
        return Ok(AffineSolution {
            lambda_mu: (st.x[cells], st.x[cells + 1]),
            delta: map.place(&st.x),
            norm,
            f_history: vec![AffineIterate { k: 0, f, norm, lambda: st.x[cells], mu: st.x[cells + 1] }],
            status: AffineStatus::Converged,
            rank_gap: gap,
        });
    }
    // a rank step that barely moved Δ would make the penalty vanish
    let zeta = d0.max(1e-3 * max_abs(&map.l0)) / cfg.eps_zeta;
    let weight = 1.0 / zeta;
    let record = |k: usize, x: &[f64]| {
        let (f, norm, _) = objective(map, x, zeta, order);
        AffineIterate { k, f, norm, lambda: x[cells], mu: x[cells + 1] }
    };
    let mut history = vec![record(0, &st.x)];
    let mut status = AffineStatus::MaxIterations;
    let mut rises = 0;
    for k in 1..=cfg.max_outer {
        let w = top_vectors(&map.eval(&st.x), order);
        admm(map, &mut st, &w, weight, cfg.inner_tol, cfg.inner_max_iter);
        let it = record(k, &st.x);
        let prev = history.last().unwrap().f;
        history.push(it);
        if it.f > prev + 1e-6 * history[0].f {
            rises += 1;
            if rises >= 5 {
                return Err(SolveError::NotConverged(format!(
                    "objective rose five times in a row, last {prev} -> {}",
                    it.f
                )));
            }
        } else {
            rises = 0;
        }
        if (it.f - prev).abs() <= cfg.tau {
            status = AffineStatus::Converged;
            break;
        }
    }
    let (_, norm, gap) = objective(map, &st.x, zeta, order);
    Ok(AffineSolution {
        lambda_mu: (st.x[cells], st.x[cells + 1]),
        delta: map.place(&st.x),
        norm,
        f_history: history,
        status,
        rank_gap: gap,
    })
}

/// Iterative rank relaxation. Without `init`, runs `cfg.starts` random starts
/// and keeps the smallest norm (then smallest `|s|`).
pub fn solve_affine(
    sys: &StateSpaceSystem,
    pat: &AffinePattern,
    init: Option<(RMat, f64, f64)>,
    cfg: &AffineConfig,
) -> Result<AffineSolution, SolveError> {
    cfg.validate()?;
    if pat.is_empty() {
        return Err(SolveError::Pattern("affine pattern is empty".into()));
    }
    let map = AffineMap::new(sys, pat)?;
    let starts: Vec<Vec<f64>> = match init {
        Some((d, l, m)) => {
            let mut x = pat.values(&d);
            x.extend([l, m]);
            vec![x]
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xaff1);
            let amp = 0.1 * max_abs(&sys.lambda0()).max(f64::MIN_POSITIVE);
            (0..cfg.starts.max(1))
                .map(|_| (0..pat.len() + 2).map(|_| amp * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>())
                .collect()
        }
    };
    let results = par_map(&starts, |x| solve_from(sys, &map, x.clone(), cfg));
    let mut best: Option<AffineSolution> = None;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(sol) => {
                let better = best.as_ref().is_none_or(|b| {
                    sol.norm < b.norm || (sol.norm == b.norm && sol.s().norm() < b.s().norm())
                });
                if better {
                    best = Some(sol);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| SolveError::NotConverged("no start succeeded".into())))
}

#[cfg(test)]
mod tests;
