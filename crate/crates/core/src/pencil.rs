//! Finite points where a real linear pencil `P(s) = P₀ − s·P₁` loses rank.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{equilibrated_rank, max_abs, CMat, RMat};

#[derive(Debug, Clone, PartialEq)]
pub enum PencilZeros {
    Finite(Vec<Complex64>),
    /// Rank-deficient at every `s`.
    All,
}

impl PencilZeros {
    pub fn is_empty(&self) -> bool {
        matches!(self, PencilZeros::Finite(z) if z.is_empty())
    }
}

pub fn eval(p0: &RMat, p1: &RMat, s: Complex64) -> CMat {
    CMat::from_fn(p0.nrows(), p0.ncols(), |i, j| Complex64::new(p0[(i, j)], 0.0) - s * p1[(i, j)])
}

/// Rank of `P(s)` at generic `s`, measured at three random points.
pub fn normal_rank(p0: &RMat, p1: &RMat, tol: f64, rng: &mut ChaCha8Rng) -> usize {
    let scale = 1.0 + max_abs(p0);
    (0..3)
        .map(|_| {
            let s = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
            equilibrated_rank(&eval(p0, p1, s), tol)
        })
        .max()
        .unwrap_or(0)
}

fn random_orthonormal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> RMat {
    let g = RMat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    g.qr().q()
}

/// Eigenvalue candidates of a square pencil by shift-and-invert about a real
/// shift: `s = s₀ + 1/μ` for the nonzero eigenvalues `μ` of `(P₀ − s₀P₁)⁻¹P₁`.
fn square_candidates(p0: &RMat, p1: &RMat, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let scale = 1.0 + max_abs(p0) / max_abs(p1).max(f64::MIN_POSITIVE);
    for _ in 0..8 {
        let s0 = rng.gen_range(-1.0..1.0) * scale.min(1e6);
        let k = p0 - p1 * s0;
        let Some(kinv) = k.clone().try_inverse() else { continue };
        let t = kinv * p1;
        if t.iter().any(|x| !x.is_finite()) {
            continue;
        }
        let ev = t.complex_eigenvalues();
        let emax = ev.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if emax == 0.0 {
            return vec![];
        }
        return ev
            .iter()
            .filter(|mu| mu.norm() > 1e-10 * emax)
            .map(|mu| Complex64::new(s0, 0.0) + mu.inv())
            .collect();
    }
    vec![]
}

fn close(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= 1e-6 * a.norm().max(1.0)
}

/// Points where the rank of `P(s)` falls below its normal rank.
///
/// The pencil is compressed to its normal rank by random orthonormal maps
/// twice; candidates common to both runs and confirmed by a rank test survive.
pub fn rank_drop_points(p0: &RMat, p1: &RMat, tol: f64, rng: &mut ChaCha8Rng) -> (usize, Vec<Complex64>) {
    let rho = normal_rank(p0, p1, tol, rng);
    if rho == 0 {
        return (0, vec![]);
    }
    let (r, c) = p0.shape();
    let mut runs: Vec<Vec<Complex64>> = Vec::new();
    for _ in 0..2 {
        let (w, v) = if r == rho && c == rho {
            (RMat::identity(r, r), RMat::identity(c, c))
        } else {
            (random_orthonormal(rng, r, rho).transpose(), random_orthonormal(rng, c, rho))
        };
        let q0 = &w * p0 * &v;
        let q1 = &w * p1 * &v;
        runs.push(square_candidates(&q0, &q1, rng));
    }
    let mut out: Vec<Complex64> = Vec::new();
    for &z in &runs[0] {
        if let Some(&z2) = runs[1].iter().find(|&&z2| close(z, z2)) {
            let z = 0.5 * (z + z2);
            if out.iter().any(|&o| close(o, z)) {
                continue;
            }
            if equilibrated_rank(&eval(p0, p1, z), tol.max(1e-9)) < rho {
                out.push(z);
            }
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    (rho, out)
}

/// Selector `[I_n 0; 0 0]` of shape `rows × cols`.
pub fn state_selector(n: usize, rows: usize, cols: usize) -> RMat {
    DMatrix::from_fn(rows, cols, |i, j| if i == j && i < n { 1.0 } else { 0.0 })
}
