//! Dense kernels: real lifts, SVD variants, generalized singular values,
//! nullspaces and the least-norm real solve.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::LinalgError;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Relative rank tolerance used when a caller does not supply one.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

pub fn re(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn im(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.clone().modulus()))
}

/// `[Re M, -γ Im M; γ⁻¹ Im M, Re M]`.
pub fn pi_transform(gamma: f64, m: &CMat) -> Result<RMat, LinalgError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LinalgError::Domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(pi_unchecked(gamma, m))
}

pub(crate) fn pi_unchecked(gamma: f64, m: &CMat) -> RMat {
    let (r, c) = m.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -gamma * z.im;
            out[(i + r, j)] = z.im / gamma;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Singular values in nonincreasing order.
pub fn singular_values<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `tol·σ₁`.
pub fn rank_with_tol<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&s1) if s1 > 0.0 => s.iter().filter(|&&x| x > tol * s1).count(),
        _ => 0,
    }
}

/// Rank after power-of-two row/column equilibration. Insensitive to grading.
pub fn equilibrated_rank<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: f64) -> usize {
    let (dr, dc) = ruiz_scaling(m);
    rank_with_tol(&scale_rows_cols(m, &dr, &dc), tol)
}

fn pow2_near(x: f64) -> f64 {
    // nearest power of two to 1/sqrt(x); exact scaling keeps rounding out of it
    let e = -(x.log2() / 2.0).round();
    2f64.powi(e as i32)
}

/// Ruiz equilibration with power-of-two factors: returns `(row, col)` scales.
pub fn ruiz_scaling<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> (Vec<f64>, Vec<f64>) {
    let (r, c) = m.shape();
    let mut dr = vec![1.0; r];
    let mut dc = vec![1.0; c];
    let mut a: Vec<f64> = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            a.push(m[(i, j)].clone().modulus());
        }
    }
    for _ in 0..40 {
        let mut changed = false;
        let mut rmax = vec![0.0f64; r];
        let mut cmax = vec![0.0f64; c];
        for i in 0..r {
            for j in 0..c {
                let v = a[i * c + j] * dr[i] * dc[j];
                rmax[i] = rmax[i].max(v);
                cmax[j] = cmax[j].max(v);
            }
        }
        for (i, &x) in rmax.iter().enumerate() {
            if x > 0.0 {
                let f = pow2_near(x);
                if f != 1.0 {
                    dr[i] *= f;
                    changed = true;
                }
            }
        }
        for (j, &x) in cmax.iter().enumerate() {
            if x > 0.0 {
                let f = pow2_near(x);
                if f != 1.0 {
                    dc[j] *= f;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (dr, dc)
}

pub(crate) fn scale_rows_cols<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    dr: &[f64],
    dc: &[f64],
) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        m[(i, j)].clone().scale(dr[i] * dc[j])
    })
}

/// Orthonormal basis of `ker(M)` using the default rank tolerance.
pub fn nullspace_basis<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> DMatrix<T> {
    nullspace_basis_tol(m, DEFAULT_RANK_TOL)
}

/// Orthonormal basis of `ker(M)`. The matrix is equilibrated first so that
/// strongly graded rows and columns do not swamp each other.
pub fn nullspace_basis_tol<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, tol: f64) -> DMatrix<T> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 || max_abs(m) == 0.0 {
        return DMatrix::identity(c, c);
    }
    let (dr, dc) = ruiz_scaling(m);
    let b = scale_rows_cols(m, &dr, &dc);
    let sq = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(&b);
        p
    } else {
        b
    };
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |a, &x| a.max(x));
    let mut null_idx: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= tol * smax).collect();
    // square padding gives c values; any missing (tall case never misses) are null
    null_idx.sort_unstable();
    let k = null_idx.len();
    if k == 0 {
        return DMatrix::zeros(c, 0);
    }
    let mut x = DMatrix::zeros(c, k);
    for (col, &i) in null_idx.iter().enumerate() {
        for j in 0..c {
            x[(j, col)] = v_t[(i, j)].clone().conjugate().scale(dc[j]);
        }
    }
    orthonormalize(x)
}

fn orthonormalize<T: ComplexField<RealField = f64>>(x: DMatrix<T>) -> DMatrix<T> {
    if x.ncols() == 1 {
        let nrm = x.column(0).norm();
        return x.unscale(nrm);
    }
    x.qr().q()
}

/// Orthonormal basis for the column space under a relative tolerance.
pub fn range_basis(m: &RMat, tol: f64) -> RMat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return RMat::zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |a, &x| a.max(x));
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| smax > 0.0 && sv[i] > tol * smax).collect();
    RMat::from_fn(r, keep.len(), |i, j| u[(i, keep[j])])
}

/// Moore–Penrose pseudo-inverse.
pub fn pinv(m: &RMat, tol: f64) -> RMat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return RMat::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U");
    let v_t = svd.v_t.as_ref().expect("V");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |a, &x| a.max(x));
    let mut out = RMat::zeros(c, r);
    for k in 0..sv.len() {
        if smax > 0.0 && sv[k] > tol * smax {
            let inv = 1.0 / sv[k];
            for i in 0..c {
                for j in 0..r {
                    out[(i, j)] += v_t[(k, i)] * inv * u[(j, k)];
                }
            }
        }
    }
    out
}

/// `[Re Y, Im Y]·[Re X, Im X]^†` for column vectors `Y` (q) and `X` (r).
pub fn real_lift_solve(y: &CMat, x: &CMat) -> Result<RMat, LinalgError> {
    if y.ncols() != 1 || x.ncols() != 1 {
        return Err(LinalgError::DimensionMismatch("real_lift_solve expects column vectors".into()));
    }
    if max_abs(x) == 0.0 {
        return Err(LinalgError::NoDirection);
    }
    let xr = RMat::from_fn(x.nrows(), 2, |i, j| if j == 0 { x[i].re } else { x[i].im });
    let yr = RMat::from_fn(y.nrows(), 2, |i, j| if j == 0 { y[i].re } else { y[i].im });
    // column scale keeps a nearly real X from being misjudged as rank one
    let s = max_abs(&xr);
    let xp = pinv(&(&xr / s), 1e-12) / s;
    Ok(yr * xp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsvdResult {
    /// Nonincreasing, `f64::INFINITY` first.
    pub values: Vec<f64>,
    pub finite_count: usize,
}

impl GsvdResult {
    fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let finite_count = values.iter().filter(|v| v.is_finite()).count();
        GsvdResult { values, finite_count }
    }

    /// `σ_i`, one-based.
    pub fn sigma(&self, i: usize) -> f64 {
        self.values.get(i.wrapping_sub(1)).copied().unwrap_or(0.0)
    }
}

/// Generalized singular values of the pair `(M, N)`, one per column.
///
/// Directions where only `N` vanishes give `∞`; directions in the common
/// nullspace are indeterminate and reported as `0`.
pub fn gsvd_values<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    n: &DMatrix<T>,
) -> Result<GsvdResult, LinalgError> {
    let t = m.ncols();
    if n.ncols() != t {
        return Err(LinalgError::DimensionMismatch(format!(
            "gsvd: M has {} columns, N has {}",
            t,
            n.ncols()
        )));
    }
    if t == 0 {
        return Ok(GsvdResult { values: vec![], finite_count: 0 });
    }
    // right-multiplication by a nonsingular diagonal leaves the values unchanged
    let mut dc = vec![1.0; t];
    for (j, d) in dc.iter_mut().enumerate() {
        let cm = m.column(j).iter().fold(0.0f64, |a, z| a.max(z.clone().modulus()));
        let cn = n.column(j).iter().fold(0.0f64, |a, z| a.max(z.clone().modulus()));
        let x = cm.max(cn);
        if x > 0.0 {
            *d = 2f64.powi(-(x.log2().round() as i32));
        }
    }
    let ones_m = vec![1.0; m.nrows()];
    let ones_n = vec![1.0; n.nrows()];
    let mut ms = scale_rows_cols(m, &ones_m, &dc);
    let mut ns = scale_rows_cols(n, &ones_n, &dc);
    let a = max_abs(&ms);
    let b = max_abs(&ns);
    if b == 0.0 {
        let rk = if a == 0.0 { 0 } else { rank_with_tol(&ms, 1e-13) };
        let mut v = vec![f64::INFINITY; rk];
        v.resize(t, 0.0);
        return Ok(GsvdResult::from_values(v));
    }
    if a == 0.0 {
        return Ok(GsvdResult::from_values(vec![0.0; t]));
    }
    ms.unscale_mut(a);
    ns.unscale_mut(b);
    let factor = a / b;

    let sn = singular_values(&ns);
    let full_rank = sn.len() == t && sn[t - 1] > 1e-10 * sn[0];
    let values = if full_rank {
        let r = ns.qr().r();
        let rt = r.transpose();
        let xt = rt
            .solve_lower_triangular(&ms.transpose())
            .ok_or_else(|| LinalgError::Numerical("triangular solve failed".into()))?;
        let mut v: Vec<f64> = singular_values(&xt).into_iter().map(|x| x * factor).collect();
        v.resize(t, 0.0);
        v
    } else {
        stacked_gsv(&ms, &ns, factor)
    };
    Ok(GsvdResult::from_values(values))
}

fn stacked_gsv<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, n: &DMatrix<T>, factor: f64) -> Vec<f64> {
    let t = m.ncols();
    let (rm, rn) = (m.nrows(), n.nrows());
    let mut s = DMatrix::zeros(rm + rn, t);
    s.view_mut((0, 0), (rm, t)).copy_from(m);
    s.view_mut((rm, 0), (rn, t)).copy_from(n);
    let svd = s.svd(true, false);
    let u = svd.u.expect("U");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |acc, &x| acc.max(x));
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > 1e-13 * smax).collect();
    let k = keep.len();
    let um = DMatrix::from_fn(rm, k, |i, j| u[(i, keep[j])].clone());
    let un = DMatrix::from_fn(rn, k, |i, j| u[(rm + i, keep[j])].clone());
    let mut c = singular_values(&um);
    c.resize(k, 0.0);
    let mut sn = singular_values(&un);
    sn.resize(k, 0.0);
    sn.reverse();
    let mut out: Vec<f64> = c
        .iter()
        .zip(sn.iter())
        .map(|(&ci, &si)| if si <= 1e-13 { f64::INFINITY } else { factor * ci / si })
        .collect();
    out.resize(t, 0.0);
    out
}

/// Singular values with high relative accuracy for graded matrices:
/// rows sorted by size, Householder QR with column pivoting, then one-sided
/// Jacobi on `Rᵀ`.
pub fn accurate_singular_values(a: &RMat) -> Result<Vec<f64>, LinalgError> {
    let a = if a.nrows() < a.ncols() { a.transpose() } else { a.clone() };
    let (m, n) = a.shape();
    if n == 0 {
        return Ok(vec![]);
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::Numerical("non-finite entry".into()));
    }
    let amax = max_abs(&a);
    if amax == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let e = amax.log2().ceil() as i32;
    let scale = 2f64.powi(e);
    let mut rows: Vec<usize> = (0..m).collect();
    let row_inf: Vec<f64> = (0..m).map(|i| a.row(i).iter().fold(0.0f64, |s, x| s.max(x.abs()))).collect();
    rows.sort_by(|&i, &j| row_inf[j].total_cmp(&row_inf[i]));
    let mut w = RMat::from_fn(m, n, |i, j| a[(rows[i], j)] / scale);

    // Householder QR with column pivoting, norms recomputed each step
    for k in 0..n.min(m) {
        let (mut best, mut bj) = (-1.0, k);
        for j in k..n {
            let nrm = w.view((k, j), (m - k, 1)).norm();
            if nrm > best {
                best = nrm;
                bj = j;
            }
        }
        w.swap_columns(k, bj);
        let x: DVector<f64> = w.view((k, k), (m - k, 1)).column(0).into_owned();
        let nx = x.norm();
        if nx == 0.0 {
            continue;
        }
        let mut v = x.clone();
        v[0] += nx.copysign(x[0]);
        let vv = v.norm_squared();
        for j in k..n {
            let dot: f64 = (0..m - k).map(|i| v[i] * w[(k + i, j)]).sum();
            let f = 2.0 * dot / vv;
            for i in 0..m - k {
                w[(k + i, j)] -= f * v[i];
            }
        }
    }
    let p = n.min(m);
    // G = Rᵀ, columns are rows of R
    let mut g = RMat::from_fn(n, p, |i, j| if i >= j { w[(j, i)] } else { 0.0 });
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..p.saturating_sub(1) {
            for j in i + 1..p {
                let (mut aa, mut bb, mut cc) = (0.0, 0.0, 0.0);
                for r in 0..n {
                    let (gi, gj) = (g[(r, i)], g[(r, j)]);
                    aa += gi * gi;
                    bb += gj * gj;
                    cc += gi * gj;
                }
                if cc == 0.0 || cc.abs() <= 1e-15 * (aa * bb).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (bb - aa) / (2.0 * cc);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..n {
                    let (gi, gj) = (g[(r, i)], g[(r, j)]);
                    g[(r, i)] = cs * gi - sn * gj;
                    g[(r, j)] = sn * gi + cs * gj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = (0..p).map(|j| g.column(j).norm() * scale).collect();
    s.resize(n, 0.0);
    s.sort_by(|a, b| b.total_cmp(a));
    if s.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::Numerical("singular value overflow".into()));
    }
    Ok(s)
}
