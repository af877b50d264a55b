use num_complex::Complex64;

use super::sup_over_gamma;
use crate::error::SolveError;
use crate::linalg::{accurate_singular_values, pi_unchecked, CMat};
use crate::sparsity::StructuredPattern;
use crate::system::StateSpaceSystem;

/// Weight `ε` placed on the rows and columns that may not change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxConfig {
    pub epsilon: f64,
    /// Magnitude bound: every nonzero entry lies in `[1/δ_M, δ_M]`.
    pub delta_m: f64,
}

impl ApproxConfig {
    pub fn from_delta_m(delta_m: f64) -> Self {
        ApproxConfig { epsilon: 1.0 / (1e4 * delta_m.powi(4)), delta_m }
    }

    pub fn with_epsilon(epsilon: f64, delta_m: f64) -> Self {
        ApproxConfig { epsilon, delta_m }
    }

    /// `δ_M` read off the nonzero entries of `[A B; C D]`.
    pub fn for_system(sys: &StateSpaceSystem) -> Self {
        let dm = sys
            .lambda0()
            .iter()
            .filter(|x| **x != 0.0)
            .fold(1.0f64, |acc, x| acc.max(x.abs()).max(1.0 / x.abs()));
        Self::from_delta_m(dm)
    }
}

fn exponent(x: f64) -> i32 {
    x.abs().log2().floor() as i32
}

/// `Ĕ⁻¹ Λ_s Ğ⁻¹` divided by `2^S`, with `S` chosen so the largest entry is of
/// order one. Returns the scaled matrix and `S`.
fn weighted_pencil(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    s: Complex64,
    eps: f64,
) -> Result<(CMat, i32), SolveError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(SolveError::EpsilonRange(format!("epsilon = {eps:e}")));
    }
    let l = sys.lambda_pencil(s);
    let le = exponent(eps);
    let (r, c) = l.shape();
    let shift = |i: usize, j: usize| -> i32 {
        (if pat.row_mask[i] { 0 } else { -le }) + (if pat.col_mask[j] { 0 } else { -le })
    };
    // eps need not be a power of two: carry its mantissa separately
    let mant = eps / 2f64.powi(le);
    let mut top = i32::MIN;
    for i in 0..r {
        for j in 0..c {
            let z = l[(i, j)];
            if z.norm() > 0.0 {
                top = top.max(exponent(z.norm()) + shift(i, j));
            }
        }
    }
    if top == i32::MIN {
        return Ok((l, 0));
    }
    let mut k = CMat::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            let z = l[(i, j)];
            if z.norm() == 0.0 {
                continue;
            }
            let e = exponent(z.norm());
            let mut w = z / 2f64.powi(e);
            let mut p = e + shift(i, j) - top;
            if !pat.row_mask[i] {
                w /= mant;
            }
            if !pat.col_mask[j] {
                w /= mant;
            }
            if p < -1020 {
                return Err(SolveError::EpsilonRange(format!(
                    "entry ({},{}) falls {} binary orders below the largest weighted entry",
                    i + 1,
                    j + 1,
                    -p
                )));
            }
            while p < -1000 {
                w /= 2.0;
                p += 1;
            }
            k[(i, j)] = w * 2f64.powi(p);
        }
    }
    Ok((k, top))
}

/// `sup_γ σ_{2(n+p)−1}(Π(γ, Ĕ⁻¹ Λ_s Ğ⁻¹))`.
pub fn approx_min_norm_at_s(
    sys: &StateSpaceSystem,
    pat: &StructuredPattern,
    s: Complex64,
    cfg: &ApproxConfig,
) -> Result<f64, SolveError> {
    let (k, top) = weighted_pencil(sys, pat, s, cfg.epsilon)?;
    let idx = 2 * k.ncols() - 2;
    let failure = std::cell::RefCell::new(None);
    let (v, _) = sup_over_gamma(|g| match accurate_singular_values(&pi_unchecked(g, &k)) {
        Ok(sv) => sv[idx],
        Err(e) => {
            *failure.borrow_mut() = Some(SolveError::EpsilonRange(e.to_string()));
            f64::NAN
        }
    });
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if v > 0.0 && v < f64::MIN_POSITIVE * 2f64.powi(24) {
        return Err(SolveError::EpsilonRange(format!(
            "singular value {v:e} underflows after scaling by 2^{top}"
        )));
    }
    // 2^top may itself overflow; apply it in two halves
    let h = top / 2;
    let out = v * 2f64.powi(h) * 2f64.powi(top - h);
    if !out.is_finite() {
        return Err(SolveError::EpsilonRange(format!("result overflows (scale 2^{top})")));
    }
    Ok(out)
}
