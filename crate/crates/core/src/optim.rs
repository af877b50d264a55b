//! Thin wrappers over `argmin` for scalar roots, scalar minimization and
//! derivative-free local search.

use argmin::core::{CostFunction, Error, Executor, State};
use argmin::solver::brent::BrentRoot;
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;

struct Scalar<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;
    fn cost(&self, x: &f64) -> Result<f64, Error> {
        Ok((self.0)(*x))
    }
}

struct Multi<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Multi<F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, x: &Vec<f64>) -> Result<f64, Error> {
        Ok((self.0)(x))
    }
}

/// Root of `f` in a sign-changing bracket `[a, b]`.
pub fn brent_root(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
    let solver = BrentRoot::new(a, b, tol);
    let res = Executor::new(Scalar(f), solver)
        .configure(|s| s.max_iters(200))
        .run()
        .ok()?;
    res.state().get_best_param().copied()
}

/// Minimizer of `f` on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<(f64, f64)> {
    if !(b > a) {
        return None;
    }
    let solver = GoldenSectionSearch::new(a, b).ok()?.with_tolerance(tol).ok()?;
    let res = Executor::new(Scalar(f), solver)
        .configure(|s| s.param(0.5 * (a + b)).max_iters(200))
        .run()
        .ok()?;
    let st = res.state();
    Some((*st.get_best_param()?, st.get_best_cost()))
}

/// Nelder–Mead from an explicit initial simplex.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, simplex: Vec<Vec<f64>>, max_iters: u64, sd_tol: f64) -> (Vec<f64>, f64) {
    let fallback = simplex[0].clone();
    let f0 = f(&fallback);
    let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(sd_tol) else {
        return (fallback, f0);
    };
    match Executor::new(Multi(f), solver).configure(|s| s.max_iters(max_iters)).run() {
        Ok(res) => {
            let st = res.state();
            match st.get_best_param() {
                Some(p) if st.get_best_cost() <= f0 => (p.clone(), st.get_best_cost()),
                _ => (fallback, f0),
            }
        }
        Err(_) => (fallback, f0),
    }
}
