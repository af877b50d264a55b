//! State-space model `x(k+1) = Ax + Bu`, `y = Cx + Du`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SolveError;
use crate::linalg::{nullspace_basis_tol, range_basis, CMat, RMat, DEFAULT_RANK_TOL};
use crate::pencil::{rank_drop_points, state_selector, PencilZeros};

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
    /// Set once the `(Aᵀ, Cᵀ, Bᵀ, Dᵀ)` transform has been applied.
    pub transposed: bool,
}

impl StateSpaceSystem {
    pub fn new(a: RMat, b: RMat, c: RMat, d: RMat) -> Result<Self, SolveError> {
        let n = a.nrows();
        let err = |s: String| Err(SolveError::System(s));
        if n == 0 || a.ncols() != n {
            return err(format!("A must be square and nonempty, got {}x{}", a.nrows(), a.ncols()));
        }
        if b.nrows() != n {
            return err(format!("B must have {n} rows, got {}", b.nrows()));
        }
        if c.ncols() != n {
            return err(format!("C must have {n} columns, got {}", c.ncols()));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return err(format!(
                "D must be {}x{}, got {}x{}",
                c.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            ));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|x| !x.is_finite()) {
                return err(format!("{name} has a non-finite entry"));
            }
        }
        Ok(StateSpaceSystem { a, b, c, d, transposed: false })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Output count.
    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// Input count.
    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    /// `[A B; C D]`.
    pub fn lambda0(&self) -> RMat {
        let (n, m, p) = (self.n(), self.m(), self.p());
        let mut l = RMat::zeros(n + m, n + p);
        l.view_mut((0, 0), (n, n)).copy_from(&self.a);
        l.view_mut((0, n), (n, p)).copy_from(&self.b);
        l.view_mut((n, 0), (m, n)).copy_from(&self.c);
        l.view_mut((n, n), (m, p)).copy_from(&self.d);
        l
    }

    pub fn selector(&self) -> RMat {
        state_selector(self.n(), self.n() + self.m(), self.n() + self.p())
    }

    pub fn lambda_pencil(&self, s: Complex64) -> CMat {
        let n = self.n();
        let mut l = self.lambda0().map(|x| Complex64::new(x, 0.0));
        for i in 0..n {
            l[(i, i)] -= s;
        }
        l
    }

    pub fn transpose(&self) -> Self {
        StateSpaceSystem {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
            transposed: !self.transposed,
        }
    }

    /// Transposes when there are fewer outputs than inputs.
    pub fn normalize_orientation(&self) -> Self {
        if self.m() >= self.p() {
            self.clone()
        } else {
            self.transpose()
        }
    }

    pub fn apply_perturbation(&self, delta_full: &RMat) -> Result<Self, SolveError> {
        let (n, m, p) = (self.n(), self.m(), self.p());
        if delta_full.shape() != (n + m, n + p) {
            return Err(SolveError::System(format!(
                "perturbation must be {}x{}, got {}x{}",
                n + m,
                n + p,
                delta_full.nrows(),
                delta_full.ncols()
            )));
        }
        let l = self.lambda0() - delta_full;
        Ok(StateSpaceSystem {
            a: l.view((0, 0), (n, n)).into_owned(),
            b: l.view((0, n), (n, p)).into_owned(),
            c: l.view((n, 0), (m, n)).into_owned(),
            d: l.view((n, n), (m, p)).into_owned(),
            transposed: self.transposed,
        })
    }

    pub fn invariant_zeros(&self) -> PencilZeros {
        self.invariant_zeros_with(DEFAULT_RANK_TOL, 0)
    }

    pub fn invariant_zeros_with(&self, tol: f64, seed: u64) -> PencilZeros {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_2e70);
        let (rho, z) = rank_drop_points(&self.lambda0(), &self.selector(), tol, &mut rng);
        if rho < self.n() + self.p() {
            PencilZeros::All
        } else {
            PencilZeros::Finite(z)
        }
    }

    pub fn weakly_unobservable_subspace(&self) -> SubspaceBasis {
        self.weakly_unobservable_subspace_with(DEFAULT_RANK_TOL)
    }

    /// Fixed point of `V ← {x ∈ V : ∃u, Ax + Bu ∈ V, Cx + Du = 0}` from `V = ℝⁿ`.
    pub fn weakly_unobservable_subspace_with(&self, tol: f64) -> SubspaceBasis {
        let (n, m, p) = (self.n(), self.m(), self.p());
        let mut v = RMat::identity(n, n);
        let mut dims = vec![n];
        loop {
            let w = v.ncols();
            if w == 0 {
                break;
            }
            // [A V, B, -V; C V, D, 0] [a; u; b] = 0
            let mut k = RMat::zeros(n + m, 2 * w + p);
            k.view_mut((0, 0), (n, w)).copy_from(&(&self.a * &v));
            k.view_mut((0, w), (n, p)).copy_from(&self.b);
            k.view_mut((0, w + p), (n, w)).copy_from(&(-&v));
            k.view_mut((n, 0), (m, w)).copy_from(&(&self.c * &v));
            k.view_mut((n, w), (m, p)).copy_from(&self.d);
            // rows that are zero up to cancellation must stay zero, or the
            // equilibration inside the nullspace step scales the noise up
            for i in 0..n + m {
                let reference = if i < n {
                    (self.a.row(i).norm_squared() + self.b.row(i).norm_squared() + 1.0).sqrt()
                } else {
                    (self.c.row(i - n).norm_squared() + self.d.row(i - n).norm_squared()).sqrt()
                };
                if k.row(i).norm() <= tol * reference {
                    k.row_mut(i).fill(0.0);
                }
            }
            let null = nullspace_basis_tol(&k, tol);
            let na = null.rows(0, w).into_owned();
            let next = range_basis(&(&v * na), tol);
            let stable = next.ncols() == w;
            v = next;
            dims.push(v.ncols());
            if stable {
                break;
            }
        }
        SubspaceBasis { basis: v, iterations: dims }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    /// Orthonormal columns.
    pub basis: RMat,
    /// Dimension after each fixed-point step, starting with `n`.
    pub iterations: Vec<usize>,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}
