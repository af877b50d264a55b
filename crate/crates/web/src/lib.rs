//! wasm-bindgen surface for the static page in `www/`.

use lti_opacity::linalg::RMat;
use lti_opacity::structured::{min_norm_at_s, norm_surface, perturbation_at_s, ray_level_set};
use lti_opacity::{Complex64, PencilZeros, StateSpaceSystem, StructuredPattern};
use wasm_bindgen::prelude::*;

/// A system and a row/column pattern, both from flat row-major arrays.
#[wasm_bindgen]
pub struct Demo {
    sys: StateSpaceSystem,
    pat: StructuredPattern,
}

impl Demo {
    /// Indices are 1-based into `[A B; C D]`.
    pub fn build(
        n: usize,
        m: usize,
        p: usize,
        a: &[f64],
        b: &[f64],
        c: &[f64],
        d: &[f64],
        rows: &[u32],
        cols: &[u32],
    ) -> Result<Demo, String> {
        let sizes = [("A", a.len(), n * n), ("B", b.len(), n * p), ("C", c.len(), m * n), ("D", d.len(), m * p)];
        for (name, got, want) in sizes {
            if got != want {
                return Err(format!("{name} has {got} entries, expected {want}"));
            }
        }
        let sys = StateSpaceSystem::new(
            RMat::from_row_slice(n, n, a),
            RMat::from_row_slice(n, p, b),
            RMat::from_row_slice(m, n, c),
            RMat::from_row_slice(m, p, d),
        )
        .map_err(|e| e.to_string())?;
        let zero_based = |v: &[u32]| -> Result<Vec<usize>, String> {
            v.iter().map(|&i| if i >= 1 { Ok(i as usize - 1) } else { Err("indices are 1-based".to_string()) }).collect()
        };
        let pat = StructuredPattern::new(&zero_based(rows)?, &zero_based(cols)?, n + m, n + p)
            .map_err(|e| e.to_string())?;
        let work = sys.normalize_orientation();
        let pat = if work.transposed { pat.transpose() } else { pat };
        Ok(Demo { sys: work, pat })
    }

    /// Norms on a grid, real part outermost; `NaN` where no solution exists.
    pub fn surface_values(&self, re: (f64, f64), im: (f64, f64), grid: (usize, usize)) -> Vec<f64> {
        norm_surface(&self.sys, &self.pat, re, im, grid).into_iter().map(|p| p.norm.unwrap_or(f64::NAN)).collect()
    }

    /// `[norm, γ, Δ^r entries row-major...]`, or `[NaN]` when infeasible.
    pub fn at(&self, re: f64, im: f64) -> Vec<f64> {
        let s = Complex64::new(re, im);
        let Ok((norm, gamma)) = min_norm_at_s(&self.sys, &self.pat, s) else { return vec![f64::NAN] };
        let mut out = vec![norm, gamma];
        if let Ok(sol) = perturbation_at_s(&self.sys, &self.pat, s) {
            let d = &sol.delta_r;
            out.extend((0..d.nrows()).flat_map(|i| (0..d.ncols()).map(move |j| d[(i, j)])));
        }
        out
    }

    /// Interleaved `re, im` pairs; `[NaN, NaN]` when every `s` is a zero.
    pub fn zero_list(&self) -> Vec<f64> {
        match self.sys.invariant_zeros() {
            PencilZeros::All => vec![f64::NAN, f64::NAN],
            PencilZeros::Finite(z) => z.iter().flat_map(|s| [s.re, s.im]).collect(),
        }
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        p: usize,
        a: &[f64],
        b: &[f64],
        c: &[f64],
        d: &[f64],
        rows: &[u32],
        cols: &[u32],
    ) -> Result<Demo, JsError> {
        Demo::build(n, m, p, a, b, c, d, rows, cols).map_err(|e| JsError::new(&e))
    }

    pub fn surface(&self, re_min: f64, re_max: f64, im_min: f64, im_max: f64, n_re: usize, n_im: usize) -> Vec<f64> {
        self.surface_values((re_min, re_max), (im_min, im_max), (n_re, n_im))
    }

    #[wasm_bindgen(js_name = normAt)]
    pub fn norm_at(&self, re: f64, im: f64) -> Vec<f64> {
        self.at(re, im)
    }

    /// Radii along `arg s = theta` where the fixed-γ norm expression equals `target`.
    #[wasm_bindgen(js_name = levelSet)]
    pub fn level_set(&self, theta: f64, target: f64, gamma: f64) -> Vec<f64> {
        ray_level_set(&self.sys, &self.pat, theta, target, gamma)
    }

    pub fn zeros(&self) -> Vec<f64> {
        self.zero_list()
    }

    #[wasm_bindgen(js_name = reducedShape)]
    pub fn reduced_shape(&self) -> Vec<usize> {
        let (r, c) = (self.pat.rows().len(), self.pat.cols().len());
        if self.sys.transposed {
            vec![c, r]
        } else {
            vec![r, c]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Demo {
        Demo::build(
            3,
            2,
            1,
            &[0.74, -0.12, -0.38, -0.69, 1.62, -0.21, -2.08, 0.63, 0.14],
            &[1.06, 0.71, 0.61],
            &[-1.23, 1.02, -0.66, -0.26, 2.51, 1.13],
            &[1.33, -2.89],
            &[1, 3],
            &[1, 3],
        )
        .unwrap()
    }

    #[test]
    fn norm_at_example_point() {
        let v = reference().at(0.8297, 0.5583);
        assert!((v[0] - 0.2086).abs() < 5e-4);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn surface_shape_and_conjugate_symmetry() {
        let s = reference().surface_values((-1.0, 1.0), (-1.0, 1.0), (3, 5));
        assert_eq!(s.len(), 15);
        for i in 0..3 {
            for j in 0..5 {
                let (a, b) = (s[i * 5 + j], s[i * 5 + 4 - j]);
                assert!((a - b).abs() <= 1e-9 * a.max(1e-12) || (a.is_nan() && b.is_nan()));
            }
        }
    }

    #[test]
    fn bad_sizes_rejected() {
        assert!(Demo::build(2, 1, 1, &[1.0; 3], &[1.0; 2], &[1.0; 2], &[1.0], &[1], &[1]).is_err());
        assert!(Demo::build(1, 1, 1, &[1.0], &[1.0], &[1.0], &[1.0], &[0], &[1]).is_err());
    }

    #[test]
    fn zeros_of_example_are_empty() {
        assert!(reference().zero_list().is_empty());
    }

    #[test]
    fn level_set_is_sorted() {
        let r = reference().level_set(0.6, 0.25, 1e-3);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }
}
