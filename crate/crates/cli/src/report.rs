use lti_opacity::linalg::{singular_values, RMat};
use lti_opacity::{Complex64, PencilZeros, StateSpaceSystem};
use serde_json::{json, Value};

use crate::problem::{matrix_value, parse_json, Options};
use crate::Failure;

pub struct Orientation {
    pub transposed: bool,
}

impl Orientation {
    pub fn of(working: &StateSpaceSystem) -> Self {
        Orientation { transposed: working.transposed }
    }

    pub fn json(&self) -> Value {
        if self.transposed {
            json!({
                "transposed": true,
                "notice": "fewer outputs than inputs: solved for the transposed system; cells and perturbations are reported in the original orientation",
            })
        } else {
            json!({"transposed": false})
        }
    }

    pub fn to_original(&self, d: &RMat) -> RMat {
        if self.transposed {
            d.transpose()
        } else {
            d.clone()
        }
    }

    pub fn to_working(&self, d: &RMat) -> RMat {
        self.to_original(d)
    }
}

pub fn complex_json(s: Complex64) -> Value {
    json!([s.re, s.im])
}

pub fn matrix_json(m: &RMat) -> Value {
    Value::Array((0..m.nrows()).map(|i| json!((0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>())).collect())
}

/// Entries of the original `[A B; C D]` selected by `keep`, with block-local 1-based indices.
pub fn cells_json(delta: &RMat, sys: &StateSpaceSystem, keep: impl Fn(usize, usize) -> bool) -> Value {
    let n = sys.n();
    let mut out = Vec::new();
    for r in 0..delta.nrows() {
        for c in 0..delta.ncols() {
            if !keep(r, c) {
                continue;
            }
            let block = match (r < n, c < n) {
                (true, true) => "A",
                (true, false) => "B",
                (false, true) => "C",
                (false, false) => "D",
            };
            let (br, bc) = (if r < n { r } else { r - n }, if c < n { c } else { c - n });
            out.push(json!({
                "block": block,
                "row": br + 1,
                "col": bc + 1,
                "index": [r + 1, c + 1],
                "value": delta[(r, c)],
            }));
        }
    }
    Value::Array(out)
}

/// Rank of `Λ_s − Δ` at the reported `s`, plus the perturbed system's zeros and WUS.
pub fn verification(sys: &StateSpaceSystem, delta: &RMat, s: Option<Complex64>, opt: &Options) -> Value {
    let pert = match sys.apply_perturbation(delta) {
        Ok(p) => p,
        Err(e) => return json!({"error": e.to_string()}),
    };
    let np = sys.n() + sys.p();
    let residual = s.map(|s| {
        let sv = singular_values(&pert.lambda_pencil(s));
        sv[np - 1] / sv[0].max(f64::MIN_POSITIVE)
    });
    let zeros = match pert.invariant_zeros_with(opt.verify_tol, opt.seed) {
        PencilZeros::All => json!("all"),
        PencilZeros::Finite(z) => Value::Array(z.iter().map(|&s| complex_json(s)).collect()),
    };
    let wus = pert.weakly_unobservable_subspace_with(opt.verify_tol).dim();
    json!({
        "s": s.map(complex_json),
        "tolerance": opt.verify_tol,
        "rank_deficiency_residual": residual,
        "rank_deficient": residual.map(|r| r <= opt.verify_tol),
        "invariant_zeros": zeros,
        "wus_dimension": wus,
        "opaque": wus > 0,
    })
}

/// `{"delta": [[...]], "s": [re, im]}`, or a solve result carrying `solution.delta`.
pub fn parse_delta(text: &str, original: &StateSpaceSystem) -> Result<(RMat, Option<Complex64>), Failure> {
    let v = parse_json(text)?;
    let holder = if v.get("delta").is_some() { &v } else { v.get("solution").unwrap_or(&v) };
    let mut errs = Vec::new();
    let d = holder.get("delta").and_then(|d| matrix_value(d, "delta", &mut errs));
    let s = match holder.get("s") {
        None | Some(Value::Null) => None,
        Some(x) => match x.as_array().filter(|a| a.len() == 2).and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?))) {
            Some((re, im)) => Some(Complex64::new(re, im)),
            None => {
                errs.push(format!("s: expected [re, im], got {x}"));
                None
            }
        },
    };
    let want = (original.n() + original.m(), original.n() + original.p());
    match d {
        Some(d) if d.shape() == want && errs.is_empty() => Ok((d, s)),
        Some(d) if errs.is_empty() => {
            Err(Failure::Input(format!("delta is {}x{}, expected {}x{}", d.nrows(), d.ncols(), want.0, want.1)))
        }
        None if errs.is_empty() => Err(Failure::Input("missing \"delta\" matrix".into())),
        _ => Err(Failure::Input(errs.join("; "))),
    }
}
