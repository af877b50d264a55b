//! Problem files: JSON with 1-based indices into `[A B; C D]`.

use std::path::Path;

use lti_opacity::linalg::RMat;
use lti_opacity::{AffinePattern, Complex64, SparsityPattern, StateSpaceSystem, StructuredPattern};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub theta_step: f64,
    pub tau: f64,
    pub eps_zeta: f64,
    pub rank_tol: f64,
    pub seed: u64,
    /// Overrides `1/(1e4 δ_M⁴)` for the ε cross-check.
    pub epsilon: Option<f64>,
    pub max_outer: usize,
    pub starts: usize,
    pub s0: Complex64,
    /// Tolerance for the rank and WUS checks in verification blocks.
    pub verify_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            theta_step: 0.01,
            tau: 1e-8,
            eps_zeta: 1e-4,
            rank_tol: 1e-9,
            seed: 0,
            epsilon: None,
            max_outer: 50_000,
            starts: 8,
            s0: Complex64::new(1.0, 1.0),
            verify_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    /// As written in the file.
    pub original: StateSpaceSystem,
    /// Pattern in the file's orientation, zero-based.
    pub pattern: Option<SparsityPattern>,
    pub options: Options,
}

impl Problem {
    /// `m ≥ p` orientation used by the solvers.
    pub fn working(&self) -> (StateSpaceSystem, Option<SparsityPattern>) {
        let sys = self.original.normalize_orientation();
        if !sys.transposed {
            return (sys, self.pattern.clone());
        }
        let pat = self.pattern.as_ref().map(|p| match p {
            SparsityPattern::Structured(s) => SparsityPattern::Structured(s.transpose()),
            SparsityPattern::Affine(a) => SparsityPattern::Affine(a.transpose()),
        });
        (sys, pat)
    }
}

#[derive(Debug)]
pub enum ProblemError {
    Io(String),
    Syntax { line: usize, column: usize, msg: String },
    Schema(Vec<String>),
}

impl std::fmt::Display for ProblemError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProblemError::Io(m) => write!(f, "cannot read problem file: {m}"),
            ProblemError::Syntax { line, column, msg } => write!(f, "line {line}, column {column}: {msg}"),
            ProblemError::Schema(errs) => {
                writeln!(f, "{} schema error(s):", errs.len())?;
                for e in errs {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

pub fn parse_problem(path: &Path) -> Result<Problem, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Io(format!("{}: {e}", path.display())))?;
    parse_problem_str(&text)
}

pub fn parse_json(text: &str) -> Result<Value, ProblemError> {
    serde_json::from_str(text).map_err(|e| ProblemError::Syntax { line: e.line(), column: e.column(), msg: e.to_string() })
}

pub fn parse_problem_str(text: &str) -> Result<Problem, ProblemError> {
    let root = parse_json(text)?;
    let mut errs = Vec::new();
    let Some(obj) = root.as_object() else {
        return Err(ProblemError::Schema(vec!["top level must be an object".into()]));
    };
    for k in obj.keys() {
        if !["system", "pattern", "options"].contains(&k.as_str()) {
            errs.push(format!("unknown field \"{k}\""));
        }
    }
    let blocks = match obj.get("system").and_then(Value::as_object) {
        Some(s) => Some(["A", "B", "C", "D"].map(|name| matrix(s, name, "system", &mut errs))),
        None => {
            errs.push("missing object \"system\"".into());
            None
        }
    };
    let system = blocks.and_then(|[a, b, c, d]| match (a, b, c, d) {
        (Some(a), Some(b), Some(c), Some(d)) => match StateSpaceSystem::new(a, b, c, d) {
            Ok(s) => Some(s),
            Err(e) => {
                errs.push(format!("system: {e}"));
                None
            }
        },
        _ => None,
    });
    let pattern = match (obj.get("pattern"), &system) {
        (None, _) => None,
        (Some(p), Some(sys)) => parse_pattern(p, sys.n() + sys.m(), sys.n() + sys.p(), &mut errs),
        (Some(p), None) => {
            // still report shape-independent problems
            parse_pattern(p, usize::MAX, usize::MAX, &mut errs);
            None
        }
    };
    let options = parse_options(obj.get("options"), &mut errs);
    if !errs.is_empty() {
        return Err(ProblemError::Schema(errs));
    }
    Ok(Problem { original: system.expect("checked"), pattern, options })
}

pub fn matrix(obj: &Map<String, Value>, name: &str, ctx: &str, errs: &mut Vec<String>) -> Option<RMat> {
    let Some(v) = obj.get(name) else {
        errs.push(format!("{ctx}: missing matrix \"{name}\""));
        return None;
    };
    matrix_value(v, &format!("{ctx}.{name}"), errs)
}

/// A nested array of numbers; `[]` and `[[]]` give empty matrices.
pub fn matrix_value(v: &Value, field: &str, errs: &mut Vec<String>) -> Option<RMat> {
    let Some(rows) = v.as_array() else {
        errs.push(format!("{field}: expected an array of rows"));
        return None;
    };
    let mut data = Vec::new();
    let mut width = None;
    let mut ok = true;
    for (i, row) in rows.iter().enumerate() {
        let Some(row) = row.as_array() else {
            errs.push(format!("{field}: row {} is not an array", i + 1));
            ok = false;
            continue;
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                errs.push(format!("{field}: row {} has {} entries, expected {w}", i + 1, row.len()));
                ok = false;
            }
            _ => {}
        }
        for (j, x) in row.iter().enumerate() {
            match x.as_f64() {
                Some(x) if x.is_finite() => data.push(x),
                _ => {
                    errs.push(format!("{field}: entry ({},{}) is not a finite number", i + 1, j + 1));
                    ok = false;
                }
            }
        }
    }
    if !ok {
        return None;
    }
    let w = width.unwrap_or(0);
    Some(RMat::from_row_slice(if w == 0 { 0 } else { rows.len() }, w, &data))
}

fn index_list(v: Option<&Value>, field: &str, bound: usize, errs: &mut Vec<String>) -> Vec<usize> {
    let Some(arr) = v.and_then(Value::as_array) else {
        errs.push(format!("{field}: expected an array of 1-based indices"));
        return vec![];
    };
    let mut out = Vec::new();
    for x in arr {
        match x.as_u64() {
            Some(i) if i >= 1 && (i as usize) <= bound => out.push(i as usize - 1),
            Some(i) if i >= 1 => errs.push(format!("{field}: index {i} exceeds {bound}")),
            _ => errs.push(format!("{field}: {x} is not a 1-based index")),
        }
    }
    out
}

fn parse_pattern(v: &Value, rows: usize, cols: usize, errs: &mut Vec<String>) -> Option<SparsityPattern> {
    let Some(obj) = v.as_object() else {
        errs.push("pattern: expected an object".into());
        return None;
    };
    match obj.get("kind").and_then(Value::as_str) {
        Some("structured") => {
            let r = index_list(obj.get("rows"), "pattern.rows", rows, errs);
            let c = index_list(obj.get("cols"), "pattern.cols", cols, errs);
            if rows == usize::MAX {
                return None;
            }
            match StructuredPattern::new(&r, &c, rows, cols) {
                Ok(p) => Some(SparsityPattern::Structured(p)),
                Err(e) => {
                    errs.push(format!("pattern: {e}"));
                    None
                }
            }
        }
        Some("affine") => {
            let Some(cells) = obj.get("cells").and_then(Value::as_array) else {
                errs.push("pattern.cells: expected an array of [row, col] pairs".into());
                return None;
            };
            let mut out = Vec::new();
            let mut bad = Vec::new();
            for (k, c) in cells.iter().enumerate() {
                let pair = c.as_array().filter(|a| a.len() == 2).and_then(|a| Some((a[0].as_u64()?, a[1].as_u64()?)));
                match pair {
                    Some((r, c)) if r >= 1 && c >= 1 => {
                        if (r as usize) > rows || (c as usize) > cols {
                            bad.push(format!("[{r},{c}]"));
                        } else {
                            out.push((r as usize - 1, c as usize - 1));
                        }
                    }
                    _ => errs.push(format!("pattern.cells[{}]: expected a [row, col] pair of 1-based indices", k + 1)),
                }
            }
            if !bad.is_empty() && rows != usize::MAX {
                errs.push(format!("pattern.cells: out of range for a {rows}x{cols} [A B; C D]: {}", bad.join(", ")));
            }
            if rows == usize::MAX || !bad.is_empty() {
                return None;
            }
            match AffinePattern::new(&out, rows, cols) {
                Ok(p) => Some(SparsityPattern::Affine(p)),
                Err(e) => {
                    errs.push(format!("pattern: {e}"));
                    None
                }
            }
        }
        Some(k) => {
            errs.push(format!("pattern.kind: \"{k}\" is neither \"structured\" nor \"affine\""));
            None
        }
        None => {
            errs.push("pattern.kind: missing".into());
            None
        }
    }
}

fn parse_options(v: Option<&Value>, errs: &mut Vec<String>) -> Options {
    let mut o = Options::default();
    let Some(v) = v else { return o };
    let Some(obj) = v.as_object() else {
        errs.push("options: expected an object".into());
        return o;
    };
    let positive = |k: &str, errs: &mut Vec<String>| -> Option<f64> {
        let x = obj.get(k)?;
        match x.as_f64() {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            _ => {
                errs.push(format!("options.{k}: expected a positive number, got {x}"));
                None
            }
        }
    };
    let count = |k: &str, errs: &mut Vec<String>| -> Option<u64> {
        let x = obj.get(k)?;
        let r = x.as_u64();
        if r.is_none() {
            errs.push(format!("options.{k}: expected a nonnegative integer, got {x}"));
        }
        r
    };
    for k in obj.keys() {
        const KNOWN: [&str; 10] =
            ["theta_step", "tau", "eps_zeta", "rank_tol", "seed", "epsilon", "max_outer", "starts", "s0", "verify_tol"];
        if !KNOWN.contains(&k.as_str()) {
            errs.push(format!("options: unknown field \"{k}\""));
        }
    }
    if let Some(x) = positive("theta_step", errs) {
        o.theta_step = x;
    }
    if let Some(x) = positive("tau", errs) {
        o.tau = x;
    }
    if let Some(x) = positive("eps_zeta", errs) {
        if x < 1.0 {
            o.eps_zeta = x;
        } else {
            errs.push(format!("options.eps_zeta: must lie in (0,1), got {x}"));
        }
    }
    if let Some(x) = positive("rank_tol", errs) {
        o.rank_tol = x;
    }
    if let Some(x) = positive("verify_tol", errs) {
        o.verify_tol = x;
    }
    o.epsilon = positive("epsilon", errs);
    if let Some(x) = count("seed", errs) {
        o.seed = x;
    }
    if let Some(x) = count("max_outer", errs) {
        o.max_outer = x as usize;
    }
    if let Some(x) = count("starts", errs) {
        o.starts = x as usize;
    }
    if let Some(x) = obj.get("s0") {
        match x.as_array().filter(|a| a.len() == 2).and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?))) {
            Some((re, im)) => o.s0 = Complex64::new(re, im),
            None => errs.push(format!("options.s0: expected [re, im], got {x}")),
        }
    }
    o
}
