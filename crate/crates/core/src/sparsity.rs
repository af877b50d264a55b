//! Which entries of `[A B; C D]` may change.

use std::collections::BTreeSet;

use crate::error::SolveError;
use crate::linalg::{CMat, RMat};

/// Row/column masks: the diagonals of `E` and `G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredPattern {
    pub row_mask: Vec<bool>,
    pub col_mask: Vec<bool>,
}

impl StructuredPattern {
    /// From zero-based row and column index sets.
    pub fn new(rows: &[usize], cols: &[usize], total_rows: usize, total_cols: usize) -> Result<Self, SolveError> {
        let mut row_mask = vec![false; total_rows];
        let mut col_mask = vec![false; total_cols];
        for &r in rows {
            *row_mask
                .get_mut(r)
                .ok_or_else(|| SolveError::Pattern(format!("row {r} out of range 0..{total_rows}")))? = true;
        }
        for &c in cols {
            *col_mask
                .get_mut(c)
                .ok_or_else(|| SolveError::Pattern(format!("column {c} out of range 0..{total_cols}")))? = true;
        }
        if !row_mask.iter().any(|&b| b) || !col_mask.iter().any(|&b| b) {
            return Err(SolveError::Pattern("at least one row and one column must be selected".into()));
        }
        Ok(StructuredPattern { row_mask, col_mask })
    }

    pub fn rows(&self) -> Vec<usize> {
        (0..self.row_mask.len()).filter(|&i| self.row_mask[i]).collect()
    }

    pub fn cols(&self) -> Vec<usize> {
        (0..self.col_mask.len()).filter(|&i| self.col_mask[i]).collect()
    }

    pub fn zero_rows(&self) -> usize {
        self.row_mask.iter().filter(|&&b| !b).count()
    }

    pub fn zero_cols(&self) -> usize {
        self.col_mask.iter().filter(|&&b| !b).count()
    }

    pub fn e_matrix(&self) -> RMat {
        RMat::from_diagonal(&self.row_mask.iter().map(|&b| b as u8 as f64).collect::<Vec<_>>().into())
    }

    pub fn g_matrix(&self) -> RMat {
        RMat::from_diagonal(&self.col_mask.iter().map(|&b| b as u8 as f64).collect::<Vec<_>>().into())
    }

    /// `E·Δ·G`.
    pub fn mask(&self, delta: &RMat) -> RMat {
        RMat::from_fn(delta.nrows(), delta.ncols(), |i, j| {
            if self.row_mask[i] && self.col_mask[j] {
                delta[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// `J` with `Δ^α = Δ^r·J`.
    pub fn selector_j(&self) -> RMat {
        let cols = self.cols();
        RMat::from_fn(cols.len(), self.col_mask.len(), |i, j| (cols[i] == j) as u8 as f64)
    }

    pub fn transpose(&self) -> Self {
        StructuredPattern { row_mask: self.col_mask.clone(), col_mask: self.row_mask.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct PartitionedPencil {
    pub lambda_alpha: CMat,
    pub lambda_beta: CMat,
    pub j: RMat,
    pub alpha_rows: Vec<usize>,
    pub beta_rows: Vec<usize>,
    pub cols: Vec<usize>,
}

pub fn partition_lambda(l: &CMat, pat: &StructuredPattern) -> Result<PartitionedPencil, SolveError> {
    if l.nrows() != pat.row_mask.len() || l.ncols() != pat.col_mask.len() {
        return Err(SolveError::Pattern(format!(
            "mask lengths {}x{} do not match a {}x{} pencil",
            pat.row_mask.len(),
            pat.col_mask.len(),
            l.nrows(),
            l.ncols()
        )));
    }
    let alpha_rows = pat.rows();
    if alpha_rows.is_empty() {
        return Err(SolveError::Pattern("empty row selection".into()));
    }
    let beta_rows: Vec<usize> = (0..l.nrows()).filter(|&i| !pat.row_mask[i]).collect();
    let c = l.ncols();
    Ok(PartitionedPencil {
        lambda_alpha: CMat::from_fn(alpha_rows.len(), c, |i, j| l[(alpha_rows[i], j)]),
        lambda_beta: CMat::from_fn(beta_rows.len(), c, |i, j| l[(beta_rows[i], j)]),
        j: pat.selector_j(),
        alpha_rows,
        beta_rows,
        cols: pat.cols(),
    })
}

/// Drops the zero rows and columns of `EΔG`.
pub fn reduce(delta_full: &RMat, pat: &StructuredPattern) -> Result<RMat, SolveError> {
    if delta_full.shape() != (pat.row_mask.len(), pat.col_mask.len()) {
        return Err(SolveError::Pattern("reduce: shape mismatch".into()));
    }
    let (r, c) = (pat.rows(), pat.cols());
    Ok(RMat::from_fn(r.len(), c.len(), |i, j| delta_full[(r[i], c[j])]))
}

/// Inserts zero rows and columns so that `E·expand(Δ^r)·G = expand(Δ^r)`.
pub fn expand(delta_r: &RMat, pat: &StructuredPattern) -> Result<RMat, SolveError> {
    let (r, c) = (pat.rows(), pat.cols());
    if delta_r.shape() != (r.len(), c.len()) {
        return Err(SolveError::Pattern(format!(
            "expand: expected {}x{}, got {}x{}",
            r.len(),
            c.len(),
            delta_r.nrows(),
            delta_r.ncols()
        )));
    }
    let mut out = RMat::zeros(pat.row_mask.len(), pat.col_mask.len());
    for (i, &ri) in r.iter().enumerate() {
        for (j, &cj) in c.iter().enumerate() {
            out[(ri, cj)] = delta_r[(i, j)];
        }
    }
    Ok(out)
}

/// One single-entry term per cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffinePattern {
    /// Zero-based `(row, col)` pairs, sorted, unique.
    pub cells: Vec<(usize, usize)>,
    pub total_rows: usize,
    pub total_cols: usize,
    pub representable_as_structured: bool,
}

impl AffinePattern {
    pub fn new(cells: &[(usize, usize)], total_rows: usize, total_cols: usize) -> Result<Self, SolveError> {
        if cells.is_empty() {
            return Err(SolveError::Pattern("affine pattern needs at least one cell".into()));
        }
        let bad: Vec<String> = cells
            .iter()
            .filter(|&&(r, c)| r >= total_rows || c >= total_cols)
            .map(|&(r, c)| format!("({r},{c})"))
            .collect();
        if !bad.is_empty() {
            return Err(SolveError::Pattern(format!(
                "cells out of range for a {total_rows}x{total_cols} matrix: {}",
                bad.join(", ")
            )));
        }
        let set: BTreeSet<(usize, usize)> = cells.iter().copied().collect();
        let rows: BTreeSet<usize> = set.iter().map(|c| c.0).collect();
        let cols: BTreeSet<usize> = set.iter().map(|c| c.1).collect();
        let representable_as_structured = rows.len() * cols.len() == set.len();
        Ok(AffinePattern {
            cells: set.into_iter().collect(),
            total_rows,
            total_cols,
            representable_as_structured,
        })
    }

    /// Number of terms `l`.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `Σ E_i Δ G_i`.
    pub fn mask(&self, delta: &RMat) -> RMat {
        let mut out = RMat::zeros(delta.nrows(), delta.ncols());
        for &(r, c) in &self.cells {
            out[(r, c)] = delta[(r, c)];
        }
        out
    }

    /// Full matrix carrying `values[i]` at `cells[i]`.
    pub fn place(&self, values: &[f64]) -> RMat {
        let mut out = RMat::zeros(self.total_rows, self.total_cols);
        for (&(r, c), &v) in self.cells.iter().zip(values) {
            out[(r, c)] = v;
        }
        out
    }

    pub fn values(&self, delta: &RMat) -> Vec<f64> {
        self.cells.iter().map(|&(r, c)| delta[(r, c)]).collect()
    }

    pub fn as_structured(&self) -> Option<StructuredPattern> {
        if !self.representable_as_structured {
            return None;
        }
        let rows: Vec<usize> = self.cells.iter().map(|c| c.0).collect();
        let cols: Vec<usize> = self.cells.iter().map(|c| c.1).collect();
        StructuredPattern::new(&rows, &cols, self.total_rows, self.total_cols).ok()
    }

    pub fn from_structured(pat: &StructuredPattern) -> Self {
        let cells: Vec<(usize, usize)> = pat
            .rows()
            .into_iter()
            .flat_map(|r| pat.cols().into_iter().map(move |c| (r, c)))
            .collect();
        AffinePattern::new(&cells, pat.row_mask.len(), pat.col_mask.len()).expect("nonempty pattern")
    }

    pub fn transpose(&self) -> Self {
        let cells: Vec<(usize, usize)> = self.cells.iter().map(|&(r, c)| (c, r)).collect();
        AffinePattern::new(&cells, self.total_cols, self.total_rows).expect("valid cells")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SparsityPattern {
    Structured(StructuredPattern),
    Affine(AffinePattern),
}
