use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ingest::SparseStack;

/// Nonnegative sparse matrix indexed both by row and by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseNonneg {
    pub rows: usize,
    pub cols: usize,
    /// Per row, `(col, value)` sorted by col.
    pub by_row: Vec<Vec<(u32, f64)>>,
    /// Per column, `(row, value)` sorted by row.
    pub by_col: Vec<Vec<(u32, f64)>>,
}

impl SparseNonneg {
    /// Keeps entries strictly above `max(drop_tol, 0)`.
    pub fn positive_part(dense: &DMatrix<f64>, drop_tol: f64) -> Self {
        let floor = drop_tol.max(0.0);
        let (rows, cols) = dense.shape();
        let mut by_row = vec![Vec::new(); rows];
        let mut by_col = vec![Vec::new(); cols];
        for r in 0..rows {
            for c in 0..cols {
                let v = dense[(r, c)];
                if v > floor {
                    by_row[r].push((c as u32, v));
                    by_col[c].push((r as u32, v));
                }
            }
        }
        Self {
            rows,
            cols,
            by_row,
            by_col,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let r = &self.by_row[row];
        r.binary_search_by_key(&(col as u32), |&(c, _)| c)
            .map(|i| r[i].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.by_row.iter().map(Vec::len).sum()
    }

    pub fn zeroed(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            by_row: vec![Vec::new(); rows],
            by_col: vec![Vec::new(); cols],
        }
    }
}

/// A_func (F_src x K) with A_{a,k} = <d_a^src, r_k>, G_func (F_tgt x K) with
/// G_{b,k} = <e_b^tgt, w_k>, and their sparsified positive parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMatrices {
    pub a_func: DMatrix<f64>,
    pub g_func: DMatrix<f64>,
    pub a_pos: SparseNonneg,
    pub g_pos: SparseNonneg,
    pub drop_tol: f64,
}

impl SupportMatrices {
    pub fn num_latents(&self) -> usize {
        self.a_func.ncols()
    }
}

pub fn compute_support_matrices(stack: &SparseStack, drop_tol: f64) -> SupportMatrices {
    // D_src^T R^T: (F_src x d)(d x K)
    let a_func = stack.d_src.transpose() * stack.read.transpose();
    // E_tgt W: (F_tgt x d)(d x K)
    let g_func = &stack.e_tgt * &stack.write;
    SupportMatrices {
        a_pos: SparseNonneg::positive_part(&a_func, drop_tol),
        g_pos: SparseNonneg::positive_part(&g_func, drop_tol),
        a_func,
        g_func,
        drop_tol,
    }
}
