use std::path::Path;

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use super::matrix::{load_matrix, save_matrix};
use crate::error::{Error, Result};

/// File names expected inside a stack directory.
pub const STACK_FILES: [&str; 6] = [
    "E_src.mat",
    "D_src.mat",
    "E_tgt.mat",
    "D_tgt.mat",
    "R.mat",
    "W.mat",
];

/// Source and target SAE dictionaries plus the transcoder read/write matrices.
///
/// Shapes: `e_src` is F_src x d, `d_src` is d x F_src, `e_tgt` is F_tgt x d,
/// `d_tgt` is d x F_tgt, `read` is K x d and `write` is d x K.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseStack {
    pub e_src: DMatrix<f64>,
    pub d_src: DMatrix<f64>,
    pub e_tgt: DMatrix<f64>,
    pub d_tgt: DMatrix<f64>,
    pub read: DMatrix<f64>,
    pub write: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub d_model: usize,
    pub f_src: usize,
    pub f_tgt: usize,
    pub k: usize,
}

impl SparseStack {
    pub fn new(
        e_src: DMatrix<f64>,
        d_src: DMatrix<f64>,
        e_tgt: DMatrix<f64>,
        d_tgt: DMatrix<f64>,
        read: DMatrix<f64>,
        write: DMatrix<f64>,
    ) -> Result<Self> {
        let d = d_src.nrows();
        let checks = [
            ("E_src cols", e_src.ncols()),
            ("E_tgt cols", e_tgt.ncols()),
            ("D_tgt rows", d_tgt.nrows()),
            ("R cols", read.ncols()),
            ("W rows", write.nrows()),
        ];
        for (what, got) in checks {
            if got != d {
                return Err(Error::Shape(format!(
                    "{what} = {got}, but D_src has d_model = {d}"
                )));
            }
        }
        if e_src.nrows() != d_src.ncols() {
            return Err(Error::Shape(format!(
                "E_src has {} features, D_src has {}",
                e_src.nrows(),
                d_src.ncols()
            )));
        }
        if e_tgt.nrows() != d_tgt.ncols() {
            return Err(Error::Shape(format!(
                "E_tgt has {} features, D_tgt has {}",
                e_tgt.nrows(),
                d_tgt.ncols()
            )));
        }
        if read.nrows() != write.ncols() {
            return Err(Error::Shape(format!(
                "R has {} latents, W has {}",
                read.nrows(),
                write.ncols()
            )));
        }
        let all = [&e_src, &d_src, &e_tgt, &d_tgt, &read, &write];
        if all.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::Value(
                "stack matrices contain non-finite entries".into(),
            ));
        }
        Ok(Self {
            e_src,
            d_src,
            e_tgt,
            d_tgt,
            read,
            write,
        })
    }

    pub fn shape(&self) -> ShapeReport {
        ShapeReport {
            d_model: self.d_src.nrows(),
            f_src: self.d_src.ncols(),
            f_tgt: self.e_tgt.nrows(),
            k: self.read.nrows(),
        }
    }

    pub fn d_model(&self) -> usize {
        self.d_src.nrows()
    }

    pub fn num_latents(&self) -> usize {
        self.read.nrows()
    }

    /// Read vector r_k (row k of R), as an owned column vector.
    pub fn read_vector(&self, k: usize) -> nalgebra::DVector<f64> {
        self.read.row(k).transpose()
    }

    /// Write vector w_k (column k of W).
    pub fn write_vector(&self, k: usize) -> DVectorView<'_, f64> {
        self.write.column(k)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mats = [
            &self.e_src,
            &self.d_src,
            &self.e_tgt,
            &self.d_tgt,
            &self.read,
            &self.write,
        ];
        for (name, m) in STACK_FILES.iter().zip(mats) {
            save_matrix(m, dir.join(name))?;
        }
        Ok(())
    }
}

/// Loads the six stack matrices from a directory laid out per [`STACK_FILES`].
pub fn load_sparse_stack(dir: impl AsRef<Path>) -> Result<SparseStack> {
    let dir = dir.as_ref();
    let mut mats = STACK_FILES
        .iter()
        .map(|name| load_matrix(dir.join(name)))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || mats.next().expect("six matrices");
    let (e_src, d_src, e_tgt, d_tgt, read, write) =
        (next(), next(), next(), next(), next(), next());
    let stack = SparseStack::new(e_src, d_src, e_tgt, d_tgt, read, write)?;
    let s = stack.shape();
    log::info!(
        "stack shape: F_src={} F_tgt={} K={} d={}",
        s.f_src,
        s.f_tgt,
        s.k,
        s.d_model
    );
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_stack(d: usize, k: usize) -> Result<SparseStack> {
        let eye = DMatrix::<f64>::identity(d, d);
        SparseStack::new(
            eye.clone(),
            eye.clone(),
            eye.clone(),
            eye,
            DMatrix::from_fn(k, d, |r, c| if r == c { 1.0 } else { 0.0 }),
            DMatrix::from_fn(d, k, |r, c| if r == c { 1.0 } else { 0.0 }),
        )
    }

    #[test]
    fn identity_dictionaries_validate() {
        let stack = identity_stack(4, 2).unwrap();
        assert_eq!(
            stack.shape(),
            ShapeReport {
                d_model: 4,
                f_src: 4,
                f_tgt: 4,
                k: 2
            }
        );
    }

    #[test]
    fn read_matrix_with_wrong_width_is_shape_error() {
        let s = identity_stack(4, 2).unwrap();
        let err = SparseStack::new(
            s.e_src,
            s.d_src,
            s.e_tgt,
            s.d_tgt,
            DMatrix::zeros(2, 3),
            s.write,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn save_and_load_directory() {
        let dir = tempfile::tempdir().unwrap();
        let stack = identity_stack(3, 2).unwrap();
        stack.save(dir.path()).unwrap();
        assert_eq!(load_sparse_stack(dir.path()).unwrap(), stack);
    }
}
