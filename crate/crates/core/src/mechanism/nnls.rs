//! Lawson-Hanson active-set nonnegative least squares.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlsOptions {
    pub max_iter: usize,
    /// Convergence when the projected gradient's infinity norm falls below this.
    pub tol: f64,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub converged: bool,
}

fn projected_gradient(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let g = a.transpose() * (a * x - b);
    g.iter()
        .zip(x.iter())
        .map(|(&gj, &xj)| {
            if xj > 0.0 {
                gj.abs()
            } else {
                gj.min(0.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn solve_on(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(passive);
    sub.svd(true, true)
        .solve(b, 1e-12)
        .expect("SVD computed with U and V")
}

/// min ||A x - b||_2 subject to x >= 0.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, options: NnlsOptions) -> NnlsSolution {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let mut iterations = 0;

    'outer: while iterations < options.max_iter {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|j| !passive.contains(j))
            .filter(|&j| w[j] > options.tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(t) = candidate else { break };
        passive.push(t);
        passive.sort_unstable();

        loop {
            iterations += 1;
            let z_p = solve_on(a, b, &passive);
            if z_p.iter().all(|&v| v > 0.0) {
                for (i, &j) in passive.iter().enumerate() {
                    x[j] = z_p[i];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (i, &j) in passive.iter().enumerate() {
                if z_p[i] <= 0.0 {
                    let denom = x[j] - z_p[i];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (i, &j) in passive.iter().enumerate() {
                x[j] += alpha * (z_p[i] - x[j]);
            }
            passive.retain(|&j| x[j] > 1e-15);
            for j in 0..n {
                if !passive.contains(&j) {
                    x[j] = 0.0;
                }
            }
            if iterations >= options.max_iter {
                break 'outer;
            }
        }
    }

    let pg = projected_gradient(a, b, &x);
    NnlsSolution {
        residual: (a * &x - b).norm(),
        converged: pg < options.tol.max(1e-8 * (1.0 + b.norm() * a.norm())),
        projected_gradient: pg,
        iterations,
        x,
    }
}
