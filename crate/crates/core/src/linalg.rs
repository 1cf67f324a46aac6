//! Dense linear-algebra helpers shared by the lattice and dynamics modules.
//!
//! Everything here operates on real-symmetric matrices (the lattice
//! Hamiltonians have real entries) or on complex orbital blocks stored
//! column-major. Eigendecomposition is delegated to nalgebra; the
//! deterministic ordering and phase conventions live here so every caller
//! sees the same basis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, SimError};

/// Eigendecomposition of a real symmetric matrix with a deterministic
/// convention: eigenvalues ascending, each eigenvector's largest-magnitude
/// component made positive, exact degeneracies ordered lexicographically on
/// rounded eigenvector entries.
pub fn eigh_sorted(h: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(SimError::Dimension {
            expected: n,
            got: h.ncols(),
            context: "eigh_sorted requires a square matrix".into(),
        });
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(SimError::numerical("non-finite entry in matrix"));
    }
    let se = h.clone().symmetric_eigen();
    let mut vecs: Vec<DVector<f64>> = (0..n).map(|i| se.eigenvectors.column(i).into()).collect();
    for v in vecs.iter_mut() {
        fix_phase(v);
    }
    let vals = se.eigenvalues;
    if vals.iter().any(|x| !x.is_finite()) {
        return Err(SimError::numerical("eigensolver returned non-finite eigenvalues"));
    }

    let scale = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let deg_tol = 1e-12 * scale;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        if (vals[i] - vals[j]).abs() <= deg_tol {
            cmp_rounded(&vecs[i], &vecs[j])
        } else {
            vals[i].partial_cmp(&vals[j]).unwrap()
        }
    });

    let sorted_vals = DVector::from_iterator(n, order.iter().map(|&i| vals[i]));
    let mut sorted_vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        sorted_vecs.set_column(k, &vecs[i]);
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Make the largest-magnitude component positive (first one wins on ties).
fn fix_phase(v: &mut DVector<f64>) {
    let mut idx = 0;
    let mut best = -1.0f64;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

fn cmp_rounded(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let rx = (x * 1e9).round();
        let ry = (y * 1e9).round();
        if rx != ry {
            return rx.partial_cmp(&ry).unwrap();
        }
    }
    std::cmp::Ordering::Equal
}

/// Max absolute deviation of `m` from symmetry, ‖M − Mᵀ‖_max.
pub fn symmetry_error(m: &DMatrix<f64>) -> f64 {
    let mut err = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            err = err.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    err
}

/// ‖M†M − I‖_max for a complex block with orthonormal columns.
pub fn orthonormality_drift(m: &DMatrix<Complex64>) -> f64 {
    let k = m.ncols();
    let mut drift = 0.0f64;
    for i in 0..k {
        for j in i..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..m.nrows() {
                acc += m[(r, i)].conj() * m[(r, j)];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            drift = drift.max((acc - target).norm());
        }
    }
    drift
}

/// In-place modified Gram-Schmidt on the columns of `m`.
pub fn orthonormalize_columns(m: &mut DMatrix<Complex64>) -> Result<()> {
    let (n, k) = (m.nrows(), m.ncols());
    for j in 0..k {
        for i in 0..j {
            let mut dot = Complex64::new(0.0, 0.0);
            for r in 0..n {
                dot += m[(r, i)].conj() * m[(r, j)];
            }
            for r in 0..n {
                let mi = m[(r, i)];
                m[(r, j)] -= dot * mi;
            }
        }
        let norm: f64 = (0..n).map(|r| m[(r, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(SimError::numerical("rank-deficient orbital block"));
        }
        let inv = Complex64::new(1.0 / norm, 0.0);
        for r in 0..n {
            m[(r, j)] *= inv;
        }
    }
    Ok(())
}

/// Real matrix times complex block, computed as two real products.
pub fn real_times_complex(a: &DMatrix<f64>, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let re = x.map(|z| z.re);
    let im = x.map(|z| z.im);
    let are = a * re;
    let aim = a * im;
    DMatrix::from_fn(a.nrows(), x.ncols(), |i, j| Complex64::new(are[(i, j)], aim[(i, j)]))
}

/// Complexify a real matrix.
pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs_c(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

/// Applies `exp(factor · A)` to every length-`rows` column stored in `data`,
/// where `apply` computes `out = A·v`. Truncated Taylor series with
/// norm-driven termination; `norm_bound ≥ ‖A‖` controls the scaling step so
/// each inner series sees `‖factor·A‖ ≤ 1/2` and converges to machine
/// precision. Columns are independent, so the result is bit-identical
/// whether or not the column loop runs in parallel.
pub fn expi_taylor_apply<F>(
    apply: &F,
    factor: Complex64,
    norm_bound: f64,
    rows: usize,
    data: &mut [Complex64],
) where
    F: Fn(&[Complex64], &mut [Complex64]) + Sync,
{
    use rayon::prelude::*;

    assert_eq!(data.len() % rows, 0);
    let scaled_norm = norm_bound * factor.norm();
    let halvings: u32 = if scaled_norm <= 0.5 {
        0
    } else {
        (scaled_norm / 0.5).log2().ceil() as u32
    };
    let substeps = 1u64 << halvings;
    let sub_factor = factor / substeps as f64;
    let ncols = data.len() / rows;

    let run_column = |scratch: &mut (Vec<Complex64>, Vec<Complex64>), col: &mut [Complex64]| {
        let (term, tmp) = scratch;
        for _ in 0..substeps {
            term.copy_from_slice(col);
            let mut col_max = col.iter().fold(0.0f64, |a, z| a.max(z.norm_sqr()));
            for k in 1..=48u32 {
                apply(term, tmp);
                let scale = sub_factor / k as f64;
                let mut term_max = 0.0f64;
                for i in 0..col.len() {
                    let t = tmp[i] * scale;
                    term[i] = t;
                    col[i] += t;
                    term_max = term_max.max(t.norm_sqr());
                    col_max = col_max.max(col[i].norm_sqr());
                }
                if term_max <= col_max * 1e-36 {
                    break;
                }
            }
        }
    };

    if ncols >= 8 && rows >= 48 {
        data.par_chunks_exact_mut(rows).for_each_init(
            || (vec![Complex64::default(); rows], vec![Complex64::default(); rows]),
            |scratch, col| run_column(scratch, col),
        );
    } else {
        let mut scratch = (vec![Complex64::default(); rows], vec![Complex64::default(); rows]);
        for col in data.chunks_exact_mut(rows) {
            run_column(&mut scratch, col);
        }
    }
}

pub fn max_abs_r(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}
