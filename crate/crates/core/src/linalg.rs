//! Dense and matrix-free linear algebra for the Ω-restricted operators.
//!
//! The discrete gradient restricted to Ω-nodes is the matrix `G` whose column
//! for node `i` is `D δ_i`, a translate of the stencil `d = D δ_0`. With this
//! Euclidean convention `-div = Gᵀ` on Ω, so the σ-Laplacian block is `GᵀG`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{DomainMask, Grid};
use crate::frgrad::{Fourier, FracOps};

/// `D δ_0`, one vector per component.
pub(crate) fn stencil(ops: &FracOps) -> Vec<Vec<f64>> {
    let mut delta = vec![0.0; ops.grid().len()];
    delta[0] = 1.0;
    ops.gradient_raw(&delta)
}

/// Rows of `G` for the listed grid nodes; row `p * N + j` holds component `j`
/// at `nodes[p]`, columns follow `mask.indices()`.
pub(crate) fn gradient_rows(stencil: &[Vec<f64>], grid: &Grid, mask: &DomainMask, nodes: &[usize]) -> DMatrix<f64> {
    let dim = stencil.len();
    let cols = mask.indices();
    let mut out = DMatrix::zeros(nodes.len() * dim, cols.len());
    for (p, &x) in nodes.iter().enumerate() {
        for (c, &i) in cols.iter().enumerate() {
            let off = grid.wrap_difference(x, i);
            for j in 0..dim {
                out[(p * dim + j, c)] = stencil[j][off];
            }
        }
    }
    out
}

/// `GᵀG` restricted to Ω, i.e. `(-Δ)^σ` between Ω-nodes.
pub(crate) fn restricted_laplacian(ops: &FracOps, mask: &DomainMask) -> DMatrix<f64> {
    let grid = ops.grid();
    let mut delta = vec![0.0; grid.len()];
    delta[0] = 1.0;
    let column = ops.laplacian_raw(&delta);
    let idx = mask.indices();
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| column[grid.wrap_difference(idx[r], idx[c])])
}

/// Nodewise `N×N` weight blocks, row-major, for a list of grid nodes.
pub(crate) struct Weights<'a> {
    pub nodes: &'a [usize],
    pub blocks: &'a [f64],
}

/// `Σ_x G[x]ᵀ W(x) G[x]` over the given nodes, accumulated into `acc`.
pub(crate) fn add_weighted_gram(
    acc: &mut DMatrix<f64>,
    stencil: &[Vec<f64>],
    grid: &Grid,
    mask: &DomainMask,
    weights: &Weights<'_>,
) {
    let dim = stencil.len();
    const CHUNK: usize = 256;
    for (chunk_no, nodes) in weights.nodes.chunks(CHUNK).enumerate() {
        let rows = gradient_rows(stencil, grid, mask, nodes);
        let mut weighted = DMatrix::zeros(rows.nrows(), rows.ncols());
        for p in 0..nodes.len() {
            let block = &weights.blocks[(chunk_no * CHUNK + p) * dim * dim..][..dim * dim];
            for j in 0..dim {
                for k in 0..dim {
                    let w = block[j * dim + k];
                    if w != 0.0 {
                        for c in 0..rows.ncols() {
                            weighted[(p * dim + j, c)] += w * rows[(p * dim + k, c)];
                        }
                    }
                }
            }
        }
        acc.gemm_tr(1.0, &rows, &weighted, 1.0);
    }
}

pub(crate) enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    pub fn new(m: DMatrix<f64>, symmetric: bool) -> Result<Self> {
        if symmetric {
            if let Some(ch) = nalgebra::Cholesky::new(m.clone()) {
                return Ok(Factor::Cholesky(ch));
            }
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Ok(Factor::Lu(lu))
        } else {
            Err(Error::LinearSolve("singular system matrix".into()))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = DVector::from_column_slice(b);
        let x = match self {
            Factor::Cholesky(ch) => ch.solve(&rhs),
            Factor::Lu(lu) => lu.solve(&rhs).ok_or_else(|| Error::LinearSolve("LU solve failed".into()))?,
        };
        if x.iter().all(|v| v.is_finite()) {
            Ok(x.as_slice().to_vec())
        } else {
            Err(Error::LinearSolve("non-finite solution".into()))
        }
    }
}

/// Modes annihilated by every multiplier on the full torus: per axis either
/// the zero or the Nyquist frequency, `v(x) = Π_d (±1)^{i_d}`.
pub(crate) fn torus_null_modes(grid: &Grid) -> Vec<Vec<f64>> {
    let dim = grid.dim();
    (0..1usize << dim)
        .map(|bits| {
            (0..grid.len())
                .map(|x| {
                    let idx = grid.unravel(x);
                    let odd: usize = (0..dim).filter(|d| bits >> d & 1 == 1).map(|d| idx[d]).sum();
                    if odd.is_multiple_of(2) {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Adds `c Σ v vᵀ` over the torus null modes so full-torus operators become
/// invertible; `c` matches the mean diagonal.
pub(crate) fn add_null_modes(m: &mut DMatrix<f64>, grid: &Grid) {
    let n = m.nrows();
    let c = ((0..n).map(|i| m[(i, i)]).sum::<f64>() / (n * n) as f64).max(f64::MIN_POSITIVE);
    for v in torus_null_modes(grid) {
        let v = DVector::from_vec(v);
        m.ger(c, &v, &v, 1.0);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients.
pub(crate) fn pcg(apply: impl Fn(&[f64]) -> Vec<f64>, diag: &[f64], b: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return x;
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(v, d)| v / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        if !alpha.is_finite() {
            break;
        }
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= rel_tol * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Jacobi-preconditioned BiCGSTAB for the nonsymmetric case.
pub(crate) fn bicgstab(apply: impl Fn(&[f64]) -> Vec<f64>, diag: &[f64], b: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return x;
    }
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(diag).map(|(a, d)| a / d).collect() };
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = apply(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        if norm(&s) <= rel_tol * bnorm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            break;
        }
        let s_hat = precond(&s);
        let t = apply(&s_hat);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= rel_tol * bnorm || !omega.is_finite() || omega == 0.0 {
            break;
        }
    }
    x
}

/// Diagonal of `Gᵀ W G` on Ω via FFT correlations of `W_jk` with `d_j d_k`.
pub(crate) fn weighted_gram_diagonal(stencil: &[Vec<f64>], grid: &Grid, mask: &DomainMask, blocks: &[f64]) -> Vec<f64> {
    let dim = stencil.len();
    let fourier = Fourier::new(*grid);
    let mut acc = vec![0.0; grid.len()];
    for j in 0..dim {
        for k in 0..dim {
            let w: Vec<f64> = (0..grid.len()).map(|x| blocks[x * dim * dim + j * dim + k]).collect();
            if w.iter().all(|&v| v == 0.0) {
                continue;
            }
            let p: Vec<f64> = stencil[j].iter().zip(&stencil[k]).map(|(a, b)| a * b).collect();
            let wf = fourier.forward_real(&w);
            let pf = fourier.forward_real(&p);
            let prod: Vec<Complex64> = wf.iter().zip(&pf).map(|(a, b)| a * b.conj()).collect();
            for (a, v) in acc.iter_mut().zip(fourier.inverse_real(prod)) {
                *a += v;
            }
        }
    }
    mask.indices().iter().map(|&i| acc[i].max(f64::MIN_POSITIVE)).collect()
}
