use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Scalar(Vec<f64>),
    /// `N×N` row-major block per node.
    Matrix(Vec<f64>),
}

/// Coefficient field `A(x)` with ellipticity bounds `a_* |ξ|² ≤ Aξ·ξ` and
/// `|Aξ·η| ≤ a^* |ξ||η|`, checked exactly at every node on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticCoefficients {
    grid: Grid,
    kind: Kind,
    a_star: f64,
    a_upper: f64,
    symmetric: bool,
    constant: Option<f64>,
}

const BOUND_SLACK: f64 = 1e-12;

impl EllipticCoefficients {
    pub fn identity(grid: Grid) -> Self {
        Self::constant(grid, 1.0).expect("unit coefficient is elliptic")
    }

    pub fn constant(grid: Grid, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Ellipticity(format!("constant coefficient {a} must be positive")));
        }
        Ok(Self { grid, kind: Kind::Scalar(vec![a; grid.len()]), a_star: a, a_upper: a, symmetric: true, constant: Some(a) })
    }

    /// Isotropic `A(x) = a(x) I` with declared bounds.
    pub fn scalar(a: &ScalarField, a_star: f64, a_upper: f64) -> Result<Self> {
        check_bounds(a_star, a_upper)?;
        let (lo, hi) = (a.min(), a.max());
        if lo < a_star * (1.0 - BOUND_SLACK) || hi > a_upper * (1.0 + BOUND_SLACK) {
            return Err(Error::Ellipticity(format!("a(x) ranges over [{lo}, {hi}], declared [{a_star}, {a_upper}]")));
        }
        let constant = (lo == hi).then_some(lo);
        Ok(Self { grid: *a.grid(), kind: Kind::Scalar(a.values().to_vec()), a_star, a_upper, symmetric: true, constant })
    }

    /// Full matrix field, `blocks[x·N² + j·N + k] = A_jk(x)`; need not be symmetric.
    pub fn matrix(grid: Grid, blocks: Vec<f64>, a_star: f64, a_upper: f64) -> Result<Self> {
        check_bounds(a_star, a_upper)?;
        let dim = grid.dim();
        if blocks.len() != grid.len() * dim * dim {
            return Err(Error::InvalidParameter(format!(
                "matrix field needs {} entries, got {}",
                grid.len() * dim * dim,
                blocks.len()
            )));
        }
        if blocks.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { count: blocks.iter().filter(|v| !v.is_finite()).count() });
        }
        let mut symmetric = true;
        for (x, b) in blocks.chunks(dim * dim).enumerate() {
            let m = DMatrix::from_row_slice(dim, dim, b);
            let sym = (&m + m.transpose()) * 0.5;
            let scale = m.amax().max(f64::MIN_POSITIVE);
            if (&m - m.transpose()).amax() > 1e-14 * scale {
                symmetric = false;
            }
            let lo = sym.symmetric_eigenvalues().min();
            let hi = m.clone().svd(false, false).singular_values.max();
            if lo < a_star * (1.0 - BOUND_SLACK) {
                return Err(Error::Ellipticity(format!("node {x}: Aξ·ξ/|ξ|² reaches {lo} < a_* = {a_star}")));
            }
            if hi > a_upper * (1.0 + BOUND_SLACK) {
                return Err(Error::Ellipticity(format!("node {x}: |A| = {hi} > a^* = {a_upper}")));
            }
        }
        Ok(Self { grid, kind: Kind::Matrix(blocks), a_star, a_upper, symmetric, constant: None })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn a_star(&self) -> f64 {
        self.a_star
    }

    pub fn a_upper(&self) -> f64 {
        self.a_upper
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `Some(a)` when `A ≡ a I`.
    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    /// `A(x) w` for a node `x`.
    #[inline]
    pub fn apply(&self, x: usize, w: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        match &self.kind {
            Kind::Scalar(a) => {
                for (o, v) in out.iter_mut().zip(w) {
                    *o = a[x] * v;
                }
            }
            Kind::Matrix(b) => {
                let dim = w.len();
                let blk = &b[x * dim * dim..][..dim * dim];
                for j in 0..dim {
                    out[j] = (0..dim).map(|k| blk[j * dim + k] * w[k]).sum();
                }
            }
        }
        out
    }

    /// Row-major block of node `x` written into `out` (length `N²`).
    pub(crate) fn block_into(&self, x: usize, out: &mut [f64]) {
        let dim = self.grid.dim();
        match &self.kind {
            Kind::Scalar(a) => {
                out.fill(0.0);
                for j in 0..dim {
                    out[j * dim + j] = a[x];
                }
            }
            Kind::Matrix(b) => out.copy_from_slice(&b[x * dim * dim..][..dim * dim]),
        }
    }

    pub(crate) fn all_blocks(&self) -> Vec<f64> {
        let dim = self.grid.dim();
        let mut out = vec![0.0; self.grid.len() * dim * dim];
        for (x, blk) in out.chunks_mut(dim * dim).enumerate() {
            self.block_into(x, blk);
        }
        out
    }
}

fn check_bounds(a_star: f64, a_upper: f64) -> Result<()> {
    if !(a_star > 0.0) || !(a_upper >= a_star) || !a_upper.is_finite() {
        return Err(Error::Ellipticity(format!("need 0 < a_* ≤ a^*, got a_* = {a_star}, a^* = {a_upper}")));
    }
    Ok(())
}
