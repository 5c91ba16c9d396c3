//! Discrete embedding constants on `H^σ_0(Ω)`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{DomainMask, ScalarField};
use crate::frgrad::{FracOps, FracOrder};
use crate::linalg::{self, Factor};
use crate::sampling::random_smooth_field;

pub const SOBOLEV_RESTARTS: usize = 50;
pub const SOBOLEV_MAX_ITER: usize = 2000;
/// Largest Ω handled by the dense constant estimators.
pub const CONSTANT_MAX_NODES: usize = 4096;

/// Critical exponent `2^*`: `2N/(N-2σ)` when `σ < N/2`, `4` for `N = 1, σ = 1/2`,
/// and `∞` for `N = 1, σ > 1/2`.
pub fn sobolev_exponent(dim: usize, sigma: FracOrder) -> f64 {
    let (n, s) = (dim as f64, sigma.value());
    if 2.0 * s < n {
        2.0 * n / (n - 2.0 * s)
    } else if 2.0 * s == n {
        4.0
    } else {
        f64::INFINITY
    }
}

/// Conjugate exponent `2^# = 2^*/(2^*-1)`.
pub fn dual_exponent(dim: usize, sigma: FracOrder) -> f64 {
    let p = sobolev_exponent(dim, sigma);
    if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct SobolevEstimate {
    /// Best quotient `‖u‖_{L^{2^*}} / ‖u‖_{H^σ_0}` found; a lower bound for `C_*`.
    pub constant: f64,
    pub exponent: f64,
    /// Final quotient of each restart.
    pub restarts: Vec<f64>,
    pub converged: bool,
    pub witness: ScalarField,
}

struct Quotient {
    k: nalgebra::DMatrix<f64>,
    factor: Factor,
    h: f64,
}

impl Quotient {
    fn new(mask: &DomainMask, sigma: FracOrder) -> Result<Self> {
        if mask.is_full_torus() {
            return Err(Error::InvalidParameter("embedding constants need a proper subdomain".into()));
        }
        if mask.count() > CONSTANT_MAX_NODES {
            return Err(Error::GridTooLarge { nodes: mask.count(), limit: CONSTANT_MAX_NODES });
        }
        let ops = FracOps::new(*mask.grid(), sigma);
        let k = linalg::restricted_laplacian(&ops, mask);
        let k = (&k + k.transpose()) * 0.5;
        let factor = Factor::new(k.clone(), true)?;
        Ok(Self { k, factor, h: mask.grid().cell_volume() })
    }

    fn hnorm(&self, u: &[f64]) -> f64 {
        let v = DVector::from_column_slice(u);
        (self.h * v.dot(&(&self.k * &v))).max(0.0).sqrt()
    }

    fn lp(&self, u: &[f64], p: f64) -> f64 {
        let m = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m == 0.0 {
            return 0.0;
        }
        m * (self.h * u.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

/// Lower bound for the embedding constant `C_*` of `H^σ_0(Ω) ↪ L^{2^*}(Ω)`.
///
/// For finite `2^*` each restart runs the ascent `u ← K⁻¹(|u|^{p-2}u)`,
/// renormalized in `H^σ_0`, which increases the quotient monotonically because
/// `‖·‖_p^p` is convex. For `2^* = ∞` the maximum is exact:
/// `max_i ((K⁻¹)_ii / h^N)^{1/2}`.
pub fn estimate_sobolev_constant(mask: &DomainMask, sigma: FracOrder, seed: u64) -> Result<SobolevEstimate> {
    let q = Quotient::new(mask, sigma)?;
    let p = sobolev_exponent(mask.grid().dim(), sigma);
    let m = mask.count();
    if p.is_infinite() {
        let mut best = (0.0, 0);
        let mut cols = Vec::with_capacity(m);
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            let col = q.factor.solve(&e)?;
            let c = (col[i] / q.h).sqrt();
            if c > best.0 {
                best = (c, i);
            }
            cols.push(col);
        }
        let witness = ScalarField::scatter(mask, &cols[best.1]);
        return Ok(SobolevEstimate { constant: best.0, exponent: p, restarts: vec![best.0], converged: true, witness });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut restarts = Vec::with_capacity(SOBOLEV_RESTARTS);
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for _ in 0..SOBOLEV_RESTARTS {
        let mut u = random_smooth_field(mask, &mut rng, 4).gather(mask);
        if q.hnorm(&u) == 0.0 {
            u = vec![1.0; m];
        }
        let mut ratio = q.lp(&u, p) / q.hnorm(&u);
        let mut converged = false;
        for _ in 0..SOBOLEV_MAX_ITER {
            let rhs: Vec<f64> = u.iter().map(|v| v.abs().powf(p - 2.0) * v).collect();
            let v = q.factor.solve(&rhs)?;
            let n = q.hnorm(&v);
            u = v.into_iter().map(|x| x / n).collect();
            let next = q.lp(&u, p) / q.hnorm(&u);
            let done = (next - ratio).abs() <= 1e-12 * next;
            ratio = ratio.max(next);
            if done {
                converged = true;
                break;
            }
        }
        restarts.push(ratio);
        if best.as_ref().is_none_or(|b| ratio > b.0) {
            best = Some((ratio, u, converged));
        }
    }
    let (constant, u, converged) = best.expect("at least one restart");
    Ok(SobolevEstimate { constant, exponent: p, restarts, converged, witness: ScalarField::scatter(mask, &u) })
}

/// Discrete Poincaré constant `sup ‖u‖_{L²(Ω)} / ‖u‖_{H^σ_0}`, i.e.
/// `λ_min(K)^{-1/2}`, by inverse iteration.
pub fn poincare_constant(mask: &DomainMask, sigma: FracOrder) -> Result<f64> {
    let q = Quotient::new(mask, sigma)?;
    let mut u = vec![1.0; mask.count()];
    let mut lambda = f64::INFINITY;
    for _ in 0..10_000 {
        let v = q.factor.solve(&u)?;
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        u = v.into_iter().map(|x| x / n).collect();
        let uv = DVector::from_column_slice(&u);
        let next = uv.dot(&(&q.k * &uv));
        if (lambda - next).abs() <= 1e-14 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(lambda.sqrt().recip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{lp_norm, Grid, Region};

    fn mask(n: usize) -> DomainMask {
        DomainMask::boxed(Grid::new(1, 2.0, n).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn exponents() {
        let s = |v| FracOrder::new(v).unwrap();
        assert_eq!(sobolev_exponent(2, s(0.5)), 4.0);
        assert_eq!(sobolev_exponent(1, s(0.25)), 4.0);
        assert_eq!(sobolev_exponent(1, s(0.5)), 4.0);
        assert!(sobolev_exponent(1, s(0.9)).is_infinite());
        assert_eq!(dual_exponent(1, s(0.9)), 1.0);
        assert!((dual_exponent(3, s(0.5)) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn estimate_is_attained_by_witness() {
        let m = mask(64);
        let s = FracOrder::new(0.5).unwrap();
        let est = estimate_sobolev_constant(&m, s, 1).unwrap();
        assert!(est.constant.is_finite() && est.constant > 0.0);
        let ops = FracOps::new(*m.grid(), s);
        for c in [1.0, -3.0, 1e3] {
            let w = est.witness.scale(c);
            let r = lp_norm(&w, est.exponent, Region::Whole).unwrap() / ops.hsigma_norm(&w, &m).unwrap();
            assert!((r - est.constant).abs() <= 1e-10 * est.constant);
        }
        assert!(est.restarts.iter().all(|&r| r <= est.constant));
    }

    #[test]
    fn estimate_stable_under_refinement() {
        let s = FracOrder::new(0.5).unwrap();
        let a = estimate_sobolev_constant(&mask(64), s, 2).unwrap().constant;
        let b = estimate_sobolev_constant(&mask(128), s, 2).unwrap().constant;
        assert!((a - b).abs() <= 0.1 * a, "{a} vs {b}");
    }

    #[test]
    fn infinite_exponent_is_exact() {
        let m = mask(32);
        let s = FracOrder::new(0.9).unwrap();
        let est = estimate_sobolev_constant(&m, s, 0).unwrap();
        assert!(est.exponent.is_infinite() && est.constant > 0.0 && est.constant.is_finite());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ops = FracOps::new(*m.grid(), s);
        for _ in 0..20 {
            let u = random_smooth_field(&m, &mut rng, 4);
            let r = u.values().iter().fold(0.0f64, |a, v| a.max(v.abs())) / ops.hsigma_norm(&u, &m).unwrap();
            assert!(r <= est.constant * (1.0 + 1e-12));
        }
    }

    #[test]
    fn poincare_bounds_random_fields() {
        let m = mask(64);
        let s = FracOrder::new(0.5).unwrap();
        let cp = poincare_constant(&m, s).unwrap();
        let ops = FracOps::new(*m.grid(), s);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let u = random_smooth_field(&m, &mut rng, 4);
            let r = lp_norm(&u, 2.0, Region::Whole).unwrap() / ops.hsigma_norm(&u, &m).unwrap();
            assert!(r <= cp * (1.0 + 1e-10));
        }
        assert!(estimate_sobolev_constant(&DomainMask::full_torus(*m.grid()), s, 0).is_err());
    }
}
