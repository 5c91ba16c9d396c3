//! Riesz potential, fractional gradient `D^σ`, its adjoint divergence and the
//! fractional Laplacian as Fourier multipliers on the periodic box.
//!
//! With `κ = (π/L) k` the physical angular frequency of bin `k`, the gradient
//! symbol of component `j` is `i κ_j |κ|^{σ-1}`. The zero frequency is mapped
//! to zero by every multiplier, and so is the Nyquist bin of the axis being
//! differentiated (an odd symbol cannot be real there). The Laplacian symbol is
//! the sum of squared gradient symbols, so `(-Δ)^σ = -div^σ D^σ` holds exactly
//! in spectral arithmetic; off the Nyquist planes it equals `|κ|^{2σ}`.

mod fourier;
mod quadrature;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{DomainMask, Grid, Region, ScalarField, VectorField};

pub(crate) use fourier::Fourier;
pub use quadrature::{quadrature_frac_gradient, QUADRATURE_MAX_NODES};

/// Order `σ ∈ (0, 1]` of the fractional gradient; `σ = 1` is the classical gradient.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma <= 1.0 {
            Ok(Self(sigma))
        } else {
            Err(Error::InvalidParameter(format!("fractional order {sigma} not in (0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `γ_{N,α} = Γ((N-α)/2) / (π^{N/2} 2^α Γ(α/2))`, the Riesz potential constant.
pub fn riesz_constant(dim: usize, alpha: f64) -> Result<f64> {
    let n = dim as f64;
    if !(alpha > 0.0 && alpha < n) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} not in (0, {n})")));
    }
    use statrs::function::gamma::gamma;
    Ok(gamma((n - alpha) / 2.0) / (std::f64::consts::PI.powf(n / 2.0) * 2f64.powf(alpha) * gamma(alpha / 2.0)))
}

/// Multiplier table for one grid and one order, with its FFT plans.
///
/// Immutable after construction and cheap to share across threads.
#[derive(Debug, Clone)]
pub struct FracOps {
    grid: Grid,
    sigma: FracOrder,
    fourier: Fourier,
    /// Real factor `μ_j(k)` with gradient symbol `i μ_j(k)`; one vec per axis.
    grad_symbol: Vec<Vec<f64>>,
    /// `Σ_j μ_j(k)²`
    lap_symbol: Vec<f64>,
}

impl FracOps {
    pub fn new(grid: Grid, sigma: FracOrder) -> Self {
        let dim = grid.dim();
        let n = grid.resolution();
        let kscale = std::f64::consts::PI / grid.extent();
        let s = sigma.value();
        let mut grad_symbol = vec![vec![0.0; grid.len()]; dim];
        let mut lap_symbol = vec![0.0; grid.len()];
        for flat in 0..grid.len() {
            let idx = grid.unravel(flat);
            let mut kappa = [0.0; 3];
            let mut nyquist = [false; 3];
            for d in 0..dim {
                let k = fourier::signed_frequency(idx[d], n);
                kappa[d] = kscale * k as f64;
                nyquist[d] = k == -(n as i64) / 2;
            }
            let mag = kappa[..dim].iter().map(|k| k * k).sum::<f64>().sqrt();
            if mag == 0.0 {
                continue;
            }
            let radial = mag.powf(s - 1.0);
            for d in 0..dim {
                if !nyquist[d] {
                    let mu = kappa[d] * radial;
                    grad_symbol[d][flat] = mu;
                    lap_symbol[flat] += mu * mu;
                }
            }
        }
        Self { grid, sigma, fourier: Fourier::new(grid), grad_symbol, lap_symbol }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sigma(&self) -> FracOrder {
        self.sigma
    }

    /// Gradient symbol factor `μ_j` at flat frequency index `k` (symbol is `i μ_j`).
    pub fn symbol(&self, j: usize, k: usize) -> f64 {
        self.grad_symbol[j][k]
    }

    pub(crate) fn gradient_raw(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let spec = self.fourier.forward_real(u);
        self.grad_symbol
            .iter()
            .map(|mu| {
                let comp: Vec<Complex64> = spec.iter().zip(mu).map(|(c, &m)| Complex64::new(-m * c.im, m * c.re)).collect();
                self.fourier.inverse_real(comp)
            })
            .collect()
    }

    pub(crate) fn divergence_raw(&self, w: &[Vec<f64>]) -> Vec<f64> {
        let mut acc = vec![Complex64::default(); self.grid.len()];
        for (comp, mu) in w.iter().zip(&self.grad_symbol) {
            let spec = self.fourier.forward_real(comp);
            for ((a, c), &m) in acc.iter_mut().zip(&spec).zip(mu) {
                *a += Complex64::new(-m * c.im, m * c.re);
            }
        }
        self.fourier.inverse_real(acc)
    }

    pub(crate) fn laplacian_raw(&self, u: &[f64]) -> Vec<f64> {
        let mut spec = self.fourier.forward_real(u);
        for (c, &m) in spec.iter_mut().zip(&self.lap_symbol) {
            *c *= m;
        }
        self.fourier.inverse_real(spec)
    }

    /// Applies an arbitrary real radial-in-frequency multiplier given per bin.
    pub(crate) fn apply_multiplier_raw(&self, u: &[f64], symbol: &[f64]) -> Vec<f64> {
        let mut spec = self.fourier.forward_real(u);
        for (c, &m) in spec.iter_mut().zip(symbol) {
            *c *= m;
        }
        self.fourier.inverse_real(spec)
    }

    pub(crate) fn laplacian_symbol(&self) -> &[f64] {
        &self.lap_symbol
    }

    pub fn gradient(&self, u: &ScalarField) -> Result<VectorField> {
        self.check(u.grid())?;
        let comps = self.gradient_raw(u.values());
        VectorField::new(comps.into_iter().map(|c| ScalarField::from_vec(self.grid, c)).collect())
    }

    pub fn divergence(&self, w: &VectorField) -> Result<ScalarField> {
        self.check(w.grid())?;
        let comps: Vec<Vec<f64>> = w.components().iter().map(|c| c.values().to_vec()).collect();
        Ok(ScalarField::from_vec(self.grid, self.divergence_raw(&comps)))
    }

    pub fn laplacian(&self, u: &ScalarField) -> Result<ScalarField> {
        self.check(u.grid())?;
        Ok(ScalarField::from_vec(self.grid, self.laplacian_raw(u.values())))
    }

    /// `‖D^σ u‖_{L²(ℝ^N)}`; `u` must vanish outside Ω.
    pub fn hsigma_norm(&self, u: &ScalarField, mask: &DomainMask) -> Result<f64> {
        self.check(u.grid())?;
        let outside = u.max_abs_outside(mask);
        if outside > 1e-14 {
            return Err(Error::NonzeroOutsideDomain { max_outside: outside });
        }
        Ok(self.hsigma_norm_unchecked(u.values()))
    }

    pub(crate) fn hsigma_norm_unchecked(&self, u: &[f64]) -> f64 {
        // Parseval: h^N Σ_x |D u|² = h^N / n^N Σ_k |μ(k)|² |û(k)|²
        let spec = self.fourier.forward_real(u);
        let s: f64 = spec.iter().zip(&self.lap_symbol).map(|(c, &m)| m * c.norm_sqr()).sum();
        (self.grid.cell_volume() * s / self.grid.len() as f64).sqrt()
    }

    /// Magnitude of the mean of `u` relative to its max norm; the torus zero
    /// mode that every multiplier discards.
    pub fn zero_mode_fraction(&self, u: &ScalarField) -> f64 {
        let mean = u.values().iter().sum::<f64>() / self.grid.len() as f64;
        let max = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            0.0
        } else {
            mean.abs() / max
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if *grid == self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// `I_α u`: multiplier `|κ|^{-α}`, zero mode mapped to zero.
pub fn riesz_potential(u: &ScalarField, alpha: f64) -> Result<ScalarField> {
    let grid = *u.grid();
    let upper = 1.0f64.min(grid.dim() as f64);
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} not in (0, {upper})")));
    }
    let fourier = Fourier::new(grid);
    let n = grid.resolution();
    let kscale = std::f64::consts::PI / grid.extent();
    let mut spec = fourier.forward_real(u.values());
    for (flat, c) in spec.iter_mut().enumerate() {
        let idx = grid.unravel(flat);
        let mag2: f64 = (0..grid.dim()).map(|d| (kscale * fourier::signed_frequency(idx[d], n) as f64).powi(2)).sum();
        *c *= if mag2 == 0.0 { 0.0 } else { mag2.powf(-alpha / 2.0) };
    }
    Ok(ScalarField::from_vec(grid, fourier.inverse_real(spec)))
}

pub fn frac_gradient(u: &ScalarField, sigma: FracOrder) -> Result<VectorField> {
    FracOps::new(*u.grid(), sigma).gradient(u)
}

pub fn frac_divergence(w: &VectorField, sigma: FracOrder) -> Result<ScalarField> {
    FracOps::new(*w.grid(), sigma).divergence(w)
}

pub fn frac_laplacian(u: &ScalarField, sigma: FracOrder) -> Result<ScalarField> {
    FracOps::new(*u.grid(), sigma).laplacian(u)
}

pub fn hsigma_norm(u: &ScalarField, mask: &DomainMask, sigma: FracOrder) -> Result<f64> {
    FracOps::new(*u.grid(), sigma).hsigma_norm(u, mask)
}

/// `‖D^σ u - D^1 u‖_{L²}`, the distance to the classical gradient.
pub fn distance_to_classical_gradient(u: &ScalarField, sigma: FracOrder) -> Result<f64> {
    let ds = frac_gradient(u, sigma)?;
    let d1 = frac_gradient(u, FracOrder(1.0))?;
    let diff = ds.sub(&d1)?;
    crate::field::lp_norm(&diff.magnitude(), 2.0, Region::Whole)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inner, lp_norm};
    use std::f64::consts::PI;

    fn grid1(n: usize) -> Grid {
        Grid::new(1, PI, n).unwrap()
    }

    #[test]
    fn order_validation() {
        assert!(FracOrder::new(0.0).is_err());
        assert!(FracOrder::new(1.0).is_ok());
        assert!(FracOrder::new(1.1).is_err());
        assert!(FracOrder::new(f64::NAN).is_err());
    }

    #[test]
    fn riesz_constant_values() {
        // γ_{1,1/2} = Γ(1/4) / (√π √2 Γ(1/4)) = 1/√(2π)
        let g = riesz_constant(1, 0.5).unwrap();
        assert!((g - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!(riesz_constant(2, 0.3).unwrap() > 0.0);
        assert!(riesz_constant(1, 1.0).is_err());
    }

    #[test]
    fn gradient_of_pure_mode() {
        let g = grid1(64);
        for k in [1.0f64, 2.0, 5.0] {
            for s in [0.25, 0.5, 0.75, 1.0] {
                let u = ScalarField::from_fn(g, |x| (k * x[0]).sin());
                let du = frac_gradient(&u, FracOrder::new(s).unwrap()).unwrap();
                let amp = k.powf(s);
                for (i, v) in du.component(0).values().iter().enumerate() {
                    let expect = amp * (k * g.coordinate(i)).cos();
                    assert!((v - expect).abs() < 1e-12 * amp, "k={k} s={s}");
                }
            }
        }
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = Grid::new(2, 1.0, 16).unwrap();
        let u = ScalarField::constant(g, 3.5);
        let du = frac_gradient(&u, FracOrder::new(0.4).unwrap()).unwrap();
        assert!(du.magnitude().max() < 1e-13);
    }

    #[test]
    fn laplacian_of_pure_mode() {
        let g = grid1(64);
        let u = ScalarField::from_fn(g, |x| (3.0 * x[0]).sin());
        let lu = frac_laplacian(&u, FracOrder::new(0.3).unwrap()).unwrap();
        let amp = 3f64.powf(0.6);
        for (i, v) in lu.values().iter().enumerate() {
            assert!((v - amp * (3.0 * g.coordinate(i)).sin()).abs() < 1e-12);
        }
        let l1 = frac_laplacian(&u, FracOrder::new(1.0).unwrap()).unwrap();
        for (i, v) in l1.values().iter().enumerate() {
            assert!((v - 9.0 * (3.0 * g.coordinate(i)).sin()).abs() < 1e-11);
        }
    }

    #[test]
    fn riesz_potential_on_mode_and_zero() {
        let g = grid1(64);
        let u = ScalarField::from_fn(g, |x| (4.0 * x[0]).sin());
        let iu = riesz_potential(&u, 0.3).unwrap();
        let amp = 4f64.powf(-0.3);
        for (i, v) in iu.values().iter().enumerate() {
            assert!((v - amp * (4.0 * g.coordinate(i)).sin()).abs() < 1e-12);
        }
        let z = riesz_potential(&ScalarField::zeros(g), 0.5).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        assert!(riesz_potential(&u, 1.0).is_err());
        assert!(riesz_potential(&u, 0.0).is_err());
    }

    #[test]
    fn riesz_potential_small_alpha_is_near_identity() {
        let g = grid1(64);
        let u = ScalarField::from_fn(g, |x| x[0].sin() + 0.5 * (2.0 * x[0]).cos() + 0.1 * (3.0 * x[0]).sin());
        let iu = riesz_potential(&u, 1e-4).unwrap();
        // max over modes of |k^{-α} - 1| · amplitude, k ≤ 3
        let bound = (1.0 - 3f64.powf(-1e-4)) * 1.6;
        let err = iu.sub(&u).unwrap().values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= bound + 1e-12);
        assert!(err < 1e-6 * 200.0);
    }

    #[test]
    fn divergence_of_zero() {
        let g = grid1(32);
        let d = frac_divergence(&VectorField::zeros(g), FracOrder::new(0.5).unwrap()).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hsigma_norm_checks_support() {
        let g = Grid::new(1, 2.0, 64).unwrap();
        let mask = DomainMask::boxed(g, 1.0).unwrap();
        let s = FracOrder::new(0.5).unwrap();
        let bump = ScalarField::from_fn(g, |x| (1.0 - x[0] * x[0]).max(0.0).powi(2));
        let n1 = hsigma_norm(&bump, &mask, s).unwrap();
        let n3 = hsigma_norm(&bump.scale(-3.0), &mask, s).unwrap();
        assert!((n3 - 3.0 * n1).abs() < 1e-12 * n1);
        assert_eq!(hsigma_norm(&ScalarField::zeros(g), &mask, s).unwrap(), 0.0);
        let wide = ScalarField::constant(g, 1.0);
        assert!(matches!(hsigma_norm(&wide, &mask, s), Err(Error::NonzeroOutsideDomain { .. })));
    }

    #[test]
    fn hsigma_norm_matches_gradient_norm() {
        let g = Grid::new(2, 2.0, 16).unwrap();
        let mask = DomainMask::boxed(g, 1.0).unwrap();
        let ops = FracOps::new(g, FracOrder::new(0.7).unwrap());
        let u = ScalarField::from_fn(g, |x| ((1.0 - x[0] * x[0]).max(0.0) * (1.0 - x[1] * x[1]).max(0.0)).powi(2) * (1.0 + x[0]));
        let via_grad = lp_norm(&ops.gradient(&u).unwrap().magnitude(), 2.0, Region::Whole).unwrap();
        let direct = ops.hsigma_norm(&u, &mask).unwrap();
        assert!((via_grad - direct).abs() < 1e-12 * direct);
        let du = ops.gradient(&u).unwrap();
        assert!((inner(&du, &du).unwrap().sqrt() - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn symbol_is_odd_and_has_modulus_kappa_sigma() {
        let g = Grid::new(2, 1.5, 16).unwrap();
        let ops = FracOps::new(g, FracOrder::new(0.6).unwrap());
        let n = 16;
        let kscale = PI / 1.5;
        for flat in 0..g.len() {
            let idx = g.unravel(flat);
            let neg = g.ravel(&[(n - idx[0]) % n, (n - idx[1]) % n]);
            for j in 0..2 {
                assert_eq!(ops.symbol(j, flat), -ops.symbol(j, neg));
            }
            let nyq = idx[..2].contains(&(n / 2));
            if !nyq && flat != 0 {
                let k0 = fourier::signed_frequency(idx[0], n) as f64 * kscale;
                let k1 = fourier::signed_frequency(idx[1], n) as f64 * kscale;
                let m = (ops.symbol(0, flat).powi(2) + ops.symbol(1, flat).powi(2)).sqrt();
                let want = (k0 * k0 + k1 * k1).sqrt().powf(0.6);
                assert!((m - want).abs() < 1e-12 * want);
            }
        }
        assert_eq!(ops.symbol(0, 0), 0.0);
    }
}
