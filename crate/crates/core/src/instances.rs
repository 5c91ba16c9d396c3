//! Reference problems used by the test suites, the CLI presets and the
//! Python bindings.
//!
//! Data are scaled by [`SCALE`]: at the smallest admissible ε the penalized
//! solution overshoots the constraint by an absolute amount of order
//! `ε ln(1+λ)`, so large thresholds keep that overshoot negligible relative
//! to `g`.

use crate::error::Result;
use crate::field::{DomainMask, Grid, ScalarField};
use crate::frgrad::FracOrder;
use crate::qvi::{
    contraction_certificate, estimate_sobolev_constant, Functional, Kernel, Outer, QVIConfig, QVIProblem, ThresholdOperator,
    Variant, VectorKernel,
};
use crate::vi::{EllipticCoefficients, PenaltyConfig, ProblemData, Threshold};

pub const SCALE: f64 = 1e4;
/// Newton tolerance of the reference configuration.
pub const NEWTON_TOL: f64 = 1e-6;
pub const OUTER_TOL: f64 = 1e-6;
pub const SOBOLEV_SEED: u64 = 1;

pub fn penalty_config() -> PenaltyConfig {
    PenaltyConfig { newton_tol: NEWTON_TOL, ..Default::default() }
}

pub fn qvi_config() -> QVIConfig {
    QVIConfig { outer_tol: OUTER_TOL, penalty: penalty_config(), ..Default::default() }
}

fn unit_box(dim: usize, n: usize) -> Result<DomainMask> {
    DomainMask::boxed(Grid::new(dim, 2.0, n)?, 1.0)
}

fn problem(mask: DomainMask, f: f64, g: f64) -> Result<ProblemData> {
    let grid = *mask.grid();
    let f = ScalarField::constant(grid, f).restrict(&mask)?;
    ProblemData::new(mask, FracOrder::new(0.5)?, EllipticCoefficients::identity(grid), f, Threshold::constant(grid, g)?)
}

/// `[-2, 2)`, `n = 64`, `Ω = (-1, 1)`, `σ = 1/2`, `A = I`, `f = 10 S`, `g = 2 S`.
pub fn binding_1d() -> Result<ProblemData> {
    problem(unit_box(1, 64)?, 10.0 * SCALE, 2.0 * SCALE)
}

/// As [`binding_1d`] with `f = S`; the constraint stays inactive.
pub fn inactive_1d() -> Result<ProblemData> {
    problem(unit_box(1, 64)?, SCALE, 2.0 * SCALE)
}

/// `[-2, 2)²`, `n = 32`, `Ω = (-1, 1)²`, `σ = 1/2`, `A = I`, `f = 10 S`, `g = 2 S`.
pub fn binding_2d() -> Result<ProblemData> {
    problem(unit_box(2, 32)?, 10.0 * SCALE, 2.0 * SCALE)
}

/// Symmetric instances with a name, in a fixed order.
pub fn vi_instances() -> Result<Vec<(&'static str, ProblemData)>> {
    Ok(vec![("binding_1d", binding_1d()?), ("inactive_1d", inactive_1d()?), ("binding_2d", binding_2d()?)])
}

fn qvi_problem() -> Result<QVIProblem> {
    let b = binding_1d()?;
    QVIProblem::new(b.mask().clone(), b.sigma(), b.coefficients().clone(), b.f().clone())
}

/// Separated operator `φ Γ` with the builtin `Γ`, `c₁` chosen so that the
/// contraction certificate gives `q = target_q`.
pub fn separated_qvi(target_q: f64) -> Result<(QVIProblem, ThresholdOperator)> {
    let p = qvi_problem()?;
    let grid = *p.mask().grid();
    let phi = ScalarField::from_fn(grid, |x| 2.0 * SCALE * (1.0 + 0.25 * x[0] * x[0]));
    let c_star = estimate_sobolev_constant(p.mask(), p.sigma(), SOBOLEV_SEED)?.constant;
    let a_star = p.coefficients().a_star();
    let eta0 = 1.0;
    // q(c₁) = k c₁ / (η₀ + c₁ |Ω|) with k read off a unit-c₁ certificate.
    let unit = ThresholdOperator::new(
        p.mask().clone(),
        p.sigma(),
        Variant::Separated { phi: phi.clone(), functional: Functional::Builtin { eta0, c1: 1.0 } },
    )?;
    let r = contraction_certificate(p.f(), &unit, c_star, a_star)?;
    let k = 2.0 * r.c_sharp * r.f_norm * r.gamma_rf;
    let c1 = target_q * eta0 / (k - target_q * p.mask().measure());
    let op = ThresholdOperator::new(
        p.mask().clone(),
        p.sigma(),
        Variant::Separated { phi, functional: Functional::Builtin { eta0, c1 } },
    )?;
    Ok((p, op))
}

fn saturating(grid: Grid) -> Outer {
    Outer::Saturating { base: ScalarField::constant(grid, 2.0 * SCALE), amp: SCALE, scale: SCALE }
}

/// One QVI per operator variant, all on the 1D binding data.
pub fn qvi_instances() -> Result<Vec<(&'static str, QVIProblem, ThresholdOperator)>> {
    let (p, sep) = separated_qvi(0.5)?;
    let grid = *p.mask().grid();
    let (mask, sigma) = (p.mask().clone(), p.sigma());
    let kernel = ThresholdOperator::new(
        mask.clone(),
        sigma,
        Variant::KernelIntegral { kernel: Kernel::Gaussian { amp: 1.0, width: 0.5 }, outer: saturating(grid) },
    )?;
    let fgrad = ThresholdOperator::new(
        mask.clone(),
        sigma,
        Variant::FracGradKernel {
            kernel: VectorKernel::Gaussian { amp: 1.0, width: 0.5, direction: [1.0, 0.0, 0.0] },
            outer: saturating(grid),
        },
    )?;
    let sup = ThresholdOperator::new(mask, sigma, Variant::Superposition { outer: saturating(grid) })?;
    Ok(vec![
        ("separated", p.clone(), sep),
        ("kernel_integral", p.clone(), kernel),
        ("frac_grad_kernel", p.clone(), fgrad),
        ("superposition", p, sup),
    ])
}
