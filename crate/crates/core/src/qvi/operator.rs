use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{DomainMask, Grid, ScalarField};
use crate::frgrad::{FracOps, FracOrder};
use crate::sampling::random_smooth_field;
use crate::vi::Threshold;

use super::sobolev::poincare_constant;

/// Scalar kernel `ϑ(x, y)`, `x` on the grid and `y` in Ω.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// `amp · exp(-|x-y|²/(2 width²))` with periodic distance.
    Gaussian { amp: f64, width: f64 },
    /// Rows indexed by grid node, columns by Ω node (mask order).
    Dense(DMatrix<f64>),
}

/// Vector kernel `Θ(x, y)` paired with `D^σu(y)` over the whole grid.
#[derive(Debug, Clone)]
pub enum VectorKernel {
    /// `amp · exp(-|x-y|²/(2 width²)) · direction`.
    Gaussian { amp: f64, width: f64, direction: [f64; 3] },
    /// One grid × grid matrix per component.
    Dense(Vec<DMatrix<f64>>),
}

/// Outer function `F(x, w)` with `ν_G ≤ F(x, w) ≤ φ(|w|)`.
#[derive(Debug, Clone)]
pub enum Outer {
    /// `base(x) + coeff · w²`
    Quadratic { base: ScalarField, coeff: f64 },
    /// `base(x) + amp · w²/(scale² + w²)`
    Saturating { base: ScalarField, amp: f64, scale: f64 },
}

impl Outer {
    fn base(&self) -> &ScalarField {
        match self {
            Outer::Quadratic { base, .. } | Outer::Saturating { base, .. } => base,
        }
    }

    fn validate(&self, grid: &Grid) -> Result<f64> {
        let base = self.base();
        if base.grid() != grid {
            return Err(Error::GridMismatch);
        }
        let ok = match *self {
            Outer::Quadratic { coeff, .. } => coeff >= 0.0 && coeff.is_finite(),
            Outer::Saturating { amp, scale, .. } => amp >= 0.0 && amp.is_finite() && scale > 0.0,
        };
        if !ok {
            return Err(Error::InvalidParameter("outer function coefficients must be nonnegative".into()));
        }
        let floor = base.min();
        if !(floor > 0.0) {
            return Err(Error::ThresholdBelowFloor { min_g: floor, nu: 0.0 });
        }
        Ok(floor)
    }

    pub fn eval(&self, x: usize, w: f64) -> f64 {
        match *self {
            Outer::Quadratic { ref base, coeff } => base.values()[x] + coeff * w * w,
            Outer::Saturating { ref base, amp, scale } => base.values()[x] + amp * w * w / (scale * scale + w * w),
        }
    }

    /// Upper envelope `φ(t) ≥ F(x, w)` for `|w| ≤ t`.
    pub fn envelope(&self, t: f64) -> f64 {
        match *self {
            Outer::Quadratic { ref base, coeff } => base.max() + coeff * t * t,
            Outer::Saturating { ref base, amp, .. } => base.max() + amp,
        }
    }
}

pub type ModulusFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FunctionalFn = Arc<dyn Fn(&ScalarField, &[Vec<f64>]) -> f64 + Send + Sync>;

/// Declared bounds of `Γ` on the ball `B_R`: `η(R) ≤ Γ ≤ E(R)` and Lipschitz modulus `γ(R)`.
#[derive(Clone)]
pub struct Moduli {
    pub eta: ModulusFn,
    pub upper: ModulusFn,
    pub gamma: ModulusFn,
}

impl fmt::Debug for Moduli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Moduli { .. }")
    }
}

/// The functional `Γ` of the separated operator `φ(x) Γ(u)`.
#[derive(Clone)]
pub enum Functional {
    Constant(f64),
    /// `η₀ + c₁ ∫_Ω (1 + u² + |D^σu|²)^{1/2}`
    Builtin {
        eta0: f64,
        c1: f64,
    },
    /// Arbitrary `Γ(u, D^σu)` bounded below by `floor`, with optional declared moduli.
    Custom {
        eval: FunctionalFn,
        floor: f64,
        moduli: Option<Moduli>,
    },
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::Constant(c) => write!(f, "Constant({c})"),
            Functional::Builtin { eta0, c1 } => write!(f, "Builtin {{ eta0: {eta0}, c1: {c1} }}"),
            Functional::Custom { floor, moduli, .. } => {
                write!(f, "Custom {{ floor: {floor}, moduli: {} }}", if moduli.is_some() { "declared" } else { "none" })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Variant {
    KernelIntegral { kernel: Kernel, outer: Outer },
    FracGradKernel { kernel: VectorKernel, outer: Outer },
    Superposition { outer: Outer },
    Separated { phi: ScalarField, functional: Functional },
}

/// Threshold operator `u ↦ G[u]` with values bounded below by `ν_G > 0`.
#[derive(Debug, Clone)]
pub struct ThresholdOperator {
    mask: DomainMask,
    ops: Arc<FracOps>,
    variant: Variant,
    nu: f64,
    poincare: OnceLock<f64>,
}

/// Moduli of `Γ` evaluated at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuliAt {
    pub eta: f64,
    pub upper: f64,
    pub gamma: f64,
}

fn periodic_dist2(grid: &Grid, a: usize, b: usize) -> f64 {
    let (xa, xb) = (grid.node(a), grid.node(b));
    let period = 2.0 * grid.extent();
    (0..grid.dim())
        .map(|d| {
            let mut t = xa[d] - xb[d];
            t -= period * (t / period).round();
            t * t
        })
        .sum()
}

impl ThresholdOperator {
    pub fn new(mask: DomainMask, sigma: FracOrder, variant: Variant) -> Result<Self> {
        let grid = *mask.grid();
        let nu = match &variant {
            Variant::KernelIntegral { kernel, outer } => {
                match kernel {
                    Kernel::Gaussian { amp, width } => {
                        if !amp.is_finite() || !(*width > 0.0) {
                            return Err(Error::InvalidParameter("gaussian kernel needs finite amp and width > 0".into()));
                        }
                    }
                    Kernel::Dense(m) => {
                        if m.nrows() != grid.len() || m.ncols() != mask.count() {
                            return Err(Error::InvalidParameter("kernel matrix must be grid × Ω".into()));
                        }
                    }
                }
                outer.validate(&grid)?
            }
            Variant::FracGradKernel { kernel, outer } => {
                match kernel {
                    VectorKernel::Gaussian { amp, width, .. } => {
                        if !amp.is_finite() || !(*width > 0.0) {
                            return Err(Error::InvalidParameter("gaussian kernel needs finite amp and width > 0".into()));
                        }
                    }
                    VectorKernel::Dense(ms) => {
                        if ms.len() != grid.dim() || ms.iter().any(|m| m.nrows() != grid.len() || m.ncols() != grid.len()) {
                            return Err(Error::InvalidParameter("vector kernel must hold N grid × grid matrices".into()));
                        }
                    }
                }
                outer.validate(&grid)?
            }
            Variant::Superposition { outer } => outer.validate(&grid)?,
            Variant::Separated { phi, functional } => {
                if phi.grid() != &grid {
                    return Err(Error::GridMismatch);
                }
                let floor = match functional {
                    Functional::Constant(c) => *c,
                    Functional::Builtin { eta0, c1 } => {
                        if !(*c1 >= 0.0) {
                            return Err(Error::InvalidParameter("c1 must be nonnegative".into()));
                        }
                        eta0 + c1 * mask.measure()
                    }
                    Functional::Custom { floor, .. } => *floor,
                };
                let phi_min = phi.min();
                if !(floor > 0.0) || !(phi_min > 0.0) {
                    return Err(Error::ThresholdBelowFloor { min_g: phi_min * floor, nu: 0.0 });
                }
                phi_min * floor
            }
        };
        let ops = Arc::new(FracOps::new(grid, sigma));
        Ok(Self { mask, ops, variant, nu, poincare: OnceLock::new() })
    }

    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    pub fn sigma(&self) -> FracOrder {
        self.ops.sigma()
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    /// Floor `ν_G` of every output.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            Variant::KernelIntegral { .. } => "kernel_integral",
            Variant::FracGradKernel { .. } => "frac_grad_kernel",
            Variant::Superposition { .. } => "superposition",
            Variant::Separated { .. } => "separated",
        }
    }

    fn check_input(&self, u: &ScalarField) -> Result<()> {
        if u.grid() != self.mask.grid() {
            return Err(Error::GridMismatch);
        }
        let outside = u.max_abs_outside(&self.mask);
        if outside > 0.0 {
            return Err(Error::NonzeroOutsideDomain { max_outside: outside });
        }
        Ok(())
    }

    /// `Γ(u)` for the separated variant.
    pub fn functional_value(&self, u: &ScalarField) -> Result<f64> {
        self.check_input(u)?;
        match &self.variant {
            Variant::Separated { functional, .. } => Ok(self.gamma_of(functional, u)),
            _ => Err(Error::InvalidParameter("functional value is only defined for the separated variant".into())),
        }
    }

    fn gamma_of(&self, functional: &Functional, u: &ScalarField) -> f64 {
        match functional {
            Functional::Constant(c) => *c,
            Functional::Builtin { eta0, c1 } => {
                let du = self.ops.gradient_raw(u.values());
                let s: f64 = self
                    .mask
                    .indices()
                    .iter()
                    .map(|&i| {
                        let d2: f64 = du.iter().map(|c| c[i] * c[i]).sum();
                        (1.0 + u.values()[i].powi(2) + d2).sqrt()
                    })
                    .sum();
                eta0 + c1 * self.mask.grid().cell_volume() * s
            }
            Functional::Custom { eval, .. } => eval(u, &self.ops.gradient_raw(u.values())),
        }
    }

    /// `G[u]`, a threshold with floor `ν_G`.
    pub fn apply(&self, u: &ScalarField) -> Result<Threshold> {
        self.check_input(u)?;
        let grid = *self.mask.grid();
        let h = grid.cell_volume();
        let values: Vec<f64> = match &self.variant {
            Variant::Superposition { outer } => (0..grid.len()).map(|x| outer.eval(x, u.values()[x])).collect(),
            Variant::KernelIntegral { kernel, outer } => {
                let inside = u.gather(&self.mask);
                let w: Vec<f64> = match kernel {
                    Kernel::Dense(m) => (m * nalgebra::DVector::from_column_slice(&inside) * h).iter().copied().collect(),
                    Kernel::Gaussian { amp, width } => {
                        let idx = self.mask.indices();
                        (0..grid.len())
                            .into_par_iter()
                            .map(|x| {
                                let s: f64 = idx
                                    .iter()
                                    .zip(&inside)
                                    .map(|(&y, &v)| (-periodic_dist2(&grid, x, y) / (2.0 * width * width)).exp() * v)
                                    .sum();
                                amp * h * s
                            })
                            .collect()
                    }
                };
                w.iter().enumerate().map(|(x, &wx)| outer.eval(x, wx)).collect()
            }
            Variant::FracGradKernel { kernel, outer } => {
                let du = self.ops.gradient_raw(u.values());
                let w: Vec<f64> = match kernel {
                    VectorKernel::Dense(ms) => {
                        let mut acc = nalgebra::DVector::zeros(grid.len());
                        for (m, c) in ms.iter().zip(&du) {
                            acc += m * nalgebra::DVector::from_column_slice(c);
                        }
                        acc.iter().map(|v| v * h).collect()
                    }
                    VectorKernel::Gaussian { amp, width, direction } => {
                        let proj: Vec<f64> =
                            (0..grid.len()).map(|y| du.iter().zip(direction).map(|(c, d)| c[y] * d).sum()).collect();
                        (0..grid.len())
                            .into_par_iter()
                            .map(|x| {
                                let s: f64 = proj
                                    .iter()
                                    .enumerate()
                                    .map(|(y, &p)| (-periodic_dist2(&grid, x, y) / (2.0 * width * width)).exp() * p)
                                    .sum();
                                amp * h * s
                            })
                            .collect()
                    }
                };
                w.iter().enumerate().map(|(x, &wx)| outer.eval(x, wx)).collect()
            }
            Variant::Separated { phi, functional } => {
                let gamma = self.gamma_of(functional, u);
                phi.values().iter().map(|p| p * gamma).collect()
            }
        };
        let min_g = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_g >= self.nu * (1.0 - 1e-12)) {
            return Err(Error::OperatorBelowFloor { min_g, nu: self.nu });
        }
        let values = values.into_iter().map(|v| v.max(self.nu)).collect();
        Threshold::new(ScalarField::new(grid, values)?, self.nu)
    }

    fn poincare(&self) -> Result<f64> {
        if let Some(c) = self.poincare.get() {
            return Ok(*c);
        }
        let c = poincare_constant(&self.mask, self.ops.sigma())?;
        Ok(*self.poincare.get_or_init(|| c))
    }

    /// `η(R)`, `E(R)`, `γ(R)` of the separated functional.
    ///
    /// The builtin functional uses `γ = 2 c₁ |Ω|^{1/2} max(1, C_P)`: the
    /// integrand is 1-Lipschitz in `(u, D^σu)` and both `L²(Ω)` norms are
    /// controlled by `max(1, C_P) ‖·‖_{H^σ_0}`.
    pub fn moduli(&self, radius: f64) -> Result<ModuliAt> {
        let Variant::Separated { functional, .. } = &self.variant else {
            return Err(Error::InvalidParameter("moduli are only defined for the separated variant".into()));
        };
        match functional {
            Functional::Constant(c) => Ok(ModuliAt { eta: *c, upper: *c, gamma: 0.0 }),
            Functional::Builtin { eta0, c1 } => {
                let cp = self.poincare()?;
                let m = self.mask.measure();
                Ok(ModuliAt {
                    eta: eta0 + c1 * m,
                    upper: eta0 + c1 * (m + m.sqrt() * (1.0 + cp) * radius),
                    gamma: 2.0 * c1 * m.sqrt() * cp.max(1.0),
                })
            }
            Functional::Custom { moduli: Some(md), .. } => {
                Ok(ModuliAt { eta: (md.eta)(radius), upper: (md.upper)(radius), gamma: (md.gamma)(radius) })
            }
            Functional::Custom { moduli: None, .. } => Err(Error::ModuliNotDeclared),
        }
    }

    /// Samples `pairs` pairs in `B_R` (half of them close pairs) and counts
    /// violations of the declared moduli.
    pub fn falsify_moduli(&self, radius: f64, pairs: usize, seed: u64) -> Result<Falsification> {
        let md = self.moduli(radius)?;
        let Variant::Separated { functional, .. } = &self.variant else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = Falsification { pairs, ..Default::default() };
        let tol = 1e-10;
        let sample = |rng: &mut ChaCha8Rng, r: f64| -> Result<ScalarField> {
            let w = random_smooth_field(&self.mask, rng, 4);
            let n = self.ops.hsigma_norm(&w, &self.mask)?;
            Ok(if n > 0.0 { w.scale(r / n) } else { w })
        };
        for i in 0..pairs {
            let r1 = radius * rng.random_range(0.0..1.0);
            let u1 = sample(&mut rng, r1)?;
            let u2 = if i % 2 == 0 {
                let r2 = radius * rng.random_range(0.0..1.0);
                sample(&mut rng, r2)?
            } else {
                let d = sample(&mut rng, radius * 1e-3)?;
                let cand = u1.add(&d)?;
                let n = self.ops.hsigma_norm(&cand, &self.mask)?;
                if n > radius {
                    cand.scale(radius / n)
                } else {
                    cand
                }
            };
            let (g1, g2) = (self.gamma_of(functional, &u1), self.gamma_of(functional, &u2));
            for g in [g1, g2] {
                if g < md.eta * (1.0 - tol) {
                    report.lower_violations += 1;
                }
                if g > md.upper * (1.0 + tol) {
                    report.upper_violations += 1;
                }
            }
            let dist = self.ops.hsigma_norm(&u1.sub(&u2)?, &self.mask)?;
            if dist > 0.0 {
                let ratio = (g1 - g2).abs() / dist;
                report.worst_lipschitz_ratio = report.worst_lipschitz_ratio.max(ratio);
                if ratio > md.gamma * (1.0 + tol) + tol {
                    report.lipschitz_violations += 1;
                }
            }
        }
        Ok(report)
    }
}

/// Outcome of sampled moduli falsification.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Falsification {
    pub pairs: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub lipschitz_violations: usize,
    pub worst_lipschitz_ratio: f64,
}

impl Falsification {
    pub fn falsified(&self) -> bool {
        self.lower_violations + self.upper_violations + self.lipschitz_violations > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (DomainMask, FracOrder) {
        let g = Grid::new(1, 2.0, 32).unwrap();
        (DomainMask::boxed(g, 1.0).unwrap(), FracOrder::new(0.5).unwrap())
    }

    fn bump(mask: &DomainMask, amp: f64) -> ScalarField {
        ScalarField::from_fn(*mask.grid(), |x| amp * (1.0 - x[0] * x[0]).max(0.0).powi(2)).restrict(mask).unwrap()
    }

    #[test]
    fn separated_constant_ignores_u() {
        let (m, s) = setup();
        let phi = ScalarField::from_fn(*m.grid(), |x| 1.0 + x[0] * x[0]);
        let op =
            ThresholdOperator::new(m.clone(), s, Variant::Separated { phi: phi.clone(), functional: Functional::Constant(3.0) })
                .unwrap();
        let a = op.apply(&ScalarField::zeros(*m.grid())).unwrap();
        let b = op.apply(&bump(&m, 5.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.field(), &phi.scale(3.0));
        assert_eq!(op.nu(), 3.0);
    }

    #[test]
    fn zero_kernel_gives_outer_at_zero() {
        let (m, s) = setup();
        let base = ScalarField::from_fn(*m.grid(), |x| 2.0 + x[0].cos());
        let outer = Outer::Quadratic { base: base.clone(), coeff: 4.0 };
        let op = ThresholdOperator::new(
            m.clone(),
            s,
            Variant::KernelIntegral { kernel: Kernel::Gaussian { amp: 0.0, width: 1.0 }, outer },
        )
        .unwrap();
        assert_eq!(op.apply(&bump(&m, 3.0)).unwrap().field(), &base);
    }

    #[test]
    fn superposition_quadratic_at_zero() {
        let (m, s) = setup();
        let outer = Outer::Quadratic { base: ScalarField::constant(*m.grid(), 0.5), coeff: 1.0 };
        let op = ThresholdOperator::new(m.clone(), s, Variant::Superposition { outer }).unwrap();
        let g = op.apply(&ScalarField::zeros(*m.grid())).unwrap();
        assert!(g.field().values().iter().all(|&v| v == 0.5));
        let u = bump(&m, 2.0);
        let g = op.apply(&u).unwrap();
        for (gv, uv) in g.field().values().iter().zip(u.values()) {
            assert!((gv - (0.5 + uv * uv)).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_kernel_matches_gaussian() {
        let (m, s) = setup();
        let grid = *m.grid();
        let (amp, width) = (1.5, 0.4);
        let dense = DMatrix::from_fn(grid.len(), m.count(), |x, j| {
            amp * (-periodic_dist2(&grid, x, m.indices()[j]) / (2.0 * width * width)).exp()
        });
        let outer = Outer::Saturating { base: ScalarField::constant(grid, 1.0), amp: 2.0, scale: 0.5 };
        let a = ThresholdOperator::new(
            m.clone(),
            s,
            Variant::KernelIntegral { kernel: Kernel::Gaussian { amp, width }, outer: outer.clone() },
        )
        .unwrap();
        let b = ThresholdOperator::new(m.clone(), s, Variant::KernelIntegral { kernel: Kernel::Dense(dense), outer }).unwrap();
        let u = bump(&m, 1.0);
        let (ga, gb) = (a.apply(&u).unwrap(), b.apply(&u).unwrap());
        for (x, y) in ga.field().values().iter().zip(gb.field().values()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(ga.field().max() <= 3.0);
    }

    #[test]
    fn frac_grad_kernel_linear_in_gradient() {
        let (m, s) = setup();
        let grid = *m.grid();
        let outer = Outer::Quadratic { base: ScalarField::constant(grid, 1.0), coeff: 1.0 };
        let op = ThresholdOperator::new(
            m.clone(),
            s,
            Variant::FracGradKernel {
                kernel: VectorKernel::Gaussian { amp: 1.0, width: 0.5, direction: [1.0, 0.0, 0.0] },
                outer,
            },
        )
        .unwrap();
        let u = bump(&m, 1.0);
        let w1 = op.apply(&u).unwrap().field().map(|v| (v - 1.0).sqrt());
        let w2 = op.apply(&u.scale(2.0)).unwrap().field().map(|v| (v - 1.0).sqrt());
        for (a, b) in w1.values().iter().zip(w2.values()) {
            assert!((2.0 * a - b).abs() < 1e-10 * (1.0 + b));
        }
    }

    #[test]
    fn builtin_moduli_survive_falsification() {
        let (m, s) = setup();
        let phi = ScalarField::constant(*m.grid(), 1.0);
        let op = ThresholdOperator::new(m, s, Variant::Separated { phi, functional: Functional::Builtin { eta0: 1.0, c1: 0.3 } })
            .unwrap();
        let f = op.falsify_moduli(5.0, 100, 11).unwrap();
        assert!(!f.falsified(), "{f:?}");
        let md = op.moduli(5.0).unwrap();
        assert!(md.eta > 0.0 && md.upper > md.eta && md.gamma > 0.0);
    }

    #[test]
    fn wrong_moduli_are_falsified() {
        let (m, s) = setup();
        let k = |_: f64| 1.0;
        let eval: FunctionalFn =
            Arc::new(|u: &ScalarField, _: &[Vec<f64>]| 1.0 + u.values().iter().map(|v| v.abs()).sum::<f64>());
        let moduli = Moduli { eta: Arc::new(k), upper: Arc::new(|_| f64::INFINITY), gamma: Arc::new(|_| 1e-9) };
        let op = ThresholdOperator::new(
            m.clone(),
            s,
            Variant::Separated {
                phi: ScalarField::constant(*m.grid(), 1.0),
                functional: Functional::Custom { eval, floor: 1.0, moduli: Some(moduli) },
            },
        )
        .unwrap();
        assert!(op.falsify_moduli(1.0, 100, 3).unwrap().lipschitz_violations > 0);
        let eval: FunctionalFn = Arc::new(|_: &ScalarField, _: &[Vec<f64>]| 1.0);
        let bare = ThresholdOperator::new(
            m.clone(),
            s,
            Variant::Separated {
                phi: ScalarField::constant(*m.grid(), 1.0),
                functional: Functional::Custom { eval, floor: 1.0, moduli: None },
            },
        )
        .unwrap();
        assert!(matches!(bare.moduli(1.0), Err(Error::ModuliNotDeclared)));
    }

    #[test]
    fn rejects_nonpositive_floor() {
        let (m, s) = setup();
        let outer = Outer::Quadratic { base: ScalarField::zeros(*m.grid()), coeff: 1.0 };
        assert!(ThresholdOperator::new(m, s, Variant::Superposition { outer }).is_err());
    }
}
