//! The gradient-constrained variational inequality: find `u ∈ K` with
//! `⟨A D^σu, D^σ(v-u)⟩ ≥ ⟨f, v-u⟩` for all `v ∈ K = {|D^σv| ≤ g}`, solved
//! by exponential penalization with ε-continuation.

mod coefficients;
mod diagnostics;
mod penalty;
mod solver;

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{DomainMask, ScalarField};
use crate::frgrad::{FracOps, FracOrder};

pub use coefficients::EllipticCoefficients;
pub use diagnostics::{energy, extract_multiplier, feasibility_violation, vi_residual};
pub use penalty::{penalty_value, EPS_FLOOR};
pub use solver::{penalized_residual, solve_penalized, solve_vi, solve_vi_from};

pub(crate) use solver::NodeState;

/// Threshold `g` with its declared floor `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    g: ScalarField,
    nu: f64,
}

impl Threshold {
    pub fn new(g: ScalarField, nu: f64) -> Result<Self> {
        let min_g = g.min();
        if !(nu > 0.0) || !nu.is_finite() || min_g < nu {
            return Err(Error::ThresholdBelowFloor { min_g, nu });
        }
        Ok(Self { g, nu })
    }

    pub fn constant(grid: crate::field::Grid, value: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, value), value)
    }

    pub fn field(&self) -> &ScalarField {
        &self.g
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn sup(&self) -> f64 {
        self.g.max()
    }

    /// `μ g` with floor `μ ν`.
    pub fn scale(&self, mu: f64) -> Result<Self> {
        Self::new(self.g.scale(mu), self.nu * mu)
    }
}

/// Data `(Ω, σ, A, f, g)` of one variational inequality.
#[derive(Debug, Clone)]
pub struct ProblemData {
    mask: DomainMask,
    ops: Arc<FracOps>,
    coefficients: EllipticCoefficients,
    f: ScalarField,
    threshold: Threshold,
}

impl ProblemData {
    pub fn new(
        mask: DomainMask,
        sigma: FracOrder,
        coefficients: EllipticCoefficients,
        f: ScalarField,
        threshold: Threshold,
    ) -> Result<Self> {
        let grid = *mask.grid();
        if coefficients.grid() != &grid || f.grid() != &grid || threshold.field().grid() != &grid {
            return Err(Error::GridMismatch);
        }
        let outside = f.max_abs_outside(&mask);
        if outside > 0.0 {
            return Err(Error::NonzeroOutsideDomain { max_outside: outside });
        }
        let ops = Arc::new(FracOps::new(grid, sigma));
        Ok(Self { mask, ops, coefficients, f, threshold })
    }

    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    pub fn ops(&self) -> &FracOps {
        &self.ops
    }

    pub fn sigma(&self) -> FracOrder {
        self.ops.sigma()
    }

    pub fn coefficients(&self) -> &EllipticCoefficients {
        &self.coefficients
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn threshold(&self) -> &Threshold {
        &self.threshold
    }

    pub fn g(&self) -> &ScalarField {
        self.threshold.field()
    }

    pub fn nu(&self) -> f64 {
        self.threshold.nu()
    }

    /// Same problem with another source; `f` must vanish outside Ω.
    pub fn with_f(&self, f: ScalarField) -> Result<Self> {
        if f.grid() != self.mask.grid() {
            return Err(Error::GridMismatch);
        }
        let outside = f.max_abs_outside(&self.mask);
        if outside > 0.0 {
            return Err(Error::NonzeroOutsideDomain { max_outside: outside });
        }
        Ok(Self { f, ..self.clone() })
    }

    pub fn with_threshold(&self, threshold: Threshold) -> Result<Self> {
        if threshold.field().grid() != self.mask.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { threshold, ..self.clone() })
    }

    /// `H^σ_0` norm for fields supported in Ω.
    pub fn hsigma_norm(&self, u: &ScalarField) -> Result<f64> {
        self.ops.hsigma_norm(u, &self.mask)
    }
}

/// Penalty continuation and Newton settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub eps0: f64,
    pub ratio: f64,
    pub eps_min: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub damping: f64,
    /// Rescale the final iterate by `ν/(ν+η)`, `η` its violation, so it is strictly feasible.
    pub shrink: bool,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { eps0: 0.5, ratio: 0.5, eps_min: EPS_FLOOR, newton_tol: 1e-8, newton_max: 100, damping: 1.0, shrink: false }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eps_min >= EPS_FLOOR) {
            return bad(format!("eps_min {} below the floor {EPS_FLOOR}", self.eps_min));
        }
        if !(self.eps0 >= self.eps_min && self.eps0 < 1.0) {
            return bad(format!("eps0 {} not in [eps_min, 1)", self.eps0));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad(format!("ratio {} not in (0, 1)", self.ratio));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return bad("newton_tol and newton_max must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping {} not in (0, 1]", self.damping));
        }
        Ok(())
    }

    /// `eps0 · ratio^j`, with the last entry clamped to `eps_min`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = vec![self.eps0];
        loop {
            let next = out.last().unwrap() * self.ratio;
            if next <= self.eps_min {
                if *out.last().unwrap() > self.eps_min {
                    out.push(self.eps_min);
                }
                return out;
            }
            out.push(next);
        }
    }
}

/// Quantities monitored after the penalized solve at one ε.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsRecord {
    pub eps: f64,
    pub newton_iters: usize,
    /// Sup-norm of the penalized residual on Ω.
    pub residual: f64,
    pub feas_violation: f64,
    pub comp_gap: f64,
    pub norm_dsu_l2: f64,
    pub k_eps_l1: f64,
    pub k_eps_dsu2_l1: f64,
    pub energy: Option<f64>,
    /// Measures of `{s ≤ √ε}`, `{√ε < s ≤ 1/ε}`, `{s > 1/ε}` with `s = |D^σu| - g`.
    pub set_u: f64,
    pub set_v: f64,
    pub set_w: f64,
    /// `∫ (|D^σu| - g)⁺`
    pub excess_l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub feas_violation: f64,
    /// `|⟨λ, |D^σu| - g⟩|`
    pub comp_gap: f64,
    /// Sup-norm on Ω of `-div^σ[(λ+A)D^σu] - f`.
    pub multiplier_residual: f64,
    /// Minimum of the sampled variational inequality; `≥ -tol` for a solution.
    pub vi_residual: f64,
    pub energy: Option<f64>,
    pub zero_mode_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct VISolution {
    pub u: ScalarField,
    pub lambda: ScalarField,
    pub eps_final: f64,
    pub diagnostics: Diagnostics,
    pub trace: Vec<EpsRecord>,
}

pub const DIAGNOSTICS_COLUMNS: [&str; 9] =
    ["eps", "newton_iters", "residual", "feas_violation", "comp_gap", "norm_Dsu_L2", "k_eps_L1", "k_eps_Dsu2_L1", "energy"];

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

impl VISolution {
    /// Writes `u.fvf`, `lambda.fvf` and `diagnostics.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let u = dir.join("u.fvf");
        let lambda = dir.join("lambda.fvf");
        let diag = dir.join("diagnostics.csv");
        self.u.save_fvf(&u)?;
        self.lambda.save_fvf(&lambda)?;
        self.write_diagnostics(&diag)?;
        Ok(vec![u, lambda, diag])
    }

    pub fn write_diagnostics(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(DIAGNOSTICS_COLUMNS).map_err(csv_err)?;
        for r in &self.trace {
            w.write_record([
                fmt_f64(r.eps),
                r.newton_iters.to_string(),
                fmt_f64(r.residual),
                fmt_f64(r.feas_violation),
                fmt_f64(r.comp_gap),
                fmt_f64(r.norm_dsu_l2),
                fmt_f64(r.k_eps_l1),
                fmt_f64(r.k_eps_dsu2_l1),
                r.energy.map(fmt_f64).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
