//! Quasi-variational inequalities `u ∈ K_{G[u]}`: threshold operators, a
//! damped Picard driver for `u ↦ S(f, G[u])`, and the contraction
//! certificate for separated operators `G[u] = φ Γ(u)`.

mod operator;
mod sobolev;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::{lp_norm, DomainMask, Region, ScalarField};
use crate::frgrad::FracOrder;
use crate::vi::{csv_err, fmt_f64, solve_vi, EllipticCoefficients, PenaltyConfig, ProblemData, Threshold, VISolution};

pub use operator::{
    Falsification, Functional, FunctionalFn, Kernel, Moduli, ModuliAt, ModulusFn, Outer, ThresholdOperator, Variant, VectorKernel,
};
pub use sobolev::{
    dual_exponent, estimate_sobolev_constant, poincare_constant, sobolev_exponent, SobolevEstimate, CONSTANT_MAX_NODES,
    SOBOLEV_MAX_ITER, SOBOLEV_RESTARTS,
};

/// Factor applied to the estimated (lower-bound) `C_*` wherever a bound must be conservative.
pub const SOBOLEV_SAFETY: f64 = 2.0;
/// Consecutive non-decreasing residuals that trigger halving of the damping.
pub const STALL_WINDOW: usize = 3;

/// `(Ω, σ, A, f)`; the threshold comes from the operator.
#[derive(Debug, Clone)]
pub struct QVIProblem {
    template: ProblemData,
}

impl QVIProblem {
    pub fn new(mask: DomainMask, sigma: FracOrder, coefficients: EllipticCoefficients, f: ScalarField) -> Result<Self> {
        let grid = *mask.grid();
        let template = ProblemData::new(mask, sigma, coefficients, f, Threshold::constant(grid, 1.0)?)?;
        Ok(Self { template })
    }

    pub fn mask(&self) -> &DomainMask {
        self.template.mask()
    }

    pub fn sigma(&self) -> FracOrder {
        self.template.sigma()
    }

    pub fn coefficients(&self) -> &EllipticCoefficients {
        self.template.coefficients()
    }

    pub fn f(&self) -> &ScalarField {
        self.template.f()
    }

    pub fn with_f(&self, f: ScalarField) -> Result<Self> {
        Ok(Self { template: self.template.with_f(f)? })
    }

    /// The variational inequality with threshold `g`.
    pub fn with_threshold(&self, g: Threshold) -> Result<ProblemData> {
        self.template.with_threshold(g)
    }

    pub fn hsigma_norm(&self, u: &ScalarField) -> Result<f64> {
        self.template.hsigma_norm(u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QVIConfig {
    pub damping: f64,
    pub outer_tol: f64,
    pub outer_max: usize,
    pub penalty: PenaltyConfig,
}

impl Default for QVIConfig {
    fn default() -> Self {
        Self { damping: 1.0, outer_tol: 1e-6, outer_max: 50, penalty: PenaltyConfig::default() }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct QVIRecord {
    pub outer_iter: usize,
    pub fp_residual: f64,
    pub damping: f64,
    pub inner_eps_final: f64,
    pub feas_violation: f64,
    pub comp_gap: f64,
    /// `‖S(f, G[u_{k-1}])‖_{H^σ}`
    pub inner_norm: f64,
    /// `‖u_k‖_{H^σ}`
    pub iterate_norm: f64,
}

#[derive(Debug, Clone)]
pub struct QVISolution {
    pub u: ScalarField,
    /// Threshold of the last inner solve, `G[u_{k-1}]`; equals `G[u]` up to the fixed-point residual.
    pub g_fixed: Threshold,
    pub iterations: usize,
    pub fixed_point_residual: f64,
    pub trace: Vec<QVIRecord>,
    pub inner: VISolution,
}

pub const QVI_TRACE_COLUMNS: [&str; 6] =
    ["outer_iter", "fp_residual", "damping", "inner_eps_final", "feas_violation", "comp_gap"];

impl QVISolution {
    /// Writes `u.fvf`, `g_fixed.fvf` and `qvi_trace.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let (u, g, trace) = (dir.join("u.fvf"), dir.join("g_fixed.fvf"), dir.join("qvi_trace.csv"));
        self.u.save_fvf(&u)?;
        self.g_fixed.field().save_fvf(&g)?;
        write_trace(&self.trace, &trace)?;
        Ok(vec![u, g, trace])
    }
}

pub fn write_trace(trace: &[QVIRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(QVI_TRACE_COLUMNS).map_err(csv_err)?;
    for r in trace {
        w.write_record([
            r.outer_iter.to_string(),
            fmt_f64(r.fp_residual),
            fmt_f64(r.damping),
            fmt_f64(r.inner_eps_final),
            fmt_f64(r.feas_violation),
            fmt_f64(r.comp_gap),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Damped Picard iteration `u_{k+1} = (1-θ)u_k + θ S(f, G[u_k])`.
///
/// Stops when `‖u_k - u_{k-1}‖_{H^σ} ≤ outer_tol (1 + ‖u_k‖)`, or as soon as
/// `G[u_k]` repeats the previous threshold exactly with `θ = 1` (the next
/// iterate would be identical). `θ` is halved after [`STALL_WINDOW`]
/// consecutive non-decreasing residuals.
pub fn solve_qvi(problem: &QVIProblem, op: &ThresholdOperator, cfg: &QVIConfig, init: &ScalarField) -> Result<QVISolution> {
    if op.mask() != problem.mask() || op.sigma() != problem.sigma() {
        return Err(Error::InvalidParameter("operator and problem disagree on domain or order".into()));
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) || !(cfg.outer_tol > 0.0) || cfg.outer_max == 0 {
        return Err(Error::InvalidParameter("damping in (0, 1], outer_tol > 0, outer_max ≥ 1 required".into()));
    }
    cfg.penalty.validate()?;
    if init.grid() != problem.mask().grid() {
        return Err(Error::GridMismatch);
    }
    let outside = init.max_abs_outside(problem.mask());
    if outside > 0.0 {
        return Err(Error::NonzeroOutsideDomain { max_outside: outside });
    }
    let mut u = init.clone();
    let mut damping = cfg.damping;
    let mut trace: Vec<QVIRecord> = Vec::new();
    let mut stalls = 0;
    let mut g = op.apply(&u)?;
    for k in 1..=cfg.outer_max {
        let inner = solve_vi(&problem.with_threshold(g.clone())?, &cfg.penalty)?;
        let next = u.scale(1.0 - damping).axpy(damping, &inner.u)?;
        let residual = problem.hsigma_norm(&next.sub(&u)?)?;
        let norm = problem.hsigma_norm(&next)?;
        if let Some(prev) = trace.last() {
            if residual >= prev.fp_residual {
                stalls += 1;
            } else {
                stalls = 0;
            }
        }
        trace.push(QVIRecord {
            outer_iter: k,
            fp_residual: residual,
            damping,
            inner_eps_final: inner.eps_final,
            feas_violation: inner.diagnostics.feas_violation,
            comp_gap: inner.diagnostics.comp_gap,
            inner_norm: problem.hsigma_norm(&inner.u)?,
            iterate_norm: norm,
        });
        u = next;
        let g_next = op.apply(&u)?;
        let repeated = damping == 1.0 && g_next == g;
        if residual <= cfg.outer_tol * (1.0 + norm) || repeated {
            let fixed_point_residual = if repeated { 0.0 } else { residual };
            return Ok(QVISolution { u: inner.u.clone(), g_fixed: g, iterations: k, fixed_point_residual, trace, inner });
        }
        g = g_next;
        if stalls >= STALL_WINDOW {
            damping *= 0.5;
            stalls = 0;
        }
    }
    Err(Error::OuterMaxIter {
        iterations: cfg.outer_max,
        last_residual: trace.last().map_or(f64::NAN, |r| r.fp_residual),
        residual_history: trace.iter().map(|r| r.fp_residual).collect(),
    })
}

/// Uniqueness certificate `q = 2 C_# γ(R_f)/η(R_f) ‖f‖_{L^{2^#}} < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// `C_# = SOBOLEV_SAFETY · C_*/a_*`
    pub c_sharp: f64,
    pub f_norm: f64,
    /// `R_f = C_# ‖f‖_{L^{2^#}(Ω)}`
    pub r_f: f64,
    pub eta_rf: f64,
    pub upper_rf: f64,
    pub gamma_rf: f64,
    pub q: f64,
    pub certified: bool,
}

pub const CERTIFICATE_COLUMNS: [&str; 6] = ["C_sharp", "R_f", "eta", "gamma", "q", "certified"];

impl ContractionReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(CERTIFICATE_COLUMNS).map_err(csv_err)?;
        w.write_record([
            fmt_f64(self.c_sharp),
            fmt_f64(self.r_f),
            fmt_f64(self.eta_rf),
            fmt_f64(self.gamma_rf),
            fmt_f64(self.q),
            self.certified.to_string(),
        ])
        .map_err(csv_err)?;
        w.flush()?;
        Ok(())
    }
}

/// `‖f‖_{L^{2^#}(Ω)}` for the given dimension and order.
pub fn dual_norm(f: &ScalarField, mask: &DomainMask, sigma: FracOrder) -> Result<f64> {
    lp_norm(f, dual_exponent(mask.grid().dim(), sigma), Region::Mask(mask))
}

/// Evaluates the certificate with `C_*` (an estimate) inflated by [`SOBOLEV_SAFETY`].
pub fn contraction_certificate(f: &ScalarField, op: &ThresholdOperator, c_star: f64, a_star: f64) -> Result<ContractionReport> {
    if !matches!(op.variant(), Variant::Separated { .. }) {
        return Err(Error::InvalidParameter("certificate requires the separated variant".into()));
    }
    if !(c_star > 0.0 && c_star.is_finite()) || !(a_star > 0.0 && a_star.is_finite()) {
        return Err(Error::InvalidParameter("C_* and a_* must be positive and finite".into()));
    }
    if f.grid() != op.mask().grid() {
        return Err(Error::GridMismatch);
    }
    let c_sharp = SOBOLEV_SAFETY * c_star / a_star;
    let f_norm = dual_norm(f, op.mask(), op.sigma())?;
    let r_f = c_sharp * f_norm;
    let md = op.moduli(r_f)?;
    let q = 2.0 * c_sharp * md.gamma / md.eta * f_norm;
    Ok(ContractionReport { c_sharp, f_norm, r_f, eta_rf: md.eta, upper_rf: md.upper, gamma_rf: md.gamma, q, certified: q < 1.0 })
}
