//! Numerical studies of the continuous-dependence and penalty estimates.
//!
//! Every bound is assembled from measured ingredients only: `a_*`, `a^*`, `ν`,
//! norms of the data, the estimated Sobolev constant (inflated by
//! [`SOBOLEV_SAFETY`]) and the empirical `κ̂ = sup ‖u‖_∞ / ‖u‖_{H^σ_0}`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{lp_norm, Region, ScalarField};
use crate::frgrad::{distance_to_classical_gradient, frac_gradient, FracOrder};
use crate::qvi::{dual_norm, estimate_sobolev_constant, SOBOLEV_SAFETY};
use crate::sampling::{random_feasible, random_smooth_field};
use crate::vi::{csv_err, fmt_f64, solve_vi, PenaltyConfig, ProblemData, Threshold, VISolution};

/// Random feasible fields added to every `κ̂` test set.
pub const KAPPA_RANDOM_FIELDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    LipschitzF,
    HolderG,
    SigmaLimit,
    PenaltyTrace,
    Mosco,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::LipschitzF => "lipschitz_f",
            StudyKind::HolderG => "holder_g",
            StudyKind::SigmaLimit => "sigma_limit",
            StudyKind::PenaltyTrace => "penalty_trace",
            StudyKind::Mosco => "mosco",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedConstant {
    pub name: String,
    pub value: f64,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    pub provenance: String,
}

impl BoundCheck {
    fn le(name: &str, measured: f64, bound: f64, provenance: impl Into<String>) -> Self {
        Self { name: name.into(), measured, bound, passed: measured <= bound, provenance: provenance.into() }
    }
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub columns: Vec<String>,
    /// `None` marks a skipped case.
    pub rows: Vec<Vec<Option<f64>>>,
    pub constants: Vec<NamedConstant>,
    pub checks: Vec<BoundCheck>,
    /// Log-log slope of the deviation against the perturbation size, when meaningful.
    pub observed_exponent: Option<f64>,
    pub kappa_witness: Option<ScalarField>,
}

impl StudyReport {
    fn new(kind: StudyKind, columns: &[&str]) -> Self {
        Self {
            kind,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            constants: Vec::new(),
            checks: Vec::new(),
            observed_exponent: None,
            kappa_witness: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|c| c.name == name).map(|c| c.value)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.map(fmt_f64).unwrap_or_else(|| "skipped".into()))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `kind: PASS|FAIL; name=PASS (measured <= bound) ...; constants: ...`
    pub fn summary_line(&self) -> String {
        let mut s = format!("{}: {}", self.kind.name(), if self.passed() { "PASS" } else { "FAIL" });
        for c in &self.checks {
            let _ = write!(
                s,
                "; {}={} ({} <= {} [{}])",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                fmt_f64(c.measured),
                fmt_f64(c.bound),
                c.provenance
            );
        }
        if !self.constants.is_empty() {
            s.push_str("; constants:");
            for c in &self.constants {
                let _ = write!(s, " {}={} [{}]", c.name, fmt_f64(c.value), c.provenance);
            }
        }
        if let Some(e) = self.observed_exponent {
            let _ = write!(s, "; observed_exponent={}", fmt_f64(e));
        }
        s
    }
}

/// Running supremum of `‖u‖_∞ / ‖u‖_{H^σ_0}` with its witness.
#[derive(Debug, Clone)]
pub struct KappaEstimate {
    value: f64,
    witness: Option<ScalarField>,
}

impl Default for KappaEstimate {
    fn default() -> Self {
        Self { value: 0.0, witness: None }
    }
}

impl KappaEstimate {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn witness(&self) -> Option<&ScalarField> {
        self.witness.as_ref()
    }

    pub fn update(&mut self, u: &ScalarField, data: &ProblemData) -> Result<()> {
        let h = data.hsigma_norm(u)?;
        if h == 0.0 {
            return Ok(());
        }
        let r = lp_norm(u, f64::INFINITY, Region::Whole)? / h;
        if r > self.value {
            self.value = r;
            self.witness = Some(u.clone());
        }
        Ok(())
    }

    /// Adds [`KAPPA_RANDOM_FIELDS`] random feasible fields.
    pub fn add_random(&mut self, data: &ProblemData, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..KAPPA_RANDOM_FIELDS {
            let v = random_feasible(data, &mut rng)?;
            self.update(&v, data)?;
        }
        Ok(())
    }
}

fn sobolev_c_sharp(data: &ProblemData, seed: u64) -> Result<(f64, NamedConstant)> {
    let est = estimate_sobolev_constant(data.mask(), data.sigma(), seed)?;
    let c = SOBOLEV_SAFETY * est.constant / data.coefficients().a_star();
    let prov = format!(
        "C_# = C_*/a_*, C_* = {} x estimated lower bound {} (p = {}, converged = {})",
        SOBOLEV_SAFETY,
        fmt_f64(est.constant),
        est.exponent,
        est.converged
    );
    Ok((c, NamedConstant { name: "C_sharp".into(), value: c, provenance: prov }))
}

fn kappa_constant(k: &KappaEstimate) -> NamedConstant {
    NamedConstant {
        name: "kappa".into(),
        value: k.value(),
        provenance: format!(
            "empirical sup ||u||_inf/||u||_H over study fields plus {KAPPA_RANDOM_FIELDS} random feasible fields"
        ),
    }
}

/// `Ĉ_ν = (C′_ν / a_*)^{1/2}` with `C′_ν = 2 κ̂² ‖f‖²_{L¹} (a^* + a_*) / (a_*² ν)`.
fn holder_constant(data: &ProblemData, kappa: f64) -> Result<NamedConstant> {
    let (lo, hi) = (data.coefficients().a_star(), data.coefficients().a_upper());
    let f1 = lp_norm(data.f(), 1.0, Region::Mask(data.mask()))?;
    let cprime = 2.0 * kappa * kappa * f1 * f1 * (hi + lo) / (lo * lo * data.nu());
    Ok(NamedConstant {
        name: "C_nu".into(),
        value: (cprime / lo).sqrt(),
        provenance: "sqrt(C'_nu/a_*), C'_nu = 2 kappa^2 ||f||_L1^2 (a^*+a_*)/(a_*^2 nu)".into(),
    })
}

fn solve(data: &ProblemData, cfg: &PenaltyConfig) -> Result<VISolution> {
    solve_vi(data, cfg)
}

fn is_zero(f: &ScalarField) -> bool {
    f.values().iter().all(|&v| v == 0.0)
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `count` perturbations of `f` supported in Ω: `±amp·f` first, then smooth
/// random fields with sup norm drawn from `[0.1, 2]·amp·‖f‖_∞`.
pub fn perturbations_f(data: &ProblemData, count: usize, amp: f64, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sup = |v: &ScalarField| v.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let fmax = sup(data.f()).max(f64::MIN_POSITIVE);
    let mut out: Vec<ScalarField> = [amp, -amp].iter().take(count).map(|&c| data.f().scale(c)).collect();
    while out.len() < count {
        let w = random_smooth_field(data.mask(), &mut rng, 4);
        let target = fmax * amp * rng.random_range(0.1..2.0);
        out.push(w.scale(target / sup(&w)));
    }
    out
}

/// Lipschitz dependence on `f` at fixed `g`, for each perturbation `δf`.
pub fn lipschitz_study_f(base: &ProblemData, deltas: &[ScalarField], cfg: &PenaltyConfig, seed: u64) -> Result<StudyReport> {
    let u0 = solve(base, cfg)?.u;
    let cases: Vec<Option<(f64, f64, ScalarField, ScalarField)>> = deltas
        .par_iter()
        .map(|d| -> Result<_> {
            if is_zero(d) {
                return Ok(None);
            }
            let pert = base.with_f(base.f().add(d)?)?;
            let u1 = solve(&pert, cfg)?.u;
            let du = u1.sub(&u0)?;
            Ok(Some((dual_norm(d, base.mask(), base.sigma())?, lp_norm(d, 1.0, Region::Mask(base.mask()))?, du, u1)))
        })
        .collect::<Result<_>>()?;

    let mut kappa = KappaEstimate::default();
    kappa.update(&u0, base)?;
    for (_, _, du, u1) in cases.iter().flatten() {
        kappa.update(u1, base)?;
        kappa.update(du, base)?;
    }
    kappa.add_random(base, seed)?;
    let (c_sharp, c_sharp_const) = sobolev_c_sharp(base, seed)?;
    let a_star = base.coefficients().a_star();
    let c1 = kappa.value() / a_star;

    let mut report = StudyReport::new(StudyKind::LipschitzF, &["case", "df_L2sharp", "df_L1", "du_H", "ratio_sharp", "ratio_L1"]);
    let (mut max_sharp, mut max_l1) = (0.0f64, 0.0f64);
    for (i, c) in cases.iter().enumerate() {
        match c {
            None => report.rows.push(vec![Some(i as f64), None, None, None, None, None]),
            Some((n_sharp, n_l1, du, _)) => {
                let h = base.hsigma_norm(du)?;
                let (rs, rl) = (h / n_sharp, h / n_l1);
                max_sharp = max_sharp.max(rs);
                max_l1 = max_l1.max(rl);
                report.rows.push(vec![Some(i as f64), Some(*n_sharp), Some(*n_l1), Some(h), Some(rs), Some(rl)]);
            }
        }
    }
    report.checks.push(BoundCheck::le("ratio_sharp_le_C_sharp", max_sharp, c_sharp, "C_# = C_*/a_* with safety-factored C_*"));
    report.checks.push(BoundCheck::le("ratio_L1_le_C1", max_l1, c1, "C_1 = kappa/a_*"));
    report.constants.push(c_sharp_const);
    report.constants.push(kappa_constant(&kappa));
    report.constants.push(NamedConstant { name: "C_1".into(), value: c1, provenance: "kappa/a_*".into() });
    report.kappa_witness = kappa.witness().cloned();
    Ok(report)
}

/// ½-Hölder dependence on `g`: solves with `g` and `g + t h` for each `t`.
pub fn holder_study_g(
    base: &ProblemData,
    t_values: &[f64],
    h_direction: &ScalarField,
    cfg: &PenaltyConfig,
    seed: u64,
) -> Result<StudyReport> {
    if h_direction.grid() != base.mask().grid() {
        return Err(Error::GridMismatch);
    }
    if h_direction.min() < 0.0 || t_values.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::InvalidParameter("h must be nonnegative and t ≥ 0".into()));
    }
    let h_inf = lp_norm(h_direction, f64::INFINITY, Region::Whole)?;
    let u0 = solve(base, cfg)?.u;
    let cases: Vec<Option<(f64, ScalarField)>> = t_values
        .par_iter()
        .map(|&t| -> Result<_> {
            if t == 0.0 {
                return Ok(None);
            }
            let g = Threshold::new(base.g().axpy(t, h_direction)?, base.nu())?;
            let u = solve(&base.with_threshold(g)?, cfg)?.u;
            Ok(Some((t, u)))
        })
        .collect::<Result<_>>()?;

    let mut kappa = KappaEstimate::default();
    kappa.update(&u0, base)?;
    for (_, u) in cases.iter().flatten() {
        kappa.update(u, base)?;
    }
    kappa.add_random(base, seed)?;
    let c_nu = holder_constant(base, kappa.value())?;

    let mut report = StudyReport::new(StudyKind::HolderG, &["t", "dg_inf", "du_H", "rho"]);
    let mut rhos = Vec::new();
    let mut pts = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        match c {
            None => report.rows.push(vec![Some(t_values[i]), None, None, None]),
            Some((t, u)) => {
                let dg = t * h_inf;
                let du = base.hsigma_norm(&u.sub(&u0)?)?;
                let rho = if dg > 0.0 { Some(du / dg.sqrt()) } else { None };
                if let Some(r) = rho {
                    rhos.push((*t, r));
                }
                pts.push((dg, du));
                report.rows.push(vec![Some(*t), Some(dg), Some(du), rho]);
            }
        }
    }
    let sup = rhos.iter().map(|r| r.1).fold(0.0f64, f64::max);
    report.checks.push(BoundCheck::le(
        "rho_le_C_nu",
        sup,
        c_nu.value,
        "C_nu from the Hoelder proof constant with empirical kappa",
    ));
    if let Some(&(_, last)) = rhos.iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
        let t_min = rhos.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let others = rhos.iter().filter(|r| r.0 > t_min).map(|r| r.1).fold(0.0f64, f64::max);
        if rhos.len() > 1 {
            report.checks.push(BoundCheck::le("rho_no_blowup", last, others, "rho at smallest t vs max rho at larger t"));
        }
    }
    report.observed_exponent = loglog_slope(&pts);
    report.constants.push(c_nu);
    report.constants.push(kappa_constant(&kappa));
    report.kappa_witness = kappa.witness().cloned();
    Ok(report)
}

/// `‖D^σu - Du‖_{L²}` along `sigmas`; checks monotone decrease.
pub fn sigma_limit_study(u_ref: &ScalarField, sigmas: &[f64]) -> Result<StudyReport> {
    let d1 = lp_norm(&frac_gradient(u_ref, FracOrder::new(1.0)?)?.magnitude(), 2.0, Region::Whole)?;
    let mut report = StudyReport::new(StudyKind::SigmaLimit, &["sigma", "distance_L2", "relative"]);
    let mut errs = Vec::new();
    for &s in sigmas {
        let e = distance_to_classical_gradient(u_ref, FracOrder::new(s)?)?;
        errs.push(e);
        report.rows.push(vec![Some(s), Some(e), Some(if d1 > 0.0 { e / d1 } else { 0.0 })]);
    }
    let noise = 1e-12 * d1.max(1.0);
    let worst_increase = errs.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    if errs.len() > 1 {
        report.checks.push(BoundCheck::le(
            "monotone_decrease",
            worst_increase,
            noise,
            "increase between consecutive sigma vs 1e-12 noise",
        ));
    }
    report.constants.push(NamedConstant { name: "Du_L2".into(), value: d1, provenance: "classical gradient norm".into() });
    Ok(report)
}

/// Per-ε traces of the penalty estimates and the `U_ε/V_ε/W_ε` split.
pub fn penalty_trace_study(data: &ProblemData, cfg: &PenaltyConfig) -> Result<StudyReport> {
    let sol = solve(data, cfg)?;
    let mut report = StudyReport::new(
        StudyKind::PenaltyTrace,
        &["eps", "newton_iters", "norm_Dsu_L2", "k_eps_L1", "k_eps_Dsu2_L1", "set_U", "set_V", "set_W", "excess_L1"],
    );
    for r in &sol.trace {
        report.rows.push(vec![
            Some(r.eps),
            Some(r.newton_iters as f64),
            Some(r.norm_dsu_l2),
            Some(r.k_eps_l1),
            Some(r.k_eps_dsu2_l1),
            Some(r.set_u),
            Some(r.set_v),
            Some(r.set_w),
            Some(r.excess_l1),
        ]);
    }
    let (first, last) = (sol.trace.first().expect("nonempty schedule"), sol.trace.last().expect("nonempty schedule"));
    report.checks.push(BoundCheck::le("set_V_shrinks", last.set_v, first.set_v, "|V_eps| at eps_final vs initial eps"));
    report.checks.push(BoundCheck::le("set_W_shrinks", last.set_w, first.set_w, "|W_eps| at eps_final vs initial eps"));
    report.checks.push(BoundCheck::le(
        "excess_shrinks",
        last.excess_l1,
        first.excess_l1,
        "integral of (|D u|-g)+ at eps_final vs initial eps",
    ));
    for (name, get) in [
        ("norm_Dsu_L2", (|r: &crate::vi::EpsRecord| r.norm_dsu_l2) as fn(&crate::vi::EpsRecord) -> f64),
        ("k_eps_L1", |r| r.k_eps_l1),
        ("k_eps_Dsu2_L1", |r| r.k_eps_dsu2_l1),
    ] {
        let peak = sol.trace.iter().map(get).fold(0.0f64, f64::max);
        report.checks.push(BoundCheck::le(&format!("{name}_bounded"), peak, 10.0 * get(first), "10 x value at initial eps"));
    }
    let w_small: f64 = sol.trace.iter().filter(|r| r.eps <= 0.1).map(|r| r.set_w).fold(0.0, f64::max);
    report.checks.push(BoundCheck::le("set_W_zero_below_0.1", w_small, 0.0, "|W_eps| for eps <= 0.1"));
    Ok(report)
}

/// Solution-map continuity in `g` along `g_sequence` (a diagnostic, not a Mosco proof).
pub fn mosco_diagnostic(data: &ProblemData, g_sequence: &[Threshold], cfg: &PenaltyConfig, seed: u64) -> Result<StudyReport> {
    let u = solve(data, cfg)?.u;
    let sols: Vec<(f64, ScalarField)> = g_sequence
        .par_iter()
        .map(|g| -> Result<_> {
            if g.nu() < data.nu() {
                return Err(Error::ThresholdBelowFloor { min_g: g.field().min(), nu: data.nu() });
            }
            let dg = lp_norm(&g.field().sub(data.g())?, f64::INFINITY, Region::Whole)?;
            let un = if dg == 0.0 { u.clone() } else { solve(&data.with_threshold(g.clone())?, cfg)?.u };
            Ok((dg, un))
        })
        .collect::<Result<_>>()?;
    let mut kappa = KappaEstimate::default();
    kappa.update(&u, data)?;
    for (_, un) in &sols {
        kappa.update(un, data)?;
    }
    kappa.add_random(data, seed)?;
    let c_nu = holder_constant(data, kappa.value())?;
    let mut report = StudyReport::new(StudyKind::Mosco, &["n", "dg_inf", "du_H", "holder_bound"]);
    let mut devs = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    for (i, (dg, un)) in sols.iter().enumerate() {
        let du = data.hsigma_norm(&un.sub(&u)?)?;
        let bound = c_nu.value * dg.sqrt();
        worst_excess = worst_excess.max(du - bound);
        devs.push((*dg, du));
        report.rows.push(vec![Some(i as f64), Some(*dg), Some(du), Some(bound)]);
    }
    if !devs.is_empty() {
        report.checks.push(BoundCheck::le("deviation_le_holder_bound", worst_excess, 0.0, "du - C_nu ||g_n - g||^1/2"));
    }
    let mut worst = f64::NEG_INFINITY;
    for w in devs.windows(2) {
        if w[1].0 <= w[0].0 {
            worst = worst.max(w[1].1 - w[0].1);
        }
    }
    if worst.is_finite() {
        report.checks.push(BoundCheck::le("deviation_decreasing", worst, 0.0, "deviation increase while ||g_n - g|| decreases"));
    }
    report.observed_exponent = loglog_slope(&devs);
    report.constants.push(c_nu);
    report.constants.push(kappa_constant(&kappa));
    report.kappa_witness = kappa.witness().cloned();
    Ok(report)
}
