//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracvi::analysis::{
    holder_study_g, lipschitz_study_f, mosco_diagnostic, penalty_trace_study, perturbations_f, sigma_limit_study,
};
use fracvi::field::{inner, lp_norm, Grid, Region, ScalarField, VectorField};
use fracvi::frgrad::{
    distance_to_classical_gradient, frac_divergence, frac_gradient, frac_laplacian, quadrature_frac_gradient, FracOrder,
};
use fracvi::instances::{self, penalty_config, qvi_config, NEWTON_TOL, OUTER_TOL};
use fracvi::oracle::oracle_solve_vi;
use fracvi::qvi::{
    contraction_certificate, dual_norm, estimate_sobolev_constant, solve_qvi, QVIProblem, QVISolution, ThresholdOperator,
};
use fracvi::sampling::random_feasible;
use fracvi::vi::{energy, solve_vi, ProblemData, Threshold, VISolution};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Random trigonometric polynomial with frequencies up to `kmax` per axis.
fn band_limited(grid: Grid, kmax: usize, rng: &mut ChaCha8Rng) -> ScalarField {
    let dim = grid.dim();
    let base = std::f64::consts::PI / grid.extent();
    let terms: Vec<([f64; 3], f64, f64)> = (0..6)
        .map(|_| {
            let mut k = [0.0; 3];
            for kd in k.iter_mut().take(dim) {
                *kd = rng.random_range(0..=kmax) as f64 * base;
            }
            (k, rng.random_range(-1.0..1.0), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    ScalarField::from_fn(grid, |x| terms.iter().map(|(k, a, p)| a * ((0..dim).map(|d| k[d] * x[d]).sum::<f64>() + p).cos()).sum())
}

fn vi_solutions() -> &'static Vec<(&'static str, ProblemData, VISolution)> {
    static CELL: OnceLock<Vec<(&'static str, ProblemData, VISolution)>> = OnceLock::new();
    CELL.get_or_init(|| {
        instances::vi_instances()
            .expect("instances")
            .into_iter()
            .map(|(name, d)| {
                let s = solve_vi(&d, &penalty_config()).expect("shipped instance solves");
                (name, d, s)
            })
            .collect()
    })
}

type QviCase = (&'static str, QVIProblem, ThresholdOperator, QVISolution);

fn qvi_solutions() -> &'static Vec<QviCase> {
    static CELL: OnceLock<Vec<QviCase>> = OnceLock::new();
    CELL.get_or_init(|| {
        instances::qvi_instances()
            .expect("instances")
            .into_iter()
            .map(|(name, p, op)| {
                let s = solve_qvi(&p, &op, &qvi_config(), &ScalarField::zeros(*p.mask().grid())).expect("shipped QVI converges");
                (name, p, op, s)
            })
            .collect()
    })
}

fn c1_operator_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = (0.0f64, 0.0f64);
    for (dim, n) in [(1, 128), (2, 64)] {
        let grid = Grid::new(dim, 2.0, n).map_err(err)?;
        for s in [0.3, 0.5, 0.9] {
            let sigma = FracOrder::new(s).map_err(err)?;
            for _ in 0..10 {
                let u = band_limited(grid, n / 8, &mut rng);
                let comps: Vec<ScalarField> = (0..dim).map(|_| band_limited(grid, n / 8, &mut rng)).collect();
                let w = VectorField::new(comps).map_err(err)?;
                let du = frac_gradient(&u, sigma).map_err(err)?;
                let divw = frac_divergence(&w, sigma).map_err(err)?;
                let lhs = inner(&du, &w).map_err(err)? + inner(&u, &divw).map_err(err)?;
                let l2 = |f: &ScalarField| lp_norm(f, 2.0, Region::Whole).unwrap();
                let scale = l2(&du.magnitude()) * l2(&w.magnitude()) + l2(&u) * l2(&divw);
                worst.0 = worst.0.max(lhs.abs() / scale);
                let lap = frac_laplacian(&u, sigma).map_err(err)?;
                let comp = lap.add(&frac_divergence(&du, sigma).map_err(err)?).map_err(err)?;
                worst.1 = worst.1.max(l2(&comp) / l2(&lap).max(l2(&u)));
            }
        }
    }
    ensure(
        worst.0 <= 1e-10 && worst.1 <= 1e-10,
        format!("adjointness {:.2e}, composition {:.2e} (relative, limit 1e-10)", worst.0, worst.1),
    )
}

fn c2_pure_mode_symbol() -> Outcome {
    let grid = Grid::new(1, std::f64::consts::PI, 128).map_err(err)?;
    let mut worst = 0.0f64;
    for k in [1.0f64, 2.0, 4.0] {
        let u = ScalarField::from_fn(grid, |x| (k * x[0]).sin());
        for s in [0.25, 0.5, 0.75, 1.0] {
            let d = frac_gradient(&u, FracOrder::new(s).map_err(err)?).map_err(err)?;
            let amp = k.powf(s);
            for (i, v) in d.component(0).values().iter().enumerate() {
                worst = worst.max((v - amp * (k * grid.coordinate(i)).cos()).abs() / amp);
            }
        }
    }
    ensure(worst <= 1e-12, format!("max relative deviation {worst:.2e} (limit 1e-12)"))
}

fn c3_sigma_limit() -> Outcome {
    let grid = Grid::new(1, 2.0 * std::f64::consts::PI, 128).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let sigmas = [0.6, 0.7, 0.8, 0.9, 0.99];
    let mut worst_rel = 0.0f64;
    for _ in 0..5 {
        let u = band_limited(grid, 5, &mut rng);
        let r = sigma_limit_study(&u, &sigmas).map_err(err)?;
        let d: Vec<f64> = r.column("distance_L2").unwrap().into_iter().map(|v| v.unwrap()).collect();
        if !d.windows(2).all(|w| w[1] < w[0]) {
            return Err(format!("not strictly decreasing: {d:?}"));
        }
        let du = r.constant("Du_L2").unwrap();
        let last = distance_to_classical_gradient(&u, FracOrder::new(0.99).map_err(err)?).map_err(err)?;
        worst_rel = worst_rel.max(last / du);
    }
    ensure(
        worst_rel <= 1e-2,
        format!("strictly decreasing on 5 fields; max relative distance at 0.99 = {worst_rel:.2e} (limit 1e-2)"),
    )
}

fn c4_quadrature() -> Outcome {
    let grid = Grid::new(1, std::f64::consts::PI, 64).map_err(err)?;
    let s = FracOrder::new(0.5).map_err(err)?;
    let u = ScalarField::from_fn(grid, |x| (-2.0 * x[0] * x[0]).exp() * (1.0 + 0.3 * x[0]));
    let q = quadrature_frac_gradient(&u, s).map_err(err)?;
    let f = frac_gradient(&u, s).map_err(err)?;
    let e = lp_norm(&q.sub(&f).map_err(err)?.magnitude(), 2.0, Region::Whole).map_err(err)?;
    let n = lp_norm(&f.magnitude(), 2.0, Region::Whole).map_err(err)?;
    ensure(e / n <= 0.05, format!("relative L2 difference {:.3e} (limit 0.05)", e / n))
}

fn c5_oracle_equivalence() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, d, s) in vi_solutions() {
        let o = oracle_solve_vi(d, 1.0, 1e-10, 200_000).map_err(err)?;
        let on = d.hsigma_norm(&o.u).map_err(err)?;
        let diff = d.hsigma_norm(&s.u.sub(&o.u).map_err(err)?).map_err(err)? / on;
        let (ep, eo) = (energy(&s.u, d).map_err(err)?, energy(&o.u, d).map_err(err)?);
        let de = (ep - eo).abs() / eo.abs();
        ok &= diff <= 1e-3 && de <= 1e-4;
        lines.push(format!("{name}: dH {diff:.1e} dJ {de:.1e}"));
    }
    ensure(ok, lines.join(", "))
}

fn c6_feasibility_complementarity() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, d, s) in vi_solutions() {
        let feas = s.diagnostics.feas_violation;
        let lam_min = s.lambda.min();
        let lam_l1 = lp_norm(&s.lambda, 1.0, Region::Whole).map_err(err)?;
        let bound = 1e-3 * lam_l1 * d.threshold().sup();
        let gap = s.diagnostics.comp_gap;
        ok &= feas <= 1e-3 * d.nu() && lam_min >= 0.0 && gap <= bound;
        lines.push(format!("{name}: viol {feas:.2e}/{:.1e} min lambda {lam_min:.1e} gap {gap:.2e}/{bound:.2e}", 1e-3 * d.nu()));
    }
    ensure(ok, lines.join(", "))
}

fn c7_multiplier_residual() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, d, s) in vi_solutions() {
        let fmax = lp_norm(d.f(), f64::INFINITY, Region::Whole).map_err(err)?;
        let bound = 10.0 * NEWTON_TOL * (1.0 + fmax);
        let r = s.diagnostics.multiplier_residual;
        ok &= r <= bound;
        lines.push(format!("{name}: {r:.2e}/{bound:.2e}"));
    }
    ensure(ok, lines.join(", "))
}

fn c8_penalty_traces() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, d, _) in vi_solutions() {
        let r = penalty_trace_study(d, &penalty_config()).map_err(err)?;
        let relevant: Vec<_> =
            r.checks.iter().filter(|c| c.name.ends_with("_bounded") || c.name.starts_with("set_W_zero")).collect();
        let pass = relevant.iter().all(|c| c.passed);
        ok &= pass;
        let worst = relevant.iter().filter(|c| c.bound > 0.0).map(|c| c.measured / c.bound).fold(0.0f64, f64::max);
        lines.push(format!("{name}: {} (max trace/(10 x initial) {worst:.2})", if pass { "ok" } else { "violated" }));
    }
    ensure(ok, lines.join(", "))
}

fn c9_lipschitz() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, seed) in [("binding_1d", 91u64), ("binding_2d", 92)] {
        let d = vi_solutions().iter().find(|(n, ..)| *n == name).unwrap().1.clone();
        let r = lipschitz_study_f(&d, &perturbations_f(&d, 10, 0.1, seed), &penalty_config(), seed).map_err(err)?;
        let c = r.checks.iter().find(|c| c.name == "ratio_sharp_le_C_sharp").unwrap();
        ok &= c.passed;
        lines.push(format!("{name}: max ratio {:.3e} <= C_# {:.3e}", c.measured, c.bound));
    }
    ensure(ok, lines.join(", "))
}

fn c10_holder() -> Outcome {
    let d = instances::binding_1d().map_err(err)?;
    let h = d.g().clone();
    let r = holder_study_g(&d, &[0.4, 0.2, 0.1, 0.05], &h, &penalty_config(), 10).map_err(err)?;
    let rho: Vec<f64> = r.column("rho").unwrap().into_iter().flatten().collect();
    ensure(
        r.passed(),
        format!(
            "rho {:?}, C_nu {:.3e}, observed exponent {:.3}",
            rho.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
            r.constant("C_nu").unwrap(),
            r.observed_exponent.unwrap_or(f64::NAN)
        ),
    )
}

fn c11_scaling() -> Outcome {
    let (_, d, s) = &vi_solutions()[0];
    let su = d.hsigma_norm(&s.u).map_err(err)?;
    let mut lines = Vec::new();
    let mut ok = true;
    for mu in [0.5, 2.0, 5.0] {
        let scaled =
            d.with_f(d.f().scale(mu)).map_err(err)?.with_threshold(d.threshold().scale(mu).map_err(err)?).map_err(err)?;
        let sm = solve_vi(&scaled, &penalty_config()).map_err(err)?;
        let dev = d.hsigma_norm(&sm.u.sub(&s.u.scale(mu)).map_err(err)?).map_err(err)?;
        let bound = 10.0 * NEWTON_TOL * mu * (1.0 + su);
        ok &= dev <= bound;
        lines.push(format!("mu {mu}: {dev:.2e}/{bound:.2e}"));
    }
    ensure(ok, lines.join(", "))
}

fn c12_contraction() -> Outcome {
    let (_, p, op, sol) = &qvi_solutions()[0];
    let c_star = estimate_sobolev_constant(p.mask(), p.sigma(), instances::SOBOLEV_SEED).map_err(err)?.constant;
    let cert = contraction_certificate(p.f(), op, c_star, p.coefficients().a_star()).map_err(err)?;
    let res: Vec<f64> = sol.trace.iter().map(|r| r.fp_residual).collect();
    let ratios: Vec<f64> = res.windows(2).skip(1).map(|w| w[1] / w[0]).collect();
    let max_ratio = ratios.iter().copied().fold(0.0f64, f64::max);
    let d0 = p.with_threshold(op.apply(&ScalarField::zeros(*p.mask().grid())).map_err(err)?).map_err(err)?;
    let init = random_feasible(&d0, &mut ChaCha8Rng::seed_from_u64(12)).map_err(err)?;
    let other = solve_qvi(p, op, &qvi_config(), &init).map_err(err)?;
    let un = p.hsigma_norm(&sol.u).map_err(err)?;
    let gap = p.hsigma_norm(&sol.u.sub(&other.u).map_err(err)?).map_err(err)?;
    let gap_bound = 10.0 * OUTER_TOL * (1.0 + un);
    ensure(
        cert.certified && (cert.q - 0.5).abs() < 1e-6 && max_ratio <= 0.6 && gap <= gap_bound,
        format!("q {:.3}, max ratio (k>=2) {max_ratio:.3e}, two-start gap {gap:.2e}/{gap_bound:.2e}", cert.q),
    )
}

fn c13_a_priori() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, p, _, sol) in qvi_solutions() {
        let est = estimate_sobolev_constant(p.mask(), p.sigma(), instances::SOBOLEV_SEED).map_err(err)?;
        let bound = 1.1 * est.constant / p.coefficients().a_star() * dual_norm(p.f(), p.mask(), p.sigma()).map_err(err)?;
        let worst = sol.trace.iter().map(|r| r.inner_norm.max(r.iterate_norm)).fold(0.0f64, f64::max);
        ok &= worst <= bound;
        lines.push(format!("{name}: {worst:.3e}/{bound:.3e}"));
    }
    ensure(ok, lines.join(", "))
}

fn write_all_csvs(dir: &Path) -> Result<(), String> {
    for (name, d) in instances::vi_instances().map_err(err)? {
        let s = solve_vi(&d, &penalty_config()).map_err(err)?;
        s.write_diagnostics(dir.join(format!("{name}_diagnostics.csv"))).map_err(err)?;
        penalty_trace_study(&d, &penalty_config()).map_err(err)?.write_csv(dir.join(format!("{name}_trace.csv"))).map_err(err)?;
    }
    for (name, p, op) in instances::qvi_instances().map_err(err)? {
        let s = solve_qvi(&p, &op, &qvi_config(), &ScalarField::zeros(*p.mask().grid())).map_err(err)?;
        fracvi::qvi::write_trace(&s.trace, dir.join(format!("{name}_qvi_trace.csv"))).map_err(err)?;
        if name == "separated" {
            let c = estimate_sobolev_constant(p.mask(), p.sigma(), instances::SOBOLEV_SEED).map_err(err)?.constant;
            contraction_certificate(p.f(), &op, c, p.coefficients().a_star())
                .map_err(err)?
                .write_csv(dir.join("certificate.csv"))
                .map_err(err)?;
        }
    }
    let d = instances::binding_1d().map_err(err)?;
    lipschitz_study_f(&d, &perturbations_f(&d, 10, 0.1, 91), &penalty_config(), 91)
        .map_err(err)?
        .write_csv(dir.join("lipschitz.csv"))
        .map_err(err)?;
    holder_study_g(&d, &[0.4, 0.2, 0.1, 0.05], &d.g().clone(), &penalty_config(), 10)
        .map_err(err)?
        .write_csv(dir.join("holder.csv"))
        .map_err(err)?;
    let seq: Vec<Threshold> =
        [2.0, 4.0, 8.0, 16.0].iter().map(|n| d.threshold().scale(1.0 + 1.0 / n)).collect::<Result<_, _>>().map_err(err)?;
    mosco_diagnostic(&d, &seq, &penalty_config(), 14).map_err(err)?.write_csv(dir.join("mosco.csv")).map_err(err)?;
    Ok(())
}

fn c14_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    write_all_csvs(a.path())?;
    write_all_csvs(b.path())?;
    let mut names: Vec<_> = std::fs::read_dir(a.path()).map_err(err)?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in &names {
        let (x, y) = (std::fs::read(a.path().join(n)).map_err(err)?, std::fs::read(b.path().join(n)).map_err(err)?);
        if x != y {
            return Err(format!("{} differs between runs", n.to_string_lossy()));
        }
    }
    ensure(names.len() >= 12, format!("{} CSV files bit-identical across two runs", names.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("operator identities", c1_operator_identities),
        ("pure-mode symbol", c2_pure_mode_symbol),
        ("sigma -> 1 limit", c3_sigma_limit),
        ("quadrature cross-check", c4_quadrature),
        ("oracle equivalence", c5_oracle_equivalence),
        ("feasibility and complementarity", c6_feasibility_complementarity),
        ("multiplier residual", c7_multiplier_residual),
        ("penalty traces bounded", c8_penalty_traces),
        ("Lipschitz in f", c9_lipschitz),
        ("Hoelder in g", c10_holder),
        ("scaling identity", c11_scaling),
        ("certified contraction", c12_contraction),
        ("a priori bound", c13_a_priori),
        ("determinism", c14_determinism),
    ];
    let mut failed = 0;
    let start = Instant::now();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
