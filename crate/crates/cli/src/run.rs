use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fracvi::analysis::{
    holder_study_g, lipschitz_study_f, mosco_diagnostic, penalty_trace_study, perturbations_f, sigma_limit_study, StudyReport,
};
use fracvi::oracle::{certify, oracle_solve_vi};
use fracvi::qvi::{contraction_certificate, estimate_sobolev_constant, solve_qvi};
use fracvi::vi::{energy, solve_vi, Threshold};
use fracvi::ScalarField;

use crate::config::RunConfig;
use crate::{CliError, Command};

/// Samples used by the oracle-check energy certificate.
const CERTIFY_SAMPLES: usize = 1000;
const ORACLE_H_TOL: f64 = 1e-3;
const ORACLE_ENERGY_TOL: f64 = 1e-4;

struct Run {
    dir: PathBuf,
    files: Vec<PathBuf>,
    log: String,
}

impl Run {
    fn record(&mut self, files: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(files);
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn summary(&mut self, line: String) {
        println!("{line}");
        let _ = writeln!(self.log, "summary {line}");
    }

    fn study(&mut self, report: &StudyReport, name: &str) -> Result<(), CliError> {
        let path = self.path(name);
        report.write_csv(&path)?;
        self.record([path]);
        self.summary(report.summary_line());
        if report.passed() {
            Ok(())
        } else {
            let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            Err(CliError::Gate(failed.join(",")))
        }
    }

    /// `run.log` then `manifest.csv`, which lists every artifact and is written last.
    fn finish(mut self, outcome: &Result<(), CliError>) -> std::io::Result<()> {
        match outcome {
            Ok(()) => self.log.push_str("status ok\n"),
            Err(e) => {
                let _ = writeln!(self.log, "status error reason={} exit={} message={}", e.reason(), e.exit_code(), e);
            }
        }
        let log = self.path("run.log");
        std::fs::write(&log, &self.log)?;
        self.files.push(log);
        let mut manifest = String::from("file,bytes\n");
        for f in &self.files {
            let bytes = std::fs::metadata(f)?.len();
            let name = f.strip_prefix(&self.dir).unwrap_or(f);
            let _ = writeln!(manifest, "{},{bytes}", name.display());
        }
        std::fs::write(self.path("manifest.csv"), manifest)
    }
}

pub fn execute(cmd: Command, config: &Path, out: Option<&Path>, seed: Option<u64>) -> u8 {
    let cfg = RunConfig::load(config);
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.as_ref().ok().and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("cannot create {}: {e}", dir.display());
        return 1;
    }
    let mut run = Run { dir, files: Vec::new(), log: String::new() };
    let _ = writeln!(run.log, "command {cmd:?}\nconfig {}", config.display());
    let outcome = cfg.and_then(|mut c| {
        if let Some(s) = seed {
            c.seed = s;
        }
        let _ = writeln!(run.log, "seed {}", c.seed);
        dispatch(cmd, &c, &mut run)
    });
    if let Err(e) = &outcome {
        eprintln!("error [{}]: {e}", e.reason());
    }
    let code = outcome.as_ref().err().map_or(0, CliError::exit_code);
    if let Err(e) = run.finish(&outcome) {
        eprintln!("cannot write run.log/manifest.csv: {e}");
        return 1;
    }
    code
}

fn dispatch(cmd: Command, cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    match cmd {
        Command::SolveVi => {
            let d = cfg.problem()?;
            let s = solve_vi(&d, &cfg.penalty)?;
            run.record(s.save(&run.dir)?);
            let dg = &s.diagnostics;
            run.summary(format!(
                "solve-vi: eps_final={:e} feas_violation={:e} comp_gap={:e} multiplier_residual={:e} energy={}",
                s.eps_final,
                dg.feas_violation,
                dg.comp_gap,
                dg.multiplier_residual,
                dg.energy.map_or("n/a".into(), |e| format!("{e:e}"))
            ));
        }
        Command::SolveQvi => {
            let (p, op, spec) = cfg.qvi()?;
            let s = solve_qvi(&p, &op, &spec.config, &ScalarField::zeros(*p.mask().grid()))?;
            run.record(s.save(&run.dir)?);
            run.summary(format!(
                "solve-qvi: variant={} iterations={} fixed_point_residual={:e}",
                op.name(),
                s.iterations,
                s.fixed_point_residual
            ));
        }
        Command::PenaltySweep => {
            let d = cfg.problem()?;
            run.study(&penalty_trace_study(&d, &cfg.penalty)?, "penalty_trace.csv")?;
        }
        Command::StudyLipschitz => {
            let d = cfg.problem()?;
            let deltas = perturbations_f(&d, cfg.study.perturbations, cfg.study.perturbation_amp, cfg.seed);
            run.study(&lipschitz_study_f(&d, &deltas, &cfg.penalty, cfg.seed)?, "lipschitz.csv")?;
        }
        Command::StudyHolder => {
            let d = cfg.problem()?;
            let h = d.g().clone();
            run.study(&holder_study_g(&d, &cfg.study.t_values, &h, &cfg.penalty, cfg.seed)?, "holder.csv")?;
        }
        Command::StudySigmaLimit => {
            let d = cfg.problem()?;
            let u = solve_vi(&d, &cfg.penalty)?.u;
            run.study(&sigma_limit_study(&u, &cfg.study.sigmas)?, "sigma_limit.csv")?;
        }
        Command::StudyMosco => {
            let d = cfg.problem()?;
            let seq =
                cfg.study.mosco_n.iter().map(|n| d.threshold().scale(1.0 + 1.0 / n)).collect::<Result<Vec<Threshold>, _>>()?;
            run.study(&mosco_diagnostic(&d, &seq, &cfg.penalty, cfg.seed)?, "mosco.csv")?;
        }
        Command::Certificate => {
            let (p, op, _) = cfg.qvi()?;
            let est = estimate_sobolev_constant(p.mask(), p.sigma(), cfg.seed)?;
            let r = contraction_certificate(p.f(), &op, est.constant, p.coefficients().a_star())?;
            let path = run.path("certificate.csv");
            r.write_csv(&path)?;
            run.record([path]);
            let fals = op.falsify_moduli(r.r_f, 200, cfg.seed)?;
            run.summary(format!(
                "certificate: variant={} C_star={:e} C_sharp={:e} R_f={:e} q={:e} certified={} moduli_falsified={}",
                op.name(),
                est.constant,
                r.c_sharp,
                r.r_f,
                r.q,
                r.certified,
                fals.falsified()
            ));
            if !r.certified {
                return Err(CliError::Gate(format!("q = {:e} >= 1", r.q)));
            }
            if fals.falsified() {
                return Err(CliError::Gate("declared moduli falsified by sampling".into()));
            }
        }
        Command::OracleCheck => {
            let d = cfg.problem()?;
            let s = solve_vi(&d, &cfg.penalty)?;
            let o = oracle_solve_vi(&d, cfg.oracle.rho, cfg.oracle.tol, cfg.oracle.max_iter)?;
            let on = d.hsigma_norm(&o.u)?;
            let dh = d.hsigma_norm(&s.u.sub(&o.u)?)? / on.max(f64::MIN_POSITIVE);
            let (jp, jo) = (energy(&s.u, &d)?, energy(&o.u, &d)?);
            let dj = (jp - jo).abs() / jo.abs().max(f64::MIN_POSITIVE);
            let cert = certify(&d, &o.u, CERTIFY_SAMPLES, 1e-8 * jo.abs().max(1.0), cfg.seed)?;
            let path = run.path("oracle_check.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(e.into()))?;
            w.write_record([
                "h_rel_diff",
                "energy_rel_diff",
                "admm_iterations",
                "certificate_worst_excess",
                "certificate_passed",
            ])
            .and_then(|_| {
                w.write_record([
                    format!("{dh:e}"),
                    format!("{dj:e}"),
                    o.iterations.to_string(),
                    format!("{:e}", cert.worst_excess),
                    cert.passed.to_string(),
                ])
            })
            .map_err(|e| CliError::Io(e.into()))?;
            w.flush()?;
            run.record([path]);
            run.summary(format!(
                "oracle-check: h_rel_diff={dh:e} energy_rel_diff={dj:e} admm_iterations={} certificate={}",
                o.iterations,
                if cert.passed { "passed" } else { "failed" }
            ));
            if dh > ORACLE_H_TOL || dj > ORACLE_ENERGY_TOL || !cert.passed {
                return Err(CliError::Gate("penalty and oracle solutions disagree".into()));
            }
        }
    }
    Ok(())
}
