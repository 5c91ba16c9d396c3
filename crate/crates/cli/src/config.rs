//! INI run configuration.
//!
//! Every section has a fixed key set; unknown sections or keys are errors.
//! Fields referenced by path are resolved relative to the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fracvi::instances::SCALE;
use fracvi::qvi::{Functional, Kernel, Outer, QVIConfig, QVIProblem, ThresholdOperator, Variant, VectorKernel};
use fracvi::vi::{EllipticCoefficients, PenaltyConfig, ProblemData, Threshold};
use fracvi::{DomainMask, FracOrder, Grid, ScalarField, VectorField};
use ini::Ini;
use nalgebra::DMatrix;

use crate::CliError;

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["seed", "out"]),
    ("grid", &["dim", "L", "n", "omega", "padding"]),
    ("problem", &["sigma", "A", "a_star", "a_upper", "f", "g", "nu"]),
    ("penalty", &["eps0", "ratio", "eps_min", "newton_tol", "newton_max", "damping", "shrink"]),
    (
        "qvi",
        &[
            "variant",
            "phi",
            "eta0",
            "c1",
            "gamma",
            "kernel",
            "amp",
            "width",
            "direction",
            "outer",
            "outer_base",
            "outer_amp",
            "outer_scale",
            "outer_coeff",
            "damping",
            "outer_tol",
            "outer_max",
        ],
    ),
    ("study", &["perturbations", "perturbation_amp", "t_values", "sigmas", "mosco_n"]),
    ("oracle", &["rho", "tol", "max_iter"]),
];

/// One `[section] key = value` table with typed accessors.
#[derive(Debug, Default)]
struct Section {
    name: String,
    values: BTreeMap<String, String>,
}

impl Section {
    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key).ok_or_else(|| CliError::Config(format!("[{}] missing key '{key}'", self.name)))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::Config(format!("[{}] {key} = '{v}' is not a valid value", self.name))))
            .transpose()
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn need<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.parse(key)?.ok_or_else(|| CliError::Config(format!("[{}] missing key '{key}'", self.name)))
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("[{}] {key}: bad list entry '{s}'", self.name)))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum CoefficientSpec {
    Identity,
    Constant(f64),
    Scalar { path: PathBuf, a_star: f64, a_upper: f64 },
    Matrix { path: PathBuf, a_star: f64, a_upper: f64 },
}

/// Right-hand side presets.
#[derive(Debug, Clone)]
pub enum FieldSpec {
    Constant(f64),
    /// `amp · sin(k π x₁ / L)`
    Mode {
        k: usize,
        amp: f64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub enum ThresholdSpec {
    Constant(f64),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct StudySpec {
    pub perturbations: usize,
    pub perturbation_amp: f64,
    pub t_values: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub mosco_n: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OracleSpec {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct QviSpec {
    pub variant: String,
    pub phi: ThresholdSpec,
    pub eta0: f64,
    pub c1: f64,
    pub gamma: f64,
    pub kernel: Option<PathBuf>,
    pub amp: f64,
    pub width: f64,
    pub direction: [f64; 3],
    pub outer: String,
    pub outer_base: ThresholdSpec,
    pub outer_amp: f64,
    pub outer_scale: f64,
    pub outer_coeff: f64,
    pub config: QVIConfig,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub dim: usize,
    pub extent: f64,
    pub n: usize,
    /// Half-width of the box Ω, or `None` for the whole torus.
    pub omega: Option<f64>,
    pub padding: f64,
    pub sigma: f64,
    pub coefficients: CoefficientSpec,
    pub f: FieldSpec,
    pub g: ThresholdSpec,
    pub nu: Option<f64>,
    pub penalty: PenaltyConfig,
    pub qvi: Option<QviSpec>,
    pub study: StudySpec,
    pub oracle: OracleSpec,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p.trim());
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn num(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|_| CliError::Config(format!("{what}: '{s}' is not a number")))
}

fn threshold_spec(v: &str, base: &Path, what: &str) -> Result<ThresholdSpec, CliError> {
    match v.split_once(':') {
        Some(("constant", c)) => Ok(ThresholdSpec::Constant(scaled(c, what)?)),
        Some(("file", p)) => Ok(ThresholdSpec::File(resolve(base, p))),
        _ => Err(CliError::Config(format!("{what}: expected constant:<c> or file:<path>, got '{v}'"))),
    }
}

/// Numbers may be written as multiples of the reference scale, e.g. `2S`.
fn scaled(v: &str, what: &str) -> Result<f64, CliError> {
    match v.trim().strip_suffix('S') {
        Some("") => Ok(SCALE),
        Some(m) => Ok(num(m, what)? * SCALE),
        None => num(v, what),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        let mut sections: BTreeMap<&str, Section> = BTreeMap::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(CliError::Config(format!("key '{k}' outside any section")));
                }
                continue;
            };
            let Some((sname, keys)) = SECTIONS.iter().find(|(s, _)| *s == name) else {
                return Err(CliError::Config(format!("unknown section [{name}]")));
            };
            let sec = sections.entry(sname).or_insert_with(|| Section { name: sname.to_string(), ..Default::default() });
            for (k, v) in props.iter() {
                if !keys.contains(&k) {
                    return Err(CliError::Config(format!("unknown key '{k}' in [{name}]")));
                }
                if sec.values.insert(k.to_string(), v.trim().to_string()).is_some() {
                    return Err(CliError::Config(format!("duplicate key '{k}' in [{name}]")));
                }
            }
        }
        let empty = |name: &str| Section { name: name.to_string(), ..Default::default() };
        let mut take = |name: &str| sections.remove(name).unwrap_or_else(|| empty(name));
        let (run, grid, problem, penalty, qvi, study, oracle) =
            (take("run"), take("grid"), take("problem"), take("penalty"), take("qvi"), take("study"), take("oracle"));

        let omega = match grid.raw("omega") {
            None => Some(1.0),
            Some("torus") => None,
            Some(v) => Some(num(v, "[grid] omega")?),
        };

        let coefficients = {
            let spec = problem.raw("A").unwrap_or("identity");
            let bounds = || -> Result<(f64, f64), CliError> { Ok((problem.need("a_star")?, problem.need("a_upper")?)) };
            match spec.split_once(':') {
                None if spec == "identity" => CoefficientSpec::Identity,
                Some(("constant", c)) => CoefficientSpec::Constant(num(c, "[problem] A")?),
                Some(("scalar", p)) => {
                    let (a_star, a_upper) = bounds()?;
                    CoefficientSpec::Scalar { path: resolve(base, p), a_star, a_upper }
                }
                Some(("matrix", p)) => {
                    let (a_star, a_upper) = bounds()?;
                    CoefficientSpec::Matrix { path: resolve(base, p), a_star, a_upper }
                }
                _ => return Err(CliError::Config(format!("[problem] A: unrecognized '{spec}'"))),
            }
        };

        let f_raw = problem.required("f")?;
        let f = match f_raw.split(':').collect::<Vec<_>>().as_slice() {
            ["constant", c] => FieldSpec::Constant(scaled(c, "[problem] f")?),
            ["mode", k, amp] => FieldSpec::Mode {
                k: k.trim().parse().map_err(|_| CliError::Config(format!("[problem] f: bad mode index '{k}'")))?,
                amp: scaled(amp, "[problem] f")?,
            },
            ["file", p] => FieldSpec::File(resolve(base, p)),
            _ => {
                return Err(CliError::Config(format!(
                    "[problem] f: expected constant:<c>, mode:<k>:<amp> or file:<path>, got '{f_raw}'"
                )))
            }
        };
        let g = threshold_spec(problem.required("g")?, base, "[problem] g")?;
        let nu = problem.raw("nu").map(|v| scaled(v, "[problem] nu")).transpose()?;

        let defaults = PenaltyConfig::default();
        let penalty_cfg = PenaltyConfig {
            eps0: penalty.get("eps0", defaults.eps0)?,
            ratio: penalty.get("ratio", defaults.ratio)?,
            eps_min: penalty.get("eps_min", defaults.eps_min)?,
            newton_tol: penalty.get("newton_tol", defaults.newton_tol)?,
            newton_max: penalty.get("newton_max", defaults.newton_max)?,
            damping: penalty.get("damping", defaults.damping)?,
            shrink: penalty.get("shrink", defaults.shrink)?,
        };

        let qvi_spec = if qvi.values.is_empty() {
            None
        } else {
            let qd = QVIConfig::default();
            let direction = qvi.list("direction", &[1.0, 0.0, 0.0])?;
            if direction.is_empty() || direction.len() > 3 {
                return Err(CliError::Config("[qvi] direction needs 1 to 3 entries".into()));
            }
            let mut dir = [0.0; 3];
            dir[..direction.len()].copy_from_slice(&direction);
            Some(QviSpec {
                variant: qvi.required("variant")?.to_string(),
                phi: threshold_spec(qvi.raw("phi").unwrap_or("constant:2S"), base, "[qvi] phi")?,
                eta0: qvi.get("eta0", 1.0)?,
                c1: qvi.get("c1", 0.0)?,
                gamma: qvi.raw("gamma").map(|v| scaled(v, "[qvi] gamma")).transpose()?.unwrap_or(SCALE),
                kernel: match qvi.raw("kernel") {
                    None | Some("gaussian") => None,
                    Some(v) => match v.split_once(':') {
                        Some(("file", p)) => Some(resolve(base, p)),
                        _ => return Err(CliError::Config(format!("[qvi] kernel: expected gaussian or file:<path>, got '{v}'"))),
                    },
                },
                amp: qvi.get("amp", 1.0)?,
                width: qvi.get("width", 0.5)?,
                direction: dir,
                outer: qvi.raw("outer").unwrap_or("saturating").to_string(),
                outer_base: threshold_spec(qvi.raw("outer_base").unwrap_or("constant:2S"), base, "[qvi] outer_base")?,
                outer_amp: qvi.raw("outer_amp").map(|v| scaled(v, "[qvi] outer_amp")).transpose()?.unwrap_or(SCALE),
                outer_scale: qvi.raw("outer_scale").map(|v| scaled(v, "[qvi] outer_scale")).transpose()?.unwrap_or(SCALE),
                outer_coeff: qvi.get("outer_coeff", 0.0)?,
                config: QVIConfig {
                    damping: qvi.get("damping", qd.damping)?,
                    outer_tol: qvi.get("outer_tol", qd.outer_tol)?,
                    outer_max: qvi.get("outer_max", qd.outer_max)?,
                    penalty: penalty_cfg.clone(),
                },
            })
        };

        let cfg = RunConfig {
            seed: run.get("seed", 0)?,
            out: run.raw("out").map(|p| resolve(base, p)),
            dim: grid.get("dim", 1)?,
            extent: grid.get("L", 2.0)?,
            n: grid.need("n")?,
            omega,
            padding: grid.get("padding", fracvi::field::DEFAULT_MIN_PADDING)?,
            sigma: problem.need("sigma")?,
            coefficients,
            f,
            g,
            nu,
            penalty: penalty_cfg,
            qvi: qvi_spec,
            study: StudySpec {
                perturbations: study.get("perturbations", 10)?,
                perturbation_amp: study.get("perturbation_amp", 0.1)?,
                t_values: study.list("t_values", &[0.4, 0.2, 0.1, 0.05])?,
                sigmas: study.list("sigmas", &[0.6, 0.7, 0.8, 0.9, 0.99])?,
                mosco_n: study.list("mosco_n", &[2.0, 4.0, 8.0, 16.0])?,
            },
            oracle: OracleSpec {
                rho: oracle.get("rho", 1.0)?,
                tol: oracle.get("tol", 1e-10)?,
                max_iter: oracle.get("max_iter", 200_000)?,
            },
        };
        cfg.penalty.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.dim, self.extent, self.n)?)
    }

    pub fn mask(&self) -> Result<DomainMask, CliError> {
        let grid = self.grid()?;
        Ok(match self.omega {
            None => DomainMask::full_torus(grid),
            Some(w) => DomainMask::boxed_with_padding(grid, w, self.padding)?,
        })
    }

    fn coefficients(&self, grid: Grid) -> Result<EllipticCoefficients, CliError> {
        Ok(match &self.coefficients {
            CoefficientSpec::Identity => EllipticCoefficients::identity(grid),
            CoefficientSpec::Constant(a) => EllipticCoefficients::constant(grid, *a)?,
            CoefficientSpec::Scalar { path, a_star, a_upper } => {
                let a = load_scalar(path, &grid)?;
                EllipticCoefficients::scalar(&a, *a_star, *a_upper)?
            }
            CoefficientSpec::Matrix { path, a_star, a_upper } => {
                let m = VectorField::load_fvf(path)?;
                let dim = grid.dim();
                if *m.grid() != grid || m.components().len() != dim * dim {
                    return Err(CliError::Config(format!(
                        "{}: expected {} components on the run grid",
                        path.display(),
                        dim * dim
                    )));
                }
                let mut blocks = Vec::with_capacity(grid.len() * dim * dim);
                for x in 0..grid.len() {
                    blocks.extend(m.components().iter().map(|c| c.values()[x]));
                }
                EllipticCoefficients::matrix(grid, blocks, *a_star, *a_upper)?
            }
        })
    }

    fn f_field(&self, mask: &DomainMask) -> Result<ScalarField, CliError> {
        let grid = *mask.grid();
        let f = match &self.f {
            FieldSpec::Constant(c) => ScalarField::constant(grid, *c).restrict(mask)?,
            FieldSpec::Mode { k, amp } => {
                let w = *k as f64 * std::f64::consts::PI / grid.extent();
                ScalarField::from_fn(grid, |x| amp * (w * x[0]).sin()).restrict(mask)?
            }
            FieldSpec::File(p) => load_scalar(p, &grid)?,
        };
        Ok(f)
    }

    fn threshold(&self, grid: Grid) -> Result<Threshold, CliError> {
        let g = spec_field(&self.g, &grid)?;
        let nu = match (&self.g, self.nu) {
            (_, Some(nu)) => nu,
            (ThresholdSpec::Constant(c), None) => *c,
            (ThresholdSpec::File(_), None) => {
                return Err(CliError::Config("[problem] nu is required when g is read from a file".into()))
            }
        };
        Ok(Threshold::new(g, nu)?)
    }

    pub fn problem(&self) -> Result<ProblemData, CliError> {
        let mask = self.mask()?;
        let grid = *mask.grid();
        Ok(ProblemData::new(
            mask.clone(),
            FracOrder::new(self.sigma)?,
            self.coefficients(grid)?,
            self.f_field(&mask)?,
            self.threshold(grid)?,
        )?)
    }

    pub fn qvi(&self) -> Result<(QVIProblem, ThresholdOperator, &QviSpec), CliError> {
        let spec = self.qvi.as_ref().ok_or_else(|| CliError::Config("this subcommand needs a [qvi] section".into()))?;
        let mask = self.mask()?;
        let grid = *mask.grid();
        let sigma = FracOrder::new(self.sigma)?;
        let problem = QVIProblem::new(mask.clone(), sigma, self.coefficients(grid)?, self.f_field(&mask)?)?;
        let outer = || -> Result<Outer, CliError> {
            let base = spec_field(&spec.outer_base, &grid)?;
            match spec.outer.as_str() {
                "saturating" => Ok(Outer::Saturating { base, amp: spec.outer_amp, scale: spec.outer_scale }),
                "quadratic" => Ok(Outer::Quadratic { base, coeff: spec.outer_coeff }),
                o => Err(CliError::Config(format!("[qvi] outer: unknown '{o}'"))),
            }
        };
        let variant = match spec.variant.as_str() {
            "separated" => Variant::Separated {
                phi: spec_field(&spec.phi, &grid)?,
                functional: if spec.c1 > 0.0 {
                    Functional::Builtin { eta0: spec.eta0, c1: spec.c1 }
                } else {
                    Functional::Constant(spec.eta0)
                },
            },
            "constant" => {
                Variant::Separated { phi: ScalarField::constant(grid, spec.gamma), functional: Functional::Constant(1.0) }
            }
            "kernel_integral" => {
                let kernel = match &spec.kernel {
                    None => Kernel::Gaussian { amp: spec.amp, width: spec.width },
                    Some(p) => Kernel::Dense(load_matrix(p, grid.len(), mask.count())?),
                };
                Variant::KernelIntegral { kernel, outer: outer()? }
            }
            "frac_grad_kernel" => {
                if spec.kernel.is_some() {
                    return Err(CliError::Config("[qvi] kernel files are only supported for kernel_integral".into()));
                }
                Variant::FracGradKernel {
                    kernel: VectorKernel::Gaussian { amp: spec.amp, width: spec.width, direction: spec.direction },
                    outer: outer()?,
                }
            }
            "superposition" => Variant::Superposition { outer: outer()? },
            v => return Err(CliError::Config(format!("[qvi] variant: unknown '{v}'"))),
        };
        Ok((problem, ThresholdOperator::new(mask, sigma, variant)?, spec))
    }
}

fn spec_field(spec: &ThresholdSpec, grid: &Grid) -> Result<ScalarField, CliError> {
    match spec {
        ThresholdSpec::Constant(c) => Ok(ScalarField::constant(*grid, *c)),
        ThresholdSpec::File(p) => load_scalar(p, grid),
    }
}

fn load_scalar(path: &Path, grid: &Grid) -> Result<ScalarField, CliError> {
    let f = ScalarField::load_fvf(path)?;
    if f.grid() != grid {
        return Err(CliError::Config(format!("{}: grid does not match the [grid] section", path.display())));
    }
    Ok(f)
}

/// Headerless CSV matrix, one row per grid node.
fn load_matrix(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut data = Vec::with_capacity(rows * cols);
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if rec.len() != cols {
            return Err(CliError::Config(format!("{}: expected {cols} columns, got {}", path.display(), rec.len())));
        }
        for v in rec.iter() {
            data.push(num(v, &path.display().to_string())?);
        }
    }
    if data.len() != rows * cols {
        return Err(CliError::Config(format!("{}: expected {rows} rows", path.display())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}
