//! Semismooth Newton for the penalized problem
//! `-div^σ[(k_ε(|D^σu| - g) + A) D^σu] = f` on Ω, and the ε-continuation.

use nalgebra::DMatrix;

use super::diagnostics::{energy_unchecked, vi_residual_unchecked};
use super::{Diagnostics, EpsRecord, PenaltyConfig, ProblemData, VISolution};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::{self, Factor, Weights};
use crate::vi::penalty::penalty_with_slope;

/// Systems with more Ω-nodes than this are solved matrix-free.
const DENSE_LIMIT: usize = 1600;
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const KRYLOV_TOL: f64 = 1e-11;
const KRYLOV_MAX: usize = 2000;
const VI_RESIDUAL_TRIALS: usize = 64;

/// `D^σu` and the penalty coefficient at every grid node.
#[derive(Debug, Clone)]
pub(crate) struct NodeState {
    pub grad: Vec<Vec<f64>>,
    pub mag: Vec<f64>,
    pub k: Vec<f64>,
    pub slope: Vec<f64>,
}

impl NodeState {
    pub fn new(data: &ProblemData, u_full: &[f64], eps: Option<f64>) -> Self {
        Self::scaled(data, u_full, eps, 1.0)
    }

    /// State for the data `(θf, θg)`.
    fn scaled(data: &ProblemData, u_full: &[f64], eps: Option<f64>, theta: f64) -> Self {
        let grad = data.ops().gradient_raw(u_full);
        let len = u_full.len();
        let g = data.g().values();
        let mut mag = vec![0.0; len];
        let mut k = vec![0.0; len];
        let mut slope = vec![0.0; len];
        for x in 0..len {
            mag[x] = grad.iter().map(|c| c[x] * c[x]).sum::<f64>().sqrt();
            if let Some(eps) = eps {
                let (kv, dv) = penalty_with_slope(mag[x] - theta * g[x], eps);
                k[x] = kv;
                slope[x] = dv;
            }
        }
        Self { grad, mag, k, slope }
    }

    /// Flux `(w + A) D^σu` for a nodewise weight `w`.
    pub fn flux(&self, data: &ProblemData, weight: &[f64]) -> Vec<Vec<f64>> {
        let dim = self.grad.len();
        let mut out = vec![vec![0.0; self.mag.len()]; dim];
        let mut w = [0.0; 3];
        for x in 0..self.mag.len() {
            for j in 0..dim {
                w[j] = self.grad[j][x];
            }
            let aw = data.coefficients().apply(x, &w[..dim]);
            for j in 0..dim {
                out[j][x] = aw[j] + weight[x] * w[j];
            }
        }
        out
    }
}

/// `P_Ω(-div^σ flux) - f` on the Ω-nodes.
fn residual_from_flux(data: &ProblemData, flux: &[Vec<f64>]) -> Vec<f64> {
    scaled_residual(data, flux, 1.0)
}

fn scaled_residual(data: &ProblemData, flux: &[Vec<f64>], theta: f64) -> Vec<f64> {
    let div = data.ops().divergence_raw(flux);
    let f = data.f().values();
    data.mask().indices().iter().map(|&i| -div[i] - theta * f[i]).collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Strong-form penalized residual, zero outside Ω.
pub fn penalized_residual(u: &ScalarField, data: &ProblemData, eps: f64) -> Result<ScalarField> {
    if u.grid() != data.mask().grid() {
        return Err(Error::GridMismatch);
    }
    super::penalty_value(0.0, eps)?;
    let u = u.restrict(data.mask())?;
    let st = NodeState::new(data, u.values(), Some(eps));
    let r = residual_from_flux(data, &st.flux(data, &st.k));
    Ok(ScalarField::scatter(data.mask(), &r))
}

struct Newton<'a> {
    data: &'a ProblemData,
    stencil: Vec<Vec<f64>>,
    /// `GᵀAG` on Ω (dense path only).
    ka: Option<DMatrix<f64>>,
    ka_factor: Option<Factor>,
    a_blocks: Vec<f64>,
    symmetric: bool,
    full_torus: bool,
}

impl<'a> Newton<'a> {
    fn new(data: &'a ProblemData) -> Result<Self> {
        let mask = data.mask();
        let grid = mask.grid();
        let stencil = linalg::stencil(data.ops());
        let a_blocks = data.coefficients().all_blocks();
        let symmetric = data.coefficients().is_symmetric();
        let full_torus = mask.is_full_torus();
        let (ka, ka_factor) = if mask.count() <= DENSE_LIMIT {
            let mut ka = match data.coefficients().constant_value() {
                Some(a) => linalg::restricted_laplacian(data.ops(), mask) * a,
                None => {
                    let all: Vec<usize> = (0..grid.len()).collect();
                    let mut m = DMatrix::zeros(mask.count(), mask.count());
                    linalg::add_weighted_gram(&mut m, &stencil, grid, mask, &Weights { nodes: &all, blocks: &a_blocks });
                    m
                }
            };
            if symmetric {
                ka = (&ka + ka.transpose()) * 0.5;
            }
            let mut reg = ka.clone();
            if full_torus {
                linalg::add_null_modes(&mut reg, grid);
            }
            let factor = Factor::new(reg, symmetric)?;
            (Some(ka), Some(factor))
        } else {
            (None, None)
        };
        Ok(Self { data, stencil, ka, ka_factor, a_blocks, symmetric, full_torus })
    }

    fn evaluate_scaled(&self, u: &[f64], eps: f64, theta: f64) -> (NodeState, Vec<f64>) {
        let full = ScalarField::scatter(self.data.mask(), u);
        let st = NodeState::scaled(self.data, full.values(), Some(eps), theta);
        let r = scaled_residual(self.data, &st.flux(self.data, &st.k), theta);
        (st, r)
    }

    /// Generalized Jacobian blocks `kI + k' wwᵀ/|w|` (without `A`) at active nodes.
    fn penalty_blocks(&self, st: &NodeState) -> (Vec<usize>, Vec<f64>) {
        let dim = st.grad.len();
        let mut nodes = Vec::new();
        let mut blocks = Vec::new();
        for x in 0..st.mag.len() {
            if st.k[x] == 0.0 && st.slope[x] == 0.0 {
                continue;
            }
            nodes.push(x);
            let c = if st.mag[x] > 0.0 { st.slope[x] / st.mag[x] } else { 0.0 };
            for j in 0..dim {
                for l in 0..dim {
                    let diag = if j == l { st.k[x] } else { 0.0 };
                    blocks.push(diag + c * st.grad[j][x] * st.grad[l][x]);
                }
            }
        }
        (nodes, blocks)
    }

    fn newton_direction(&self, st: &NodeState, r: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let (nodes, blocks) = self.penalty_blocks(st);
        let mask = self.data.mask();
        let grid = mask.grid();
        if let Some(ka) = &self.ka {
            let mut j = ka.clone();
            linalg::add_weighted_gram(&mut j, &self.stencil, grid, mask, &Weights { nodes: &nodes, blocks: &blocks });
            if self.symmetric {
                j = (&j + j.transpose()) * 0.5;
            }
            if self.full_torus {
                linalg::add_null_modes(&mut j, grid);
            }
            return Factor::new(j, self.symmetric)?.solve(&rhs);
        }
        let dim = grid.dim();
        let mut full_blocks = self.a_blocks.clone();
        for (p, &x) in nodes.iter().enumerate() {
            for q in 0..dim * dim {
                full_blocks[x * dim * dim + q] += blocks[p * dim * dim + q];
            }
        }
        Ok(self.krylov(&full_blocks, &rhs))
    }

    /// Solves `Gᵀ W G x = b` on Ω matrix-free.
    fn krylov(&self, blocks: &[f64], b: &[f64]) -> Vec<f64> {
        let mask = self.data.mask();
        let grid = *mask.grid();
        let dim = grid.dim();
        let ops = self.data.ops();
        let diag = linalg::weighted_gram_diagonal(&self.stencil, &grid, mask, blocks);
        let null = if self.full_torus { linalg::torus_null_modes(&grid) } else { Vec::new() };
        let shift = diag.iter().sum::<f64>() / (diag.len() * diag.len()) as f64;
        let apply = |v: &[f64]| -> Vec<f64> {
            let full = ScalarField::scatter(mask, v);
            let w = ops.gradient_raw(full.values());
            let mut flux = vec![vec![0.0; grid.len()]; dim];
            for x in 0..grid.len() {
                let blk = &blocks[x * dim * dim..][..dim * dim];
                for j in 0..dim {
                    flux[j][x] = (0..dim).map(|l| blk[j * dim + l] * w[l][x]).sum();
                }
            }
            let div = ops.divergence_raw(&flux);
            let mut out: Vec<f64> = mask.indices().iter().map(|&i| -div[i]).collect();
            for mode in &null {
                let c = shift * mode.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                for (o, m) in out.iter_mut().zip(mode) {
                    *o += c * m;
                }
            }
            out
        };
        if self.symmetric {
            linalg::pcg(apply, &diag, b, KRYLOV_TOL, KRYLOV_MAX)
        } else {
            linalg::bicgstab(apply, &diag, b, KRYLOV_TOL, KRYLOV_MAX)
        }
    }

    /// `K_A^{-1} r`, the preconditioned fixed-point direction.
    fn picard_direction(&self, r: &[f64]) -> Result<Vec<f64>> {
        match &self.ka_factor {
            Some(f) => f.solve(r),
            None => Ok(self.krylov(&self.a_blocks, r)),
        }
    }

    /// Newton from `init`; if that stalls, a homotopy in the data scale:
    /// `(θf, θg)` with `θ` doubling from `1/sup g` to 1, each stage warm-started
    /// from the rescaled previous root.
    ///
    /// The penalty acts on the absolute excess `|D^σu| - g`, so large data make
    /// the fixed-ε problem as stiff as a unit-scale one at `ε/scale`.
    fn solve(&self, eps: f64, init: Vec<f64>, cfg: &PenaltyConfig) -> Result<(Vec<f64>, usize, f64)> {
        let direct = match self.newton(eps, 1.0, init.clone(), cfg) {
            Err(e @ Error::Divergence { .. }) => e,
            other => return other,
        };
        let theta0 = 1.0 / self.data.g().max();
        if !(theta0 < 0.5) {
            return Err(direct);
        }
        let mut theta = theta0;
        let mut u: Vec<f64> = init.iter().map(|v| v * theta).collect();
        let mut total = 0;
        loop {
            let (next, iters, res) = self.newton(eps, theta, u, cfg)?;
            total += iters;
            if theta == 1.0 {
                return Ok((next, total, res));
            }
            let up = (2.0 * theta).min(1.0);
            u = next.iter().map(|v| v * up / theta).collect();
            theta = up;
        }
    }

    fn newton(&self, eps: f64, theta: f64, init: Vec<f64>, cfg: &PenaltyConfig) -> Result<(Vec<f64>, usize, f64)> {
        let tol = cfg.newton_tol * (1.0 + theta * sup(self.data.f().values()));
        let mut u = init;
        let (mut st, mut r) = self.evaluate_scaled(&u, eps, theta);
        let mut res = sup(&r);
        let mut history = vec![res];
        let mut iters = 0;
        while !(res <= tol) {
            if iters >= cfg.newton_max || !res.is_finite() {
                return Err(Error::Divergence {
                    eps,
                    iterations: iters,
                    last_residual: res,
                    residual_history: history,
                    last_iterate: Box::new(ScalarField::scatter(self.data.mask(), &u)),
                });
            }
            iters += 1;
            let phi0 = sq(&r);
            let mut accepted = None;
            if let Ok(d) = self.newton_direction(&st, &r) {
                let mut t = cfg.damping;
                while t >= MIN_STEP {
                    let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                    let (st_t, r_t) = self.evaluate_scaled(&trial, eps, theta);
                    let phi = sq(&r_t);
                    if phi.is_finite() && phi <= (1.0 - 2.0 * ARMIJO_C * t) * phi0 {
                        accepted = Some((trial, st_t, r_t));
                        break;
                    }
                    t *= 0.5;
                }
            }
            if accepted.is_none() {
                let p = self.picard_direction(&r)?;
                let mut tau = 1.0;
                let mut fallback = None;
                while tau >= 1e-8 {
                    let trial: Vec<f64> = u.iter().zip(&p).map(|(a, b)| a - tau * b).collect();
                    let (st_t, r_t) = self.evaluate_scaled(&trial, eps, theta);
                    let phi = sq(&r_t);
                    if phi.is_finite() {
                        if phi < phi0 {
                            accepted = Some((trial, st_t, r_t));
                            break;
                        }
                        fallback = Some((trial, st_t, r_t));
                    }
                    tau *= 0.5;
                }
                if accepted.is_none() {
                    accepted = fallback;
                }
            }
            match accepted {
                Some((trial, st_t, r_t)) => {
                    u = trial;
                    st = st_t;
                    r = r_t;
                    res = sup(&r);
                }
                None => res = f64::NAN,
            }
            history.push(res);
        }
        Ok((u, iters, res))
    }
}

/// Solves the penalized problem at a fixed ε from `init`.
pub fn solve_penalized(data: &ProblemData, eps: f64, init: &ScalarField, cfg: &PenaltyConfig) -> Result<ScalarField> {
    cfg.validate()?;
    check_eps(eps)?;
    check_init(data, init)?;
    let newton = Newton::new(data)?;
    let (u, _, _) = newton.solve(eps, init.gather(data.mask()), cfg)?;
    Ok(ScalarField::scatter(data.mask(), &u))
}

fn check_eps(eps: f64) -> Result<()> {
    super::penalty_value(0.0, eps).map(|_| ())
}

fn check_init(data: &ProblemData, init: &ScalarField) -> Result<()> {
    if init.grid() != data.mask().grid() {
        return Err(Error::GridMismatch);
    }
    let outside = init.max_abs_outside(data.mask());
    if outside > 0.0 {
        return Err(Error::NonzeroOutsideDomain { max_outside: outside });
    }
    Ok(())
}

pub(crate) fn eps_record(data: &ProblemData, u: &ScalarField, eps: f64, iters: usize, residual: f64) -> EpsRecord {
    let st = NodeState::new(data, u.values(), Some(eps));
    let h = data.mask().grid().cell_volume();
    let g = data.g().values();
    let (mut n2, mut kl1, mut kw2, mut feas, mut comp, mut excess) = (0.0, 0.0, 0.0, 0.0f64, 0.0, 0.0);
    let (mut su, mut sv, mut sw) = (0usize, 0usize, 0usize);
    for x in 0..st.mag.len() {
        let s = st.mag[x] - g[x];
        n2 += st.mag[x] * st.mag[x];
        kl1 += st.k[x];
        kw2 += st.k[x] * st.mag[x] * st.mag[x];
        feas = feas.max(s);
        comp += st.k[x] * s;
        excess += s.max(0.0);
        if s <= eps.sqrt() {
            su += 1;
        } else if s <= 1.0 / eps {
            sv += 1;
        } else {
            sw += 1;
        }
    }
    EpsRecord {
        eps,
        newton_iters: iters,
        residual,
        feas_violation: feas.max(0.0),
        comp_gap: (h * comp).abs(),
        norm_dsu_l2: (h * n2).sqrt(),
        k_eps_l1: h * kl1,
        k_eps_dsu2_l1: h * kw2,
        energy: data.coefficients().is_symmetric().then(|| energy_unchecked(data, u)),
        set_u: h * su as f64,
        set_v: h * sv as f64,
        set_w: h * sw as f64,
        excess_l1: h * excess,
    }
}

pub fn solve_vi(data: &ProblemData, cfg: &PenaltyConfig) -> Result<VISolution> {
    solve_vi_from(data, cfg, &ScalarField::zeros(*data.mask().grid()))
}

/// ε-continuation from a given initial field.
pub fn solve_vi_from(data: &ProblemData, cfg: &PenaltyConfig, init: &ScalarField) -> Result<VISolution> {
    cfg.validate()?;
    check_init(data, init)?;
    let newton = Newton::new(data)?;
    let mask = data.mask();
    let mut u = init.gather(mask);
    let mut prev: Option<ScalarField> = None;
    let mut trace = Vec::new();
    let mut eps_final = cfg.eps0;
    for eps in cfg.schedule() {
        let (next, iters, res) = newton.solve(eps, u, cfg)?;
        u = next;
        let field = ScalarField::scatter(mask, &u);
        trace.push(eps_record(data, &field, eps, iters, res));
        eps_final = eps;
        if let Some(p) = &prev {
            let diff = field.sub(p)?;
            if data.ops().hsigma_norm_unchecked(diff.values()) < cfg.newton_tol {
                break;
            }
        }
        prev = Some(field);
    }
    let mut u = ScalarField::scatter(mask, &u);
    let st = NodeState::new(data, u.values(), Some(eps_final));
    let lambda = ScalarField::from_vec(*mask.grid(), st.k.clone());
    let multiplier_residual = sup(&residual_from_flux(data, &st.flux(data, &st.k)));
    if cfg.shrink {
        let eta = super::feasibility_violation(&u, data)?;
        u = u.scale(data.nu() / (data.nu() + eta));
    }
    let diagnostics = diagnostics_for(data, &u, &lambda, multiplier_residual)?;
    Ok(VISolution { u, lambda, eps_final, diagnostics, trace })
}

fn diagnostics_for(data: &ProblemData, u: &ScalarField, lambda: &ScalarField, multiplier_residual: f64) -> Result<Diagnostics> {
    let st = NodeState::new(data, u.values(), None);
    let g = data.g().values();
    let h = data.mask().grid().cell_volume();
    let feas = st.mag.iter().zip(g).fold(0.0f64, |m, (a, b)| m.max(a - b));
    let comp: f64 = st.mag.iter().zip(g).zip(lambda.values()).map(|((a, b), l)| l * (a - b)).sum();
    Ok(Diagnostics {
        feas_violation: feas.max(0.0),
        comp_gap: (h * comp).abs(),
        multiplier_residual,
        vi_residual: vi_residual_unchecked(u, data, VI_RESIDUAL_TRIALS, 0)?,
        energy: data.coefficients().is_symmetric().then(|| energy_unchecked(data, u)),
        zero_mode_fraction: data.ops().zero_mode_fraction(u),
    })
}
