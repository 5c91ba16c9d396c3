//! Reference solvers used to validate the penalty method: ADMM on the
//! equivalent constrained energy minimization (symmetric `A` only) and direct
//! solves of the unconstrained linear problem.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::linalg::{self, Factor, Weights};
use crate::sampling;
use crate::vi::{energy, NodeState, ProblemData, Threshold};

/// Largest grid accepted by [`oracle_solve_vi`].
pub const ORACLE_MAX_NODES: usize = 16384;
/// Largest Ω accepted by the dense branch of [`oracle_solve_pde`].
pub const PDE_DENSE_MAX_NODES: usize = 4096;

/// Nodewise projection onto `{|w| ≤ g}`.
pub fn project_ball(w: &VectorField, g: &Threshold) -> Result<VectorField> {
    if w.grid() != g.field().grid() {
        return Err(Error::GridMismatch);
    }
    let mut comps: Vec<Vec<f64>> = w.components().iter().map(|c| c.values().to_vec()).collect();
    project_in_place(&mut comps, g.field().values());
    VectorField::new(comps.into_iter().map(|c| ScalarField::new(*w.grid(), c)).collect::<Result<_>>()?)
}

fn project_in_place(comps: &mut [Vec<f64>], g: &[f64]) {
    for (x, &gx) in g.iter().enumerate() {
        let mag = comps.iter().map(|c| c[x] * c[x]).sum::<f64>().sqrt();
        if mag > gx {
            let s = gx / mag;
            for c in comps.iter_mut() {
                c[x] *= s;
            }
        }
    }
}

/// ADMM iterate: `u`, the split variable `w ≈ D^σu`, scaled dual and `ρ`.
#[derive(Debug, Clone)]
pub struct SplitState {
    pub u: ScalarField,
    pub w: VectorField,
    pub dual: VectorField,
    pub rho: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

fn norm2(v: &[Vec<f64>]) -> f64 {
    v.iter().flat_map(|c| c.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes `½⟨A D^σu, D^σu⟩ - ⟨f, u⟩` over `|D^σu| ≤ g` by ADMM with the
/// splitting `w = D^σu`, residual balancing of `ρ`, and relative stopping
/// criteria `tol`.
pub fn oracle_solve_vi(data: &ProblemData, rho: f64, tol: f64, max_iter: usize) -> Result<SplitState> {
    let mask = data.mask();
    let grid = *mask.grid();
    if grid.len() > ORACLE_MAX_NODES {
        return Err(Error::GridTooLarge { nodes: grid.len(), limit: ORACLE_MAX_NODES });
    }
    if !data.coefficients().is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    if !(rho > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter("rho and tol must be positive".into()));
    }
    let ops = data.ops();
    let dim = grid.dim();
    let stencil = linalg::stencil(ops);
    let lap = linalg::restricted_laplacian(ops, mask);
    let ka = match data.coefficients().constant_value() {
        Some(a) => &lap * a,
        None => {
            let all: Vec<usize> = (0..grid.len()).collect();
            let blocks = data.coefficients().all_blocks();
            let mut m = DMatrix::zeros(mask.count(), mask.count());
            linalg::add_weighted_gram(&mut m, &stencil, &grid, mask, &Weights { nodes: &all, blocks: &blocks });
            (&m + m.transpose()) * 0.5
        }
    };
    let factor = |rho: f64| -> Result<Factor> {
        let mut m = &ka + &lap * rho;
        if mask.is_full_torus() {
            linalg::add_null_modes(&mut m, &grid);
        }
        Factor::new(m, true)
    };
    let f_in = data.f().gather(mask);
    let f_norm = f_in.iter().map(|v| v * v).sum::<f64>().sqrt();
    let g = data.g().values();
    let grad = |u: &[f64]| ops.gradient_raw(ScalarField::scatter(mask, u).values());
    let grad_t = |w: &[Vec<f64>]| -> Vec<f64> {
        let d = ops.divergence_raw(w);
        mask.indices().iter().map(|&i| -d[i]).collect()
    };

    let mut rho = rho;
    let mut fac = factor(rho)?;
    let mut u = vec![0.0; mask.count()];
    let mut z = vec![vec![0.0; grid.len()]; dim];
    let mut y = vec![vec![0.0; grid.len()]; dim];
    let (mut rp, mut rd) = (f64::INFINITY, f64::INFINITY);
    for it in 1..=max_iter {
        let target: Vec<Vec<f64>> = z.iter().zip(&y).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()).collect();
        let gt = grad_t(&target);
        let rhs: Vec<f64> = f_in.iter().zip(&gt).map(|(a, b)| a + rho * b).collect();
        u = fac.solve(&rhs)?;
        let du = grad(&u);
        let z_old = z.clone();
        z = du.iter().zip(&y).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
        project_in_place(&mut z, g);
        let mut primal = vec![vec![0.0; grid.len()]; dim];
        for j in 0..dim {
            for x in 0..grid.len() {
                primal[j][x] = du[j][x] - z[j][x];
                y[j][x] += primal[j][x];
            }
        }
        let dz: Vec<Vec<f64>> = z.iter().zip(&z_old).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()).collect();
        rp = norm2(&primal);
        rd = rho * grad_t(&dz).iter().map(|v| v * v).sum::<f64>().sqrt();
        let eps_p = tol * norm2(&du).max(norm2(&z)).max(f64::MIN_POSITIVE);
        let eps_d = tol * (rho * grad_t(&y).iter().map(|v| v * v).sum::<f64>().sqrt()).max(f_norm).max(f64::MIN_POSITIVE);
        if rp <= eps_p && rd <= eps_d {
            return Ok(finish(data, u, z, y, rho, it, rp, rd));
        }
        if it % 10 == 0 {
            let scale = if rp > 10.0 * rd {
                2.0
            } else if rd > 10.0 * rp {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                for c in y.iter_mut() {
                    for v in c.iter_mut() {
                        *v /= scale;
                    }
                }
                fac = factor(rho)?;
            }
        }
    }
    let _ = (u, z);
    Err(Error::OracleMaxIter { iterations: max_iter, primal: rp, dual: rd })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    data: &ProblemData,
    u: Vec<f64>,
    z: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: f64,
    it: usize,
    rp: f64,
    rd: f64,
) -> SplitState {
    let grid = *data.mask().grid();
    let to_vec = |c: Vec<Vec<f64>>| {
        VectorField::new(c.into_iter().map(|v| ScalarField::from_vec(grid, v)).collect()).expect("shared grid")
    };
    SplitState {
        u: ScalarField::scatter(data.mask(), &u),
        w: to_vec(z),
        dual: to_vec(y),
        rho,
        iterations: it,
        primal_residual: rp,
        dual_residual: rd,
    }
}

/// Sampled minimizer check: `J(u) - J(v)` over feasible `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub energy: f64,
    pub samples: usize,
    /// `max_v (J(u) - J(v))`; `≤ 0` for the exact minimizer.
    pub worst_excess: f64,
    pub passed: bool,
}

/// Compares `J(u)` with `samples` random feasible competitors, half of them
/// shrunk perturbations of `u`; passes when `J(u) ≤ J(v) + tol·(|J(u)| + 1)`.
pub fn certify(data: &ProblemData, u: &ScalarField, samples: usize, tol: f64, seed: u64) -> Result<Certificate> {
    let ju = energy(u, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let peak = NodeState::new(data, u.values(), None).mag.iter().fold(0.0f64, |m, &v| m.max(v));
    for i in 0..samples {
        let v = if i % 2 == 0 {
            sampling::random_feasible(data, &mut rng)?
        } else {
            let w = sampling::random_smooth_field(data.mask(), &mut rng, 4);
            let wpeak = NodeState::new(data, w.values(), None).mag.iter().fold(0.0f64, |m, &v| m.max(v));
            let t = 10f64.powi(-(((i / 2) % 6) as i32)) * peak.max(data.nu()) / wpeak.max(f64::MIN_POSITIVE);
            sampling::shrink_into(&u.axpy(t, &w)?, data)?
        };
        worst = worst.max(ju - energy(&v, data)?);
    }
    Ok(Certificate { energy: ju, samples, worst_excess: worst, passed: worst <= tol * (ju.abs() + 1.0) })
}

/// Solves the unconstrained problem `-div^σ(A D^σu) = f` on Ω and checks a
/// posteriori that `|D^σu| < g` everywhere.
///
/// `A = aI` on the full torus is inverted spectrally (null modes set to
/// zero); everything else goes through a dense factorization.
pub fn oracle_solve_pde(data: &ProblemData) -> Result<ScalarField> {
    let mask = data.mask();
    let grid = *mask.grid();
    let ops = data.ops();
    let u = match (mask.is_full_torus(), data.coefficients().constant_value()) {
        (true, Some(a)) => {
            let symbol: Vec<f64> = ops.laplacian_symbol().iter().map(|&m| if m > 0.0 { 1.0 / (a * m) } else { 0.0 }).collect();
            ScalarField::from_vec(grid, ops.apply_multiplier_raw(data.f().values(), &symbol))
        }
        _ => {
            if mask.count() > PDE_DENSE_MAX_NODES {
                return Err(Error::GridTooLarge { nodes: mask.count(), limit: PDE_DENSE_MAX_NODES });
            }
            let stencil = linalg::stencil(ops);
            let mut k = match data.coefficients().constant_value() {
                Some(a) => linalg::restricted_laplacian(ops, mask) * a,
                None => {
                    let all: Vec<usize> = (0..grid.len()).collect();
                    let blocks = data.coefficients().all_blocks();
                    let mut m = DMatrix::zeros(mask.count(), mask.count());
                    linalg::add_weighted_gram(&mut m, &stencil, &grid, mask, &Weights { nodes: &all, blocks: &blocks });
                    m
                }
            };
            let symmetric = data.coefficients().is_symmetric();
            if symmetric {
                k = (&k + k.transpose()) * 0.5;
            }
            if mask.is_full_torus() {
                linalg::add_null_modes(&mut k, &grid);
            }
            let sol = Factor::new(k, symmetric)?.solve(&data.f().gather(mask))?;
            ScalarField::scatter(mask, &sol)
        }
    };
    let st = NodeState::new(data, u.values(), Some(0.5));
    let residual = crate::vi::penalized_residual(&u, data, 0.5)?;
    let fmax = data.f().values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rmax = residual.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let violation = st.mag.iter().zip(data.g().values()).fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
    if violation >= 0.0 {
        return Err(Error::ConstraintActive { violation });
    }
    if rmax > 1e-10 * fmax.max(f64::MIN_POSITIVE) {
        return Err(Error::LinearSolve(format!("residual {rmax:e} exceeds 1e-10·‖f‖ (source not in the operator range?)")));
    }
    Ok(u)
}
