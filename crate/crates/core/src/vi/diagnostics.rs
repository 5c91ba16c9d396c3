use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::solver::NodeState;
use super::ProblemData;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::sampling;

fn check_grid(u: &ScalarField, data: &ProblemData) -> Result<()> {
    if u.grid() != data.mask().grid() {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// `max_x (|D^σu(x)| - g(x))⁺` over the whole grid.
pub fn feasibility_violation(u: &ScalarField, data: &ProblemData) -> Result<f64> {
    check_grid(u, data)?;
    let st = NodeState::new(data, u.values(), None);
    Ok(st.mag.iter().zip(data.g().values()).fold(0.0f64, |m, (a, b)| m.max(a - b)))
}

/// `λ = k_ε(|D^σu_ε| - g)` nodewise.
pub fn extract_multiplier(u_eps: &ScalarField, data: &ProblemData, eps: f64) -> Result<ScalarField> {
    check_grid(u_eps, data)?;
    super::penalty_value(0.0, eps)?;
    let st = NodeState::new(data, u_eps.values(), Some(eps));
    Ok(ScalarField::from_vec(*u_eps.grid(), st.k))
}

/// `J(u) = ½⟨A D^σu, D^σu⟩ - ⟨f, u⟩`; requires symmetric `A`.
pub fn energy(u: &ScalarField, data: &ProblemData) -> Result<f64> {
    check_grid(u, data)?;
    if !data.coefficients().is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    Ok(energy_unchecked(data, u))
}

pub(crate) fn energy_unchecked(data: &ProblemData, u: &ScalarField) -> f64 {
    let st = NodeState::new(data, u.values(), None);
    let flux = st.flux(data, &vec![0.0; st.mag.len()]);
    let h = data.mask().grid().cell_volume();
    let quad: f64 = flux.iter().zip(&st.grad).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum();
    let lin: f64 = data.f().values().iter().zip(u.values()).map(|(a, b)| a * b).sum();
    h * (0.5 * quad - lin)
}

/// Smallest sampled value of `⟨A D^σu, D^σ(v-u)⟩ - ⟨f, v-u⟩` over feasible `v`.
///
/// Candidates are `v = u` (value 0), `v = 0`, shrunk rays `θu`, and shrunk
/// perturbations `u + t w` for random smooth `w` supported in Ω.
pub fn vi_residual(u: &ScalarField, data: &ProblemData, trials: usize, seed: u64) -> Result<f64> {
    check_grid(u, data)?;
    vi_residual_unchecked(u, data, trials, seed)
}

pub(crate) fn vi_residual_unchecked(u: &ScalarField, data: &ProblemData, trials: usize, seed: u64) -> Result<f64> {
    let st = NodeState::new(data, u.values(), None);
    let flux = st.flux(data, &vec![0.0; st.mag.len()]);
    let h = data.mask().grid().cell_volume();
    let f = data.f().values();
    let pair = |v: &ScalarField| -> f64 {
        let dv = data.ops().gradient_raw(v.values());
        let a: f64 = flux.iter().zip(&dv).map(|(p, q)| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>()).sum();
        let b: f64 = f.iter().zip(v.values()).map(|(x, y)| x * y).sum();
        h * (a - b)
    };
    let base = pair(u);
    let mut best = 0.0f64;
    let mut consider = |v: &ScalarField| best = best.min(pair(v) - base);
    consider(&ScalarField::zeros(*u.grid()));
    for theta in [0.5, 0.9, 0.99, 1.01, 1.1] {
        consider(&sampling::shrink_into(&u.scale(theta), data)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gscale = data.nu();
    for _ in 0..trials {
        let w = sampling::random_smooth_field(data.mask(), &mut rng, 4);
        let wmax = NodeState::new(data, w.values(), None).mag.iter().fold(0.0f64, |m, &v| m.max(v));
        if wmax == 0.0 {
            continue;
        }
        let t = 10f64.powf(rng.random_range(-4.0..0.0)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let v = u.axpy(t * gscale / wmax, &w)?;
        consider(&sampling::shrink_into(&v, data)?);
    }
    if !best.is_finite() {
        return Err(Error::InfeasibleSample("non-finite pairing".into()));
    }
    Ok(best)
}
