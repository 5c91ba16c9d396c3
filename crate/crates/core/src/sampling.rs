//! Random smooth test fields and the `ν/(ν+η)` shrinking into `K`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{DomainMask, ScalarField};
use crate::vi::{feasibility_violation, ProblemData};

/// Bump times a random trigonometric polynomial with up to `modes` frequencies
/// per axis, zero outside Ω.
///
/// For box masks the bump `Π (1 - (x_d/ω)²)²` vanishes smoothly at `∂Ω`; other
/// masks use the indicator.
pub fn random_smooth_field(mask: &DomainMask, rng: &mut impl Rng, modes: usize) -> ScalarField {
    let grid = *mask.grid();
    let dim = grid.dim();
    let width = mask.box_halfwidth().unwrap_or(grid.extent());
    let terms: Vec<([f64; 3], f64, f64)> = (0..modes.max(1))
        .map(|_| {
            let mut k = [0.0; 3];
            for kd in k.iter_mut().take(dim) {
                *kd = rng.random_range(0..=modes) as f64 * std::f64::consts::PI / (2.0 * width);
            }
            let amp: f64 = rng.sample(StandardNormal);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (k, amp, phase)
        })
        .collect();
    let boxed = mask.box_halfwidth();
    let values = (0..grid.len())
        .map(|i| {
            if !mask.contains(i) {
                return 0.0;
            }
            let x = grid.node(i);
            let bump = match boxed {
                Some(w) => (0..dim).map(|d| (1.0 - (x[d] / w).powi(2)).max(0.0).powi(2)).product(),
                None => 1.0,
            };
            let trig: f64 = terms.iter().map(|(k, a, p)| a * ((0..dim).map(|d| k[d] * x[d]).sum::<f64>() + p).cos()).sum();
            bump * trig
        })
        .collect();
    ScalarField::new(grid, values).expect("finite by construction")
}

/// Relative margin absorbing FFT rounding when the scaled field touches `g = ν`.
const SHRINK_MARGIN: f64 = 1e-12;

/// `ν/(ν+η) v` with `η` the violation of `v`; feasible because `g ≥ ν`.
pub fn shrink_into(v: &ScalarField, data: &ProblemData) -> Result<ScalarField> {
    let eta = feasibility_violation(v, data)?;
    if !eta.is_finite() {
        return Err(Error::InfeasibleSample(format!("violation {eta}")));
    }
    if eta == 0.0 {
        return Ok(v.clone());
    }
    let nu = data.nu();
    let out = v.scale(nu / (nu + eta) * (1.0 - SHRINK_MARGIN));
    let left = feasibility_violation(&out, data)?;
    if left > 0.0 {
        return Err(Error::InfeasibleSample(format!("violation {left} after shrinking")));
    }
    Ok(out)
}

/// A random feasible field, scaled so that `|D^σv|` reaches a random fraction of `g`.
pub fn random_feasible(data: &ProblemData, rng: &mut impl Rng) -> Result<ScalarField> {
    let w = random_smooth_field(data.mask(), rng, 4);
    let peak = data.ops().gradient(&w)?.magnitude().max();
    if peak == 0.0 {
        return Ok(w);
    }
    let target = data.nu() * rng.random_range(0.2..1.5);
    shrink_into(&w.scale(target / peak), data)
}
