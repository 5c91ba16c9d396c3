use crate::error::{Error, Result};

/// Smallest admissible ε: `e^{1/ε²}` must stay below the `f64` overflow threshold.
pub const EPS_FLOOR: f64 = 0.038;

/// `k_ε(s)`: 0 for `s < 0`, `e^{s/ε} - 1` on `[0, 1/ε]`, `e^{1/ε²} - 1` beyond.
pub fn penalty_value(s: f64, eps: f64) -> Result<f64> {
    if !(EPS_FLOOR..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps {eps} not in [{EPS_FLOOR}, 1)")));
    }
    Ok(penalty_with_slope(s, eps).0)
}

/// `(k_ε(s), k_ε'(s⁺))`, the right-branch derivative at the kinks.
#[inline]
pub(crate) fn penalty_with_slope(s: f64, eps: f64) -> (f64, f64) {
    if s < 0.0 {
        (0.0, 0.0)
    } else if s < 1.0 / eps {
        let e = (s / eps).exp();
        (e - 1.0, e / eps)
    } else {
        ((1.0 / (eps * eps)).exp_m1(), 0.0)
    }
}
