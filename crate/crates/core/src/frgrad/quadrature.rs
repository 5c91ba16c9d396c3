//! Dense singular-integral evaluation of `D^σ` on small grids.
//!
//! `D^σ u(x) = c ∫ (u(x) - u(y)) (x - y) / |x - y|^{N+σ+1} dy` with
//! `c = (N + σ - 1) γ_{N,1-σ}`. The kernel depends on `x - y` only, so it is
//! periodized once per wrapped offset (image sum paired `m`/`-m` so the odd
//! tails cancel) and then applied as a dense sum. The singular self cell is
//! skipped and replaced by the leading local term `c ∂_j u(x) h^{1-σ} I_N`,
//! where `I_N = ∫_{[-1/2,1/2]^N} r_1² |r|^{-(N+σ+1)} dr`.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};

use super::{riesz_constant, FracOrder};

/// Largest grid accepted by [`quadrature_frac_gradient`].
pub const QUADRATURE_MAX_NODES: usize = 4096;

fn image_range(dim: usize) -> i64 {
    match dim {
        1 => 4000,
        2 => 48,
        _ => 8,
    }
}

pub fn quadrature_frac_gradient(u: &ScalarField, sigma: FracOrder) -> Result<VectorField> {
    let grid = *u.grid();
    if grid.len() > QUADRATURE_MAX_NODES {
        return Err(Error::GridTooLarge { nodes: grid.len(), limit: QUADRATURE_MAX_NODES });
    }
    let s = sigma.value();
    if s >= 1.0 {
        return Err(Error::InvalidParameter("quadrature form needs sigma < 1".into()));
    }
    let dim = grid.dim();
    let n = grid.resolution();
    let h = grid.spacing();
    let period = 2.0 * grid.extent();
    let c = (dim as f64 + s - 1.0) * riesz_constant(dim, 1.0 - s)?;
    let expo = dim as f64 + s + 1.0;

    // periodized kernel table, one vector per offset
    let m = image_range(dim);
    let mut images: Vec<[i64; 3]> = Vec::new();
    let span = (2 * m + 1) as usize;
    for code in 0..span.pow(dim as u32) {
        let mut img = [0i64; 3];
        let mut rest = code;
        for slot in img.iter_mut().take(dim) {
            *slot = (rest % span) as i64 - m;
            rest /= span;
        }
        images.push(img);
    }
    // An offset of exactly half a period has two nearest representatives; the
    // truncated image sum is averaged over both so it stays odd.
    let mut kernel = vec![[0.0f64; 3]; grid.len()];
    for (d, entry) in kernel.iter_mut().enumerate().skip(1) {
        let idx = grid.unravel(d);
        let half: Vec<usize> = (0..dim).filter(|&a| idx[a] == n / 2).collect();
        let variants = 1usize << half.len();
        for v in 0..variants {
            let base: Vec<f64> = (0..dim)
                .map(|a| {
                    let k = idx[a] as f64;
                    let flip = half.iter().position(|&b| b == a).is_some_and(|p| v >> p & 1 == 1);
                    if idx[a] < n / 2 || (idx[a] == n / 2 && !flip) {
                        k * h
                    } else {
                        (k - n as f64) * h
                    }
                })
                .collect();
            for img in &images {
                let mut r = [0.0; 3];
                let mut r2 = 0.0;
                for a in 0..dim {
                    r[a] = base[a] + img[a] as f64 * period;
                    r2 += r[a] * r[a];
                }
                let w = r2.powf(-expo / 2.0) / variants as f64;
                for a in 0..dim {
                    entry[a] += r[a] * w;
                }
            }
        }
    }

    let vals = u.values();
    let cell = grid.cell_volume();
    let local = c * h.powf(1.0 - s) * self_cell_integral(dim, s);
    let mut comps = vec![vec![0.0; grid.len()]; dim];
    for x in 0..grid.len() {
        let xi = grid.unravel(x);
        let mut acc = [0.0; 3];
        for y in 0..grid.len() {
            if y == x {
                continue;
            }
            let d = grid.wrap_difference(x, y);
            let du = vals[x] - vals[y];
            for a in 0..dim {
                acc[a] += du * kernel[d][a];
            }
        }
        for a in 0..dim {
            let mut fwd = xi;
            let mut bwd = xi;
            fwd[a] = (xi[a] + 1) % n;
            bwd[a] = (xi[a] + n - 1) % n;
            let grad = (vals[grid.ravel(&fwd[..dim])] - vals[grid.ravel(&bwd[..dim])]) / (2.0 * h);
            comps[a][x] = c * cell * acc[a] + local * grad;
        }
    }
    VectorField::new(comps.into_iter().map(|v| ScalarField::from_vec(grid, v)).collect())
}

/// `∫_{[-1/2,1/2]^N} r_1² |r|^{-(N+σ+1)} dr`, by splitting the cube into
/// pyramids over its faces; the radial factor integrates to `1/(1-σ)`.
fn self_cell_integral(dim: usize, s: f64) -> f64 {
    let expo = dim as f64 + s + 1.0;
    let face = |s_pts: &dyn Fn(&mut dyn FnMut(&[f64], f64))| -> f64 {
        let mut total = 0.0;
        s_pts(&mut |p: &[f64], w: f64| {
            let r2: f64 = p.iter().map(|v| v * v).sum();
            total += w * p[0] * p[0] * r2.powf(-expo / 2.0) * 0.5;
        });
        total
    };
    let q = 400usize;
    let step = 1.0 / q as f64;
    let mid = |i: usize| -0.5 + (i as f64 + 0.5) * step;
    let mut sum = 0.0;
    for axis in 0..dim {
        for sign in [-0.5, 0.5] {
            sum += face(&|emit: &mut dyn FnMut(&[f64], f64)| match dim {
                1 => emit(&[sign], 1.0),
                2 => {
                    for i in 0..q {
                        let mut p = [0.0; 2];
                        p[axis] = sign;
                        p[1 - axis] = mid(i);
                        emit(&p, step);
                    }
                }
                _ => {
                    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
                    for i in 0..q {
                        for j in 0..q {
                            let mut p = [0.0; 3];
                            p[axis] = sign;
                            p[others[0]] = mid(i);
                            p[others[1]] = mid(j);
                            emit(&p, step * step);
                        }
                    }
                }
            });
        }
    }
    sum / (1.0 - s)
}
