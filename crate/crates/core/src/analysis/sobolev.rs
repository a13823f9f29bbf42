//! Discrete `W^{m,p}` norms on uniform grids.

use crate::error::{Error, Result};
use crate::pde::SpaceGrid;

/// Multi-indices `γ` with `|γ| <= m` in `d <= 2` variables.
fn multi_indices(d: usize, m: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    for order in 0..=m {
        if d == 1 {
            out.push([order, 0]);
        } else {
            for i in (0..=order).rev() {
                out.push([i, order - i]);
            }
        }
    }
    out
}

/// Fourth-order first derivative along one line of values; one-sided
/// stencils of the same order in the two boundary layers.
fn d1(v: &[f64], k: usize, h: f64) -> f64 {
    let n = v.len();
    let c = 12.0 * h;
    match k {
        0 => (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / c,
        1 => (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / c,
        _ if k + 1 == n => (25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4] + 3.0 * v[n - 5]) / c,
        _ if k + 2 == n => (3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4] - v[n - 5]) / c,
        _ => (-v[k + 2] + 8.0 * v[k + 1] - 8.0 * v[k - 1] + v[k - 2]) / c,
    }
}

/// Fourth-order second derivative, same boundary treatment as [`d1`].
fn d2(v: &[f64], k: usize, h: f64) -> f64 {
    let n = v.len();
    let c = 12.0 * h * h;
    let one_sided = |w: &dyn Fn(usize) -> f64, j: usize| -> f64 {
        if j == 0 {
            (45.0 * w(0) - 154.0 * w(1) + 214.0 * w(2) - 156.0 * w(3) + 61.0 * w(4) - 10.0 * w(5)) / c
        } else {
            (10.0 * w(0) - 15.0 * w(1) - 4.0 * w(2) + 14.0 * w(3) - 6.0 * w(4) + w(5)) / c
        }
    };
    match k {
        0 | 1 => one_sided(&|i| v[i], k),
        _ if k + 1 == n => one_sided(&|i| v[n - 1 - i], 0),
        _ if k + 2 == n => one_sided(&|i| v[n - 1 - i], 1),
        _ => (-v[k + 2] + 16.0 * v[k + 1] - 30.0 * v[k] + 16.0 * v[k - 1] - v[k - 2]) / c,
    }
}

/// All derivatives `D^γ u`, `|γ| <= m`, at every node, one vector per `γ`.
fn derivatives(grid: &SpaceGrid, u: &[f64], gammas: &[[usize; 2]]) -> Vec<Vec<f64>> {
    let [nx, ny] = grid.n;
    let along_x = |v: &[f64], f: fn(&[f64], usize, f64) -> f64| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for j in 0..ny {
            let row = &v[j * nx..(j + 1) * nx];
            for i in 0..nx {
                out[j * nx + i] = f(row, i, grid.h[0]);
            }
        }
        out
    };
    let along_y = |v: &[f64], f: fn(&[f64], usize, f64) -> f64| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let mut col = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = v[j * nx + i];
            }
            for j in 0..ny {
                out[j * nx + i] = f(&col, j, grid.h[1]);
            }
        }
        out
    };
    gammas
        .iter()
        .map(|g| match *g {
            [0, 0] => u.to_vec(),
            [1, 0] => along_x(u, d1),
            [0, 1] => along_y(u, d1),
            [2, 0] => along_x(u, d2),
            [0, 2] => along_y(u, d2),
            [1, 1] => along_y(&along_x(u, d1), d1),
            _ => unreachable!("order above 2"),
        })
        .collect()
}

/// `‖u‖_{m,p}` with trapezoid quadrature and fourth-order finite
/// differences (central inside, one-sided in the two boundary layers). For
/// `p = ∞` it is the largest nodal `|D^γ u|`; otherwise
/// `(Σ_{|γ|<=m} ∫|D^γ u|^p)^{1/p}`.
pub fn sobolev_norm(grid: &SpaceGrid, u: &[f64], m: usize, p: f64) -> Result<f64> {
    if m > 2 {
        return Err(Error::Capability(format!(
            "discrete Sobolev norms support m <= 2, got {m}"
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("Sobolev exponent must be >= 1, got {p}")));
    }
    if u.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "{} values for a grid of {} nodes",
            u.len(),
            grid.len()
        )));
    }
    let need = 6;
    if (0..grid.dim).any(|a| grid.n[a] < need) {
        return Err(Error::Capability(format!(
            "derivatives need at least {need} nodes per axis"
        )));
    }
    let ders = derivatives(grid, u, &multi_indices(grid.dim, m));
    if p.is_infinite() {
        return Ok(ders.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())));
    }
    let mut s = 0.0;
    for der in &ders {
        for (idx, v) in der.iter().enumerate() {
            s += grid.weight(idx) * v.abs().powf(p);
        }
    }
    Ok(s.powf(1.0 / p))
}
