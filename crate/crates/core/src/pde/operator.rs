//! One implicit Euler step: upwind drift, central diffusion, a positive
//! 9-point cross stencil in 2-d, and the M-matrix check.

use super::grid::SpaceGrid;
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

/// BiCGSTAB relative residual target.
pub const LINEAR_TOL: f64 = 1e-10;
const LINEAR_MAX_ITERS: usize = 2_000;

/// Rows of `I - Δt L` over the interior nodes. Entries pointing at boundary
/// nodes are kept and moved to the right-hand side at solve time.
#[derive(Debug, Clone)]
pub(crate) struct ImplicitStep {
    /// Grid index of each unknown.
    pub interior: Vec<usize>,
    /// Unknown index of each grid node, `usize::MAX` on the boundary.
    pub slot: Vec<usize>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub diag: Vec<f64>,
}

/// Coefficients the stencil needs at one node.
struct NodeCoefficients {
    a: [[f64; 2]; 2],
    drift: [f64; 2],
    c: f64,
}

fn coefficients(spec: &ProblemSpec, t: f64, x: &[f64], epsilon: f64, buf: &mut Vec<f64>) -> NodeCoefficients {
    let d = spec.dim;
    let mut out = NodeCoefficients {
        a: [[0.0; 2]; 2],
        drift: [0.0; 2],
        c: spec.c.eval_scalar(t, x, 0.0),
    };
    buf.resize(d * d, 0.0);
    spec.a.eval_into(t, x, 0.0, buf);
    for i in 0..d {
        for j in 0..d {
            out.a[i][j] = buf[i * d + j];
        }
        out.a[i][i] += epsilon;
    }
    buf.resize(d, 0.0);
    spec.b.eval_into(t, x, 0.0, &mut buf[..d]);
    let b: Vec<f64> = buf[..d].to_vec();
    spec.sigma_nu(t, x, &mut buf[..d]);
    for i in 0..d {
        out.drift[i] = b[i] + buf[i];
    }
    out
}

impl ImplicitStep {
    pub fn assemble(spec: &ProblemSpec, grid: &SpaceGrid, t: f64, dt: f64, epsilon: f64) -> Result<Self> {
        let mut slot = vec![usize::MAX; grid.len()];
        let interior: Vec<usize> = (0..grid.len()).filter(|&i| !grid.on_boundary(i)).collect();
        for (s, &idx) in interior.iter().enumerate() {
            slot[idx] = s;
        }
        let mut row_ptr = Vec::with_capacity(interior.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::with_capacity(interior.len());
        let mut buf = Vec::new();
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(9);
        for &idx in &interior {
            let x = grid.point(idx);
            let k = coefficients(spec, t, &x, epsilon, &mut buf);
            let (i, j) = grid.coords(idx);
            entries.clear();
            let mut centre = k.c;
            for axis in 0..grid.dim {
                let h = grid.h[axis];
                let aa = k.a[axis][axis];
                let b = k.drift[axis];
                let (bp, bm) = (b.max(0.0), (-b).max(0.0));
                let mut lo = aa / (h * h) + bm / h;
                let mut hi = aa / (h * h) + bp / h;
                centre -= 2.0 * aa / (h * h) + (bp + bm) / h;
                if grid.dim == 2 {
                    // Cross-term correction on the axis neighbours.
                    let a12 = k.a[0][1];
                    let corr = a12.abs() / (grid.h[0] * grid.h[1]);
                    lo -= corr;
                    hi -= corr;
                    centre += corr;
                }
                let (lo_idx, hi_idx) = if axis == 0 {
                    (grid.index(i - 1, j), grid.index(i + 1, j))
                } else {
                    (grid.index(i, j - 1), grid.index(i, j + 1))
                };
                entries.push((lo_idx, lo));
                entries.push((hi_idx, hi));
            }
            if grid.dim == 2 {
                let a12 = k.a[0][1];
                let w = a12.abs() / (grid.h[0] * grid.h[1]);
                if a12 >= 0.0 {
                    entries.push((grid.index(i + 1, j + 1), w));
                    entries.push((grid.index(i - 1, j - 1), w));
                } else {
                    entries.push((grid.index(i + 1, j - 1), w));
                    entries.push((grid.index(i - 1, j + 1), w));
                }
            }
            for &(_, v) in &entries {
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Stability {
                        node: if grid.dim == 1 { vec![i] } else { vec![i, j] },
                        t,
                        detail: format!(
                            "negative off-diagonal weight {v:e}; refine the grid or add viscosity (a = {:?})",
                            k.a
                        ),
                    });
                }
            }
            let dd = 1.0 - dt * centre;
            if !(1.0 - dt * k.c > 0.0) {
                return Err(Error::Stability {
                    node: if grid.dim == 1 { vec![i] } else { vec![i, j] },
                    t,
                    detail: format!("1 - dt c = {} is not positive", 1.0 - dt * k.c),
                });
            }
            diag.push(dd);
            for &(col, v) in &entries {
                if v != 0.0 {
                    cols.push(col);
                    vals.push(-dt * v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            interior,
            slot,
            row_ptr,
            cols,
            vals,
            diag,
        })
    }

    /// Solves for the interior of `u` given its boundary values and the
    /// full-grid right-hand side `rhs`. Boundary entries of `u` are read,
    /// interior entries are written.
    pub fn solve(&self, grid: &SpaceGrid, rhs: &[f64], u: &mut [f64]) -> Result<()> {
        let n = self.interior.len();
        let mut b = vec![0.0; n];
        for r in 0..n {
            let mut v = rhs[self.interior[r]];
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.slot[self.cols[e]] == usize::MAX {
                    v -= self.vals[e] * u[self.cols[e]];
                }
            }
            b[r] = v;
        }
        let x = if grid.dim == 1 {
            self.thomas(&b)
        } else {
            self.bicgstab(&b)?
        };
        for (r, &idx) in self.interior.iter().enumerate() {
            u[idx] = x[r];
        }
        Ok(())
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.interior.len() {
            let mut v = self.diag[r] * x[r];
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                let s = self.slot[self.cols[e]];
                if s != usize::MAX {
                    v += self.vals[e] * x[s];
                }
            }
            y[r] = v;
        }
    }

    /// Tridiagonal solve; the interior of a 1-d grid is ordered left to right.
    fn thomas(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for r in 0..n {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                let s = self.slot[self.cols[e]];
                if s == usize::MAX {
                    continue;
                }
                if s + 1 == r {
                    lower[r] = self.vals[e];
                } else if s == r + 1 {
                    upper[r] = self.vals[e];
                }
            }
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = upper[0] / self.diag[0];
        d[0] = b[0] / self.diag[0];
        for r in 1..n {
            let m = self.diag[r] - lower[r] * c[r - 1];
            c[r] = upper[r] / m;
            d[r] = (b[r] - lower[r] * d[r - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for r in (0..n - 1).rev() {
            x[r] = d[r] - c[r] * x[r + 1];
        }
        x
    }

    /// Jacobi-preconditioned BiCGSTAB.
    fn bicgstab(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        let mut x: Vec<f64> = b.iter().zip(&self.diag).map(|(v, d)| v / d).collect();
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut ax = vec![0.0; n];
        self.matvec(&x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut tv = vec![0.0; n];
        let mut res = dot(&r, &r).sqrt() / bnorm;
        for it in 0..LINEAR_MAX_ITERS {
            if res <= LINEAR_TOL {
                return Ok(x);
            }
            let rho_new = dot(&r0, &r);
            if rho_new == 0.0 || omega == 0.0 {
                return Err(Error::LinearSolve {
                    iterations: it,
                    residual: res,
                });
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = p[i] / self.diag[i];
            }
            self.matvec(&y, &mut v);
            alpha = rho / dot(&r0, &v);
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
                z[i] = s[i] / self.diag[i];
            }
            self.matvec(&z, &mut tv);
            let tt = dot(&tv, &tv);
            omega = if tt > 0.0 { dot(&tv, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * tv[i];
            }
            res = dot(&r, &r).sqrt() / bnorm;
        }
        if res <= LINEAR_TOL {
            return Ok(x);
        }
        Err(Error::LinearSolve {
            iterations: LINEAR_MAX_ITERS,
            residual: res,
        })
    }
}

/// Lagged linear extrapolation of the boundary from the later slice,
/// clamped to that slice's range so no new extrema appear.
pub(crate) fn extrapolate_boundary(grid: &SpaceGrid, later: &[f64], u: &mut [f64]) {
    let (lo, hi) = later
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let [nx, ny] = grid.n;
    #[allow(clippy::needless_range_loop)]
    for idx in 0..grid.len() {
        if !grid.on_boundary(idx) {
            continue;
        }
        let (i, j) = grid.coords(idx);
        let at = |a: usize, b: usize| later[grid.index(a, b)];
        let v = if i == 0 {
            2.0 * at(1, j) - at(2, j)
        } else if i + 1 == nx {
            2.0 * at(nx - 2, j) - at(nx - 3, j)
        } else if j == 0 {
            2.0 * at(i, 1) - at(i, 2)
        } else {
            2.0 * at(i, ny - 2) - at(i, ny - 3)
        };
        u[idx] = v.clamp(lo, hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CoefficientField, Shape};

    fn spec2(a12: f64) -> ProblemSpec {
        ProblemSpec::builder("aniso", 2, 2)
            .a(CoefficientField::constant(Shape::Matrix(2, 2), &[1.0, a12, a12, 1.0]))
            .sigma(CoefficientField::constant(Shape::Matrix(2, 2), &[1.0, 0.0, 0.0, 1.0]))
            .radius(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn thomas_and_bicgstab_agree_with_matvec() {
        let spec = ProblemSpec::builder("h", 1, 1)
            .sigma(CoefficientField::constant(Shape::Matrix(1, 1), &[1.0]))
            .b(CoefficientField::constant(Shape::Vector(1), &[0.7]))
            .radius(1.0)
            .build()
            .unwrap();
        let g = SpaceGrid::uniform(&spec.domain, 0.1).unwrap();
        let op = ImplicitStep::assemble(&spec, &g, 0.0, 0.01, 0.0).unwrap();
        let b: Vec<f64> = (0..op.interior.len()).map(|i| (i as f64).cos()).collect();
        let x = op.thomas(&b);
        let mut ax = vec![0.0; b.len()];
        op.matvec(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
        let y = op.bicgstab(&b).unwrap();
        assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-8));
    }

    #[test]
    fn cross_stencil_sign_condition() {
        let s = spec2(0.5);
        let g = SpaceGrid::uniform(&s.domain, 0.1).unwrap();
        assert!(ImplicitStep::assemble(&s, &g, 0.0, 0.01, 0.0).is_ok());
        let s = spec2(-0.99);
        assert!(ImplicitStep::assemble(&s, &g, 0.0, 0.01, 0.0).is_ok());
        // Equal spacings need a_11 >= |a_12|; an indefinite matrix fails.
        let s = spec2(1.5);
        match ImplicitStep::assemble(&s, &g, 0.0, 0.01, 0.0) {
            Err(Error::Stability { node, .. }) => assert_eq!(node.len(), 2),
            other => panic!("expected stability error, got {other:?}"),
        }
    }

    #[test]
    fn rows_sum_to_one_minus_dt_c() {
        let s = spec2(0.3);
        let g = SpaceGrid::uniform(&s.domain, 0.1).unwrap();
        let op = ImplicitStep::assemble(&s, &g, 0.0, 0.01, 0.0).unwrap();
        for r in 0..op.interior.len() {
            let sum: f64 = op.diag[r] + op.vals[op.row_ptr[r]..op.row_ptr[r + 1]].iter().sum::<f64>();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extrapolation_is_exact_on_lines_and_clamped() {
        let g = SpaceGrid::uniform(&crate::problem::DomainBox::new(1, 1.0), 0.1).unwrap();
        let later: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0]).collect();
        let mut u = vec![0.0; g.len()];
        extrapolate_boundary(&g, &later, &mut u);
        assert!((u[0] + 1.0).abs() < 1e-12);
        let bump: Vec<f64> = (0..g.len()).map(|i| (g.point(i)[0] * 3.0).cos()).collect();
        extrapolate_boundary(&g, &bump, &mut u);
        let lo = bump.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(u[0] >= lo);
    }
}
