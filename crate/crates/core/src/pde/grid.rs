//! Uniform space grids and space-time grid functions.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::TimeGrid;
use crate::problem::{DomainBox, ProblemSpec};

/// Minimum interior nodes per axis.
pub const MIN_INTERIOR: usize = 8;

/// Uniform grid on `[-R, R]^d`, `d <= 2`. Node `(i, j)` has flat index
/// `i + nx * j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub dim: usize,
    pub n: [usize; 2],
    pub lo: [f64; 2],
    pub h: [f64; 2],
}

impl SpaceGrid {
    /// Spacing as close to `h` as the box allows.
    pub fn uniform(domain: &DomainBox, h: f64) -> Result<Self> {
        if domain.dim == 0 || domain.dim > 2 {
            return Err(Error::Capability(format!(
                "grid solver supports d <= 2, got d = {}",
                domain.dim
            )));
        }
        if !(h > 0.0) || !domain.radius.is_finite() {
            return Err(Error::Domain(format!("grid spacing must be positive, got {h}")));
        }
        let len = 2.0 * domain.radius;
        let cells = (len / h).round().max(1.0) as usize;
        let n = cells + 1;
        if n < MIN_INTERIOR + 2 {
            return Err(Error::Domain(format!(
                "grid with spacing {h} has {} interior nodes per axis, need {MIN_INTERIOR}",
                n.saturating_sub(2)
            )));
        }
        let hh = len / cells as f64;
        let mut g = Self {
            dim: domain.dim,
            n: [n, 1],
            lo: [-domain.radius, 0.0],
            h: [hh, 1.0],
        };
        if domain.dim == 2 {
            g.n[1] = n;
            g.lo[1] = -domain.radius;
            g.h[1] = hh;
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n[0], idx / self.n[0])
    }

    /// Node coordinates as a `d`-vector.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let (i, j) = self.coords(idx);
        let mut x = vec![self.lo[0] + i as f64 * self.h[0]];
        if self.dim == 2 {
            x.push(self.lo[1] + j as f64 * self.h[1]);
        }
        x
    }

    pub fn on_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.coords(idx);
        i == 0 || i + 1 == self.n[0] || (self.dim == 2 && (j == 0 || j + 1 == self.n[1]))
    }

    /// Trapezoid weight of a node.
    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j) = self.coords(idx);
        let w = |k: usize, n: usize, h: f64| if k == 0 || k + 1 == n { 0.5 * h } else { h };
        let mut v = w(i, self.n[0], self.h[0]);
        if self.dim == 2 {
            v *= w(j, self.n[1], self.h[1]);
        }
        v
    }

    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis])
            .map(|i| self.lo[axis] + i as f64 * self.h[axis])
            .collect()
    }

    /// Multilinear interpolation of nodal `values` at `x` (clamped to the box).
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let locate = |axis: usize, v: f64| -> (usize, f64) {
            let n = self.n[axis];
            let pos = ((v - self.lo[axis]) / self.h[axis]).clamp(0.0, (n - 1) as f64);
            let i = (pos.floor() as usize).min(n - 2);
            (i, pos - i as f64)
        };
        let (i, fx) = locate(0, x[0]);
        if self.dim == 1 {
            return values[i] * (1.0 - fx) + values[i + 1] * fx;
        }
        let (j, fy) = locate(1, x[1]);
        let v = |a: usize, b: usize| values[self.index(a, b)];
        (1.0 - fy) * ((1.0 - fx) * v(i, j) + fx * v(i + 1, j)) + fy * ((1.0 - fx) * v(i, j + 1) + fx * v(i + 1, j + 1))
    }

    /// First derivative along `axis`: central inside, second-order one-sided
    /// on the boundary.
    pub fn diff1(&self, values: &[f64], idx: usize, axis: usize) -> f64 {
        let (i, j) = self.coords(idx);
        let (k, n) = if axis == 0 { (i, self.n[0]) } else { (j, self.n[1]) };
        let at = |m: usize| {
            if axis == 0 {
                values[self.index(m, j)]
            } else {
                values[self.index(i, m)]
            }
        };
        let h = self.h[axis];
        if k == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if k + 1 == n {
            (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
        } else {
            (at(k + 1) - at(k - 1)) / (2.0 * h)
        }
    }

    /// Second derivative along `axis`; one-sided of second order on the
    /// boundary.
    pub fn diff2(&self, values: &[f64], idx: usize, axis: usize) -> f64 {
        let (i, j) = self.coords(idx);
        let (k, n) = if axis == 0 { (i, self.n[0]) } else { (j, self.n[1]) };
        let at = |m: usize| {
            if axis == 0 {
                values[self.index(m, j)]
            } else {
                values[self.index(i, m)]
            }
        };
        let h2 = self.h[axis] * self.h[axis];
        if k == 0 {
            (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2
        } else if k + 1 == n {
            (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2
        } else {
            (at(k + 1) - 2.0 * at(k) + at(k - 1)) / h2
        }
    }

    /// Mixed derivative `u_{x y}` as the `y`-difference of `x`-differences.
    pub fn diff_mixed(&self, values: &[f64], idx: usize) -> f64 {
        let (i, j) = self.coords(idx);
        let ux_at = |jj: usize| self.diff1(values, self.index(i, jj), 0);
        let n = self.n[1];
        let h = self.h[1];
        if j == 0 {
            (-3.0 * ux_at(0) + 4.0 * ux_at(1) - ux_at(2)) / (2.0 * h)
        } else if j + 1 == n {
            (3.0 * ux_at(n - 1) - 4.0 * ux_at(n - 2) + ux_at(n - 3)) / (2.0 * h)
        } else {
            (ux_at(j + 1) - ux_at(j - 1)) / (2.0 * h)
        }
    }
}

/// How a grid function was produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridMeta {
    pub spec: String,
    pub epsilon: f64,
    pub solver: String,
}

/// Values on `TimeGrid × SpaceGrid` with `components` entries per node,
/// laid out `[k][node][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub space: SpaceGrid,
    pub time: TimeGrid,
    pub components: usize,
    pub values: Vec<f64>,
    pub meta: GridMeta,
}

impl GridFunction {
    pub fn zeros(space: SpaceGrid, time: TimeGrid, components: usize) -> Self {
        Self {
            space,
            time,
            components,
            values: vec![0.0; (time.n_steps + 1) * space.len() * components],
            meta: GridMeta::default(),
        }
    }

    pub fn n_times(&self) -> usize {
        self.time.n_steps + 1
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let m = self.space.len() * self.components;
        &self.values[k * m..(k + 1) * m]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let m = self.space.len() * self.components;
        &mut self.values[k * m..(k + 1) * m]
    }

    /// Component `c` of slice `k` as a contiguous vector.
    pub fn component(&self, k: usize, c: usize) -> Vec<f64> {
        self.slice(k).iter().skip(c).step_by(self.components).copied().collect()
    }

    /// Scalar value at `(t, x)`: linear in `t` between nodes, multilinear in
    /// `x`.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let dt = self.time.dt();
        let pos = ((t - self.time.t0) / dt).clamp(0.0, self.time.n_steps as f64);
        let k = (pos.floor() as usize).min(self.time.n_steps.saturating_sub(1));
        let f = pos - k as f64;
        let a = self.space.interpolate(&self.component(k, 0), x);
        if f < 1e-9 {
            return a;
        }
        let b = self.space.interpolate(&self.component(k + 1, 0), x);
        if f > 1.0 - 1e-9 {
            return b;
        }
        (1.0 - f) * a + f * b
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `u_x` at slice `k`, `len × d`.
    pub fn gradient(&self, k: usize) -> Vec<f64> {
        let u = self.component(k, 0);
        let d = self.space.dim;
        let mut g = vec![0.0; self.space.len() * d];
        for idx in 0..self.space.len() {
            for axis in 0..d {
                g[idx * d + axis] = self.space.diff1(&u, idx, axis);
            }
        }
        g
    }

    /// `q̂ = σᵀ u_x` with `d'` components. In the deterministic regime
    /// `q ≡ 0`, so this is the whole martingale-transformed field.
    pub fn qhat(&self, spec: &ProblemSpec) -> GridFunction {
        let d = self.space.dim;
        let dp = spec.noise_dim;
        let mut out = GridFunction::zeros(self.space, self.time, dp);
        out.meta = GridMeta {
            solver: format!("{}: qhat", self.meta.solver),
            ..self.meta.clone()
        };
        let mut s = vec![0.0; d * dp];
        for k in 0..self.n_times() {
            let t = self.time.node(k);
            let g = self.gradient(k);
            let slice = out.slice_mut(k);
            for idx in 0..self.space.len() {
                let x = self.space.point(idx);
                spec.sigma.eval_into(t, &x, 0.0, &mut s);
                for j in 0..dp {
                    slice[idx * dp + j] = (0..d).map(|i| g[idx * d + i] * s[i * dp + j]).sum();
                }
            }
        }
        out
    }

    /// Self-describing binary: `dim, nx, ny, n_steps, components` as LE
    /// `u64`, then `lo, h` per axis, `t0, T` as LE `f64`, then the values.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for v in [
            self.space.dim as u64,
            self.space.n[0] as u64,
            self.space.n[1] as u64,
            self.time.n_steps as u64,
            self.components as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [
            self.space.lo[0],
            self.space.h[0],
            self.space.lo[1],
            self.space.h[1],
            self.time.t0,
            self.time.horizon,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn import(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 88 || bytes.len() % 8 != 0 {
            return Err(Error::InvalidInput("grid function file is truncated".into()));
        }
        let word = |i: usize| -> [u8; 8] { bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes") };
        let u = |i: usize| u64::from_le_bytes(word(i)) as usize;
        let f = |i: usize| f64::from_le_bytes(word(i));
        let space = SpaceGrid {
            dim: u(0),
            n: [u(1), u(2)],
            lo: [f(5), f(7)],
            h: [f(6), f(8)],
        };
        let time = TimeGrid::new(f(9), f(10), u(3))?;
        let components = u(4);
        let values: Vec<f64> = (11..bytes.len() / 8).map(f).collect();
        if values.len() != (time.n_steps + 1) * space.len() * components {
            return Err(Error::InvalidInput("grid function payload has the wrong length".into()));
        }
        Ok(Self {
            space,
            time,
            components,
            values,
            meta: GridMeta::default(),
        })
    }

    /// CSV of slice `k`: `t,x1[,x2],u`.
    pub fn write_csv_slice<W: Write>(&self, mut w: W, k: usize) -> Result<()> {
        let t = self.time.node(k);
        if self.space.dim == 1 {
            writeln!(w, "t,x1,u")?;
        } else {
            writeln!(w, "t,x1,x2,u")?;
        }
        let u = self.component(k, 0);
        for (idx, v) in u.iter().enumerate() {
            let x = self.space.point(idx);
            let coords: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{t},{},{v}", coords.join(","))?;
        }
        Ok(())
    }
}
