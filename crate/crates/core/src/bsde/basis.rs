//! Least-squares regression bases for conditional expectations.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Normal matrices above this condition number get a ridge term.
pub const RIDGE_CONDITION: f64 = 1e10;
pub const RIDGE_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegressionBasis {
    /// Monomials of total degree `<= degree` in standardized features.
    Polynomial { degree: usize },
    /// Independent affine fit on each of `bins^f` equal-width cells.
    PiecewiseAffine { bins: usize },
}

impl RegressionBasis {
    /// Cubic polynomials up to two features, 16-bin cells beyond.
    pub fn default_for(n_features: usize) -> Self {
        if n_features <= 2 {
            RegressionBasis::Polynomial { degree: 3 }
        } else {
            RegressionBasis::PiecewiseAffine { bins: 16 }
        }
    }

    pub fn dimension(&self, n_features: usize) -> usize {
        match *self {
            RegressionBasis::Polynomial { degree } => monomials(n_features, degree).len(),
            RegressionBasis::PiecewiseAffine { bins } => bins.pow(n_features as u32) * (n_features + 1),
        }
    }

    /// Fits every target column against `features` (`n × n_features`,
    /// row-major). Features with no spread are dropped; with none left the
    /// fit is the sample mean.
    pub fn fit(&self, exec: Exec, features: &[f64], n_features: usize, targets: &[Vec<f64>]) -> Result<Fit> {
        let n = targets.first().map_or(0, Vec::len);
        if n == 0 || targets.iter().any(|t| t.len() != n) || features.len() != n * n_features {
            return Err(Error::Structural("regression data has inconsistent lengths".into()));
        }
        let scaler = Scaler::new(features, n_features, n);
        let model = match *self {
            RegressionBasis::Polynomial { degree } => {
                fit_polynomial(exec, &scaler, features, n_features, targets, degree)?
            }
            RegressionBasis::PiecewiseAffine { bins } => {
                fit_cells(&scaler, features, n_features, targets, bins.max(1))?
            }
        };
        let mut fitted: Vec<Vec<f64>> = targets.iter().map(|_| vec![0.0; n]).collect();
        let mut row = vec![0.0; targets.len()];
        for i in 0..n {
            model.predict_into(&features[i * n_features..(i + 1) * n_features], &mut row);
            for (f, v) in fitted.iter_mut().zip(&row) {
                f[i] = *v;
            }
        }
        let residual = (targets[0]
            .iter()
            .zip(&fitted[0])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        Ok(Fit {
            condition: model.condition,
            ridge: model.ridge,
            dimension: model.dimension(),
            residual,
            fitted,
            model,
        })
    }
}

/// Values of every target at the sample points plus diagnostics.
#[derive(Debug, Clone)]
pub struct Fit {
    pub fitted: Vec<Vec<f64>>,
    /// RMS residual of the first target.
    pub residual: f64,
    pub condition: f64,
    pub ridge: bool,
    pub dimension: usize,
    pub model: Model,
}

#[derive(Debug, Clone)]
struct Scaler {
    mean: Vec<f64>,
    scale: Vec<f64>,
    active: Vec<usize>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Scaler {
    fn new(features: &[f64], nf: usize, n: usize) -> Self {
        let mut mean = vec![0.0; nf];
        let mut min = vec![f64::INFINITY; nf];
        let mut max = vec![f64::NEG_INFINITY; nf];
        for row in features.chunks_exact(nf) {
            for j in 0..nf {
                mean[j] += row[j];
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; nf];
        for row in features.chunks_exact(nf) {
            for j in 0..nf {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let scale: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        let active = (0..nf)
            .filter(|&j| scale[j] > 1e-12 * (1.0 + mean[j].abs()) && max[j] > min[j])
            .collect();
        Self {
            mean,
            scale,
            active,
            min,
            max,
        }
    }

    fn standardized(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.active.iter().map(|&j| (row[j] - self.mean[j]) / self.scale[j]));
    }
}

/// Exponent vectors of total degree `<= degree`, constant term first.
fn monomials(nf: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; nf]];
    for total in 1..=degree {
        let mut cur = vec![0; nf];
        push_compositions(nf, total, 0, &mut cur, &mut out);
    }
    out
}

fn push_compositions(nf: usize, left: usize, axis: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if axis + 1 == nf {
        cur[axis] = left;
        out.push(cur.clone());
        cur[axis] = 0;
        return;
    }
    for k in (0..=left).rev() {
        cur[axis] = k;
        push_compositions(nf, left - k, axis + 1, cur, out);
    }
    cur[axis] = 0;
}

fn eval_monomials(z: &[f64], exps: &[Vec<usize>], out: &mut [f64]) {
    for (o, e) in out.iter_mut().zip(exps) {
        *o = z.iter().zip(e).map(|(v, &k)| v.powi(k as i32)).product();
    }
}

/// A fitted regression function.
#[derive(Debug, Clone)]
pub struct Model {
    scaler: Scaler,
    kind: ModelKind,
    condition: f64,
    ridge: bool,
}

#[derive(Debug, Clone)]
enum ModelKind {
    Polynomial {
        exps: Vec<Vec<usize>>,
        /// `dim × n_targets`, column-major by target.
        coef: Vec<Vec<f64>>,
    },
    Cells {
        bins: usize,
        /// Per cell: coefficients `(1 + f) × n_targets` about the cell
        /// centre, or `None` for an empty cell.
        cells: Vec<Option<Vec<Vec<f64>>>>,
        fallback: Vec<f64>,
    },
}

impl Model {
    pub fn dimension(&self) -> usize {
        match &self.kind {
            ModelKind::Polynomial { exps, .. } => exps.len(),
            ModelKind::Cells { cells, .. } => cells.iter().flatten().count() * (self.scaler.active.len() + 1),
        }
    }

    pub fn predict_into(&self, row: &[f64], out: &mut [f64]) {
        let mut z = Vec::with_capacity(self.scaler.active.len());
        self.scaler.standardized(row, &mut z);
        match &self.kind {
            ModelKind::Polynomial { exps, coef } => {
                let mut phi = vec![0.0; exps.len()];
                eval_monomials(&z, exps, &mut phi);
                for (o, c) in out.iter_mut().zip(coef) {
                    *o = phi.iter().zip(c).map(|(p, c)| p * c).sum();
                }
            }
            ModelKind::Cells { bins, cells, fallback } => {
                let (cell, local) = self.locate(row, *bins);
                match &cells[cell] {
                    Some(coef) => {
                        for (o, c) in out.iter_mut().zip(coef) {
                            *o = c[0] + local.iter().zip(&c[1..]).map(|(u, v)| u * v).sum::<f64>();
                        }
                    }
                    None => out.copy_from_slice(fallback),
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64], n_targets: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_targets];
        self.predict_into(row, &mut out);
        out
    }

    /// Cell index and cell-local coordinates in units of the cell width.
    fn locate(&self, row: &[f64], bins: usize) -> (usize, Vec<f64>) {
        let mut idx = 0;
        let mut local = Vec::with_capacity(self.scaler.active.len());
        for &j in &self.scaler.active {
            let (lo, hi) = (self.scaler.min[j], self.scaler.max[j]);
            let width = (hi - lo) / bins as f64;
            let pos = ((row[j] - lo) / width).clamp(0.0, bins as f64);
            let b = (pos.floor() as usize).min(bins - 1);
            idx = idx * bins + b;
            local.push(pos - b as f64 - 0.5);
        }
        (idx, local)
    }
}

/// Solves `(G + ridge) c = r` for every right-hand side column.
fn solve_normal(mut gram: DMatrix<f64>, rhs: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64, bool) {
    let dim = gram.nrows();
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let ridge = condition > RIDGE_CONDITION;
    if ridge {
        let mu = RIDGE_SCALE * gram.trace() / dim as f64;
        let mu = if mu > 0.0 { mu } else { RIDGE_SCALE };
        for i in 0..dim {
            gram[(i, i)] += mu;
        }
    }
    let b = DMatrix::from_fn(dim, rhs.len(), |i, j| rhs[j][i]);
    let sol = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => gram
            .svd(true, true)
            .solve(&b, 1e-14)
            .unwrap_or_else(|_| DMatrix::zeros(dim, rhs.len())),
    };
    let coef = (0..rhs.len())
        .map(|j| sol.column(j).iter().copied().collect())
        .collect();
    (coef, condition, ridge)
}

fn fit_polynomial(
    exec: Exec,
    scaler: &Scaler,
    features: &[f64],
    nf: usize,
    targets: &[Vec<f64>],
    degree: usize,
) -> Result<Model> {
    let n = targets[0].len();
    let exps = monomials(scaler.active.len(), if scaler.active.is_empty() { 0 } else { degree });
    let dim = exps.len();
    let nt = targets.len();
    let partials = exec.map_blocks(n, |range| {
        let mut g = vec![0.0; dim * dim];
        let mut r = vec![0.0; dim * nt];
        let mut z = Vec::with_capacity(nf);
        let mut phi = vec![0.0; dim];
        for i in range {
            scaler.standardized(&features[i * nf..(i + 1) * nf], &mut z);
            eval_monomials(&z, &exps, &mut phi);
            for a in 0..dim {
                for b in a..dim {
                    g[a * dim + b] += phi[a] * phi[b];
                }
                for (t, tv) in targets.iter().enumerate() {
                    r[t * dim + a] += phi[a] * tv[i];
                }
            }
        }
        (g, r)
    });
    let mut g = vec![0.0; dim * dim];
    let mut r = vec![0.0; dim * nt];
    for (pg, pr) in partials {
        g.iter_mut().zip(&pg).for_each(|(a, b)| *a += b);
        r.iter_mut().zip(&pr).for_each(|(a, b)| *a += b);
    }
    let inv_n = 1.0 / n as f64;
    let gram = DMatrix::from_fn(dim, dim, |a, b| g[a.min(b) * dim + a.max(b)] * inv_n);
    let rhs: Vec<Vec<f64>> = (0..nt)
        .map(|t| r[t * dim..(t + 1) * dim].iter().map(|v| v * inv_n).collect())
        .collect();
    let (coef, condition, ridge) = solve_normal(gram, &rhs);
    Ok(Model {
        scaler: scaler.clone(),
        kind: ModelKind::Polynomial { exps, coef },
        condition,
        ridge,
    })
}

fn fit_cells(scaler: &Scaler, features: &[f64], nf: usize, targets: &[Vec<f64>], bins: usize) -> Result<Model> {
    let n = targets[0].len();
    let fa = scaler.active.len();
    let ncell = bins
        .checked_pow(fa as u32)
        .filter(|&c| c <= 1 << 22)
        .ok_or_else(|| Error::Capability(format!("{bins}^{fa} regression cells is too many")))?;
    let dim = fa + 1;
    let nt = targets.len();
    let fallback: Vec<f64> = targets.iter().map(|t| t.iter().sum::<f64>() / n as f64).collect();
    let mut probe = Model {
        scaler: scaler.clone(),
        kind: ModelKind::Cells {
            bins,
            cells: Vec::new(),
            fallback: fallback.clone(),
        },
        condition: 1.0,
        ridge: false,
    };
    let mut count = vec![0usize; ncell];
    let mut gram = vec![0.0; ncell * dim * dim];
    let mut rhs = vec![0.0; ncell * dim * nt];
    let mut phi = vec![0.0; dim];
    phi[0] = 1.0;
    for i in 0..n {
        let (c, local) = probe.locate(&features[i * nf..(i + 1) * nf], bins);
        phi[1..].copy_from_slice(&local);
        count[c] += 1;
        let g = &mut gram[c * dim * dim..(c + 1) * dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                g[a * dim + b] += phi[a] * phi[b];
            }
        }
        let r = &mut rhs[c * dim * nt..(c + 1) * dim * nt];
        for (t, tv) in targets.iter().enumerate() {
            for a in 0..dim {
                r[t * dim + a] += phi[a] * tv[i];
            }
        }
    }
    let mut cells = Vec::with_capacity(ncell);
    let (mut worst, mut any_ridge) = (1.0f64, false);
    for c in 0..ncell {
        if count[c] == 0 {
            cells.push(None);
            continue;
        }
        let r = &rhs[c * dim * nt..(c + 1) * dim * nt];
        if count[c] < 2 * dim {
            let m = count[c] as f64;
            cells.push(Some(
                (0..nt)
                    .map(|t| {
                        let mut v = vec![0.0; dim];
                        v[0] = r[t * dim] / m;
                        v
                    })
                    .collect(),
            ));
            continue;
        }
        let g = DMatrix::from_row_slice(dim, dim, &gram[c * dim * dim..(c + 1) * dim * dim]);
        let b: Vec<Vec<f64>> = (0..nt).map(|t| r[t * dim..(t + 1) * dim].to_vec()).collect();
        let (coef, cond, ridge) = solve_normal(g, &b);
        worst = worst.max(cond);
        any_ridge |= ridge;
        cells.push(Some(coef));
    }
    probe.kind = ModelKind::Cells { bins, cells, fallback };
    probe.condition = worst;
    probe.ridge = any_ridge;
    Ok(probe)
}
