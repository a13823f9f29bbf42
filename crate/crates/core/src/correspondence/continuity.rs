use serde::{Deserialize, Serialize};

use super::mollification::loglog_slope;
use crate::bsde::{solve_from, McConfig, PicardConfig};
use crate::error::{Error, Result};
use crate::paths::StartPoint;
use crate::pde::GridFunction;
use crate::problem::ProblemSpec;

/// Accepted relative change of the joint modulus under one refinement.
pub const REFINEMENT_BAND: f64 = 0.2;
const SMOOTH_X_EXPONENT: f64 = 0.9;
const SMOOTH_T_EXPONENT: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Time,
    Space,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusPair {
    pub dt: f64,
    pub dx: Vec<f64>,
    pub direction: Direction,
    /// `|Δt|` for time offsets, `|Δx|` for space offsets, `|Δx| + |Δt|^½`
    /// for mixed ones.
    pub distance: f64,
    pub delta_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub spec: String,
    pub base_t: f64,
    pub base_x: Vec<f64>,
    pub base_value: f64,
    pub pairs: Vec<ModulusPair>,
    pub x_exponent: Option<f64>,
    pub t_exponent: Option<f64>,
    /// Deterministic with coefficients of smoothness `>= 2`; the fitted
    /// exponents must then reach `0.9` in `x` and `0.45` in `t`.
    pub smooth: bool,
    pub pass: bool,
}

fn is_smooth(spec: &ProblemSpec) -> bool {
    spec.is_deterministic()
        && [&spec.b, &spec.sigma, &spec.c, &spec.nu]
            .iter()
            .all(|f| f.smoothness() >= 2)
}

fn fit(pairs: &[ModulusPair], dir: Direction) -> Option<f64> {
    let (d, y): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .filter(|p| p.direction == dir && p.delta_y > 0.0)
        .map(|p| (p.distance, p.delta_y))
        .unzip();
    loglog_slope(&d, &y)
}

/// Common-random-number estimates of `|Y_{t'}^{t',x'} − Y_t^{t,x}|` for
/// `(t', x') = (t, x) + offset`, with log-log Hölder fits along pure time
/// and pure space offsets. Offsets must be nonzero, at most unit length,
/// land on a node of the Monte Carlo time grid before `T` and stay in the
/// box.
pub fn continuity_modulus(
    spec: &ProblemSpec,
    base: &StartPoint,
    offsets: &[(f64, Vec<f64>)],
    mc: &McConfig,
    picard: &PicardConfig,
) -> Result<ContinuityReport> {
    if offsets.is_empty() {
        return Err(Error::InvalidInput("no continuity offsets given".into()));
    }
    let bundle = mc.bundle(spec)?;
    let grid = bundle.grid;
    let on_node = |t: f64| {
        let k = ((t - grid.t0) / grid.dt()).round();
        (t - grid.node(k as usize)).abs() <= 1e-9 * spec.horizon
    };
    let mut starts = Vec::with_capacity(offsets.len());
    for (dt, dx) in offsets {
        if dx.len() != spec.dim {
            return Err(Error::InvalidInput(format!(
                "offset {dx:?} does not have dimension {}",
                spec.dim
            )));
        }
        let dxn = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dxn == 0.0 && *dt == 0.0 {
            return Err(Error::InvalidInput("zero continuity offset".into()));
        }
        if dxn * dxn + dt * dt > 1.0 {
            return Err(Error::Domain(format!("offset ({dt}, {dx:?}) longer than one")));
        }
        let t = base.t + dt;
        let x: Vec<f64> = base.x.iter().zip(dx).map(|(a, b)| a + b).collect();
        if !(t >= 0.0 && t < spec.horizon) || !spec.domain.contains(&x) {
            return Err(Error::Domain(format!("offset point ({t}, {x:?}) outside [0, T) × box")));
        }
        if !on_node(t) {
            return Err(Error::InvalidInput(format!(
                "offset time {t} is not a node of the time grid"
            )));
        }
        let (direction, distance) = match (*dt == 0.0, dxn == 0.0) {
            (true, _) => (Direction::Space, dxn),
            (_, true) => (Direction::Time, dt.abs()),
            _ => (Direction::Mixed, dxn + dt.abs().sqrt()),
        };
        starts.push((StartPoint { t, x, w: base.w }, direction, distance));
    }
    let y0 = solve_from(spec, base, &bundle, mc, picard)?.start_value();
    let mut pairs = Vec::with_capacity(starts.len());
    for ((start, direction, distance), (dt, dx)) in starts.into_iter().zip(offsets) {
        let y = solve_from(spec, &start, &bundle, mc, picard)?.start_value();
        pairs.push(ModulusPair {
            dt: *dt,
            dx: dx.clone(),
            direction,
            distance,
            delta_y: (y - y0).abs(),
        });
    }
    let x_exponent = fit(&pairs, Direction::Space);
    let t_exponent = fit(&pairs, Direction::Time);
    let smooth = is_smooth(spec);
    let fitted: Vec<f64> = x_exponent.into_iter().chain(t_exponent).collect();
    let thresholds_met = !smooth
        || (x_exponent.is_none_or(|e| e >= SMOOTH_X_EXPONENT) && t_exponent.is_none_or(|e| e >= SMOOTH_T_EXPONENT));
    Ok(ContinuityReport {
        spec: spec.name.clone(),
        base_t: base.t,
        base_x: base.x.clone(),
        base_value: y0,
        pairs,
        x_exponent,
        t_exponent,
        smooth,
        pass: !fitted.is_empty() && fitted.iter().all(|e| *e > 0.0) && thresholds_met,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointModulus {
    pub h: f64,
    pub dt: f64,
    /// Largest difference between space neighbours on one time slice.
    pub space: f64,
    /// Largest difference between time neighbours at one node.
    pub time: f64,
    /// `max(space, time) / (h + Δt)`
    pub normalized: f64,
}

/// Discrete modulus of continuity of `u` over neighbouring `(t, x)` nodes.
pub fn joint_continuity_check(u: &GridFunction) -> JointModulus {
    let g = &u.space;
    let [nx, ny] = g.n;
    let (mut space, mut time) = (0.0f64, 0.0f64);
    for k in 0..u.n_times() {
        let s = u.component(k, 0);
        for j in 0..ny {
            for i in 0..nx {
                let v = s[g.index(i, j)];
                if i + 1 < nx {
                    space = space.max((s[g.index(i + 1, j)] - v).abs());
                }
                if j + 1 < ny {
                    space = space.max((s[g.index(i, j + 1)] - v).abs());
                }
            }
        }
        if k + 1 < u.n_times() {
            let next = u.component(k + 1, 0);
            time = s.iter().zip(&next).fold(time, |m, (a, b)| m.max((a - b).abs()));
        }
    }
    let h = g.h[..g.dim].iter().fold(0.0f64, |m, v| m.max(*v));
    let dt = u.time.dt();
    JointModulus {
        h,
        dt,
        space,
        time,
        normalized: space.max(time) / (h + dt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointContinuityReport {
    pub coarse: JointModulus,
    pub fine: JointModulus,
    /// `fine.normalized / coarse.normalized`, `1` when both vanish.
    pub ratio: f64,
    pub pass: bool,
}

/// Discrete equicontinuity: the normalized modulus may change by at most
/// [`REFINEMENT_BAND`] between two grid levels.
pub fn joint_continuity_refinement(coarse: &GridFunction, fine: &GridFunction) -> JointContinuityReport {
    let (c, f) = (joint_continuity_check(coarse), joint_continuity_check(fine));
    let ratio = match (c.normalized, f.normalized) {
        (0.0, 0.0) => 1.0,
        (0.0, _) => f64::INFINITY,
        (a, b) => b / a,
    };
    JointContinuityReport {
        coarse: c,
        fine: f,
        ratio,
        pass: ratio.is_finite() && (ratio - 1.0).abs() <= REFINEMENT_BAND,
    }
}
