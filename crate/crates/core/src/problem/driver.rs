use std::fmt;
use std::sync::Arc;

use super::field::ScalarField;

/// `(t, x, w, v, r) -> f`, with `v` the value slot (`u` or `Y`) and `r` the
/// `d'`-vector slot (`q̂` or `Z`).
pub type DriverFn = Arc<dyn Fn(f64, &[f64], f64, f64, &[f64]) -> f64 + Send + Sync>;

/// The nonlinear driver `f(t, x, v, r)` with its declared Lipschitz constant.
///
/// Linear parts `c v + ν·r` live on [`super::ProblemSpec`] as coefficients; a
/// driver without `v`/`r` dependence is a pure source term `F(t, x)`.
#[derive(Clone)]
pub struct DriverFunction {
    f: DriverFn,
    lipschitz: f64,
    depends_on_v: bool,
    depends_on_r: bool,
    uses_path: bool,
    zero: bool,
    partial_v: Option<DriverFn>,
}

impl fmt::Debug for DriverFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverFunction")
            .field("lipschitz", &self.lipschitz)
            .field("depends_on_v", &self.depends_on_v)
            .field("depends_on_r", &self.depends_on_r)
            .field("uses_path", &self.uses_path)
            .finish()
    }
}

impl DriverFunction {
    pub fn zero() -> Self {
        Self {
            f: Arc::new(|_, _, _, _, _| 0.0),
            lipschitz: 0.0,
            depends_on_v: false,
            depends_on_r: false,
            uses_path: false,
            zero: true,
            partial_v: Some(Arc::new(|_, _, _, _, _| 0.0)),
        }
    }

    /// Pure source `F(t, x)`.
    pub fn source(src: ScalarField) -> Self {
        let uses_path = src.uses_path();
        Self {
            f: Arc::new(move |t, x, w, _, _| src.eval(t, x, w)),
            lipschitz: 0.0,
            depends_on_v: false,
            depends_on_r: false,
            uses_path,
            zero: false,
            partial_v: Some(Arc::new(|_, _, _, _, _| 0.0)),
        }
    }

    /// `f(t, x, v)` with no `r` dependence (the regime of the `L^p` theory).
    pub fn semilinear<F>(f: F, lipschitz: f64) -> Self
    where
        F: Fn(f64, &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(move |t, x, _, v, _| f(t, x, v)),
            lipschitz,
            depends_on_v: true,
            depends_on_r: false,
            uses_path: false,
            zero: false,
            partial_v: None,
        }
    }

    /// Fully general `f(t, x, w, v, r)`.
    pub fn general<F>(f: F, lipschitz: f64, depends_on_v: bool, depends_on_r: bool, uses_path: bool) -> Self
    where
        F: Fn(f64, &[f64], f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            lipschitz,
            depends_on_v,
            depends_on_r,
            uses_path,
            zero: false,
            partial_v: None,
        }
    }

    pub fn with_partial_v<F>(mut self, fv: F) -> Self
    where
        F: Fn(f64, &[f64], f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.partial_v = Some(Arc::new(fv));
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = l;
        self
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], w: f64, v: f64, r: &[f64]) -> f64 {
        (self.f)(t, x, w, v, r)
    }

    /// `f(t, x, 0, 0)`.
    pub fn source_term(&self, t: f64, x: &[f64], w: f64, r_dim: usize) -> f64 {
        if r_dim <= 8 {
            let zeros = [0.0; 8];
            self.eval(t, x, w, 0.0, &zeros[..r_dim])
        } else {
            self.eval(t, x, w, 0.0, &vec![0.0; r_dim])
        }
    }

    /// `∂f/∂v`, analytic when supplied, else a central difference.
    pub fn partial_v(&self, t: f64, x: &[f64], w: f64, v: f64, r: &[f64]) -> f64 {
        if let Some(p) = &self.partial_v {
            return p(t, x, w, v, r);
        }
        let h = super::field::fd_step(v);
        (self.eval(t, x, w, v + h, r) - self.eval(t, x, w, v - h, r)) / (2.0 * h)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn depends_on_v(&self) -> bool {
        self.depends_on_v
    }

    pub fn depends_on_r(&self) -> bool {
        self.depends_on_r
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn uses_path(&self) -> bool {
        self.uses_path
    }

    /// True when the driver is a pure source (no `v`, `r` dependence).
    pub fn is_source_only(&self) -> bool {
        !self.depends_on_v && !self.depends_on_r
    }

    pub fn raw(&self) -> DriverFn {
        self.f.clone()
    }

    pub(crate) fn from_parts(
        f: DriverFn,
        lipschitz: f64,
        depends_on_v: bool,
        depends_on_r: bool,
        uses_path: bool,
    ) -> Self {
        Self {
            f,
            lipschitz,
            depends_on_v,
            depends_on_r,
            uses_path,
            zero: false,
            partial_v: None,
        }
    }
}
