use std::fmt;
use std::sync::Arc;

/// `(t, x, w) -> value`, where `w` is the per-path functional channel
/// (the running Brownian value). Deterministic fields ignore `w`.
pub type ScalarFn = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;

/// Analytic partial derivative `D^γ` for a multi-index `γ` given as per-axis
/// orders; returns `None` when the closure does not cover that `γ`.
pub type DerivFn = Arc<dyn Fn(f64, &[f64], f64, &[usize]) -> Option<f64> + Send + Sync>;

/// One real-valued component of a coefficient.
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarFn,
    deriv: Option<DerivFn>,
    uses_path: bool,
    constant: Option<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("analytic_derivs", &self.deriv.is_some())
            .field("uses_path", &self.uses_path)
            .field("constant", &self.constant)
            .finish()
    }
}

/// Central-difference step `eps^{1/3} (1 + |x|)`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

impl ScalarField {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64, &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(f),
            deriv: None,
            uses_path: false,
            constant: None,
        }
    }

    /// Field depending on `x` only.
    pub fn of_x<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(move |_, x, _| f(x))
    }

    pub fn constant(c: f64) -> Self {
        let mut s = Self::new(move |_, _, _| c);
        s.deriv = Some(Arc::new(|_, _, _, _| Some(0.0)));
        s.constant = Some(c);
        s
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Attaches analytic derivatives. Orders not covered by `d` fall back to
    /// finite differences.
    pub fn with_derivatives<D>(mut self, d: D) -> Self
    where
        D: Fn(f64, &[f64], f64, &[usize]) -> Option<f64> + Send + Sync + 'static,
    {
        self.deriv = Some(Arc::new(d));
        self
    }

    /// Marks the field as reading the path channel `w` (non-Markov).
    pub fn path_dependent(mut self) -> Self {
        self.uses_path = true;
        self
    }

    pub fn uses_path(&self) -> bool {
        self.uses_path
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.deriv.is_some()
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], w: f64) -> f64 {
        (self.value)(t, x, w)
    }

    pub fn value_fn(&self) -> ScalarFn {
        self.value.clone()
    }

    /// `D^γ` in `x`; analytic when available, else central differences.
    pub fn deriv(&self, t: f64, x: &[f64], w: f64, gamma: &[usize]) -> f64 {
        let order: usize = gamma.iter().sum();
        if order == 0 {
            return self.eval(t, x, w);
        }
        if self.constant.is_some() {
            return 0.0;
        }
        if let Some(d) = &self.deriv {
            if let Some(v) = d(t, x, w, gamma) {
                return v;
            }
        }
        self.fd_deriv(t, x, w, gamma)
    }

    fn fd_deriv(&self, t: f64, x: &[f64], w: f64, gamma: &[usize]) -> f64 {
        let axes: Vec<usize> = gamma
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat_n(i, k))
            .collect();
        let mut p = x.to_vec();
        match axes.as_slice() {
            [i] => {
                let h = fd_step(x[*i]);
                p[*i] = x[*i] + h;
                let fp = self.eval(t, &p, w);
                p[*i] = x[*i] - h;
                let fm = self.eval(t, &p, w);
                (fp - fm) / (2.0 * h)
            }
            [i, j] if i == j => {
                // second differences want a larger step than eps^{1/3}
                let h = f64::EPSILON.powf(0.25) * (1.0 + x[*i].abs());
                p[*i] = x[*i] + h;
                let fp = self.eval(t, &p, w);
                p[*i] = x[*i] - h;
                let fm = self.eval(t, &p, w);
                (fp - 2.0 * self.eval(t, x, w) + fm) / (h * h)
            }
            [i, j] => {
                let hi = f64::EPSILON.powf(0.25) * (1.0 + x[*i].abs());
                let hj = f64::EPSILON.powf(0.25) * (1.0 + x[*j].abs());
                let mut corner = |si: f64, sj: f64| {
                    p[*i] = x[*i] + si * hi;
                    p[*j] = x[*j] + sj * hj;
                    self.eval(t, &p, w)
                };
                (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * hi * hj)
            }
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn rows_cols(self) -> (usize, usize) {
        match self {
            Shape::Scalar => (1, 1),
            Shape::Vector(n) => (n, 1),
            Shape::Matrix(r, c) => (r, c),
        }
    }
}

/// A coefficient `a`, `b`, `c`, `σ` or `ν`: component fields stored row-major
/// together with the declared bound `K_m` and smoothness order `m`.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    shape: Shape,
    comps: Vec<ScalarField>,
    bound: f64,
    smoothness: u32,
}

impl CoefficientField {
    pub fn new(shape: Shape, comps: Vec<ScalarField>) -> Self {
        assert_eq!(shape.len(), comps.len(), "component count must match shape");
        Self {
            shape,
            comps,
            bound: f64::INFINITY,
            smoothness: 2,
        }
    }

    pub fn scalar(f: ScalarField) -> Self {
        Self::new(Shape::Scalar, vec![f])
    }

    pub fn zeros(shape: Shape) -> Self {
        let comps = (0..shape.len()).map(|_| ScalarField::zero()).collect();
        let mut c = Self::new(shape, comps);
        c.bound = 0.0;
        c
    }

    pub fn constant(shape: Shape, values: &[f64]) -> Self {
        let comps = values.iter().map(|&v| ScalarField::constant(v)).collect();
        let mut c = Self::new(shape, comps);
        c.bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        c
    }

    /// `scale * I_n`.
    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = scale;
        }
        Self::constant(Shape::Matrix(n, n), &v)
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn with_smoothness(mut self, m: u32) -> Self {
        self.smoothness = m;
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    /// Component `(i, j)`; vectors and scalars use `j = 0`.
    pub fn entry(&self, i: usize, j: usize) -> &ScalarField {
        let (_, cols) = self.shape.rows_cols();
        &self.comps[i * cols + j]
    }

    pub fn is_deterministic(&self) -> bool {
        self.comps.iter().all(|c| !c.uses_path())
    }

    pub fn is_identically_zero(&self) -> bool {
        self.comps.iter().all(|c| c.as_constant() == Some(0.0))
    }

    #[inline]
    pub fn eval_into(&self, t: f64, x: &[f64], w: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.eval(t, x, w);
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], w: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.comps.len()];
        self.eval_into(t, x, w, &mut out);
        out
    }

    /// Scalar shortcut for `Shape::Scalar` fields.
    #[inline]
    pub fn eval_scalar(&self, t: f64, x: &[f64], w: f64) -> f64 {
        self.comps[0].eval(t, x, w)
    }

    /// `D^γ` of component `comp`; `None` when `|γ|` exceeds the declared
    /// smoothness order.
    pub fn deriv(&self, comp: usize, t: f64, x: &[f64], w: f64, gamma: &[usize]) -> Option<f64> {
        let order: usize = gamma.iter().sum();
        if order > self.smoothness as usize {
            return None;
        }
        Some(self.comps[comp].deriv(t, x, w, gamma))
    }

    /// Applies `f` to every component, keeping shape, bound and smoothness.
    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        Self {
            shape: self.shape,
            comps: self.comps.iter().map(f).collect(),
            bound: self.bound,
            smoothness: self.smoothness,
        }
    }
}
