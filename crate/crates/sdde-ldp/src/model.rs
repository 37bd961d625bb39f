//! Coefficient pairs `(b, sigma)` for the delay dynamics
//! `dX = b(t, X(t), X(t-tau)) dt + sqrt(eps) sigma(t, X(t), X(t-tau)) dW`,
//! together with the structural constants a model declares about itself.
//!
//! Coefficients are plain callables and must be pure: the same `(t, x, y)`
//! always produces the same output, and concurrent invocation is safe.
//! Three builtins ship with the crate; anything else can be written as
//! expression strings in a TOML model file.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::stats::norm;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

/// Writes `d` (drift) or `d*m` row-major (diffusion) values into `out`.
pub type CoeffFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Structural constants a model declares about its coefficients.
///
/// `q` is the polynomial growth order and `eta` the diffusion weight in the
/// one-sided monotonicity inequality; `k1..k6` bound, in order: the
/// coefficients at the origin, the monotonicity ratio, the drift growth
/// ratio, the coercivity ratio, the diffusion growth ratio, and the joint
/// superlinear bound. The empirical checker tests the declaration by
/// sampling; nothing here is trusted blindly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Declared {
    pub q: f64,
    pub eta: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
}

impl Declared {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 1.0) || !self.q.is_finite() {
            return Err(Error::ModelFile(format!("declared.q = {} must be finite and >= 1", self.q)));
        }
        if !(self.eta > 1.0) || !self.eta.is_finite() {
            return Err(Error::ModelFile(format!("declared.eta = {} must be finite and > 1", self.eta)));
        }
        for (name, v) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("k5", self.k5),
            ("k6", self.k6),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::ModelFile(format!("declared.{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct CoefficientModel {
    state_dim: usize,
    noise_dim: usize,
    delay: f64,
    drift: CoeffFn,
    diffusion: CoeffFn,
    pub declared: Declared,
    name: String,
}

impl fmt::Debug for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("delay", &self.delay)
            .field("declared", &self.declared)
            .finish()
    }
}

impl CoefficientModel {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        noise_dim: usize,
        delay: f64,
        drift: CoeffFn,
        diffusion: CoeffFn,
        declared: Declared,
    ) -> Result<Self> {
        if state_dim == 0 || noise_dim == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if !(delay > 0.0) || !delay.is_finite() {
            return Err(Error::InvalidArgument(format!("model delay tau = {delay} must be positive")));
        }
        declared.validate().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self { state_dim, noise_dim, delay, drift, diffusion, declared, name: name.into() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Drift `b(t, x, y)` written into `out` (`d` values).
    #[inline]
    pub fn drift_into(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.state_dim);
        debug_assert_eq!(out.len(), self.state_dim);
        (self.drift)(t, x, y, out);
    }

    /// Diffusion `sigma(t, x, y)` written into `out` (`d*m` values, row-major).
    #[inline]
    pub fn diffusion_into(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.state_dim * self.noise_dim);
        (self.diffusion)(t, x, y, out);
    }

    pub fn drift(&self, t: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.drift_into(t, x, y, &mut out);
        out
    }

    pub fn diffusion(&self, t: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim * self.noise_dim];
        self.diffusion_into(t, x, y, &mut out);
        out
    }

    /// Same model with the diffusion replaced (drift untouched).
    pub fn with_diffusion(&self, name_suffix: &str, diffusion: CoeffFn) -> Self {
        let mut m = self.clone();
        m.diffusion = diffusion;
        m.name = format!("{}{}", self.name, name_suffix);
        m
    }

    /// Same model with a different delay.
    pub fn with_delay(&self, delay: f64) -> Result<Self> {
        if !(delay > 0.0) || !delay.is_finite() {
            return Err(Error::InvalidArgument(format!("model delay tau = {delay} must be positive")));
        }
        let mut m = self.clone();
        m.delay = delay;
        Ok(m)
    }

    /// Look up a builtin by id: `cubic_const_sigma`, `cubic_quadratic_sigma`
    /// or `linear_ou`.
    pub fn builtin(id: &str, delay: f64) -> Result<Self> {
        match id {
            "cubic_const_sigma" => Self::cubic_const_sigma(delay),
            "cubic_quadratic_sigma" => Self::cubic_quadratic_sigma(delay),
            "linear_ou" => Self::linear_ou(delay),
            other => Err(Error::ModelFile(format!(
                "unknown builtin '{other}' (expected cubic_const_sigma, cubic_quadratic_sigma or linear_ou)"
            ))),
        }
    }

    /// Scalar cubic drift with unit additive noise:
    /// `b = x - x^3 + y`, `sigma = 1`.
    ///
    /// The declared constants hold with margin: the sampled monotonicity
    /// ratio tops out at `(1 + sqrt 2)/2 ~ 1.21` (the diffusion difference
    /// vanishes, so the `eta` term never contributes), and the coercivity
    /// ratio peaks at exactly 3 at the origin for `eta = 6`.
    pub fn cubic_const_sigma(delay: f64) -> Result<Self> {
        let drift: CoeffFn = Arc::new(|_t, x, y, out| {
            out[0] = x[0] - x[0] * x[0] * x[0] + y[0];
        });
        let diffusion: CoeffFn = Arc::new(|_t, _x, _y, out| {
            out[0] = 1.0;
        });
        let declared =
            Declared { q: 3.0, eta: 6.0, k1: 2.0, k2: 2.0, k3: 2.0, k4: 3.5, k5: 1.0, k6: 2.0 };
        Self::new("cubic_const_sigma", 1, 1, delay, drift, diffusion, declared)
    }

    /// Scalar cubic drift with quadratic noise:
    /// `b = x - x^3 + y`, `sigma = x^2 / 2`.
    ///
    /// Declared with the same `q = 3`, `eta = 6` as the constant-noise
    /// variant. The monotonicity condition with this `eta` is expected to
    /// fail under sampling: the quadratic diffusion difference grows like
    /// `eta |x|^2 |dx|^2` and overwhelms the cubic drift contraction once
    /// `eta > 3`, and the declared `k2 = 1` is already below the sampled
    /// drift-only ratio `~1.21`. The checker reports this instead of
    /// assuming the declaration.
    pub fn cubic_quadratic_sigma(delay: f64) -> Result<Self> {
        let drift: CoeffFn = Arc::new(|_t, x, y, out| {
            out[0] = x[0] - x[0] * x[0] * x[0] + y[0];
        });
        let diffusion: CoeffFn = Arc::new(|_t, x, _y, out| {
            out[0] = 0.5 * x[0] * x[0];
        });
        let declared =
            Declared { q: 3.0, eta: 6.0, k1: 1.0, k2: 1.0, k3: 2.0, k4: 2.0, k5: 1.0, k6: 2.0 };
        Self::new("cubic_quadratic_sigma", 1, 1, delay, drift, diffusion, declared)
    }

    /// Mean-reverting linear model with unit additive noise:
    /// `b = -x`, `sigma = 1`. Every Gaussian quantity has a closed form,
    /// which makes this the oracle model of the test suite.
    pub fn linear_ou(delay: f64) -> Result<Self> {
        let drift: CoeffFn = Arc::new(|_t, x, _y, out| {
            out[0] = -x[0];
        });
        let diffusion: CoeffFn = Arc::new(|_t, _x, _y, out| {
            out[0] = 1.0;
        });
        let declared =
            Declared { q: 1.0, eta: 2.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 1.0 };
        Self::new("linear_ou", 1, 1, delay, drift, diffusion, declared)
    }

    /// Load a model from a TOML file; see [`parse_model_str`].
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ModelFile(format!("cannot read {}: {e}", path.display())))?;
        parse_model_str(&text)
    }

    /// Euclidean norms `(|x|, |y|)` used by the diffusion truncation.
    pub fn arg_norms(x: &[f64], y: &[f64]) -> (f64, f64) {
        (norm(x), norm(y))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelFile {
    builtin: Option<String>,
    d: Option<usize>,
    m: Option<usize>,
    tau: Option<f64>,
    b: Option<Vec<String>>,
    sigma: Option<Vec<String>>,
    declared: Option<RawDeclared>,
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct RawDeclared {
    q: Option<f64>,
    eta: Option<f64>,
    k1: Option<f64>,
    k2: Option<f64>,
    k3: Option<f64>,
    k4: Option<f64>,
    k5: Option<f64>,
    k6: Option<f64>,
}

impl RawDeclared {
    fn require(self) -> Result<Declared> {
        let need = |field: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::ModelFile(format!("missing declared.{field}")))
        };
        Ok(Declared {
            q: need("q", self.q)?,
            eta: need("eta", self.eta)?,
            k1: need("k1", self.k1)?,
            k2: need("k2", self.k2)?,
            k3: need("k3", self.k3)?,
            k4: need("k4", self.k4)?,
            k5: need("k5", self.k5)?,
            k6: need("k6", self.k6)?,
        })
    }

    fn override_onto(self, mut base: Declared) -> Declared {
        if let Some(v) = self.q {
            base.q = v;
        }
        if let Some(v) = self.eta {
            base.eta = v;
        }
        if let Some(v) = self.k1 {
            base.k1 = v;
        }
        if let Some(v) = self.k2 {
            base.k2 = v;
        }
        if let Some(v) = self.k3 {
            base.k3 = v;
        }
        if let Some(v) = self.k4 {
            base.k4 = v;
        }
        if let Some(v) = self.k5 {
            base.k5 = v;
        }
        if let Some(v) = self.k6 {
            base.k6 = v;
        }
        base
    }
}

/// Parse a model definition.
///
/// Either `builtin = "<id>"` (with optional `tau` and `[declared]`
/// overrides), or a custom model with `d`, `m`, `tau`, `b` (array of `d`
/// expressions), `sigma` (array of `d*m` expressions, row-major) and a full
/// `[declared]` table.
pub fn parse_model_str(text: &str) -> Result<CoefficientModel> {
    let raw: RawModelFile =
        toml::from_str(text).map_err(|e| Error::ModelFile(format!("toml parse error: {e}")))?;
    let default_tau = 1.0;
    if let Some(id) = &raw.builtin {
        if raw.b.is_some() || raw.sigma.is_some() {
            return Err(Error::ModelFile("a builtin model cannot also define b/sigma".into()));
        }
        let mut model = CoefficientModel::builtin(id, raw.tau.unwrap_or(default_tau))?;
        if let Some(d) = raw.d {
            if d != model.state_dim() {
                return Err(Error::ModelFile(format!(
                    "builtin '{id}' has d = {}, file says {d}",
                    model.state_dim()
                )));
            }
        }
        if let Some(overrides) = raw.declared {
            model.declared = overrides.override_onto(model.declared);
            model.declared.validate()?;
        }
        return Ok(model);
    }

    let d = raw.d.ok_or_else(|| Error::ModelFile("missing d".into()))?;
    let m = raw.m.ok_or_else(|| Error::ModelFile("missing m".into()))?;
    let tau = raw.tau.unwrap_or(default_tau);
    let b_src = raw.b.ok_or_else(|| Error::ModelFile("missing b".into()))?;
    let sigma_src = raw.sigma.ok_or_else(|| Error::ModelFile("missing sigma".into()))?;
    if b_src.len() != d {
        return Err(Error::ModelFile(format!("b needs {d} expressions, got {}", b_src.len())));
    }
    if sigma_src.len() != d * m {
        return Err(Error::ModelFile(format!(
            "sigma needs {} expressions (d*m, row-major), got {}",
            d * m,
            sigma_src.len()
        )));
    }
    let declared = raw.declared.unwrap_or_default().require()?;
    declared.validate()?;

    let b_ast: Vec<Expr> = b_src.iter().map(|s| Expr::parse(s, d)).collect::<Result<_>>()?;
    let sigma_ast: Vec<Expr> = sigma_src.iter().map(|s| Expr::parse(s, d)).collect::<Result<_>>()?;

    let drift: CoeffFn = Arc::new(move |t, x, y, out| {
        for (o, e) in out.iter_mut().zip(&b_ast) {
            *o = e.eval(t, x, y);
        }
    });
    let diffusion: CoeffFn = Arc::new(move |t, x, y, out| {
        for (o, e) in out.iter_mut().zip(&sigma_ast) {
            *o = e.eval(t, x, y);
        }
    });
    CoefficientModel::new("custom", d, m, tau, drift, diffusion, declared)
}
