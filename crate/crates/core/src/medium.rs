//! Refractive index and source descriptions on the unit cell, including the
//! built-in ring benchmark.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::expr::Expr;

/// Centre of the ring inclusion.
pub const RING_CENTER: [f64; 2] = [0.0, 0.5];
/// Radius below which the ring profile is flat.
pub const RING_INNER: f64 = 0.1;
/// Radius beyond which the ring profile vanishes.
pub const RING_OUTER: f64 = 0.3;

/// `C^8` cutoff: 1 on `t <= a`, 0 on `t >= b`, with the normalized
/// antiderivative of `(s - a)^4 (s - b)^4` in between.
pub fn smooth_cutoff(t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        return 1.0;
    }
    if t >= b {
        return 0.0;
    }
    let s = (t - a) / (b - a);
    // 630 times the integral of u^4 (1-u)^4 from 0 to s, which equals 1 at s = 1.
    let partial = |s: f64| {
        let s2 = s * s;
        630.0 * s2 * s2 * s * (1.0 / 5.0 + s * (-2.0 / 3.0 + s * (6.0 / 7.0 + s * (-0.5 + s / 9.0))))
    };
    // The kernel is symmetric about 1/2; evaluate from the nearer end.
    if s <= 0.5 {
        (1.0 - partial(s)).clamp(0.0, 1.0)
    } else {
        partial(1.0 - s).clamp(0.0, 1.0)
    }
}

fn ring_profile(x: [f64; 2]) -> f64 {
    let r = (x[0] - RING_CENTER[0]).hypot(x[1] - RING_CENTER[1]);
    smooth_cutoff(r, RING_INNER, RING_OUTER)
}

type RealFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
type ComplexFn = Arc<dyn Fn([f64; 2]) -> Complex64 + Send + Sync>;

/// Real refractive index `q` on the cell with a positive lower bound.
#[derive(Clone)]
pub struct MediumSpec {
    eval: RealFn,
    pub q_min: f64,
    pub label: String,
}

impl fmt::Debug for MediumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MediumSpec")
            .field("label", &self.label)
            .field("q_min", &self.q_min)
            .finish()
    }
}

impl MediumSpec {
    pub fn new(
        label: impl Into<String>,
        q_min: f64,
        eval: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(q_min > 0.0) {
            return Err(invalid(format!("q_min must be positive, got {q_min}")));
        }
        Ok(MediumSpec {
            eval: Arc::new(eval),
            q_min,
            label: label.into(),
        })
    }

    pub fn constant(q: f64) -> Result<Self> {
        Self::new(format!("constant {q}"), q, move |_| q)
    }

    /// `q = 1 + 8 zeta(|x - a0|)`: 9 inside radius 0.1, 1 outside radius 0.3.
    pub fn ring() -> Self {
        MediumSpec {
            eval: Arc::new(|x| 1.0 + 8.0 * ring_profile(x)),
            q_min: 1.0,
            label: "builtin-ring".into(),
        }
    }

    pub fn from_expr(src: &str, q_min: f64) -> Result<Self> {
        let e = Expr::parse(src)?;
        Self::new(format!("expr {src}"), q_min, move |x| e.eval(x[0], x[1]))
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        (self.eval)(x)
    }
}

/// Complex source term `f`, taken to vanish outside the unit cell.
#[derive(Clone)]
pub struct SourceSpec {
    eval: ComplexFn,
    support: Option<RealFn>,
    /// True when `f` takes only real values; enables conjugate reuse of cell
    /// solutions.
    pub real_valued: bool,
    pub label: String,
}

impl fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceSpec")
            .field("label", &self.label)
            .field("real_valued", &self.real_valued)
            .finish()
    }
}

impl SourceSpec {
    pub fn new(label: impl Into<String>, eval: impl Fn([f64; 2]) -> Complex64 + Send + Sync + 'static) -> Self {
        SourceSpec {
            eval: Arc::new(eval),
            support: None,
            real_valued: false,
            label: label.into(),
        }
    }

    pub fn real(label: impl Into<String>, eval: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        SourceSpec {
            eval: Arc::new(move |x| Complex64::new(eval(x), 0.0)),
            support: None,
            real_valued: true,
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        let mut s = Self::real("zero", |_| 0.0);
        s.support = Some(Arc::new(|_| 0.0));
        s
    }

    /// `f = 3 zeta(|x - a0|) cos(2 pi x1) sin(2 pi x2)`.
    pub fn ring() -> Self {
        use std::f64::consts::PI;
        let mut s = Self::real("builtin-ring", |x| {
            3.0 * ring_profile(x) * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin()
        });
        s.support = Some(Arc::new(|x| {
            let r = (x[0] - RING_CENTER[0]).hypot(x[1] - RING_CENTER[1]);
            if r < RING_OUTER {
                1.0
            } else {
                0.0
            }
        }));
        s
    }

    pub fn from_expr(src: &str) -> Result<Self> {
        let e = Expr::parse(src)?;
        Ok(Self::real(format!("expr {src}"), move |x| e.eval(x[0], x[1])))
    }

    /// `sum_k c_k f_k`.
    pub fn combination(terms: Vec<(Complex64, SourceSpec)>) -> Self {
        let real_valued = terms.iter().all(|(c, s)| c.im == 0.0 && s.real_valued);
        let label = terms
            .iter()
            .map(|(c, s)| format!("({c})*[{}]", s.label))
            .collect::<Vec<_>>()
            .join(" + ");
        SourceSpec {
            eval: Arc::new(move |x| terms.iter().map(|(c, s)| c * s.eval(x)).sum()),
            support: None,
            real_valued,
            label,
        }
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> Complex64 {
        (self.eval)(x)
    }

    /// Support indicator; falls back to `f(x) != 0` when no explicit support
    /// is known.
    pub fn in_support(&self, x: [f64; 2]) -> bool {
        match &self.support {
            Some(ind) => ind(x) > 0.0,
            None => self.eval(x) != Complex64::new(0.0, 0.0),
        }
    }

    /// True when `f` is identically zero according to its support indicator.
    pub fn is_trivially_zero(&self) -> bool {
        self.label == "zero"
    }
}
