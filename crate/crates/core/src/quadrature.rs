//! Graded trapezoid rules on parameter intervals.
//!
//! A non-periodic integral over `[a, b]` is pulled back to `[-pi, pi]`
//! through a map whose derivatives vanish to order `N0` at both ends, so the
//! uniform trapezoid sum converges like `N^{-N0 + 1/2}`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, LapError, Result};

/// `q(tau) = a + (b - a) I(tau) / I(pi)` with
/// `I(tau) = int_{-pi}^{tau} (1 - (s/pi)^2)^N0 ds`. `N0 = 0` is the affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedMap {
    pub a: f64,
    pub b: f64,
    pub n0: usize,
    /// Coefficients `C(N0, k) (-1)^k / (2k + 1)` of the antiderivative.
    coeffs: Vec<f64>,
    total: f64,
}

impl GradedMap {
    pub fn new(a: f64, b: f64, n0: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || !(b > a) {
            return Err(invalid(format!("graded map needs a < b, got [{a}, {b}]")));
        }
        if n0 > 40 {
            return Err(invalid(format!("grading order {n0} is too large")));
        }
        let mut coeffs = Vec::with_capacity(n0 + 1);
        let mut binom = 1.0;
        for k in 0..=n0 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            coeffs.push(sign * binom / (2 * k + 1) as f64);
            binom = binom * (n0 - k) as f64 / (k + 1) as f64;
        }
        let mut map = GradedMap {
            a,
            b,
            n0,
            coeffs,
            total: 1.0,
        };
        map.total = map.antiderivative(1.0);
        Ok(map)
    }

    /// `I(pi u)` for `u` in `[-1, 1]`.
    fn antiderivative(&self, u: f64) -> f64 {
        if u <= -0.5 {
            return self.near_left(1.0 + u);
        }
        // Odd part via Horner in u^2; the even constant term makes I(-pi) = 0.
        let u2 = u * u;
        let mut odd = 0.0;
        let mut at_one = 0.0;
        for c in self.coeffs.iter().rev() {
            odd = odd * u2 + c;
            at_one += c;
        }
        PI * (u * odd + at_one)
    }

    /// `I(pi (s - 1))` from the expansion of `s^N0 (2 - s)^N0` about the left
    /// end, accurate to full relative precision for small `s`.
    fn near_left(&self, s: f64) -> f64 {
        let n0 = self.n0;
        let mut sum = 0.0;
        let mut term_coeff = 2f64.powi(n0 as i32);
        let mut sk = s.powi(n0 as i32 + 1);
        for k in 0..=n0 {
            sum += term_coeff * sk / (n0 + k + 1) as f64;
            term_coeff *= -((n0 - k) as f64) / ((k + 1) as f64 * 2.0);
            sk *= s;
        }
        PI * sum
    }

    fn weight(&self, u: f64) -> f64 {
        (1.0 - u * u).max(0.0).powi(self.n0 as i32)
    }

    /// `(q(tau), q'(tau))`.
    pub fn eval(&self, tau: f64) -> Result<(f64, f64)> {
        if !(tau >= -PI - 1e-14 && tau <= PI + 1e-14) {
            return Err(invalid(format!("graded map parameter {tau} outside [-pi, pi]")));
        }
        let u = (tau / PI).clamp(-1.0, 1.0);
        let len = self.b - self.a;
        // Evaluate from the nearer endpoint to keep full relative accuracy.
        let value = if u <= 0.0 {
            self.a + len * self.antiderivative(u) / self.total
        } else {
            self.b - len * self.antiderivative(-u) / self.total
        };
        let deriv = len * self.weight(u) / self.total;
        Ok((value, deriv))
    }
}

pub fn graded_map_eval(map: &GradedMap, tau: f64) -> Result<(f64, f64)> {
    map.eval(tau)
}

/// Nodes `t_l = -pi + 2 pi l / N`, `l = 1..N`, their images under the map and
/// the weights `(2 pi / N) q'(t_l)`, normalized to sum to `b - a`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRule {
    pub params: Vec<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SegmentRule {
    pub fn new(map: &GradedMap, n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(invalid(format!("node count must be even and at least 4, got {n}")));
        }
        let h = 2.0 * PI / n as f64;
        let mut params = Vec::with_capacity(n);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for l in 1..=n {
            let t = if l == n { PI } else { -PI + h * l as f64 };
            let (x, dx) = map.eval(t)?;
            params.push(t);
            nodes.push(x);
            weights.push(h * dx);
        }
        // The trapezoid sum of q' misses b - a by O(N^{-N0-1}); rescaling keeps
        // constants exact without changing the convergence order.
        let total: f64 = weights.iter().sum();
        let scale = (map.b - map.a) / total;
        weights.iter_mut().for_each(|w| *w *= scale);
        Ok(SegmentRule { params, nodes, weights })
    }

    pub fn graded(a: f64, b: f64, n: usize, n0: usize) -> Result<Self> {
        Self::new(&GradedMap::new(a, b, n0)?, n)
    }

    /// Plain trapezoid rule for a periodic integrand on `[a, b]`.
    pub fn periodic(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::graded(a, b, n, 0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Values that can be accumulated by a quadrature sum.
pub trait Integrand: Sized {
    fn scaled(self, w: f64) -> Self;
    fn add_scaled(&mut self, w: f64, other: &Self);
}

impl Integrand for f64 {
    fn scaled(self, w: f64) -> Self {
        self * w
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += w * other;
    }
}

impl Integrand for Complex64 {
    fn scaled(self, w: f64) -> Self {
        self * w
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += other * w;
    }
}

impl<T: Integrand + Copy> Integrand for Vec<T> {
    fn scaled(mut self, w: f64) -> Self {
        self.iter_mut().for_each(|v| *v = v.scaled(w));
        self
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        assert_eq!(self.len(), other.len(), "integrand dimension changed between nodes");
        self.iter_mut().zip(other).for_each(|(a, b)| a.add_scaled(w, b));
    }
}

/// Applies a rule to `g(node_index, x)`. Nodes with zero weight are not
/// evaluated; the sum runs in node order.
pub fn apply_rule<V: Integrand>(rule: &SegmentRule, mut g: impl FnMut(usize, f64) -> Result<V>) -> Result<V> {
    let mut acc: Option<V> = None;
    let mut first_zero = None;
    for (l, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        if w == 0.0 {
            first_zero.get_or_insert(l);
            continue;
        }
        let v = g(l, x).map_err(|e| LapError::Callback {
            node: l,
            source: Box::new(e),
        })?;
        match acc.as_mut() {
            None => acc = Some(v.scaled(w)),
            Some(a) => a.add_scaled(w, &v),
        }
    }
    match acc {
        Some(a) => Ok(a),
        None => {
            // Degenerate rule: every weight vanished. Evaluate once to get a zero of the right shape.
            let l = first_zero.unwrap_or(0);
            let v = g(l, rule.nodes[l]).map_err(|e| LapError::Callback {
                node: l,
                source: Box::new(e),
            })?;
            Ok(v.scaled(0.0))
        }
    }
}

/// `(2 pi / N) sum_l g(q(t_l)) q'(t_l)` for the graded map of order `n0` on
/// `[a, b]`.
pub fn integrate_segment<V: Integrand>(
    g: impl FnMut(f64) -> Result<V>,
    a: f64,
    b: f64,
    n: usize,
    n0: usize,
) -> Result<V> {
    let rule = SegmentRule::graded(a, b, n, n0)?;
    let mut g = g;
    apply_rule(&rule, |_, x| g(x))
}
