//! The integration contour: the unit circle with small circular detours,
//! bulging outward around right-propagating multipliers and inward around
//! left-propagating ones, traversed counterclockwise.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::cell::{CellOperator, DEFAULT_POLE_THRESHOLD};
use crate::dispersion::{Crossing, CrossingClass};
use crate::error::{invalid, LapError, Result};

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_MARGIN: f64 = 0.4;
const GEOMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetourSide {
    Outward,
    Inward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    /// `z = exp(i t)`, `t` in `[alpha_from, alpha_to]`.
    Arc { alpha_from: f64, alpha_to: f64 },
    /// `z = exp(i alpha_j) + delta_j exp(i t)`, `t` in `[theta_from, theta_to]`.
    Detour {
        alpha_j: f64,
        delta_j: f64,
        theta_from: f64,
        theta_to: f64,
        side: DetourSide,
    },
}

/// One piece of the contour. `orientation` is `+1` when increasing the
/// parameter follows the counterclockwise traversal and `-1` otherwise
/// (inward detours run clockwise about their centre).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSegment {
    pub kind: SegmentKind,
    pub orientation: f64,
}

/// A point of a segment with the logarithm continued along the segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint {
    pub z: Complex64,
    pub log_z: Complex64,
    /// `dz/dt` for the segment parameter.
    pub dz: Complex64,
}

impl ContourSegment {
    pub fn parameter_range(&self) -> (f64, f64) {
        match self.kind {
            SegmentKind::Arc { alpha_from, alpha_to } => (alpha_from, alpha_to),
            SegmentKind::Detour {
                theta_from, theta_to, ..
            } => (theta_from, theta_to),
        }
    }

    pub fn point(&self, t: f64) -> ContourPoint {
        match self.kind {
            SegmentKind::Arc { .. } => {
                let z = Complex64::from_polar(1.0, t);
                ContourPoint {
                    z,
                    log_z: Complex64::new(0.0, t),
                    dz: Complex64::i() * z,
                }
            }
            SegmentKind::Detour { alpha_j, delta_j, .. } => {
                let c = Complex64::from_polar(1.0, alpha_j);
                let offset = Complex64::from_polar(delta_j, t);
                let z = c + offset;
                // z = c (1 + delta e^{i(t - alpha_j)}) and |delta| < 1.
                let log_z = Complex64::new(0.0, alpha_j)
                    + (Complex64::new(1.0, 0.0) + Complex64::from_polar(delta_j, t - alpha_j)).ln();
                ContourPoint {
                    z,
                    log_z,
                    dz: Complex64::i() * offset,
                }
            }
        }
    }

    /// First and last point in traversal order.
    pub fn endpoints(&self) -> (Complex64, Complex64) {
        let (a, b) = self.parameter_range();
        let (pa, pb) = (self.point(a).z, self.point(b).z);
        if self.orientation > 0.0 {
            (pa, pb)
        } else {
            (pb, pa)
        }
    }

    pub fn is_detour(&self) -> bool {
        matches!(self.kind, SegmentKind::Detour { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub segments: Vec<ContourSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaPolicy {
    pub default_delta: f64,
    pub margin: f64,
}

impl Default for DeltaPolicy {
    fn default() -> Self {
        DeltaPolicy {
            default_delta: DEFAULT_DELTA,
            margin: DEFAULT_MARGIN,
        }
    }
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Detour parameter interval around `e^{i alpha}` with radius `delta`. The
/// candidate branches of `alpha +- arccos(-delta/2)` are tried and the one
/// whose midpoint satisfies the side condition is kept.
fn detour_for(alpha: f64, delta: f64, side: DetourSide) -> Result<ContourSegment> {
    let phi = (-delta / 2.0).acos();
    let candidates = [
        (alpha - phi, alpha + phi, 1.0),
        (alpha + phi, alpha - phi + 2.0 * PI, -1.0),
    ];
    for (from, to, orientation) in candidates {
        let seg = ContourSegment {
            kind: SegmentKind::Detour {
                alpha_j: alpha,
                delta_j: delta,
                theta_from: from,
                theta_to: to,
                side,
            },
            orientation,
        };
        let mid = seg.point(0.5 * (from + to)).z.norm();
        let ok = match side {
            DetourSide::Outward => mid > 1.0,
            DetourSide::Inward => mid < 1.0,
        };
        // Traversal starts at the point with angle alpha - arccos(1 - delta^2/2).
        let (start, _) = seg.endpoints();
        let alpha_minus = alpha - (1.0 - delta * delta / 2.0).acos();
        if ok && angular_distance(start.arg(), alpha_minus) < 1e-9 {
            return Ok(seg);
        }
    }
    Err(LapError::ContourConstruction(format!(
        "no detour branch satisfies the side condition at alpha = {alpha}"
    )))
}

/// Builds the contour from classified crossings. Without crossings the
/// contour is the full unit circle.
pub fn build_contour(crossings: &[Crossing], policy: DeltaPolicy) -> Result<Contour> {
    if !(policy.default_delta > 0.0 && policy.default_delta < 1.0) {
        return Err(invalid(format!(
            "detour radius must be in (0, 1), got {}",
            policy.default_delta
        )));
    }
    if !(policy.margin > 0.0 && policy.margin < 0.5) {
        return Err(invalid(format!(
            "margin factor must be in (0, 1/2), got {}",
            policy.margin
        )));
    }
    if crossings.is_empty() {
        return Ok(Contour {
            segments: vec![ContourSegment {
                kind: SegmentKind::Arc {
                    alpha_from: -PI,
                    alpha_to: PI,
                },
                orientation: 1.0,
            }],
        });
    }
    let mut sorted: Vec<&Crossing> = crossings.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    for c in &sorted {
        if c.class == CrossingClass::Sus {
            return Err(LapError::AssumptionViolated(format!(
                "stationary crossing at alpha = {}",
                c.alpha
            )));
        }
    }
    for w in sorted.windows(2) {
        if angular_distance(w[0].alpha, w[1].alpha) < 1e-12 {
            return Err(LapError::ContourConstruction(format!(
                "repeated crossing angle {}",
                w[0].alpha
            )));
        }
    }
    let p = sorted.len();
    let deltas: Vec<f64> = (0..p)
        .map(|j| {
            let nearest = (0..p)
                .filter(|&i| i != j)
                .map(|i| angular_distance(sorted[i].alpha, sorted[j].alpha))
                .fold(2.0 * PI, f64::min);
            policy.default_delta.min(policy.margin * nearest)
        })
        .collect();
    for i in 0..p {
        for j in i + 1..p {
            let ci = Complex64::from_polar(1.0, sorted[i].alpha);
            let cj = Complex64::from_polar(1.0, sorted[j].alpha);
            if (ci - cj).norm() <= deltas[i] + deltas[j] {
                return Err(LapError::ContourConstruction(format!(
                    "detour balls at alpha = {} and {} overlap",
                    sorted[i].alpha, sorted[j].alpha
                )));
            }
        }
    }
    let half_width: Vec<f64> = deltas.iter().map(|d| (1.0 - d * d / 2.0).acos()).collect();
    let mut segments = Vec::with_capacity(2 * p);
    for j in 0..p {
        let side = if sorted[j].class == CrossingClass::Rus {
            DetourSide::Outward
        } else {
            DetourSide::Inward
        };
        segments.push(detour_for(sorted[j].alpha, deltas[j], side)?);
        let from = sorted[j].alpha + half_width[j];
        let to = if j + 1 < p {
            sorted[j + 1].alpha - half_width[j + 1]
        } else {
            sorted[0].alpha - half_width[0] + 2.0 * PI
        };
        if !(to > from) {
            return Err(LapError::ContourConstruction(format!(
                "arc between detours at {} is empty",
                sorted[j].alpha
            )));
        }
        segments.push(ContourSegment {
            kind: SegmentKind::Arc {
                alpha_from: from,
                alpha_to: to,
            },
            orientation: 1.0,
        });
    }
    Ok(Contour { segments })
}

impl Contour {
    pub fn is_full_circle(&self) -> bool {
        self.segments.len() == 1 && !self.segments[0].is_detour()
    }

    pub fn detours(&self) -> impl Iterator<Item = &ContourSegment> {
        self.segments.iter().filter(|s| s.is_detour())
    }

    /// `per_segment + 1` points per segment in traversal order.
    pub fn sample(&self, per_segment: usize) -> Vec<(Complex64, usize)> {
        let mut out = Vec::new();
        for (id, seg) in self.segments.iter().enumerate() {
            let (a, b) = seg.parameter_range();
            for k in 0..=per_segment {
                let s = k as f64 / per_segment as f64;
                let s = if seg.orientation > 0.0 { s } else { 1.0 - s };
                out.push((seg.point(a + (b - a) * s).z, id));
            }
        }
        out
    }

    /// Winding number of the sampled polyline around the origin.
    pub fn winding_number(&self, per_segment: usize) -> f64 {
        let pts = self.sample(per_segment);
        let mut total = 0.0;
        for k in 0..pts.len() {
            let a = pts[k].0;
            let b = pts[(k + 1) % pts.len()].0;
            total += (b / a).arg();
        }
        total / (2.0 * PI)
    }

    pub fn to_csv(&self, per_segment: usize) -> String {
        let mut out = String::from("re_z,im_z,segment_id\n");
        for (z, id) in self.sample(per_segment) {
            let _ = writeln!(out, "{:.16e},{:.16e},{id}", z.re, z.im);
        }
        out
    }

    /// Plain-text description for output headers.
    pub fn describe(&self) -> String {
        self.segments
            .iter()
            .map(|s| match s.kind {
                SegmentKind::Arc { alpha_from, alpha_to } => format!("arc[{alpha_from:.6},{alpha_to:.6}]"),
                SegmentKind::Detour {
                    alpha_j, delta_j, side, ..
                } => {
                    format!(
                        "detour[{alpha_j:.6},{delta_j:.4},{}]",
                        if side == DetourSide::Outward { "out" } else { "in" }
                    )
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} = {} (worst {:.6e})",
                c.name,
                if c.passed { "pass" } else { "fail" },
                c.worst
            );
        }
        out
    }
}

/// Geometric checks only.
pub fn validate_geometry(contour: &Contour) -> ValidationReport {
    let mut checks = Vec::new();
    let n = contour.segments.len();
    let mut worst_gap: f64 = 0.0;
    for k in 0..n {
        let (_, end) = contour.segments[k].endpoints();
        let (start, _) = contour.segments[(k + 1) % n].endpoints();
        worst_gap = worst_gap.max((end - start).norm());
    }
    checks.push(Check {
        name: "closure".into(),
        passed: worst_gap <= GEOMETRY_TOL,
        worst: worst_gap,
    });

    let w = contour.winding_number(64);
    checks.push(Check {
        name: "orientation".into(),
        passed: (w - 1.0).abs() < 1e-6,
        worst: w,
    });

    let mut worst_circle: f64 = 0.0;
    let mut worst_side = f64::INFINITY;
    let mut order_ok = true;
    for seg in contour.detours() {
        if let SegmentKind::Detour {
            theta_from,
            theta_to,
            side,
            ..
        } = seg.kind
        {
            let (a, b) = seg.endpoints();
            worst_circle = worst_circle.max((a.norm() - 1.0).abs()).max((b.norm() - 1.0).abs());
            let mid = seg.point(0.5 * (theta_from + theta_to)).z.norm();
            let margin = match side {
                DetourSide::Outward => mid - 1.0,
                DetourSide::Inward => 1.0 - mid,
            };
            worst_side = worst_side.min(margin);
            order_ok &= theta_from < theta_to && theta_to < theta_from + 2.0 * PI;
        }
    }
    for seg in &contour.segments {
        if let SegmentKind::Arc { alpha_from, alpha_to } = seg.kind {
            order_ok &= alpha_from < alpha_to;
        }
    }
    checks.push(Check {
        name: "endpoints_on_circle".into(),
        passed: worst_circle <= GEOMETRY_TOL,
        worst: worst_circle,
    });
    let worst_side = if worst_side.is_finite() { worst_side } else { 0.0 };
    checks.push(Check {
        name: "side_condition".into(),
        passed: worst_side >= 0.0 && (worst_side > 0.0 || contour.detours().count() == 0),
        worst: worst_side,
    });
    checks.push(Check {
        name: "parameter_order".into(),
        passed: order_ok,
        worst: if order_ok { 0.0 } else { 1.0 },
    });
    ValidationReport { checks }
}

/// Geometric checks plus the singularity indicator over `n_probe` contour
/// points spread over the segments in proportion to their parameter length.
pub fn validate_contour(contour: &Contour, op: &CellOperator, n_probe: usize, threshold: f64) -> ValidationReport {
    let mut report = validate_geometry(contour);
    let lengths: Vec<f64> = contour
        .segments
        .iter()
        .map(|s| {
            let (a, b) = s.parameter_range();
            b - a
        })
        .collect();
    let total: f64 = lengths.iter().sum();
    let mut probes = Vec::new();
    for (seg, len) in contour.segments.iter().zip(&lengths) {
        let k = ((n_probe as f64 * len / total).round() as usize).max(1);
        let (a, b) = seg.parameter_range();
        for i in 0..k {
            let t = a + (b - a) * (i as f64 + 0.5) / k as f64;
            probes.push(seg.point(t).log_z);
        }
    }
    use rayon::prelude::*;
    let floor = probes
        .par_iter()
        .map(|l| op.indicator_log(*l))
        .reduce(|| f64::INFINITY, f64::min);
    report.checks.push(Check {
        name: "indicator_floor".into(),
        passed: floor >= threshold,
        worst: floor,
    });
    report
}

pub fn validate_contour_default(contour: &Contour, op: &CellOperator) -> ValidationReport {
    validate_contour(contour, op, 200, DEFAULT_POLE_THRESHOLD)
}

/// Rejects detour balls that contain a second near-singular point. Near the
/// multiplier at the centre, the indicator grows roughly linearly with the
/// distance; probes far below that trend reveal another multiplier.
pub fn check_detour_balls(contour: &Contour, op: &CellOperator) -> Result<()> {
    for seg in contour.detours() {
        if let SegmentKind::Detour { alpha_j, delta_j, .. } = seg.kind {
            let c = Complex64::from_polar(1.0, alpha_j);
            let ring = |r: f64| -> Vec<(Complex64, f64)> {
                (0..8)
                    .map(|k| {
                        let z = c + Complex64::from_polar(r, 2.0 * PI * k as f64 / 8.0 + 0.3);
                        (z, op.indicator_log(z.ln()))
                    })
                    .collect()
            };
            let edge = ring(delta_j);
            let slope = edge.iter().map(|(_, v)| v / delta_j).fold(f64::INFINITY, f64::min);
            for r in [0.35 * delta_j, 0.7 * delta_j] {
                for (z, v) in ring(r) {
                    if v < 0.05 * slope * r {
                        return Err(LapError::ContourConstruction(format!(
                            "detour ball at alpha = {alpha_j} (radius {delta_j}) contains another near-singular point near z = {z} (indicator {v:.3e})"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crossing(alpha: f64, class: CrossingClass) -> Crossing {
        let slope = if class == CrossingClass::Rus { 1.0 } else { -1.0 };
        Crossing {
            alpha,
            band: 1,
            slope,
            slope_fd: slope,
            class,
            z: Complex64::from_polar(1.0, alpha),
        }
    }

    fn pair() -> Vec<Crossing> {
        vec![
            crossing(0.9576, CrossingClass::Rus),
            crossing(-0.9576, CrossingClass::Lus),
        ]
    }

    #[test]
    fn empty_gives_full_circle() {
        let c = build_contour(&[], DeltaPolicy::default()).unwrap();
        assert!(c.is_full_circle());
        assert!(validate_geometry(&c).passed());
        assert!((c.winding_number(200) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_crossings_geometry() {
        let c = build_contour(&pair(), DeltaPolicy::default()).unwrap();
        assert_eq!(c.segments.len(), 4);
        assert_eq!(c.detours().count(), 2);
        let report = validate_geometry(&c);
        assert!(report.passed(), "{}", report.to_text());
        let hw = (1.0f64 - 0.005).acos();
        assert!((hw - 0.1000417).abs() < 1e-7);
        for seg in &c.segments {
            if let SegmentKind::Arc { alpha_from, alpha_to } = seg.kind {
                let ok_from = [0.9576 + hw, -0.9576 + hw]
                    .iter()
                    .any(|a| (a - alpha_from).abs() < 1e-12);
                let ok_to = [0.9576 - hw, -0.9576 - hw + 2.0 * PI]
                    .iter()
                    .any(|a| (a - alpha_to).abs() < 1e-12);
                assert!(ok_from && ok_to);
            }
            if let SegmentKind::Detour { alpha_j, side, .. } = seg.kind {
                assert_eq!(
                    side,
                    if alpha_j > 0.0 {
                        DetourSide::Outward
                    } else {
                        DetourSide::Inward
                    }
                );
                let (a, b) = seg.endpoints();
                assert!((a.arg() - (alpha_j - hw)).abs() < 1e-10);
                assert!((b.arg() - (alpha_j + hw)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn flipped_detour_fails_side_check() {
        let mut c = build_contour(&pair(), DeltaPolicy::default()).unwrap();
        for seg in c.segments.iter_mut() {
            if let SegmentKind::Detour { ref mut side, .. } = seg.kind {
                *side = if *side == DetourSide::Outward {
                    DetourSide::Inward
                } else {
                    DetourSide::Outward
                };
            }
        }
        let report = validate_geometry(&c);
        assert!(!report.check("side_condition").unwrap().passed);
    }

    #[test]
    fn close_crossings_shrink_delta() {
        let c = build_contour(
            &[crossing(0.1, CrossingClass::Rus), crossing(0.2, CrossingClass::Lus)],
            DeltaPolicy::default(),
        )
        .unwrap();
        for seg in c.detours() {
            if let SegmentKind::Detour { delta_j, .. } = seg.kind {
                assert!((delta_j - 0.04).abs() < 1e-12);
            }
        }
        assert!(validate_geometry(&c).passed());
    }

    #[test]
    fn stationary_crossing_rejected() {
        let err = build_contour(&[crossing(0.3, CrossingClass::Sus)], DeltaPolicy::default()).unwrap_err();
        assert!(matches!(err, LapError::AssumptionViolated(_)));
    }

    #[test]
    fn detour_logarithm_is_continuous() {
        // A detour across the negative real axis keeps a continuous log.
        let seg = detour_for(PI, 0.1, DetourSide::Outward).unwrap();
        let (a, b) = seg.parameter_range();
        let mut prev = seg.point(a).log_z;
        for k in 1..=100 {
            let p = seg.point(a + (b - a) * k as f64 / 100.0);
            assert!((p.log_z.exp() - p.z).norm() < 1e-14);
            assert!((p.log_z - prev).norm() < 0.05);
            prev = p.log_z;
        }
    }
}
