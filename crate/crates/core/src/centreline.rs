//! Smooth, arc-length-parameterized centrelines from voxel paths.

use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{VoxelIndex, WorldPoint};

/// Consecutive points closer than this (mm) are treated as duplicates.
const DUPLICATE_EPS: f64 = 1e-9;

/// Voxel path to world points with one pass of five-point smoothing.
///
/// The window shrinks symmetrically near the ends (three points one step in,
/// none at the endpoints), so endpoints are returned unchanged.
pub fn recentre(path: &[VoxelIndex], spacing: [f64; 3], origin: [f64; 3]) -> Result<Vec<WorldPoint>> {
    if path.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: path.len(),
        });
    }
    let world: Vec<WorldPoint> = path
        .iter()
        .map(|v| {
            WorldPoint::new(
                origin[0] + v[0] as f64 * spacing[0],
                origin[1] + v[1] as f64 * spacing[1],
                origin[2] + v[2] as f64 * spacing[2],
            )
        })
        .collect();
    Ok(smooth5(&world))
}

pub(crate) fn smooth5(p: &[WorldPoint]) -> Vec<WorldPoint> {
    let n = p.len();
    (0..n)
        .map(|i| {
            let half = i.min(n - 1 - i).min(2);
            let window = &p[i - half..=i + half];
            let sum = window.iter().fold(Vector3::zeros(), |acc, q| acc + q.coords);
            WorldPoint::from(sum / window.len() as f64)
        })
        .collect()
}

/// Piecewise cubic curve in chord-length parameterization.
///
/// Segment `i` covers `[knots[i], knots[i+1]]`; its polynomial in the local
/// variable `u = t - knots[i]` is `c0 + c1 u + c2 u² + c3 u³`.
#[derive(Debug, Clone)]
pub struct SplineCurve {
    control_points: Vec<WorldPoint>,
    knots: Vec<f64>,
    coeffs: Vec<[Vector3<f64>; 4]>,
    low_order: bool,
}

impl SplineCurve {
    pub fn control_points(&self) -> &[WorldPoint] {
        &self.control_points
    }
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
    /// True when fewer than four distinct points forced a linear or quadratic fit.
    pub fn is_low_order(&self) -> bool {
        self.low_order
    }
    /// Parameter value of the final knot.
    pub fn length_param(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn segment(&self, t: f64) -> (usize, f64) {
        let last = self.coeffs.len() - 1;
        let i = match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            p => (p - 1).min(last),
        };
        (i, t - self.knots[i])
    }

    pub fn point(&self, t: f64) -> WorldPoint {
        let (i, u) = self.segment(t);
        let c = &self.coeffs[i];
        WorldPoint::from(c[0] + u * (c[1] + u * (c[2] + u * c[3])))
    }

    pub fn derivative(&self, t: f64) -> Vector3<f64> {
        let (i, u) = self.segment(t);
        let c = &self.coeffs[i];
        c[1] + u * (2.0 * c[2] + 3.0 * u * c[3])
    }

    pub fn second_derivative(&self, t: f64) -> Vector3<f64> {
        let (i, u) = self.segment(t);
        let c = &self.coeffs[i];
        2.0 * c[2] + 6.0 * u * c[3]
    }

    /// Length of the curve between parameters `t0 <= t1`.
    pub fn arc_length(&self, t0: f64, t1: f64) -> f64 {
        let mut total = 0.0;
        let mut a = t0;
        for &k in &self.knots[1..] {
            if k <= a {
                continue;
            }
            let b = k.min(t1);
            if b > a {
                let (i, _) = self.segment(0.5 * (a + b));
                total += adaptive_gauss(&|t| self.speed_in(i, t), a, b, 1e-10 * (b - a).max(1e-12), 0);
            }
            a = b;
            if a >= t1 {
                break;
            }
        }
        total
    }

    fn speed_in(&self, i: usize, t: f64) -> f64 {
        let u = t - self.knots[i];
        let c = &self.coeffs[i];
        (c[1] + u * (2.0 * c[2] + 3.0 * u * c[3])).norm()
    }
}

const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

fn gauss5(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    GL_NODES.iter().zip(GL_WEIGHTS).map(|(&x, w)| w * f(m + h * x)).sum::<f64>() * h
}

fn adaptive_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let whole = gauss5(f, a, b);
    let m = 0.5 * (a + b);
    let halves = gauss5(f, a, m) + gauss5(f, m, b);
    if (whole - halves).abs() <= tol || depth >= 30 {
        halves
    } else {
        adaptive_gauss(f, a, m, 0.5 * tol, depth + 1) + adaptive_gauss(f, m, b, 0.5 * tol, depth + 1)
    }
}

/// Natural cubic spline through `points` with cumulative chord-length knots.
///
/// Consecutive duplicates are collapsed with a warning. Two or three distinct
/// points give a line or a quadratic and the curve is flagged low-order.
pub fn fit_spline(points: &[WorldPoint]) -> Result<SplineCurve> {
    let mut pts: Vec<WorldPoint> = Vec::with_capacity(points.len());
    for p in points {
        if pts.last().is_some_and(|q| (p - q).norm() < DUPLICATE_EPS) {
            log::warn!("collapsing duplicate centreline point {:?}", p.coords.as_slice());
            continue;
        }
        pts.push(*p);
    }
    let n = pts.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let mut knots = Vec::with_capacity(n);
    knots.push(0.0);
    for w in pts.windows(2) {
        knots.push(knots.last().unwrap() + (w[1] - w[0]).norm());
    }
    let y: Vec<Vector3<f64>> = pts.iter().map(|p| p.coords).collect();

    let coeffs = match n {
        2 => {
            let slope = (y[1] - y[0]) / knots[1];
            vec![[y[0], slope, Vector3::zeros(), Vector3::zeros()]]
        }
        3 => {
            // quadratic through three points, re-expanded about each knot
            let (t0, t1, t2) = (knots[0], knots[1], knots[2]);
            let d01 = (y[1] - y[0]) / (t1 - t0);
            let d12 = (y[2] - y[1]) / (t2 - t1);
            let a2 = (d12 - d01) / (t2 - t0);
            let slope_at = |t: f64| d01 + a2 * (2.0 * t - t0 - t1);
            (0..2)
                .map(|i| [y[i], slope_at(knots[i]), a2, Vector3::zeros()])
                .collect()
        }
        _ => natural_cubic(&knots, &y),
    };
    if n < 4 {
        log::warn!("only {n} distinct centreline points; using a degree {} fit", n - 1);
    }
    Ok(SplineCurve {
        control_points: pts,
        knots,
        coeffs,
        low_order: n < 4,
    })
}

fn natural_cubic(t: &[f64], y: &[Vector3<f64>]) -> Vec<[Vector3<f64>; 4]> {
    let n = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // second derivatives at interior knots by the Thomas algorithm
    let m_int = n - 2;
    let mut diag = vec![0.0; m_int];
    let mut rhs = vec![Vector3::zeros(); m_int];
    let mut upper = vec![0.0; m_int];
    for k in 0..m_int {
        let i = k + 1;
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        upper[k] = h[i];
        rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    for k in 1..m_int {
        let w = h[k] / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        let prev = rhs[k - 1];
        rhs[k] -= w * prev;
    }
    let mut m = vec![Vector3::zeros(); n];
    for k in (0..m_int).rev() {
        let next = if k + 1 < m_int { m[k + 2] } else { Vector3::zeros() };
        m[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
    }
    (0..n - 1)
        .map(|i| {
            let hi = h[i];
            [
                y[i],
                (y[i + 1] - y[i]) / hi - hi * (2.0 * m[i] + m[i + 1]) / 6.0,
                m[i] / 2.0,
                (m[i + 1] - m[i]) / (6.0 * hi),
            ]
        })
        .collect()
}

/// A point on the sampled centreline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentrelineSample {
    /// Spline parameter (chord length, mm).
    pub param: f64,
    pub position: WorldPoint,
    pub tangent: Vector3<f64>,
    pub arc_length_from_carina: f64,
}

/// Sample every `step` mm of parameter, always including the final knot.
pub fn sample_curve(c: &SplineCurve, step: f64) -> Result<Vec<CentrelineSample>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("sampling step must be positive, got {step}")));
    }
    let end = c.length_param();
    let mut params = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * step;
        if t >= end - 1e-9 * end.max(1.0) {
            break;
        }
        params.push(t);
        k += 1;
    }
    params.push(end);

    let mut out = Vec::with_capacity(params.len());
    let mut s = 0.0;
    let mut prev = 0.0;
    for &t in &params {
        let d = c.derivative(t);
        let norm = d.norm();
        if norm < 1e-12 {
            return Err(Error::ZeroDerivative(t));
        }
        s += c.arc_length(prev, t);
        prev = t;
        out.push(CentrelineSample {
            param: t,
            position: c.point(t),
            tangent: d / norm,
            arc_length_from_carina: s,
        });
    }
    Ok(out)
}

/// Debug dump of centreline samples.
pub fn write_samples_csv<W: Write>(w: W, airway_id: &str, samples: &[CentrelineSample]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let map = |e: csv::Error| Error::Config(format!("writing centreline csv: {e}"));
    wtr.write_record(["airway_id", "param_mm", "x", "y", "z", "tx", "ty", "tz", "arclen_mm"])
        .map_err(map)?;
    for s in samples {
        wtr.write_record([
            airway_id.to_string(),
            s.param.to_string(),
            s.position.x.to_string(),
            s.position.y.to_string(),
            s.position.z.to_string(),
            s.tangent.x.to_string(),
            s.tangent.y.to_string(),
            s.tangent.z.to_string(),
            s.arc_length_from_carina.to_string(),
        ])
        .map_err(map)?;
    }
    wtr.flush().map_err(|e| Error::Config(format!("writing centreline csv: {e}")))?;
    Ok(())
}

/// Sum of turning angles between consecutive segments.
pub fn turning_angle_sum(p: &[WorldPoint]) -> f64 {
    p.windows(3)
        .filter_map(|w| {
            let a = w[1] - w[0];
            let b = w[2] - w[1];
            let (na, nb) = (a.norm(), b.norm());
            (na > 0.0 && nb > 0.0).then(|| (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos())
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn line(n: usize, dir: Vector3<f64>) -> Vec<WorldPoint> {
        (0..n).map(|i| WorldPoint::from(dir * i as f64)).collect()
    }

    #[test]
    fn collinear_path_is_unchanged() {
        let path: Vec<VoxelIndex> = (0..9).map(|i| [i, 2 * i, 3]).collect();
        let out = recentre(&path, [0.5, 0.5, 1.0], [1.0, 2.0, 3.0]).unwrap();
        for (i, p) in out.iter().enumerate() {
            assert_relative_eq!(p.x, 1.0 + 0.5 * i as f64, epsilon = 1e-12);
            assert_relative_eq!(p.y, 2.0 + i as f64, epsilon = 1e-12);
            assert_relative_eq!(p.z, 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zigzag_is_pulled_to_its_axis() {
        let path: Vec<VoxelIndex> = (0..12).map(|i| [i % 2, 0, i]).collect();
        let out = recentre(&path, [1.0; 3], [0.0; 3]).unwrap();
        assert_eq!(out[0], WorldPoint::new(0.0, 0.0, 0.0));
        assert_eq!(out[11], WorldPoint::new(1.0, 0.0, 11.0));
        // oracle: explicit window means
        let raw: Vec<f64> = (0..12).map(|i| (i % 2) as f64).collect();
        for i in 0..12usize {
            let h = i.min(11 - i).min(2);
            let want = raw[i - h..=i + h].iter().sum::<f64>() / (2 * h + 1) as f64;
            assert_relative_eq!(out[i].x, want, epsilon = 1e-12);
            assert!((out[i].x - 0.5).abs() <= 0.5);
        }
        assert!(recentre(&path[..1], [1.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn three_point_path_smooths_only_the_middle() {
        let out = recentre(&[[0, 0, 0], [3, 0, 1], [0, 0, 2]], [1.0; 3], [0.0; 3]).unwrap();
        assert_eq!(out[0], WorldPoint::new(0.0, 0.0, 0.0));
        assert_relative_eq!(out[1].x, 1.0);
        assert_eq!(out[2], WorldPoint::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn straight_line_spline_and_samples() {
        let c = fit_spline(&line(11, Vector3::new(0.0, 0.6, 0.8))).unwrap();
        assert!(!c.is_low_order());
        assert_relative_eq!(c.length_param(), 10.0, epsilon = 1e-12);
        for k in 0..=100 {
            let t = k as f64 * 0.1;
            assert!(c.second_derivative(t).norm() < 1e-9);
        }
        let s = sample_curve(&c, 0.25).unwrap();
        assert_eq!(s.len(), 41);
        for x in &s {
            assert_relative_eq!(x.arc_length_from_carina, x.param, epsilon = 1e-9);
            assert_relative_eq!(x.tangent.norm(), 1.0, epsilon = 1e-12);
        }
        let s = sample_curve(&c, 25.0).unwrap();
        assert_eq!(s.len(), 2);
        assert_relative_eq!(s[1].arc_length_from_carina, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn spline_interpolates_knots() {
        let pts: Vec<WorldPoint> = (0..7)
            .map(|i| {
                let t = i as f64;
                WorldPoint::new(t, (t * 0.7).sin() * 3.0, t * t * 0.1)
            })
            .collect();
        let c = fit_spline(&pts).unwrap();
        for (p, &k) in pts.iter().zip(c.knots()) {
            assert!((c.point(k) - p).norm() < 1e-10);
        }
        // C2 at interior knots
        for &k in &c.knots()[1..6] {
            let l = c.second_derivative(k - 1e-9);
            let r = c.second_derivative(k + 1e-9);
            assert!((l - r).norm() < 1e-6);
        }
    }

    fn circle(n: usize, r: f64, span: f64) -> Vec<WorldPoint> {
        (0..n)
            .map(|i| {
                let a = span * i as f64 / (n - 1) as f64;
                WorldPoint::new(r * a.cos(), r * a.sin(), 0.0)
            })
            .collect()
    }

    #[test]
    fn circle_spline_stays_on_circle() {
        // 32 points around the full circle, ends not joined
        let pts = circle(32, 20.0, 2.0 * PI * 31.0 / 32.0);
        let c = fit_spline(&pts).unwrap();
        let end = c.length_param();
        let mut worst: f64 = 0.0;
        for k in 0..=20_000 {
            let p = c.point(end * k as f64 / 20_000.0);
            worst = worst.max((p.coords.norm() - 20.0).abs());
        }
        assert!(worst < 0.05, "max radial deviation {worst}");
    }

    #[test]
    fn circle_arc_length_matches_r_theta() {
        let pts = circle(40, 15.0, PI / 2.0);
        let c = fit_spline(&pts).unwrap();
        let s = sample_curve(&c, 0.25).unwrap();
        let got = s.last().unwrap().arc_length_from_carina;
        let want = 15.0 * PI / 2.0;
        assert!((got - want).abs() / want < 1e-3, "{got} vs {want}");
        assert!(s.windows(2).all(|w| w[1].arc_length_from_carina > w[0].arc_length_from_carina));
    }

    #[test]
    fn duplicates_collapse_to_low_order() {
        let p = [
            WorldPoint::new(0.0, 0.0, 0.0),
            WorldPoint::new(1.0, 0.0, 0.0),
            WorldPoint::new(1.0, 0.0, 0.0),
            WorldPoint::new(2.0, 1.0, 0.0),
        ];
        let c = fit_spline(&p).unwrap();
        assert!(c.is_low_order());
        assert_eq!(c.control_points().len(), 3);
        for (q, &k) in c.control_points().iter().zip(c.knots()) {
            assert!((c.point(k) - q).norm() < 1e-12);
        }
        let two = fit_spline(&p[..2]).unwrap();
        assert!(two.is_low_order());
        assert!(matches!(fit_spline(&p[1..3]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let c = fit_spline(&line(5, Vector3::x())).unwrap();
        let s = sample_curve(&c, 1.0).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, "3", &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("airway_id,param_mm,x,y,z,tx,ty,tz,arclen_mm\n"));
        assert_eq!(text.lines().count(), 6);
    }

    fn walk() -> impl Strategy<Value = Vec<VoxelIndex>> {
        prop::collection::vec((-1i64..=1, -1i64..=1), 4..40).prop_map(|steps| {
            let mut p = [20i64, 20, 0];
            let mut out = vec![[20usize, 20, 0]];
            for (dx, dy) in steps {
                p = [p[0] + dx, p[1] + dy, p[2] + 1];
                out.push([p[0] as usize, p[1] as usize, p[2] as usize]);
            }
            out
        })
    }

    proptest! {
        #[test]
        fn reversal_negates_tangents(path in walk()) {
            let pts = recentre(&path, [0.7, 0.7, 1.2], [0.0; 3]).unwrap();
            let fwd = fit_spline(&pts).unwrap();
            let rev_pts: Vec<_> = pts.iter().rev().copied().collect();
            let rev = fit_spline(&rev_pts).unwrap();
            let l = fwd.length_param();
            prop_assert!((rev.length_param() - l).abs() < 1e-9);
            for k in 0..=50 {
                let t = l * k as f64 / 50.0;
                let a = fwd.derivative(t).normalize();
                let b = rev.derivative(l - t).normalize();
                prop_assert!((a + b).norm() < 1e-6);
                let s = fwd.arc_length(0.0, t);
                let s_rev = rev.arc_length(l - t, l);
                prop_assert!((s - s_rev).abs() < 1e-6);
            }
        }

        #[test]
        fn samples_are_unit_and_monotone(path in walk(), step in 0.1f64..2.0) {
            let pts = recentre(&path, [0.6, 0.6, 1.0], [0.0; 3]).unwrap();
            let c = fit_spline(&pts).unwrap();
            let s = sample_curve(&c, step).unwrap();
            for w in s.windows(2) {
                prop_assert!(w[1].arc_length_from_carina > w[0].arc_length_from_carina);
            }
            for x in &s {
                prop_assert!((x.tangent.norm() - 1.0).abs() < 1e-9);
            }
            let first = s.first().unwrap();
            let last = s.last().unwrap();
            let chord = (last.position - first.position).norm();
            prop_assert!(last.arc_length_from_carina >= chord - 1e-9);
        }

        #[test]
        fn smoothing_does_not_roughen_interior(path in walk()) {
            let raw: Vec<WorldPoint> = path
                .iter()
                .map(|v| WorldPoint::new(v[0] as f64, v[1] as f64, v[2] as f64))
                .collect();
            let smooth = smooth5(&raw);
            // where the full window applies, second differences of the
            // smoothed path are averages of raw ones, so their norms cannot
            // add up to more; turning angle can grow near the shrunken ends
            let second = |p: &[WorldPoint], i: usize| (p[i - 1].coords - 2.0 * p[i].coords + p[i + 1].coords).norm();
            let n = raw.len();
            let s_in: f64 = (3..n.saturating_sub(3)).map(|i| second(&smooth, i)).sum();
            let r_all: f64 = (1..n - 1).map(|i| second(&raw, i)).sum();
            prop_assert!(s_in <= r_all + 1e-9);
            let straight = line(path.len(), Vector3::new(1.0, 2.0, 2.0));
            for (a, b) in smooth5(&straight).iter().zip(&straight) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
