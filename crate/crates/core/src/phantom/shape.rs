//! Analytic tube geometry: centrelines, diameter laws and signed distances.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

type P3 = Point3<f64>;
type V3 = Vector3<f64>;

/// Closed-form centreline parameterized by arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Centreline {
    Line {
        start: [f64; 3],
        direction: [f64; 3],
        length: f64,
    },
    /// Circular arc starting at `centre + radius·e1`, heading along `e2`.
    Arc {
        centre: [f64; 3],
        e1: [f64; 3],
        e2: [f64; 3],
        radius: f64,
        length: f64,
    },
}

fn v(a: &[f64; 3]) -> V3 {
    V3::new(a[0], a[1], a[2])
}

impl Centreline {
    pub fn length(&self) -> f64 {
        match self {
            Centreline::Line { length, .. } | Centreline::Arc { length, .. } => *length,
        }
    }

    pub fn point(&self, s: f64) -> P3 {
        match self {
            Centreline::Line { start, direction, .. } => P3::from(v(start) + s * v(direction)),
            Centreline::Arc {
                centre, e1, e2, radius, ..
            } => {
                let a = s / radius;
                P3::from(v(centre) + *radius * (a.cos() * v(e1) + a.sin() * v(e2)))
            }
        }
    }

    pub fn tangent(&self, s: f64) -> V3 {
        match self {
            Centreline::Line { direction, .. } => v(direction),
            Centreline::Arc { e1, e2, radius, .. } => {
                let a = s / radius;
                -a.sin() * v(e1) + a.cos() * v(e2)
            }
        }
    }

    /// Arc-length coordinate of the closest centreline point (unclamped for
    /// lines; for arcs, the angle measured from the arc's middle) and the
    /// distance from `p` to the centreline's supporting line or circle.
    pub fn locate(&self, p: &P3) -> (f64, f64) {
        match self {
            Centreline::Line { start, direction, .. } => {
                let d = p.coords - v(start);
                let u = v(direction);
                let s = d.dot(&u);
                (s, (d - s * u).norm())
            }
            Centreline::Arc {
                centre,
                e1,
                e2,
                radius,
                length,
            } => {
                let q = p.coords - v(centre);
                let (e1, e2) = (v(e1), v(e2));
                let e3 = e1.cross(&e2);
                let x = q.dot(&e1);
                let y = q.dot(&e2);
                let z = q.dot(&e3);
                let half = length / (2.0 * radius);
                let mut d = y.atan2(x) - half;
                d = (d + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
                let s = radius * (half + d);
                let rho_in = (x * x + y * y).sqrt();
                (s, ((rho_in - radius).powi(2) + z * z).sqrt())
            }
        }
    }

    /// Signed distance-like function of the two end planes: negative between them.
    fn cap(&self, p: &P3, s: f64) -> f64 {
        let l = self.length();
        match self {
            Centreline::Line { .. } => (-s).max(s - l),
            Centreline::Arc { centre, e1, e2, radius, .. } => {
                let q = p.coords - v(centre);
                let rho_in = (q.dot(&v(e1)).powi(2) + q.dot(&v(e2)).powi(2)).sqrt();
                // angular overshoot beyond either end, scaled to distance at this radius
                let over = (-s).max(s - l) / radius;
                rho_in * over
            }
        }
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let n = 256;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for k in 0..=n {
            let p = self.point(self.length() * k as f64 / n as f64);
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }
}

/// Lumen diameter along the centreline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiameterLaw {
    /// d(s) = d0 + t·s
    Linear { d0: f64, t: f64 },
    /// d(s) = d0·exp(k·s/2), so the area grows as exp(k·s).
    Exponential { d0: f64, k: f64 },
}

impl DiameterLaw {
    pub fn at(&self, s: f64) -> f64 {
        match *self {
            DiameterLaw::Linear { d0, t } => d0 + t * s,
            DiameterLaw::Exponential { d0, k } => d0 * (0.5 * k * s).exp(),
        }
    }

    pub fn max_over(&self, length: f64) -> f64 {
        self.at(0.0).max(self.at(length))
    }

    pub fn min_over(&self, length: f64) -> f64 {
        self.at(0.0).min(self.at(length))
    }
}

/// One tube piece: a centreline with a lumen and a wall of fixed thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub centreline: Centreline,
    pub diameter: DiameterLaw,
    pub wall_thickness: f64,
}

impl Segment {
    fn sdf(&self, p: &P3, extra: f64) -> f64 {
        let (s, rho) = self.centreline.locate(p);
        let l = self.centreline.length();
        let r = 0.5 * self.diameter.at(s.clamp(0.0, l)) + extra;
        (rho - r).max(self.centreline.cap(p, s))
    }

    pub fn lumen_sdf(&self, p: &P3) -> f64 {
        self.sdf(p, 0.0)
    }

    pub fn outer_sdf(&self, p: &P3) -> f64 {
        self.sdf(p, self.wall_thickness)
    }

    pub fn outer_radius_max(&self) -> f64 {
        0.5 * self.diameter.max_over(self.centreline.length()) + self.wall_thickness
    }
}

/// A ball that rounds off the junction where tube pieces meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub centre: [f64; 3],
    pub lumen_radius: f64,
    pub wall_thickness: f64,
}

/// Union of tube pieces and joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub segments: Vec<Segment>,
    pub joints: Vec<Joint>,
}

impl Body {
    pub fn lumen_sdf(&self, p: &P3) -> f64 {
        let a = self.segments.iter().map(|s| s.lumen_sdf(p)).fold(f64::INFINITY, f64::min);
        self.joints
            .iter()
            .map(|j| (p.coords - v(&j.centre)).norm() - j.lumen_radius)
            .fold(a, f64::min)
    }

    pub fn outer_sdf(&self, p: &P3) -> f64 {
        let a = self.segments.iter().map(|s| s.outer_sdf(p)).fold(f64::INFINITY, f64::min);
        self.joints
            .iter()
            .map(|j| (p.coords - v(&j.centre)).norm() - j.lumen_radius - j.wall_thickness)
            .fold(a, f64::min)
    }

    /// Axis-aligned box containing the outer surface.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in &self.segments {
            let (a, b) = s.centreline.bounds();
            let r = s.outer_radius_max() + 0.1;
            for k in 0..3 {
                lo[k] = lo[k].min(a[k] - r);
                hi[k] = hi[k].max(b[k] + r);
            }
        }
        for j in &self.joints {
            let r = j.lumen_radius + j.wall_thickness + 0.1;
            for k in 0..3 {
                lo[k] = lo[k].min(j.centre[k] - r);
                hi[k] = hi[k].max(j.centre[k] + r);
            }
        }
        (lo, hi)
    }
}
