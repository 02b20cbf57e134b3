//! Synthetic tube phantoms with exact ground truth.
//!
//! Tubes are hollow cylinders (straight, curved, linearly tapered or
//! exponentially tapered) with a wall of fixed thickness and open ends. Y-shaped
//! bodies join a stem to two daughters and optionally a side branch. Voxels
//! get partial-volume fills from exact plane–box fractions on a supersampling
//! grid, refined where the surface bends.

mod presets;
mod raster;
pub mod shape;

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::volume::{ElementType, Volume, VolumeKind, VoxelIndex, WorldPoint};

pub use presets::{
    preset, straight_along, EXPONENTIAL_TUBES, PAPER_CURVATURES, PAPER_DIAMETERS, PAPER_TAPERS, PRESET_NAMES,
    Y_ANGLES,
};
pub use shape::{Body, Centreline, DiameterLaw, Joint, Segment};

type V3 = Vector3<f64>;

/// Smallest clearance between a tube's outer surface and the grid edge.
pub const MIN_GRID_MARGIN_MM: f64 = 2.0;

/// Diameter of a linearly tapered tube at distance `z` from its narrow end.
pub fn linear_taper_diameter(z: f64, t: f64, d0: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Phantom(format!("position {z} must be >= 0")));
    }
    let d = d0 + z * t;
    if !(d > 0.0) {
        return Err(Error::Phantom(format!("diameter {d} at z = {z} is not positive")));
    }
    Ok(d)
}

fn default_length() -> f64 {
    50.0
}
fn default_wall() -> f64 {
    1.7
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TubeFamily {
    Straight,
    Curved { curvature_radius: f64 },
    /// d(z) = d0 + t·z
    Tapered { diameter_gradient: f64 },
    /// area(z) = A0·exp(k·z)
    Exponential { area_rate: f64 },
}

/// Where a tube starts and which way it runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Placement {
    /// Start of the centreline (mm).
    pub origin: [f64; 3],
    /// Initial direction of the centreline.
    pub direction: [f64; 3],
    /// Direction toward the centre of curvature (curved tubes) or the side
    /// on which the first daughter lies (Y bodies).
    pub bend: [f64; 3],
}

impl Default for Placement {
    fn default() -> Self {
        Placement {
            origin: [0.0; 3],
            direction: [0.0, 0.0, 1.0],
            bend: [1.0, 0.0, 0.0],
        }
    }
}

impl Placement {
    fn frame(&self) -> Result<(V3, V3, V3)> {
        let o = V3::from(self.origin);
        let u = V3::from(self.direction);
        if !(u.norm() > 1e-12) || !o.iter().all(|v| v.is_finite()) {
            return Err(Error::Phantom("placement direction must be non-zero".into()));
        }
        let u = u.normalize();
        let b = V3::from(self.bend);
        let b = b - b.dot(&u) * u;
        if !(b.norm() > 1e-9) {
            return Err(Error::Phantom("placement bend must not be parallel to direction".into()));
        }
        Ok((o, u, b.normalize()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(flatten)]
    pub family: TubeFamily,
    pub lumen_diameter_start: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_wall")]
    pub wall_thickness: f64,
    #[serde(default)]
    pub placement: Placement,
}

impl TubeSpec {
    pub fn new(family: TubeFamily, lumen_diameter_start: f64) -> Self {
        TubeSpec {
            id: None,
            family,
            lumen_diameter_start,
            length: default_length(),
            wall_thickness: default_wall(),
            placement: Placement::default(),
        }
    }

    pub fn at(mut self, origin: [f64; 3]) -> Self {
        self.placement.origin = origin;
        self
    }

    fn segment(&self) -> Result<Segment> {
        let (o, u, b) = self.placement.frame()?;
        positive("length", self.length)?;
        positive("wall_thickness", self.wall_thickness)?;
        positive("lumen_diameter_start", self.lumen_diameter_start)?;
        let d0 = self.lumen_diameter_start;
        let (centreline, diameter) = match self.family {
            TubeFamily::Straight => (line(o, u, self.length), DiameterLaw::Linear { d0, t: 0.0 }),
            TubeFamily::Tapered { diameter_gradient } => {
                linear_taper_diameter(self.length, diameter_gradient, d0)?;
                (line(o, u, self.length), DiameterLaw::Linear { d0, t: diameter_gradient })
            }
            TubeFamily::Exponential { area_rate } => {
                if !area_rate.is_finite() {
                    return Err(Error::Phantom("area_rate must be finite".into()));
                }
                (line(o, u, self.length), DiameterLaw::Exponential { d0, k: area_rate })
            }
            TubeFamily::Curved { curvature_radius } => {
                let r_out = 0.5 * d0 + self.wall_thickness;
                if !(curvature_radius > r_out) {
                    return Err(Error::Phantom(format!(
                        "curvature radius {curvature_radius} must exceed lumen radius plus wall {r_out}"
                    )));
                }
                if self.length >= 2.0 * std::f64::consts::PI * curvature_radius {
                    return Err(Error::Phantom("curved tube closes on itself".into()));
                }
                let c = o + curvature_radius * b;
                (
                    Centreline::Arc {
                        centre: c.into(),
                        e1: (-b).into(),
                        e2: u.into(),
                        radius: curvature_radius,
                        length: self.length,
                    },
                    DiameterLaw::Linear { d0, t: 0.0 },
                )
            }
        };
        if !(diameter.min_over(self.length) > 0.0) {
            return Err(Error::Phantom("diameter must stay positive along the tube".into()));
        }
        Ok(Segment {
            centreline,
            diameter,
            wall_thickness: self.wall_thickness,
        })
    }

    fn family_name(&self) -> &'static str {
        match self.family {
            TubeFamily::Straight => "straight",
            TubeFamily::Curved { .. } => "curved",
            TubeFamily::Tapered { .. } => "tapered",
            TubeFamily::Exponential { .. } => "exponential",
        }
    }
}

/// A side branch leaving the first daughter of a Y body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideBranch {
    /// Distance along the daughter where the branch leaves (mm).
    pub position: f64,
    /// Angle between the daughter and the branch (degrees), opening outward.
    pub angle_deg: f64,
    pub diameter: f64,
    pub length: f64,
}

/// A stem splitting symmetrically into two daughters of equal size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YTubeSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub stem_diameter: f64,
    pub stem_length: f64,
    pub daughter_diameter: f64,
    pub daughter_length: f64,
    /// Full angle between the two daughters (degrees).
    pub branch_angle_deg: f64,
    #[serde(default = "default_wall")]
    pub wall_thickness: f64,
    #[serde(default)]
    pub side_branch: Option<SideBranch>,
    #[serde(default)]
    pub placement: Placement,
}

impl YTubeSpec {
    pub fn new(branch_angle_deg: f64) -> Self {
        YTubeSpec {
            id: None,
            stem_diameter: 4.0,
            stem_length: 15.0,
            daughter_diameter: 3.0,
            daughter_length: 80.0,
            branch_angle_deg,
            wall_thickness: default_wall(),
            side_branch: Some(SideBranch {
                position: 30.0,
                angle_deg: 60.0,
                diameter: 2.0,
                length: 20.0,
            }),
            placement: Placement::default(),
        }
    }

    /// Segments: stem, first daughter, second daughter, then the side branch.
    fn body(&self) -> Result<Body> {
        let (o, u, b) = self.placement.frame()?;
        for (name, v) in [
            ("stem_diameter", self.stem_diameter),
            ("stem_length", self.stem_length),
            ("daughter_diameter", self.daughter_diameter),
            ("daughter_length", self.daughter_length),
            ("wall_thickness", self.wall_thickness),
        ] {
            positive(name, v)?;
        }
        if !(self.branch_angle_deg > 0.0 && self.branch_angle_deg < 180.0) {
            return Err(Error::Phantom("branch angle must lie in (0, 180) degrees".into()));
        }
        let w = self.wall_thickness;
        let straight = |start: V3, dir: V3, len: f64, d: f64| Segment {
            centreline: line(start, dir, len),
            diameter: DiameterLaw::Linear { d0: d, t: 0.0 },
            wall_thickness: w,
        };
        let half = 0.5 * self.branch_angle_deg.to_radians();
        let j = o + self.stem_length * u;
        let d1 = u * half.cos() + b * half.sin();
        let d2 = u * half.cos() - b * half.sin();
        let mut segments = vec![
            straight(o, u, self.stem_length, self.stem_diameter),
            straight(j, d1, self.daughter_length, self.daughter_diameter),
            straight(j, d2, self.daughter_length, self.daughter_diameter),
        ];
        let mut joints = vec![Joint {
            centre: j.into(),
            lumen_radius: 0.5 * self.stem_diameter.max(self.daughter_diameter),
            wall_thickness: w,
        }];
        if let Some(sb) = &self.side_branch {
            positive("side_branch.diameter", sb.diameter)?;
            positive("side_branch.length", sb.length)?;
            if !(sb.position > 0.0 && sb.position < self.daughter_length) {
                return Err(Error::Phantom("side branch must leave inside the daughter".into()));
            }
            let beta = sb.angle_deg.to_radians();
            let outward = -u * half.sin() + b * half.cos();
            let dir = d1 * beta.cos() + outward * beta.sin();
            let p = j + sb.position * d1;
            segments.push(straight(p, dir, sb.length, sb.diameter));
            joints.push(Joint {
                centre: p.into(),
                lumen_radius: 0.5 * sb.diameter.min(self.daughter_diameter),
                wall_thickness: w,
            });
        }
        Ok(Body { segments, joints })
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Phantom(format!("{name} must be positive, got {v}")))
    }
}

fn line(start: V3, dir: V3, length: f64) -> Centreline {
    Centreline::Line {
        start: start.into(),
        direction: dir.into(),
        length,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Attenuation {
    pub lumen_hu: f64,
    pub wall_hu: f64,
    pub background_hu: f64,
}

impl Default for Attenuation {
    fn default() -> Self {
        Attenuation {
            lumen_hu: -1000.0,
            wall_hu: 0.0,
            background_hu: -800.0,
        }
    }
}

/// Voxel grid. Without explicit `dims`/`origin` the grid is fitted around the
/// bodies with `margin_mm` on every side, with its origin on a multiple of
/// the spacing so that world zero falls on a voxel centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub spacing: [f64; 3],
    pub margin_mm: f64,
    pub dims: Option<[usize; 3]>,
    pub origin: Option<[f64; 3]>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            spacing: [0.625, 0.625, 1.0],
            margin_mm: 22.0,
            dims: None,
            origin: None,
        }
    }
}

fn default_supersample() -> usize {
    3
}
fn default_inset() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub attenuation: Attenuation,
    /// Isotropic Gaussian blur of the intensity volume (mm); 0 disables.
    #[serde(default)]
    pub blur_sigma_mm: f64,
    /// Sub-cells per axis per voxel for partial-volume fills.
    #[serde(default = "default_supersample")]
    pub supersample: usize,
    /// Distance of the generated start and distal points from the tube ends.
    #[serde(default = "default_inset")]
    pub endpoint_inset_mm: f64,
    #[serde(default)]
    pub tubes: Vec<TubeSpec>,
    #[serde(default)]
    pub y_tubes: Vec<YTubeSpec>,
}

impl PhantomSpec {
    pub fn from_tubes(tubes: Vec<TubeSpec>) -> Self {
        PhantomSpec {
            grid: GridSpec::default(),
            attenuation: Attenuation::default(),
            blur_sigma_mm: 0.0,
            supersample: default_supersample(),
            endpoint_inset_mm: default_inset(),
            tubes,
            y_tubes: Vec::new(),
        }
    }

    /// Parse a JSON or TOML spec, chosen by file extension (`.toml` or anything else as JSON).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }
}

/// Generated start point of one body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTruth {
    pub start_id: String,
    pub voxel: VoxelIndex,
    pub world: [f64; 3],
}

/// Ground truth of one analysable path from a start to a distal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirwayTruth {
    pub airway_id: String,
    pub start_id: String,
    pub family: String,
    pub body: usize,
    /// Indices into the body's segments, in order along the path.
    pub segments: Vec<usize>,
    pub distal_voxel: VoxelIndex,
    pub distal_world: [f64; 3],
    /// Linear diameter change per mm along the path, where defined.
    pub diameter_gradient: Option<f64>,
    /// Slope of ln(area) per mm along the path, where defined.
    pub area_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomGroundTruth {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub attenuation: Attenuation,
    pub bodies: Vec<Body>,
    pub starts: Vec<StartTruth>,
    pub airways: Vec<AirwayTruth>,
}

impl PhantomGroundTruth {
    /// Nominal lumen diameter at the point of `airway` closest to `p`:
    /// the segment on the path whose centreline passes nearest wins.
    pub fn diameter_near(&self, airway: &AirwayTruth, p: &WorldPoint) -> Option<f64> {
        let body = self.bodies.get(airway.body)?;
        let mut best: Option<(f64, f64)> = None;
        for &si in &airway.segments {
            let seg = body.segments.get(si)?;
            let (s, rho) = seg.centreline.locate(p);
            let l = seg.centreline.length();
            let s_c = s.clamp(0.0, l);
            let dist = if (0.0..=l).contains(&s) {
                rho
            } else {
                (seg.centreline.point(s_c) - p).norm()
            };
            if best.is_none_or(|(d, _)| dist < d) {
                best = Some((dist, seg.diameter.at(s_c)));
            }
        }
        best.map(|(_, d)| d)
    }

    pub fn airway(&self, id: &str) -> Option<&AirwayTruth> {
        self.airways.iter().find(|a| a.airway_id == id)
    }
}

/// Rendered phantom.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub ct: Volume,
    pub seg: Volume,
    pub truth: PhantomGroundTruth,
}

struct BodyPlan {
    body: Body,
    start_id: String,
    family: String,
    /// (segment on which the start point sits, distance along it)
    start: (usize, f64),
    /// (airway id, segment path, family, gradient, area rate)
    airways: Vec<(String, Vec<usize>, Option<f64>, Option<f64>)>,
}

fn plan(spec: &PhantomSpec) -> Result<Vec<BodyPlan>> {
    let mut out = Vec::new();
    for (i, t) in spec.tubes.iter().enumerate() {
        let seg = t.segment()?;
        let id = t.id.clone().unwrap_or_else(|| format!("tube{}", i + 1));
        let (grad, rate) = match t.family {
            TubeFamily::Straight | TubeFamily::Curved { .. } => (Some(0.0), Some(0.0)),
            TubeFamily::Tapered { diameter_gradient } => (Some(diameter_gradient), None),
            TubeFamily::Exponential { area_rate } => (None, Some(area_rate)),
        };
        out.push(BodyPlan {
            body: Body {
                segments: vec![seg],
                joints: Vec::new(),
            },
            start_id: id.clone(),
            family: t.family_name().into(),
            start: (0, spec.endpoint_inset_mm),
            airways: vec![(id, vec![0], grad, rate)],
        });
    }
    for (i, y) in spec.y_tubes.iter().enumerate() {
        let body = y.body()?;
        let id = y.id.clone().unwrap_or_else(|| format!("y{}", i + 1));
        let mut airways = vec![
            (format!("{id}_a"), vec![0, 1], Some(0.0), Some(0.0)),
            (format!("{id}_b"), vec![0, 2], Some(0.0), Some(0.0)),
        ];
        if y.side_branch.is_some() {
            airways.push((format!("{id}_side"), vec![0, 1, 3], None, None));
        }
        out.push(BodyPlan {
            body,
            start_id: id,
            family: "y".into(),
            start: (0, spec.endpoint_inset_mm),
            airways,
        });
    }
    if out.is_empty() {
        return Err(Error::Phantom("phantom spec lists no tubes".into()));
    }
    let inset = spec.endpoint_inset_mm;
    for p in &out {
        for seg in &p.body.segments {
            if !(inset >= 0.0 && 2.0 * inset < seg.centreline.length()) {
                return Err(Error::Phantom(format!(
                    "endpoint inset {inset} mm does not fit a {} mm segment",
                    seg.centreline.length()
                )));
            }
        }
    }
    let mut ids = std::collections::BTreeSet::new();
    for p in &out {
        for (a, ..) in &p.airways {
            if !ids.insert(a.clone()) {
                return Err(Error::Phantom(format!("duplicate airway id `{a}`")));
            }
        }
    }
    Ok(out)
}

/// Outer surfaces of distinct bodies must not touch. Each body's centreline
/// is walked and its outer radius compared with the other body's distance.
fn check_overlap(plans: &[BodyPlan]) -> Result<()> {
    for (i, a) in plans.iter().enumerate() {
        for (j, b) in plans.iter().enumerate() {
            if i == j {
                continue;
            }
            for seg in &a.body.segments {
                let l = seg.centreline.length();
                let n = (l / 0.25).ceil() as usize;
                for k in 0..=n {
                    let s = l * k as f64 / n as f64;
                    let p = seg.centreline.point(s);
                    let r = 0.5 * seg.diameter.at(s) + seg.wall_thickness;
                    if b.body.outer_sdf(&p) <= r {
                        return Err(Error::Phantom(format!(
                            "tubes `{}` and `{}` overlap",
                            a.start_id, b.start_id
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn fit_grid(spec: &GridSpec, plans: &[BodyPlan]) -> Result<([usize; 3], [f64; 3])> {
    if spec.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Phantom("grid spacing must be positive".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in plans {
        let (a, b) = p.body.bounds();
        for k in 0..3 {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(b[k]);
        }
    }
    let sp = spec.spacing;
    let (dims, origin) = match (spec.dims, spec.origin) {
        (Some(d), Some(o)) => (d, o),
        (None, None) => {
            if !(spec.margin_mm >= MIN_GRID_MARGIN_MM) {
                return Err(Error::Phantom(format!(
                    "grid margin must be at least {MIN_GRID_MARGIN_MM} mm"
                )));
            }
            let mut dims = [0; 3];
            let mut origin = [0.0; 3];
            for k in 0..3 {
                let first = ((lo[k] - spec.margin_mm) / sp[k]).floor();
                let last = ((hi[k] + spec.margin_mm) / sp[k]).ceil();
                origin[k] = first * sp[k];
                dims[k] = (last - first) as usize + 1;
            }
            (dims, origin)
        }
        _ => return Err(Error::Phantom("grid dims and origin must be given together".into())),
    };
    for k in 0..3 {
        let end = origin[k] + (dims[k] as f64 - 1.0) * sp[k];
        if lo[k] - MIN_GRID_MARGIN_MM < origin[k] - 1e-9 || hi[k] + MIN_GRID_MARGIN_MM > end + 1e-9 {
            return Err(Error::Phantom(format!(
                "tubes exceed the grid (need {MIN_GRID_MARGIN_MM} mm margin) on axis {k}"
            )));
        }
    }
    Ok((dims, origin))
}

fn gaussian_blur(data: &mut [f64], dims: [usize; 3], spacing: [f64; 3], sigma: f64, exec: Execution) {
    for axis in 0..3 {
        let s = sigma / spacing[axis];
        let radius = (3.0 * s).ceil() as i64;
        if radius == 0 {
            continue;
        }
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-0.5 * (i as f64 / s).powi(2)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        let n = dims[axis];
        let stride = [1, dims[0], dims[0] * dims[1]][axis];
        let lines: Vec<usize> = (0..data.len())
            .filter(|&i| (i / stride) % n == 0)
            .collect();
        let src = data.to_vec();
        let results = exec.map(&lines, |&base| {
            (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for (kk, w) in kernel.iter().enumerate() {
                        let j = (i as i64 + kk as i64 - radius).clamp(0, n as i64 - 1) as usize;
                        acc += w * src[base + j * stride];
                    }
                    acc
                })
                .collect::<Vec<f64>>()
        });
        for (base, line) in lines.iter().zip(results) {
            for (i, v) in line.into_iter().enumerate() {
                data[base + i * stride] = v;
            }
        }
    }
}

/// Voxel holding the most lumen within one voxel of the rounded position of `p`.
fn snap_endpoint(
    lumen: &[f64],
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    p: &WorldPoint,
) -> Result<VoxelIndex> {
    let idx: Vec<i64> = (0..3)
        .map(|k| ((p[k] - origin[k]) / spacing[k]).round() as i64)
        .collect();
    let mut best: Option<(f64, f64, VoxelIndex)> = None;
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let v = [idx[0] + dx, idx[1] + dy, idx[2] + dz];
                if (0..3).any(|k| v[k] < 0 || v[k] >= dims[k] as i64) {
                    continue;
                }
                let v = [v[0] as usize, v[1] as usize, v[2] as usize];
                let f = lumen[v[0] + dims[0] * (v[1] + dims[1] * v[2])];
                if f < 0.5 {
                    continue;
                }
                let d2: f64 = (0..3)
                    .map(|k| (origin[k] + v[k] as f64 * spacing[k] - p[k]).powi(2))
                    .sum();
                let better = match best {
                    None => true,
                    Some((bf, bd, _)) => f > bf || (f == bf && d2 < bd),
                };
                if better {
                    best = Some((f, d2, v));
                }
            }
        }
    }
    best.map(|b| b.2).ok_or_else(|| {
        Error::Phantom(format!("no lumen voxel near endpoint ({:.2}, {:.2}, {:.2})", p.x, p.y, p.z))
    })
}

/// Rasterize every body of `spec` and derive its ground truth.
pub fn generate_phantom(spec: &PhantomSpec, exec: Execution) -> Result<Phantom> {
    if !(1..=16).contains(&spec.supersample) {
        return Err(Error::Phantom("supersample must lie in 1..=16".into()));
    }
    if !(spec.blur_sigma_mm >= 0.0 && spec.blur_sigma_mm.is_finite()) {
        return Err(Error::Phantom("blur sigma must be >= 0".into()));
    }
    let plans = plan(spec)?;
    check_overlap(&plans)?;
    let (dims, origin) = fit_grid(&spec.grid, &plans)?;
    let spacing = spec.grid.spacing;
    let n = dims[0] * dims[1] * dims[2];

    let rasters: Vec<_> = plans.iter().map(|p| {
        let (a, b) = p.body.bounds();
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for k in 0..3 {
            let i0 = ((a[k] - origin[k]) / spacing[k]).floor() - 1.0;
            let i1 = ((b[k] - origin[k]) / spacing[k]).ceil() + 2.0;
            lo[k] = i0.max(0.0) as usize;
            hi[k] = (i1.max(0.0) as usize).min(dims[k]);
        }
        raster::rasterize_body(&p.body, lo, hi, spacing, origin, spec.supersample, exec)
    }).collect();

    let mut lumen = vec![0.0f64; n];
    let mut outer = vec![0.0f64; n];
    for r in &rasters {
        let mut it = 0;
        for z in r.lo[2]..r.hi[2] {
            for y in r.lo[1]..r.hi[1] {
                for x in r.lo[0]..r.hi[0] {
                    let g = x + dims[0] * (y + dims[1] * z);
                    lumen[g] = lumen[g].max(r.lumen[it]);
                    outer[g] = outer[g].max(r.outer[it]);
                    it += 1;
                }
            }
        }
    }

    let att = spec.attenuation;
    let mut ct: Vec<f64> = lumen
        .iter()
        .zip(&outer)
        .map(|(&l, &o)| {
            let o = o.max(l);
            l * att.lumen_hu + (o - l) * att.wall_hu + (1.0 - o) * att.background_hu
        })
        .collect();
    if spec.blur_sigma_mm > 0.0 {
        gaussian_blur(&mut ct, dims, spacing, spec.blur_sigma_mm, exec);
    }
    ct.iter_mut().for_each(|v| *v = ElementType::F32.quantize(*v));
    let seg: Vec<f64> = lumen.iter().map(|&l| if l >= 0.5 { 1.0 } else { 0.0 }).collect();

    let mut starts = Vec::new();
    let mut airways = Vec::new();
    let inset = spec.endpoint_inset_mm;
    for (bi, p) in plans.iter().enumerate() {
        let sp = p.body.segments[p.start.0].centreline.point(p.start.1);
        starts.push(StartTruth {
            start_id: p.start_id.clone(),
            voxel: snap_endpoint(&lumen, dims, spacing, origin, &sp)?,
            world: sp.into(),
        });
        for (id, path, grad, rate) in &p.airways {
            let last = &p.body.segments[*path.last().unwrap()].centreline;
            let dp = last.point(last.length() - inset);
            airways.push(AirwayTruth {
                airway_id: id.clone(),
                start_id: p.start_id.clone(),
                family: p.family.clone(),
                body: bi,
                segments: path.clone(),
                distal_voxel: snap_endpoint(&lumen, dims, spacing, origin, &dp)?,
                distal_world: dp.into(),
                diameter_gradient: *grad,
                area_rate: *rate,
            });
        }
    }

    let ct = Volume::with_element_type(dims, spacing, origin, ct, VolumeKind::Intensity, ElementType::F32)?;
    let seg = Volume::new(dims, spacing, origin, seg, VolumeKind::Binary)?;
    Ok(Phantom {
        ct,
        seg,
        truth: PhantomGroundTruth {
            dims,
            spacing,
            origin,
            attenuation: att,
            bodies: plans.into_iter().map(|p| p.body).collect(),
            starts,
            airways,
        },
    })
}

/// Lumen fill fraction per voxel, without composing intensities. Used to
/// compare supersampling levels.
pub fn lumen_fractions(spec: &PhantomSpec, exec: Execution) -> Result<Vec<f64>> {
    let plans = plan(spec)?;
    let (dims, origin) = fit_grid(&spec.grid, &plans)?;
    let mut lumen = vec![0.0f64; dims.iter().product()];
    for p in &plans {
        let r = raster::rasterize_body(&p.body, [0; 3], dims, spec.grid.spacing, origin, spec.supersample, exec);
        for (g, v) in lumen.iter_mut().zip(&r.lumen) {
            *g = g.max(*v);
        }
    }
    Ok(lumen)
}

/// Unit vector helper for presets and tests.
pub(crate) fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Phantom {
    /// Write `ct.nrrd`, `seg.nrrd`, `ground_truth.json`, `start_points.csv`
    /// and `distal_points.csv` into `dir`.
    pub fn write(&self, dir: &Path, compress: bool) -> Result<()> {
        use crate::volume::{write_volume, VolumeFormat, WriteOptions};
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let opts = WriteOptions { compress };
        write_volume(&self.ct, dir.join("ct.nrrd"), VolumeFormat::Nrrd, opts)?;
        write_volume(&self.seg, dir.join("seg.nrrd"), VolumeFormat::Nrrd, opts)?;
        let json = serde_json::to_string_pretty(&self.truth)?;
        let gt = dir.join("ground_truth.json");
        std::fs::write(&gt, json + "\n").map_err(|e| Error::io(&gt, e))?;
        write_points(
            &dir.join("start_points.csv"),
            "start_id",
            self.truth.starts.iter().map(|s| (s.start_id.as_str(), s.voxel)),
        )?;
        write_points(
            &dir.join("distal_points.csv"),
            "airway_id",
            self.truth.airways.iter().map(|a| (a.airway_id.as_str(), a.distal_voxel)),
        )?;
        Ok(())
    }
}

fn write_points<'a>(
    path: &Path,
    key: &str,
    rows: impl Iterator<Item = (&'a str, VoxelIndex)>,
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([key, "x", "y", "z"]).map_err(csv_err)?;
    for (id, v) in rows {
        w.write_record([id.to_string(), v[0].to_string(), v[1].to_string(), v[2].to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
