//! Bundled phantom layouts.

use super::{unit, PhantomSpec, Placement, TubeFamily, TubeSpec, YTubeSpec};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 5] = [
    "paper-diameters",
    "paper-curvatures",
    "paper-tapers",
    "exponential",
    "y-tubes",
];

/// Lumen diameters of the straight-tube phantom (mm).
pub const PAPER_DIAMETERS: [f64; 5] = [1.1, 2.5, 3.9, 5.3, 6.7];
/// Centreline radii of curvature of the curved-tube phantom (mm).
pub const PAPER_CURVATURES: [f64; 5] = [30.0, 25.0, 20.0, 15.0, 10.0];
/// Diameter gradients of the tapered-tube phantom (mm per mm).
pub const PAPER_TAPERS: [f64; 5] = [0.051, 0.083, 0.109, 0.132, 0.168];
/// (area rate per mm, start diameter mm) of the exponential-taper phantom.
pub const EXPONENTIAL_TUBES: [(f64, f64); 4] = [(-0.05, 8.0), (-0.02, 7.0), (0.0, 5.0), (0.02, 4.0)];
/// Full daughter angles of the Y-tube phantom (degrees).
pub const Y_ANGLES: [f64; 10] = [40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0, 130.0];

fn tag(prefix: &str, v: f64) -> String {
    let s = format!("{}", v.abs()).replace('.', "_");
    if v < 0.0 {
        format!("{prefix}m{s}")
    } else {
        format!("{prefix}{s}")
    }
}

/// Spec for a bundled phantom by name.
pub fn preset(name: &str) -> Result<PhantomSpec> {
    let tubes = match name {
        "paper-diameters" => PAPER_DIAMETERS
            .iter()
            .enumerate()
            .map(|(i, &d)| TubeSpec {
                id: Some(tag("d", d)),
                ..TubeSpec::new(TubeFamily::Straight, d).at([15.0 * i as f64, 0.0, 0.0])
            })
            .collect(),
        "paper-curvatures" => PAPER_CURVATURES
            .iter()
            .enumerate()
            .map(|(i, &r)| TubeSpec {
                id: Some(tag("r", r)),
                ..TubeSpec::new(TubeFamily::Curved { curvature_radius: r }, 2.5).at([0.0, 15.0 * i as f64, 0.0])
            })
            .collect(),
        "paper-tapers" => PAPER_TAPERS
            .iter()
            .enumerate()
            .map(|(i, &t)| TubeSpec {
                id: Some(format!("t{}", i + 1)),
                ..TubeSpec::new(TubeFamily::Tapered { diameter_gradient: t }, 2.5).at([20.0 * i as f64, 0.0, 0.0])
            })
            .collect(),
        "exponential" => EXPONENTIAL_TUBES
            .iter()
            .enumerate()
            .map(|(i, &(k, d0))| TubeSpec {
                id: Some(tag("k", k)),
                length: 40.0,
                ..TubeSpec::new(TubeFamily::Exponential { area_rate: k }, d0).at([20.0 * i as f64, 0.0, 0.0])
            })
            .collect(),
        "y-tubes" => {
            let mut spec = PhantomSpec::from_tubes(Vec::new());
            spec.y_tubes = Y_ANGLES
                .iter()
                .enumerate()
                .map(|(i, &a)| YTubeSpec {
                    id: Some(format!("y{}", a as u32)),
                    placement: Placement {
                        origin: [0.0, 15.0 * i as f64, 0.0],
                        ..Placement::default()
                    },
                    ..YTubeSpec::new(a)
                })
                .collect();
            return Ok(spec);
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown preset `{name}` (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(PhantomSpec::from_tubes(tubes))
}

/// A straight tube along `axis` through the origin, for orientation studies.
pub fn straight_along(axis: [f64; 3], diameter: f64) -> PhantomSpec {
    let u = unit(axis);
    let bend = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    PhantomSpec::from_tubes(vec![TubeSpec {
        id: Some("tube".into()),
        placement: Placement {
            origin: [0.0; 3],
            direction: u,
            bend,
        },
        ..TubeSpec::new(TubeFamily::Straight, diameter)
    }])
}
