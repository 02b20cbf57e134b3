//! Perpendicular plane images, ray-cast lumen edges and ellipse fits.

mod ellipse;
mod fwhm;
mod plane;

use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::centreline::CentrelineSample;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::volume::{Interpolation, Volume, VolumeKind, WorldPoint};

pub use ellipse::{fit_ellipse, EllipseFit};
pub use fwhm::{fwhm_esl, locate_edge, BoundaryPointSet, RayStatus};
pub use plane::{patch_size, plane_basis, resample_plane, PlanePatch};

/// Cross-section measurement parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectionConfig {
    pub pixel_size_mm: f64,
    pub extent_mm: f64,
    pub n_rays: usize,
    pub samples_per_pixel: usize,
    /// Sections with a smaller fraction of successful rays are invalid.
    pub min_hit_fraction: f64,
    /// Sections with a larger fraction of out-of-volume pixels are invalid.
    pub max_out_of_bounds: f64,
    /// Added to every equivalent diameter before the area is formed.
    pub calibration_offset_mm: f64,
}

impl Default for SectionConfig {
    fn default() -> Self {
        SectionConfig {
            pixel_size_mm: 0.3,
            extent_mm: 40.0,
            n_rays: 50,
            samples_per_pixel: 5,
            min_hit_fraction: 0.6,
            max_out_of_bounds: 0.25,
            calibration_offset_mm: 0.0,
        }
    }
}

impl SectionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.pixel_size_mm > 0.0
            && self.extent_mm >= self.pixel_size_mm
            && self.n_rays > 0
            && self.samples_per_pixel > 0
            && (0.0..=1.0).contains(&self.min_hit_fraction)
            && (0.0..=1.0).contains(&self.max_out_of_bounds)
            && self.calibration_offset_mm.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("bad cross-section parameters: {self:?}")))
        }
    }
}

/// Why a section has no area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    OutOfBounds,
    CentreOutsideLumen,
    TooFewHits,
    EllipseFit,
}

impl InvalidReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InvalidReason::OutOfBounds => "out_of_bounds",
            InvalidReason::CentreOutsideLumen => "centre_outside_lumen",
            InvalidReason::TooFewHits => "too_few_hits",
            InvalidReason::EllipseFit => "ellipse_fit",
        }
    }
}

/// Measurement at one centreline sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub index: usize,
    pub arc_length: f64,
    pub centre: WorldPoint,
    pub tangent: Vector3<f64>,
    pub hit_fraction: f64,
    pub out_of_bounds: f64,
    /// Raw fit, before calibration.
    pub ellipse: Option<EllipseFit>,
    /// Calibrated equivalent diameter (mm).
    pub diameter: Option<f64>,
    /// Calibrated area (mm²).
    pub area: Option<f64>,
    pub invalid: Option<InvalidReason>,
}

impl CrossSection {
    pub fn is_valid(&self) -> bool {
        self.invalid.is_none()
    }
}

/// Measure one section: plane images, ray casting, ellipse fit.
pub fn measure_section(
    ct: &Volume,
    seg: &Volume,
    index: usize,
    sample: &CentrelineSample,
    cfg: &SectionConfig,
) -> CrossSection {
    let mut out = CrossSection {
        index,
        arc_length: sample.arc_length_from_carina,
        centre: sample.position,
        tangent: sample.tangent,
        hit_fraction: 0.0,
        out_of_bounds: 0.0,
        ellipse: None,
        diameter: None,
        area: None,
        invalid: None,
    };
    let p = &sample.position;
    let t = &sample.tangent;
    let bin = resample_plane(seg, p, t, cfg.pixel_size_mm, cfg.extent_mm, Interpolation::Tricubic);
    out.out_of_bounds = bin.out_of_bounds;
    if bin.out_of_bounds > cfg.max_out_of_bounds {
        out.invalid = Some(InvalidReason::OutOfBounds);
        return out;
    }
    let img = resample_plane(ct, p, t, cfg.pixel_size_mm, cfg.extent_mm, Interpolation::Tricubic);
    let rays = match fwhm_esl(&bin, &img, cfg.n_rays, cfg.samples_per_pixel) {
        Ok(r) => r,
        Err(_) => {
            out.invalid = Some(InvalidReason::CentreOutsideLumen);
            return out;
        }
    };
    out.hit_fraction = rays.hit_fraction();
    if out.hit_fraction < cfg.min_hit_fraction {
        out.invalid = Some(InvalidReason::TooFewHits);
        return out;
    }
    match fit_ellipse(&rays.points) {
        Ok(fit) => {
            let d = fit.equivalent_diameter() + cfg.calibration_offset_mm;
            out.diameter = Some(d);
            out.area = Some(std::f64::consts::PI * d * d / 4.0);
            out.ellipse = Some(fit);
        }
        Err(_) => out.invalid = Some(InvalidReason::EllipseFit),
    }
    out
}

/// Measure every sample of one airway. Output order follows `samples`.
///
/// Invalid sections are kept with a reason. Fails only when there were
/// samples and none of them produced a valid section.
pub fn measure_airway(
    ct: &Volume,
    seg: &Volume,
    samples: &[CentrelineSample],
    cfg: &SectionConfig,
    exec: Execution,
) -> Result<Vec<CrossSection>> {
    cfg.validate()?;
    if ct.dims() != seg.dims() || ct.spacing() != seg.spacing() || ct.origin() != seg.origin() {
        return Err(Error::InvalidVolume("CT and segmentation grids differ".into()));
    }
    let converted;
    let seg = if seg.kind() == VolumeKind::Binary {
        seg
    } else {
        converted = seg.to_binary(0.5);
        &converted
    };
    let sections = exec.map_range(samples.len(), |i| measure_section(ct, seg, i, &samples[i], cfg));
    if !sections.is_empty() && sections.iter().all(|s| !s.is_valid()) {
        return Err(Error::AllSectionsInvalid);
    }
    Ok(sections)
}

/// Per-section CSV with one bifurcation flag per section.
pub fn write_sections_csv<W: Write>(
    w: W,
    airway_id: &str,
    sections: &[CrossSection],
    bifurcation: &[bool],
) -> Result<()> {
    if bifurcation.len() != sections.len() {
        return Err(Error::LengthMismatch(sections.len(), bifurcation.len()));
    }
    let map = |e: csv::Error| Error::Config(format!("writing section csv: {e}"));
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "airway_id",
        "section_idx",
        "arclen_mm",
        "area_mm2",
        "diam_equiv_mm",
        "a_mm",
        "b_mm",
        "rot_rad",
        "valid",
        "reason",
        "bifurcation_flag",
    ])
    .map_err(map)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (s, &flag) in sections.iter().zip(bifurcation) {
        let e = s.ellipse.as_ref();
        wtr.write_record([
            airway_id.to_string(),
            s.index.to_string(),
            s.arc_length.to_string(),
            opt(s.area),
            opt(s.diameter),
            opt(e.map(|e| e.a)),
            opt(e.map(|e| e.b)),
            opt(e.map(|e| e.rotation)),
            s.is_valid().to_string(),
            s.invalid.map(|r| r.as_str()).unwrap_or("").to_string(),
            flag.to_string(),
        ])
        .map_err(map)?;
    }
    wtr.flush().map_err(|e| Error::Config(format!("writing section csv: {e}")))?;
    Ok(())
}
