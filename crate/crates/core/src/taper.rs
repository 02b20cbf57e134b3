//! Log-linear taper regression over an airway's area profile.

use serde::{Deserialize, Serialize};

use crate::cross_section::CrossSection;
use crate::error::{Error, Result};
use crate::volume::WorldPoint;

/// One section of an airway profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub index: usize,
    pub arc_length: f64,
    /// Calibrated area (mm²); `None` for invalid sections.
    pub area: Option<f64>,
    pub diameter: Option<f64>,
    pub bifurcation: bool,
}

impl ProfileEntry {
    pub fn is_valid(&self) -> bool {
        self.area.is_some()
    }
}

/// Area against arc length from the carina, with bifurcation flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AirwayProfile {
    pub entries: Vec<ProfileEntry>,
}

impl AirwayProfile {
    pub fn flags(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.bifurcation).collect()
    }
}

/// Where bifurcation flags come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FlagSource {
    #[default]
    None,
    /// Inclusive section index ranges.
    Ranges(Vec<(usize, usize)>),
    /// Flag sections whose centre lies within `factor` equivalent diameters
    /// of any branch point.
    Automatic { branch_points: Vec<WorldPoint>, factor: f64 },
}

/// Attach bifurcation flags to measured sections.
pub fn build_profile(sections: &[CrossSection], flags: &FlagSource) -> Result<AirwayProfile> {
    if sections.windows(2).any(|w| w[1].arc_length <= w[0].arc_length) {
        return Err(Error::Config("sections are not ordered by arc length".into()));
    }
    let mut entries: Vec<ProfileEntry> = sections
        .iter()
        .enumerate()
        .map(|(i, s)| ProfileEntry {
            index: i,
            arc_length: s.arc_length,
            area: s.area,
            diameter: s.diameter,
            bifurcation: false,
        })
        .collect();
    if entries.iter().any(|e| e.area.is_some_and(|a| !(a > 0.0))) {
        return Err(Error::Config("valid section with non-positive area".into()));
    }
    match flags {
        FlagSource::None => {}
        FlagSource::Ranges(ranges) => {
            for &(start, end) in ranges {
                if start > end || end >= entries.len() {
                    return Err(Error::FlagRange {
                        start,
                        end,
                        len: entries.len(),
                    });
                }
                for e in &mut entries[start..=end] {
                    e.bifurcation = true;
                }
            }
        }
        FlagSource::Automatic { branch_points, factor } => {
            let fallback = median(entries.iter().filter_map(|e| e.diameter).collect());
            for (e, s) in entries.iter_mut().zip(sections) {
                let Some(d) = e.diameter.or(fallback) else {
                    continue;
                };
                let reach = factor * d;
                e.bifurcation = branch_points.iter().any(|b| (b - s.centre).norm() <= reach);
            }
        }
    }
    Ok(AirwayProfile { entries })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Fit of ln(area) against arc length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperResult {
    /// Taper rate (per mm).
    pub slope: f64,
    /// ln(mm²) at zero arc length.
    pub intercept: f64,
    /// Standard error of estimate, √(SSR / (n − 2)).
    pub see: f64,
    /// Coefficient of determination; 1 when ln(area) has no spread.
    pub r2: f64,
    pub n_used: usize,
    /// Valid sections left out because they were flagged.
    pub excluded_bifurcation: usize,
    pub n_invalid: usize,
}

pub(crate) struct Ols {
    pub slope: f64,
    pub intercept: f64,
    pub ssr: f64,
    pub sst: f64,
}

pub(crate) fn ols(x: &[f64], y: &[f64]) -> Result<Ols> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewEntries(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - my - slope * (a - mx);
            r * r
        })
        .sum();
    let sst = y.iter().map(|b| (b - my) * (b - my)).sum();
    Ok(Ols {
        slope,
        intercept,
        ssr,
        sst,
    })
}

/// Ordinary least squares of natural-log area on arc length over valid
/// entries, leaving out flagged ones when `exclude_bifurcations` is set.
pub fn taper_rate(p: &AirwayProfile, exclude_bifurcations: bool) -> Result<TaperResult> {
    let mut x = Vec::with_capacity(p.entries.len());
    let mut y = Vec::with_capacity(p.entries.len());
    let mut excluded = 0;
    let mut invalid = 0;
    for e in &p.entries {
        let Some(a) = e.area else {
            invalid += 1;
            continue;
        };
        if exclude_bifurcations && e.bifurcation {
            excluded += 1;
            continue;
        }
        x.push(e.arc_length);
        y.push(a.ln());
    }
    let fit = ols(&x, &y)?;
    let n = x.len();
    let see = (fit.ssr / (n - 2) as f64).sqrt();
    // rounding noise alone when every ln(area) is the same
    let flat = y.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 4.0 * f64::EPSILON;
    let r2 = if fit.sst > flat * flat * n as f64 { 1.0 - fit.ssr / fit.sst } else { 1.0 };
    Ok(TaperResult {
        slope: fit.slope,
        intercept: fit.intercept,
        see,
        r2,
        n_used: n,
        excluded_bifurcation: excluded,
        n_invalid: invalid,
    })
}

/// OLS slope of diameter against arc length.
pub fn diameter_gradient(diameters: &[f64], arc_lengths: &[f64]) -> Result<f64> {
    if diameters.len() != arc_lengths.len() {
        return Err(Error::LengthMismatch(diameters.len(), arc_lengths.len()));
    }
    if arc_lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("arc lengths must be strictly increasing".into()));
    }
    Ok(ols(arc_lengths, diameters)?.slope)
}

/// Per-airway result record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaperReport {
    pub airway_id: String,
    pub slope: f64,
    pub intercept: f64,
    pub see: f64,
    pub r2: f64,
    pub n_used: usize,
    pub excluded_bifurcation: usize,
    pub config_hash: String,
    /// Always "ln": slope is d ln(area) / ds.
    pub log_base: String,
}

impl TaperReport {
    pub fn new(airway_id: &str, r: &TaperResult, config_hash: &str) -> Self {
        TaperReport {
            airway_id: airway_id.to_string(),
            slope: r.slope,
            intercept: r.intercept,
            see: r.see,
            r2: r.r2,
            n_used: r.n_used,
            excluded_bifurcation: r.excluded_bifurcation,
            config_hash: config_hash.to_string(),
            log_base: "ln".to_string(),
        }
    }
}
