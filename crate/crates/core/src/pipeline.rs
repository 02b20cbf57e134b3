//! End-to-end drivers behind the command-line tool: airway analysis,
//! phantom generation and cohort comparison.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::centreline::{fit_spline, recentre, sample_curve, write_samples_csv, CentrelineSample};
use crate::cross_section::{measure_airway, write_sections_csv, CrossSection, SectionConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::phantom::{generate_phantom, preset, Phantom, PhantomSpec};
use crate::report;
use crate::skeleton::{extract_paths, find_trachea_start, label_components, thin_to_skeleton, VoxelPath};
use crate::stats::{bland_altman, pearson_r, wilcoxon_rank_sum, BlandAltmanResult, RankSumResult};
use crate::taper::{build_profile, taper_rate, AirwayProfile, FlagSource, TaperReport, TaperResult};
use crate::volume::{load_volume, ElementType, Volume, VolumeFormat, VolumeKind, VoxelIndex, WorldPoint};

fn default_step() -> f64 {
    0.25
}
fn default_factor() -> f64 {
    1.0
}

/// Parameters that change measured numbers. Their hash is embedded in every
/// result so that results from different settings are never mixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    pub section: SectionConfig,
    /// Centreline sampling interval (mm).
    #[serde(default = "default_step")]
    pub sample_step_mm: f64,
    /// Automatic bifurcation flags reach this many equivalent diameters
    /// from a branch point.
    #[serde(default = "default_factor")]
    pub flag_factor: f64,
    /// Leave flagged sections out of the headline fit. Not part of the hash:
    /// runs with and without exclusion are meant to be paired.
    pub exclude_bifurcations: bool,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            section: SectionConfig::default(),
            sample_step_mm: default_step(),
            flag_factor: default_factor(),
            exclude_bifurcations: false,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        self.section.validate()?;
        if !(self.sample_step_mm > 0.0 && self.sample_step_mm.is_finite()) {
            return Err(Error::Config("sample step must be positive".into()));
        }
        if !(self.flag_factor > 0.0 && self.flag_factor.is_finite()) {
            return Err(Error::Config("flag factor must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 (hex) of the measurement settings.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            section: &'a SectionConfig,
            sample_step_mm: f64,
            flag_factor: f64,
        }
        let json = serde_json::to_string(&Hashed {
            section: &self.section,
            sample_step_mm: self.sample_step_mm,
            flag_factor: self.flag_factor,
        })
        .expect("settings serialize");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Inputs and settings of one `analyze` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ct: PathBuf,
    pub seg: PathBuf,
    /// CSV `airway_id,x,y,z` (voxel indices).
    pub distal_points: PathBuf,
    /// CSV `start_id,x,y,z`; without it the trachea start is detected.
    pub start_points: Option<PathBuf>,
    /// CSV `airway_id,start_idx,end_idx` of inclusive section ranges.
    pub bifurcation_flags: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub params: AnalysisParams,
    pub execution: Execution,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let mut files = vec![&self.ct, &self.seg, &self.distal_points];
        files.extend(self.start_points.iter());
        files.extend(self.bifurcation_flags.iter());
        for f in files {
            if !f.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", f.display())));
            }
        }
        Ok(())
    }
}

/// Airway to analyze: its id and distal point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AirwayInput {
    pub airway_id: String,
    pub distal: VoxelIndex,
}

/// Everything measured along one airway.
#[derive(Debug, Clone)]
pub struct AirwayResult {
    pub airway_id: String,
    pub path: VoxelPath,
    pub low_order: bool,
    pub samples: Vec<CentrelineSample>,
    pub sections: Vec<CrossSection>,
    pub profile: AirwayProfile,
    pub branch_points: Vec<WorldPoint>,
    /// Fit following `exclude_bifurcations`.
    pub fit: TaperResult,
    /// Fit with the opposite exclusion choice, when it has enough points.
    pub alternate: Option<TaperResult>,
}

fn component_box(labels: &[u32], label: u32, dims: [usize; 3]) -> ([usize; 3], [usize; 3]) {
    let mut lo = dims;
    let mut hi = [0; 3];
    for (i, &l) in labels.iter().enumerate() {
        if l == label {
            let v = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k] + 1);
            }
        }
    }
    (lo, hi)
}

/// Binary sub-volume of one component over its bounding box.
fn crop_component(seg: &Volume, labels: &[u32], label: u32) -> (Volume, [usize; 3]) {
    let dims = seg.dims();
    let (lo, hi) = component_box(labels, label, dims);
    let sub = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let mut data = Vec::with_capacity(sub.iter().product());
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            for x in lo[0]..hi[0] {
                let l = labels[x + dims[0] * (y + dims[1] * z)];
                data.push(if l == label { 1.0 } else { 0.0 });
            }
        }
    }
    let sp = seg.spacing();
    let o = seg.origin();
    let origin = [
        o[0] + lo[0] as f64 * sp[0],
        o[1] + lo[1] as f64 * sp[1],
        o[2] + lo[2] as f64 * sp[2],
    ];
    (
        Volume::from_parts_unchecked(sub, sp, origin, data, VolumeKind::Binary, ElementType::U8),
        lo,
    )
}

/// Voxels where two extracted paths part ways.
fn divergence_points(paths: &[VoxelPath]) -> Vec<VoxelIndex> {
    let mut out = Vec::new();
    for (i, a) in paths.iter().enumerate() {
        for b in &paths[i + 1..] {
            let common = a.voxels.iter().zip(&b.voxels).take_while(|(p, q)| p == q).count();
            if common > 0 && common < a.len() && common < b.len() {
                let v = a.voxels[common - 1];
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
    }
    out.sort();
    out
}

struct Group {
    start: VoxelIndex,
    airways: Vec<usize>,
}

/// Skeletonize each start's component and cut one path per airway.
fn extract_group_paths(seg: &Volume, labels: &[u32], label: u32, g: &Group, inputs: &[AirwayInput]) -> Result<Vec<VoxelPath>> {
    let (sub, lo) = crop_component(seg, labels, label);
    let shift = |v: VoxelIndex| [v[0] - lo[0], v[1] - lo[1], v[2] - lo[2]];
    let start = shift(g.start);
    let distal: Vec<VoxelIndex> = g.airways.iter().map(|&i| shift(inputs[i].distal)).collect();
    let mut anchors = vec![start];
    anchors.extend(distal.iter().copied());
    let tree = thin_to_skeleton(&sub, &anchors)?;
    let paths = extract_paths(&tree, start, &distal)?;
    Ok(paths
        .into_iter()
        .map(|p| VoxelPath {
            voxels: p
                .voxels
                .into_iter()
                .map(|v| [v[0] + lo[0], v[1] + lo[1], v[2] + lo[2]])
                .collect(),
            starts_at_carina: p.starts_at_carina,
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn measure_path(
    ct: &Volume,
    seg: &Volume,
    airway_id: &str,
    path: VoxelPath,
    branch_points: Vec<WorldPoint>,
    ranges: Option<&Vec<(usize, usize)>>,
    params: &AnalysisParams,
    exec: Execution,
) -> Result<AirwayResult> {
    let points = recentre(&path.voxels, seg.spacing(), seg.origin())?;
    let curve = fit_spline(&points)?;
    let samples = sample_curve(&curve, params.sample_step_mm)?;
    let sections = measure_airway(ct, seg, &samples, &params.section, exec)?;
    let flags = match ranges {
        Some(r) => FlagSource::Ranges(r.clone()),
        None => FlagSource::Automatic {
            branch_points: branch_points.clone(),
            factor: params.flag_factor,
        },
    };
    let profile = build_profile(&sections, &flags)?;
    let fit = taper_rate(&profile, params.exclude_bifurcations)?;
    let alternate = taper_rate(&profile, !params.exclude_bifurcations).ok();
    Ok(AirwayResult {
        airway_id: airway_id.to_string(),
        path,
        low_order: curve.is_low_order(),
        samples,
        sections,
        profile,
        branch_points,
        fit,
        alternate,
    })
}

/// Measure every airway. Distal points in background are a hard error;
/// anything that goes wrong for a single airway is reported in its slot.
/// Results follow the order of `inputs`.
pub fn analyze_airways(
    ct: &Volume,
    seg: &Volume,
    starts: Option<&[(String, VoxelIndex)]>,
    inputs: &[AirwayInput],
    flag_ranges: &BTreeMap<String, Vec<(usize, usize)>>,
    params: &AnalysisParams,
    exec: Execution,
) -> Result<Vec<Result<AirwayResult>>> {
    params.validate()?;
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
    let dims = seg.dims();
    let inside = |v: VoxelIndex| (0..3).all(|k| v[k] < dims[k]) && seg.get(v) == 1.0;
    for a in inputs {
        if !inside(a.distal) {
            return Err(Error::AnchorNotForeground(a.distal));
        }
    }
    let fg: Vec<bool> = seg.data().iter().map(|&v| v == 1.0).collect();
    let (labels, _) = label_components(&fg, dims, true);
    let label_of = |v: VoxelIndex| labels[v[0] + dims[0] * (v[1] + dims[1] * v[2])];

    let start_list: Vec<VoxelIndex> = match starts {
        Some(s) => {
            for (_, v) in s {
                if !inside(*v) {
                    return Err(Error::AnchorNotForeground(*v));
                }
            }
            s.iter().map(|(_, v)| *v).collect()
        }
        None => vec![find_trachea_start(&seg.distance_transform(exec)?)?],
    };

    // one group per start; airways join the first start sharing their component
    let mut groups: Vec<Group> = start_list
        .iter()
        .map(|&s| Group {
            start: s,
            airways: Vec::new(),
        })
        .collect();
    let mut results: Vec<Option<Result<AirwayResult>>> = (0..inputs.len()).map(|_| None).collect();
    for (i, a) in inputs.iter().enumerate() {
        match groups.iter_mut().find(|g| label_of(g.start) == label_of(a.distal)) {
            Some(g) => g.airways.push(i),
            None => {
                results[i] = Some(Err(Error::AnchorsDisconnected));
            }
        }
    }
    groups.retain(|g| !g.airways.is_empty());

    let paths = exec.map(&groups, |g| extract_group_paths(seg, &labels, label_of(g.start), g, inputs));
    let mut jobs = Vec::new();
    for (g, p) in groups.iter().zip(paths) {
        match p {
            Ok(paths) => {
                let bp: Vec<WorldPoint> = divergence_points(&paths)
                    .into_iter()
                    .map(|v| seg.voxel_to_world(v))
                    .collect();
                for (&i, path) in g.airways.iter().zip(paths) {
                    jobs.push((i, path, bp.clone()));
                }
            }
            Err(e) => {
                let msg = e.to_string();
                for &i in &g.airways {
                    results[i] = Some(Err(Error::Config(format!("centreline extraction failed: {msg}"))));
                }
            }
        }
    }
    let measured = exec.map(&jobs, |(i, path, bp)| {
        let id = &inputs[*i].airway_id;
        measure_path(ct, seg, id, path.clone(), bp.clone(), flag_ranges.get(id), params, exec)
    });
    for ((i, ..), r) in jobs.iter().zip(measured) {
        results[*i] = Some(r);
    }
    Ok(results.into_iter().map(|r| r.expect("every airway resolved")).collect())
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Read `id,x,y,z` rows (voxel indices). Ids must be unique.
pub fn read_points_csv(path: &Path) -> Result<Vec<(String, VoxelIndex)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error(path))?;
    let mut out: Vec<(String, VoxelIndex)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error(path))?;
        if rec.len() != 4 {
            return Err(Error::Config(format!("{}: expected 4 columns, found {}", path.display(), rec.len())));
        }
        let mut v = [0usize; 3];
        for k in 0..3 {
            v[k] = rec[k + 1].parse().map_err(|_| {
                Error::Config(format!("{}: bad voxel index `{}`", path.display(), &rec[k + 1]))
            })?;
        }
        let id = rec[0].to_string();
        if out.iter().any(|(o, _)| *o == id) {
            return Err(Error::Config(format!("{}: duplicate id `{id}`", path.display())));
        }
        out.push((id, v));
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{}: no points", path.display())));
    }
    Ok(out)
}

/// Read `airway_id,start_idx,end_idx` rows into per-airway inclusive ranges.
pub fn read_flag_ranges_csv(path: &Path) -> Result<BTreeMap<String, Vec<(usize, usize)>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error(path))?;
    let mut out: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error(path))?;
        if rec.len() != 3 {
            return Err(Error::Config(format!("{}: expected 3 columns, found {}", path.display(), rec.len())));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Config(format!("{}: bad section index `{s}`", path.display())))
        };
        out.entry(rec[0].to_string())
            .or_default()
            .push((parse(&rec[1])?, parse(&rec[2])?));
    }
    Ok(out)
}

fn load_any(path: &Path) -> Result<Volume> {
    let fmt = VolumeFormat::from_path(path)
        .ok_or_else(|| Error::Config(format!("{}: unknown volume format", path.display())))?;
    load_volume(path, fmt)
}

/// Result of the opposite exclusion choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternateFit {
    pub exclude_bifurcations: bool,
    pub slope: f64,
    pub intercept: f64,
    pub see: f64,
    pub r2: f64,
    pub n_used: usize,
}

/// Per-airway JSON written by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaperJson {
    #[serde(flatten)]
    pub report: TaperReport,
    pub exclude_bifurcations: bool,
    pub n_invalid: usize,
    pub n_sections: usize,
    pub starts_at_carina: bool,
    pub alternate: Option<AlternateFit>,
}

impl TaperJson {
    pub fn new(r: &AirwayResult, params: &AnalysisParams, hash: &str) -> Self {
        TaperJson {
            report: TaperReport::new(&r.airway_id, &r.fit, hash),
            exclude_bifurcations: params.exclude_bifurcations,
            n_invalid: r.fit.n_invalid,
            n_sections: r.sections.len(),
            starts_at_carina: r.path.starts_at_carina,
            alternate: r.alternate.map(|a| AlternateFit {
                exclude_bifurcations: !params.exclude_bifurcations,
                slope: a.slope,
                intercept: a.intercept,
                see: a.see,
                r2: a.r2,
                n_used: a.n_used,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirwayStatus {
    pub airway_id: String,
    pub ok: bool,
    pub error: Option<String>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub config_hash: String,
    pub params: AnalysisParams,
    pub n_ok: usize,
    pub n_failed: usize,
    pub airways: Vec<AirwayStatus>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "airway id `{id}` must use only letters, digits, '-', '_' or '.'"
        )))
    }
}

/// Run the full analysis and write per-airway CSV, JSON and SVG files plus
/// `summary.json` into the output directory. Airways are written in id order.
pub fn run_analyze(cfg: &RunConfig) -> Result<AnalyzeSummary> {
    cfg.validate()?;
    let distal = read_points_csv(&cfg.distal_points)?;
    for (id, _) in &distal {
        check_id(id)?;
    }
    let starts = cfg.start_points.as_deref().map(read_points_csv).transpose()?;
    let flags = match &cfg.bifurcation_flags {
        Some(p) => read_flag_ranges_csv(p)?,
        None => BTreeMap::new(),
    };
    let ct = load_any(&cfg.ct)?;
    let seg = load_any(&cfg.seg)?;

    let mut inputs: Vec<AirwayInput> = distal
        .into_iter()
        .map(|(airway_id, distal)| AirwayInput { airway_id, distal })
        .collect();
    inputs.sort_by(|a, b| a.airway_id.cmp(&b.airway_id));
    let results = analyze_airways(
        &ct,
        &seg,
        starts.as_deref(),
        &inputs,
        &flags,
        &cfg.params,
        cfg.execution,
    )?;

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = cfg.params.config_hash();
    let mut statuses = Vec::new();
    for (input, r) in inputs.iter().zip(&results) {
        let id = &input.airway_id;
        match r {
            Ok(r) => {
                let mut buf = Vec::new();
                write_sections_csv(&mut buf, id, &r.sections, &r.profile.flags())?;
                write_file(&out.join(format!("{id}.sections.csv")), &buf)?;
                let mut buf = Vec::new();
                write_samples_csv(&mut buf, id, &r.samples)?;
                write_file(&out.join(format!("{id}.centreline.csv")), &buf)?;
                let json = serde_json::to_string_pretty(&TaperJson::new(r, &cfg.params, &hash))?;
                write_file(&out.join(format!("{id}.taper.json")), json + "\n")?;
                write_file(
                    &out.join(format!("{id}.profile.svg")),
                    report::profile_svg(id, &r.profile, Some(&r.fit)),
                )?;
                statuses.push(AirwayStatus {
                    airway_id: id.clone(),
                    ok: true,
                    error: None,
                    slope: Some(r.fit.slope),
                });
            }
            Err(e) => {
                log::warn!("airway {id}: {e}");
                statuses.push(AirwayStatus {
                    airway_id: id.clone(),
                    ok: false,
                    error: Some(e.to_string()),
                    slope: None,
                });
            }
        }
    }
    let n_ok = statuses.iter().filter(|s| s.ok).count();
    let summary = AnalyzeSummary {
        config_hash: hash,
        params: cfg.params.clone(),
        n_ok,
        n_failed: statuses.len() - n_ok,
        airways: statuses,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    write_file(&out.join("summary.json"), json + "\n")?;
    Ok(summary)
}

/// Where a phantom spec comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSource {
    Preset(String),
    File(PathBuf),
}

/// Generate a phantom and write its volumes, ground truth and point files.
pub fn run_phantom(source: &PhantomSource, output_dir: &Path, compress: bool, exec: Execution) -> Result<Phantom> {
    let spec: PhantomSpec = match source {
        PhantomSource::Preset(name) => preset(name)?,
        PhantomSource::File(path) => PhantomSpec::load(path)?,
    };
    let p = generate_phantom(&spec, exec)?;
    p.write(output_dir, compress)?;
    Ok(p)
}

/// Every `*.taper.json` in `dir`, sorted by airway id.
pub fn load_taper_dir(dir: &Path) -> Result<Vec<TaperJson>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_taper = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".taper.json"));
        if !is_taper {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.push(serde_json::from_str::<TaperJson>(&text)?);
    }
    out.sort_by(|a, b| a.report.airway_id.cmp(&b.report.airway_id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    /// min, lower quartile, median, upper quartile, max
    pub five_numbers: [f64; 5],
}

impl GroupSummary {
    fn new(label: &str, v: &[f64]) -> Result<Self> {
        let five = report::five_numbers(v).ok_or(Error::EmptySample)?;
        Ok(GroupSummary {
            label: label.to_string(),
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            five_numbers: five,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub airway_ids: Vec<String>,
    /// Slope differences are first group minus second group.
    pub slope_agreement: BlandAltmanResult,
    pub slope_pearson_r: Option<f64>,
    pub see_rank_sum: RankSumResult,
    pub see_a: GroupSummary,
    pub see_b: GroupSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config_hash: String,
    pub group_a: GroupSummary,
    pub group_b: GroupSummary,
    pub slope_rank_sum: RankSumResult,
    pub paired: Option<PairedSummary>,
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Compare the taper rates of two result directories.
///
/// With `paired`, airways present in both directories are matched by id
/// (typically the same airways analyzed with and without bifurcation
/// exclusion) and slope agreement plus a rank-sum test on the standard
/// errors are added.
pub fn compare_groups(a: &[TaperJson], b: &[TaperJson], label_a: &str, label_b: &str, paired: bool) -> Result<CompareReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let hash = a[0].report.config_hash.clone();
    if a.iter().chain(b).any(|t| t.report.config_hash != hash) {
        return Err(Error::Config("results were produced with different settings (config hash mismatch)".into()));
    }
    let sa: Vec<f64> = a.iter().map(|t| t.report.slope).collect();
    let sb: Vec<f64> = b.iter().map(|t| t.report.slope).collect();
    let paired = if paired {
        let mut ids = Vec::new();
        let (mut xa, mut xb, mut ea, mut eb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for ta in a {
            if let Some(tb) = b.iter().find(|t| t.report.airway_id == ta.report.airway_id) {
                ids.push(ta.report.airway_id.clone());
                xa.push(ta.report.slope);
                xb.push(tb.report.slope);
                ea.push(ta.report.see);
                eb.push(tb.report.see);
            }
        }
        if ids.is_empty() {
            return Err(Error::Config("paired comparison found no airway ids in common".into()));
        }
        Some(PairedSummary {
            airway_ids: ids,
            slope_agreement: bland_altman(&xa, &xb)?,
            slope_pearson_r: pearson_r(&xa, &xb).ok(),
            see_rank_sum: wilcoxon_rank_sum(&ea, &eb)?,
            see_a: GroupSummary::new(label_a, &ea)?,
            see_b: GroupSummary::new(label_b, &eb)?,
        })
    } else {
        None
    };
    Ok(CompareReport {
        config_hash: hash,
        group_a: GroupSummary::new(label_a, &sa)?,
        group_b: GroupSummary::new(label_b, &sb)?,
        slope_rank_sum: wilcoxon_rank_sum(&sa, &sb)?,
        paired,
    })
}

/// Load two result directories, compare them and write `comparison.json`
/// with box-plot (and, when paired, Bland–Altman) SVGs.
pub fn run_compare(dir_a: &Path, dir_b: &Path, paired: bool, output_dir: &Path) -> Result<CompareReport> {
    let a = load_taper_dir(dir_a)?;
    let b = load_taper_dir(dir_b)?;
    let (la, lb) = (dir_label(dir_a), dir_label(dir_b));
    let rep = compare_groups(&a, &b, &la, &lb, paired)?;
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let sa: Vec<f64> = a.iter().map(|t| t.report.slope).collect();
    let sb: Vec<f64> = b.iter().map(|t| t.report.slope).collect();
    write_file(
        &output_dir.join("slopes_boxplot.svg"),
        report::box_plot_svg(
            &format!("Taper rate, rank-sum p = {:.3e}", rep.slope_rank_sum.p_two_sided),
            "taper rate (1/mm)",
            &[(&la, &sa), (&lb, &sb)],
        ),
    )?;
    if let Some(p) = &rep.paired {
        let pick = |g: &[TaperJson], f: fn(&TaperJson) -> f64| -> Vec<f64> {
            p.airway_ids
                .iter()
                .map(|id| f(g.iter().find(|t| &t.report.airway_id == id).expect("paired id")))
                .collect()
        };
        let (xa, xb) = (pick(&a, |t| t.report.slope), pick(&b, |t| t.report.slope));
        let (ea, eb) = (pick(&a, |t| t.report.see), pick(&b, |t| t.report.see));
        write_file(
            &output_dir.join("bland_altman.svg"),
            report::bland_altman_svg(&format!("Taper rate: {la} vs {lb}"), &xa, &xb, &p.slope_agreement),
        )?;
        write_file(
            &output_dir.join("see_boxplot.svg"),
            report::box_plot_svg(
                &format!("Standard error of estimate, rank-sum p = {:.3e}", p.see_rank_sum.p_two_sided),
                "see (ln mm²)",
                &[(&la, &ea), (&lb, &eb)],
            ),
        )?;
    }
    let json = serde_json::to_string_pretty(&rep)?;
    write_file(&output_dir.join("comparison.json"), json + "\n")?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taper::TaperReport;

    fn taper(id: &str, slope: f64, see: f64, hash: &str) -> TaperJson {
        let r = TaperResult {
            slope,
            intercept: 1.0,
            see,
            r2: 0.9,
            n_used: 10,
            excluded_bifurcation: 0,
            n_invalid: 0,
        };
        TaperJson {
            report: TaperReport::new(id, &r, hash),
            exclude_bifurcations: false,
            n_invalid: 0,
            n_sections: 10,
            starts_at_carina: true,
            alternate: None,
        }
    }

    #[test]
    fn hash_ignores_exclusion_but_not_settings() {
        let a = AnalysisParams::default();
        let b = AnalysisParams {
            exclude_bifurcations: true,
            ..a.clone()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
        let mut c = a.clone();
        c.section.calibration_offset_mm = 0.38;
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn separated_groups_of_three() {
        let a: Vec<_> = [-0.02, -0.021, -0.019]
            .iter()
            .enumerate()
            .map(|(i, &s)| taper(&format!("a{i}"), s, 0.1, "h"))
            .collect();
        let b: Vec<_> = [-0.005, -0.006, -0.004]
            .iter()
            .enumerate()
            .map(|(i, &s)| taper(&format!("b{i}"), s, 0.1, "h"))
            .collect();
        let rep = compare_groups(&a, &b, "a", "b", false).unwrap();
        assert!((rep.slope_rank_sum.p_two_sided - 0.1).abs() < 1e-12);
        let same = compare_groups(&a, &a, "a", "a", false).unwrap();
        assert_eq!(same.slope_rank_sum.p_two_sided, 1.0);
    }

    #[test]
    fn paired_mean_difference() {
        let a: Vec<_> = (0..6).map(|i| taper(&format!("{i}"), -0.01 * i as f64, 0.2 + 0.01 * i as f64, "h")).collect();
        let b: Vec<_> = (0..6)
            .map(|i| taper(&format!("{i}"), -0.01 * i as f64 + 0.001 * (i * i) as f64, 0.1, "h"))
            .collect();
        let rep = compare_groups(&a, &b, "with", "without", true).unwrap();
        let p = rep.paired.unwrap();
        let oracle: f64 = (0..6).map(|i| -0.001 * (i * i) as f64).sum::<f64>() / 6.0;
        assert!((p.slope_agreement.mean_diff - oracle).abs() < 1e-12);
        assert_eq!(p.airway_ids.len(), 6);
    }

    #[test]
    fn mixed_configs_are_refused() {
        let a = vec![taper("1", 0.1, 0.1, "h1")];
        let b = vec![taper("1", 0.1, 0.1, "h2")];
        assert!(matches!(compare_groups(&a, &b, "a", "b", false), Err(Error::Config(_))));
        assert!(matches!(compare_groups(&[], &b, "a", "b", false), Err(Error::EmptySample)));
    }

    #[test]
    fn divergence_of_paths() {
        let p = |v: &[[usize; 3]]| VoxelPath {
            voxels: v.to_vec(),
            starts_at_carina: true,
        };
        let a = p(&[[0, 0, 0], [0, 0, 1], [0, 0, 2], [1, 0, 3]]);
        let b = p(&[[0, 0, 0], [0, 0, 1], [0, 1, 2]]);
        let c = p(&[[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 0, 3]]);
        // prefix paths are not branches
        let d = p(&[[0, 0, 0], [0, 0, 1]]);
        assert_eq!(divergence_points(&[a, b, c, d]), vec![[0, 0, 1], [0, 0, 2]]);
    }

    #[test]
    fn point_and_flag_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "airway_id,x,y,z\n a , 1, 2, 3\nb,4,5,6\n").unwrap();
        assert_eq!(
            read_points_csv(&p).unwrap(),
            vec![("a".to_string(), [1, 2, 3]), ("b".to_string(), [4, 5, 6])]
        );
        std::fs::write(&p, "airway_id,x,y,z\na,1,2,3\na,4,5,6\n").unwrap();
        assert!(read_points_csv(&p).is_err());
        std::fs::write(&p, "airway_id,x,y,z\na,1,-2,3\n").unwrap();
        assert!(read_points_csv(&p).is_err());
        let f = dir.path().join("f.csv");
        std::fs::write(&f, "airway_id,start_idx,end_idx\na,0,4\na,10,12\nb,3,3\n").unwrap();
        let m = read_flag_ranges_csv(&f).unwrap();
        assert_eq!(m["a"], vec![(0, 4), (10, 12)]);
        assert_eq!(m["b"], vec![(3, 3)]);
        assert!(check_id("../x").is_err());
        assert!(check_id("y40_a").is_ok());
    }
}
