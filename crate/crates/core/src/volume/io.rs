//! NRRD and MetaImage readers/writers (little-endian, 3-D, axis-aligned).

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::{GzDecoder, ZlibDecoder};
use flate2::write::{GzEncoder, ZlibEncoder};
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::{ElementType, Volume, VolumeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeFormat {
    Nrrd,
    MetaImage,
}

impl VolumeFormat {
    /// Guess the format from a file extension (`.nrrd`/`.nhdr`, `.mha`/`.mhd`).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "nrrd" | "nhdr" => Some(VolumeFormat::Nrrd),
            "mha" | "mhd" => Some(VolumeFormat::MetaImage),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    /// gzip (NRRD) or zlib (MetaImage) payload compression.
    pub compress: bool,
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Header(format!("bad number `{t}` in {what}")))
        })
        .collect()
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Header(format!("bad integer `{t}` in {what}")))
        })
        .collect()
}

fn triple<T: Copy>(v: Vec<T>, what: &str) -> Result<[T; 3]> {
    if v.len() != 3 {
        return Err(Error::Header(format!("{what} needs 3 values, got {}", v.len())));
    }
    Ok([v[0], v[1], v[2]])
}

fn decode_payload(bytes: &[u8], ty: ElementType, count: usize) -> Result<Vec<f64>> {
    let size = ty.size();
    if bytes.len() != count * size {
        return Err(Error::PayloadSize {
            expected: count,
            found: bytes.len() / size,
        });
    }
    let out = match ty {
        ElementType::U8 => bytes.iter().map(|&b| b as f64).collect(),
        ElementType::I16 => bytes
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        ElementType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        ElementType::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(out)
}

fn encode_payload(v: &Volume) -> Result<Vec<u8>> {
    let ty = v.element_type();
    if let Some(bad) = v.data().iter().find(|&&x| !ty.represents(x)) {
        return Err(Error::InvalidVolume(format!(
            "value {bad} is not representable as {ty:?}"
        )));
    }
    let mut out = Vec::with_capacity(v.len() * ty.size());
    for &x in v.data() {
        match ty {
            ElementType::U8 => out.push(x as u8),
            ElementType::I16 => out.extend_from_slice(&(x as i16).to_le_bytes()),
            ElementType::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            ElementType::F64 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    Ok(out)
}

fn read_all(mut r: impl Read, path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

/// Split a file into its text header lines and the bytes after the header
/// terminator (blank line for NRRD, the `ElementDataFile` line for MetaImage).
fn split_header(bytes: &[u8], is_end: impl Fn(&str) -> bool) -> (Vec<String>, usize) {
    let mut lines = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e + 1)
            .unwrap_or(bytes.len());
        let line = String::from_utf8_lossy(&bytes[pos..end])
            .trim_end_matches(['\n', '\r'])
            .to_string();
        pos = end;
        let stop = is_end(&line);
        lines.push(line);
        if stop {
            break;
        }
    }
    (lines, pos)
}

fn nrrd_type(s: &str) -> Result<ElementType> {
    match s.trim() {
        "signed short" | "short" | "short int" | "signed short int" | "int16" | "int16_t" => {
            Ok(ElementType::I16)
        }
        "uchar" | "unsigned char" | "uint8" | "uint8_t" => Ok(ElementType::U8),
        "float" => Ok(ElementType::F32),
        "double" => Ok(ElementType::F64),
        other => Err(Error::UnsupportedType(other.to_string())),
    }
}

fn nrrd_type_name(t: ElementType) -> &'static str {
    match t {
        ElementType::U8 => "uchar",
        ElementType::I16 => "short",
        ElementType::F32 => "float",
        ElementType::F64 => "double",
    }
}

/// Parse a `(a,b,c)` vector; `none` yields `None`.
fn parse_paren_vector(s: &str) -> Result<Option<[f64; 3]>> {
    let s = s.trim();
    if s == "none" {
        return Ok(None);
    }
    let inner = s
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::Header(format!("expected (x,y,z), got `{s}`")))?;
    Ok(Some(triple(parse_f64_list(inner, "vector")?, "vector")?))
}

fn parse_space_directions(s: &str) -> Result<[f64; 3]> {
    let vecs: Vec<&str> = s
        .split(')')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.trim_start_matches('('))
        .collect();
    if vecs.len() != 3 {
        return Err(Error::Header(format!("space directions `{s}` must hold 3 vectors")));
    }
    let mut spacing = [0.0; 3];
    for (axis, v) in vecs.iter().enumerate() {
        let comps = triple(parse_f64_list(v, "space directions")?, "space directions")?;
        for (k, &c) in comps.iter().enumerate() {
            if k != axis && c != 0.0 {
                return Err(Error::Header(
                    "non-diagonal space directions (oriented volumes) are not supported".into(),
                ));
            }
        }
        spacing[axis] = comps[axis].abs();
    }
    Ok(spacing)
}

fn load_nrrd(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(b"NRRD000") {
        return Err(Error::Header("missing NRRD magic".into()));
    }
    let (lines, data_start) = split_header(&bytes, |l| l.is_empty());
    let mut fields: HashMap<String, String> = HashMap::new();
    for line in lines.iter().skip(1) {
        if line.is_empty() || line.starts_with('#') || line.contains(":=") {
            continue;
        }
        let (k, v) = line
            .split_once(": ")
            .ok_or_else(|| Error::Header(format!("bad NRRD field line `{line}`")))?;
        fields.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Header(format!("missing `{k}` field")))
    };
    if get("dimension")?.trim() != "3" {
        return Err(Error::Header("only 3-D volumes are supported".into()));
    }
    let ty = nrrd_type(get("type")?)?;
    let dims = triple(parse_usize_list(get("sizes")?, "sizes")?, "sizes")?;
    let spacing = if let Some(sd) = fields.get("space directions") {
        parse_space_directions(sd)?
    } else if let Some(sp) = fields.get("spacings") {
        triple(parse_f64_list(sp, "spacings")?, "spacings")?
    } else {
        [1.0; 3]
    };
    let origin = match fields.get("space origin") {
        Some(o) => parse_paren_vector(o)?.unwrap_or([0.0; 3]),
        None => [0.0; 3],
    };
    if let Some(endian) = fields.get("endian") {
        if endian != "little" && ty.size() > 1 {
            return Err(Error::UnsupportedType(format!("{endian}-endian payload")));
        }
    }
    let encoding = fields.get("encoding").map(String::as_str).unwrap_or("raw");
    let skip: usize = fields
        .get("byte skip")
        .map(|s| s.parse().map_err(|_| Error::Header("bad byte skip".into())))
        .transpose()?
        .unwrap_or(0);

    let raw: Vec<u8> = match fields.get("data file").or_else(|| fields.get("datafile")) {
        Some(file) => {
            let p = path.parent().unwrap_or(Path::new(".")).join(file);
            fs::read(&p).map_err(|e| Error::io(&p, e))?
        }
        None => bytes[data_start..].to_vec(),
    };
    let payload = match encoding {
        "raw" => raw,
        "gzip" | "gz" => read_all(GzDecoder::new(&raw[..]), path)?,
        other => return Err(Error::Header(format!("unsupported encoding `{other}`"))),
    };
    let payload = payload
        .get(skip..)
        .ok_or_else(|| Error::Header("byte skip beyond payload".into()))?;
    let count = dims.iter().product();
    let data = decode_payload(payload, ty, count)?;
    Volume::with_element_type(dims, spacing, origin, data, VolumeKind::Intensity, ty)
}

fn write_nrrd(v: &Volume, path: &Path, opts: WriteOptions) -> Result<()> {
    let detached = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("nhdr"));
    let [nx, ny, nz] = v.dims();
    let [sx, sy, sz] = v.spacing();
    let [ox, oy, oz] = v.origin();
    let mut header = String::new();
    header.push_str("NRRD0004\n");
    header.push_str(&format!("type: {}\n", nrrd_type_name(v.element_type())));
    header.push_str("dimension: 3\n");
    header.push_str("space dimension: 3\n");
    header.push_str(&format!("sizes: {nx} {ny} {nz}\n"));
    header.push_str(&format!(
        "space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})\n"
    ));
    header.push_str(&format!("space origin: ({ox},{oy},{oz})\n"));
    header.push_str("endian: little\n");
    header.push_str(&format!(
        "encoding: {}\n",
        if opts.compress { "gzip" } else { "raw" }
    ));
    let mut payload = encode_payload(v)?;
    if opts.compress {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&payload).map_err(|e| Error::io(path, e))?;
        payload = enc.finish().map_err(|e| Error::io(path, e))?;
    }
    if detached {
        let data_name = detached_data_name(path, if opts.compress { "raw.gz" } else { "raw" });
        header.push_str(&format!("data file: {}\n", data_name.display()));
        let data_path = path.with_file_name(&data_name);
        fs::write(&data_path, &payload).map_err(|e| Error::io(&data_path, e))?;
        header.push('\n');
        fs::write(path, header).map_err(|e| Error::io(path, e))
    } else {
        header.push('\n');
        let mut out = header.into_bytes();
        out.extend_from_slice(&payload);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn detached_data_name(path: &Path, ext: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default();
    PathBuf::from(format!("{}.{ext}", stem.to_string_lossy()))
}

fn meta_type(s: &str) -> Result<ElementType> {
    match s.trim() {
        "MET_SHORT" => Ok(ElementType::I16),
        "MET_UCHAR" => Ok(ElementType::U8),
        "MET_FLOAT" => Ok(ElementType::F32),
        "MET_DOUBLE" => Ok(ElementType::F64),
        other => Err(Error::UnsupportedType(other.to_string())),
    }
}

fn meta_type_name(t: ElementType) -> &'static str {
    match t {
        ElementType::U8 => "MET_UCHAR",
        ElementType::I16 => "MET_SHORT",
        ElementType::F32 => "MET_FLOAT",
        ElementType::F64 => "MET_DOUBLE",
    }
}

fn is_true(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "true" | "1")
}

fn load_metaimage(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (lines, data_start) = split_header(&bytes, |l| {
        l.split_once('=')
            .is_some_and(|(k, _)| k.trim() == "ElementDataFile")
    });
    let mut fields: HashMap<String, String> = HashMap::new();
    for line in &lines {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Header(format!("bad MetaImage line `{line}`")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Header(format!("missing `{k}`")))
    };
    if get("NDims")? != "3" {
        return Err(Error::Header("only 3-D volumes are supported".into()));
    }
    let dims = triple(parse_usize_list(get("DimSize")?, "DimSize")?, "DimSize")?;
    let ty = meta_type(get("ElementType")?)?;
    let spacing = match fields.get("ElementSpacing").or_else(|| fields.get("ElementSize")) {
        Some(s) => triple(parse_f64_list(s, "ElementSpacing")?, "ElementSpacing")?,
        None => [1.0; 3],
    };
    let origin = match ["Offset", "Origin", "Position"]
        .iter()
        .find_map(|k| fields.get(*k))
    {
        Some(s) => triple(parse_f64_list(s, "Offset")?, "Offset")?,
        None => [0.0; 3],
    };
    if let Some(tm) = fields
        .get("TransformMatrix")
        .or_else(|| fields.get("Rotation"))
        .or_else(|| fields.get("Orientation"))
    {
        let m = parse_f64_list(tm, "TransformMatrix")?;
        let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        if m.len() != 9 || m.iter().zip(identity).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::Header(
                "non-identity TransformMatrix (oriented volumes) is not supported".into(),
            ));
        }
    }
    for key in ["ElementByteOrderMSB", "BinaryDataByteOrderMSB"] {
        if fields.get(key).is_some_and(|v| is_true(v)) && ty.size() > 1 {
            return Err(Error::UnsupportedType("big-endian payload".into()));
        }
    }
    let compressed = fields.get("CompressedData").is_some_and(|v| is_true(v));
    let data_file = get("ElementDataFile")?;
    let raw = if data_file == "LOCAL" {
        bytes[data_start..].to_vec()
    } else {
        let p = path.parent().unwrap_or(Path::new(".")).join(data_file);
        fs::read(&p).map_err(|e| Error::io(&p, e))?
    };
    let payload = if compressed {
        read_all(ZlibDecoder::new(&raw[..]), path)?
    } else {
        raw
    };
    let count = dims.iter().product();
    let data = decode_payload(&payload, ty, count)?;
    Volume::with_element_type(dims, spacing, origin, data, VolumeKind::Intensity, ty)
}

fn write_metaimage(v: &Volume, path: &Path, opts: WriteOptions) -> Result<()> {
    let detached = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("mhd"));
    let [nx, ny, nz] = v.dims();
    let [sx, sy, sz] = v.spacing();
    let [ox, oy, oz] = v.origin();
    let mut payload = encode_payload(v)?;
    if opts.compress {
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&payload).map_err(|e| Error::io(path, e))?;
        payload = enc.finish().map_err(|e| Error::io(path, e))?;
    }
    let mut header = String::new();
    header.push_str("ObjectType = Image\n");
    header.push_str("NDims = 3\n");
    header.push_str("BinaryData = True\n");
    header.push_str("BinaryDataByteOrderMSB = False\n");
    header.push_str(&format!(
        "CompressedData = {}\n",
        if opts.compress { "True" } else { "False" }
    ));
    if opts.compress {
        header.push_str(&format!("CompressedDataSize = {}\n", payload.len()));
    }
    header.push_str("TransformMatrix = 1 0 0 0 1 0 0 0 1\n");
    header.push_str(&format!("Offset = {ox} {oy} {oz}\n"));
    header.push_str(&format!("ElementSpacing = {sx} {sy} {sz}\n"));
    header.push_str(&format!("DimSize = {nx} {ny} {nz}\n"));
    header.push_str(&format!("ElementType = {}\n", meta_type_name(v.element_type())));
    if detached {
        let data_name = detached_data_name(path, if opts.compress { "zraw" } else { "raw" });
        header.push_str(&format!("ElementDataFile = {}\n", data_name.display()));
        let data_path = path.with_file_name(&data_name);
        fs::write(&data_path, &payload).map_err(|e| Error::io(&data_path, e))?;
        fs::write(path, header).map_err(|e| Error::io(path, e))
    } else {
        header.push_str("ElementDataFile = LOCAL\n");
        let mut out = header.into_bytes();
        out.extend_from_slice(&payload);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Read a volume. The result is tagged [`VolumeKind::Intensity`]; use
/// [`Volume::to_binary`] for segmentations.
pub fn load_volume(path: impl AsRef<Path>, format: VolumeFormat) -> Result<Volume> {
    let path = path.as_ref();
    match format {
        VolumeFormat::Nrrd => load_nrrd(path),
        VolumeFormat::MetaImage => load_metaimage(path),
    }
}

/// Write a volume in its own element type. `.nhdr`/`.mhd` paths produce a
/// detached header plus a raw payload file next to it.
pub fn write_volume(
    v: &Volume,
    path: impl AsRef<Path>,
    format: VolumeFormat,
    opts: WriteOptions,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        VolumeFormat::Nrrd => write_nrrd(v, path, opts),
        VolumeFormat::MetaImage => write_metaimage(v, path, opts),
    }
}
