//! Volumetric image container.
//!
//! Storage is x-fastest; voxel `(i, j, k)` sits at world position
//! `origin + (i, j, k) ∘ spacing` (mm). No orientation matrix is carried.

mod edt;
mod interp;
pub mod io;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

pub use interp::Interpolation;
pub use io::{load_volume, write_volume, VolumeFormat, WriteOptions};

/// Continuous world coordinate in millimetres.
pub type WorldPoint = Point3<f64>;

/// Integer voxel index `[x, y, z]`.
pub type VoxelIndex = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Intensity,
    Binary,
    Distance,
}

/// On-disk scalar type. Values are held as `f64` in memory, which represents
/// every supported type exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementType {
    U8,
    I16,
    F32,
    F64,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::I16 => 2,
            ElementType::F32 => 4,
            ElementType::F64 => 8,
        }
    }

    /// Whether `v` survives a round trip through this type unchanged.
    pub fn represents(self, v: f64) -> bool {
        match self {
            ElementType::U8 => v.fract() == 0.0 && (0.0..=255.0).contains(&v),
            ElementType::I16 => v.fract() == 0.0 && (-32768.0..=32767.0).contains(&v),
            ElementType::F32 => v.is_nan() || (v as f32) as f64 == v,
            ElementType::F64 => true,
        }
    }

    /// Nearest value representable in this type.
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            ElementType::U8 => v.round().clamp(0.0, 255.0),
            ElementType::I16 => v.round().clamp(-32768.0, 32767.0),
            ElementType::F32 => v as f32 as f64,
            ElementType::F64 => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data: Vec<f64>,
    kind: VolumeKind,
    element_type: ElementType,
}

impl Volume {
    /// Build a volume, checking every container invariant.
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        data: Vec<f64>,
        kind: VolumeKind,
    ) -> Result<Self> {
        let element_type = match kind {
            VolumeKind::Binary => ElementType::U8,
            _ => ElementType::F64,
        };
        Self::with_element_type(dims, spacing, origin, data, kind, element_type)
    }

    pub fn with_element_type(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        data: Vec<f64>,
        kind: VolumeKind,
        element_type: ElementType,
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("dims {dims:?} must be >= 1")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidVolume(format!(
                "spacing {spacing:?} must be positive"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidVolume("origin must be finite".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::PayloadSize {
                expected: n,
                found: data.len(),
            });
        }
        match kind {
            VolumeKind::Binary if data.iter().any(|&v| v != 0.0 && v != 1.0) => {
                return Err(Error::InvalidVolume(
                    "binary volume holds values other than 0/1".into(),
                ))
            }
            VolumeKind::Distance if data.iter().any(|&v| !(v >= 0.0)) => {
                return Err(Error::InvalidVolume(
                    "distance volume holds negative values".into(),
                ))
            }
            _ => {}
        }
        Ok(Volume {
            dims,
            spacing,
            origin,
            data,
            kind,
            element_type,
        })
    }

    pub fn filled(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        value: f64,
        kind: VolumeKind,
    ) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, origin, vec![value; n], kind)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn kind(&self) -> VolumeKind {
        self.kind
    }
    pub fn element_type(&self) -> ElementType {
        self.element_type
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Re-tag the on-disk type, rounding values to what it can hold.
    pub fn quantized(mut self, element_type: ElementType) -> Self {
        for v in &mut self.data {
            *v = element_type.quantize(*v);
        }
        self.element_type = element_type;
        self
    }

    #[inline]
    pub fn linear_index(&self, [x, y, z]: VoxelIndex) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn voxel_of(&self, i: usize) -> VoxelIndex {
        let x = i % self.dims[0];
        let r = i / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, v: VoxelIndex) -> f64 {
        self.data[self.linear_index(v)]
    }

    pub fn contains_voxel(&self, v: [i64; 3]) -> bool {
        (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < self.dims[a])
    }

    /// World position of a (possibly fractional) voxel index.
    pub fn index_to_world(&self, idx: [f64; 3]) -> WorldPoint {
        WorldPoint::new(
            self.origin[0] + idx[0] * self.spacing[0],
            self.origin[1] + idx[1] * self.spacing[1],
            self.origin[2] + idx[2] * self.spacing[2],
        )
    }

    pub fn voxel_to_world(&self, v: VoxelIndex) -> WorldPoint {
        self.index_to_world([v[0] as f64, v[1] as f64, v[2] as f64])
    }

    pub fn world_to_index(&self, p: &WorldPoint) -> [f64; 3] {
        [
            (p.x - self.origin[0]) / self.spacing[0],
            (p.y - self.origin[1]) / self.spacing[1],
            (p.z - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Nearest voxel to a world point, if it lies inside the grid.
    pub fn world_to_voxel(&self, p: &WorldPoint) -> Option<VoxelIndex> {
        let c = self.world_to_index(p);
        let r = [c[0].round(), c[1].round(), c[2].round()];
        if (0..3).all(|a| r[a] >= 0.0 && (r[a] as usize) < self.dims[a]) {
            Some([r[0] as usize, r[1] as usize, r[2] as usize])
        } else {
            None
        }
    }

    /// Threshold into a binary volume (`value > threshold` is foreground).
    pub fn to_binary(&self, threshold: f64) -> Volume {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            data: self
                .data
                .iter()
                .map(|&v| if v > threshold { 1.0 } else { 0.0 })
                .collect(),
            kind: VolumeKind::Binary,
            element_type: ElementType::U8,
        }
    }

    /// Interpolate at a world point. Points up to half a voxel beyond the
    /// outer voxel centres clamp to the edge; anything further is an error.
    pub fn sample(&self, p: &WorldPoint, method: Interpolation) -> Result<f64> {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::NonFinite);
        }
        let c = self.world_to_index(p);
        const EPS: f64 = 1e-9;
        let inside = (0..3).all(|a| c[a] >= -0.5 - EPS && c[a] <= self.dims[a] as f64 - 0.5 + EPS);
        if !inside {
            return Err(Error::OutOfBounds {
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        Ok(interp::interpolate(self, c, method))
    }

    /// Like [`Volume::sample`] but clamps far-away points to the bounding
    /// box instead of failing. The flag reports whether `p` was in bounds.
    pub fn sample_clamped(&self, p: &WorldPoint, method: Interpolation) -> (f64, bool) {
        let c = self.world_to_index(p);
        let inside = (0..3).all(|a| c[a] >= -0.5 && c[a] <= self.dims[a] as f64 - 0.5);
        (interp::interpolate(self, c, method), inside)
    }

    /// Exact Euclidean distance (mm) from each foreground voxel centre to
    /// the nearest background voxel centre. Space outside the grid counts
    /// as background.
    pub fn distance_transform(&self, exec: Execution) -> Result<Volume> {
        if self.kind != VolumeKind::Binary {
            return Err(Error::InvalidVolume(
                "distance transform needs a binary volume".into(),
            ));
        }
        if self.data.iter().all(|&v| v == 0.0) {
            return Err(Error::EmptySegmentation);
        }
        let data = edt::euclidean_distance(self, exec);
        Ok(Volume {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            data,
            kind: VolumeKind::Distance,
            element_type: ElementType::F64,
        })
    }

    pub(crate) fn from_parts_unchecked(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        data: Vec<f64>,
        kind: VolumeKind,
        element_type: ElementType,
    ) -> Volume {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        Volume {
            dims,
            spacing,
            origin,
            data,
            kind,
            element_type,
        }
    }
}

/// Free-function form of [`Volume::sample`].
pub fn sample(v: &Volume, p: &WorldPoint, method: Interpolation) -> Result<f64> {
    v.sample(p, method)
}

/// Free-function form of [`Volume::distance_transform`].
pub fn distance_transform(seg: &Volume, exec: Execution) -> Result<Volume> {
    seg.distance_transform(exec)
}
