//! Stage image storage: in memory, or spilled to a tiled scratch file.

use std::fs::File;
use std::os::unix::fs::FileExt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_color, overlap, ImagePlane, Shape};

/// Sample precision of stored images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Single,
    #[default]
    Double,
}

impl Precision {
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::Single => v as f32 as f64,
            Precision::Double => v,
        }
    }

    pub fn round_plane(self, img: &mut ImagePlane) {
        if self == Precision::Single {
            for v in img.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    fn bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            other => Err(Error::InvalidParameter(format!(
                "unknown precision {other:?}, expected single or double"
            ))),
        }
    }
}

/// Read access to rectangular windows of an image.
pub trait RegionSource {
    fn shape(&self) -> Shape;

    /// `height`×`width` window at `(x0, y0)`; samples outside the image are
    /// `fill`.
    fn read_region(&self, x0: i64, y0: i64, width: usize, height: usize, fill: &[f64]) -> Result<ImagePlane>;
}

impl RegionSource for ImagePlane {
    fn shape(&self) -> Shape {
        ImagePlane::shape(self)
    }

    fn read_region(&self, x0: i64, y0: i64, width: usize, height: usize, fill: &[f64]) -> Result<ImagePlane> {
        self.crop_padded(x0, y0, width, height, fill)
    }
}

/// A plane stored as square tiles in an anonymous scratch file. Edge tiles
/// are stored at full size.
#[derive(Debug)]
pub struct DiskPlane {
    file: File,
    shape: Shape,
    resolution: f64,
    tile: usize,
    tiles_x: usize,
    precision: Precision,
}

impl DiskPlane {
    pub fn create(dir: Option<&Path>, shape: Shape, resolution: f64, tile: usize, precision: Precision) -> Result<Self> {
        if tile == 0 {
            return Err(Error::InvalidParameter("scratch tile size must be positive".into()));
        }
        let file = match dir {
            Some(d) => tempfile::tempfile_in(d).map_err(|e| Error::io(d, e))?,
            None => tempfile::tempfile().map_err(|e| Error::io(std::env::temp_dir(), e))?,
        };
        let tiles_x = shape.width.div_ceil(tile);
        let tiles_y = shape.height.div_ceil(tile);
        let len = (tiles_x * tiles_y * shape.channels * tile * tile * precision.bytes()) as u64;
        file.set_len(len).map_err(|e| Error::io("<scratch>", e))?;
        Ok(Self {
            file,
            shape,
            resolution,
            tile,
            tiles_x,
            precision,
        })
    }

    /// Byte offset of sample `(c, y, x)`; consecutive `x` within one tile
    /// row are contiguous.
    fn offset(&self, c: usize, y: usize, x: usize) -> u64 {
        let t = self.tile;
        let tile_index = (y / t) * self.tiles_x + x / t;
        let within = (c * t + y % t) * t + x % t;
        ((tile_index * self.shape.channels * t * t + within) * self.precision.bytes()) as u64
    }

    /// Calls `f(y, x, len)` for each tile-row segment of the in-bounds part
    /// of the window.
    fn spans(&self, px: usize, py: usize, w: usize, h: usize, mut f: impl FnMut(usize, usize, usize) -> Result<()>) -> Result<()> {
        for y in py..py + h {
            let mut x = px;
            while x < px + w {
                let end = ((x / self.tile + 1) * self.tile).min(px + w);
                f(y, x, end - x)?;
                x = end;
            }
        }
        Ok(())
    }

    fn read_span(&self, c: usize, y: usize, x: usize, out: &mut [f64]) -> Result<()> {
        let mut buf = vec![0u8; out.len() * self.precision.bytes()];
        self.file
            .read_exact_at(&mut buf, self.offset(c, y, x))
            .map_err(|e| Error::io("<scratch>", e))?;
        match self.precision {
            Precision::Double => {
                for (o, b) in out.iter_mut().zip(buf.chunks_exact(8)) {
                    *o = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
                }
            }
            Precision::Single => {
                for (o, b) in out.iter_mut().zip(buf.chunks_exact(4)) {
                    *o = f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64;
                }
            }
        }
        Ok(())
    }

    fn write_span(&self, c: usize, y: usize, x: usize, data: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(data.len() * self.precision.bytes());
        for &v in data {
            match self.precision {
                Precision::Double => buf.extend_from_slice(&v.to_le_bytes()),
                Precision::Single => buf.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
        self.file
            .write_all_at(&buf, self.offset(c, y, x))
            .map_err(|e| Error::io("<scratch>", e))
    }
}

impl RegionSource for DiskPlane {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn read_region(&self, x0: i64, y0: i64, width: usize, height: usize, fill: &[f64]) -> Result<ImagePlane> {
        let shape = Shape::new(self.shape.channels, height, width);
        let mut out = ImagePlane::with_color(shape, fill, self.resolution)?;
        let Some((px, py, wx, wy, w, h)) = overlap(x0, y0, width, height, self.shape.width, self.shape.height)
        else {
            return Ok(out);
        };
        for c in 0..shape.channels {
            self.spans(px, py, w, h, |y, x, len| {
                let dst = out.index(c, y - py + wy, x - px + wx);
                self.read_span(c, y, x, &mut out.data_mut()[dst..dst + len])
            })?;
        }
        Ok(out)
    }
}

/// Where a stage image lives.
#[derive(Debug)]
pub enum PlaneStore {
    Memory(ImagePlane),
    Disk(DiskPlane),
}

impl PlaneStore {
    /// A store filled with `color`, on disk when the extent exceeds
    /// `spill_extent`.
    pub fn new_filled(
        shape: Shape,
        resolution: f64,
        color: &[f64],
        precision: Precision,
        storage: &StorageConfig,
    ) -> Result<Self> {
        check_color(shape, color)?;
        let mut store = if shape.width.max(shape.height) > storage.spill_extent {
            PlaneStore::Disk(DiskPlane::create(
                storage.scratch_dir.as_deref(),
                shape,
                resolution,
                storage.tile,
                precision,
            )?)
        } else {
            PlaneStore::Memory(ImagePlane::zeros(shape, resolution))
        };
        store.fill_region(0, 0, shape.width, shape.height, color, precision)?;
        Ok(store)
    }

    pub fn resolution(&self) -> f64 {
        match self {
            PlaneStore::Memory(p) => p.resolution(),
            PlaneStore::Disk(d) => d.resolution,
        }
    }

    pub fn is_spilled(&self) -> bool {
        matches!(self, PlaneStore::Disk(_))
    }

    /// Writes the in-bounds part of `patch` at `(x0, y0)`, rounded to
    /// `precision`.
    pub fn write_region(&mut self, patch: &ImagePlane, x0: i64, y0: i64, precision: Precision) -> Result<()> {
        let s = self.shape();
        if patch.channels() != s.channels {
            return Err(Error::ShapeMismatch(format!(
                "writing {} channels into {}",
                patch.channels(),
                s.channels
            )));
        }
        match self {
            PlaneStore::Memory(img) => {
                if precision == Precision::Single {
                    let mut p = patch.clone();
                    precision.round_plane(&mut p);
                    img.paste(&p, x0, y0)
                } else {
                    img.paste(patch, x0, y0)
                }
            }
            PlaneStore::Disk(d) => {
                let Some((px, py, wx, wy, w, h)) =
                    overlap(x0, y0, patch.width(), patch.height(), s.width, s.height)
                else {
                    return Ok(());
                };
                for c in 0..s.channels {
                    d.spans(px, py, w, h, |y, x, len| {
                        let src = patch.index(c, y - py + wy, x - px + wx);
                        d.write_span(c, y, x, &patch.data()[src..src + len])
                    })?;
                }
                Ok(())
            }
        }
    }

    pub fn fill_region(
        &mut self,
        x0: i64,
        y0: i64,
        width: usize,
        height: usize,
        color: &[f64],
        precision: Precision,
    ) -> Result<()> {
        let s = self.shape();
        // Fill in horizontal bands to bound the temporary buffer.
        let band = height.clamp(1, 256);
        let mut y = 0;
        while y < height {
            let h = band.min(height - y);
            let block = ImagePlane::with_color(Shape::new(s.channels, h, width), color, 1.0)?;
            self.write_region(&block, x0, y0 + y as i64, precision)?;
            y += h;
        }
        Ok(())
    }

    /// Materializes the whole image in memory.
    pub fn to_image(&self) -> Result<ImagePlane> {
        match self {
            PlaneStore::Memory(p) => Ok(p.clone()),
            PlaneStore::Disk(d) => {
                let s = d.shape;
                d.read_region(0, 0, s.width, s.height, &vec![0.0; s.channels])
            }
        }
    }

    pub fn into_image(self) -> Result<ImagePlane> {
        match self {
            PlaneStore::Memory(p) => Ok(p),
            disk => disk.to_image(),
        }
    }
}

impl RegionSource for PlaneStore {
    fn shape(&self) -> Shape {
        match self {
            PlaneStore::Memory(p) => p.shape(),
            PlaneStore::Disk(d) => d.shape,
        }
    }

    fn read_region(&self, x0: i64, y0: i64, width: usize, height: usize, fill: &[f64]) -> Result<ImagePlane> {
        match self {
            PlaneStore::Memory(p) => p.read_region(x0, y0, width, height, fill),
            PlaneStore::Disk(d) => d.read_region(x0, y0, width, height, fill),
        }
    }
}

/// When and where stage images spill to disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StorageConfig {
    /// Largest edge length kept in memory.
    pub spill_extent: usize,
    pub scratch_dir: Option<std::path::PathBuf>,
    /// Edge length of scratch-file tiles.
    pub tile: usize,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            spill_extent: 8192,
            scratch_dir: None,
            tile: crate::defaults::PATCH_SIZE,
        }
    }
}
