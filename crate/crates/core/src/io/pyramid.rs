//! On-disk pyramids: PNG tiles per level, optional exact dumps, and a
//! manifest with per-file SHA-256 checksums.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest
//! level_<l>/tile_<col>_<row>.png
//! level_<l>/raw.f64          (optional)
//! ```
//!
//! A raw dump is one ASCII header line, `tilediff-raw/1 <C> <H> <W>`,
//! followed by the samples as little-endian `f64` in channel, row, column
//! order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::manifest::{FileRecord, LevelRecord, PyramidManifest, RunStatus, TileRecord};
use super::png::{decode_png, encode_png};
use crate::error::{Error, Result};
use crate::image::{ImagePlane, Shape};
use crate::pyramid::{stage_resolution, PlaneStore, PyramidRun, RegionSource};

pub const RAW_MAGIC: &str = "tilediff-raw/1";
const RAW_BAND: usize = 64;

#[derive(Clone, Debug)]
pub struct WriteOptions {
    pub tile_size: usize,
    pub raw: bool,
    pub workers: usize,
    /// Echoed into the manifest.
    pub config: Option<RunConfig>,
}

impl WriteOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            tile_size: cfg.tile_size(),
            raw: cfg.raw_dumps,
            workers: cfg.workers,
            config: Some(cfg.clone()),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn level_dir(l: usize) -> String {
    format!("level_{l}")
}

fn tile_name(l: usize, col: usize, row: usize) -> String {
    format!("{}/tile_{col}_{row}.png", level_dir(l))
}

/// Writes every completed level of `run`. `error` marks the run
/// incomplete and is recorded in the manifest, which is written last.
pub fn write_pyramid(run: &PyramidRun, dir: &Path, opts: &WriteOptions, error: Option<&Error>) -> Result<PyramidManifest> {
    if opts.tile_size == 0 || opts.workers == 0 {
        return Err(Error::InvalidParameter("tile size and workers must be positive".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;

    let mut manifest = PyramidManifest::new(run.seed, run.s0, run.factor);
    for (l, store) in run.levels.iter().enumerate() {
        let ldir = dir.join(level_dir(l));
        std::fs::create_dir_all(&ldir).map_err(|e| Error::io(&ldir, e))?;
        let shape = store.shape();
        let t = opts.tile_size;
        let per = shape.width.div_ceil(t);
        let per_y = shape.height.div_ceil(t);
        let zero = vec![0.0; shape.channels];
        let tiles = pool.install(|| {
            (0..per * per_y)
                .into_par_iter()
                .map(|i| {
                    let (col, row) = (i % per, i / per);
                    let (x0, y0) = (col * t, row * t);
                    let (w, h) = (t.min(shape.width - x0), t.min(shape.height - y0));
                    let img = store.read_region(x0 as i64, y0 as i64, w, h, &zero)?;
                    let bytes = encode_png(&img)?;
                    let file = tile_name(l, col, row);
                    let path = dir.join(&file);
                    std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
                    Ok(TileRecord {
                        col,
                        row,
                        record: FileRecord {
                            file,
                            sha256: sha256_hex(&bytes),
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let raw = if opts.raw {
            let file = format!("{}/raw.f64", level_dir(l));
            let sha256 = write_raw(store, &dir.join(&file))?;
            Some(FileRecord { file, sha256 })
        } else {
            None
        };
        let report = run.reports.get(l);
        manifest.levels.push(LevelRecord {
            level: l,
            extent: shape.width,
            channels: shape.channels,
            resolution: run.level_resolution(l),
            tile_size: t,
            tiles,
            raw,
            processed_patches: report.map_or(0, |r| r.processed.iter().sum()),
            wall_clock_s: report.map_or(0.0, |r| r.wall_clock_s),
        });
    }
    manifest.status = if run.complete && error.is_none() {
        RunStatus::Complete
    } else {
        RunStatus::Incomplete
    };
    manifest.error = error.map(|e| e.to_string());
    manifest.config = opts.config.clone();
    manifest.write(dir)?;
    Ok(manifest)
}

/// Streams `store` to `path` and returns the file's SHA-256.
pub fn write_raw(store: &PlaneStore, path: &Path) -> Result<String> {
    let shape = store.shape();
    let zero = vec![0.0; shape.channels];
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashingWriter {
        inner: BufWriter::new(file),
        hash: Sha256::new(),
    };
    let io = |e| Error::io(path, e);
    writeln!(out, "{RAW_MAGIC} {} {} {}", shape.channels, shape.height, shape.width).map_err(io)?;
    for c in 0..shape.channels {
        for y0 in (0..shape.height).step_by(RAW_BAND) {
            let h = RAW_BAND.min(shape.height - y0);
            let band = store.read_region(0, y0 as i64, shape.width, h, &zero)?;
            let mut bytes = Vec::with_capacity(h * shape.width * 8);
            for v in band.channel(c) {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&bytes).map_err(io)?;
        }
    }
    out.inner.flush().map_err(io)?;
    Ok(hex::encode(out.hash.finalize()))
}

struct HashingWriter<W> {
    inner: W,
    hash: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hash.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn read_raw(path: &Path, resolution: f64) -> Result<ImagePlane> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = String::new();
    r.read_line(&mut header).map_err(|e| Error::io(path, e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad = || Error::Format(format!("{}: bad raw header {header:?}", path.display()));
    if fields.len() != 4 || fields[0] != RAW_MAGIC {
        return Err(bad());
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let shape = Shape::new(dim(fields[1])?, dim(fields[2])?, dim(fields[3])?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != shape.len() * 8 {
        return Err(Error::Format(format!(
            "{}: expected {} samples, found {} bytes",
            path.display(),
            shape.len(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    ImagePlane::from_vec(shape, data, resolution)
}

/// Level `l` of a written pyramid: exact when a raw dump exists, otherwise
/// reassembled from the 8-bit tiles.
pub fn read_level(dir: &Path, level: usize) -> Result<ImagePlane> {
    let manifest = PyramidManifest::read(dir)?;
    let lv = manifest
        .levels
        .get(level)
        .ok_or_else(|| Error::Manifest(format!("level {level} not in manifest")))?;
    if let Some(raw) = &lv.raw {
        return read_raw(&dir.join(&raw.file), lv.resolution);
    }
    let shape = Shape::new(lv.channels, lv.extent, lv.extent);
    let mut out = ImagePlane::zeros(shape, lv.resolution);
    for t in &lv.tiles {
        let path = dir.join(&t.record.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let tile = decode_png(&bytes, lv.channels, lv.resolution)?;
        out.paste(&tile, (t.col * lv.tile_size) as i64, (t.row * lv.tile_size) as i64)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub status: RunStatus,
    pub error: Option<String>,
    pub levels: usize,
    pub files_checked: usize,
}

/// Re-checks every checksum and the pyramid invariants: `s_l = s_0/k^l`,
/// extents growing by `k`, and a full tile grid per level.
pub fn verify(dir: &Path) -> Result<VerifyReport> {
    let m = PyramidManifest::read(dir)?;
    if m.factor < 2 {
        return Err(Error::Manifest(format!("factor {} must be at least 2", m.factor)));
    }
    if !(m.s0.is_finite() && m.s0 > 0.0) {
        return Err(Error::Manifest(format!("s0 {} must be positive", m.s0)));
    }
    let mut files_checked = 0;
    let base_extent = m.levels.first().map(|l| l.extent);
    for (l, lv) in m.levels.iter().enumerate() {
        if lv.level != l {
            return Err(Error::Manifest(format!("level {} listed at position {l}", lv.level)));
        }
        let want = stage_resolution(m.s0, m.factor, l);
        if lv.resolution != want {
            return Err(Error::Manifest(format!(
                "level {l} resolution {} differs from s0/k^l = {want}",
                lv.resolution
            )));
        }
        let want_extent = base_extent
            .and_then(|e| m.factor.checked_pow(l as u32).and_then(|s| s.checked_mul(e)))
            .ok_or_else(|| Error::Manifest(format!("level {l} extent overflows")))?;
        if lv.extent != want_extent {
            return Err(Error::Manifest(format!(
                "level {l} extent {} differs from {want_extent}",
                lv.extent
            )));
        }
        if lv.tile_size == 0 {
            return Err(Error::Manifest(format!("level {l} has zero tile size")));
        }
        let per = lv.tiles_per_side();
        if lv.tiles.len() != per * per {
            return Err(Error::Manifest(format!(
                "level {l} has {} tiles, expected {}",
                lv.tiles.len(),
                per * per
            )));
        }
        for (i, t) in lv.tiles.iter().enumerate() {
            if (t.col, t.row) != (i % per, i / per) {
                return Err(Error::Manifest(format!("level {l} tile grid has a gap at {i}")));
            }
        }
        for rec in lv.tiles.iter().map(|t| &t.record).chain(lv.raw.as_ref()) {
            check_file(dir, rec)?;
            files_checked += 1;
        }
    }
    if let Some(cfg) = &m.config {
        if cfg.seed != m.seed || cfg.plan.factor != m.factor {
            return Err(Error::Manifest("config echo disagrees with the manifest header".into()));
        }
        if base_extent.is_some_and(|e| e != cfg.plan.patch_size) {
            return Err(Error::Manifest("level 0 extent differs from the configured patch size".into()));
        }
        if m.status == RunStatus::Complete && m.levels.len() != cfg.plan.levels + 1 {
            return Err(Error::Manifest(format!(
                "complete run lists {} levels, configuration asks for {}",
                m.levels.len(),
                cfg.plan.levels + 1
            )));
        }
    }
    Ok(VerifyReport {
        status: m.status,
        error: m.error,
        levels: m.levels.len(),
        files_checked,
    })
}

fn check_file(dir: &Path, rec: &FileRecord) -> Result<()> {
    let path: PathBuf = dir.join(&rec.file);
    if !path.starts_with(dir) || rec.file.contains("..") {
        return Err(Error::Manifest(format!("file {} escapes the pyramid", rec.file)));
    }
    match sha256_file(&path) {
        Ok(h) if h == rec.sha256 => Ok(()),
        Ok(_) => Err(Error::Checksum(path)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::{StorageConfig, TissueMask};

    fn fake_run(levels: usize, spill: bool) -> PyramidRun {
        let storage = StorageConfig {
            spill_extent: if spill { 8 } else { 1 << 20 },
            scratch_dir: None,
            tile: 8,
        };
        let stores = (0..=levels)
            .map(|l| {
                let n = 16 << l;
                let res = stage_resolution(100.0, 2, l);
                let mut s = PlaneStore::new_filled(Shape::new(3, n, n), res, &[0.0; 3], Default::default(), &storage).unwrap();
                let img = ImagePlane::from_vec(
                    Shape::new(3, n, n),
                    (0..3 * n * n).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.999).collect(),
                    res,
                )
                .unwrap();
                s.write_region(&img, 0, 0, Default::default()).unwrap();
                s
            })
            .collect();
        PyramidRun {
            seed: 3,
            s0: 100.0,
            factor: 2,
            background: vec![0.0; 3],
            mask: TissueMask::full(1, 1, 16),
            levels: stores,
            reports: Vec::new(),
            complete: true,
        }
    }

    fn opts(raw: bool) -> WriteOptions {
        WriteOptions {
            tile_size: 12,
            raw,
            workers: 2,
            config: None,
        }
    }

    #[test]
    fn write_verify_read() {
        let dir = tempfile::tempdir().unwrap();
        let run = fake_run(2, true);
        let m = write_pyramid(&run, dir.path(), &opts(true), None).unwrap();
        assert_eq!(m.levels[2].tiles.len(), 36);
        let report = verify(dir.path()).unwrap();
        assert_eq!(report.status, RunStatus::Complete);
        assert_eq!(report.files_checked, 4 + 9 + 36 + 3);
        for l in 0..3 {
            assert_eq!(read_level(dir.path(), l).unwrap(), run.levels[l].to_image().unwrap());
        }
    }

    #[test]
    fn png_only_read_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let run = fake_run(1, false);
        write_pyramid(&run, dir.path(), &opts(false), None).unwrap();
        let back = read_level(dir.path(), 1).unwrap();
        let truth = run.levels[1].to_image().unwrap();
        let err = back.zip_map(&truth, |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(err <= 1.0 / 255.0 + 1e-12, "{err}");
    }

    #[test]
    fn tampering_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write_pyramid(&fake_run(1, false), dir.path(), &opts(false), None).unwrap();
        let victim = dir.path().join("level_1/tile_1_0.png");
        let mut bytes = std::fs::read(&victim).unwrap();
        let n = bytes.len();
        bytes[n / 2] ^= 1;
        std::fs::write(&victim, bytes).unwrap();
        match verify(dir.path()) {
            Err(Error::Checksum(p)) => assert_eq!(p, victim),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn broken_resolution_chain_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pyramid(&fake_run(1, false), dir.path(), &opts(false), None).unwrap();
        let path = dir.path().join("manifest");
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("level.1.resolution: f64 = 50.0", "level.1.resolution: f64 = 50.000001")).unwrap();
        assert!(matches!(verify(dir.path()), Err(Error::Manifest(_))));
    }

    #[test]
    fn incomplete_runs_are_marked() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = fake_run(1, false);
        run.complete = false;
        let err = Error::Numerical {
            step: 3,
            detail: "nan".into(),
        };
        write_pyramid(&run, dir.path(), &opts(false), Some(&err)).unwrap();
        let report = verify(dir.path()).unwrap();
        assert_eq!(report.status, RunStatus::Incomplete);
        assert!(report.error.unwrap().contains("step 3"));
    }
}
