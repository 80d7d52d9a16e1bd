//! Plain-text pyramid manifest.
//!
//! One entry per line, `key: type = value`. Types are `u64`, `i64`, `f64`,
//! `bool`, `str` and `json`; floats are written in shortest round-trip
//! form and strings as JSON string literals. The run configuration is
//! echoed under `config.` as flattened JSON paths, so a manifest carries
//! everything needed to regenerate its pyramid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{Map, Value};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "tilediff-pyramid/1";
pub const MANIFEST_FILE: &str = "manifest";

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    U64(u64),
    I64(i64),
    F64(f64),
    Bool(bool),
    Str(String),
    Json(Value),
}

impl Entry {
    fn type_name(&self) -> &'static str {
        match self {
            Entry::U64(_) => "u64",
            Entry::I64(_) => "i64",
            Entry::F64(_) => "f64",
            Entry::Bool(_) => "bool",
            Entry::Str(_) => "str",
            Entry::Json(_) => "json",
        }
    }

    fn render(&self) -> String {
        match self {
            Entry::U64(v) => v.to_string(),
            Entry::I64(v) => v.to_string(),
            Entry::F64(v) => format!("{v:?}"),
            Entry::Bool(v) => v.to_string(),
            Entry::Str(s) => Value::String(s.clone()).to_string(),
            Entry::Json(v) => v.to_string(),
        }
    }

    fn parse(ty: &str, raw: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::Manifest(format!("bad {ty} value {raw:?}: {e}"));
        Ok(match ty {
            "u64" => Entry::U64(raw.parse().map_err(|e| bad(&e))?),
            "i64" => Entry::I64(raw.parse().map_err(|e| bad(&e))?),
            "f64" => Entry::F64(raw.parse().map_err(|e| bad(&e))?),
            "bool" => Entry::Bool(raw.parse().map_err(|e| bad(&e))?),
            "str" => match serde_json::from_str(raw).map_err(|e| bad(&e))? {
                Value::String(s) => Entry::Str(s),
                _ => return Err(bad(&"not a string literal")),
            },
            "json" => Entry::Json(serde_json::from_str(raw).map_err(|e| bad(&e))?),
            other => return Err(Error::Manifest(format!("unknown type {other}"))),
        })
    }

    fn to_json(&self) -> Value {
        match self {
            Entry::U64(v) => Value::from(*v),
            Entry::I64(v) => Value::from(*v),
            Entry::F64(v) => Value::from(*v),
            Entry::Bool(v) => Value::Bool(*v),
            Entry::Str(s) => Value::String(s.clone()),
            Entry::Json(v) => v.clone(),
        }
    }

    fn from_json(v: &Value) -> Self {
        match v {
            Value::Bool(b) => Entry::Bool(*b),
            Value::String(s) => Entry::Str(s.clone()),
            Value::Number(n) => {
                if let Some(u) = n.as_u64() {
                    Entry::U64(u)
                } else if let Some(i) = n.as_i64() {
                    Entry::I64(i)
                } else {
                    Entry::F64(n.as_f64().unwrap_or(f64::NAN))
                }
            }
            other => Entry::Json(other.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    Incomplete,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::Incomplete => "incomplete",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileRecord {
    /// Path relative to the pyramid directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileRecord {
    pub col: usize,
    pub row: usize,
    pub record: FileRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub extent: usize,
    pub channels: usize,
    /// µm/px.
    pub resolution: f64,
    pub tile_size: usize,
    pub tiles: Vec<TileRecord>,
    pub raw: Option<FileRecord>,
    pub processed_patches: usize,
    pub wall_clock_s: f64,
}

impl LevelRecord {
    pub fn tiles_per_side(&self) -> usize {
        self.extent.div_ceil(self.tile_size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PyramidManifest {
    pub format: String,
    pub software_version: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub seed: u64,
    pub s0: f64,
    pub factor: usize,
    pub levels: Vec<LevelRecord>,
    pub config: Option<RunConfig>,
}

impl PyramidManifest {
    pub fn new(seed: u64, s0: f64, factor: usize) -> Self {
        Self {
            format: MANIFEST_FORMAT.to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            status: RunStatus::Incomplete,
            error: None,
            seed,
            s0,
            factor,
            levels: Vec::new(),
            config: None,
        }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut entries: Vec<(String, Entry)> = vec![
            ("format".into(), Entry::Str(self.format.clone())),
            ("software.version".into(), Entry::Str(self.software_version.clone())),
            ("status".into(), Entry::Str(self.status.as_str().into())),
        ];
        if let Some(e) = &self.error {
            entries.push(("error".into(), Entry::Str(e.clone())));
        }
        entries.push(("seed".into(), Entry::U64(self.seed)));
        entries.push(("s0".into(), Entry::F64(self.s0)));
        entries.push(("factor".into(), Entry::U64(self.factor as u64)));
        entries.push(("levels".into(), Entry::U64(self.levels.len() as u64)));
        for lv in &self.levels {
            let p = format!("level.{}", lv.level);
            entries.push((format!("{p}.extent"), Entry::U64(lv.extent as u64)));
            entries.push((format!("{p}.channels"), Entry::U64(lv.channels as u64)));
            entries.push((format!("{p}.resolution"), Entry::F64(lv.resolution)));
            entries.push((format!("{p}.tile_size"), Entry::U64(lv.tile_size as u64)));
            entries.push((format!("{p}.tile_count"), Entry::U64(lv.tiles.len() as u64)));
            entries.push((format!("{p}.processed_patches"), Entry::U64(lv.processed_patches as u64)));
            entries.push((format!("{p}.wall_clock_s"), Entry::F64(lv.wall_clock_s)));
            if let Some(raw) = &lv.raw {
                entries.push((format!("{p}.raw.file"), Entry::Str(raw.file.clone())));
                entries.push((format!("{p}.raw.sha256"), Entry::Str(raw.sha256.clone())));
            }
            for t in &lv.tiles {
                let q = format!("{p}.tile.{}_{}", t.col, t.row);
                entries.push((format!("{q}.file"), Entry::Str(t.record.file.clone())));
                entries.push((format!("{q}.sha256"), Entry::Str(t.record.sha256.clone())));
            }
        }
        if let Some(cfg) = &self.config {
            let v = serde_json::to_value(cfg).map_err(|e| Error::Format(format!("config echo: {e}")))?;
            flatten("config", &v, &mut entries);
        }
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k}: {} = {}", v.type_name(), v.render());
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = || Error::Manifest(format!("line {}: cannot parse {line:?}", n + 1));
            let (key, rest) = line.split_once(": ").ok_or_else(err)?;
            let (ty, raw) = rest.split_once(" = ").ok_or_else(err)?;
            if map.insert(key.to_string(), Entry::parse(ty, raw)?).is_some() {
                return Err(Error::Manifest(format!("duplicate key {key}")));
            }
        }
        let r = Reader { map: &map };

        let format = r.string("format")?;
        if format != MANIFEST_FORMAT {
            return Err(Error::Manifest(format!("unsupported format {format}")));
        }
        let status = match r.string("status")?.as_str() {
            "complete" => RunStatus::Complete,
            "incomplete" => RunStatus::Incomplete,
            other => return Err(Error::Manifest(format!("unknown status {other}"))),
        };
        let count = r.usize("levels")?;
        let levels = (0..count)
            .map(|l| {
                let p = format!("level.{l}");
                let tile_prefix = format!("{p}.tile.");
                let mut tiles = Vec::new();
                for key in map.keys() {
                    let Some(name) = key.strip_prefix(&tile_prefix).and_then(|k| k.strip_suffix(".file")) else {
                        continue;
                    };
                    let (c, rw) = name
                        .split_once('_')
                        .ok_or_else(|| Error::Manifest(format!("bad tile key {key}")))?;
                    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Manifest(format!("bad tile key {key}")));
                    tiles.push(TileRecord {
                        col: parse(c)?,
                        row: parse(rw)?,
                        record: FileRecord {
                            file: r.string(key)?,
                            sha256: r.string(&format!("{tile_prefix}{name}.sha256"))?,
                        },
                    });
                }
                tiles.sort_by_key(|t| (t.row, t.col));
                let declared = r.usize(&format!("{p}.tile_count"))?;
                if declared != tiles.len() {
                    return Err(Error::Manifest(format!(
                        "level {l} declares {declared} tiles but lists {}",
                        tiles.len()
                    )));
                }
                let raw = if map.contains_key(&format!("{p}.raw.file")) {
                    Some(FileRecord {
                        file: r.string(&format!("{p}.raw.file"))?,
                        sha256: r.string(&format!("{p}.raw.sha256"))?,
                    })
                } else {
                    None
                };
                Ok(LevelRecord {
                    level: l,
                    extent: r.usize(&format!("{p}.extent"))?,
                    channels: r.usize(&format!("{p}.channels"))?,
                    resolution: r.f64(&format!("{p}.resolution"))?,
                    tile_size: r.usize(&format!("{p}.tile_size"))?,
                    tiles,
                    raw,
                    processed_patches: r.usize(&format!("{p}.processed_patches"))?,
                    wall_clock_s: r.f64(&format!("{p}.wall_clock_s"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let config = {
            let mut root = Value::Object(Map::new());
            let mut any = false;
            for (k, v) in &map {
                if let Some(path) = k.strip_prefix("config.") {
                    insert(&mut root, path, v.to_json())?;
                    any = true;
                }
            }
            if any {
                Some(serde_json::from_value(root).map_err(|e| Error::Manifest(format!("config echo: {e}")))?)
            } else {
                None
            }
        };

        Ok(Self {
            format,
            software_version: r.string("software.version")?,
            status,
            error: map.get("error").map(|_| r.string("error")).transpose()?,
            seed: r.u64("seed")?,
            s0: r.f64("s0")?,
            factor: r.usize("factor")?,
            levels,
            config,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_text()?).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }
}

struct Reader<'a> {
    map: &'a BTreeMap<String, Entry>,
}

impl Reader<'_> {
    fn get(&self, key: &str) -> Result<&Entry> {
        self.map
            .get(key)
            .ok_or_else(|| Error::Manifest(format!("missing key {key}")))
    }

    fn mismatch(key: &str, want: &str, got: &Entry) -> Error {
        Error::Manifest(format!("{key}: expected {want}, found {}", got.type_name()))
    }

    fn string(&self, key: &str) -> Result<String> {
        match self.get(key)? {
            Entry::Str(s) => Ok(s.clone()),
            other => Err(Self::mismatch(key, "str", other)),
        }
    }

    fn u64(&self, key: &str) -> Result<u64> {
        match self.get(key)? {
            Entry::U64(v) => Ok(*v),
            other => Err(Self::mismatch(key, "u64", other)),
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        usize::try_from(self.u64(key)?).map_err(|_| Error::Manifest(format!("{key} overflows usize")))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        match self.get(key)? {
            Entry::F64(v) => Ok(*v),
            other => Err(Self::mismatch(key, "f64", other)),
        }
    }
}

/// Objects become dotted paths; arrays, nulls and empty objects stay JSON.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Entry)>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                flatten(&format!("{prefix}.{k}"), child, out);
            }
        }
        Value::Object(_) | Value::Array(_) | Value::Null => out.push((prefix.to_string(), Entry::Json(v.clone()))),
        scalar => out.push((prefix.to_string(), Entry::from_json(scalar))),
    }
}

fn insert(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let mut segs = path.split('.').peekable();
    while let Some(seg) = segs.next() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Manifest(format!("config path {path} crosses a scalar")))?;
        if segs.peek().is_none() {
            obj.insert(seg.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(seg.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> PyramidManifest {
        let mut m = PyramidManifest::new(u64::MAX, 117.25, 2);
        m.status = RunStatus::Complete;
        m.error = Some("stage 2: \"quoted\"\nnewline".into());
        for l in 0..2 {
            let extent = 32 << l;
            let per = extent / 32;
            m.levels.push(LevelRecord {
                level: l,
                extent,
                channels: 3,
                resolution: 117.25 / f64::from(1u32 << l),
                tile_size: 32,
                tiles: (0..per * per)
                    .map(|i| TileRecord {
                        col: i % per,
                        row: i / per,
                        record: FileRecord {
                            file: format!("level_{l}/tile_{}_{}.png", i % per, i / per),
                            sha256: format!("{i:064x}"),
                        },
                    })
                    .collect(),
                raw: (l == 1).then(|| FileRecord {
                    file: "level_1/raw.f64".into(),
                    sha256: "ab".repeat(32),
                }),
                processed_patches: per * per,
                wall_clock_s: 0.1 + l as f64 / 3.0,
            });
        }
        let mut cfg = RunConfig::desk();
        cfg.seed = u64::MAX;
        cfg.plan.background = Some(vec![0.5, -0.25, 1.0 / 3.0]);
        m.config = Some(cfg);
        m
    }

    #[test]
    fn text_round_trip() {
        let m = sample();
        let text = m.to_text().unwrap();
        assert!(text.contains("status: str = \"complete\""));
        assert!(text.contains("level.1.tile.1_1.sha256: str = "));
        assert!(text.contains("config.plan.levels: u64 = 3"));
        assert_eq!(PyramidManifest::parse(&text).unwrap(), m);
    }

    #[test]
    fn rejects_inconsistent_text() {
        let text = sample().to_text().unwrap();
        let dropped: String = text
            .lines()
            .filter(|l| !l.starts_with("level.1.tile.0_0."))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(PyramidManifest::parse(&dropped).is_err());
        assert!(PyramidManifest::parse(&text.replace("tilediff-pyramid/1", "other/9")).is_err());
        assert!(PyramidManifest::parse(&text.replace("seed: u64", "seed: f64 ")).is_err());
        assert!(PyramidManifest::parse("garbage").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn config_echo_round_trips(
            seed in any::<u64>(),
            s0 in 1e-3f64..1e3,
            sigma in 1e-4f64..1.0,
            bg in prop::option::of(prop::collection::vec(-1.0f64..1.0, 3)),
            relax in 0usize..40,
        ) {
            let mut m = PyramidManifest::new(seed, s0, 2);
            let mut cfg = RunConfig::desk();
            cfg.seed = seed;
            cfg.schedule.sigma_min = sigma;
            cfg.plan.background = bg;
            cfg.guidance.relaxation = relax;
            m.config = Some(cfg);
            let back = PyramidManifest::parse(&m.to_text().unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
