//! Output files. Every CSV starts with a `#` comment line naming the scenario
//! hash and master seed; every JSON document carries both as top-level fields.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{SimError, SimResult};

/// Identity stamped into every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub scenario_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn comment(&self) -> String {
        format!("# scenario={} seed={}\n", self.scenario_hash, self.seed)
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

/// Output directory, created on first use.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
    stamp: Stamp,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>, stamp: Stamp) -> SimResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io(&root))?;
        Ok(Self { root, stamp })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> SimResult<PathBuf> {
        let path = self.path(name);
        let bytes = csv_bytes(&self.stamp, rows)?;
        fs::write(&path, bytes).map_err(io(&path))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> SimResult<PathBuf> {
        let path = self.path(name);
        let bytes = json_bytes(&self.stamp, body)?;
        fs::write(&path, bytes).map_err(io(&path))?;
        Ok(path)
    }
}

pub fn csv_bytes<T: Serialize>(stamp: &Stamp, rows: &[T]) -> SimResult<Vec<u8>> {
    let mut out = stamp.comment().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(io(Path::new("<csv>")))?;
    }
    Ok(out)
}

pub fn json_bytes<T: Serialize>(stamp: &Stamp, body: &T) -> SimResult<Vec<u8>> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        scenario_hash: &'a str,
        seed: u64,
        #[serde(flatten)]
        body: &'a T,
    }
    let mut out = serde_json::to_vec_pretty(&Envelope { scenario_hash: &stamp.scenario_hash, seed: stamp.seed, body })?;
    out.write_all(b"\n").map_err(io(Path::new("<json>")))?;
    Ok(out)
}

/// Reads rows written by [`OutDir::csv`], skipping the stamp line.
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> SimResult<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}
