use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::FittedMmhm;

pub const MODEL_FORMAT: &str = "mmhm-model";
pub const MODEL_VERSION: u32 = 1;

/// On-disk wrapper of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub model: FittedMmhm,
}

impl ModelDocument {
    pub fn new(model: FittedMmhm) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model,
        }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::data_at(path, Some(e.line() as u64), e.to_string()))
}

pub fn save_model(model: &FittedMmhm, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), &ModelDocument::new(model.clone()))
}

/// Reads a model document, rejecting other formats and newer versions.
pub fn load_model(path: impl AsRef<Path>) -> Result<FittedMmhm> {
    let path = path.as_ref();
    let doc: ModelDocument = read_json(path)?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::data_at(path, None, format!("not a model file (format {:?})", doc.format)));
    }
    if doc.version > MODEL_VERSION {
        return Err(Error::data_at(
            path,
            None,
            format!("model format version {} is newer than supported {MODEL_VERSION}", doc.version),
        ));
    }
    Ok(doc.model)
}
