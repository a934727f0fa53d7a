//! One JSON document per session, written to a temporary file and renamed
//! into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::valid_id;
use crate::error::ApiError;
use crate::session::SessionDoc;

#[derive(Clone, Debug)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn save(&self, doc: &SessionDoc) -> Result<(), ApiError> {
        let bytes = serde_json::to_vec_pretty(doc).map_err(|e| ApiError::internal(e.to_string()))?;
        let tmp = self.dir.join(format!(".{}.json.tmp", doc.id));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, self.path(&doc.id))?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> Result<SessionDoc, ApiError> {
        let bytes = fs::read(self.path(id))?;
        serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(format!("session {id}: {e}")))
    }

    /// Ids of every stored session, sorted.
    pub fn ids(&self) -> std::io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for e in fs::read_dir(&self.dir)? {
            let name = e?.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(id) = name.strip_suffix(".json") {
                if valid_id(id) {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
