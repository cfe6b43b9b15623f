//! Artifact writers. CSV files start with a `#`-prefixed provenance line
//! carrying the config and model digests, then a header row; floats are
//! written in round-trip scientific notation. Structured results go into
//! single JSON documents stamped with the same digests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use monge_core::{Error, Result};

pub struct OutDir {
    dir: PathBuf,
    pub config_digest: String,
    pub model_digest: String,
    pub seed: u64,
}

/// Wraps a JSON body with the provenance fields every document carries.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_digest: &'a str,
    model_digest: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

impl OutDir {
    pub fn create(
        dir: PathBuf,
        config_digest: String,
        model_digest: String,
        seed: u64,
    ) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| {
            Error::InvalidConfig(format!("cannot create out dir {}: {e}", dir.display()))
        })?;
        Ok(OutDir { dir, config_digest, model_digest, seed })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv<I>(&self, name: &str, header: &str, rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = String>,
    {
        let mut text = format!(
            "# config {} model {} seed {}\n{header}\n",
            self.config_digest, self.model_digest, self.seed
        );
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        let path = self.path(name);
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, body: T) -> Result<PathBuf> {
        let doc = Stamped {
            config_digest: &self.config_digest,
            model_digest: &self.model_digest,
            seed: self.seed,
            body,
        };
        let mut bytes = serde_json::to_vec_pretty(&doc)
            .map_err(|e| Error::Numerical(format!("cannot serialize {name}: {e}")))?;
        bytes.push(b'\n');
        let path = self.path(name);
        write_file(&path, &bytes)?;
        Ok(path)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)
        .map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", path.display())))
}
