//! All-or-nothing output: files are staged next to their targets and only
//! renamed into place once every one of them has been written.

use std::path::{Path, PathBuf};

use wavclip_core::{Error, Result};

#[derive(Debug, Default)]
pub struct Staged {
    pending: Vec<(PathBuf, PathBuf)>,
}

fn temp_path(target: &Path) -> PathBuf {
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    target.with_file_name(format!(".{name}.{}.partial", std::process::id()))
}

impl Staged {
    pub fn new() -> Self {
        Staged::default()
    }

    pub fn add(&mut self, target: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let target = target.as_ref().to_path_buf();
        let tmp = temp_path(&target);
        std::fs::write(&tmp, bytes).map_err(|source| Error::Io {
            path: target.clone(),
            source,
        })?;
        self.pending.push((tmp, target));
        Ok(())
    }

    pub fn commit(mut self) -> Result<()> {
        let pending = std::mem::take(&mut self.pending);
        for (i, (tmp, target)) in pending.iter().enumerate() {
            if let Err(source) = std::fs::rename(tmp, target) {
                for (rest, _) in &pending[i..] {
                    let _ = std::fs::remove_file(rest);
                }
                return Err(Error::Io {
                    path: target.clone(),
                    source,
                });
            }
        }
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.pending {
            let _ = std::fs::remove_file(tmp);
        }
    }
}
