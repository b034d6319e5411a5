use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Failure;

const STAGING: &str = ".kgqa-partial";

/// Collects a command's outputs in a hidden directory and moves them into
/// place only on [`Staging::commit`]. Dropping without committing removes
/// everything written so far.
#[derive(Debug)]
pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    created_out: bool,
    extra: Vec<(String, PathBuf)>,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self, Failure> {
        let created_out = !out.exists();
        std::fs::create_dir_all(out).map_err(|e| Failure::output(format!("{}: {e}", out.display())))?;
        let dir = out.join(STAGING);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Failure::output(format!("{}: {e}", dir.display())))?;
        }
        std::fs::create_dir(&dir).map_err(|e| Failure::output(format!("{}: {e}", dir.display())))?;
        Ok(Staging {
            out: out.to_path_buf(),
            dir,
            created_out,
            extra: Vec::new(),
            committed: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// A staged file that ends up at `target` instead of the output dir.
    pub fn elsewhere(&mut self, name: &str, target: PathBuf) -> PathBuf {
        self.extra.push((name.to_string(), target));
        self.path(name)
    }

    pub fn write(&self, name: &str, body: &[u8]) -> Result<(), Failure> {
        let path = self.path(name);
        std::fs::write(&path, body).map_err(|e| Failure::output(format!("{}: {e}", path.display())))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut body = serde_json::to_string_pretty(value).map_err(Failure::output)?;
        body.push('\n');
        self.write(name, body.as_bytes())
    }

    pub fn commit(mut self) -> Result<(), Failure> {
        for (name, target) in std::mem::take(&mut self.extra) {
            move_file(&self.path(&name), &target)?;
        }
        let entries = std::fs::read_dir(&self.dir).map_err(|e| Failure::output(format!("{}: {e}", self.dir.display())))?;
        for entry in entries {
            let entry = entry.map_err(Failure::output)?;
            move_file(&entry.path(), &self.out.join(entry.file_name()))?;
        }
        std::fs::remove_dir(&self.dir).map_err(|e| Failure::output(format!("{}: {e}", self.dir.display())))?;
        self.committed = true;
        Ok(())
    }
}

fn move_file(from: &Path, to: &Path) -> Result<(), Failure> {
    if let Some(parent) = to.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::output(format!("{}: {e}", parent.display())))?;
    }
    if std::fs::rename(from, to).is_ok() {
        return Ok(());
    }
    std::fs::copy(from, to)
        .and_then(|_| std::fs::remove_file(from))
        .map_err(|e| Failure::output(format!("{}: {e}", to.display())))
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        let _ = std::fs::remove_dir_all(&self.dir);
        if self.created_out {
            let _ = std::fs::remove_dir(&self.out);
        }
    }
}
