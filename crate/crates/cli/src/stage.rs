//! Crash-safe output staging. Every artifact is fully written under a hidden
//! scratch directory inside the output directory, then renamed into place on
//! commit, so readers never observe a partially written file.

use std::fs;
use std::path::{Path, PathBuf};

use strata::{Error, Result};

pub struct Stage {
    out: PathBuf,
    tmp: PathBuf,
    committed: bool,
}

impl Stage {
    pub fn new(out: &Path) -> Result<Stage> {
        fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
        let tmp = out.join(format!(".stage-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        }
        fs::create_dir(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        Ok(Stage { out: out.to_path_buf(), tmp, committed: false })
    }

    /// Where to write a staged artifact; `name` may contain subdirectories
    /// created beforehand with [`Stage::make_dir`].
    pub fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    /// The scratch directory itself, for writers that emit a whole tree.
    pub fn dir(&self) -> &Path {
        &self.tmp
    }

    pub fn make_dir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.tmp.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(dir)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Rename every staged entry into the output directory, replacing
    /// whatever a previous run left there.
    pub fn commit(mut self) -> Result<()> {
        let entries = fs::read_dir(&self.tmp)
            .map_err(|e| Error::io(self.tmp.display().to_string(), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(self.tmp.display().to_string(), e))?;
            let dest = self.out.join(entry.file_name());
            // rename() replaces files in place but not non-empty directories.
            if dest.is_dir() {
                fs::remove_dir_all(&dest)
                    .map_err(|e| Error::io(dest.display().to_string(), e))?;
            }
            fs::rename(entry.path(), &dest)
                .map_err(|e| Error::io(dest.display().to_string(), e))?;
        }
        fs::remove_dir(&self.tmp).map_err(|e| Error::io(self.tmp.display().to_string(), e))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Stage {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_moves_files_and_removes_the_scratch_dir() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let stage = Stage::new(&out).unwrap();
        stage.write_text("a.txt", "alpha\n").unwrap();
        stage.make_dir("sub").unwrap();
        stage.write_text("sub/b.txt", "beta\n").unwrap();
        let scratch = stage.dir().to_path_buf();
        stage.commit().unwrap();
        assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "alpha\n");
        assert_eq!(fs::read_to_string(out.join("sub/b.txt")).unwrap(), "beta\n");
        assert!(!scratch.exists());
    }

    #[test]
    fn commit_replaces_earlier_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let first = Stage::new(&out).unwrap();
        first.write_text("a.txt", "old\n").unwrap();
        first.make_dir("sub").unwrap();
        first.write_text("sub/b.txt", "old\n").unwrap();
        first.commit().unwrap();
        let second = Stage::new(&out).unwrap();
        second.write_text("a.txt", "new\n").unwrap();
        second.make_dir("sub").unwrap();
        second.write_text("sub/b.txt", "new\n").unwrap();
        second.commit().unwrap();
        assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "new\n");
        assert_eq!(fs::read_to_string(out.join("sub/b.txt")).unwrap(), "new\n");
    }

    #[test]
    fn dropping_without_commit_leaves_no_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        {
            let stage = Stage::new(&out).unwrap();
            stage.write_text("a.txt", "partial\n").unwrap();
        }
        assert!(!out.join("a.txt").exists());
        assert!(fs::read_dir(&out).unwrap().next().is_none());
    }

    #[test]
    fn output_path_that_is_a_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("blocked");
        fs::write(&blocker, "x").unwrap();
        let err = match Stage::new(&blocker) {
            Ok(_) => panic!("staging into a file should fail"),
            Err(e) => e,
        };
        assert!(matches!(err, Error::Io { .. }), "{err:?}");
    }
}
