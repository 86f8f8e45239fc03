use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// The only directory a command writes to. Files are written to a temporary
/// sibling and renamed into place, so readers never see a partial file.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Full path of `name`, which must be a plain file name.
    pub fn path(&self, name: &str) -> Result<PathBuf> {
        let bad = name.is_empty()
            || name.starts_with('.')
            || name.contains(['/', '\\'])
            || Path::new(name).components().count() != 1;
        if bad {
            bail!("refusing to write `{name}` outside the output directory");
        }
        Ok(self.root.join(name))
    }

    pub fn exists(&self, name: &str) -> Result<bool> {
        Ok(self.path(name)?.exists())
    }

    pub fn write_with<F>(&self, name: &str, f: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let dest = self.path(name)?;
        let mut tmp = tempfile::Builder::new()
            .prefix(".hetr-")
            .tempfile_in(&self.root)
            .with_context(|| format!("creating a temporary file in {}", self.root.display()))?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            f(&mut w).with_context(|| format!("writing {name}"))?;
            w.flush()?;
        }
        tmp.persist(&dest).with_context(|| format!("moving {name} into place"))?;
        Ok(dest)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        self.write_with(name, |w| Ok(w.write_all(bytes)?))
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_escaping_names() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(dir.path()).unwrap();
        for name in ["../x.csv", "a/b.csv", "..", ".hidden", ""] {
            assert!(out.path(name).is_err(), "{name}");
        }
        let p = out.write_bytes("ok.csv", b"a,b\n").unwrap();
        assert_eq!(std::fs::read(p).unwrap(), b"a,b\n");
        // No temporary files left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
