//! Buffered, all-or-nothing output.
//!
//! Commands render every file into memory first; nothing touches the output
//! directory until the whole computation has succeeded. Each file is then
//! written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::failure::Failure;

pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    /// Fails early if `dir` exists but is not a directory, or if it would
    /// have to be created under something that is not a directory.
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        if dir.exists() {
            if !dir.is_dir() {
                return Err(Failure::io(format!("output path {} is not a directory", dir.display())));
            }
        } else {
            let mut ancestor = dir.parent();
            while let Some(p) = ancestor {
                if p.as_os_str().is_empty() || p.exists() {
                    break;
                }
                ancestor = p.parent();
            }
            if let Some(p) = ancestor.filter(|p| !p.as_os_str().is_empty()) {
                if !p.is_dir() {
                    return Err(Failure::io(format!("cannot create {} under {}", dir.display(), p.display())));
                }
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, rel: impl Into<PathBuf>, value: &T) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::io(format!("serializing: {e}")))?;
        bytes.push(b'\n');
        self.add(rel, bytes);
        Ok(())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, Failure> {
        let mut written = Vec::with_capacity(self.files.len());
        for (rel, bytes) in self.files {
            let path = self.dir.join(&rel);
            let parent = path.parent().unwrap_or(&self.dir);
            std::fs::create_dir_all(parent).map_err(|e| Failure::io(format!("{}: {e}", parent.display())))?;
            let mut tmp = tempfile::NamedTempFile::new_in(parent)
                .map_err(|e| Failure::io(format!("{}: {e}", parent.display())))?;
            tmp.write_all(&bytes)
                .and_then(|_| tmp.flush())
                .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            tmp.persist(&path)
                .map_err(|e| Failure::io(format!("{}: {}", path.display(), e.error)))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Serializes `rows` as CSV with a header, or as a JSON array.
pub fn render_rows<T: Serialize>(rows: &[T], format: crate::Format) -> Result<Vec<u8>, Failure> {
    match format {
        crate::Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(rows).map_err(|e| Failure::io(format!("serializing: {e}")))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        crate::Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row).map_err(|e| Failure::io(format!("serializing: {e}")))?;
            }
            w.into_inner().map_err(|e| Failure::io(format!("serializing: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_is_written_before_commit() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out/nested");
        let mut out = OutputSet::new(&dir).unwrap();
        out.add("a.txt", b"a".to_vec());
        out.add("sub/b.txt", b"b".to_vec());
        assert!(!dir.exists());
        let written = out.commit().unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(std::fs::read(dir.join("sub/b.txt")).unwrap(), b"b");
        let leftovers: Vec<_> = std::fs::read_dir(&dir).unwrap().collect();
        assert_eq!(leftovers.len(), 2);
    }

    #[test]
    fn commit_replaces_existing_files() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join("a.txt"), "old").unwrap();
        let mut out = OutputSet::new(tmp.path()).unwrap();
        out.add("a.txt", b"new".to_vec());
        out.commit().unwrap();
        assert_eq!(std::fs::read_to_string(tmp.path().join("a.txt")).unwrap(), "new");
    }

    #[test]
    fn file_in_the_way_is_an_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("f");
        std::fs::write(&file, "x").unwrap();
        assert_eq!(OutputSet::new(&file).err().unwrap().code, crate::failure::EXIT_IO);
        assert_eq!(OutputSet::new(&file.join("below")).err().unwrap().code, crate::failure::EXIT_IO);
    }

    #[derive(Serialize)]
    struct Row {
        a: usize,
        b: Option<f64>,
    }

    #[test]
    fn rows_render_as_csv_and_json() {
        let rows = [Row { a: 1, b: None }, Row { a: 2, b: Some(0.5) }];
        let csv = String::from_utf8(render_rows(&rows, crate::Format::Csv).unwrap()).unwrap();
        assert_eq!(csv, "a,b\n1,\n2,0.5\n");
        let json: serde_json::Value = serde_json::from_slice(&render_rows(&rows, crate::Format::Json).unwrap()).unwrap();
        assert!(json[0]["b"].is_null());
        assert_eq!(json[1]["b"], 0.5);
    }
}
