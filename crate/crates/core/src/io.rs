//! File helpers. Every output goes through [`write_atomic`], which writes a
//! sibling temporary file and renames it into place.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;
use crate::foliation::Partition;
use crate::space::FiniteMMSpace;

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes `path` through `fill`; on error the target is left untouched.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = temp_path(path);
    let outcome = (|| {
        let mut out = BufWriter::new(File::create(&tmp)?);
        fill(&mut out)?;
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(())
    })();
    match outcome {
        Ok(()) => Ok(fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)?;
        Ok(())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a space in the canonical JSON format. The matrix and weights are
/// checked structurally; the metric axioms are not.
pub fn read_space(path: &Path) -> Result<FiniteMMSpace> {
    read_json(path)
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn failed_write_keeps_old_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_json(&path, &[1, 2, 3]).unwrap();
        let err = write_atomic(&path, |out| {
            out.write_all(b"partial")?;
            Err(Error::Input("boom".into()))
        });
        assert!(err.is_err());
        assert_eq!(read_json::<Vec<i32>>(&path).unwrap(), vec![1, 2, 3]);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn space_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/space.json");
        let s = FiniteMMSpace::from_matrix(vec![0.0, 1.0, 1.0, 0.0], vec![0.5, 0.5], 1).unwrap();
        write_json(&path, &s).unwrap();
        assert_eq!(read_space(&path).unwrap(), s);
    }
}
