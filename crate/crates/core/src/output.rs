//! Number formatting and file writing shared by the CSV exporters.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::scalar::Real;

/// Shortest round-tripping decimal form; `inf`, `-inf` and `nan` spelled out.
pub fn fmt_real<T: Real>(x: T) -> String {
    let v = x.as_f64();
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Like [`fmt_real`], with `None` rendered as an empty field.
pub fn fmt_opt<T: Real>(x: Option<T>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

/// Write `contents` to `path` through a sibling temporary file and a rename,
/// so readers never observe a partially written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_special_values() {
        assert_eq!(fmt_real(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_real(0.1_f64), "0.1");
        assert_eq!(fmt_real(f64::NAN), "nan");
        assert_eq!(fmt_opt::<f64>(None), "");
        assert_eq!(fmt_real(1.5_f32), "1.5");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, "x\n").unwrap();
        write_atomic(&p, "y\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "y\n");
        let leftovers = std::fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
