//! Artifact writing helpers.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "artifact".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Fixed-format float: 17 significant digits, `.` decimal point, no locale.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

/// Formats `n = exp(log_n)`: an integer when exactly representable,
/// otherwise a 17-digit scientific value, computed from `log10` past the
/// `f64` range.
pub fn fmt_n_from_log(log_n: f64) -> String {
    let n = log_n.exp();
    if n.is_finite() {
        let r = n.round();
        if (n - r).abs() <= 1e-9 * n.max(1.0) && r < 9.007_199_254_740_992e15 {
            return format!("{}", r as u64);
        }
        return fmt_f64(n);
    }
    let l10 = log_n / std::f64::consts::LN_10;
    let exp = l10.floor();
    let mant = 10f64.powf(l10 - exp);
    format!("{mant:.16}e{}", exp as i64)
}
