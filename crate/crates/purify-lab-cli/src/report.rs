//! Report rendering and atomic file emission.
//!
//! Every number a report prints goes through [`sig12`] so that runs with the
//! same config and seed produce byte-identical files.  Infinite values render
//! as `inf` / `-inf` in both CSV cells and JSON (as strings; JSON numbers
//! cannot carry infinities).

use std::io::Write;
use std::path::Path;

use purify_lab::Result;
use serde_json::Value;

/// Column order is part of the output contract; do not reorder.
pub const CSV_HEADER: &str = "n,divergence,alpha,per_copy_value,baseline,gap,seed";

/// One row of a divergence-gap scan.
#[derive(Clone, Debug)]
pub struct GapRow {
    pub n: usize,
    pub divergence: String,
    pub alpha: f64,
    pub per_copy_value: f64,
    pub baseline: f64,
    pub gap: f64,
    pub seed: u64,
}

/// Render a float with twelve significant digits, trimming trailing zeros.
///
/// `inf`, `-inf`, and `0` are spelled literally so downstream parsers see a
/// stable token set.  Rendering is locale-free and deterministic.
pub fn sig12(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    // Digits after the point so the total significant count is twelve.
    let decimals = (11 - magnitude).clamp(0, 30) as usize;
    let mut text = format!("{x:.decimals$}");
    if text.contains('.') {
        while text.ends_with('0') {
            text.pop();
        }
        if text.ends_with('.') {
            text.pop();
        }
    }
    text
}

/// Lift a float into JSON, spelling non-finite values as strings.
pub fn jnum(x: f64) -> Value {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
    } else if x.is_nan() {
        Value::String("nan".into())
    } else if x > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".to_string());
    let tmp_name = format!(".{file_name}.tmp{}", std::process::id());
    let tmp = match parent {
        Some(dir) => dir.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    let result = (|| {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Write gap rows as CSV with the fixed header, atomically.
pub fn emit_csv(rows: &[GapRow], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.n,
            row.divergence,
            sig12(row.alpha),
            sig12(row.per_copy_value),
            sig12(row.baseline),
            sig12(row.gap),
            row.seed,
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Write a JSON report (pretty, trailing newline), atomically.
pub fn emit_json(value: &Value, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| purify_lab::Error::Format(format!("json encode: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}
