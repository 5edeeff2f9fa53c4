//! CSV output helpers: provenance headers, bit-faithful float
//! rendering, atomic writes.

use std::path::Path;

use crate::error::Result;

/// Render a float with 17 significant decimal digits so that parsing
/// the text recovers the exact 64-bit value.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Comment header embedding the effective configuration into an output
/// file, one `# key = value` line per entry.
pub fn comment_header(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str("# ");
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Write via a sibling temporary file and rename, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
