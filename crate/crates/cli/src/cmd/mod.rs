pub mod eval;
pub mod forge;
pub mod pref;
pub mod presample;
pub mod serve;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::CliError;

pub fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_err(e: std::io::Error) -> CliError {
    CliError::Runtime(format!("write failed: {e}"))
}

/// Writes to the file when given, otherwise to `out`.
pub fn emit(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut f = create_output(p)?;
            f.write_all(text.as_bytes()).map_err(write_err)?;
            f.flush().map_err(write_err)
        }
        None => out.write_all(text.as_bytes()).map_err(write_err),
    }
}

/// Shortest decimal that still reads back as the same value, but with
/// round-off below 1e-10 removed and always at least one fractional digit.
pub fn fmt_number(x: f64) -> String {
    let rounded = (x * 1e10).round() / 1e10;
    let v = if (rounded - x).abs() <= 1e-10 * x.abs().max(1.0) {
        rounded
    } else {
        x
    };
    format!("{v:?}")
}
