//! Dataset files, result documents and exports.

mod dataset;
mod result;

pub use dataset::{fingerprint, parse_dataset, read_dataset, write_json, write_text};
pub use result::{export, export_csv, pattern_dot, ExportFormat, ResultDocument, TruthDocument, TOOL_VERSION};

/// Reads a whole file, naming it in the error.
fn read_file(path: &std::path::Path) -> crate::Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}
