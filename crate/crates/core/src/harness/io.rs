//! Solution-set files: one tour per line as space-separated node indices.

use std::path::Path;

use crate::error::{Error, Result};
use crate::instances::{Instance, Tour};
use crate::scalar::Scalar;

pub fn solution_text<S: Scalar>(tours: &[Tour<S>]) -> String {
    let mut out = String::new();
    for t in tours {
        let line: Vec<String> = t.order().iter().map(usize::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_solution_text<S: Scalar>(text: &str, path: &Path, inst: &Instance<S>) -> Result<Vec<Tour<S>>> {
    let mut tours = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let order = line
            .split_whitespace()
            .map(str::parse::<usize>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(format!("bad node index: {e}")))?;
        tours.push(Tour::new(inst, order).map_err(|e| err(e.to_string()))?);
    }
    Ok(tours)
}

pub fn load_solutions<S: Scalar>(path: impl AsRef<Path>, inst: &Instance<S>) -> Result<Vec<Tour<S>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_solution_text(&text, path, inst)
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
