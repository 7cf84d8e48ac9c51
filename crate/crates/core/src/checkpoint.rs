//! Textual model checkpoints.
//!
//! ```text
//! vmcis-checkpoint v1
//! kind = complex-rbm
//! n_sites = 16
//! n_hidden = 32
//! complex = true
//! n_params = 1120
//! params
//! 1.25e-2
//! ...
//! ```
//!
//! Parameters use Rust's shortest round-trip float formatting, so writing
//! and reading back reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::ansatz::{ModelKind, WavefunctionModel};
use crate::error::{Error, Result};

const MAGIC: &str = "vmcis-checkpoint v1";

pub fn to_string(model: &WavefunctionModel) -> String {
    let (n_hidden, complex) = match model.kind() {
        ModelKind::LogLinear { complex } => (0, complex),
        ModelKind::ComplexRbm { n_hidden } => (n_hidden, true),
        ModelKind::MeanFieldProduct => (0, true),
    };
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "kind = {}", model.kind().name());
    let _ = writeln!(s, "n_sites = {}", crate::ansatz::LogAmplitude::n_sites(model));
    let _ = writeln!(s, "n_hidden = {n_hidden}");
    let _ = writeln!(s, "complex = {complex}");
    let _ = writeln!(s, "n_params = {}", model.n_params());
    let _ = writeln!(s, "params");
    for p in model.params() {
        let _ = writeln!(s, "{p:e}");
    }
    s
}

pub fn from_str(text: &str) -> Result<WavefunctionModel> {
    let bad = |msg: String| Error::Checkpoint(msg);
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(bad(format!("missing header `{MAGIC}`"))),
    }
    let mut kind = None;
    let mut n_sites = None;
    let mut n_hidden = None;
    let mut complex = None;
    let mut n_params = None;
    for (no, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "params" {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected `key = value`", no + 1)))?;
        let value = value.trim();
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| bad(format!("line {}: `{v}` is not an integer", no + 1)))
        };
        match key.trim() {
            "kind" => kind = Some(value.to_string()),
            "n_sites" => n_sites = Some(parse_usize(value)?),
            "n_hidden" => n_hidden = Some(parse_usize(value)?),
            "n_params" => n_params = Some(parse_usize(value)?),
            "complex" => {
                complex = Some(
                    value
                        .parse::<bool>()
                        .map_err(|_| bad(format!("line {}: `{value}` is not a bool", no + 1)))?,
                )
            }
            other => return Err(bad(format!("line {}: unknown key `{other}`", no + 1))),
        }
    }
    let missing = |k: &str| bad(format!("missing key `{k}`"));
    let n_sites = n_sites.ok_or_else(|| missing("n_sites"))?;
    let n_params = n_params.ok_or_else(|| missing("n_params"))?;
    let kind = match kind.ok_or_else(|| missing("kind"))?.as_str() {
        "log-linear" => ModelKind::LogLinear {
            complex: complex.ok_or_else(|| missing("complex"))?,
        },
        "complex-rbm" => ModelKind::ComplexRbm {
            n_hidden: n_hidden.ok_or_else(|| missing("n_hidden"))?,
        },
        "mean-field-product" => ModelKind::MeanFieldProduct,
        other => return Err(bad(format!("unknown model kind `{other}`"))),
    };
    let mut params = Vec::with_capacity(n_params);
    for (no, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        params.push(
            line.parse::<f64>()
                .map_err(|_| bad(format!("line {}: `{line}` is not a number", no + 1)))?,
        );
    }
    if params.len() != n_params {
        return Err(bad(format!(
            "declared {n_params} parameters, found {}",
            params.len()
        )));
    }
    WavefunctionModel::new(kind, n_sites, params)
}

pub fn save(model: &WavefunctionModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<WavefunctionModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    from_str(&text)
}
