//! Versioned text checkpoints.
//!
//! ```text
//! smpnn-checkpoint 1
//! config {"input_dim":3,...}
//! tensor input_proj 3 8
//! <row 0: 8 space-separated values>
//! ...
//! tensor layers.0.w1 8 8
//! ...
//! end
//! ```
//!
//! The config line is the JSON form of [`ModelConfig`]. Tensors follow the
//! canonical parameter order, one text line per row. Values use Rust's
//! shortest round-trip float formatting, so loading is bit-exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{init_params, ModelConfig, SmpnnParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "smpnn-checkpoint";

/// Serializes the configuration and parameters.
pub fn write_checkpoint(cfg: &ModelConfig, params: &SmpnnParams) -> Result<String> {
    params.check_shapes(cfg)?;
    let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\n");
    let json = serde_json::to_string(cfg)
        .map_err(|e| Error::invalid(format!("config serialization: {e}")))?;
    let _ = writeln!(out, "config {json}");
    for (name, t) in params.named() {
        let _ = writeln!(out, "tensor {name} {} {}", t.rows(), t.cols());
        for i in 0..t.rows() {
            let row: Vec<String> = t.row(i).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    cfg: &ModelConfig,
    params: &SmpnnParams,
) -> Result<()> {
    let path = path.as_ref();
    let text = write_checkpoint(cfg, params)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, SmpnnParams)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, path)
}

/// Parses checkpoint text; `path` only labels errors.
pub fn parse_checkpoint(text: &str, path: &Path) -> Result<(ModelConfig, SmpnnParams)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (ln, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty checkpoint".into()))?;
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| err(ln, format!("expected `{MAGIC} <version>` header")))?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(err(
            ln,
            format!("unsupported checkpoint version `{version}`"),
        ));
    }
    let (ln, config_line) = lines
        .next()
        .ok_or_else(|| err(2, "missing config line".into()))?;
    let json = config_line
        .strip_prefix("config ")
        .ok_or_else(|| err(ln, "expected `config <json>`".into()))?;
    let cfg: ModelConfig =
        serde_json::from_str(json).map_err(|e| err(ln, format!("bad config: {e}")))?;

    let mut tensors: HashMap<String, Tensor> = HashMap::new();
    let mut order = Vec::new();
    let mut saw_end = false;
    while let Some((ln, line)) = lines.next() {
        if line == "end" {
            saw_end = true;
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [kw, name, rows, cols] = fields[..] else {
            return Err(err(ln, "expected `tensor <name> <rows> <cols>`".into()));
        };
        if kw != "tensor" {
            return Err(err(ln, format!("expected `tensor`, found `{kw}`")));
        }
        let rows: usize = rows
            .parse()
            .map_err(|_| err(ln, format!("bad row count `{rows}`")))?;
        let cols: usize = cols
            .parse()
            .map_err(|_| err(ln, format!("bad column count `{cols}`")))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, row) = lines
                .next()
                .ok_or_else(|| err(ln, format!("tensor `{name}` is truncated")))?;
            let before = data.len();
            for tok in row.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| err(ln, format!("bad number `{tok}`")))?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(err(
                    ln,
                    format!("expected {cols} values, found {}", data.len() - before),
                ));
            }
        }
        if tensors
            .insert(name.to_string(), Tensor::new(rows, cols, data)?)
            .is_some()
        {
            return Err(err(ln, format!("tensor `{name}` appears twice")));
        }
        order.push(name.to_string());
    }
    if !saw_end {
        return Err(err(text.lines().count(), "missing `end` line".into()));
    }

    let template = init_params(&cfg, 0)?;
    let expected: Vec<String> = template.named().into_iter().map(|(n, _)| n).collect();
    if expected != order {
        return Err(Error::Inconsistent(format!(
            "checkpoint tensors do not match the configuration (expected {} tensors, found {})",
            expected.len(),
            order.len()
        )));
    }
    let params = template.try_map(&mut |name, _| {
        Ok::<Tensor, Error>(tensors.remove(&name).expect("names checked"))
    })?;
    params.check_shapes(&cfg)?;
    Ok((cfg, params))
}
