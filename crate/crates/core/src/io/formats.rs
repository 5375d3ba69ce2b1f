//! Plain-text edge, feature, label and split files.
//!
//! * Edges: one `src dst [weight]` per line, 0-indexed; `#` starts a comment.
//! * Features: a `N D` header, then `N` rows of `D` whitespace-separated reals.
//! * Labels: one class id per line, or one comma-separated 0/1 vector per line
//!   for multi-label targets.
//! * Splits: one node id per line.
//!
//! Parsers reject malformed input with the offending line number instead of
//! repairing it. Writers emit the shortest text that parses back to the same
//! `f64`, so save followed by load is bitwise lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Edge, SelfLoopPolicy};
use crate::tensor::Tensor;
use crate::train::{Dataset, Labels, SplitSpec};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with comments removed, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_index(tok: &str, path: &Path, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| {
        parse_err(
            path,
            line,
            format!("{what} `{tok}` is not a non-negative integer"),
        )
    })
}

fn parse_real(tok: &str, path: &Path, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} `{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("{what} `{tok}` is not finite"),
        ));
    }
    Ok(v)
}

pub fn parse_edges(text: &str, path: &Path) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    for (line, l) in content_lines(text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if !(2..=3).contains(&toks.len()) {
            return Err(parse_err(
                path,
                line,
                format!("expected `src dst [weight]`, got {} fields", toks.len()),
            ));
        }
        let src = parse_index(toks[0], path, line, "source")?;
        let dst = parse_index(toks[1], path, line, "target")?;
        let weight = match toks.get(2) {
            Some(t) => parse_real(t, path, line, "weight")?,
            None => 1.0,
        };
        edges.push(Edge::weighted(src, dst, weight));
    }
    Ok(edges)
}

pub fn format_edges(edges: &[Edge]) -> String {
    let mut out = String::new();
    for e in edges {
        if e.weight == 1.0 {
            let _ = writeln!(out, "{} {}", e.src, e.dst);
        } else {
            let _ = writeln!(out, "{} {} {:?}", e.src, e.dst, e.weight);
        }
    }
    out
}

pub fn parse_features(text: &str, path: &Path) -> Result<Tensor> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing `N D` header"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 2 {
        return Err(parse_err(path, hline, "header must be `N D`"));
    }
    let n = parse_index(h[0], path, hline, "N")?;
    let d = parse_index(h[1], path, hline, "D")?;
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (line, l) in lines {
        rows += 1;
        if rows > n {
            continue;
        }
        let before = data.len();
        for tok in l.split_whitespace() {
            data.push(parse_real(tok, path, line, "feature")?);
        }
        if data.len() - before != d {
            return Err(parse_err(
                path,
                line,
                format!("expected {d} values, got {}", data.len() - before),
            ));
        }
    }
    if rows != n {
        return Err(parse_err(
            path,
            hline,
            format!("header declares N={n} rows but the file has {rows}"),
        ));
    }
    Tensor::new(n, d, data)
}

pub fn format_features(x: &Tensor) -> String {
    let mut out = format!("{} {}\n", x.rows(), x.cols());
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Class ids unless some line contains a comma, then 0/1 vectors.
/// `num_classes` is one more than the largest id seen.
pub fn parse_labels(text: &str, path: &Path) -> Result<Labels> {
    let lines: Vec<(usize, &str)> = content_lines(text).collect();
    if lines.iter().any(|(_, l)| l.contains(',')) {
        let width = lines[0].1.split(',').count();
        let mut data = Vec::with_capacity(lines.len() * width);
        for &(line, l) in &lines {
            let toks: Vec<&str> = l.split(',').map(str::trim).collect();
            if toks.len() != width {
                return Err(parse_err(
                    path,
                    line,
                    format!(
                        "label arity {} differs from {width} on the first line",
                        toks.len()
                    ),
                ));
            }
            for t in toks {
                match t {
                    "0" => data.push(0.0),
                    "1" => data.push(1.0),
                    other => {
                        return Err(parse_err(
                            path,
                            line,
                            format!("multi-label entry `{other}` is not 0 or 1"),
                        ))
                    }
                }
            }
        }
        Labels::multi_label(Tensor::new(lines.len(), width, data)?)
    } else {
        let labels = lines
            .iter()
            .map(|&(line, l)| {
                if l.split_whitespace().count() != 1 {
                    return Err(parse_err(path, line, "expected a single class id"));
                }
                parse_index(l, path, line, "label")
            })
            .collect::<Result<Vec<_>>>()?;
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Labels::classes(labels, num_classes)
    }
}

pub fn format_labels(labels: &Labels) -> String {
    let mut out = String::new();
    match labels {
        Labels::Classes { labels, .. } => {
            for l in labels {
                let _ = writeln!(out, "{l}");
            }
        }
        Labels::MultiLabel(t) => {
            for i in 0..t.rows() {
                let row: Vec<&str> = t
                    .row(i)
                    .iter()
                    .map(|&v| if v == 1.0 { "1" } else { "0" })
                    .collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
    }
    out
}

pub fn parse_node_ids(text: &str, path: &Path) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(line, l)| parse_index(l, path, line, "node id"))
        .collect()
}

pub fn format_node_ids(ids: &[usize]) -> String {
    ids.iter().map(|i| format!("{i}\n")).collect()
}

pub fn read_edges(path: impl AsRef<Path>) -> Result<Vec<Edge>> {
    let path = path.as_ref();
    parse_edges(&read(path)?, path)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    parse_features(&read(path)?, path)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Labels> {
    let path = path.as_ref();
    parse_labels(&read(path)?, path)
}

pub fn read_node_ids(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    parse_node_ids(&read(path)?, path)
}

/// Locations of the files that make up a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

impl DatasetPaths {
    /// `edges.txt`, `features.txt`, `labels.txt`, `train.txt`, `val.txt` and
    /// `test.txt` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            edges: d.join("edges.txt"),
            features: d.join("features.txt"),
            labels: d.join("labels.txt"),
            train: d.join("train.txt"),
            val: d.join("val.txt"),
            test: d.join("test.txt"),
        }
    }

    pub fn all(&self) -> [&Path; 6] {
        [
            &self.edges,
            &self.features,
            &self.labels,
            &self.train,
            &self.val,
            &self.test,
        ]
    }
}

/// Reads and cross-checks a dataset. The node count comes from the feature
/// header; labels must match it, edges must stay inside it, and the splits
/// must be disjoint.
pub fn load_dataset(paths: &DatasetPaths, policy: SelfLoopPolicy) -> Result<Dataset> {
    let features = read_features(&paths.features)?;
    let n = features.rows();
    let labels = read_labels(&paths.labels)?;
    if labels.len() != n {
        return Err(Error::Inconsistent(format!(
            "{} has {n} rows but {} has {} labels",
            paths.features.display(),
            paths.labels.display(),
            labels.len()
        )));
    }
    let edges = read_edges(&paths.edges)?;
    let graph = build_graph(&edges, n, policy)?;
    let split = SplitSpec {
        train: read_node_ids(&paths.train)?,
        val: read_node_ids(&paths.val)?,
        test: read_node_ids(&paths.test)?,
    };
    Dataset::new(graph, features, labels, split)
}

/// Writes a dataset in the layout of [`DatasetPaths`]. `edges` are written
/// as given, so pass the edge list from before any self-loop policy.
pub fn save_dataset(
    paths: &DatasetPaths,
    edges: &[Edge],
    features: &Tensor,
    labels: &Labels,
    split: &SplitSpec,
) -> Result<()> {
    write(&paths.edges, &format_edges(edges))?;
    write(&paths.features, &format_features(features))?;
    write(&paths.labels, &format_labels(labels))?;
    write(&paths.train, &format_node_ids(&split.train))?;
    write(&paths.val, &format_node_ids(&split.val))?;
    write(&paths.test, &format_node_ids(&split.test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t.txt")
    }

    #[test]
    fn edges_with_comments_and_weights() {
        let e = parse_edges("# header\n0 1\n\n1 2 0.5 # trailing\n", p()).unwrap();
        assert_eq!(e, vec![Edge::new(0, 1), Edge::weighted(1, 2, 0.5)]);
        assert_eq!(parse_edges(&format_edges(&e), p()).unwrap(), e);
    }

    #[test]
    fn edge_errors_carry_line() {
        let err = parse_edges("0 1\n0 -1\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(matches!(
            parse_edges("0\n", p()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_edges("0 1 nan\n", p()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn feature_header_mismatch_names_counts() {
        let err = parse_features("3 2\n1 2\n3 4\n", p())
            .unwrap_err()
            .to_string();
        assert!(err.contains("N=3") && err.contains("has 2"), "{err}");
        assert!(matches!(
            parse_features("1 2\n1 2 3\n", p()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn features_round_trip_bitwise() {
        let x = Tensor::from_rows(&[vec![0.1, -1e-300], vec![1.0 / 3.0, 12345.678]]).unwrap();
        assert_eq!(parse_features(&format_features(&x), p()).unwrap(), x);
    }

    #[test]
    fn labels_both_kinds() {
        let l = parse_labels("0\n2\n1\n", p()).unwrap();
        assert_eq!(l, Labels::classes(vec![0, 2, 1], 3).unwrap());
        let m = parse_labels("0,1\n1,1\n", p()).unwrap();
        assert_eq!(m.num_outputs(), 2);
        assert_eq!(parse_labels(&format_labels(&m), p()).unwrap(), m);
        assert!(matches!(
            parse_labels("0,1\n1\n", p()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_labels("0,2\n", p()).is_err());
    }
}
