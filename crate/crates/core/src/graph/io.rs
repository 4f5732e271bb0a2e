//! Text format:
//!
//! ```text
//! nodes=<n> features=<F> classes=<C>
//! <label> <f_1> ... <f_F>        (n lines)
//! edges=<m>
//! <u> <v>                        (m lines)
//! ```
//!
//! Labels are either integer class ids in `[0, C)` or arbitrary tokens. Token
//! labels are densified in sorted order and kept as class names.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Graph;
use crate::error::{Result, TegError};
use crate::numerics::Tensor;

fn perr(line: usize, msg: impl Into<String>) -> TegError {
    TegError::Parse {
        line,
        msg: msg.into(),
    }
}

fn header_fields(line_no: usize, line: &str, keys: &[&str]) -> Result<Vec<usize>> {
    let map: BTreeMap<&str, &str> = line
        .split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| perr(line_no, format!("expected key=value, got {tok:?}")))
        })
        .collect::<Result<_>>()?;
    keys.iter()
        .map(|k| {
            let raw = map
                .get(k)
                .ok_or_else(|| perr(line_no, format!("missing {k}=")))?;
            raw.parse()
                .map_err(|_| perr(line_no, format!("{k} is not a count: {raw:?}")))
        })
        .collect()
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let hv = header_fields(ln, header, &["nodes", "features", "classes"])?;
    let (n, f, c) = (hv[0], hv[1], hv[2]);

    let mut raw_labels = Vec::with_capacity(n);
    let mut feats = Vec::with_capacity(n * f);
    for node in 0..n {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| perr(ln, format!("expected {n} node lines, found {node}")))?;
        let mut toks = line.split_whitespace();
        let label = toks.next().unwrap().to_string();
        let before = feats.len();
        for t in toks {
            let v: f64 = t
                .parse()
                .map_err(|_| perr(ln, format!("bad feature value {t:?}")))?;
            if !v.is_finite() {
                return Err(perr(ln, format!("non-finite feature {t:?}")));
            }
            feats.push(v);
        }
        if feats.len() - before != f {
            return Err(TegError::DimensionMismatch(format!(
                "line {ln}: expected {f} features, found {}",
                feats.len() - before
            )));
        }
        raw_labels.push((ln, label));
    }

    let (ln, edge_header) = lines
        .next()
        .ok_or_else(|| perr(ln, "missing edges= line"))?;
    let m = header_fields(ln, edge_header, &["edges"])?[0];
    let mut edges = Vec::with_capacity(m);
    for k in 0..m {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| perr(ln, format!("expected {m} edge lines, found {k}")))?;
        let ends: Vec<usize> = line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| perr(ln, format!("bad node id {t:?}")))
            })
            .collect::<Result<_>>()?;
        if ends.len() != 2 {
            return Err(perr(ln, "edge line needs exactly two node ids"));
        }
        if ends[0] >= n || ends[1] >= n {
            return Err(TegError::EndpointOutOfRange {
                u: ends[0],
                v: ends[1],
                num_nodes: n,
            });
        }
        edges.push((ends[0], ends[1]));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "unexpected trailing content"));
    }

    let (labels, names) = densify_labels(&raw_labels, c)?;
    Graph::new(n, edges, Tensor::new(&[n, f], feats)?, labels, c, names)
}

fn densify_labels(raw: &[(usize, String)], c: usize) -> Result<(Vec<usize>, Option<Vec<String>>)> {
    let numeric: Option<Vec<usize>> = raw.iter().map(|(_, l)| l.parse().ok()).collect();
    if let Some(ids) = numeric {
        if let Some(node) = ids.iter().position(|&l| l >= c) {
            return Err(TegError::LabelOutOfRange {
                node,
                label: ids[node].to_string(),
                num_classes: c,
            });
        }
        return Ok((ids, None));
    }
    let mut names: Vec<String> = raw.iter().map(|(_, l)| l.clone()).collect();
    names.sort();
    names.dedup();
    if names.len() != c {
        return Err(TegError::LabelOutOfRange {
            node: raw.len().saturating_sub(1),
            label: format!("{} distinct labels", names.len()),
            num_classes: c,
        });
    }
    let ids = raw
        .iter()
        .map(|(_, l)| names.binary_search(l).unwrap())
        .collect();
    Ok((ids, Some(names)))
}

pub fn to_text(g: &Graph) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "nodes={} features={} classes={}",
        g.num_nodes(),
        g.feature_dim(),
        g.num_classes()
    );
    for v in 0..g.num_nodes() {
        match g.class_names() {
            Some(names) => s.push_str(&names[g.label(v)]),
            None => {
                let _ = write!(s, "{}", g.label(v));
            }
        }
        for x in g.features().row(v) {
            // Display for f64 is shortest round-trip.
            let _ = write!(s, " {x}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "edges={}", g.num_edges());
    for &(u, v) in g.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| TegError::io(path, e))?;
    parse_graph(&text)
}

pub fn save_graph(g: &Graph, path: &Path) -> Result<()> {
    fs::write(path, to_text(g)).map_err(|e| TegError::io(path, e))
}
