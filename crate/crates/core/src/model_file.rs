//! Line-oriented text format for pairwise models.
//!
//! ```text
//! mrf 1
//! nodes <n> <m>
//! node <i> <g_0> ... <g_{m-1}>
//! edge <i> <j> <h(0,0)> <h(0,1)> ... <h(m-1,m-1)>
//! ```
//!
//! Costs are negative logs. Edge lines need `i < j`; the matrix is row-major
//! with rows indexed by the label of `i`. Everything after `#` is ignored.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{build_model, Graph, GraphicalModel};

pub const FORMAT_VERSION: u32 = 1;

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_index(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    tok.ok_or_else(|| err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| err(line, format!("bad {what}")))
}

fn parse_costs<'a>(
    toks: impl Iterator<Item = &'a str>,
    expected: usize,
    line: usize,
) -> Result<Vec<f64>> {
    let values = toks
        .map(|t| {
            let v: f64 = t
                .parse()
                .map_err(|_| err(line, format!("bad number {t:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line, format!("non-finite cost {t:?}")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expected {
        return Err(err(
            line,
            format!("expected {expected} costs, found {}", values.len()),
        ));
    }
    Ok(values)
}

/// Parses a model description.
pub fn parse_model(text: &str) -> Result<GraphicalModel> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("")))
        .filter(|(_, l)| !l.trim().is_empty());

    let (line, header) = lines.next().ok_or_else(|| err(1, "empty model file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("mrf") {
        return Err(err(line, "expected `mrf <version>`"));
    }
    let version: u32 = parse_index(toks.next(), line, "version")? as u32;
    if version != FORMAT_VERSION || toks.next().is_some() {
        return Err(err(line, format!("unsupported format version {version}")));
    }

    let (line, dims) = lines
        .next()
        .ok_or_else(|| err(line + 1, "missing `nodes` line"))?;
    let mut toks = dims.split_whitespace();
    if toks.next() != Some("nodes") {
        return Err(err(line, "expected `nodes <n> <m>`"));
    }
    let n = parse_index(toks.next(), line, "node count")?;
    let m = parse_index(toks.next(), line, "label count")?;
    if toks.next().is_some() {
        return Err(err(line, "trailing tokens after `nodes <n> <m>`"));
    }
    if n == 0 || m == 0 {
        return Err(err(line, "node and label counts must be positive"));
    }

    let mut node_costs: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut edge_costs: Vec<((usize, usize), Vec<f64>)> = Vec::new();
    let mut seen_edges = std::collections::HashSet::new();
    for (line, content) in lines {
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("node") => {
                if !edge_costs.is_empty() {
                    return Err(err(line, "node lines must precede edge lines"));
                }
                let i = parse_index(toks.next(), line, "node index")?;
                if i >= n {
                    return Err(err(line, format!("node {i} out of range for {n} nodes")));
                }
                if node_costs[i].is_some() {
                    return Err(err(line, format!("duplicate node {i}")));
                }
                node_costs[i] = Some(parse_costs(toks, m, line)?);
            }
            Some("edge") => {
                let i = parse_index(toks.next(), line, "edge endpoint")?;
                let j = parse_index(toks.next(), line, "edge endpoint")?;
                if i >= j {
                    return Err(err(line, format!("edge ({i}, {j}) needs i < j")));
                }
                if j >= n {
                    return Err(err(line, format!("node {j} out of range for {n} nodes")));
                }
                if !seen_edges.insert((i, j)) {
                    return Err(err(line, format!("duplicate edge ({i}, {j})")));
                }
                edge_costs.push(((i, j), parse_costs(toks, m * m, line)?));
            }
            Some(other) => return Err(err(line, format!("unknown record {other:?}"))),
            None => unreachable!("blank lines are filtered"),
        }
    }

    let node_costs = node_costs
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            g.ok_or_else(|| err(0, format!("expected {n} node lines, node {i} is missing")))
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = Graph::from_edges(n, edge_costs.iter().map(|&(e, _)| e))?;
    build_model(graph, node_costs, edge_costs)
}

/// Writes `model` in the text format. Numbers use the shortest decimal form
/// that parses back to the same `f64`.
pub fn serialize_model(model: &GraphicalModel) -> String {
    let m = model.label_count();
    let mut out = format!("mrf {FORMAT_VERSION}\nnodes {} {m}\n", model.node_count());
    for i in 0..model.node_count() {
        out.push_str("node ");
        out.push_str(&i.to_string());
        for v in model.node_cost(i) {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    for (idx, &(i, j)) in model.graph().edges().iter().enumerate() {
        let _ = write!(out, "edge {i} {j}");
        for v in model.canonical_edge_cost(idx) {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}
