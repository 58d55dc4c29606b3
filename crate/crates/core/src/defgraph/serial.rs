//! Text form:
//!
//! ```text
//! nodes <n> k <K>
//! x y z radius | rw rx ry rz dw dx dy dz     (n lines)
//! edges
//! i: j j j j                                 (n lines)
//! ```
//!
//! Numbers use the shortest round-trip decimal form. Edges are recomputed from node positions on read and must match the file.

use std::io::{BufRead, Write};

use super::{DeformationGraph, GraphError, GraphNode};
use crate::math::{DualQuaternion, Vec3};

impl DeformationGraph {
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "nodes {} k {}", self.nodes.len(), self.k)?;
        for n in &self.nodes {
            let p = n.position;
            let dq = n.dq.to_array().map(|c| c.to_string()).join(" ");
            writeln!(w, "{} {} {} {} | {dq}", p.x, p.y, p.z, n.radius)?;
        }
        writeln!(w, "edges")?;
        for (i, js) in self.edges.iter().enumerate() {
            let js: Vec<String> = js.iter().map(|j| j.to_string()).collect();
            writeln!(w, "{i}: {}", js.join(" "))?;
        }
        w.flush()
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), GraphError> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(GraphError::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
            }
        };
        let err = |line: usize, msg: &str| GraphError::Parse { line, msg: msg.to_string() };
        let (ln, header) = next("header")?;
        let (n, k) = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["nodes", n, "k", k] => (
                n.parse::<usize>().map_err(|_| err(ln, "bad node count"))?,
                k.parse::<usize>().map_err(|_| err(ln, "bad neighbor count"))?,
            ),
            _ => return Err(err(ln, "expected `nodes <n> k <K>`")),
        };
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = next("node line")?;
            let (geo, dq) = line.split_once('|').ok_or_else(|| err(ln, "missing `|` separator"))?;
            let geo: Vec<f64> = parse_floats(geo).ok_or_else(|| err(ln, "bad number"))?;
            let dq: Vec<f64> = parse_floats(dq).ok_or_else(|| err(ln, "bad number"))?;
            let (Ok(geo), Ok(dq)) = (<[f64; 4]>::try_from(geo), <[f64; 8]>::try_from(dq)) else {
                return Err(err(ln, "expected 4 values, `|`, then 8 values"));
            };
            if !(geo[3] > 0.0) {
                return Err(err(ln, "radius must be positive"));
            }
            nodes.push(GraphNode {
                position: Vec3::new(geo[0], geo[1], geo[2]),
                radius: geo[3],
                dq: DualQuaternion::from_array(dq),
            });
        }
        let (ln, line) = next("`edges`")?;
        if line.trim() != "edges" {
            return Err(err(ln, "expected `edges`"));
        }
        let graph = DeformationGraph::from_nodes(nodes, k)?;
        for (i, expect) in graph.edges.iter().enumerate() {
            let (ln, line) = next("edge line")?;
            let (idx, rest) = line.split_once(':').ok_or_else(|| err(ln, "expected `i: j ...`"))?;
            if idx.trim().parse::<usize>().ok() != Some(i) {
                return Err(err(ln, "edge lines must be in node order"));
            }
            let js: Vec<usize> = rest
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err(ln, "bad neighbor index"))?;
            if &js != expect {
                return Err(err(ln, "edges disagree with the node positions"));
            }
        }
        Ok(graph)
    }
}

fn parse_floats(s: &str) -> Option<Vec<f64>> {
    s.split_whitespace().map(|t| t.parse().ok()).collect()
}
