//! Graphviz DOT export for inspecting a learned graph.
//!
//! Nodes are clustered and colored by entity and labelled with the hour of
//! their bucket start. Edges are green for positive and red for negative
//! coefficients; opacity and pen width scale with `|coeff| / max |coeff|`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::types::DependencyGraph;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const POSITIVE: &str = "#00A000";
const NEGATIVE: &str = "#D00000";

#[derive(Debug, Clone, PartialEq)]
pub struct DotOptions {
    /// Edges with `|coeff|` below this are omitted.
    pub min_abs_weight: f64,
    /// Pen width of the strongest edge.
    pub max_penwidth: f64,
    /// Print coefficients as edge labels.
    pub show_weights: bool,
}

impl Default for DotOptions {
    fn default() -> Self {
        Self {
            min_abs_weight: 0.0,
            max_penwidth: 4.0,
            show_weights: false,
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// `#RRGGBBAA` with alpha proportional to `intensity` in [0, 1].
pub fn edge_color(coeff: f64, intensity: f64) -> String {
    let base = if coeff >= 0.0 { POSITIVE } else { NEGATIVE };
    let alpha = (intensity.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("{base}{alpha:02X}")
}

pub fn export_dot(graph: &DependencyGraph, options: &DotOptions) -> String {
    let edges = graph.edges();
    let max_abs = edges.iter().map(|(_, _, c)| c.abs()).fold(0.0, f64::max);

    let mut by_entity: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for key in graph.topo_order() {
        by_entity.entry(key.entity()).or_default().push(key);
    }

    let mut out = String::new();
    out.push_str("digraph dependency_graph {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=circle, style=filled, fontname=\"Helvetica\"];\n");
    for (i, (entity, keys)) in by_entity.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, "  subgraph {} {{", quote(&format!("cluster_{i}")));
        let _ = writeln!(out, "    label={};", quote(entity));
        for key in keys {
            let _ = writeln!(
                out,
                "    {} [label={}, fillcolor={}, tooltip={}];",
                quote(&key.to_string()),
                quote(&key.hour().to_string()),
                quote(color),
                quote(&key.to_string())
            );
        }
        out.push_str("  }\n");
    }

    for (parent, child, coeff) in edges {
        if coeff.abs() < options.min_abs_weight {
            continue;
        }
        let intensity = if max_abs > 0.0 { coeff.abs() / max_abs } else { 0.0 };
        let _ = write!(
            out,
            "  {} -> {} [color={}, penwidth={:.3}",
            quote(&parent.to_string()),
            quote(&child.to_string()),
            quote(&edge_color(coeff, intensity)),
            options.max_penwidth * intensity
        );
        if options.show_weights {
            let _ = write!(out, ", label={}", quote(&format!("{coeff:.3}")));
        }
        out.push_str("];\n");
    }
    out.push_str("}\n");
    out
}
