//! Renderers for analysis results: annotated heatmaps (SVG), correlation
//! graphs (DOT), and machine-readable dumps (JSON, CSV).
//!
//! Every renderer is a pure function of its inputs and emits byte-identical
//! output for identical inputs: no timestamps, no map-order dependence, all
//! floats formatted with fixed precision or the shortest round-trip form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partial_corr::{average_partial_corr, PartialCorrResult};
use crate::trace::{Corr, PartialCorrMatrix};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("MalformedResult: {detail}")]
    MalformedResult { detail: String },
}

/// Heatmap styling. The color scale is a fixed diverging map over `[-1, 1]`
/// centered on zero; undefined entries render as hatched grey cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderSpec {
    /// Decimals in cell labels.
    pub precision: usize,
    /// Cell edge length in pixels.
    pub cell_size: u32,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            precision: 2,
            cell_size: 56,
        }
    }
}

/// Diverging color for a correlation in `[-1, 1]`: blue below zero, white at
/// zero, red above; intensity depends only on `|v|`, making the scale
/// exactly symmetric around zero.
pub(crate) fn diverging_color(v: f64) -> (u8, u8, u8) {
    let t = v.abs().clamp(0.0, 1.0);
    let target = if v >= 0.0 {
        (178.0, 24.0, 43.0) // red
    } else {
        (33.0, 102.0, 172.0) // blue
    };
    let mix = |to: f64| (255.0 + (to - 255.0) * t).round() as u8;
    (mix(target.0), mix(target.1), mix(target.2))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the partial-correlation matrix as an annotated SVG grid with
/// dataset labels on both axes.
pub fn render_heatmap(result: &PartialCorrResult, spec: &RenderSpec) -> String {
    let matrix = &result.matrix;
    let n = matrix.len() as u32;
    let cell = spec.cell_size;
    let label_px: u32 = 8 * matrix
        .datasets
        .iter()
        .map(|d| d.name().len() as u32)
        .max()
        .unwrap_or(4)
        + 16;
    let left = label_px;
    let top = label_px;
    let width = left + n * cell + 8;
    let height = top + n * cell + 8;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(
        "<defs>\n<pattern id=\"undef\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" \
         patternTransform=\"rotate(45)\">\n\
         <rect width=\"6\" height=\"6\" fill=\"#cccccc\"/>\n\
         <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#888888\" stroke-width=\"2\"/>\n\
         </pattern>\n</defs>\n",
    );
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));

    let font = "font-family=\"Helvetica,Arial,sans-serif\"";
    for (i, dataset) in matrix.datasets.iter().enumerate() {
        let name = xml_escape(dataset.name());
        // row label, right-aligned against the grid
        let y = top + i as u32 * cell + cell / 2;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" dominant-baseline=\"central\" \
             font-size=\"12\" {font}>{name}</text>\n",
            left - 6,
            y
        ));
        // column label, rotated above the grid
        let x = left + i as u32 * cell + cell / 2;
        svg.push_str(&format!(
            "<text transform=\"translate({x},{}) rotate(-45)\" text-anchor=\"start\" \
             font-size=\"12\" {font}>{name}</text>\n",
            top - 8
        ));
    }

    for i in 0..matrix.len() {
        for j in 0..matrix.len() {
            let x = left + j as u32 * cell;
            let y = top + i as u32 * cell;
            match matrix.get(i, j) {
                Corr::Defined(v) => {
                    let (r, g, b) = diverging_color(v);
                    let text_color = if v.abs() > 0.6 { "white" } else { "black" };
                    svg.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" \
                         fill=\"rgb({r},{g},{b})\" stroke=\"#ffffff\"/>\n"
                    ));
                    svg.push_str(&format!(
                        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" \
                         dominant-baseline=\"central\" font-size=\"12\" fill=\"{text_color}\" \
                         {font}>{v:.prec$}</text>\n",
                        x + cell / 2,
                        y + cell / 2,
                        prec = spec.precision,
                    ));
                }
                Corr::Undefined => {
                    svg.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" \
                         fill=\"url(#undef)\" stroke=\"#ffffff\"/>\n"
                    ));
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Edge width for a correlation: visible at zero, bounded at `|ρ| = 1`.
pub fn edge_width(rho: f64) -> f64 {
    0.5 + 4.0 * rho.abs()
}

/// Renders the correlation graph in DOT: one node per OOD dataset, one edge
/// per defined pair. Width encodes `|ρ|`, dashing encodes a negative sign.
/// Undefined pairs get no edge. Nodes and edges are emitted in sorted order.
pub fn render_graph(result: &PartialCorrResult) -> String {
    let matrix = &result.matrix;
    let mut out = String::from("graph partial_ood_correlations {\n");
    out.push_str("  node [shape=ellipse, style=filled, fillcolor=white];\n");
    for dataset in &matrix.datasets {
        out.push_str(&format!("  \"{}\";\n", dataset.name().replace('"', "\\\"")));
    }
    for (a, b, rho) in matrix.defined_pairs() {
        let style = if rho >= 0.0 { "solid" } else { "dashed" };
        out.push_str(&format!(
            "  \"{}\" -- \"{}\" [penwidth={:.2}, style={}, label=\"{:.2}\"];\n",
            a.name().replace('"', "\\\""),
            b.name().replace('"', "\\\""),
            edge_width(rho),
            style,
            rho,
        ));
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize, Deserialize)]
struct ResultDocument {
    #[serde(flatten)]
    result: PartialCorrResult,
    average_partial_corr: Corr,
}

/// Full nested result as pretty JSON with alphabetically sorted keys.
pub fn dump_result_json(result: &PartialCorrResult) -> String {
    let doc = ResultDocument {
        result: result.clone(),
        average_partial_corr: average_partial_corr(result),
    };
    // round-tripping through Value sorts the keys at every level
    let value = serde_json::to_value(&doc).expect("result serializes");
    let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
    out.push('\n');
    out
}

/// Reads back a JSON dump produced by [`dump_result_json`].
pub fn load_result_json(content: &str) -> Result<PartialCorrResult, ExportError> {
    let doc: ResultDocument =
        serde_json::from_str(content).map_err(|e| ExportError::MalformedResult {
            detail: e.to_string(),
        })?;
    Ok(doc.result)
}

/// Long-form CSV of the upper-triangle pairs: `dataset_1,dataset_2,partial_corr`,
/// empty value for undefined entries, rows in dataset order.
pub fn dump_matrix_csv(matrix: &PartialCorrMatrix) -> String {
    let mut out = String::from("dataset_1,dataset_2,partial_corr\n");
    for i in 0..matrix.len() {
        for j in (i + 1)..matrix.len() {
            let value = match matrix.get(i, j) {
                Corr::Defined(v) => format!("{v}"),
                Corr::Undefined => String::new(),
            };
            out.push_str(&format!(
                "{},{},{}\n",
                matrix.datasets[i], matrix.datasets[j], value
            ));
        }
    }
    out
}

/// CSV dump of a result's partial-correlation matrix.
pub fn dump_result_csv(result: &PartialCorrResult) -> String {
    dump_matrix_csv(&result.matrix)
}

/// Long-form CSV of fitted-regressor curves: `dataset,x,y` with `n` evenly
/// spaced samples per dataset over each model's training domain. Feeds the
/// per-dataset in-domain-vs-OOD curve plots.
pub fn dump_curves_csv(result: &PartialCorrResult, n: usize) -> String {
    let mut out = String::from("dataset,x,y\n");
    for (dataset, model) in &result.per_dataset_models {
        for (x, y) in model.curve_samples(n) {
            out.push_str(&format!("{dataset},{x},{y}\n"));
        }
    }
    out
}
