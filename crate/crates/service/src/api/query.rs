//! Query-string encoding of graph views, so any view is a shareable URL.

use super::error::ApiError;
use std::collections::BTreeSet;
use std::str::FromStr;
use tokenlattice::lattice::NodeId;
use tokenlattice::segment::SegmentationMode;
use tokenlattice::session::{ComparisonLayout, GraphQuery};

const GRAPH_KEYS: &[&str] = &[
    "mode",
    "threshold",
    "lambda",
    "longtail",
    "seed",
    "comparison",
    "selection",
    "char_width",
    "font_size",
    "radii",
];

fn number<T: FromStr>(key: &str, value: &str) -> Result<T, ApiError> {
    value
        .trim()
        .parse()
        .map_err(|_| ApiError::bad_request(format!("`{key}` is not a valid number: `{value}`")))
}

fn finite(key: &str, value: &str) -> Result<f64, ApiError> {
    let v: f64 = number(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ApiError::bad_request(format!("`{key}` must be finite")))
    }
}

/// Comma-separated node ids; an empty value is an explicit empty selection.
pub fn parse_selection(value: &str) -> Vec<NodeId> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(NodeId::from)
        .collect()
}

/// `id:rx:ry` entries separated by commas.
fn parse_radii(value: &str) -> Result<Vec<(NodeId, (f64, f64))>, ApiError> {
    let mut out = Vec::new();
    for entry in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = entry.split(':').collect();
        let [id, rx, ry] = parts[..] else {
            return Err(ApiError::bad_request(format!(
                "radii entry `{entry}` is not `id:rx:ry`"
            )));
        };
        out.push((NodeId::from(id), (finite("radii", rx)?, finite("radii", ry)?)));
    }
    Ok(out)
}

pub fn graph_query(pairs: &[(String, String)]) -> Result<GraphQuery, ApiError> {
    let mut seen = BTreeSet::new();
    let mut q = GraphQuery::default();
    for (key, value) in pairs {
        if !GRAPH_KEYS.contains(&key.as_str()) {
            return Err(ApiError::bad_request(format!("unknown query parameter `{key}`")));
        }
        if !seen.insert(key.as_str()) {
            return Err(ApiError::bad_request(format!("query parameter `{key}` given twice")));
        }
        match key.as_str() {
            "mode" => {
                q.mode = Some(
                    value
                        .parse::<SegmentationMode>()
                        .map_err(|e| ApiError::bad_request(e.to_string()))?,
                )
            }
            "threshold" => q.threshold = Some(finite(key, value)?),
            "lambda" => q.lambda = Some(finite(key, value)?),
            "longtail" => q.longtail = Some(finite(key, value)?),
            "seed" => q.seed = Some(number(key, value)?),
            "comparison" => {
                q.comparison =
                    Some(ComparisonLayout::from_str(value).map_err(|e| ApiError::bad_request(e.to_string()))?)
            }
            "selection" => q.selection = Some(parse_selection(value)),
            "char_width" => q.char_width = Some(finite(key, value)?),
            "font_size" => q.font_size = Some(finite(key, value)?),
            "radii" => q.radii = parse_radii(value)?.into_iter().collect(),
            _ => unreachable!(),
        }
    }
    Ok(q)
}

/// `selection` (or its alias `filter`) for the generation list.
pub fn list_selection(pairs: &[(String, String)]) -> Result<Option<Vec<NodeId>>, ApiError> {
    let mut out = None;
    for (key, value) in pairs {
        match key.as_str() {
            "selection" | "filter" if out.is_none() => out = Some(parse_selection(value)),
            "selection" | "filter" => return Err(ApiError::bad_request("selection given twice")),
            other => return Err(ApiError::bad_request(format!("unknown query parameter `{other}`"))),
        }
    }
    Ok(out)
}
