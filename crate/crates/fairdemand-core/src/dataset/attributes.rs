//! Protected attribute tables and 60/40-percentile group labeling.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::demand::DemandTensor;

/// Which end of an attribute marks the advantaged group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    High,
    Low,
}

/// Default advantaged direction for the canonical attribute columns; other
/// columns need an explicit direction.
pub fn default_direction(column: &str) -> Option<Direction> {
    match column {
        "race_white_pct" | "edu_bachelor_pct" | "age_young_pct" => Some(Direction::High),
        "income_low_pct" => Some(Direction::Low),
        _ => None,
    }
}

/// Node-by-attribute matrix of shares in [0, 1], with the node order shared
/// with the demand tensor.
#[derive(Debug, Clone)]
pub struct ProtectedAttributeTable {
    pub node_ids: Vec<String>,
    pub names: Vec<String>,
    pub directions: Vec<Direction>,
    /// N x Q values.
    pub z: Tensor,
}

impl ProtectedAttributeTable {
    pub fn new(
        node_ids: Vec<String>,
        names: Vec<String>,
        directions: Vec<Direction>,
        z: Tensor,
    ) -> Result<Self> {
        let n = node_ids.len();
        let q = names.len();
        if directions.len() != q || z.shape() != [n, q] {
            return Err(Error::Validation(
                "attribute table dimensions are inconsistent".into(),
            ));
        }
        if z.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Validation(
                "attribute values must lie in [0, 1]".into(),
            ));
        }
        Ok(ProtectedAttributeTable {
            node_ids,
            names,
            directions,
            z,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.names.len()
    }

    /// Column `j` as a plain vector.
    pub fn attribute(&self, j: usize) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.z.get2(i, j)).collect()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keep only the given node rows (by index), preserving order.
    pub fn select_nodes(&self, keep: &[usize]) -> ProtectedAttributeTable {
        let q = self.n_attributes();
        let mut z = Tensor::zeros(&[keep.len(), q]);
        let mut node_ids = Vec::with_capacity(keep.len());
        for (r, &i) in keep.iter().enumerate() {
            node_ids.push(self.node_ids[i].clone());
            for j in 0..q {
                z.set2(r, j, self.z.get2(i, j));
            }
        }
        ProtectedAttributeTable {
            node_ids,
            names: self.names.clone(),
            directions: self.directions.clone(),
            z,
        }
    }

    /// Keep only the named attribute columns, in the given order.
    pub fn select_attributes(&self, names: &[String]) -> Result<ProtectedAttributeTable> {
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            idx.push(self.attribute_index(name).ok_or_else(|| {
                Error::Validation(format!("unknown attribute '{name}'"))
            })?);
        }
        let n = self.n_nodes();
        let mut z = Tensor::zeros(&[n, idx.len()]);
        for i in 0..n {
            for (c, &j) in idx.iter().enumerate() {
                z.set2(i, c, self.z.get2(i, j));
            }
        }
        ProtectedAttributeTable::new(
            self.node_ids.clone(),
            names.to_vec(),
            idx.iter().map(|&j| self.directions[j]).collect(),
            z,
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "zone,{}", self.names.join(","))?;
        for i in 0..self.n_nodes() {
            let mut row = self.node_ids[i].clone();
            for j in 0..self.n_attributes() {
                row.push(',');
                row.push_str(&format!("{}", self.z.get2(i, j)));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Read an attribute CSV with header `zone,<attr1>,<attr2>,...`. Directions
/// come from `directions` overrides, falling back to the canonical defaults;
/// columns with neither are an error.
pub fn read_attribute_csv<R: Read>(
    reader: R,
    path_label: &str,
    directions: &BTreeMap<String, Direction>,
) -> Result<ProtectedAttributeTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema {
            path: path_label.into(),
            line: 1,
            detail: format!("cannot read header: {e}"),
        })?
        .clone();
    let mut names: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if headers.get(0).map(|s| s.trim()) != Some("zone") || names.is_empty() {
        return Err(Error::Schema {
            path: path_label.into(),
            line: 1,
            detail: "expected header 'zone,<attribute columns...>'".into(),
        });
    }
    let mut dirs = Vec::with_capacity(names.len());
    for name in &names {
        let dir = directions
            .get(name)
            .copied()
            .or_else(|| default_direction(name))
            .ok_or_else(|| Error::Schema {
                path: path_label.into(),
                line: 1,
                detail: format!("no advantaged_direction configured for column '{name}'"),
            })?;
        dirs.push(dir);
    }

    let mut node_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row_no, row) in rdr.records().enumerate() {
        let line = row_no as u64 + 2;
        let row = row.map_err(|e| Error::Schema {
            path: path_label.into(),
            line,
            detail: format!("malformed row: {e}"),
        })?;
        let zone = row.get(0).unwrap_or("").trim();
        if zone.is_empty() {
            return Err(Error::Schema {
                path: path_label.into(),
                line,
                detail: "empty zone id".into(),
            });
        }
        let mut vals = Vec::with_capacity(names.len());
        for j in 0..names.len() {
            let raw = row.get(j + 1).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::Schema {
                path: path_label.into(),
                line,
                detail: format!("bad value '{raw}' in column '{}'", names[j]),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Schema {
                    path: path_label.into(),
                    line,
                    detail: format!("value {v} in column '{}' outside [0, 1]", names[j]),
                });
            }
            vals.push(v);
        }
        node_ids.push(zone.to_string());
        rows.push(vals);
    }
    let n = node_ids.len();
    let q = names.len();
    let mut z = Tensor::zeros(&[n, q]);
    for (i, vals) in rows.iter().enumerate() {
        for (j, &v) in vals.iter().enumerate() {
            z.set2(i, j, v);
        }
    }
    names.shrink_to_fit();
    ProtectedAttributeTable::new(node_ids, names, dirs, z)
}

/// Drop nodes missing from either artifact, symmetrically, and reorder the
/// attribute rows to the demand tensor's node order. Returns the aligned
/// pair plus the dropped node ids.
pub fn align_nodes(
    demand: &DemandTensor,
    table: &ProtectedAttributeTable,
) -> Result<(DemandTensor, ProtectedAttributeTable, Vec<String>)> {
    let by_zone: BTreeMap<&str, usize> = table
        .node_ids
        .iter()
        .enumerate()
        .map(|(i, z)| (z.as_str(), i))
        .collect();
    let mut keep_demand = Vec::new();
    let mut keep_table = Vec::new();
    let mut dropped = Vec::new();
    for (i, zone) in demand.node_ids().iter().enumerate() {
        match by_zone.get(zone.as_str()) {
            Some(&j) => {
                keep_demand.push(i);
                keep_table.push(j);
            }
            None => dropped.push(zone.clone()),
        }
    }
    let demand_zones: std::collections::BTreeSet<&str> =
        demand.node_ids().iter().map(|s| s.as_str()).collect();
    for zone in &table.node_ids {
        if !demand_zones.contains(zone.as_str()) {
            dropped.push(zone.clone());
        }
    }
    if keep_demand.is_empty() {
        return Err(Error::Validation(
            "no nodes shared between trips and attribute table".into(),
        ));
    }
    Ok((
        demand.select_nodes(&keep_demand),
        table.select_nodes(&keep_table),
        dropped,
    ))
}

/// Per-node group label for one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupLabel {
    Advantaged,
    Disadvantaged,
    Middle,
}

/// Three-way labels per attribute from the 40th/60th percentile band.
#[derive(Debug, Clone)]
pub struct GroupLabeling {
    /// `labels[j][i]` is the label of node `i` for attribute `j`.
    pub labels: Vec<Vec<GroupLabel>>,
    /// `(p40, p60)` attribute values per attribute.
    pub thresholds: Vec<(f64, f64)>,
    /// True where the attribute has no usable variation.
    pub degenerate: Vec<bool>,
}

impl GroupLabeling {
    pub fn group_indices(&self, attr: usize, label: GroupLabel) -> Vec<usize> {
        self.labels[attr]
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Nearest-rank 60/40 banding. The bottom `ceil(0.4 N)` values form the
/// low pole (value at or below p40) and the top `ceil(0.4 N)` the high pole
/// (value strictly above p60); the band between is labeled middle. The
/// advantaged direction decides which pole is advantaged. An attribute whose
/// poles collapse (constant values or total ties) is flagged degenerate and
/// excluded from gap reporting.
pub fn label_groups(table: &ProtectedAttributeTable) -> Result<GroupLabeling> {
    let n = table.n_nodes();
    if n < 5 {
        return Err(Error::Validation(format!(
            "need at least 5 nodes to label groups, have {n}"
        )));
    }
    let band = (0.4 * n as f64).ceil() as usize;
    let mut labels = Vec::with_capacity(table.n_attributes());
    let mut thresholds = Vec::with_capacity(table.n_attributes());
    let mut degenerate = Vec::with_capacity(table.n_attributes());
    for j in 0..table.n_attributes() {
        let values = table.attribute(j);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p40 = sorted[band - 1];
        let p60 = sorted[n - band - 1];
        let direction = table.directions[j];
        let mut attr_labels = Vec::with_capacity(n);
        let mut n_high = 0usize;
        let mut n_low = 0usize;
        for &v in &values {
            let label = if v > p60 {
                n_high += 1;
                match direction {
                    Direction::High => GroupLabel::Advantaged,
                    Direction::Low => GroupLabel::Disadvantaged,
                }
            } else if v <= p40 {
                n_low += 1;
                match direction {
                    Direction::High => GroupLabel::Disadvantaged,
                    Direction::Low => GroupLabel::Advantaged,
                }
            } else {
                GroupLabel::Middle
            };
            attr_labels.push(label);
        }
        labels.push(attr_labels);
        thresholds.push((p40, p60));
        degenerate.push(n_high == 0 || n_low == 0);
    }
    Ok(GroupLabeling {
        labels,
        thresholds,
        degenerate,
    })
}
