//! Symbolic knowledge base: attribute groups, per-class assignments and the
//! one-hot-per-group prototypes they induce.
//!
//! Every class picks exactly one value from every group. Its semantic vector
//! is the concatenation of one one-hot block per group, so it has length
//! `k = Σ group sizes` and exactly one `1.0` inside each group segment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

const BUNDLED_TRAFFIC_SIGNS: &str = include_str!("../data/traffic_signs.kb.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeGroup {
    pub name: String,
    pub values: Vec<String>,
}

impl AttributeGroup {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Position of each group inside a semantic vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    groups: Vec<AttributeGroup>,
    offsets: Vec<usize>,
    dim: usize,
}

impl Layout {
    fn new(groups: Vec<AttributeGroup>) -> Self {
        let mut offsets = Vec::with_capacity(groups.len());
        let mut dim = 0;
        for g in &groups {
            offsets.push(dim);
            dim += g.len();
        }
        Self { groups, offsets, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn groups(&self) -> &[AttributeGroup] {
        &self.groups
    }

    /// Index range of group `g` inside a semantic vector.
    pub fn segment(&self, g: usize) -> Range<usize> {
        self.offsets[g]..self.offsets[g] + self.groups[g].len()
    }

    pub fn segments(&self) -> impl Iterator<Item = (&AttributeGroup, Range<usize>)> + '_ {
        self.groups
            .iter()
            .enumerate()
            .map(|(g, group)| (group, self.segment(g)))
    }
}

/// A point in attribute space, tied to the layout it was produced for.
#[derive(Debug, Clone)]
pub struct SemanticVector {
    data: Vec<f64>,
    layout: Arc<Layout>,
}

impl SemanticVector {
    pub fn new(data: Vec<f64>, layout: Arc<Layout>) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(Error::shape(
                "SemanticVector::new",
                format!("length {}", layout.dim()),
                format!("length {}", data.len()),
            ));
        }
        Ok(Self { data, layout })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Per-group argmax, lowest index winning ties. Returns value indices.
    pub fn group_argmax(&self) -> Vec<usize> {
        self.layout
            .segments()
            .map(|(_, seg)| {
                let block = &self.data[seg];
                let mut best = 0;
                for (i, &v) in block.iter().enumerate().skip(1) {
                    if v > block[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    /// One-hot-per-group vector with the same per-group argmax.
    pub fn binarize(&self) -> SemanticVector {
        one_hot(&self.layout, &self.group_argmax())
    }

    pub fn same_layout(&self, other: &SemanticVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }
}

impl PartialEq for SemanticVector {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data && self.same_layout(other)
    }
}

fn one_hot(layout: &Arc<Layout>, value_indices: &[usize]) -> SemanticVector {
    let mut data = vec![0.0; layout.dim()];
    for (g, &v) in value_indices.iter().enumerate() {
        data[layout.offsets[g] + v] = 1.0;
    }
    SemanticVector {
        data,
        layout: Arc::clone(layout),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub label: String,
    /// Chosen value index for each group, in group order.
    pub values: Vec<usize>,
}

/// Validated knowledge base. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    layout: Arc<Layout>,
    classes: Vec<ClassEntry>,
    fingerprint: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KbDocument {
    groups: Vec<AttributeGroup>,
    classes: Vec<ClassDocument>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassDocument {
    label: String,
    attributes: BTreeMap<String, String>,
}

impl KnowledgeBase {
    /// Parses and validates a KB JSON document. Group and class order follow the document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: KbDocument =
            serde_json::from_str(text).map_err(|e| Error::validation(format!("knowledge base: {e}")))?;
        Self::from_parts(
            doc.groups,
            doc.classes.into_iter().map(|c| (c.label, c.attributes)).collect(),
        )
    }

    /// The 43-class traffic-sign knowledge base shipped with the crate
    /// (5 groups sized 5, 4, 2, 29, 9; k = 49).
    pub fn bundled_traffic_signs() -> Self {
        Self::from_json(BUNDLED_TRAFFIC_SIGNS).expect("bundled knowledge base is valid")
    }

    pub fn bundled_traffic_signs_json() -> &'static str {
        BUNDLED_TRAFFIC_SIGNS
    }

    pub fn from_parts(groups: Vec<AttributeGroup>, classes: Vec<(String, BTreeMap<String, String>)>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::validation("knowledge base has no attribute groups"));
        }
        let mut group_index = HashMap::new();
        for (gi, g) in groups.iter().enumerate() {
            if g.name.is_empty() {
                return Err(Error::validation(format!("group {gi} has an empty name")));
            }
            if group_index.insert(g.name.as_str(), gi).is_some() {
                return Err(Error::validation(format!("duplicate group name \"{}\"", g.name)));
            }
            if g.values.len() < 2 {
                return Err(Error::validation(format!(
                    "group \"{}\" needs at least 2 values, has {}",
                    g.name,
                    g.values.len()
                )));
            }
            let mut seen = HashSet::new();
            for v in &g.values {
                if !seen.insert(v.as_str()) {
                    return Err(Error::validation(format!(
                        "group \"{}\" lists value \"{v}\" twice",
                        g.name
                    )));
                }
            }
        }
        if classes.len() < 2 {
            return Err(Error::validation(format!(
                "knowledge base needs at least 2 classes, has {}",
                classes.len()
            )));
        }

        let mut labels = HashSet::new();
        let mut rows: HashMap<Vec<usize>, String> = HashMap::new();
        let mut entries = Vec::with_capacity(classes.len());
        for (label, attrs) in classes {
            if !labels.insert(label.clone()) {
                return Err(Error::validation(format!("duplicate class label \"{label}\"")));
            }
            for key in attrs.keys() {
                if !group_index.contains_key(key.as_str()) {
                    return Err(Error::validation(format!(
                        "class \"{label}\" assigns unknown group \"{key}\""
                    )));
                }
            }
            let mut values = Vec::with_capacity(groups.len());
            for g in &groups {
                let value = attrs
                    .get(&g.name)
                    .ok_or_else(|| Error::validation(format!("class \"{label}\" is missing group \"{}\"", g.name)))?;
                let vi = g.values.iter().position(|v| v == value).ok_or_else(|| {
                    Error::validation(format!(
                        "class \"{label}\" uses unknown value \"{value}\" for group \"{}\"",
                        g.name
                    ))
                })?;
                values.push(vi);
            }
            if let Some(other) = rows.insert(values.clone(), label.clone()) {
                return Err(Error::validation(format!(
                    "classes \"{other}\" and \"{label}\" have identical attributes"
                )));
            }
            entries.push(ClassEntry { label, values });
        }

        let layout = Arc::new(Layout::new(groups));
        let fingerprint = fingerprint(&layout, &entries);
        Ok(Self {
            layout,
            classes: entries,
            fingerprint,
        })
    }

    /// Semantic dimensionality `k`.
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn groups(&self) -> &[AttributeGroup] {
        self.layout.groups()
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// SHA-256 over a canonical rendering of groups and class rows.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.label == label)
    }

    pub fn encode_class(&self, class: usize) -> Result<SemanticVector> {
        let entry = self.classes.get(class).ok_or(Error::Index {
            what: "class",
            index: class,
            len: self.classes.len(),
            row: None,
        })?;
        Ok(one_hot(&self.layout, &entry.values))
    }

    /// Semantic annotations for a label sequence: row `i` is `encode_class(labels[i])`.
    pub fn annotate(&self, labels: &[usize]) -> Result<DenseMatrix> {
        let k = self.dim();
        let mut out = DenseMatrix::zeros(labels.len(), k);
        for (row, &label) in labels.iter().enumerate() {
            let entry = self.classes.get(label).ok_or(Error::Index {
                what: "class",
                index: label,
                len: self.classes.len(),
                row: Some(row),
            })?;
            for (g, &v) in entry.values.iter().enumerate() {
                out[(row, self.layout.offsets[g] + v)] = 1.0;
            }
        }
        Ok(out)
    }

    pub fn build_prototypes(&self) -> PrototypeSet {
        PrototypeSet {
            prototypes: (0..self.classes.len())
                .map(|c| one_hot(&self.layout, &self.classes[c].values))
                .collect(),
            fingerprint: self.fingerprint.clone(),
        }
    }

    /// `"shape=round, color=red, ..."` for a vector of per-group value indices.
    pub fn describe(&self, value_indices: &[usize]) -> String {
        self.groups()
            .iter()
            .zip(value_indices)
            .map(|(g, &v)| format!("{}={}", g.name, g.values[v]))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn fingerprint(layout: &Layout, classes: &[ClassEntry]) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        groups: &'a [AttributeGroup],
        classes: Vec<(&'a str, &'a [usize])>,
    }
    let canonical = Canonical {
        groups: layout.groups(),
        classes: classes
            .iter()
            .map(|c| (c.label.as_str(), c.values.as_slice()))
            .collect(),
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical KB serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Class prototypes in attribute space, indexed by class.
#[derive(Debug, Clone)]
pub struct PrototypeSet {
    prototypes: Vec<SemanticVector>,
    fingerprint: String,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn get(&self, class: usize) -> Result<&SemanticVector> {
        self.prototypes.get(class).ok_or(Error::Index {
            what: "class",
            index: class,
            len: self.prototypes.len(),
            row: None,
        })
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &SemanticVector> {
        self.prototypes.iter()
    }

    /// Class whose prototype equals `v` exactly, if any.
    pub fn find(&self, v: &SemanticVector) -> Option<usize> {
        self.prototypes.iter().position(|p| p == v)
    }

    pub fn kb_fingerprint(&self) -> &str {
        &self.fingerprint
    }
}
