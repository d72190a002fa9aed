//! r-partite r-uniform hypergraphs: components, thresholds, exponent feasibility, surgery.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{int, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HypergraphError {
    #[error("hypergraph needs at least one vertex class")]
    NoClasses,
    #[error("vertex {0:?} appears more than once")]
    DuplicateVertex(String),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("edge {edge:?} has {got} vertices, expected one per class ({expected})")]
    Arity { edge: String, expected: usize, got: usize },
    #[error("edge {edge:?}: entry {slot} should come from class {slot} but {vertex:?} is in class {class}")]
    WrongClass { edge: String, slot: usize, vertex: String, class: usize },
    #[error("duplicate edge {0:?}")]
    DuplicateEdge(String),
    #[error("more than 64 vertices are not supported")]
    TooManyVertices,
    #[error("operation needs a single connected component, found {0}")]
    NotConnected(usize),
    #[error("selection is empty")]
    EmptySelection,
    #[error("vertices {0:?} and {1:?} lie in different classes")]
    ClassMismatch(String, String),
    #[error("vertex {0:?} is not selected")]
    NotSelected(String),
    #[error("vertices {0:?} and {1:?} already carry the same label")]
    SameLabel(String, String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    pub class: usize,
    /// Label group; vertices sharing a group are copies of one variable label.
    pub group: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    /// Global vertex index per class.
    pub vertices: Vec<usize>,
    /// Key of the function attached to this edge.
    pub label: String,
}

/// Vertices are stored class by class; the global index doubles as kernel axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypergraph {
    r: usize,
    vertices: Vec<Vertex>,
    classes: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

fn class_prefix(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("c{i}_")
    }
}

impl Hypergraph {
    /// Builds a hypergraph with one label group per vertex and edge labels `"u,v,..."`.
    pub fn new(classes: Vec<Vec<String>>, edges: Vec<Vec<String>>) -> Result<Self, HypergraphError> {
        let vertices: Vec<Vertex> = classes
            .iter()
            .enumerate()
            .flat_map(|(i, c)| {
                c.iter().map(move |id| Vertex {
                    id: id.clone(),
                    class: i,
                    group: id.clone(),
                })
            })
            .collect();
        let r = classes.len();
        let index: BTreeMap<&str, usize> = vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.as_str(), i))
            .collect();
        let mut es = Vec::with_capacity(edges.len());
        for e in &edges {
            let name = e.join(",");
            let mut vs = Vec::with_capacity(e.len());
            for id in e {
                vs.push(
                    *index
                        .get(id.as_str())
                        .ok_or_else(|| HypergraphError::UnknownVertex(id.clone()))?,
                );
            }
            es.push(Edge {
                vertices: vs,
                label: name,
            });
        }
        if r == 0 {
            return Err(HypergraphError::NoClasses);
        }
        Hypergraph::from_parts(r, vertices, es)
    }

    /// Complete hypergraph with class sizes `sizes`; vertices are named `a1, a2, b1, ...`.
    pub fn complete(sizes: &[usize]) -> Result<Self, HypergraphError> {
        let classes: Vec<Vec<String>> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (1..=n).map(|j| format!("{}{j}", class_prefix(i))).collect())
            .collect();
        let mut edges: Vec<Vec<String>> = vec![vec![]];
        for c in &classes {
            edges = edges
                .into_iter()
                .flat_map(|e| {
                    c.iter().map(move |v| {
                        let mut e2 = e.clone();
                        e2.push(v.clone());
                        e2
                    })
                })
                .collect();
        }
        if classes.iter().any(|c| c.is_empty()) {
            edges.clear();
        }
        Hypergraph::new(classes, edges)
    }

    /// Structural constructor used by surgery; regroups vertices class by class.
    pub fn from_parts(r: usize, vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self, HypergraphError> {
        if r == 0 {
            return Err(HypergraphError::NoClasses);
        }
        if vertices.len() > 64 {
            return Err(HypergraphError::TooManyVertices);
        }
        let mut seen = BTreeSet::new();
        for v in &vertices {
            if !seen.insert(v.id.clone()) {
                return Err(HypergraphError::DuplicateVertex(v.id.clone()));
            }
            if v.class >= r {
                return Err(HypergraphError::UnknownVertex(v.id.clone()));
            }
        }
        let mut order: Vec<usize> = (0..vertices.len()).collect();
        order.sort_by_key(|&i| vertices[i].class);
        let mut remap = vec![0; vertices.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let sorted: Vec<Vertex> = order.iter().map(|&i| vertices[i].clone()).collect();
        let mut classes = vec![Vec::new(); r];
        for (i, v) in sorted.iter().enumerate() {
            classes[v.class].push(i);
        }
        let mut tuples = BTreeSet::new();
        let mut es = Vec::with_capacity(edges.len());
        for e in edges {
            let name = e
                .vertices
                .iter()
                .map(|&v| vertices.get(v).map(|x| x.id.clone()).unwrap_or_default())
                .collect::<Vec<_>>()
                .join(",");
            if e.vertices.len() != r {
                return Err(HypergraphError::Arity {
                    edge: name,
                    expected: r,
                    got: e.vertices.len(),
                });
            }
            for (slot, &v) in e.vertices.iter().enumerate() {
                let vx = vertices
                    .get(v)
                    .ok_or_else(|| HypergraphError::UnknownVertex(format!("#{v}")))?;
                if vx.class != slot {
                    return Err(HypergraphError::WrongClass {
                        edge: name,
                        slot,
                        vertex: vx.id.clone(),
                        class: vx.class,
                    });
                }
            }
            let vs: Vec<usize> = e.vertices.iter().map(|&v| remap[v]).collect();
            if !tuples.insert(vs.clone()) {
                return Err(HypergraphError::DuplicateEdge(name));
            }
            es.push(Edge {
                vertices: vs,
                label: e.label,
            });
        }
        Ok(Hypergraph {
            r,
            vertices: sorted,
            classes,
            edges: es,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn class(&self, i: usize) -> &[usize] {
        &self.classes[i]
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.len()).collect()
    }

    pub fn class_of(&self, v: usize) -> usize {
        self.vertices[v].class
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn edge_labels(&self) -> BTreeSet<String> {
        self.edges.iter().map(|e| e.label.clone()).collect()
    }

    /// Vertices lying in no edge.
    pub fn isolated(&self) -> Vec<usize> {
        let mut used = vec![false; self.n()];
        for e in &self.edges {
            for &v in &e.vertices {
                used[v] = true;
            }
        }
        (0..self.n()).filter(|&v| !used[v]).collect()
    }

    pub fn edge_name(&self, e: usize) -> String {
        self.edges[e]
            .vertices
            .iter()
            .map(|&v| self.vertices[v].id.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Connected components by edge-sharing reachability.
    pub fn decompose(&self) -> ComponentDecomposition {
        let mut parent: Vec<usize> = (0..self.n()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            for w in e.vertices.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let isolated = self.isolated();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..self.n() {
            if !isolated.contains(&v) {
                let root = find(&mut parent, v);
                groups.entry(root).or_default().push(v);
            }
        }
        let mut components: Vec<Component> = groups
            .into_values()
            .map(|vs| {
                let set: BTreeSet<usize> = vs.iter().copied().collect();
                let edges: Vec<usize> = (0..self.edges.len())
                    .filter(|&e| set.contains(&self.edges[e].vertices[0]))
                    .collect();
                let mut class_sizes = vec![0; self.r];
                for &v in &vs {
                    class_sizes[self.class_of(v)] += 1;
                }
                Component {
                    vertices: vs,
                    edges,
                    class_sizes,
                }
            })
            .collect();
        let min_id = |c: &Component| {
            c.vertices
                .iter()
                .map(|&v| self.vertices[v].id.clone())
                .min()
                .unwrap_or_default()
        };
        components.sort_by_key(min_id);
        ComponentDecomposition {
            components,
            isolated,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let dec = self.decompose();
        let mut diagnostics = Vec::new();
        let sizes = self.class_sizes();
        let min_class_size = sizes.iter().all(|&s| s >= 2);
        if !min_class_size {
            diagnostics.push(format!("class sizes {sizes:?}: some class has fewer than 2 vertices"));
        }
        let mut component_min = true;
        let mut complete = Vec::new();
        for (l, c) in dec.components.iter().enumerate() {
            let full: usize = c.class_sizes.iter().product();
            let ok = full == c.edges.len();
            if !ok {
                diagnostics.push(format!(
                    "component {l} has {} of {full} possible edges",
                    c.edges.len()
                ));
            }
            complete.push(ok);
            if c.class_sizes.iter().any(|&s| s < 2) {
                component_min = false;
                diagnostics.push(format!(
                    "component {l} has class sizes {:?}; some class has fewer than 2 vertices",
                    c.class_sizes
                ));
            }
        }
        if dec.components.is_empty() {
            diagnostics.push("hypergraph has no edges".into());
        }
        let admissible = min_class_size
            && component_min
            && complete.iter().all(|&b| b)
            && !dec.components.is_empty();
        ValidationReport {
            structural: Vec::new(),
            min_class_size,
            component_min_class_size: component_min,
            components_complete: complete,
            admissible,
            diagnostics,
        }
    }

    /// `d_e = max_i prod_{j != i} |V_l^(j)|` over the component of `e`.
    pub fn thresholds(&self) -> Thresholds {
        let dec = self.decompose();
        let mut per_edge = vec![0u64; self.edges.len()];
        for c in &dec.components {
            let d = component_threshold(&c.class_sizes);
            for &e in &c.edges {
                per_edge[e] = d;
            }
        }
        let complete_m = if dec.components.len() == 1 && dec.isolated.is_empty() {
            let c = &dec.components[0];
            let full: usize = c.class_sizes.iter().product();
            (full == c.edges.len()).then(|| component_threshold(&c.class_sizes))
        } else {
            None
        };
        Thresholds {
            per_edge,
            complete_m,
        }
    }

    /// Edge-label coherence plus the proper condition on label groups.
    pub fn label_coherence(&self) -> Result<(), String> {
        let mut by_groups: BTreeMap<Vec<&str>, &str> = BTreeMap::new();
        for e in &self.edges {
            let g: Vec<&str> = e
                .vertices
                .iter()
                .map(|&v| self.vertices[v].group.as_str())
                .collect();
            if let Some(prev) = by_groups.insert(g.clone(), e.label.as_str()) {
                if prev != e.label {
                    return Err(format!(
                        "edges with label groups {g:?} carry labels {prev:?} and {:?}",
                        e.label
                    ));
                }
            }
        }
        let dec = self.decompose();
        let mut comp_of = vec![usize::MAX; self.n()];
        for (l, c) in dec.components.iter().enumerate() {
            for &v in &c.vertices {
                comp_of[v] = l;
            }
        }
        let mut where_group: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (v, vx) in self.vertices.iter().enumerate() {
            let here = (comp_of[v], vx.class);
            if let Some(&prev) = where_group.get(vx.group.as_str()) {
                if prev != here {
                    return Err(format!(
                        "label group {:?} spans different components or classes",
                        vx.group
                    ));
                }
            } else {
                where_group.insert(vx.group.as_str(), here);
            }
        }
        Ok(())
    }
}

fn component_threshold(class_sizes: &[usize]) -> u64 {
    (0..class_sizes.len())
        .map(|i| {
            class_sizes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &s)| s as u64)
                .product::<u64>()
        })
        .max()
        .unwrap_or(1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
    pub class_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentDecomposition {
    pub components: Vec<Component>,
    /// Vertices in no edge; they contribute only volume factors.
    pub isolated: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub structural: Vec<String>,
    pub min_class_size: bool,
    pub component_min_class_size: bool,
    pub components_complete: Vec<bool>,
    pub admissible: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Thresholds {
    pub per_edge: Vec<u64>,
    /// For a single complete component, the common value of every `d_e`.
    pub complete_m: Option<u64>,
}

impl Thresholds {
    pub fn min(&self) -> u64 {
        self.per_edge.iter().copied().min().unwrap_or(1)
    }
}

/// Rational exponents `p_e > d_e` with `sum 1/p_e = 1`, when `sum 1/d_e > 1`.
pub fn feasible_exponents(d: &[u64]) -> Option<Vec<Rational>> {
    let s = d
        .iter()
        .fold(Rational::zero(), |acc, &x| acc + int(x as i64).recip());
    if s <= Rational::one() {
        return None;
    }
    Some(d.iter().map(|&x| int(x as i64) * &s).collect())
}

/// Cancellative vertices, as a bitmask over global vertex indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Selection(pub u64);

impl Selection {
    pub fn empty() -> Self {
        Selection(0)
    }

    pub fn from_vertices(vs: &[usize]) -> Self {
        Selection(vs.iter().fold(0, |m, &v| m | (1u64 << v)))
    }

    pub fn from_ids(h: &Hypergraph, ids: &[&str]) -> Result<Self, HypergraphError> {
        let mut vs = Vec::new();
        for id in ids {
            vs.push(
                h.vertex_index(id)
                    .ok_or_else(|| HypergraphError::UnknownVertex(id.to_string()))?,
            );
        }
        Ok(Selection::from_vertices(&vs))
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.0 >> v) & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn vertices(&self) -> Vec<usize> {
        (0..64).filter(|&v| self.contains(v)).collect()
    }

    pub fn count_in_class(&self, h: &Hypergraph, i: usize) -> usize {
        h.class(i).iter().filter(|&&v| self.contains(v)).count()
    }

    pub fn per_class(&self, h: &Hypergraph) -> Vec<Vec<usize>> {
        (0..h.r())
            .map(|i| h.class(i).iter().copied().filter(|&v| self.contains(v)).collect())
            .collect()
    }

    pub fn describe(&self, h: &Hypergraph) -> String {
        let parts: Vec<String> = self
            .per_class(h)
            .iter()
            .map(|c| {
                let ids: Vec<&str> = c.iter().map(|&v| h.vertices()[v].id.as_str()).collect();
                format!("{{{}}}", ids.join(","))
            })
            .collect();
        format!("({})", parts.join(","))
    }
}

/// All nonempty selections.
pub fn all_selections(h: &Hypergraph) -> Vec<Selection> {
    (1..(1u64 << h.n())).map(Selection).collect()
}

/// Nonempty selections with an even number of vertices in every class.
pub fn even_selections(h: &Hypergraph) -> Vec<Selection> {
    all_selections(h)
        .into_iter()
        .filter(|s| (0..h.r()).all(|i| s.count_in_class(h, i) % 2 == 0))
        .collect()
}

/// Disjoint union of `h` with a relabeled copy; copies share edge labels with their originals.
pub fn duplicate_component(
    h: &Hypergraph,
    s: Selection,
) -> Result<(Hypergraph, Selection), HypergraphError> {
    let dec = h.decompose();
    let parts = dec.components.len() + dec.isolated.len();
    if parts != 1 {
        return Err(HypergraphError::NotConnected(parts));
    }
    if s.is_empty() {
        return Err(HypergraphError::EmptySelection);
    }
    let n = h.n();
    let mut vertices = h.vertices().to_vec();
    for v in h.vertices() {
        vertices.push(Vertex {
            id: format!("{}'", v.id),
            class: v.class,
            group: format!("{}'", v.group),
        });
    }
    let mut edges = h.edges().to_vec();
    for e in h.edges() {
        edges.push(Edge {
            vertices: e.vertices.iter().map(|&v| v + n).collect(),
            label: e.label.clone(),
        });
    }
    let ids: Vec<String> = vertices.iter().map(|v| v.id.clone()).collect();
    let h2 = Hypergraph::from_parts(h.r(), vertices, edges)?;
    let mut sel = Vec::new();
    for v in s.vertices() {
        sel.push(h2.vertex_index(&ids[v]).unwrap());
        sel.push(h2.vertex_index(&ids[v + n]).unwrap());
    }
    Ok((h2, Selection::from_vertices(&sel)))
}

/// The two mirrored graphs used to split a pair of selected vertices in one class.
pub fn copy_vertex_split(
    h: &Hypergraph,
    s: Selection,
    v1: usize,
    v2: usize,
) -> Result<((Hypergraph, Selection), (Hypergraph, Selection)), HypergraphError> {
    let id = |v: usize| h.vertices()[v].id.clone();
    if h.class_of(v1) != h.class_of(v2) {
        return Err(HypergraphError::ClassMismatch(id(v1), id(v2)));
    }
    for v in [v1, v2] {
        if !s.contains(v) {
            return Err(HypergraphError::NotSelected(id(v)));
        }
    }
    if v1 == v2 || h.vertices()[v1].group == h.vertices()[v2].group {
        return Err(HypergraphError::SameLabel(id(v1), id(v2)));
    }
    let mirror = |keep: usize, drop: usize| -> Result<(Hypergraph, Selection), HypergraphError> {
        let mut vertices = h.vertices().to_vec();
        vertices[drop].group = vertices[keep].group.clone();
        let class = h.class_of(keep);
        let mut edges: Vec<Edge> = h
            .edges()
            .iter()
            .filter(|e| e.vertices[class] != drop)
            .cloned()
            .collect();
        let copies: Vec<Edge> = edges
            .iter()
            .filter(|e| e.vertices[class] == keep)
            .map(|e| {
                let mut vs = e.vertices.clone();
                vs[class] = drop;
                Edge {
                    vertices: vs,
                    label: e.label.clone(),
                }
            })
            .collect();
        edges.extend(copies);
        let g = Hypergraph::from_parts(h.r(), vertices, edges)?;
        Ok((g, Selection::from_vertices(&[keep, drop])))
    };
    Ok((mirror(v1, v2)?, mirror(v2, v1)?))
}
