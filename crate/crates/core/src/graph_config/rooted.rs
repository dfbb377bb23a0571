use std::collections::VecDeque;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::{ConfigError, Graph, TreatmentSlate};

/// Ego-centered, slate-marked neighborhood of a root unit.
///
/// Local vertex 0 is the root. Vertices are stored in BFS order (depth
/// nondecreasing, ties by ascending global id), so every radius-`r` ball is a
/// prefix of the vertex list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedConfig {
    radius: usize,
    vertices: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
    depth: Vec<usize>,
    marks: Vec<TreatmentSlate>,
    covariate_marks: Option<Vec<i64>>,
}

/// Serialized form: local edges, per-vertex depths and marks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigDump {
    pub radius: usize,
    pub vertices: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    pub depths: Vec<usize>,
    pub marks: Vec<TreatmentSlate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_marks: Option<Vec<i64>>,
}

/// Induced radius-`radius` neighborhood of `root` with slate marks copied.
pub fn extract_config(
    graph: &Graph,
    slates: &[TreatmentSlate],
    root: usize,
    radius: usize,
) -> Result<RootedConfig, ConfigError> {
    extract_config_marked(graph, slates, None, root, radius)
}

/// As [`extract_config`], additionally carrying an integer mark per vertex
/// (e.g. a discretized covariate) compared by equality during matching.
pub fn extract_config_marked(
    graph: &Graph,
    slates: &[TreatmentSlate],
    covariate_marks: Option<&[i64]>,
    root: usize,
    radius: usize,
) -> Result<RootedConfig, ConfigError> {
    let n = graph.num_nodes();
    if root >= n {
        return Err(ConfigError::NodeOutOfRange { node: root, num_nodes: n });
    }
    if slates.len() != n {
        return Err(ConfigError::MarkCount {
            expected: n,
            got: slates.len(),
        });
    }
    if let Some(c) = covariate_marks {
        if c.len() != n {
            return Err(ConfigError::MarkCount {
                expected: n,
                got: c.len(),
            });
        }
    }
    let p = slates[0].dim();
    if let Some(bad) = slates.iter().find(|s| s.dim() != p) {
        return Err(ConfigError::DimensionMismatch {
            left: p,
            right: bad.dim(),
        });
    }

    // BFS visiting neighbors in ascending id order.
    let mut local_of = std::collections::HashMap::new();
    let mut vertices = vec![root];
    let mut depth = vec![0usize];
    local_of.insert(root, 0usize);
    let mut queue = VecDeque::from([0usize]);
    while let Some(li) = queue.pop_front() {
        if depth[li] == radius {
            continue;
        }
        for &v in graph.neighbors(vertices[li]) {
            if let std::collections::hash_map::Entry::Vacant(e) = local_of.entry(v) {
                e.insert(vertices.len());
                vertices.push(v);
                depth.push(depth[li] + 1);
                queue.push_back(vertices.len() - 1);
            }
        }
    }
    let mut adjacency = vec![Vec::new(); vertices.len()];
    for (li, &u) in vertices.iter().enumerate() {
        for &v in graph.neighbors(u) {
            if let Some(&lj) = local_of.get(&v) {
                adjacency[li].push(lj);
            }
        }
        adjacency[li].sort_unstable();
    }
    let marks = vertices.iter().map(|&v| slates[v].clone()).collect();
    let covariate_marks = covariate_marks.map(|c| vertices.iter().map(|&v| c[v]).collect());
    Ok(RootedConfig {
        radius,
        vertices,
        adjacency,
        depth,
        marks,
        covariate_marks,
    })
}

impl RootedConfig {
    /// Rebuilds a config from its serialized parts, checking that the recorded
    /// depths are the BFS depths induced by the edges.
    pub fn from_dump(dump: ConfigDump) -> Result<Self, ConfigError> {
        let n = dump.vertices.len();
        if n == 0 {
            return Err(ConfigError::Invalid("config has no vertices".into()));
        }
        if dump.depths.len() != n || dump.marks.len() != n {
            return Err(ConfigError::Invalid(
                "vertices, depths and marks must have equal length".into(),
            ));
        }
        if let Some(c) = &dump.covariate_marks {
            if c.len() != n {
                return Err(ConfigError::Invalid("covariate_marks length mismatch".into()));
            }
        }
        let p = dump.marks[0].dim();
        if dump.marks.iter().any(|m| m.dim() != p) {
            return Err(ConfigError::Invalid("marks have unequal dimensions".into()));
        }
        let edges: Vec<(usize, usize)> = dump.edges.iter().map(|e| (e[0], e[1])).collect();
        let local = Graph::new(n, &edges)?;
        let bfs = local.bfs_depths(&[0], usize::MAX);
        for (v, (&recorded, computed)) in dump.depths.iter().zip(&bfs).enumerate() {
            if Some(recorded) != *computed || recorded > dump.radius {
                return Err(ConfigError::Invalid(format!(
                    "vertex {v}: recorded depth {recorded} inconsistent with edges (bfs {computed:?}, radius {})",
                    dump.radius
                )));
            }
        }
        // Reorder into BFS order so balls are prefixes.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| (dump.depths[v], v != 0, dump.vertices[v]));
        let mut new_of = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_of[old] = new;
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in local.edges() {
            adjacency[new_of[u]].push(new_of[v]);
            adjacency[new_of[v]].push(new_of[u]);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        Ok(Self {
            radius: dump.radius,
            vertices: order.iter().map(|&v| dump.vertices[v]).collect(),
            adjacency,
            depth: order.iter().map(|&v| dump.depths[v]).collect(),
            marks: order.iter().map(|&v| dump.marks[v].clone()).collect(),
            covariate_marks: dump
                .covariate_marks
                .map(|c| order.iter().map(|&v| c[v]).collect()),
        })
    }

    pub fn to_dump(&self) -> ConfigDump {
        ConfigDump {
            radius: self.radius,
            vertices: self.vertices.clone(),
            edges: self.local_edges().into_iter().map(|(u, v)| [u, v]).collect(),
            depths: self.depth.clone(),
            marks: self.marks.clone(),
            covariate_marks: self.covariate_marks.clone(),
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Global node ids; entry 0 is the root.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn root(&self) -> usize {
        self.vertices[0]
    }

    pub fn depths(&self) -> &[usize] {
        &self.depth
    }

    pub fn marks(&self) -> &[TreatmentSlate] {
        &self.marks
    }

    pub fn covariate_marks(&self) -> Option<&[i64]> {
        self.covariate_marks.as_deref()
    }

    pub fn slate_dim(&self) -> usize {
        self.marks[0].dim()
    }

    pub fn local_neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// Local edges `(u, v)` with `u < v`, sorted.
    pub fn local_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, nb) in self.adjacency.iter().enumerate() {
            out.extend(nb.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    /// Number of vertices with depth at most `r`.
    pub fn ball_len(&self, r: usize) -> usize {
        self.depth.partition_point(|&d| d <= r)
    }

    /// Sub-configuration on the vertices within depth `r` of the root.
    pub fn ball_restrict(&self, r: usize) -> Result<RootedConfig, ConfigError> {
        if r > self.radius {
            return Err(ConfigError::RadiusTooLarge {
                requested: r,
                available: self.radius,
            });
        }
        let keep = self.ball_len(r);
        let adjacency = self.adjacency[..keep]
            .iter()
            .map(|nb| nb.iter().copied().filter(|&v| v < keep).collect())
            .collect();
        Ok(RootedConfig {
            radius: r,
            vertices: self.vertices[..keep].to_vec(),
            adjacency,
            depth: self.depth[..keep].to_vec(),
            marks: self.marks[..keep].to_vec(),
            covariate_marks: self.covariate_marks.as_ref().map(|c| c[..keep].to_vec()),
        })
    }

    /// Deterministic serialization (root first, BFS order, sorted adjacency).
    /// Global ids are excluded, so configs with identical local structure and
    /// marks produce identical keys.
    pub fn canonical_key(&self) -> String {
        let mut s = format!("r{};", self.radius);
        for v in 0..self.num_vertices() {
            s.push_str(&format!("{}:{:x}", self.depth[v], self.marks[v].neg_mask()));
            if let Some(c) = &self.covariate_marks {
                s.push_str(&format!("/{}", c[v]));
            }
            s.push('[');
            for (i, n) in self.adjacency[v].iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                s.push_str(&n.to_string());
            }
            s.push_str("];");
        }
        s
    }

    pub fn canonical_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.canonical_key().hash(&mut h);
        h.finish()
    }
}
