use std::collections::BTreeSet;
use std::io::Read;

use super::ConfigError;

/// Simple undirected graph over nodes `0..num_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate edges and out-of-range endpoints.
    /// Edges are stored normalized as `(min, max)` and sorted.
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, ConfigError> {
        if num_nodes == 0 {
            return Err(ConfigError::EmptyGraph);
        }
        let mut seen = BTreeSet::new();
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(ConfigError::NodeOutOfRange {
                    node: u.max(v),
                    num_nodes,
                });
            }
            if u == v {
                return Err(ConfigError::SelfLoop(u));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(ConfigError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        let edges: Vec<(usize, usize)> = seen.into_iter().collect();
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges,
            adjacency,
        })
    }

    /// Reads an edge list with one `u,v` pair (0-based) per line. Blank lines and
    /// lines starting with `#` are skipped. When `num_nodes` is `None` the node
    /// count is one past the largest endpoint.
    pub fn from_edge_csv<R: Read>(reader: R, num_nodes: Option<usize>) -> Result<Self, ConfigError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut edges = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| ConfigError::Parse(e.to_string()))?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            if record.len() != 2 {
                return Err(ConfigError::Parse(format!(
                    "line {}: expected `u,v`, got {} fields",
                    line + 1,
                    record.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| ConfigError::Parse(format!("line {}: {e}", line + 1)))
            };
            edges.push((parse(&record[0])?, parse(&record[1])?));
        }
        let n = match num_nodes {
            Some(n) => n,
            None => edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(1),
        };
        Self::new(n, &edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Hop distances from the given sources, `None` beyond `max_depth` or unreachable.
    pub fn bfs_depths(&self, sources: &[usize], max_depth: usize) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.num_nodes];
        let mut frontier = Vec::new();
        for &s in sources {
            if depth[s].is_none() {
                depth[s] = Some(0);
                frontier.push(s);
            }
        }
        let mut level = 0;
        while !frontier.is_empty() && level < max_depth {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &self.adjacency[u] {
                    if depth[v].is_none() {
                        depth[v] = Some(level + 1);
                        next.push(v);
                    }
                }
            }
            frontier = next;
            level += 1;
        }
        depth
    }
}
