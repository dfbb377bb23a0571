//! Exact root-preserving isomorphism search with minimum mark mismatch.

use serde::{Deserialize, Serialize};

use super::{ConfigError, RootedConfig};

/// Whether the root vertex counts toward the mark mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMarkPolicy {
    /// Mismatches are counted over non-root vertices and normalized by
    /// `|V| - 1`; a root-only ball has discrepancy 0.
    #[default]
    Exclude,
    /// Mismatches are counted over all vertices and normalized by `|V|`.
    Include,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchOptions {
    pub root_marks: RootMarkPolicy,
    pub use_covariate_marks: bool,
    /// Balls larger than this fail with [`ConfigError::BallTooLarge`]. Values
    /// above 64 are clamped to 64.
    pub max_ball_size: usize,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            root_marks: RootMarkPolicy::Exclude,
            use_covariate_marks: false,
            max_ball_size: 64,
        }
    }
}

/// Radius-`r` ball in matcher-friendly form.
#[derive(Debug, Clone)]
pub(crate) struct Ball {
    n: usize,
    adj: Vec<u64>,
    class: Vec<(usize, usize)>,
    parent: Vec<usize>,
    keys: Vec<(u64, i64)>,
    /// (edge count, sorted (depth, degree) profile); unequal signatures rule
    /// out isomorphism.
    signature: (usize, Vec<(usize, usize)>),
}

impl Ball {
    pub(crate) fn new(config: &RootedConfig, r: usize, opts: &MatchOptions) -> Result<Self, ConfigError> {
        if r > config.radius() {
            return Err(ConfigError::RadiusTooLarge {
                requested: r,
                available: config.radius(),
            });
        }
        let n = config.ball_len(r);
        let cap = opts.max_ball_size.min(64);
        if n > cap {
            return Err(ConfigError::BallTooLarge { size: n, cap });
        }
        let cov = if opts.use_covariate_marks {
            Some(config.covariate_marks().ok_or(ConfigError::MissingCovariateMarks)?)
        } else {
            None
        };
        let depth = config.depths();
        let mut adj = vec![0u64; n];
        let mut class = Vec::with_capacity(n);
        let mut parent = vec![0usize; n];
        let mut keys = Vec::with_capacity(n);
        let mut edges = 0;
        for v in 0..n {
            let mut deg = 0;
            for &u in config.local_neighbors(v) {
                if u < n {
                    adj[v] |= 1 << u;
                    deg += 1;
                    if u > v {
                        edges += 1;
                    }
                }
            }
            if v > 0 {
                // Neighbors are sorted, so this is the lowest-index parent.
                parent[v] = config
                    .local_neighbors(v)
                    .iter()
                    .copied()
                    .find(|&u| depth[u] + 1 == depth[v])
                    .expect("BFS-consistent config has a parent for every non-root vertex");
            }
            class.push((depth[v], deg));
            keys.push((config.marks()[v].neg_mask(), cov.map_or(0, |c| c[v])));
        }
        let mut profile = class.clone();
        profile.sort_unstable();
        Ok(Self {
            n,
            adj,
            class,
            parent,
            keys,
            signature: (edges, profile),
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }
}

/// Minimum number of mismatched marks over root-preserving isomorphisms of
/// the two balls, or `None` when they are not isomorphic.
pub(crate) fn min_mismatch(a: &Ball, b: &Ball, policy: RootMarkPolicy) -> Option<usize> {
    if a.n != b.n || a.signature != b.signature {
        return None;
    }
    let root_cost = match policy {
        RootMarkPolicy::Include => usize::from(a.keys[0] != b.keys[0]),
        RootMarkPolicy::Exclude => 0,
    };
    let mut search = Search {
        a,
        b,
        map: vec![0; a.n],
        best: usize::MAX,
        floor: 0,
    };
    search.floor = root_cost + search.lower_bound(1, 1);
    search.extend(1, 1, root_cost);
    (search.best != usize::MAX).then_some(search.best)
}

struct Search<'a> {
    a: &'a Ball,
    b: &'a Ball,
    map: Vec<usize>,
    best: usize,
    floor: usize,
}

impl Search<'_> {
    /// Per-class count of unassigned vertices that cannot be matched to an
    /// equal mark among the unused vertices of the same class.
    fn lower_bound(&self, next: usize, used: u64) -> usize {
        let mut left: Vec<((usize, usize), (u64, i64))> =
            (next..self.a.n).map(|v| (self.a.class[v], self.a.keys[v])).collect();
        let mut right: Vec<((usize, usize), (u64, i64))> = (0..self.b.n)
            .filter(|&w| used >> w & 1 == 0)
            .map(|w| (self.b.class[w], self.b.keys[w]))
            .collect();
        left.sort_unstable();
        right.sort_unstable();
        let (mut i, mut j, mut hits) = (0, 0, 0);
        while i < left.len() && j < right.len() {
            match left[i].cmp(&right[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    hits += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        left.len() - hits
    }

    /// Returns true once the search can stop (an assignment meeting the
    /// global lower bound was found).
    fn extend(&mut self, v: usize, used: u64, cost: usize) -> bool {
        if v == self.a.n {
            if cost < self.best {
                self.best = cost;
            }
            return self.best == self.floor;
        }
        if cost + self.lower_bound(v, used) >= self.best {
            return false;
        }
        let anchor = self.map[self.a.parent[v]];
        let mut cands = self.b.adj[anchor] & !used;
        while cands != 0 {
            let w = cands.trailing_zeros() as usize;
            cands &= cands - 1;
            if self.b.class[w] != self.a.class[v] {
                continue;
            }
            // Adjacency to every already-assigned vertex must agree.
            let consistent = (0..v).all(|u| {
                (self.a.adj[v] >> u & 1) == (self.b.adj[w] >> self.map[u] & 1)
            });
            if !consistent {
                continue;
            }
            self.map[v] = w;
            let step = usize::from(self.a.keys[v] != self.b.keys[w]);
            if self.extend(v + 1, used | 1 << w, cost + step) {
                return true;
            }
        }
        false
    }
}
