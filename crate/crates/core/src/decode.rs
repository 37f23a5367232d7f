//! Decoders over a matrix of local link scores.

use std::fmt;

use crate::error::DecodeError;
use crate::tree::DependencyTree;

/// Which links a decoder may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeSet {
    /// Only `j -> i` with `j < i`.
    Forward,
    /// Any `j -> i` with `j != i` and `i != 0`.
    AllPairs,
}

impl fmt::Display for EdgeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeSet::Forward => "forward",
            EdgeSet::AllPairs => "all-pairs",
        })
    }
}

/// Square matrix over nodes `0..=n`; entry `(j, i)` scores the link
/// `j -> i`. The diagonal and column 0 hold `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    size: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    /// Builds a matrix for `n` EDUs from a score function; masked entries
    /// are never queried.
    pub fn from_fn(n: usize, mut score: impl FnMut(usize, usize) -> f64) -> Self {
        let size = n + 1;
        let mut data = vec![f64::NEG_INFINITY; size * size];
        for j in 0..size {
            for i in 1..size {
                if i != j {
                    data[j * size + i] = score(j, i);
                }
            }
        }
        ScoreMatrix { size, data }
    }

    /// Row-major `(n + 1) x (n + 1)` input. Masked entries are overwritten.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DecodeError> {
        let size = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != size) {
            return Err(DecodeError::NotSquare {
                rows: size,
                cols: r.len(),
            });
        }
        if size == 0 {
            return Err(DecodeError::NotSquare { rows: 0, cols: 0 });
        }
        Ok(Self::from_fn(size - 1, |j, i| rows[j][i]))
    }

    /// Number of EDUs.
    pub fn n(&self) -> usize {
        self.size - 1
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.size + to]
    }

    pub fn set(&mut self, from: usize, to: usize, v: f64) {
        if to != 0 && from != to {
            self.data[from * self.size + to] = v;
        }
    }

    /// Copy in which links outside `edges` are `-inf`.
    pub fn restricted(&self, edges: EdgeSet) -> ScoreMatrix {
        let mut out = self.clone();
        if edges == EdgeSet::Forward {
            for j in 0..self.size {
                for i in 1..=j.min(self.size - 1) {
                    out.data[j * self.size + i] = f64::NEG_INFINITY;
                }
            }
        }
        out
    }

    /// Sum of arc scores, accumulated in child order.
    pub fn weight(&self, tree: &DependencyTree) -> f64 {
        tree.arcs().map(|(p, c)| self.get(p, c)).sum()
    }
}

/// Picks, for every EDU, its best-scoring earlier node; ties go to the
/// lowest index.
pub fn greedy_decode(scores: &ScoreMatrix) -> DependencyTree {
    let parents = (1..=scores.n())
        .map(|i| {
            let mut best = 0;
            for j in 1..i {
                if scores.get(j, i) > scores.get(best, i) {
                    best = j;
                }
            }
            best
        })
        .collect();
    DependencyTree::from_parents(parents)
}

/// Maximum spanning arborescence rooted at node 0 (Chu-Liu/Edmonds).
pub fn mst_decode(scores: &ScoreMatrix, edges: EdgeSet) -> Result<DependencyTree, DecodeError> {
    let s = scores.restricted(edges);
    let size = s.size;

    let mut reached = vec![false; size];
    reached[0] = true;
    let mut stack = vec![0];
    while let Some(u) = stack.pop() {
        for (v, r) in reached.iter_mut().enumerate().skip(1) {
            if !*r && s.get(u, v) > f64::NEG_INFINITY {
                *r = true;
                stack.push(v);
            }
        }
    }
    let unreachable: Vec<usize> = (1..size).filter(|&v| !reached[v]).collect();
    if !unreachable.is_empty() {
        return Err(DecodeError::Infeasible { unreachable });
    }

    let dense: Vec<Vec<f64>> = (0..size).map(|j| (0..size).map(|i| s.get(j, i)).collect()).collect();
    let parents = chu_liu_edmonds(&dense);
    Ok(DependencyTree::from_parents(parents[1..].to_vec()))
}

/// Returns the parent of every vertex (the root, vertex 0, maps to itself).
/// `scores[u][v]` is the weight of `u -> v`; `-inf` marks a missing edge.
fn chu_liu_edmonds(scores: &[Vec<f64>]) -> Vec<usize> {
    let n = scores.len();
    let mut best_in = vec![0usize; n];
    for v in 1..n {
        let mut best = usize::MAX;
        for u in 0..n {
            if u == v || scores[u][v] == f64::NEG_INFINITY {
                continue;
            }
            if best == usize::MAX || scores[u][v] > scores[best][v] {
                best = u;
            }
        }
        best_in[v] = best;
    }

    let cycle = match find_cycle(&best_in) {
        None => return best_in,
        Some(c) => c,
    };
    let mut in_cycle = vec![false; n];
    for &v in &cycle {
        in_cycle[v] = true;
    }

    // Contract the cycle into a fresh vertex placed after the survivors.
    let outside: Vec<usize> = (0..n).filter(|&v| !in_cycle[v]).collect();
    let m = outside.len();
    let c = m;
    let mut reduced = vec![vec![f64::NEG_INFINITY; m + 1]; m + 1];
    let mut enter = vec![usize::MAX; m + 1];
    let mut leave = vec![usize::MAX; m + 1];
    for (a, &u) in outside.iter().enumerate() {
        for (b, &v) in outside.iter().enumerate() {
            if a != b {
                reduced[a][b] = scores[u][v];
            }
        }
        for &v in &cycle {
            let w = scores[u][v];
            if w == f64::NEG_INFINITY {
                continue;
            }
            let adj = w - scores[best_in[v]][v];
            if enter[a] == usize::MAX || adj > reduced[a][c] || (adj == reduced[a][c] && v < enter[a]) {
                reduced[a][c] = adj;
                enter[a] = v;
            }
        }
        for &x in &cycle {
            let w = scores[x][u];
            if w == f64::NEG_INFINITY {
                continue;
            }
            if leave[a] == usize::MAX || w > reduced[c][a] || (w == reduced[c][a] && x < leave[a]) {
                reduced[c][a] = w;
                leave[a] = x;
            }
        }
    }

    let sub = chu_liu_edmonds(&reduced);

    let mut parents = best_in;
    parents[0] = 0;
    for (b, &v) in outside.iter().enumerate().skip(1) {
        let p = sub[b];
        parents[v] = if p == c { leave[b] } else { outside[p] };
    }
    let from = sub[c];
    parents[enter[from]] = outside[from];
    parents
}

/// Any cycle in the functional graph `v -> parent[v]` (vertex 0 excluded).
fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let n = parent.len();
    let mut color = vec![0u8; n];
    color[0] = 2;
    for start in 1..n {
        if color[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while color[v] == 0 {
            color[v] = 1;
            path.push(v);
            v = parent[v];
        }
        if color[v] == 1 {
            let pos = path.iter().position(|&x| x == v).unwrap();
            return Some(path[pos..].to_vec());
        }
        for u in path {
            color[u] = 2;
        }
    }
    None
}

/// Largest instance [`brute_force_arborescence`] accepts.
pub const BRUTE_FORCE_MAX_NODES: usize = 8;

/// Exhaustive search over all parent assignments. Ties keep the
/// lexicographically smallest parent vector.
pub fn brute_force_arborescence(scores: &ScoreMatrix) -> Result<DependencyTree, DecodeError> {
    let n = scores.n();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(DecodeError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_NODES,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_tree(n, |parents| {
        let mut w = 0.0;
        for (k, &p) in parents.iter().enumerate() {
            w += scores.get(p, k + 1);
        }
        if w == f64::NEG_INFINITY {
            return;
        }
        if best.as_ref().is_none_or(|(bw, _)| w > *bw) {
            best = Some((w, parents.to_vec()));
        }
    });
    match best {
        Some((_, p)) => Ok(DependencyTree::from_parents(p)),
        None => {
            let t = mst_decode(scores, EdgeSet::AllPairs);
            Err(t.err().unwrap_or(DecodeError::Infeasible { unreachable: vec![] }))
        }
    }
}

/// Calls `f` on every parent vector over `0..=n` that forms a tree rooted at
/// 0, in lexicographic order.
pub fn for_each_tree(n: usize, mut f: impl FnMut(&[usize])) {
    if n == 0 {
        f(&[]);
        return;
    }
    let mut parents = vec![0usize; n];
    loop {
        if parents.iter().enumerate().all(|(k, &p)| p != k + 1)
            && DependencyTree::from_parents(parents.clone()).is_tree()
        {
            f(&parents);
        }
        // increment the odometer, last position fastest
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            parents[k] += 1;
            if parents[k] <= n {
                break;
            }
            parents[k] = 0;
        }
    }
}
