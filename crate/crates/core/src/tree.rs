use serde::{Deserialize, Serialize};

use crate::corpus::RelationInstance;

/// One parent (and optionally a relation type) per EDU `1..=n`, rooted at
/// the dummy node `0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyTree {
    parents: Vec<usize>,
    labels: Vec<Option<String>>,
}

impl DependencyTree {
    /// `parents[i - 1]` is the parent of EDU `i`.
    pub fn from_parents(parents: Vec<usize>) -> Self {
        let labels = vec![None; parents.len()];
        DependencyTree { parents, labels }
    }

    pub fn labeled(parents: Vec<usize>, labels: Vec<String>) -> Self {
        assert_eq!(parents.len(), labels.len());
        DependencyTree {
            parents,
            labels: labels.into_iter().map(Some).collect(),
        }
    }

    /// Number of EDUs (the root excluded).
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parent(&self, child: usize) -> usize {
        self.parents[child - 1]
    }

    pub fn label(&self, child: usize) -> Option<&str> {
        self.labels[child - 1].as_deref()
    }

    pub fn set_label(&mut self, child: usize, label: impl Into<String>) {
        self.labels[child - 1] = Some(label.into());
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    /// `(parent, child)` pairs in child order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents.iter().enumerate().map(|(i, &p)| (p, i + 1))
    }

    /// Arcs as relations; unlabeled arcs get an empty type.
    pub fn relations(&self) -> Vec<RelationInstance> {
        self.arcs()
            .map(|(p, c)| RelationInstance::new(p, c, self.label(c).unwrap_or("")))
            .collect()
    }

    /// True when every EDU reaches the root without a cycle and no arc
    /// enters the root.
    pub fn is_tree(&self) -> bool {
        let n = self.len();
        if self.parents.iter().enumerate().any(|(i, &p)| p > n || p == i + 1) {
            return false;
        }
        // 0 = unvisited, 1 = on current path, 2 = reaches root
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut v = start;
            while state[v] == 0 {
                state[v] = 1;
                path.push(v);
                v = self.parents[v - 1];
            }
            if state[v] == 1 {
                return false;
            }
            for u in path {
                state[u] = 2;
            }
        }
        true
    }

    /// True when every parent precedes its child.
    pub fn is_forward(&self) -> bool {
        self.arcs().all(|(p, c)| p < c)
    }

    /// True when two arcs cross if drawn above the EDU sequence.
    pub fn is_projective(&self) -> bool {
        let arcs: Vec<(usize, usize)> = self.arcs().map(|(p, c)| (p.min(c), p.max(c))).collect();
        for (k, &(a, b)) in arcs.iter().enumerate() {
            for &(c, d) in &arcs[k + 1..] {
                if (a < c && c < b && b < d) || (c < a && a < d && d < b) {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_checks() {
        assert!(DependencyTree::from_parents(vec![0, 1, 1]).is_tree());
        assert!(!DependencyTree::from_parents(vec![2, 1]).is_tree());
        assert!(!DependencyTree::from_parents(vec![1]).is_tree());
        assert!(!DependencyTree::from_parents(vec![0, 5]).is_tree());
        assert!(DependencyTree::from_parents(vec![0, 3, 0]).is_tree());
        assert!(!DependencyTree::from_parents(vec![0, 3, 0]).is_forward());
    }

    #[test]
    fn crossing_arcs_are_non_projective() {
        // 1->2, 1->4, 3->5: 1-4 and 3-5 cross
        let t = DependencyTree::from_parents(vec![0, 1, 0, 1, 3]);
        assert!(!t.is_projective());
        assert!(DependencyTree::from_parents(vec![0, 1, 2]).is_projective());
    }
}
