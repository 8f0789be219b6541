use std::collections::{BTreeSet, VecDeque};

use super::Graph;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n], sets: n }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `true` if `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn num_sets(&self) -> usize {
        self.sets
    }
}

/// Number of connected components, isolated nodes included.
pub fn connected_components(g: &Graph) -> usize {
    let mut dsu = DisjointSet::new(g.num_nodes());
    for (e, _) in g.edges() {
        dsu.union(e.lo(), e.hi());
    }
    dsu.num_sets()
}

/// Nodes at shortest-path distance 1 or 2 from `u`.
pub fn two_hop_neighbors(g: &Graph, u: usize) -> BTreeSet<usize> {
    let adj = g.adjacency();
    let mut out = BTreeSet::new();
    for &(a, _) in &adj[u] {
        out.insert(a);
        for &(b, _) in &adj[a] {
            out.insert(b);
        }
    }
    out.remove(&u);
    out
}

/// Unweighted BFS distances from `source`; `None` for unreachable nodes.
pub fn shortest_path_lengths(g: &Graph, source: usize) -> Vec<Option<usize>> {
    let adj = g.adjacency();
    let mut dist = vec![None; g.num_nodes()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(x) = queue.pop_front() {
        let d = dist[x].unwrap_or(0);
        for &(y, _) in &adj[x] {
            if dist[y].is_none() {
                dist[y] = Some(d + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_counts() {
        assert_eq!(connected_components(&Graph::unlabeled(4)), 4);
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(connected_components(&tri), 1);
        let three = Graph::from_edges(6, &[(0, 1), (2, 3), (4, 5)]).unwrap();
        assert_eq!(connected_components(&three), 3);
    }

    #[test]
    fn two_hop_examples() {
        let star = Graph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(two_hop_neighbors(&star, 1), BTreeSet::from([0, 2, 3, 4]));
        let path = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(two_hop_neighbors(&path, 0), BTreeSet::from([1, 2]));
    }

    #[test]
    fn bfs_distances_on_path() {
        let path = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(shortest_path_lengths(&path, 0), vec![Some(0), Some(1), Some(2), Some(3), None]);
    }
}
