/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

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
        true
    }

    pub fn connected(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn component_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }

    pub fn count_components(&mut self) -> usize {
        (0..self.len()).filter(|&x| self.find(x) == x).count()
    }

    /// Component label per element: the smallest member index.
    pub fn labels(&mut self) -> Vec<usize> {
        let n = self.len();
        let mut min_of = vec![usize::MAX; n];
        for x in 0..n {
            let r = self.find(x);
            min_of[r] = min_of[r].min(x);
        }
        (0..n).map(|x| min_of[self.find(x)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unions_and_labels() {
        let mut uf = UnionFind::new(5);
        uf.union(3, 4);
        uf.union(1, 3);
        assert!(uf.connected(1, 4));
        assert!(!uf.connected(0, 1));
        assert_eq!(uf.count_components(), 3);
        assert_eq!(uf.labels(), vec![0, 1, 2, 1, 1]);
        assert_eq!(uf.component_size(4), 3);
    }
}
