//! Order-statistic multiset of particle positions.
//!
//! A treap keyed by position with subtree sizes: O(log n) insert, remove,
//! and rank queries. Duplicate keys are allowed; equality is exact f64
//! equality (positions only ever arise from identical arithmetic, so
//! co-located particles compare equal bit-for-bit). Priorities come from
//! an internal deterministic generator, so tree shape (and therefore the
//! whole simulation) is reproducible.

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    key: f64,
    prio: u64,
    left: u32,
    right: u32,
    size: u32,
}

#[derive(Debug, Clone)]
pub struct OrderStatTree {
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: u32,
    prio_state: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl OrderStatTree {
    pub fn new() -> Self {
        OrderStatTree { nodes: Vec::new(), free: Vec::new(), root: NIL, prio_state: 0x5bd1_e995_dead_beef }
    }

    pub fn with_capacity(n: usize) -> Self {
        let mut t = Self::new();
        t.nodes.reserve(n);
        t
    }

    pub fn len(&self) -> usize {
        self.size(self.root) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.root == NIL
    }

    fn size(&self, t: u32) -> u32 {
        if t == NIL {
            0
        } else {
            self.nodes[t as usize].size
        }
    }

    fn update(&mut self, t: u32) {
        let (l, r) = (self.nodes[t as usize].left, self.nodes[t as usize].right);
        self.nodes[t as usize].size = 1 + self.size(l) + self.size(r);
    }

    /// Split into keys `< key` (when `le` is false) or `<= key` (when true),
    /// and the rest.
    fn split(&mut self, t: u32, key: f64, le: bool) -> (u32, u32) {
        if t == NIL {
            return (NIL, NIL);
        }
        let node_key = self.nodes[t as usize].key;
        let goes_left = if le { node_key <= key } else { node_key < key };
        if goes_left {
            let right = self.nodes[t as usize].right;
            let (a, b) = self.split(right, key, le);
            self.nodes[t as usize].right = a;
            self.update(t);
            (t, b)
        } else {
            let left = self.nodes[t as usize].left;
            let (a, b) = self.split(left, key, le);
            self.nodes[t as usize].left = b;
            self.update(t);
            (a, t)
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].prio >= self.nodes[b as usize].prio {
            let ar = self.nodes[a as usize].right;
            let m = self.merge(ar, b);
            self.nodes[a as usize].right = m;
            self.update(a);
            a
        } else {
            let bl = self.nodes[b as usize].left;
            let m = self.merge(a, bl);
            self.nodes[b as usize].left = m;
            self.update(b);
            b
        }
    }

    fn alloc(&mut self, key: f64) -> u32 {
        let prio = splitmix64(&mut self.prio_state);
        let node = Node { key, prio, left: NIL, right: NIL, size: 1 };
        match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    pub fn insert(&mut self, key: f64) {
        assert!(key.is_finite(), "positions must be finite");
        let node = self.alloc(key);
        let (a, b) = self.split(self.root, key, true);
        let ab = self.merge(a, node);
        self.root = self.merge(ab, b);
    }

    /// Remove one element equal to `key`; panics if absent (an internal
    /// invariant violation: the caller tracks every stored position).
    pub fn remove(&mut self, key: f64) {
        let (lt, rest) = self.split(self.root, key, false);
        let (eq, gt) = self.split(rest, key, true);
        assert!(eq != NIL, "removing a position that is not in the tree");
        let (l, r) = (self.nodes[eq as usize].left, self.nodes[eq as usize].right);
        let eq_rest = self.merge(l, r);
        self.free.push(eq);
        let lhs = self.merge(lt, eq_rest);
        self.root = self.merge(lhs, gt);
    }

    /// Number of elements strictly below `key`.
    pub fn rank_lt(&self, key: f64) -> usize {
        let mut t = self.root;
        let mut acc = 0usize;
        while t != NIL {
            let n = &self.nodes[t as usize];
            if n.key < key {
                acc += self.size(n.left) as usize + 1;
                t = n.right;
            } else {
                t = n.left;
            }
        }
        acc
    }

    /// Number of elements `<= key`.
    pub fn rank_le(&self, key: f64) -> usize {
        let mut t = self.root;
        let mut acc = 0usize;
        while t != NIL {
            let n = &self.nodes[t as usize];
            if n.key <= key {
                acc += self.size(n.left) as usize + 1;
                t = n.right;
            } else {
                t = n.left;
            }
        }
        acc
    }

    /// Number of elements equal to `key`.
    pub fn count_eq(&self, key: f64) -> usize {
        self.rank_le(key) - self.rank_lt(key)
    }

    /// The element with 0-based rank `k`.
    pub fn select(&self, k: usize) -> f64 {
        assert!(k < self.len(), "rank {k} out of range");
        let mut t = self.root;
        let mut k = k as u32;
        loop {
            let n = &self.nodes[t as usize];
            let ls = self.size(n.left);
            if k < ls {
                t = n.left;
            } else if k == ls {
                return n.key;
            } else {
                k -= ls + 1;
                t = n.right;
            }
        }
    }

    /// In-order contents (sorted).
    pub fn to_sorted(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = Vec::new();
        let mut t = self.root;
        while t != NIL || !stack.is_empty() {
            while t != NIL {
                stack.push(t);
                t = self.nodes[t as usize].left;
            }
            let top = stack.pop().unwrap();
            out.push(self.nodes[top as usize].key);
            t = self.nodes[top as usize].right;
        }
        out
    }

    /// Structural self-check for tests: sizes consistent, in-order sorted.
    #[cfg(test)]
    fn validate(&self) {
        fn walk(t: &OrderStatTree, i: u32) -> u32 {
            if i == NIL {
                return 0;
            }
            let n = &t.nodes[i as usize];
            let ls = walk(t, n.left);
            let rs = walk(t, n.right);
            assert_eq!(n.size, ls + rs + 1, "size mismatch");
            if n.left != NIL {
                assert!(t.nodes[n.left as usize].prio <= n.prio);
            }
            if n.right != NIL {
                assert!(t.nodes[n.right as usize].prio <= n.prio);
            }
            n.size
        }
        walk(self, self.root);
        let sorted = self.to_sorted();
        assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "in-order traversal not sorted");
    }
}

impl Default for OrderStatTree {
    fn default() -> Self {
        Self::new()
    }
}

impl FromIterator<f64> for OrderStatTree {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut t = OrderStatTree::new();
        for x in iter {
            t.insert(x);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ranks_with_duplicates() {
        let t: OrderStatTree = [1.0, 2.0, 2.0, 3.0, 2.0].into_iter().collect();
        assert_eq!(t.len(), 5);
        assert_eq!(t.rank_lt(2.0), 1);
        assert_eq!(t.rank_le(2.0), 4);
        assert_eq!(t.count_eq(2.0), 3);
        assert_eq!(t.count_eq(1.5), 0);
        assert_eq!(t.select(0), 1.0);
        assert_eq!(t.select(4), 3.0);
    }

    #[test]
    fn random_ops_stay_consistent_with_sorted_vec() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tree = OrderStatTree::new();
        let mut reference: Vec<f64> = Vec::new();
        for step in 0..4000 {
            if reference.is_empty() || rng.gen_bool(0.6) {
                // Coarse values force duplicate keys regularly.
                let x = (rng.gen_range(-50i32..50) as f64) * 0.5;
                tree.insert(x);
                let pos = reference.partition_point(|v| *v <= x);
                reference.insert(pos, x);
            } else {
                let i = rng.gen_range(0..reference.len());
                let x = reference.remove(i);
                tree.remove(x);
            }
            if step % 500 == 0 {
                tree.validate();
            }
            assert_eq!(tree.len(), reference.len());
            let probe = (rng.gen_range(-55i32..55) as f64) * 0.5;
            assert_eq!(tree.rank_lt(probe), reference.partition_point(|v| *v < probe));
            assert_eq!(tree.rank_le(probe), reference.partition_point(|v| *v <= probe));
        }
        tree.validate();
        assert_eq!(tree.to_sorted(), reference);
    }

    #[test]
    fn deterministic_shape() {
        let a: OrderStatTree = (0..100).map(|i| (i * 37 % 100) as f64).collect();
        let b: OrderStatTree = (0..100).map(|i| (i * 37 % 100) as f64).collect();
        assert_eq!(a.to_sorted(), b.to_sorted());
        assert_eq!(a.root, b.root);
    }
}
