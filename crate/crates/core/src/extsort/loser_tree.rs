use std::cmp::Ordering;
use std::io;

/// K-way merge of sorted fallible streams. Ties go to the lower source index,
/// so merging is stable with respect to source order.
pub struct LoserTree<T, I, F> {
    sources: Vec<I>,
    heads: Vec<Option<T>>,
    /// `tree[0]` is the current winner; `tree[1..k]` hold losers.
    tree: Vec<usize>,
    cmp: F,
    failed: bool,
}

impl<T, I, F> LoserTree<T, I, F>
where
    I: Iterator<Item = io::Result<T>>,
    F: FnMut(&T, &T) -> Ordering,
{
    pub fn new(mut sources: Vec<I>, cmp: F) -> io::Result<Self> {
        let k = sources.len();
        let mut heads = Vec::with_capacity(k);
        for s in sources.iter_mut() {
            heads.push(s.next().transpose()?);
        }
        let mut t = LoserTree {
            sources,
            heads,
            tree: vec![0; k.max(1)],
            cmp,
            failed: false,
        };
        if k > 0 {
            let w = t.build(1);
            t.tree[0] = w;
        }
        Ok(t)
    }

    fn less(&mut self, a: usize, b: usize) -> bool {
        match (&self.heads[a], &self.heads[b]) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(x), Some(y)) => match (self.cmp)(x, y) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => a < b,
            },
        }
    }

    fn build(&mut self, node: usize) -> usize {
        let k = self.sources.len();
        if node >= k {
            return node - k;
        }
        let a = self.build(2 * node);
        let b = self.build(2 * node + 1);
        let (w, l) = if self.less(b, a) { (b, a) } else { (a, b) };
        self.tree[node] = l;
        w
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }
}

impl<T, I, F> Iterator for LoserTree<T, I, F>
where
    I: Iterator<Item = io::Result<T>>,
    F: FnMut(&T, &T) -> Ordering,
{
    type Item = io::Result<T>;

    fn next(&mut self) -> Option<io::Result<T>> {
        let k = self.sources.len();
        if k == 0 || self.failed {
            return None;
        }
        let w = self.tree[0];
        let item = self.heads[w].take()?;
        match self.sources[w].next().transpose() {
            Ok(h) => self.heads[w] = h,
            Err(e) => {
                self.failed = true;
                return Some(Err(e));
            }
        }
        let mut cur = w;
        let mut node = (w + k) / 2;
        while node >= 1 {
            let other = self.tree[node];
            if self.less(other, cur) {
                self.tree[node] = cur;
                cur = other;
            }
            node /= 2;
        }
        self.tree[0] = cur;
        Some(Ok(item))
    }
}
