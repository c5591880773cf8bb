use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: f64,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// The episode ended in a terminal state; time-limit truncation is not terminal.
    pub done: bool,
}

/// Borrowed view of a stored transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRef<'a> {
    pub s: &'a [f64],
    pub a: f64,
    pub r: f64,
    pub s_next: &'a [f64],
    pub done: bool,
}

impl TransitionRef<'_> {
    pub fn to_owned(&self) -> Transition {
        Transition { s: self.s.to_vec(), a: self.a, r: self.r, s_next: self.s_next.to_vec(), done: self.done }
    }
}

/// Fixed-capacity ring of transitions with flat storage.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    dim: usize,
    s: Vec<f64>,
    s_next: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    done: Vec<bool>,
    cursor: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            dim,
            s: vec![0.0; capacity * dim],
            s_next: vec![0.0; capacity * dim],
            a: vec![0.0; capacity],
            r: vec![0.0; capacity],
            done: vec![false; capacity],
            cursor: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn state_dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Stores a transition, overwriting the oldest once full.
    pub fn push_parts(&mut self, s: &[f64], a: f64, r: f64, s_next: &[f64], done: bool) {
        assert_eq!(s.len(), self.dim, "state length");
        assert_eq!(s_next.len(), self.dim, "next-state length");
        let i = self.cursor;
        self.s[i * self.dim..(i + 1) * self.dim].copy_from_slice(s);
        self.s_next[i * self.dim..(i + 1) * self.dim].copy_from_slice(s_next);
        self.a[i] = a;
        self.r[i] = r;
        self.done[i] = done;
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    pub fn push(&mut self, t: &Transition) {
        self.push_parts(&t.s, t.a, t.r, &t.s_next, t.done);
    }

    /// Slot `i` of the underlying storage.
    pub fn get(&self, i: usize) -> TransitionRef<'_> {
        assert!(i < self.len, "index {i} beyond fill {}", self.len);
        TransitionRef {
            s: &self.s[i * self.dim..(i + 1) * self.dim],
            a: self.a[i],
            r: self.r[i],
            s_next: &self.s_next[i * self.dim..(i + 1) * self.dim],
            done: self.done[i],
        }
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = TransitionRef<'_>> {
        let start = if self.len < self.capacity { 0 } else { self.cursor };
        (0..self.len).map(move |k| self.get((start + k) % self.capacity))
    }

    /// Slot indices drawn uniformly with replacement.
    pub fn sample_indices(&self, rng: &mut impl Rng, n: usize) -> Vec<usize> {
        assert!(self.len > 0, "sampling from an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.len)).collect()
    }
}
