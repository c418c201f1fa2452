use rand::Rng;

use crate::nn::{Matrix, Real};

/// Fixed-capacity FIFO store of `(s, a, c, s', done)` transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<T>,
    act: Vec<T>,
    cost: Vec<T>,
    next_obs: Vec<T>,
    done: Vec<bool>,
    cursor: usize,
    len: usize,
}

/// Column-stacked sample of transitions.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub obs: Matrix<T>,
    pub act: Matrix<T>,
    pub cost: Vec<T>,
    pub next_obs: Matrix<T>,
    pub done: Vec<bool>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            act: Vec::new(),
            cost: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
            cursor: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, obs: &[T], act: &[T], cost: T, next_obs: &[T], done: bool) {
        assert_eq!(obs.len(), self.obs_dim);
        assert_eq!(next_obs.len(), self.obs_dim);
        assert_eq!(act.len(), self.act_dim);
        if self.len < self.capacity {
            self.obs.extend_from_slice(obs);
            self.act.extend_from_slice(act);
            self.cost.push(cost);
            self.next_obs.extend_from_slice(next_obs);
            self.done.push(done);
            self.len += 1;
        } else {
            let i = self.cursor;
            self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
            self.act[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(act);
            self.cost[i] = cost;
            self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(next_obs);
            self.done[i] = done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Cost of every stored transition, oldest first.
    pub fn costs_in_order(&self) -> Vec<T> {
        if self.len < self.capacity {
            return self.cost.clone();
        }
        let mut out = self.cost[self.cursor..].to_vec();
        out.extend_from_slice(&self.cost[..self.cursor]);
        out
    }

    pub fn gather(&self, indices: &[usize]) -> Batch<T> {
        let n = indices.len();
        let mut b = Batch {
            obs: Matrix::zeros(n, self.obs_dim),
            act: Matrix::zeros(n, self.act_dim),
            cost: Vec::with_capacity(n),
            next_obs: Matrix::zeros(n, self.obs_dim),
            done: Vec::with_capacity(n),
        };
        for (row, &i) in indices.iter().enumerate() {
            assert!(i < self.len, "index {i} beyond stored transitions");
            b.obs.row_mut(row).copy_from_slice(&self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.act.row_mut(row).copy_from_slice(&self.act[i * self.act_dim..(i + 1) * self.act_dim]);
            b.next_obs.row_mut(row).copy_from_slice(&self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.cost.push(self.cost[i]);
            b.done.push(self.done[i]);
        }
        b
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Batch<T> {
        assert!(self.len > 0, "sampling from an empty buffer");
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len)).collect();
        self.gather(&idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fifo_eviction_keeps_latest() {
        let (cap, k) = (5, 3);
        let mut buf = ReplayBuffer::<f64>::new(cap, 1, 1);
        for i in 0..cap + k {
            buf.push(&[i as f64], &[0.0], i as f64, &[0.0], false);
        }
        assert_eq!(buf.len(), cap);
        let expect: Vec<f64> = (k..cap + k).map(|i| i as f64).collect();
        assert_eq!(buf.costs_in_order(), expect);
    }

    #[test]
    fn samples_only_stored_entries() {
        let mut buf = ReplayBuffer::<f32>::new(100, 2, 1);
        for i in 0..7 {
            buf.push(&[i as f32, 0.0], &[0.5], i as f32, &[0.0, 1.0], i == 6);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = buf.sample(64, &mut rng);
        assert_eq!(b.len(), 64);
        for (r, &c) in b.cost.iter().enumerate() {
            assert!(c < 7.0);
            assert_eq!(b.obs.get(r, 0), c);
            assert_eq!(b.done[r], c == 6.0);
        }
    }
}
