//! Symmetric positive definite banded matrices with in-place Cholesky.

/// Lower band of an SPD matrix: row `i` stores columns `i - bw..=i`.
#[derive(Debug, Clone)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)` with `j <= i <= j + bw`.
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub(crate) fn add_diag(&mut self, i: usize, v: f64) {
        let k = self.idx(i, i);
        self.data[k] += v;
    }

    /// Factors `A = L Lᵀ` in place. Returns `false` if `A` is not numerically positive definite.
    pub(crate) fn cholesky(&mut self) -> bool {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.get(i, j);
                for p in lo.max(j.saturating_sub(bw))..j {
                    s -= self.get(i, p) * self.get(j, p);
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return false;
                    }
                    self.set(i, i, s.sqrt());
                } else {
                    let v = s / self.get(j, j);
                    self.set(i, j, v);
                }
            }
        }
        true
    }

    /// Solves `L Lᵀ x = b` in place after [`cholesky`](Self::cholesky).
    pub(crate) fn solve_factored(&self, b: &mut [f64]) {
        let bw = self.bw;
        for i in 0..self.n {
            let mut s = b[i];
            for p in i.saturating_sub(bw)..i {
                s -= self.get(i, p) * b[p];
            }
            b[i] = s / self.get(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for q in i + 1..(i + bw + 1).min(self.n) {
                s -= self.get(q, i) * b[q];
            }
            b[i] = s / self.get(i, i);
        }
    }
}
