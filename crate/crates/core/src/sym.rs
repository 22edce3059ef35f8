//! Small dense symmetric matrix with packed upper-triangular storage.

/// Packed index of `(i, j)` in a row-major upper triangle of size `n`.
#[inline]
pub fn packed_idx(n: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    debug_assert!(c < n);
    // row r starts at r*n - r(r-1)/2
    r * n - r * (r.wrapping_sub(1)) / 2 + (c - r)
}

/// `y = S x` for a symmetric matrix `S` supplied as a packed upper triangle.
pub fn packed_mul_vec(n: usize, packed: &[f64], x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(packed.len(), n * (n + 1) / 2);
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(y.len(), n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += packed[packed_idx(n, i, j)] * x[j];
        }
        y[i] = acc;
    }
}

/// Symmetric `n x n` matrix storing only the upper triangle, row-major.
///
/// Used for propensity Hessians and for central second moments, both of
/// which are symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    /// Number of rows (= columns).
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Packed length `n(n+1)/2`.
    pub fn packed_len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        packed_idx(self.n, i, j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Packed upper-triangle slice, row-major: (0,0), (0,1), ..., (1,1), ...
    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn from_packed(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * (n + 1) / 2);
        SymMatrix { n, data }
    }

    /// True if any entry fails `f64::is_finite`.
    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    /// y = M x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
    }

    /// x^T M x
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.get(i, i) * x[i] * x[i];
            for j in (i + 1)..self.n {
                acc += 2.0 * self.get(i, j) * x[i] * x[j];
            }
        }
        acc
    }

    /// sum_{l,m} M_lm S_lm over the full (both triangles) index range.
    pub fn full_contraction(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.contract_packed(&other.data)
    }

    /// Same as [`full_contraction`](Self::full_contraction) with the other
    /// matrix supplied as a packed upper triangle.
    pub fn contract_packed(&self, packed: &[f64]) -> f64 {
        debug_assert_eq!(packed.len(), self.data.len());
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += self.get(i, i) * packed[packed_idx(self.n, i, i)];
            for j in (i + 1)..self.n {
                acc += 2.0 * self.get(i, j) * packed[packed_idx(self.n, i, j)];
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_indexing_round_trips() {
        let mut m = SymMatrix::zeros(3);
        m.set(0, 1, 2.0);
        m.set(2, 0, -1.5);
        m.set(1, 1, 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 2), -1.5);
        assert_eq!(m.get(1, 1), 4.0);
        assert_eq!(m.packed_len(), 6);
    }

    #[test]
    fn packed_helpers_agree_with_matrix_methods() {
        let mut m = SymMatrix::zeros(3);
        m.set(0, 0, 1.0);
        m.set(0, 2, 2.0);
        m.set(1, 1, -3.0);
        m.set(1, 2, 0.5);
        let x = [1.0, 2.0, 3.0];
        let mut y1 = [0.0; 3];
        let mut y2 = [0.0; 3];
        m.mul_vec(&x, &mut y1);
        packed_mul_vec(3, m.packed(), &x, &mut y2);
        assert_eq!(y1, y2);
        assert_eq!(m.full_contraction(&m), m.contract_packed(m.packed()));
    }

    #[test]
    fn quad_form_matches_direct_sum() {
        let mut m = SymMatrix::zeros(2);
        m.set(0, 0, 1.0);
        m.set(0, 1, 2.0);
        m.set(1, 1, 3.0);
        let x = [2.0, -1.0];
        // x^T M x = 1*4 + 2*2*2*(-1) + 3*1 = 4 - 8 + 3
        assert_eq!(m.quad_form(&x), -1.0);
    }
}
