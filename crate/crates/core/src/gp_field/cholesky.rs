//! Lower-triangular Cholesky factor stored row-packed so that a new
//! observation appends one row in O(n^2) without touching earlier rows.

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PackedCholesky {
    n: usize,
    /// Row `i` occupies `data[i(i+1)/2 .. (i+1)(i+2)/2]`.
    data: Vec<f64>,
}

/// A pivot `d - l.l` that fell below the floor while appending a row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub row: usize,
    pub pivot_sq: f64,
}

impl PackedCholesky {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        PackedCholesky {
            n: 0,
            data: Vec::with_capacity(n * (n + 1) / 2),
        }
    }

    /// Factors the symmetric matrix given by `entry(i, j)` (only `j <= i`
    /// is queried).
    pub fn factor(
        n: usize,
        mut entry: impl FnMut(usize, usize) -> f64,
        floor: f64,
    ) -> Result<Self, PivotFailure> {
        let mut chol = Self::with_capacity(n);
        let mut col = Vec::with_capacity(n);
        for i in 0..n {
            col.clear();
            col.extend((0..i).map(|j| entry(i, j)));
            chol.append(&col, entry(i, i), floor)?;
        }
        Ok(chol)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.data[i * (i + 1) / 2 + i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.row(i)[j]
        }
    }

    /// Extends the factor of `A` to the factor of `[[A, c], [c^T, d]]`.
    /// Fails, leaving `self` unchanged, if the new pivot `d - |L^-1 c|^2`
    /// drops below `floor`.
    pub fn append(&mut self, col: &[f64], diag: f64, floor: f64) -> Result<(), PivotFailure> {
        assert_eq!(col.len(), self.n, "column length must match factor size");
        let mut l = col.to_vec();
        self.forward_solve_in_place(&mut l);
        let pivot_sq = diag - dot(&l, &l);
        if !(pivot_sq >= floor) || pivot_sq <= 0.0 {
            return Err(PivotFailure {
                row: self.n,
                pivot_sq,
            });
        }
        self.data.extend_from_slice(&l);
        self.data.push(pivot_sq.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Appends a row whose off-diagonal part `l = L^-1 c` and diagonal
    /// entry were computed by the caller.
    pub(crate) fn append_solved(&mut self, l: &[f64], l_nn: f64) {
        debug_assert_eq!(l.len(), self.n);
        debug_assert!(l_nn > 0.0);
        self.data.extend_from_slice(l);
        self.data.push(l_nn);
        self.n += 1;
    }

    /// Solves `L x = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let s = b[i] - dot(&row[..i], &b[..i]);
            b[i] = s / row[i];
        }
    }

    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_solve_in_place(&mut x);
        x
    }

    /// Solves `L^T x = b` in place.
    pub fn back_solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let row = self.row(i);
            b[i] /= row[i];
            let xi = b[i];
            for (bk, lk) in b[..i].iter_mut().zip(&row[..i]) {
                *bk -= lk * xi;
            }
        }
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_solve_in_place(&mut x);
        self.back_solve_in_place(&mut x);
        x
    }

    /// Dense `L L^T`, row-major. Test and diagnostic use.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.row(i)[..=j], &self.row(j)[..=j]);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
