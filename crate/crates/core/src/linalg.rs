//! Strided matrix views over `f64` slices and a safe `gemm` on top of
//! `matrixmultiply`.

#[derive(Clone, Copy, Debug)]
pub(crate) struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    /// Row-major `rows × cols`.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols);
        Self { data, rows, cols, rs: cols, cs: 1 }
    }

    pub fn t(self) -> Self {
        Self { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    /// Columns `start..start + n` of this view.
    pub fn cols(self, start: usize, n: usize) -> Self {
        assert!(start + n <= self.cols);
        let offset = if n == 0 || self.rows == 0 { 0 } else { start * self.cs };
        Self { data: &self.data[offset..], rows: self.rows, cols: n, rs: self.rs, cs: self.cs }
    }

    fn max_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

pub(crate) struct ViewMut<'a> {
    data: &'a mut [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> ViewMut<'a> {
    pub fn new(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols);
        Self { data, rows, cols, rs: cols, cs: 1 }
    }

    pub fn cols(self, start: usize, n: usize) -> Self {
        assert!(start + n <= self.cols);
        let offset = if n == 0 || self.rows == 0 { 0 } else { start * self.cs };
        Self { data: &mut self.data[offset..], rows: self.rows, cols: n, rs: self.rs, cs: self.cs }
    }
}

/// `c ← alpha · a · b + beta · c`. With `beta == 0` the old contents of `c`
/// are ignored.
pub(crate) fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: ViewMut<'_>) {
    assert_eq!(a.cols, b.rows);
    assert_eq!((a.rows, b.cols), (c.rows, c.cols));
    assert!(a.data.len() >= a.max_index() && b.data.len() >= b.max_index());
    let c_max = if c.rows == 0 || c.cols == 0 { 0 } else { (c.rows - 1) * c.rs + (c.cols - 1) * c.cs + 1 };
    assert!(c.data.len() >= c_max);
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    // SAFETY: every index touched lies within the checked extents above and
    // `c` is a unique borrow distinct from `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// Adds `bias` to every row of the row-major `rows × bias.len()` matrix.
pub(crate) fn add_row(m: &mut [f64], bias: &[f64]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (x, b) in row.iter_mut().zip(bias) {
            *x += b;
        }
    }
}

/// `acc[j] += Σ_i m[i][j]`.
pub(crate) fn sum_rows_into(m: &[f64], acc: &mut [f64]) {
    for row in m.chunks_exact(acc.len()) {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
}
