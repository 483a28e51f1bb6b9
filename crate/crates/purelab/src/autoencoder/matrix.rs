//! Dense row-major f64 matrices and the three matmul shapes the network
//! needs. Every kernel has a fixed inner accumulation order, so the parallel
//! and sequential paths are bit-identical; parallelism is over output rows.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Wraps a row-major buffer.
    ///
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length != rows*cols");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Stacks row slices into a matrix.
    ///
    /// # Panics
    /// If rows are empty or ragged.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "no rows");
        let cols = rows[0].len();
        assert!(cols > 0 && rows.iter().all(|r| r.len() == cols), "ragged rows");
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }
}

fn row_parallel(out: &mut Matrix, parallel: bool, kernel: impl Fn(usize, &mut [f64]) + Sync) {
    let cols = out.cols;
    if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.data
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| kernel(i, row));
        }
    } else {
        for (i, row) in out.data.chunks_mut(cols).enumerate() {
            kernel(i, row);
        }
    }
}

/// `A · Bᵀ` for `a` m×k and `b` n×k, yielding m×n.
///
/// # Panics
/// If `a.cols() != b.cols()`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    matmul_nt_impl(a, b, cfg!(feature = "parallel"))
}

/// Sequential twin of [`matmul_nt`]; the benchmark baseline.
#[doc(hidden)]
pub fn matmul_nt_seq(a: &Matrix, b: &Matrix) -> Matrix {
    matmul_nt_impl(a, b, false)
}

fn matmul_nt_impl(a: &Matrix, b: &Matrix, parallel: bool) -> Matrix {
    assert_eq!(a.cols, b.cols, "inner dimensions differ");
    let mut out = Matrix::zeros(a.rows, b.rows);
    row_parallel(&mut out, parallel, |i, row| {
        let ar = a.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            let br = b.row(j);
            let mut acc = 0.0;
            for t in 0..ar.len() {
                acc += ar[t] * br[t];
            }
            *slot = acc;
        }
    });
    out
}

/// `A · B` for `a` m×k and `b` k×n, yielding m×n.
///
/// # Panics
/// If `a.cols() != b.rows()`.
pub fn matmul_nn(a: &Matrix, b: &Matrix) -> Matrix {
    matmul_nn_impl(a, b, cfg!(feature = "parallel"))
}

/// Sequential twin of [`matmul_nn`]; the benchmark baseline.
#[doc(hidden)]
pub fn matmul_nn_seq(a: &Matrix, b: &Matrix) -> Matrix {
    matmul_nn_impl(a, b, false)
}

fn matmul_nn_impl(a: &Matrix, b: &Matrix, parallel: bool) -> Matrix {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let mut out = Matrix::zeros(a.rows, b.cols);
    row_parallel(&mut out, parallel, |i, row| {
        let ar = a.row(i);
        for (t, &av) in ar.iter().enumerate() {
            let br = b.row(t);
            for (slot, &bv) in row.iter_mut().zip(br) {
                *slot += av * bv;
            }
        }
    });
    out
}

/// `Aᵀ · B` for `a` k×m and `b` k×n, yielding m×n.
///
/// # Panics
/// If `a.rows() != b.rows()`.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    matmul_tn_impl(a, b, cfg!(feature = "parallel"))
}

/// Sequential twin of [`matmul_tn`]; the benchmark baseline.
#[doc(hidden)]
pub fn matmul_tn_seq(a: &Matrix, b: &Matrix) -> Matrix {
    matmul_tn_impl(a, b, false)
}

fn matmul_tn_impl(a: &Matrix, b: &Matrix, parallel: bool) -> Matrix {
    assert_eq!(a.rows, b.rows, "outer dimensions differ");
    let mut out = Matrix::zeros(a.cols, b.cols);
    row_parallel(&mut out, parallel, |i, row| {
        for r in 0..a.rows {
            let av = a.get(r, i);
            let br = b.row(r);
            for (slot, &bv) in row.iter_mut().zip(br) {
                *slot += av * bv;
            }
        }
    });
    out
}

/// Per-column sums, accumulated in ascending row order.
pub fn column_sums(a: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; a.cols];
    for r in 0..a.rows {
        for (slot, &v) in out.iter_mut().zip(a.row(r)) {
            *slot += v;
        }
    }
    out
}
