//! Minimal CSR complex matrix for the hot integrator loops. The model
//! Hamiltonians are a few hundred nonzeros on dimensions below ~100, where
//! a dense matvec would waste a factor of ~20.

use crate::C64;
use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct Csr {
    dim: usize,
    row_ptr: Vec<u32>,
    col: Vec<u32>,
    val: Vec<C64>,
}

impl Csr {
    pub fn from_dense(m: &Array2<C64>) -> Self {
        let dim = m.nrows();
        assert_eq!(dim, m.ncols());
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    col.push(j as u32);
                    val.push(v);
                }
            }
            row_ptr.push(col.len() as u32);
        }
        Csr {
            dim,
            row_ptr,
            col,
            val,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// y = A x
    #[inline]
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for i in 0..self.dim {
            let lo = self.row_ptr[i] as usize;
            let hi = self.row_ptr[i + 1] as usize;
            let mut acc = C64::new(0.0, 0.0);
            for k in lo..hi {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            y[i] = acc;
        }
    }

    /// y += coeff * A x
    #[inline]
    pub fn matvec_axpy(&self, coeff: C64, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for i in 0..self.dim {
            let lo = self.row_ptr[i] as usize;
            let hi = self.row_ptr[i + 1] as usize;
            let mut acc = C64::new(0.0, 0.0);
            for k in lo..hi {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            y[i] += coeff * acc;
        }
    }
}

pub fn norm_sq(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn scale(x: &mut [C64], s: f64) {
    for z in x {
        *z *= s;
    }
}
