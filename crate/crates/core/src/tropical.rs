//! Dense matrices over the (min, +) semiring.
//!
//! Products are blocked over output rows and column tiles so that a tile of
//! the right factor stays in cache while a block of left rows streams over
//! it; output row blocks are independent and run in parallel.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const INF: f64 = f64::INFINITY;

const ROW_BLOCK: usize = 8;
const COL_TILE: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct MinPlusMatrix {
    n: usize,
    data: Vec<f64>,
}

impl MinPlusMatrix {
    /// All entries `+∞` (the tropical zero).
    pub fn infinite(n: usize) -> Self {
        Self {
            n,
            data: vec![INF; n * n],
        }
    }

    /// `0` on the diagonal, `+∞` elsewhere (the tropical identity).
    pub fn identity(n: usize) -> Self {
        let mut m = Self::infinite(n);
        for i in 0..n {
            m.data[i * n + i] = 0.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), n * n, "matrix must be square");
        Self { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    /// Entrywise `min` (tropical sum).
    pub fn min_with(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.min(*b))
                .collect(),
        }
    }

    /// `self ⊕ I`: allow the empty path.
    pub fn with_identity(&self) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            let d = &mut m.data[i * self.n + i];
            *d = d.min(0.0);
        }
        m
    }

    /// Add `c` to every finite entry (a tropical scalar multiple).
    pub fn offset(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| x + c).collect(),
        }
    }

    /// Count of entries below `+∞`.
    pub fn finite_count(&self) -> usize {
        self.data.iter().filter(|x| x.is_finite()).count()
    }

    /// `max |a − b|` over entries finite in both; `+∞` when the finite
    /// patterns differ.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for (a, b) in self.data.iter().zip(&other.data) {
            match (a.is_finite(), b.is_finite()) {
                (true, true) => m = m.max((a - b).abs()),
                (false, false) => {}
                _ => return INF,
            }
        }
        m
    }

    pub fn check(&self) -> Result<()> {
        if self.data.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
            return Err(Error::Numerical("min-plus matrix has NaN or −∞ entries".into()));
        }
        Ok(())
    }

    /// Tropical product `C[i][j] = min_k A[i][k] + B[k][j]`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut out = vec![INF; n * n];
        let a = &self.data;
        let b = &other.data;
        out.par_chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(|(blk, c_rows)| {
                let i0 = blk * ROW_BLOCK;
                let rows = c_rows.len() / n;
                for j0 in (0..n).step_by(COL_TILE) {
                    let j1 = (j0 + COL_TILE).min(n);
                    for k in 0..n {
                        let b_tile = &b[k * n + j0..k * n + j1];
                        for r in 0..rows {
                            let aik = a[(i0 + r) * n + k];
                            if aik == INF {
                                continue;
                            }
                            let c_tile = &mut c_rows[r * n + j0..r * n + j1];
                            for (c, &bkj) in c_tile.iter_mut().zip(b_tile) {
                                let s = aik + bkj;
                                *c = if s < *c { s } else { *c };
                            }
                        }
                    }
                }
            });
        Self { n, data: out }
    }

    /// Tropical power `self^t`, `t ≥ 1`, by repeated squaring.
    pub fn power(&self, t: u64) -> Self {
        assert!(t >= 1, "power must be at least 1");
        let mut result: Option<Self> = None;
        let mut base = self.clone();
        let mut e = t;
        loop {
            if e & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r.mul(&base),
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            base = base.mul(&base);
        }
        result.expect("t >= 1")
    }

    /// `min_{0 ≤ j ≤ m} self^j` (with `self^0 = I`).
    pub fn running_min_power(&self, m: u64) -> Self {
        if m == 0 {
            return Self::identity(self.n);
        }
        self.with_identity().power(m)
    }
}
