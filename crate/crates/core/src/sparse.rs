//! Row-compressed complex sparse matrices.

use std::io::{self, Write};

use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix { rows, cols, row_ptr: vec![0; rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    /// Compresses coordinate triples, summing duplicates and dropping exact zeros.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(u32, u32, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        let mut rows_of = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                rows_of.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_col = Vec::with_capacity(col_idx.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((r, c), v) in rows_of.into_iter().zip(col_idx).zip(values) {
            if v != C64::new(0.0, 0.0) {
                row_ptr[r as usize + 1] += 1;
                keep_col.push(c);
                keep_val.push(v);
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { rows, cols, row_ptr, col_idx: keep_col, values: keep_val }
    }

    /// Converts column-compressed arrays into row-compressed form. Entries
    /// within a column must already be deduplicated.
    pub fn from_csc(rows: usize, col_ptr: &[usize], row_idx: &[u32], values: &[C64]) -> Self {
        let cols = col_ptr.len() - 1;
        let mut counts = vec![0usize; rows + 1];
        for &r in row_idx {
            counts[r as usize + 1] += 1;
        }
        for r in 0..rows {
            counts[r + 1] += counts[r];
        }
        let nnz = counts[rows];
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; nnz];
        let mut vals = vec![C64::new(0.0, 0.0); nnz];
        for c in 0..cols {
            for k in col_ptr[c]..col_ptr[c + 1] {
                let r = row_idx[k] as usize;
                let slot = next[r];
                col_idx[slot] = c as u32;
                vals[slot] = values[k];
                next[r] += 1;
            }
        }
        CsrMatrix { rows, cols, row_ptr, col_idx, values: vals }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b].iter().zip(&self.values[a..b]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(C64::new(0.0, 0.0), |(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `y += scale * A x`
    pub fn mul_add(&self, x: &[C64], scale: C64, y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = C64::new(0.0, 0.0);
            for (&c, &v) in self.col_idx[a..b].iter().zip(&self.values[a..b]) {
                acc += v * x[c as usize];
            }
            *out += scale * acc;
        }
    }

    /// `y = A x`
    pub fn mul_into(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = C64::new(0.0, 0.0);
            for (&c, &v) in self.col_idx[a..b].iter().zip(&self.values[a..b]) {
                acc += v * x[c as usize];
            }
            *out = acc;
        }
    }

    /// Relabels entries: `(r, c) -> (row_map(c), col_map(r))` into a new
    /// `cols x rows` matrix (a permuted transpose).
    pub fn permuted_transpose(&self, row_map: impl Fn(usize) -> usize, col_map: impl Fn(usize) -> usize) -> Self {
        let t = self
            .iter()
            .map(|(r, c, v)| (row_map(c) as u32, col_map(r) as u32, v))
            .collect();
        CsrMatrix::from_triplets(self.cols, self.rows, t)
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut trip = Vec::new();
        let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); other.cols];
        let mut touched: Vec<u32> = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if acc[c] == C64::new(0.0, 0.0) {
                        touched.push(c as u32);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                trip.push((r as u32, c, acc[c as usize]));
                acc[c as usize] = C64::new(0.0, 0.0);
            }
            touched.clear();
        }
        CsrMatrix::from_triplets(self.rows, other.cols, trip)
    }

    /// `alpha · self + beta · other`
    pub fn combine(&self, alpha: C64, other: &CsrMatrix, beta: C64) -> CsrMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shapes differ");
        let trip = self
            .iter()
            .map(|(r, c, v)| (r as u32, c as u32, alpha * v))
            .chain(other.iter().map(|(r, c, v)| (r as u32, c as u32, beta * v)))
            .collect();
        CsrMatrix::from_triplets(self.rows, self.cols, trip)
    }

    /// Real copy of the matrix when every entry has zero imaginary part.
    pub fn real_form(&self) -> Option<RealCsr> {
        if self.values.iter().any(|v| v.im != 0.0) {
            return None;
        }
        Some(RealCsr {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| v.re).collect(),
        })
    }

    /// Largest absolute row sum (induced ∞-norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Largest absolute column sum (induced 1-norm).
    pub fn norm_one(&self) -> f64 {
        let mut cols = vec![0.0; self.cols];
        for (&c, v) in self.col_idx.iter().zip(&self.values) {
            cols[c as usize] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let mut d = vec![vec![C64::new(0.0, 0.0); self.cols]; self.rows];
        for (r, c, v) in self.iter() {
            d[r][c] = v;
        }
        d
    }

    /// Coordinate text export: header `# dim <n> nnz <m>`, then `row col re im`.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# dim {} nnz {}", self.rows, self.nnz())?;
        for (r, c, v) in self.iter() {
            writeln!(w, "{r} {c} {:e} {:e}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Real-valued counterpart of [`CsrMatrix`], used when a generator has no
/// imaginary entries; it halves memory traffic in matrix-vector products.
#[derive(Clone, Debug, PartialEq)]
pub struct RealCsr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl RealCsr {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `y += scale * A x`
    pub fn mul_add(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = 0.0;
            for (&c, &v) in self.col_idx[a..b].iter().zip(&self.values[a..b]) {
                acc += v * x[c as usize];
            }
            *out += scale * acc;
        }
    }

    /// `y = A x`
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = 0.0;
            for (&c, &v) in self.col_idx[a..b].iter().zip(&self.values[a..b]) {
                acc += v * x[c as usize];
            }
            *out = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn duplicates_merge_and_cancel() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, c(1.0)), (0, 1, c(2.0)), (1, 0, c(1.0)), (1, 0, c(-1.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0));
    }

    #[test]
    fn columns_match_triplets() {
        let a = CsrMatrix::from_csc(
            3,
            &[0, 2, 3, 4],
            &[0, 2, 1, 0],
            &[c(1.0), c(4.0), c(2.0), c(3.0)],
        );
        let b = CsrMatrix::from_triplets(3, 3, vec![(0, 0, c(1.0)), (2, 0, c(4.0)), (1, 1, c(2.0)), (0, 2, c(3.0))]);
        assert_eq!(a, b);
        let mut y = vec![c(0.0); 3];
        a.mul_into(&[c(1.0), c(1.0), c(1.0)], &mut y);
        assert_eq!(y, vec![c(4.0), c(2.0), c(4.0)]);
    }

    #[test]
    fn product_and_combination() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, c(2.0)), (1, 0, c(1.0))]);
        let p = a.matmul(&a);
        assert_eq!(p, CsrMatrix::from_triplets(2, 2, vec![(0, 0, c(2.0)), (1, 1, c(2.0))]));
        let z = p.combine(c(1.0), &p, c(-1.0));
        assert_eq!(z.nnz(), 0);
        assert_eq!(a.max_abs(), 2.0);
        assert_eq!((a.norm_one(), a.norm_inf()), (2.0, 2.0));
    }

    #[test]
    fn real_copy_matches() {
        let a = CsrMatrix::from_triplets(2, 3, vec![(0, 0, c(1.5)), (0, 2, c(-2.0)), (1, 1, c(3.0))]);
        let r = a.real_form().unwrap();
        let mut y = vec![1.0, 1.0];
        r.mul_add(&[1.0, 2.0, 3.0], 2.0, &mut y);
        assert_eq!(y, vec![1.0 + 2.0 * (1.5 - 6.0), 13.0]);
        let b = CsrMatrix::from_triplets(1, 1, vec![(0, 0, C64::new(0.0, 1.0))]);
        assert!(b.real_form().is_none());
    }

    #[test]
    fn export_format() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 0, C64::new(0.5, -1.0))]);
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# dim 2 nnz 1\n1 0 5e-1 -1e0\n");
    }
}
