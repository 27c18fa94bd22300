//! Dense linear algebra over F_p with machine-word entries.

use crate::field::{add_mod, inv_mod, mul_mod, sub_mod};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FpMatrix {
    pub p: u64,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u64>,
}

impl FpMatrix {
    pub fn zeros(p: u64, rows: usize, cols: usize) -> FpMatrix {
        FpMatrix { p, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_rows(p: u64, rows: &[Vec<u64>]) -> FpMatrix {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = FpMatrix::zeros(p, r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged matrix");
            for (j, &v) in row.iter().enumerate() {
                m.data[i * c + j] = v % p;
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = v % self.p;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> FpMatrix {
        let mut m = FpMatrix::zeros(self.p, rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m.data[a * cols.len() + b] = self.get(i, j);
            }
        }
        m
    }

    pub fn transpose(&self) -> FpMatrix {
        let mut m = FpMatrix::zeros(self.p, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.data[j * self.rows + i] = self.get(i, j);
            }
        }
        m
    }

    pub fn mul(&self, other: &FpMatrix) -> FpMatrix {
        assert_eq!(self.cols, other.rows);
        let p = self.p;
        let mut m = FpMatrix::zeros(p, self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = add_mod(m.get(i, j), mul_mod(a, other.get(k, j), p), p);
                    m.data[i * other.cols + j] = v;
                }
            }
        }
        m
    }

    /// Row echelon form in place; returns the pivot columns and the sign of the row swaps.
    fn eliminate(&mut self) -> (Vec<usize>, bool) {
        let p = self.p;
        let mut pivots = Vec::new();
        let mut odd = false;
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(piv) = (r..self.rows).find(|&i| self.get(i, c) != 0) else {
                continue;
            };
            if piv != r {
                for j in 0..self.cols {
                    self.data.swap(piv * self.cols + j, r * self.cols + j);
                }
                odd = !odd;
            }
            let inv = inv_mod(self.get(r, c), p);
            for i in r + 1..self.rows {
                let f = mul_mod(self.get(i, c), inv, p);
                if f == 0 {
                    continue;
                }
                for j in c..self.cols {
                    let v = sub_mod(self.get(i, j), mul_mod(f, self.get(r, j), p), p);
                    self.data[i * self.cols + j] = v;
                }
            }
            pivots.push(c);
            r += 1;
        }
        (pivots, odd)
    }

    pub fn rank(&self) -> usize {
        self.clone().eliminate().0.len()
    }

    /// Determinant by Gaussian elimination.
    pub fn det(&self) -> u64 {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let mut m = self.clone();
        let (pivots, odd) = m.eliminate();
        if pivots.len() < self.rows {
            return 0;
        }
        let mut d = 1 % self.p;
        for i in 0..self.rows {
            d = mul_mod(d, m.get(i, i), self.p);
        }
        if odd {
            sub_mod(0, d, self.p)
        } else {
            d
        }
    }

    /// Determinant as a signed sum over all permutations.
    pub fn det_permutations(&self) -> u64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let p = self.p;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut total = 0;
        permute(&mut perm, 0, &mut |perm| {
            let mut v = 1 % p;
            for (i, &j) in perm.iter().enumerate() {
                v = mul_mod(v, self.get(i, j), p);
            }
            if inversions(perm) % 2 == 1 {
                v = sub_mod(0, v, p);
            }
            total = add_mod(total, v, p);
        });
        total
    }

    /// Basis of the right kernel {x : M x = 0}.
    pub fn kernel(&self) -> Vec<Vec<u64>> {
        let p = self.p;
        let mut m = self.clone();
        let (pivots, _) = m.eliminate();
        // back-substitute to reduced form
        for (r, &c) in pivots.iter().enumerate().rev() {
            let inv = inv_mod(m.get(r, c), p);
            for j in 0..m.cols {
                let v = mul_mod(m.get(r, j), inv, p);
                m.data[r * m.cols + j] = v;
            }
            for i in 0..r {
                let f = m.get(i, c);
                if f == 0 {
                    continue;
                }
                for j in 0..m.cols {
                    let v = sub_mod(m.get(i, j), mul_mod(f, m.get(r, j), p), p);
                    m.data[i * m.cols + j] = v;
                }
            }
        }
        let free: Vec<usize> = (0..m.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut x = vec![0; m.cols];
                x[f] = 1;
                for (r, &c) in pivots.iter().enumerate() {
                    x[c] = sub_mod(0, m.get(r, f), p);
                }
                x
            })
            .collect()
    }
}

fn permute(perm: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        f(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, f);
        perm.swap(k, i);
    }
}

fn inversions(perm: &[usize]) -> usize {
    let mut c = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                c += 1;
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_rank() {
        let m = FpMatrix::from_rows(7, &[vec![1, 2], vec![3, 4]]);
        assert_eq!(m.det(), 5); // -2 mod 7
        assert_eq!(m.det_permutations(), 5);
        let s = FpMatrix::from_rows(7, &[vec![1, 2, 3], vec![2, 4, 6]]);
        assert_eq!(s.rank(), 1);
        let k = s.kernel();
        assert_eq!(k.len(), 2);
        for x in k {
            let y = s.mul(&FpMatrix::from_rows(7, &x.iter().map(|&v| vec![v]).collect::<Vec<_>>()));
            assert!(y.data.iter().all(|&v| v == 0));
        }
    }
}
