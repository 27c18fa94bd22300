use std::collections::HashMap;

use super::poly::MultiPoly;
use crate::error::{Error, Result};
use crate::field::Field;

/// Dense matrix of polynomials, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    n: usize,
    field: Field,
    rows: Vec<Vec<MultiPoly>>,
}

impl PolyMatrix {
    pub fn new(rows: Vec<Vec<MultiPoly>>) -> Result<PolyMatrix> {
        let first = rows.first().and_then(|r| r.first()).ok_or_else(|| Error::InvalidShape("empty matrix".into()))?;
        let (n, field) = (first.n(), first.field());
        let width = rows[0].len();
        for r in &rows {
            if r.len() != width {
                return Err(Error::InvalidShape("ragged matrix".into()));
            }
            for e in r {
                if e.field() != field {
                    return Err(Error::FieldMismatch(field, e.field()));
                }
                if e.n() != n {
                    return Err(Error::DimensionMismatch(n, e.n()));
                }
            }
        }
        Ok(PolyMatrix { n, field, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> &MultiPoly {
        &self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<MultiPoly>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<MultiPoly>> {
        self.rows
    }

    /// Submatrix on the given rows and columns, in the order given.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> PolyMatrix {
        let rows = rows.iter().map(|&i| cols.iter().map(|&j| self.rows[i][j].clone()).collect()).collect();
        PolyMatrix { n: self.n, field: self.field, rows }
    }

    pub fn map<F: Fn(&MultiPoly) -> MultiPoly>(&self, f: F) -> PolyMatrix {
        let rows = self.rows.iter().map(|r| r.iter().map(&f).collect()).collect();
        PolyMatrix { n: self.n, field: self.field, rows }
    }

    /// Determinant by cofactor expansion, memoized on column subsets.
    pub fn det(&self) -> Result<MultiPoly> {
        let m = self.nrows();
        if m != self.ncols() {
            return Err(Error::InvalidShape(format!("{}x{} matrix has no determinant", m, self.ncols())));
        }
        if m > 24 {
            return Err(Error::BudgetExceeded("cofactor expansion beyond 24 columns".into()));
        }
        // minors[mask] = det of the last popcount(mask) rows on the columns in mask
        let mut minors: HashMap<u32, MultiPoly> = HashMap::new();
        minors.insert(0, MultiPoly::one(self.n, self.field));
        for size in 1..=m {
            let row = m - size;
            let mut next = HashMap::new();
            for mask in masks_of_size(m, size) {
                let mut acc = MultiPoly::zero(self.n, self.field);
                let mut before = 0;
                for c in 0..m {
                    if mask & (1 << c) == 0 {
                        continue;
                    }
                    let entry = &self.rows[row][c];
                    if !entry.is_zero() {
                        let minor = &minors[&(mask & !(1 << c))];
                        if !minor.is_zero() {
                            let t = entry * minor;
                            acc = if before % 2 == 0 { &acc + &t } else { &acc - &t };
                        }
                    }
                    before += 1;
                }
                next.insert(mask, acc);
            }
            minors = next;
        }
        Ok(minors.remove(&((1u32 << m) - 1)).unwrap())
    }
}

fn masks_of_size(m: usize, size: usize) -> Vec<u32> {
    (0u32..(1 << m)).filter(|x| x.count_ones() as usize == size).collect()
}
