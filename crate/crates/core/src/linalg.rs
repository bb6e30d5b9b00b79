//! Exact rational elimination for structural indices, plus a few floating-point
//! helpers built on nalgebra's SVD.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Stoichiometric coefficient type.
pub type Rational = Ratio<i64>;

/// Dense row-major matrix of exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl RationalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Rational {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<Rational> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Exact product. Panics on a dimension mismatch.
    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in product");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + a * rhs.get(k, j));
                }
            }
        }
        out
    }

    /// Keep only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, cols.len());
        for (jj, &j) in cols.iter().enumerate() {
            for i in 0..self.rows {
                out.set(i, jj, self.get(i, j));
            }
        }
        out
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| ratio_to_f64(&self.get(i, j)))
    }

    fn to_big(&self) -> Vec<Vec<BigRational>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| big(self.get(i, j))).collect())
            .collect()
    }

    /// Rank by exact Gaussian elimination.
    pub fn rank(&self) -> usize {
        rref(self.to_big(), self.cols).1.len()
    }

    /// Indices of pivot columns in the reduced row echelon form.
    pub fn pivot_columns(&self) -> Vec<usize> {
        rref(self.to_big(), self.cols).1
    }

    /// Nonzero rows of the reduced row echelon form, as floats. They span the
    /// row space, and each pivot column appears in exactly one row.
    pub fn reduced_row_basis(&self) -> DMatrix<f64> {
        let (reduced, pivots) = rref(self.to_big(), self.cols);
        DMatrix::from_fn(pivots.len(), self.cols, |i, j| {
            reduced[i][j].to_f64().expect("finite rational")
        })
    }

    /// Basis of the right null space, each vector scaled to primitive integers
    /// with a positive leading entry.
    pub fn null_space(&self) -> Vec<Vec<Rational>> {
        let (reduced, pivots) = rref(self.to_big(), self.cols);
        let free: Vec<usize> = (0..self.cols).filter(|j| !pivots.contains(j)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![BigRational::zero(); self.cols];
                v[f] = BigRational::one();
                for (row, &p) in pivots.iter().enumerate() {
                    v[p] = -reduced[row][f].clone();
                }
                primitive_integer_vector(&v)
            })
            .collect()
    }

    /// Exact inverse of a square matrix, `None` if singular.
    pub fn inverse(&self) -> Option<Self> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let mut aug: Vec<Vec<BigRational>> = self
            .to_big()
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.extend((0..n).map(|j| {
                    if i == j {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                }));
                row
            })
            .collect();
        let pivots = rref_in_place(&mut aug, n);
        if pivots.len() < n {
            return None;
        }
        let mut out = Self::zeros(n, n);
        for (i, row) in aug.iter().enumerate() {
            for j in 0..n {
                out.set(i, j, small(&row[n + j])?);
            }
        }
        Some(out)
    }
}

fn big(r: Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

fn small(r: &BigRational) -> Option<Rational> {
    Some(Rational::new(r.numer().to_i64()?, r.denom().to_i64()?))
}

pub fn ratio_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn rref(mut a: Vec<Vec<BigRational>>, cols: usize) -> (Vec<Vec<BigRational>>, Vec<usize>) {
    let pivots = rref_in_place(&mut a, cols);
    (a, pivots)
}

/// Reduces `a` in place, pivoting only within the first `cols` columns.
fn rref_in_place(a: &mut [Vec<BigRational>], cols: usize) -> Vec<usize> {
    let rows = a.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for x in a[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let factor = a[i][c].clone();
                let (head, tail) = a.split_at_mut(i.max(r));
                let (target, source) = if i < r {
                    (&mut head[i], &tail[0])
                } else {
                    (&mut tail[0], &head[r])
                };
                for (t, s) in target.iter_mut().zip(source.iter()) {
                    *t -= &factor * s;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

fn primitive_integer_vector(v: &[BigRational]) -> Vec<Rational> {
    let lcm = v
        .iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| (x * &lcm).to_integer()).collect();
    let gcd = ints
        .iter()
        .fold(BigInt::zero(), |acc, x| acc.gcd(x));
    let sign = match ints.iter().find(|x| !x.is_zero()) {
        Some(lead) if lead.is_negative() => -BigInt::one(),
        _ => BigInt::one(),
    };
    ints.iter()
        .map(|x| {
            let scaled = if gcd.is_zero() { x.clone() } else { x / &gcd * &sign };
            Rational::from_integer(scaled.to_i64().expect("conservation coefficient overflow"))
        })
        .collect()
}

/// Numerical rank from singular values, cutoff `rel_tol * sigma_max`.
pub fn numeric_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis (as columns) of the right null space, using a relative
/// singular-value cutoff.
pub fn numeric_null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    // Pad to at least square so the thin SVD yields a full set of right vectors.
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::<f64>::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = if smax == 0.0 { 0.0 } else { rel_tol * smax };
    let null_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    let mut basis = DMatrix::<f64>::zeros(n, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        for j in 0..n {
            basis[(j, k)] = v_t[(i, j)];
        }
    }
    basis
}
