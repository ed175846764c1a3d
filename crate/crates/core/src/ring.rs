//! Scalar arithmetic shared by the real, complex and prime-field code paths.
//!
//! The rigidity matrix is built once, generically over a [`Ring`], so the float
//! Jacobian, the complex solver Jacobian and the exact modular matrix all come
//! from the same cofactor expansion.

use num_complex::Complex64;

/// A commutative ring with an explicit context (needed for a runtime prime).
pub trait Ring {
    type Elem: Copy + PartialEq + std::fmt::Debug;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn sub(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn mul(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn neg(&self, a: Self::Elem) -> Self::Elem;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Reals;

impl Ring for Reals {
    type Elem = f64;
    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        1.0
    }
    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn neg(&self, a: f64) -> f64 {
        -a
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Complexes;

impl Ring for Complexes {
    type Elem = Complex64;
    fn zero(&self) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
    fn one(&self) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }
    fn add(&self, a: Complex64, b: Complex64) -> Complex64 {
        a + b
    }
    fn sub(&self, a: Complex64, b: Complex64) -> Complex64 {
        a - b
    }
    fn mul(&self, a: Complex64, b: Complex64) -> Complex64 {
        a * b
    }
    fn neg(&self, a: Complex64) -> Complex64 {
        -a
    }
}

/// The prime field Z/pZ, elements stored as canonical residues in `[0, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    /// `p` must be an odd prime below 2^63; use [`is_prime`] to check.
    pub fn new(p: u64) -> Self {
        debug_assert!(is_prime(p));
        Self { p }
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn reduce(&self, a: u64) -> u64 {
        a % self.p
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.p;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat; `None` for zero.
    pub fn inv(&self, a: u64) -> Option<u64> {
        if a.is_multiple_of(self.p) {
            None
        } else {
            Some(self.pow(a, self.p - 2))
        }
    }

    /// Rank of a dense matrix over the field by Gaussian elimination.
    pub fn rank(&self, rows: &[Vec<u64>]) -> usize {
        let mut m: Vec<Vec<u64>> = rows.to_vec();
        let ncols = m.first().map_or(0, Vec::len);
        let mut rank = 0;
        for col in 0..ncols {
            let Some(pivot) = (rank..m.len()).find(|&r| m[r][col] != 0) else {
                continue;
            };
            m.swap(rank, pivot);
            let inv = self.inv(m[rank][col]).expect("nonzero pivot");
            for x in &mut m[rank][col..] {
                *x = self.mul(*x, inv);
            }
            let pivot_row = m[rank].clone();
            for (r, row) in m.iter_mut().enumerate() {
                if r == rank || row[col] == 0 {
                    continue;
                }
                let factor = row[col];
                for c in col..ncols {
                    row[c] = self.sub(row[c], self.mul(factor, pivot_row[c]));
                }
            }
            rank += 1;
            if rank == m.len() {
                break;
            }
        }
        rank
    }
}

impl Ring for PrimeField {
    type Elem = u64;
    fn zero(&self) -> u64 {
        0
    }
    fn one(&self) -> u64 {
        1
    }
    fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }
    fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }
    fn mul(&self, a: u64, b: u64) -> u64 {
        ((u128::from(a) * u128::from(b)) % u128::from(self.p)) as u64
    }
    fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }
}

/// Deterministic Miller-Rabin for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &w in &WITNESSES {
        if n.is_multiple_of(w) {
            return n == w;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    let mulmod = |a: u64, b: u64| ((u128::from(a) * u128::from(b)) % u128::from(n)) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for &a in &WITNESSES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Determinant by Laplace expansion along the first row.
///
/// Division-free, so it works in any ring. Cost is factorial in the size; only
/// used on the `s x s` incidence minors, where `s` is small.
pub fn laplace_det<R: Ring>(ring: &R, m: &[Vec<R::Elem>]) -> R::Elem {
    let n = m.len();
    let cols: Vec<usize> = (0..n).collect();
    laplace_rec(ring, m, 0, &cols)
}

fn laplace_rec<R: Ring>(ring: &R, m: &[Vec<R::Elem>], row: usize, cols: &[usize]) -> R::Elem {
    match cols.len() {
        0 => ring.one(),
        1 => m[row][cols[0]],
        2 => ring.sub(
            ring.mul(m[row][cols[0]], m[row + 1][cols[1]]),
            ring.mul(m[row][cols[1]], m[row + 1][cols[0]]),
        ),
        _ => {
            let mut acc = ring.zero();
            let mut rest = Vec::with_capacity(cols.len() - 1);
            for (q, &c) in cols.iter().enumerate() {
                rest.clear();
                rest.extend(cols.iter().copied().filter(|&x| x != c));
                let term = ring.mul(m[row][c], laplace_rec(ring, m, row + 1, &rest));
                acc = if q % 2 == 0 {
                    ring.add(acc, term)
                } else {
                    ring.sub(acc, term)
                };
            }
            acc
        }
    }
}

/// Exact integer determinant (fraction-free Bareiss elimination).
pub fn integer_det(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&x| i128::from(x)).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            let Some(swap) = (k + 1..n).find(|&r| a[r][k] != 0) else {
                return 0;
            };
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}
