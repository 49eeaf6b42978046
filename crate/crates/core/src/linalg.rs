//! Dense matrix helpers: exponential, Lyapunov solve, conditioning.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::num::Real;

/// Maximum absolute column sum.
pub fn norm1<T: Real>(m: &DMatrix<T>) -> T {
    m.column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, x| acc + x.abs()))
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// 1-norm condition number; infinite when `m` cannot be inverted.
pub fn condition_1<T: Real>(m: &DMatrix<T>) -> T {
    match m.clone().try_inverse() {
        Some(inv) => norm1(m) * norm1(&inv),
        None => T::lit(f64::INFINITY),
    }
}

// Degree-13 Pade coefficients and the 1-norm bound below which a single
// evaluation is accurate to double precision (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

const PADE_LOW: [(f64, &[f64]); 4] = [
    (1.495585217958292e-2, &[120.0, 60.0, 12.0, 1.0]),
    (2.539398330063230e-1, &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0]),
    (9.504178996162932e-1, &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0]),
    (
        2.097847961257068,
        &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
    ),
];

/// Matrix exponential by scaling and squaring with Pade approximants.
///
/// Degree and scaling are chosen from `‖A^k‖^(1/k)` rather than `‖A‖`, which
/// avoids over-scaling strongly non-normal matrices (Al-Mohy & Higham 2009).
pub fn expm<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    assert!(m.is_square(), "expm needs a square matrix");
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let dim = m.nrows();
    let ident = DMatrix::<T>::identity(dim, dim);
    let root = |p: &DMatrix<T>, k: i32| norm1(p).as_f64().powf(1.0 / k as f64);

    let a2 = m * m;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let d4 = root(&a4, 4);
    let d6 = root(&a6, 6);
    let d8 = root(&(&a4 * &a4), 8);
    let eta_low = [d4.max(d6), d4.max(d6), d6.max(d8), d6.max(d8)];

    let (u, v, squarings) = if let Some(i) = (0..PADE_LOW.len()).find(|&i| eta_low[i] <= PADE_LOW[i].0) {
        let (u, v) = pade_low(m, &ident, PADE_LOW[i].1);
        (u, v, 0)
    } else {
        let d10 = root(&(&a4 * &a6), 10);
        let eta = d6.max(d8).min(d8.max(d10));
        let s = ((eta / THETA13).log2().ceil()).max(0.0) as i32;
        let scaled = m * T::lit(2f64.powi(-s));
        let (u, v) = pade13(&scaled, &ident);
        (u, v, s as u32)
    };
    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }

    let numer = &v + &u;
    let denom = &v - &u;
    let mut result = denom.lu().solve(&numer).ok_or(Error::NonFinite)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(result)
}

fn pade_low<T: Real>(a: &DMatrix<T>, ident: &DMatrix<T>, b: &[f64]) -> (DMatrix<T>, DMatrix<T>) {
    let a2 = a * a;
    let mut odd = ident * T::lit(b[1]);
    let mut even = ident * T::lit(b[0]);
    let mut power = ident.clone();
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        odd += &power * T::lit(b[2 * k + 1]);
        even += &power * T::lit(b[2 * k]);
    }
    (a * odd, even)
}

fn pade13<T: Real>(a: &DMatrix<T>, ident: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let b = |i: usize| T::lit(PADE13[i]);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = a * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + ident * b(1));
    let inner_v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + ident * b(0);
    (u, v)
}

/// Solves `A X + X Aᵀ + C = 0` through the Kronecker form.
pub fn solve_lyapunov<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = a.nrows();
    let ident = DMatrix::<T>::identity(n, n);
    let k = ident.kronecker(a) + a.kronecker(&ident);
    let rhs = DMatrix::from_iterator(n * n, 1, c.iter().map(|&x| -x));
    let sol = k.lu().solve(&rhs)?;
    Some(DMatrix::from_iterator(n, n, sol.iter().copied()))
}
