#![allow(dead_code)]

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

/// Exact P[Binomial(m, p) >= c], with `p` taken at its exact binary value.
pub fn exact_tail(m: usize, c: usize, p: f64) -> BigRational {
    let p = BigRational::from_float(p).expect("finite p");
    let q = BigRational::one() - &p;
    if c == 0 {
        return BigRational::one();
    }
    if c > m {
        return BigRational::zero();
    }
    // 1 - P[X < c]; each lower term built as C(m,k) p^k q^(m-k).
    let mut lower = BigRational::zero();
    let mut binom = BigInt::one();
    for k in 0..c {
        if k > 0 {
            binom = binom * BigInt::from(m - k + 1) / BigInt::from(k);
        }
        let term = BigRational::from_integer(binom.clone()) * pow(&p, k) * pow(&q, m - k);
        lower += term;
    }
    BigRational::one() - lower
}

fn pow(x: &BigRational, e: usize) -> BigRational {
    num::pow::pow(x.clone(), e)
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite")
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub mod cli;
pub mod gradcheck;
pub mod invariants;
