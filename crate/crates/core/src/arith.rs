//! Exact integer primitives: factorization, Möbius, totient, divisor counts,
//! the coprime residue sets `I_q = { p in [0, q) : gcd(b p + a, q) = 1 }` and
//! the generalized Ramanujan sums over them.
//!
//! The Ramanujan sum `S(q, k; a, b) = sum_{p in I_q} e(-k p / q)` has two
//! independent evaluation paths: direct summation over `I_q` and the Möbius
//! divisor expansion, which needs at most `tau(q)` terms.

use std::f64::consts::TAU;

use num_complex::Complex64;
use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// `gcd(|a|, b)` for a signed left operand.
pub fn gcd_signed(a: i64, b: u64) -> u64 {
    gcd(a.unsigned_abs(), b)
}

/// Inverse of `b` modulo `m` (`m >= 1`), if it exists.
pub fn mod_inverse(b: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut old_r, mut r) = ((b % m) as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let quot = old_r / r;
        (old_r, r) = (r, old_r - quot * r);
        (old_s, s) = (s, old_s - quot * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// `e(-r/q) = exp(-2 pi i r / q)` for an already reduced residue `r`.
#[inline]
pub(crate) fn unit_root(r: u64, q: u64) -> Complex64 {
    Complex64::from_polar(1.0, -TAU * (r as f64) / (q as f64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Factorization {
    n: u64,
    factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn n(&self) -> u64 {
        self.n
    }

    /// `(prime, exponent)` pairs with strictly increasing primes.
    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e == 1)
    }

    pub fn mobius(&self) -> i8 {
        if !self.is_squarefree() {
            0
        } else if self.factors.len() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn euler_phi(&self) -> u64 {
        self.factors
            .iter()
            .fold(self.n, |acc, &(p, _)| acc / p * (p - 1))
    }

    pub fn divisor_count(&self) -> u64 {
        self.factors.iter().map(|&(_, e)| e as u64 + 1).product()
    }

    /// All positive divisors, ascending.
    pub fn divisors(&self) -> Vec<u64> {
        let mut out = vec![1u64];
        for &(p, e) in &self.factors {
            let len = out.len();
            let mut pk = 1u64;
            for _ in 0..e {
                pk *= p;
                for i in 0..len {
                    out.push(out[i] * pk);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Squarefree divisors `l` together with `mu(l)`.
    pub fn squarefree_divisors(&self) -> Vec<(u64, i8)> {
        let mut out = vec![(1u64, 1i8)];
        for p in self.primes() {
            let len = out.len();
            for i in 0..len {
                let (d, mu) = out[i];
                out.push((d * p, -mu));
            }
        }
        out
    }
}

/// Trial division with a mod-30 wheel.
pub fn factorize(n: u64) -> Result<Factorization> {
    if n == 0 {
        return Err(Error::invalid("factorize: n must be >= 1"));
    }
    let mut m = n;
    let mut factors = Vec::new();
    let mut take = |m: &mut u64, p: u64| {
        let mut e = 0u32;
        while *m % p == 0 {
            *m /= p;
            e += 1;
        }
        if e > 0 {
            factors.push((p, e));
        }
    };
    for p in [2u64, 3, 5] {
        take(&mut m, p);
    }
    const STEPS: [u64; 8] = [4, 2, 4, 2, 4, 6, 2, 6];
    let mut d = 7u64;
    let mut i = 0;
    while d.saturating_mul(d) <= m {
        take(&mut m, d);
        d += STEPS[i];
        i = (i + 1) % STEPS.len();
    }
    if m > 1 {
        let p = m;
        take(&mut m, p);
    }
    Ok(Factorization { n, factors })
}

pub fn mobius(n: u64) -> Result<i8> {
    Ok(factorize(n)?.mobius())
}

pub fn euler_phi(n: u64) -> Result<u64> {
    Ok(factorize(n)?.euler_phi())
}

pub fn divisor_count(n: u64) -> Result<u64> {
    Ok(factorize(n)?.divisor_count())
}

/// `prod_{p | q, p does not divide b} (1 - 1/p)` as an exact rational.
pub fn coprime_density(q: u64, b: u64) -> Result<Ratio<u64>> {
    let f = factorize(q)?;
    Ok(density_from(&f, b))
}

fn density_from(f: &Factorization, b: u64) -> Ratio<u64> {
    let (num, den) = f
        .primes()
        .filter(|&p| b % p != 0)
        .fold((1u64, 1u64), |(n, d), p| (n * (p - 1), d * p));
    Ratio::new(num, den)
}

/// The set `I_q` of admissible numerators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResidueSet {
    pub q: u64,
    pub a: i64,
    pub b: u64,
    pub members: Vec<u64>,
}

impl ResidueSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, p: u64) -> bool {
        self.members.binary_search(&(p % self.q)).is_ok()
    }

    /// `q * prod_{p | q, p !| b} (1 - 1/p)`, which is always an integer.
    pub fn cardinality_formula(&self) -> u64 {
        let d = coprime_density(self.q, self.b).expect("q >= 1 by construction");
        let r = d * Ratio::from_integer(self.q);
        debug_assert!(r.is_integer());
        r.to_integer()
    }
}

fn check_pair(q: u64, a: i64, b: u64) -> Result<()> {
    if q == 0 {
        return Err(Error::invalid("modulus q must be >= 1"));
    }
    if b == 0 {
        return Err(Error::invalid("b must be >= 1"));
    }
    if gcd_signed(a, b) != 1 {
        return Err(Error::NotCoprime { a, b });
    }
    Ok(())
}

/// Membership test `gcd(b p + a, q) = 1`, reducing `b p + a` mod `q` first.
#[inline]
pub fn is_admissible(p: i64, q: u64, a: i64, b: u64) -> bool {
    let qi = q as i128;
    let x = (b as i128 * p as i128 + a as i128).rem_euclid(qi) as u64;
    gcd(x, q) == 1
}

pub fn residue_set(q: u64, a: i64, b: u64) -> Result<ResidueSet> {
    check_pair(q, a, b)?;
    let members = (0..q).filter(|&p| is_admissible(p as i64, q, a, b)).collect();
    Ok(ResidueSet { q, a, b, members })
}

/// A generalized Ramanujan sum together with its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RamanujanSumValue {
    pub q: u64,
    pub k: i64,
    pub a: i64,
    pub b: u64,
    pub re: f64,
    pub im: f64,
}

impl RamanujanSumValue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// `sum_{p in I_q} e(-k p / q)` by direct summation.
pub fn ramanujan_sum_bruteforce(q: u64, k: i64, a: i64, b: u64) -> Result<Complex64> {
    let set = residue_set(q, a, b)?;
    let kq = k.rem_euclid(q as i64) as u128;
    Ok(set
        .members
        .iter()
        .map(|&p| unit_root(((kq * p as u128) % q as u128) as u64, q))
        .sum())
}

/// Precomputed divisor expansion of `S(q, .; a, b)`: the squarefree `l | q`
/// coprime to `b`, with `mu(l)` and the least `p0 >= 0` solving
/// `b p0 = -a (mod l)`.
#[derive(Debug, Clone)]
pub struct RamanujanKernel {
    q: u64,
    card: u64,
    terms: Vec<(u64, i8, u64)>,
}

impl RamanujanKernel {
    pub fn new(q: u64, a: i64, b: u64) -> Result<Self> {
        check_pair(q, a, b)?;
        let f = factorize(q)?;
        let terms = f
            .squarefree_divisors()
            .into_iter()
            .filter(|&(l, _)| gcd(l, b) == 1)
            .map(|(l, mu)| {
                let inv = mod_inverse(b % l, l).expect("gcd(l, b) = 1");
                let p0 = ((-(a as i128)) * inv as i128).rem_euclid(l as i128) as u64;
                (l, mu, p0)
            })
            .collect();
        let card = (density_from(&f, b) * Ratio::from_integer(q)).to_integer();
        Ok(Self { q, card, terms })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// `|I_q|` from the product formula.
    pub fn cardinality(&self) -> u64 {
        self.card
    }

    /// `S(q, k)` for `k >= 0`; negative `k` goes through conjugation.
    pub fn eval(&self, k: i64) -> Complex64 {
        if k < 0 {
            return self.eval_nonneg(k.unsigned_abs()).conj();
        }
        self.eval_nonneg(k as u64)
    }

    fn eval_nonneg(&self, k: u64) -> Complex64 {
        let q = self.q;
        let kq = k % q;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(l, mu, p0) in &self.terms {
            let ql = q / l;
            if kq % ql != 0 {
                continue;
            }
            let r = ((kq as u128 * p0 as u128) % q as u128) as u64;
            acc += unit_root(r, q) * (mu as f64 * ql as f64);
        }
        acc
    }

    /// `S(q, r)` for every residue `r = 0..q`.
    pub fn table(&self) -> Vec<Complex64> {
        (0..self.q).map(|r| self.eval_nonneg(r)).collect()
    }
}

/// `sum_{p in I_q} e(-k p / q)` via the Möbius divisor expansion.
pub fn ramanujan_sum_divisor(q: u64, k: i64, a: i64, b: u64) -> Result<Complex64> {
    Ok(RamanujanKernel::new(q, a, b)?.eval(k))
}

pub fn ramanujan_sum(q: u64, k: i64, a: i64, b: u64) -> Result<RamanujanSumValue> {
    let v = ramanujan_sum_divisor(q, k, a, b)?;
    Ok(RamanujanSumValue {
        q,
        k,
        a,
        b,
        re: v.re,
        im: v.im,
    })
}

/// `|S(q, k; a, b)| / (gcd(q, k) log q)`, the quantity bounded uniformly in
/// `a, b, q, k`.
pub fn grs_bound_ratio(q: u64, k: i64, a: i64, b: u64) -> Result<f64> {
    if q < 2 {
        return Err(Error::invalid("grs_bound_ratio needs q >= 2"));
    }
    if k < 1 {
        return Err(Error::invalid("grs_bound_ratio needs k >= 1"));
    }
    let s = ramanujan_sum_divisor(q, k, a, b)?;
    Ok(s.norm() / (gcd(q, k as u64) as f64 * (q as f64).ln()))
}
