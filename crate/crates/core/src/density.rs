//! Periodized bump densities: `Phi*_{q,theta}`, the bucket averages `g_M`
//! and the window `h0`, both in physical space and as Fourier data.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{is_admissible, unit_root, RamanujanKernel};
use crate::bump::{cardinal_bspline, envelope_tail, BumpSpec};
use crate::error::{Error, Result};
use crate::profile::{ApproximationProfile, Bucket, BucketTable};
use crate::series::TruncatedFourierSeries;

/// One translate `a N_m((x - c) / w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub c: f64,
    pub w: f64,
    pub a: f64,
}

impl Bump {
    #[inline]
    pub fn eval(&self, m: u32, x: f64) -> f64 {
        self.a * cardinal_bspline(m, (x - self.c) / self.w)
    }

    pub fn radius(&self, m: u32) -> f64 {
        0.5 * m as f64 * self.w
    }
}

/// `e(-x)` for real `x`, reducing `x` mod 1 first.
#[inline]
pub(crate) fn phase(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, -std::f64::consts::TAU * x.rem_euclid(1.0))
}

/// Per-modulus data of a bucket member.
#[derive(Debug, Clone)]
pub struct QTerm {
    pub q: u64,
    pub psi: f64,
    pub theta: f64,
    pub a: i64,
    pub b: u64,
    kernel: RamanujanKernel,
}

impl QTerm {
    pub fn new(profile: &ApproximationProfile, q: u64) -> Result<Self> {
        let psi = profile.psi(q);
        if psi <= 0.0 {
            return Err(Error::invalid(format!("psi({q}) = 0: density undefined")));
        }
        let (a, b) = profile.pair(q);
        Ok(Self {
            q,
            psi,
            theta: profile.theta(q),
            a,
            b,
            kernel: RamanujanKernel::new(q, a, b)?,
        })
    }

    pub fn card(&self) -> u64 {
        self.kernel.cardinality()
    }

    /// `(1/#I_q) e(-k theta/q) S(q, k) f^(psi k / q)`.
    pub fn phi_hat(&self, k: i64, spec: &BumpSpec) -> Complex64 {
        if k == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let q = self.q;
        let fh = spec.f_hat(self.psi * k as f64 / q as f64);
        let s = self.kernel.eval(k);
        let th = phase(k as f64 * self.theta / q as f64);
        th * s * (fh / self.card() as f64)
    }

    /// Half-width `shrink psi / q` of each bump.
    pub fn radius(&self, spec: &BumpSpec) -> f64 {
        spec.shrink * self.psi / self.q as f64
    }

    /// Visit every bump of `Phi*_q / weight_den` meeting `(lo, hi)`.
    pub fn for_each_bump(
        &self,
        spec: &BumpSpec,
        weight_den: f64,
        lo: f64,
        hi: f64,
        mut visit: impl FnMut(i64, Bump),
    ) {
        let q = self.q as f64;
        let r = self.radius(spec);
        let w = 2.0 * r / spec.m as f64;
        let amp = 1.0 / (weight_den * self.card() as f64 * w);
        let p_lo = (q * (lo - r) - self.theta).ceil() as i64;
        let p_hi = (q * (hi + r) - self.theta).floor() as i64;
        for p in p_lo..=p_hi {
            if !is_admissible(p, self.q, self.a, self.b) {
                continue;
            }
            let c = (p as f64 + self.theta) / q;
            if c + r > lo && c - r < hi {
                visit(p, Bump { c, w, a: amp });
            }
        }
    }
}

/// `Phi^_{q,theta}(k)` for a profile member `q`.
pub fn phi_hat(
    q: u64,
    k: i64,
    profile: &ApproximationProfile,
    spec: &BumpSpec,
) -> Result<Complex64> {
    Ok(QTerm::new(profile, q)?.phi_hat(k, spec))
}

/// The bucket average `g_M`.
#[derive(Debug, Clone)]
pub struct GFactor {
    pub m: u64,
    pub spec: BumpSpec,
    pub terms: Vec<QTerm>,
}

impl GFactor {
    pub fn from_bucket(profile: &ApproximationProfile, bucket: &Bucket, spec: BumpSpec) -> Result<Self> {
        if bucket.is_empty() {
            return Err(Error::NoAdmissibleScale { m: bucket.m });
        }
        let terms = bucket
            .members
            .iter()
            .map(|&q| QTerm::new(profile, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            m: bucket.m,
            spec,
            terms,
        })
    }

    pub fn new(profile: &ApproximationProfile, eta: f64, m: u64, spec: BumpSpec) -> Result<Self> {
        let b = BucketTable::new(profile, eta)?.bucket(m)?;
        Self::from_bucket(profile, &b, spec)
    }

    pub fn size(&self) -> usize {
        self.terms.len()
    }

    /// `g^_M(l)`.
    pub fn coefficient(&self, l: i64) -> Complex64 {
        let n = self.terms.len() as f64;
        self.terms
            .iter()
            .map(|t| t.phi_hat(l, &self.spec))
            .sum::<Complex64>()
            / n
    }

    /// `g^_M(l)` for `l = lo..=hi`.
    pub fn coefficients(&self, lo: i64, hi: i64) -> Vec<Complex64> {
        (lo..=hi)
            .into_par_iter()
            .map(|l| self.coefficient(l))
            .collect()
    }

    /// The largest `a_q = m q / (2 pi shrink psi(q))` over the bucket.
    pub fn envelope_scale(&self) -> f64 {
        let s = self.spec.f_hat_scale();
        self.terms
            .iter()
            .map(|t| s * t.q as f64 / t.psi)
            .fold(0.0, f64::max)
    }

    /// Smallest `L` whose envelope tail `sum_{|l| > L} max_q |f^(psi l/q)|`
    /// is below `tail_tol`, and that tail.
    pub fn half_bandwidth_for(&self, tail_tol: f64) -> (u64, f64) {
        let a = self.envelope_scale();
        let m = self.spec.m as f64;
        let l = (2.0 * a.powf(m) / ((m - 1.0) * tail_tol))
            .powf(1.0 / (m - 1.0))
            .ceil()
            .max(1.0);
        let tail = 2.0 * a.powf(m) * l.powf(1.0 - m) / (m - 1.0);
        (l as u64, tail)
    }

    /// The complete series `g_M` truncated at the envelope bandwidth.
    pub fn series(&self, tail_tol: f64, budget: u64) -> Result<TruncatedFourierSeries> {
        let (l, tail) = self.half_bandwidth_for(tail_tol);
        let requested = 2 * l + 1;
        if requested > budget {
            return Err(Error::BandwidthExceeded { requested, budget });
        }
        let l = l as i64;
        let half = self.coefficients(0, l);
        let w = TruncatedFourierSeries::window_from_half(&half, 0.0);
        Ok(TruncatedFourierSeries::complete(w.coeffs().to_vec(), tail))
    }

    /// Bumps of `g_M` meeting `(lo, hi)`.
    pub fn bumps_in(&self, lo: f64, hi: f64, out: &mut Vec<Bump>) {
        let n = self.terms.len() as f64;
        for t in &self.terms {
            t.for_each_bump(&self.spec, n, lo, hi, |_, b| out.push(b));
        }
    }

    /// `g_M(x)` from its bumps.
    pub fn value(&self, x: f64) -> f64 {
        let mut bumps = Vec::new();
        self.bumps_in(x, x, &mut bumps);
        bumps.iter().map(|b| b.eval(self.spec.m, x)).sum()
    }
}

/// `g_M` as a complete truncated series.
pub fn gm_series(
    m: u64,
    profile: &ApproximationProfile,
    eta: f64,
    spec: &BumpSpec,
    tail_tol: f64,
    budget: u64,
) -> Result<TruncatedFourierSeries> {
    GFactor::new(profile, eta, m, *spec)?.series(tail_tol, budget)
}

/// The single bump `h0` on `[0, 1]`.
pub fn h0_bump(spec: &BumpSpec) -> Bump {
    let m = spec.m as f64;
    Bump {
        c: 0.5,
        w: 1.0 / m,
        a: m,
    }
}

/// Periodized `h0` as a complete series with sup-norm tail below `tail_tol`.
pub fn h0_series(spec: &BumpSpec, tail_tol: f64) -> TruncatedFourierSeries {
    let a = spec.h0_hat_scale();
    let mut l = 1usize;
    while envelope_tail(a, spec.m, l as f64) > tail_tol {
        l += 1;
    }
    let tail = envelope_tail(a, spec.m, l as f64);
    let half: Vec<Complex64> = (0..=l).map(|k| spec.h0_hat(k as f64)).collect();
    let w = TruncatedFourierSeries::window_from_half(&half, 0.0);
    TruncatedFourierSeries::complete(w.coeffs().to_vec(), tail)
}

/// `e(-k x)` summed over a residue set, exposed for the demo and tests.
pub fn residue_phase_sum(members: &[u64], q: u64, k: i64) -> Complex64 {
    let kq = k.rem_euclid(q as i64) as u128;
    members
        .iter()
        .map(|&p| unit_root(((kq * p as u128) % q as u128) as u64, q))
        .sum()
}

/// Summary of one `g_M` factor used by a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub m: u64,
    pub size: usize,
    pub q_min: u64,
    pub q_max: u64,
    pub coeff0: f64,
}

impl From<&GFactor> for FactorSummary {
    fn from(g: &GFactor) -> Self {
        Self {
            m: g.m,
            size: g.size(),
            q_min: g.terms.first().map_or(0, |t| t.q),
            q_max: g.terms.last().map_or(0, |t| t.q),
            coeff0: g.coefficient(0).re,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::residue_set;
    use crate::profile::{power_law_profile, CoprimeRule};
    use std::f64::consts::TAU;

    fn gauss_legendre_oracle(f: impl Fn(f64) -> Complex64, a: f64, b: f64, n: usize) -> Complex64 {
        // composite Simpson on a fine grid
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += f(a + i as f64 * h) * w;
        }
        s * (h / 3.0)
    }

    /// Defining integral of `Phi_{q,theta}` against `e(-k x)`, over each bump.
    fn phi_hat_quadrature(profile: &ApproximationProfile, q: u64, k: i64, spec: &BumpSpec) -> Complex64 {
        let psi = profile.psi(q);
        let theta = profile.theta(q);
        let (a, b) = profile.pair(q);
        let set = residue_set(q, a, b).unwrap();
        let scale = psi / q as f64;
        let mut total = Complex64::new(0.0, 0.0);
        for &p in &set.members {
            let c = (p as f64 + theta) / q as f64;
            let g = |x: f64| {
                let v = spec.f((x - c) / scale) / scale;
                Complex64::from_polar(v, -TAU * k as f64 * x)
            };
            total += gauss_legendre_oracle(g, c - scale, c + scale, 4000);
        }
        total / set.len() as f64
    }

    #[test]
    fn phi_hat_matches_defining_integral() {
        let spec = BumpSpec::default();
        let p = power_law_profile(2.0, 2, 50, 0.0, CoprimeRule::Homogeneous).unwrap();
        let v = phi_hat(6, 1, &p, &spec).unwrap();
        let oracle = phi_hat_quadrature(&p, 6, 1, &spec);
        assert!((v - oracle).norm() < 1e-6);
        let expected = 0.5 * spec.f_hat(1.0 / 216.0);
        assert!((v.re - expected).abs() < 1e-12 && v.im.abs() < 1e-12);
        assert_eq!(phi_hat(6, 0, &p, &spec).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn phi_hat_sign_with_shift() {
        let spec = BumpSpec::default();
        let p = power_law_profile(1.0, 3, 30, 0.3, CoprimeRule::Constant { a: 1, b: 2 }).unwrap();
        for (q, k) in [(5u64, 1i64), (7, 3), (9, -2), (12, 40)] {
            let v = phi_hat(q, k, &p, &spec).unwrap();
            let oracle = phi_hat_quadrature(&p, q, k, &spec);
            assert!((v - oracle).norm() < 1e-6, "q={q} k={k}: {v} vs {oracle}");
            assert!(v.norm() <= spec.f_hat(p.psi(q) * k as f64 / q as f64).abs() + 1e-15);
        }
    }

    #[test]
    fn zero_psi_rejected() {
        let spec = BumpSpec::default();
        let p = power_law_profile(2.0, 2, 50, 0.0, CoprimeRule::Homogeneous).unwrap();
        assert!(phi_hat(60, 1, &p, &spec).is_err());
    }

    #[test]
    fn gm_physical_value_matches_series() {
        let spec = BumpSpec::default();
        let p = power_law_profile(1.0, 3, 200, 0.3, CoprimeRule::Homogeneous).unwrap();
        let g = GFactor::new(&p, 0.4, 4, spec).unwrap();
        assert!((g.coefficient(0) - 1.0).norm() < 1e-12);
        let s = g.series(1e-8, 1 << 20).unwrap();
        let tail = s.tail_bound().unwrap();
        for i in 0..37 {
            let x = i as f64 / 37.0 + 0.003;
            assert!((g.value(x) - s.eval(x)).abs() <= tail + 1e-9, "x = {x}");
        }
    }

    #[test]
    fn h0_series_basics() {
        let spec = BumpSpec::default();
        let s = h0_series(&spec, 1e-8);
        assert!((s.coeff(0) - 1.0).norm() < 1e-15);
        assert!(s.eval(0.5) > 0.0);
        for x in [0.1, 0.37, 0.5, 0.81] {
            assert!((s.eval(x) - spec.h0(x)).abs() < s.tail_bound().unwrap() + 1e-12);
        }
        // the integral of a trigonometric polynomial over a period is c(0)
        let n = 4096;
        let mean = s.grid_values(n).unwrap().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_bucket_is_rejected() {
        let spec = BumpSpec::default();
        let p = power_law_profile(2.0, 2, 50, 0.0, CoprimeRule::Homogeneous).unwrap();
        assert!(matches!(
            GFactor::new(&p, 0.3, 1 << 20, spec),
            Err(Error::NoAdmissibleScale { .. })
        ));
    }
}
