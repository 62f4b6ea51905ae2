//! Truncated Fourier series of 1-periodic real densities.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients `c(l)`, `|l| <= L`, of `x -> sum c(l) e(l x)`.
///
/// A series is either complete, with `tail_bound` bounding the sup norm of
/// everything beyond `L`, or a window: the coefficients are exact (up to
/// `coeff_error` each) but nothing is claimed about `|l| > L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedFourierSeries {
    half_bandwidth: usize,
    coeffs: Vec<Complex64>,
    tail_bound: Option<f64>,
    coeff_error: f64,
}

impl TruncatedFourierSeries {
    /// `coeffs[i]` is `c(i - L)`; the length must be odd.
    pub fn complete(coeffs: Vec<Complex64>, tail_bound: f64) -> Self {
        assert!(coeffs.len() % 2 == 1, "coefficient vector must have odd length");
        Self {
            half_bandwidth: coeffs.len() / 2,
            coeffs,
            tail_bound: Some(tail_bound),
            coeff_error: 0.0,
        }
    }

    pub fn window(coeffs: Vec<Complex64>, coeff_error: f64) -> Self {
        assert!(coeffs.len() % 2 == 1, "coefficient vector must have odd length");
        Self {
            half_bandwidth: coeffs.len() / 2,
            coeffs,
            tail_bound: None,
            coeff_error,
        }
    }

    /// Window from the nonnegative half `c(0..=L)`, extended by conjugation.
    pub fn window_from_half(half: &[Complex64], coeff_error: f64) -> Self {
        let l = half.len() - 1;
        let coeffs = (0..=2 * l)
            .map(|i| {
                if i >= l {
                    half[i - l]
                } else {
                    half[l - i].conj()
                }
            })
            .collect();
        Self::window(coeffs, coeff_error)
    }

    pub fn constant(c: f64) -> Self {
        Self::complete(vec![Complex64::new(c, 0.0)], 0.0)
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn tail_bound(&self) -> Option<f64> {
        self.tail_bound
    }

    pub fn coeff_error(&self) -> f64 {
        self.coeff_error
    }

    pub fn is_window(&self) -> bool {
        self.tail_bound.is_none()
    }

    /// `c(l)`, zero outside the stored range.
    pub fn coeff(&self, l: i64) -> Complex64 {
        let big_l = self.half_bandwidth as i64;
        if l.abs() > big_l {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(l + big_l) as usize]
        }
    }

    pub fn nonnegative_half(&self) -> &[Complex64] {
        &self.coeffs[self.half_bandwidth..]
    }

    pub fn l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let l = self.half_bandwidth as i64;
        (1..=l).all(|k| (self.coeff(k) - self.coeff(-k).conj()).norm() <= tol)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            half_bandwidth: self.half_bandwidth,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            tail_bound: self.tail_bound.map(|t| t * s.abs()),
            coeff_error: self.coeff_error * s.abs(),
        }
    }

    /// Real part of the partial sum at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let l = self.half_bandwidth as i64;
        let mut acc = self.coeff(0).re;
        let rot = Complex64::from_polar(1.0, TAU * x);
        let mut cur = Complex64::new(1.0, 0.0);
        for k in 1..=l {
            if k % 256 == 0 {
                cur = Complex64::from_polar(1.0, TAU * (k as f64 * x).rem_euclid(1.0));
            } else {
                cur *= rot;
            }
            acc += 2.0 * (self.coeff(k) * cur).re;
        }
        acc
    }

    /// Partial sum at `x_j = j / n`, `j = 0..n`, by one inverse FFT. Needs
    /// `n >= 2 L + 1`.
    pub fn grid_values(&self, n: usize) -> Result<Vec<f64>> {
        if n < 2 * self.half_bandwidth + 1 {
            return Err(Error::invalid(format!(
                "grid of {n} points aliases a series of half bandwidth {}",
                self.half_bandwidth
            )));
        }
        let l = self.half_bandwidth as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in -l..=l {
            buf[k.rem_euclid(n as i64) as usize] = self.coeff(k);
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        Ok(buf.into_iter().map(|c| c.re).collect())
    }

    /// Coefficients `c(l)`, `|l| <= min(L, n/2)`, of the trigonometric
    /// interpolant of grid values `v_j = v(j / n)`.
    pub fn from_grid(values: &[f64], half_bandwidth: usize) -> Self {
        let n = values.len();
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let l = half_bandwidth as i64;
        let coeffs = (-l..=l)
            .map(|k| buf[k.rem_euclid(n as i64) as usize] / n as f64)
            .collect();
        Self::complete(coeffs, 0.0)
    }
}

const DIRECT_LIMIT: usize = 1 << 16;

/// Linear convolution `out[i + j] += a[i] b[j]`.
pub fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 || a.len() * b.len() <= DIRECT_LIMIT {
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let size = n.next_power_of_two();
    let mut fa = a.to_vec();
    fa.resize(size, Complex64::new(0.0, 0.0));
    let mut fb = b.to_vec();
    fb.resize(size, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    planner.plan_fft_inverse(size).process(&mut fa);
    let scale = 1.0 / size as f64;
    fa.truncate(n);
    fa.iter_mut().for_each(|x| *x *= scale);
    fa
}

/// Product of two complete series. The result has `L = L_a + L_b`; the tail
/// bound is `t_a |b|_1 + t_b |a|_1 + t_a t_b`.
pub fn series_multiply(
    a: &TruncatedFourierSeries,
    b: &TruncatedFourierSeries,
    budget: u64,
) -> Result<TruncatedFourierSeries> {
    let (Some(ta), Some(tb)) = (a.tail_bound, b.tail_bound) else {
        return Err(Error::WindowedOperand);
    };
    let l = a.half_bandwidth + b.half_bandwidth;
    let requested = (2 * l + 1) as u64;
    if requested > budget {
        return Err(Error::BandwidthExceeded { requested, budget });
    }
    let mut coeffs = convolve(&a.coeffs, &b.coeffs);
    // restore exact conjugate symmetry lost to FFT rounding
    for k in 1..=l {
        let (lo, hi) = (l - k, l + k);
        let avg = 0.5 * (coeffs[hi] + coeffs[lo].conj());
        coeffs[hi] = avg;
        coeffs[lo] = avg.conj();
    }
    coeffs[l].im = 0.0;
    let tail = ta * b.l1() + tb * a.l1() + ta * tb;
    Ok(TruncatedFourierSeries {
        half_bandwidth: l,
        coeffs,
        tail_bound: Some(tail),
        coeff_error: a.coeff_error + b.coeff_error,
    })
}
