//! The B-spline bump `f` (m-fold self-convolution of a normalized box) and
//! the window `h0`, the same spline moved onto `[0, 1]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sin(x) / x`, equal to 1 at the origin.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Centered cardinal B-spline of order `m` (degree `m - 1`), supported on
/// `[-m/2, m/2]` with unit integral.
pub fn cardinal_bspline(m: u32, t: f64) -> f64 {
    let half = m as f64 / 2.0;
    let x = half - t.abs();
    if x <= 0.0 {
        return 0.0;
    }
    let d = (m - 1) as i32;
    let i = x.floor() as u32;
    let mut acc = 0.0;
    for j in 0..=i.min(m) {
        let term = binomial(m, j) * (x - j as f64).powi(d);
        if j % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    let fact: f64 = (1..m).map(|v| v as f64).product();
    acc / fact
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    /// Smoothness order `K`.
    pub k: u32,
    /// Convolution count `m = K + 2`.
    pub m: u32,
    /// Support of `f` is `[-shrink, shrink]`.
    pub shrink: f64,
}

impl Default for BumpSpec {
    fn default() -> Self {
        Self {
            k: 5,
            m: 7,
            shrink: 0.99,
        }
    }
}

impl BumpSpec {
    pub fn new(k: u32, shrink: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("K must be >= 1"));
        }
        if !(shrink > 0.0 && shrink < 1.0) {
            return Err(Error::invalid("shrink must lie in (0, 1)"));
        }
        Ok(Self { k, m: k + 2, shrink })
    }

    /// Smallest default-shaped spec with `K > s + 4`.
    pub fn for_exponent(s: f64) -> Self {
        let k = ((s + 4.0).floor() as u32 + 1).max(5);
        Self::new(k, 0.99).expect("valid")
    }

    pub fn check_order(&self, s: f64) -> Result<()> {
        if (self.k as f64) > s + 4.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "K = {} must exceed s + 4 = {}",
                self.k,
                s + 4.0
            )))
        }
    }

    /// `f^(xi) = sinc(2 pi shrink xi / m)^m`.
    pub fn f_hat(&self, xi: f64) -> f64 {
        sinc(2.0 * PI * self.shrink * xi / self.m as f64).powi(self.m as i32)
    }

    /// `a` with `|f^(xi)| <= min(1, (a / |xi|)^m)`.
    pub fn f_hat_scale(&self) -> f64 {
        self.m as f64 / (2.0 * PI * self.shrink)
    }

    /// `f(u) = (m / 2 shrink) N_m(m u / 2 shrink)`.
    pub fn f(&self, u: f64) -> f64 {
        let c = self.m as f64 / (2.0 * self.shrink);
        c * cardinal_bspline(self.m, c * u)
    }

    /// `h0(x) = m N_m(m (x - 1/2))`, supported on `[0, 1]`.
    pub fn h0(&self, x: f64) -> f64 {
        let m = self.m as f64;
        m * cardinal_bspline(self.m, m * (x - 0.5))
    }

    /// `h0^(xi) = e(-xi/2) sinc(pi xi / m)^m`.
    pub fn h0_hat(&self, xi: f64) -> Complex64 {
        let mag = sinc(PI * xi / self.m as f64).powi(self.m as i32);
        Complex64::from_polar(mag, -PI * xi)
    }

    /// `a` with `|h0^(xi)| <= (a / |xi|)^m`.
    pub fn h0_hat_scale(&self) -> f64 {
        self.m as f64 / PI
    }

    /// Upper bound for `sum |h0^(xi - l)|` over integers `l` with `|xi - l| > w`.
    pub fn h0_window_tail(&self, w: f64) -> f64 {
        envelope_tail(self.h0_hat_scale(), self.m, w)
    }

    /// `sup |f^(xi)| (1 + |xi|)^m` over a log-spaced grid up to `10^6`.
    pub fn c_f(&self) -> f64 {
        let n = 20_000;
        (0..=n)
            .map(|i| {
                let xi = 10f64.powf(-3.0 + 9.0 * i as f64 / n as f64);
                self.f_hat(xi).abs() * (1.0 + xi).powi(self.m as i32)
            })
            .fold(1.0, f64::max)
    }

    /// Knot offsets of `N_m` scaled by `w`: `w (j - m/2)`, `j = 0..=m`.
    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        let half = self.m as f64 / 2.0;
        (0..=self.m).map(move |j| j as f64 - half)
    }
}

/// `2 (a/w)^m + 2 a^m w^{1-m} / (m - 1)`, bounding both tails of
/// `sum (a / |t_l|)^m` over unit-spaced `t_l` with `|t_l| > w`.
pub fn envelope_tail(a: f64, m: u32, w: f64) -> f64 {
    let mf = m as f64;
    2.0 * (a / w).powf(mf) + 2.0 * a.powf(mf) * w.powf(1.0 - mf) / (mf - 1.0)
}
