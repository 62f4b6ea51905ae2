//! Browser bindings: Ramanujan spectra and `g_M` densities for the
//! power-law profile `psi(q) = q^{-tau}`.
//!
//! Every export has a plain Rust counterpart so the numerics can be tested
//! natively.

use fdim_core::arith::{residue_set, RamanujanKernel};
use fdim_core::bump::BumpSpec;
use fdim_core::density::GFactor;
use fdim_core::profile::{power_law_profile, CoprimeRule};
use wasm_bindgen::prelude::*;

/// Largest window accepted from the page.
pub const MAX_Q: u64 = 200_000;
pub const MAX_POINTS: usize = 1 << 16;

fn check(what: &str, v: u64, max: u64) -> fdim_core::Result<()> {
    if v == 0 || v > max {
        return Err(fdim_core::Error::InvalidArgument(format!(
            "{what} must lie in 1..={max}"
        )));
    }
    Ok(())
}

/// `|S(q, k)|` for `k = 0..=k_max`.
pub fn ramanujan_abs(q: u64, a: i64, b: u64, k_max: u64) -> fdim_core::Result<Vec<f64>> {
    check("q", q, MAX_Q)?;
    check("k_max + 1", k_max + 1, MAX_POINTS as u64)?;
    let kernel = RamanujanKernel::new(q, a, b)?;
    Ok((0..=k_max as i64).map(|k| kernel.eval(k).norm()).collect())
}

/// Admissible numerators `p` modulo `q`.
pub fn residues(q: u64, a: i64, b: u64) -> fdim_core::Result<Vec<u64>> {
    check("q", q, MAX_Q)?;
    Ok(residue_set(q, a, b)?.members)
}

fn factor(tau: f64, theta: f64, eta: f64, m: u64, q_max: u64) -> fdim_core::Result<GFactor> {
    check("q_max", q_max, MAX_Q)?;
    let profile = power_law_profile(tau, 2, q_max.max(2), theta, CoprimeRule::Homogeneous)?;
    GFactor::new(&profile, eta, m, BumpSpec::default())
}

/// `g_M` at `lo + (hi - lo) i / points`, `i < points`.
pub fn gm_density(
    tau: f64,
    theta: f64,
    eta: f64,
    m: u64,
    q_max: u64,
    lo: f64,
    hi: f64,
    points: usize,
) -> fdim_core::Result<Vec<f64>> {
    check("points", points as u64, MAX_POINTS as u64)?;
    if !(lo < hi) {
        return Err(fdim_core::Error::InvalidArgument("need lo < hi".into()));
    }
    let g = factor(tau, theta, eta, m, q_max)?;
    let step = (hi - lo) / points as f64;
    Ok((0..points)
        .map(|i| g.value((lo + step * i as f64).rem_euclid(1.0)))
        .collect())
}

/// `|g^_M(l)|` for `l = 0..=l_max`.
pub fn gm_spectrum(
    tau: f64,
    theta: f64,
    eta: f64,
    m: u64,
    q_max: u64,
    l_max: u64,
) -> fdim_core::Result<Vec<f64>> {
    check("l_max + 1", l_max + 1, MAX_POINTS as u64)?;
    let g = factor(tau, theta, eta, m, q_max)?;
    Ok(g.coefficients(0, l_max as i64).iter().map(|c| c.norm()).collect())
}

fn js(e: fdim_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen(js_name = ramanujanAbs)]
pub fn ramanujan_abs_js(q: u32, a: i32, b: u32, k_max: u32) -> Result<Vec<f64>, JsValue> {
    ramanujan_abs(q as u64, a as i64, b as u64, k_max as u64).map_err(js)
}

#[wasm_bindgen(js_name = residues)]
pub fn residues_js(q: u32, a: i32, b: u32) -> Result<Vec<u32>, JsValue> {
    residues(q as u64, a as i64, b as u64)
        .map(|v| v.into_iter().map(|p| p as u32).collect())
        .map_err(js)
}

#[wasm_bindgen(js_name = gmDensity)]
#[allow(clippy::too_many_arguments)]
pub fn gm_density_js(
    tau: f64,
    theta: f64,
    eta: f64,
    m: u32,
    q_max: u32,
    lo: f64,
    hi: f64,
    points: u32,
) -> Result<Vec<f64>, JsValue> {
    gm_density(tau, theta, eta, m as u64, q_max as u64, lo, hi, points as usize).map_err(js)
}

#[wasm_bindgen(js_name = gmSpectrum)]
pub fn gm_spectrum_js(
    tau: f64,
    theta: f64,
    eta: f64,
    m: u32,
    q_max: u32,
    l_max: u32,
) -> Result<Vec<f64>, JsValue> {
    gm_spectrum(tau, theta, eta, m as u64, q_max as u64, l_max as u64).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_sums() {
        // c_6(k) for k = 0..6: 2, 1, -1, -2, -1, 1, 2
        let v = ramanujan_abs(6, 0, 1, 6).unwrap();
        let want = [2.0, 1.0, 1.0, 2.0, 1.0, 1.0, 2.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(residues(6, 1, 2).unwrap(), vec![0, 2, 3, 5]);
    }

    #[test]
    fn density_has_unit_mean() {
        let n = 1 << 14;
        let v = gm_density(2.0, 0.3, 0.3, 4, 1000, 0.0, 1.0, n).unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        assert!(v.iter().all(|&x| x >= 0.0));
        assert!((mean - 1.0).abs() < 1e-3, "{mean}");
        let s = gm_spectrum(2.0, 0.3, 0.3, 4, 1000, 8).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ramanujan_abs(6, 2, 4, 3).is_err());
        assert!(gm_density(2.0, 0.3, 0.3, 4, 1000, 1.0, 0.0, 10).is_err());
        assert!(gm_spectrum(2.0, 0.3, 0.3, 3, 1000, 8).is_err());
        assert!(residues(0, 0, 1).is_err());
    }
}
