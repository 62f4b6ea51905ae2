//! The approximation data `(Q, psi, theta, A_q, B_q)`, the critical exponent
//! `s(psi)`, dyadic buckets and the admissible scale set.

use serde::{Deserialize, Serialize};

use crate::arith::{coprime_density, gcd_signed};
use crate::error::{Error, Result};

/// Relative guard band for bucket boundaries in log space.
pub const BUCKET_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiSpec {
    /// `psi(q) = q^{-tau}`.
    PowerLaw { tau: f64 },
    /// `values[i] = psi(q_min + i)`.
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSpec {
    Constant { value: f64 },
    Table { values: Vec<f64> },
}

impl Default for ThetaSpec {
    fn default() -> Self {
        ThetaSpec::Constant { value: 0.0 }
    }
}

/// How `(A_q, B_q)` depends on `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoprimeRule {
    /// `(0, 1)` for every `q`.
    Homogeneous,
    /// `(1, q)` for every `q`.
    OneQ,
    Constant { a: i64, b: u64 },
    /// `pairs[i] = (A, B)` for `q = q_min + i`.
    Table { pairs: Vec<(i64, u64)> },
}

impl Default for CoprimeRule {
    fn default() -> Self {
        CoprimeRule::Homogeneous
    }
}

/// The subset `Q` of the window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QSet {
    #[default]
    All,
    Primes,
    Congruence { modulus: u64, residue: u64 },
    List { values: Vec<u64> },
}

/// Serialized form of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub psi: PsiSpec,
    #[serde(default)]
    pub theta: ThetaSpec,
    #[serde(default)]
    pub coprime: CoprimeRule,
    #[serde(default)]
    pub q_set: QSet,
    pub window: [u64; 2],
}

/// A validated, immutable profile. `psi` is forced to zero off `Q`.
#[derive(Debug, Clone)]
pub struct ApproximationProfile {
    spec: ProfileSpec,
    member_mask: Option<Vec<bool>>,
}

fn sieve_mask(lo: u64, hi: u64) -> Vec<bool> {
    let n = hi as usize;
    let mut is_p = vec![true; n + 1];
    is_p[0] = false;
    if n >= 1 {
        is_p[1] = false;
    }
    let mut i = 2;
    while i * i <= n {
        if is_p[i] {
            let mut j = i * i;
            while j <= n {
                is_p[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    is_p[lo as usize..=n].to_vec()
}

impl ApproximationProfile {
    pub fn new(spec: ProfileSpec) -> Result<Self> {
        let [lo, hi] = spec.window;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!(
                "window [{lo}, {hi}] must satisfy 1 <= q_min <= q_max"
            )));
        }
        let len = (hi - lo + 1) as usize;
        let check_len = |name: &str, n: usize| {
            if n != len {
                Err(Error::invalid(format!(
                    "{name} table has {n} entries, window has {len}"
                )))
            } else {
                Ok(())
            }
        };
        match &spec.psi {
            PsiSpec::PowerLaw { tau } => {
                if !(tau.is_finite() && *tau >= 1.0) {
                    return Err(Error::invalid("power law needs tau >= 1"));
                }
            }
            PsiSpec::Table { values } => check_len("psi", values.len())?,
        }
        if let ThetaSpec::Table { values } = &spec.theta {
            check_len("theta", values.len())?;
            if values.iter().any(|t| !t.is_finite()) {
                return Err(Error::invalid("theta must be finite"));
            }
        }
        if let ThetaSpec::Constant { value } = &spec.theta {
            if !value.is_finite() {
                return Err(Error::invalid("theta must be finite"));
            }
        }
        if let CoprimeRule::Table { pairs } = &spec.coprime {
            check_len("coprime", pairs.len())?;
        }
        let member_mask = match &spec.q_set {
            QSet::All | QSet::Congruence { .. } => None,
            QSet::Primes => Some(sieve_mask(lo, hi)),
            QSet::List { values } => {
                let mut m = vec![false; len];
                for &q in values.iter().filter(|&&q| q >= lo && q <= hi) {
                    m[(q - lo) as usize] = true;
                }
                Some(m)
            }
        };
        if let QSet::Congruence { modulus, residue } = spec.q_set {
            if modulus == 0 || residue >= modulus {
                return Err(Error::invalid("congruence needs 0 <= residue < modulus"));
            }
        }
        let p = Self { spec, member_mask };
        for q in p.members() {
            let psi = p.psi_raw(q);
            if !(psi.is_finite() && (0.0..0.5).contains(&psi)) {
                return Err(Error::invalid(format!(
                    "psi({q}) = {psi} is outside [0, 1/2)"
                )));
            }
            let (a, b) = p.pair(q);
            if b == 0 {
                return Err(Error::invalid(format!("B_{q} must be positive")));
            }
            if gcd_signed(a, b) != 1 {
                return Err(Error::NotCoprime { a, b });
            }
        }
        Ok(p)
    }

    pub fn spec(&self) -> &ProfileSpec {
        &self.spec
    }

    pub fn window(&self) -> (u64, u64) {
        (self.spec.window[0], self.spec.window[1])
    }

    pub fn in_window(&self, q: u64) -> bool {
        let (lo, hi) = self.window();
        q >= lo && q <= hi
    }

    pub fn is_member(&self, q: u64) -> bool {
        if !self.in_window(q) {
            return false;
        }
        let lo = self.spec.window[0];
        match (&self.spec.q_set, &self.member_mask) {
            (_, Some(mask)) => mask[(q - lo) as usize],
            (QSet::Congruence { modulus, residue }, None) => q % modulus == *residue,
            _ => true,
        }
    }

    pub fn members(&self) -> impl Iterator<Item = u64> + '_ {
        let (lo, hi) = self.window();
        (lo..=hi).filter(move |&q| self.is_member(q))
    }

    fn psi_raw(&self, q: u64) -> f64 {
        match &self.spec.psi {
            PsiSpec::PowerLaw { tau } => (q as f64).powf(-tau),
            PsiSpec::Table { values } => values[(q - self.spec.window[0]) as usize],
        }
    }

    /// `psi(q)`, zero off `Q` and outside the window.
    pub fn psi(&self, q: u64) -> f64 {
        if self.is_member(q) {
            self.psi_raw(q)
        } else {
            0.0
        }
    }

    /// `ln(psi(q)/q)`, or `None` where `psi(q) = 0`.
    pub fn log_ratio(&self, q: u64) -> Option<f64> {
        if !self.is_member(q) {
            return None;
        }
        match &self.spec.psi {
            PsiSpec::PowerLaw { tau } => Some(-(1.0 + tau) * (q as f64).ln()),
            PsiSpec::Table { .. } => {
                let v = self.psi_raw(q);
                (v > 0.0).then(|| v.ln() - (q as f64).ln())
            }
        }
    }

    pub fn theta(&self, q: u64) -> f64 {
        match &self.spec.theta {
            ThetaSpec::Constant { value } => *value,
            ThetaSpec::Table { values } => {
                if self.in_window(q) {
                    values[(q - self.spec.window[0]) as usize]
                } else {
                    0.0
                }
            }
        }
    }

    /// `(A_q, B_q)`.
    pub fn pair(&self, q: u64) -> (i64, u64) {
        match &self.spec.coprime {
            CoprimeRule::Homogeneous => (0, 1),
            CoprimeRule::OneQ => (1, q),
            CoprimeRule::Constant { a, b } => (*a, *b),
            CoprimeRule::Table { pairs } => {
                if self.in_window(q) {
                    pairs[(q - self.spec.window[0]) as usize]
                } else {
                    (0, 1)
                }
            }
        }
    }

    pub fn power_law_tau(&self) -> Option<f64> {
        match (&self.spec.psi, &self.spec.q_set) {
            (PsiSpec::PowerLaw { tau }, QSet::All) => Some(*tau),
            _ => None,
        }
    }

    /// `bucket index k` with `2^{-(k+1)} <= (psi/q)^eta < 2^{-k}`.
    pub fn bucket_index(&self, q: u64, eta: f64) -> Option<u32> {
        let lr = self.log_ratio(q)?;
        Some(bucket_index_from_log(lr, eta))
    }

    pub fn s_exponent(&self, mode: SMode) -> Result<SExponent> {
        s_exponent(self, mode)
    }

    /// `sum_{q <= n, q in Q} psi(q) prod_{p | q, p !| B_q} (1 - 1/p)`.
    pub fn convergence_series_partial(&self, n: u64) -> f64 {
        let (lo, hi) = self.window();
        if n < lo {
            return 0.0;
        }
        (lo..=n.min(hi))
            .filter(|&q| self.is_member(q))
            .map(|q| {
                let psi = self.psi_raw(q);
                if psi == 0.0 {
                    return 0.0;
                }
                let d = coprime_density(q, self.pair(q).1).expect("q >= 1");
                psi * (*d.numer() as f64 / *d.denom() as f64)
            })
            .sum()
    }
}

/// Bucket index from `ln(psi/q)`; near-integer boundaries go to the lower index.
pub fn bucket_index_from_log(log_ratio: f64, eta: f64) -> u32 {
    let t = -eta * log_ratio / std::f64::consts::LN_2;
    let n = t.round();
    let k = if (t - n).abs() <= BUCKET_GUARD * t.abs().max(1.0) {
        n - 1.0
    } else {
        t.ceil() - 1.0
    };
    k.max(0.0) as u32
}

/// `psi(q) = q^{-tau}` on `[q_min, q_max]`.
pub fn power_law_profile(
    tau: f64,
    q_min: u64,
    q_max: u64,
    theta_value: f64,
    coprime: CoprimeRule,
) -> Result<ApproximationProfile> {
    if !(tau >= 1.0) {
        return Err(Error::invalid("tau must be >= 1"));
    }
    if q_min < 2 {
        return Err(Error::invalid("q_min must be >= 2 (psi(1) = 1)"));
    }
    if (q_min as f64).powf(-tau) >= 0.5 {
        return Err(Error::invalid(format!(
            "psi({q_min}) = {q_min}^-{tau} is not below 1/2"
        )));
    }
    ApproximationProfile::new(ProfileSpec {
        psi: PsiSpec::PowerLaw { tau },
        theta: ThetaSpec::Constant { value: theta_value },
        coprime,
        q_set: QSet::All,
        window: [q_min, q_max],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SMode {
    Analytic,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SExponent {
    pub value: f64,
    pub mode: SMode,
    pub confidence: Confidence,
    /// Complete dyadic blocks used by the empirical classifier.
    pub blocks: usize,
}

fn s_exponent(p: &ApproximationProfile, mode: SMode) -> Result<SExponent> {
    match mode {
        SMode::Analytic => {
            let tau = p.power_law_tau().ok_or_else(|| {
                Error::invalid("analytic s(psi) is only available for power laws on Q = N")
            })?;
            Ok(SExponent {
                value: 1.0 / (1.0 + tau),
                mode,
                confidence: Confidence::High,
                blocks: 0,
            })
        }
        SMode::Empirical => Ok(s_empirical(p)),
    }
}

/// Dyadic block sums `B_j(s) = sum_{q in [2^j, 2^{j+1})} (psi/q)^s` are fitted
/// against `j` over the upper half of the complete blocks; the series is
/// classified divergent when the fitted growth rate is nonnegative.
fn s_empirical(p: &ApproximationProfile) -> SExponent {
    let (lo, hi) = p.window();
    let mut blocks: Vec<(u32, Vec<f64>)> = Vec::new();
    let mut j = lo.next_power_of_two().trailing_zeros();
    loop {
        let a = 1u64 << j;
        let b = match a.checked_mul(2) {
            Some(b) => b - 1,
            None => break,
        };
        if b > hi {
            break;
        }
        let logs: Vec<f64> = (a..=b).filter_map(|q| p.log_ratio(q)).collect();
        blocks.push((j, logs));
        j += 1;
    }
    let any_positive = p.members().any(|q| p.log_ratio(q).is_some());
    if !any_positive {
        return SExponent {
            value: 0.0,
            mode: SMode::Empirical,
            confidence: Confidence::High,
            blocks: blocks.len(),
        };
    }
    let used: Vec<&(u32, Vec<f64>)> = {
        let nonempty: Vec<_> = blocks.iter().filter(|(_, l)| !l.is_empty()).collect();
        let start = nonempty.len() / 2;
        nonempty[start..].to_vec()
    };
    let low = if used.len() < 3 {
        Confidence::Low
    } else if blocks.len() < 6 {
        Confidence::Low
    } else {
        Confidence::High
    };
    if used.len() < 2 {
        return SExponent {
            value: 0.0,
            mode: SMode::Empirical,
            confidence: Confidence::Low,
            blocks: blocks.len(),
        };
    }
    let divergent = |s: f64| {
        let pts: Vec<(f64, f64)> = used
            .iter()
            .map(|(j, logs)| {
                let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * s;
                let sum: f64 = logs.iter().map(|l| (l * s - m).exp()).sum();
                (*j as f64, m + sum.ln())
            })
            .collect();
        least_squares_slope(&pts) >= 0.0
    };
    let (mut a, mut b) = (0.0f64, 1.0f64);
    if divergent(1.0) {
        return SExponent {
            value: 1.0,
            mode: SMode::Empirical,
            confidence: Confidence::Low,
            blocks: blocks.len(),
        };
    }
    if !divergent(0.0) {
        return SExponent {
            value: 0.0,
            mode: SMode::Empirical,
            confidence: low,
            blocks: blocks.len(),
        };
    }
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if divergent(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    SExponent {
        value: 0.5 * (a + b),
        mode: SMode::Empirical,
        confidence: low,
        blocks: blocks.len(),
    }
}

/// Slope of the least-squares line through `(x, y)` points.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub eta: f64,
    pub k: u32,
    pub m: u64,
    pub members: Vec<u64>,
    /// `sum (psi(q)/q)^eta` over the members.
    pub mass: f64,
}

impl Bucket {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// All buckets of the window for one `eta`, from a single pass over `q`.
#[derive(Debug, Clone)]
pub struct BucketTable {
    pub eta: f64,
    buckets: Vec<Bucket>,
    /// Bucket indices of the first and last `q` with `psi(q) > 0`.
    edge: Option<(u32, u32)>,
}

impl BucketTable {
    pub fn new(profile: &ApproximationProfile, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid("eta must lie in (0, 1]"));
        }
        let mut buckets: Vec<Bucket> = Vec::new();
        let mut edge: Option<(u32, u32)> = None;
        for q in profile.members() {
            let Some(lr) = profile.log_ratio(q) else {
                continue;
            };
            let k = bucket_index_from_log(lr, eta);
            edge = Some(match edge {
                None => (k, k),
                Some((a, _)) => (a, k),
            });
            if k > 62 {
                continue;
            }
            while buckets.len() <= k as usize {
                let kk = buckets.len() as u32;
                buckets.push(Bucket {
                    eta,
                    k: kk,
                    m: 1u64 << kk,
                    members: Vec::new(),
                    mass: 0.0,
                });
            }
            let b = &mut buckets[k as usize];
            b.members.push(q);
            b.mass += (eta * lr).exp();
        }
        Ok(Self {
            eta,
            buckets,
            edge,
        })
    }

    pub fn bucket(&self, m: u64) -> Result<Bucket> {
        if !m.is_power_of_two() {
            return Err(Error::invalid(format!("M = {m} is not a power of two")));
        }
        let k = m.trailing_zeros();
        Ok(self.buckets.get(k as usize).cloned().unwrap_or(Bucket {
            eta: self.eta,
            k,
            m,
            members: Vec::new(),
            mass: 0.0,
        }))
    }

    /// Whether bucket `k` cannot have members outside the window. Assumes
    /// `psi(q)/q` is nonincreasing in `q`, which holds for power laws.
    pub fn is_complete(&self, k: u32) -> bool {
        match self.edge {
            Some((lo, hi)) => lo < k && k < hi,
            None => true,
        }
    }
}

pub fn bucket(profile: &ApproximationProfile, eta: f64, m: u64) -> Result<Bucket> {
    BucketTable::new(profile, eta)?.bucket(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub k: u32,
    pub m: u64,
    pub bucket_mass: f64,
    pub size: usize,
    /// `#Q(M) / (M / (ln M)^2)`.
    pub size_ratio: f64,
    pub qualifies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub eta: f64,
    /// Qualifying scales with complete buckets.
    pub admissible: Vec<ScaleEntry>,
    /// Every complete bucket `1 <= k <= k_max`, qualifying or not.
    pub rows: Vec<ScaleEntry>,
    /// Indices whose bucket is cut by the window edge.
    pub window_limited: Vec<u32>,
    pub low_confidence: bool,
}

impl ScaleSet {
    pub fn scales(&self) -> impl Iterator<Item = u64> + '_ {
        self.admissible.iter().map(|e| e.m)
    }
}

pub fn scale_set_from(table: &BucketTable, k_max: u32, eta_at_or_above_s: bool) -> ScaleSet {
    let mut rows = Vec::new();
    let mut window_limited = Vec::new();
    for k in 1..=k_max {
        if !table.is_complete(k) {
            window_limited.push(k);
            continue;
        }
        let b = table.bucket(1u64 << k).expect("power of two");
        let m = b.m as f64;
        let ln_m = m.ln();
        let qualifies = b.mass >= 1.0 / (k as f64 * k as f64);
        rows.push(ScaleEntry {
            k,
            m: b.m,
            bucket_mass: b.mass,
            size: b.len(),
            size_ratio: b.len() as f64 / (m / (ln_m * ln_m)),
            qualifies,
        });
    }
    let admissible: Vec<ScaleEntry> = rows.iter().filter(|r| r.qualifies).cloned().collect();
    ScaleSet {
        eta: table.eta,
        low_confidence: eta_at_or_above_s || admissible.is_empty(),
        admissible,
        rows,
        window_limited,
    }
}

/// The admissible scales `M = 2^k <= 2^{k_max}` with bucket mass `>= 1/k^2`
/// and complete buckets. Flags low confidence when `eta >= s(psi)`.
pub fn scale_set(profile: &ApproximationProfile, eta: f64, k_max: u32) -> Result<ScaleSet> {
    let table = BucketTable::new(profile, eta)?;
    let s = profile
        .s_exponent(SMode::Analytic)
        .or_else(|_| profile.s_exponent(SMode::Empirical))?;
    Ok(scale_set_from(&table, k_max, eta >= s.value))
}

/// Default `eta = 0.9 s(psi)`.
pub fn default_eta(s: f64) -> f64 {
    0.9 * s
}
