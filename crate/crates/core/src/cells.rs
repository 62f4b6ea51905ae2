//! Physical-space quadrature of products of bump densities.
//!
//! The support of `h0 g_{M_1} ... g_{M_k}` (or of the periodic product
//! without `h0`) is the intersection of the bump supports of its factors.
//! That set is assembled factor by factor as a list of cells on `[0, 1)`;
//! on each cell, after splitting at spline knots, the integrand is a
//! polynomial of degree `(m - 1) * factors`, so Gauss-Legendre rules
//! integrate it exactly. Fourier transforms are assembled from Taylor
//! moments over clusters of cells that are short relative to the largest
//! frequency requested.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bump::BumpSpec;
use crate::density::{h0_bump, phase, Bump, GFactor};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let p = if n == 0 { 1.0 } else { p1 };
                let pm1 = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }
}

const MAX_RULE: usize = 96;

fn rule(n: usize) -> &'static GaussLegendre {
    static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=MAX_RULE).map(|k| GaussLegendre::new(k.max(1))).collect());
    &rules[n.clamp(1, MAX_RULE)]
}

#[derive(Debug, Clone)]
struct Piece {
    lo: f64,
    hi: f64,
    /// Bumps of each factor meeting the piece.
    active: Vec<Vec<Bump>>,
}

/// Polynomial sub-interval of a piece.
#[derive(Debug, Clone, Copy)]
struct Cell {
    lo: f64,
    hi: f64,
    piece: usize,
}

#[derive(Debug, Clone)]
struct Cluster {
    xc: f64,
    hc: f64,
    /// `i^n mu_n / n!` with `mu_n = int F(x) ((x - xc)/hc)^n dx`.
    taylor: Vec<Complex64>,
}

impl Cluster {
    #[inline]
    fn eval(&self, z: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in self.taylor.iter().rev() {
            acc = acc * z + a;
        }
        acc
    }
}

/// Split `piece` into the connected components of its intersection with
/// the supports of `bumps` (sorted by left end).
fn split_piece(piece: &Piece, bumps: impl Iterator<Item = Bump>, m: u32, res: &mut Vec<Piece>) {
    let flush = |s: f64, e: f64, comp: &mut Vec<Bump>, res: &mut Vec<Piece>| {
        if e > s {
            let mut active: Vec<Vec<Bump>> = piece
                .active
                .iter()
                .map(|f| {
                    f.iter()
                        .filter(|b| b.c - b.radius(m) < e && b.c + b.radius(m) > s)
                        .copied()
                        .collect()
                })
                .collect();
            active.push(std::mem::take(comp));
            res.push(Piece { lo: s, hi: e, active });
        } else {
            comp.clear();
        }
    };
    let mut comp: Vec<Bump> = Vec::new();
    let (mut s, mut e) = (0.0, 0.0);
    for b in bumps {
        let r = b.radius(m);
        let bs = (b.c - r).max(piece.lo);
        let be = (b.c + r).min(piece.hi);
        if !comp.is_empty() && bs >= e {
            flush(s, e, &mut comp, res);
        }
        if comp.is_empty() {
            s = bs;
            e = be;
        } else {
            e = e.max(be);
        }
        comp.push(b);
    }
    flush(s, e, &mut comp, res);
}

/// Support cells of a product of bump densities on `[0, 1)`.
#[derive(Debug, Clone)]
pub struct Support {
    m: u32,
    factors: usize,
    pieces: Vec<Piece>,
}

impl Support {
    /// The constant density 1 on `[0, 1)`.
    pub fn unit(spec: &BumpSpec) -> Self {
        Self {
            m: spec.m,
            factors: 0,
            pieces: vec![Piece {
                lo: 0.0,
                hi: 1.0,
                active: Vec::new(),
            }],
        }
    }

    /// `h0` on `[0, 1]`.
    pub fn h0(spec: &BumpSpec) -> Self {
        Self {
            m: spec.m,
            factors: 1,
            pieces: vec![Piece {
                lo: 0.0,
                hi: 1.0,
                active: vec![vec![h0_bump(spec)]],
            }],
        }
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Lebesgue measure of the support.
    pub fn length(&self) -> f64 {
        self.pieces.iter().map(|p| p.hi - p.lo).sum()
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pieces.iter().map(|p| (p.lo, p.hi))
    }

    /// Multiply by `g`.
    pub fn refine(&self, g: &GFactor) -> Support {
        let m = self.m;
        // Pieces closer together than a fraction of the smallest center
        // spacing of `g` share one bump enumeration.
        let q_max = g.terms.iter().map(|t| t.q).max().unwrap_or(1);
        let span = 0.125 / q_max as f64;
        let mut groups = Vec::new();
        let mut i0 = 0;
        for i in 1..=self.pieces.len() {
            if i == self.pieces.len() || self.pieces[i].hi - self.pieces[i0].lo > span {
                groups.push((i0, i));
                i0 = i;
            }
        }
        let out: Vec<Vec<Piece>> = groups
            .par_iter()
            .map(|&(i0, i1)| {
                let group = &self.pieces[i0..i1];
                let mut near = Vec::new();
                g.bumps_in(group[0].lo, group[group.len() - 1].hi, &mut near);
                let mut res = Vec::new();
                if near.is_empty() {
                    return res;
                }
                near.sort_by(|a, b| (a.c - a.radius(m)).total_cmp(&(b.c - b.radius(m))));
                for piece in group {
                    let bumps = near
                        .iter()
                        .filter(|b| b.c + b.radius(m) > piece.lo && b.c - b.radius(m) < piece.hi)
                        .copied();
                    split_piece(piece, bumps, m, &mut res);
                }
                res
            })
            .collect();
        Support {
            m,
            factors: self.factors + 1,
            pieces: out.into_iter().flatten().collect(),
        }
    }

    #[inline]
    fn integrand(&self, piece: &Piece, x: f64) -> f64 {
        let m = self.m;
        piece
            .active
            .iter()
            .map(|f| f.iter().map(|b| b.eval(m, x)).sum::<f64>())
            .product()
    }

    fn degree(&self) -> usize {
        (self.m as usize - 1) * self.factors
    }

    fn cells(&self) -> Vec<Cell> {
        let half = self.m as f64 / 2.0;
        let mut out = Vec::new();
        let mut knots = Vec::new();
        for (idx, p) in self.pieces.iter().enumerate() {
            knots.clear();
            knots.push(p.lo);
            knots.push(p.hi);
            for b in p.active.iter().flatten() {
                for j in 0..=self.m {
                    let t = b.c + b.w * (j as f64 - half);
                    if t > p.lo && t < p.hi {
                        knots.push(t);
                    }
                }
            }
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            for w in knots.windows(2) {
                if w[1] > w[0] {
                    out.push(Cell {
                        lo: w[0],
                        hi: w[1],
                        piece: idx,
                    });
                }
            }
        }
        out
    }

    fn integrate_cell(&self, c: &Cell, lo: f64, hi: f64) -> f64 {
        let g = rule(self.degree() / 2 + 1);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let piece = &self.pieces[c.piece];
        g.nodes
            .iter()
            .zip(&g.weights)
            .map(|(t, w)| w * self.integrand(piece, mid + half * t))
            .sum::<f64>()
            * half
    }

    /// `int F`.
    pub fn mass(&self) -> f64 {
        let cells = self.cells();
        cells
            .par_chunks(1024)
            .map(|ch| ch.iter().map(|c| self.integrate_cell(c, c.lo, c.hi)).sum::<f64>())
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    }

    /// `int F` over the part of the support inside the intervals returned by
    /// `arcs(lo, hi)`, which must be disjoint.
    pub fn mass_within<A>(&self, arcs: A) -> f64
    where
        A: Fn(f64, f64) -> Vec<(f64, f64)> + Sync,
    {
        let cells = self.cells();
        cells
            .par_chunks(1024)
            .map(|ch| {
                ch.iter()
                    .map(|c| {
                        arcs(c.lo, c.hi)
                            .into_iter()
                            .map(|(a, b)| {
                                let (lo, hi) = (a.max(c.lo), b.min(c.hi));
                                if hi > lo {
                                    self.integrate_cell(c, lo, hi)
                                } else {
                                    0.0
                                }
                            })
                            .sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    }

    /// `F(x)` for `x` in `[0, 1)`.
    pub fn density(&self, x: f64) -> f64 {
        let idx = self.pieces.partition_point(|p| p.lo <= x);
        if idx == 0 {
            return 0.0;
        }
        let p = &self.pieces[idx - 1];
        if x >= p.hi {
            return 0.0;
        }
        self.integrand(p, x)
    }

    /// The `i`-th piece bounds, for sampling.
    pub fn piece_bounds(&self, i: usize) -> (f64, f64) {
        (self.pieces[i].lo, self.pieces[i].hi)
    }

    fn clusters(&self, max_freq: f64) -> Vec<Cluster> {
        let span = if max_freq > 0.0 {
            1.0 / (PI * max_freq)
        } else {
            f64::INFINITY
        };
        let mut parts: Vec<(f64, f64, usize)> = Vec::new();
        for c in self.cells() {
            let w = c.hi - c.lo;
            let n = if w > span { (w / span).ceil() as usize } else { 1 };
            for i in 0..n {
                let lo = c.lo + w * i as f64 / n as f64;
                let hi = if i + 1 == n {
                    c.hi
                } else {
                    c.lo + w * (i + 1) as f64 / n as f64
                };
                parts.push((lo, hi, c.piece));
            }
        }
        let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
        let mut start = 0;
        for i in 1..=parts.len() {
            if i == parts.len() || parts[i].1 - parts[start].0 > span {
                groups.push(start..i);
                start = i;
            }
        }
        let deg = self.degree();
        groups
            .par_iter()
            .map(|r| {
                let lo = parts[r.start].0;
                let hi = parts[r.end - 1].1;
                let xc = 0.5 * (lo + hi);
                let hc = (0.5 * (hi - lo)).max(f64::MIN_POSITIVE);
                let z = TAU * max_freq * hc;
                let mut n_terms = 1usize;
                let mut term = z;
                while term > 1e-17 && n_terms < 40 {
                    n_terms += 1;
                    term *= z / n_terms as f64;
                }
                let g = rule((deg + n_terms) / 2 + 1);
                let mut mu = vec![0.0f64; n_terms];
                for &(a, b, piece) in &parts[r.clone()] {
                    let mid = 0.5 * (a + b);
                    let half = 0.5 * (b - a);
                    let pc = &self.pieces[piece];
                    for (t, w) in g.nodes.iter().zip(&g.weights) {
                        let x = mid + half * t;
                        let fw = w * half * self.integrand(pc, x);
                        let u = (x - xc) / hc;
                        let mut un = 1.0;
                        for v in mu.iter_mut() {
                            *v += fw * un;
                            un *= u;
                        }
                    }
                }
                let mut fact = 1.0;
                let taylor = mu
                    .iter()
                    .enumerate()
                    .map(|(n, &v)| {
                        if n > 0 {
                            fact *= n as f64;
                        }
                        let i_n = match n % 4 {
                            0 => Complex64::new(1.0, 0.0),
                            1 => Complex64::new(0.0, 1.0),
                            2 => Complex64::new(-1.0, 0.0),
                            _ => Complex64::new(0.0, -1.0),
                        };
                        i_n * (v / fact)
                    })
                    .collect();
                Cluster { xc, hc, taylor }
            })
            .collect()
    }

    /// `int F(x) e(-xi x) dx` at every `xi`.
    pub fn fourier(&self, xis: &[f64]) -> Vec<Complex64> {
        let max_freq = xis.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let clusters = self.clusters(max_freq);
        xis.par_iter()
            .map(|&xi| {
                clusters
                    .iter()
                    .map(|c| phase(xi * c.xc) * c.eval(-TAU * xi * c.hc))
                    .sum()
            })
            .collect()
    }

    /// `int F(x) e(-l x) dx` for `l = 0..=l_max`.
    pub fn fourier_lattice(&self, l_max: usize) -> Vec<Complex64> {
        const BLOCK: usize = 2048;
        let clusters = self.clusters(l_max as f64);
        let blocks: Vec<usize> = (0..=l_max).step_by(BLOCK).collect();
        blocks
            .par_iter()
            .map(|&l0| {
                let l1 = (l0 + BLOCK).min(l_max + 1);
                let mut out = vec![Complex64::new(0.0, 0.0); l1 - l0];
                for c in &clusters {
                    let rot = phase(c.xc);
                    let mut cur = phase(l0 as f64 * c.xc);
                    for (i, slot) in out.iter_mut().enumerate() {
                        let l = (l0 + i) as f64;
                        *slot += cur * c.eval(-TAU * l * c.hc);
                        cur *= rot;
                    }
                }
                out
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }
}
