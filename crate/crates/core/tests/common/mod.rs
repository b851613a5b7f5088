//! Closed-form oracles built from Laurent coefficients of the circle averages,
//! independent of the exact backend and of the quadrature.
#![allow(dead_code, non_snake_case)]

use dbar_core::exact::MonomialPoly;
use dbar_core::C64;

pub type Terms = Vec<(Vec<(u32, u32)>, C64)>;

pub fn terms(p: &MonomialPoly) -> Terms {
    p.terms().map(|(e, c)| (e.clone(), c.to_c64())).collect()
}

fn powi(z: C64, k: i32) -> C64 {
    if k >= 0 {
        z.powu(k as u32)
    } else {
        z.inv().powu((-k) as u32)
    }
}

fn mono_eval(e: &[(u32, u32)], z: &[C64], skip: &[usize]) -> C64 {
    e.iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(i, &(a, b))| z[i].powu(a) * z[i].conj().powu(b))
        .product()
}

/// (1/2π)∫ e^{imθ}/(ρe^{iθ} − z) dθ from the geometric series on either side of |z|.
pub fn circle_average(m: i32, rho: f64, z: C64) -> C64 {
    if rho < z.norm() {
        if m <= 0 {
            -powi(z, -1) * powi(C64::new(rho, 0.0) / z, -m)
        } else {
            C64::new(0.0, 0.0)
        }
    } else if m >= 1 {
        powi(z / rho, m - 1) / rho
    } else {
        C64::new(0.0, 0.0)
    }
}

/// −(1/π)∫_𝔻 ζ^a ζ̄^b /(ζ − z) dA = −2∫₀¹ ρ^{a+b+1} avg(ρ) dρ, integrated in
/// closed form on each side of |z|.
pub fn disc_T_monomial(a: u32, b: u32, z: C64) -> C64 {
    let m = a as i32 - b as i32;
    let r = z.norm();
    if r == 0.0 {
        // avg = δ_{m,1}/ρ for every ρ > 0.
        return if m == 1 { C64::new(-2.0 / (2 * b + 2) as f64, 0.0) } else { C64::new(0.0, 0.0) };
    }
    let k = (2 * b + 2) as f64;
    if m <= 0 {
        2.0 * powi(z, m - 1) * r.powf(k) / k
    } else {
        -2.0 * powi(z, m - 1) * (1.0 - r.powf(k)) / k
    }
}

/// Boundary Cauchy integral of e^{imθ}: the Laurent coefficient picks z^m.
pub fn circle_S_monomial(a: u32, b: u32, z: C64) -> C64 {
    let m = a as i32 - b as i32;
    if m >= 0 {
        z.powu(m as u32)
    } else {
        C64::new(0.0, 0.0)
    }
}

/// T[g](z) = Σ_j T_j S_{j−1}…S_0 g_j.
pub fn T_oracle(g: &[MonomialPoly], z: &[C64]) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for (j, gj) in g.iter().enumerate() {
        for (e, c) in terms(gj) {
            let mut v = c;
            for i in 0..j {
                v *= circle_S_monomial(e[i].0, e[i].1, z[i]);
            }
            let rest: Vec<usize> = (0..=j).collect();
            v *= mono_eval(&e, z, &rest);
            v *= disc_T_monomial(e[j].0, e[j].1, z[j]);
            total += v;
        }
    }
    total
}

pub fn poly_eval(p: &MonomialPoly, z: &[C64]) -> C64 {
    terms(p).iter().map(|(e, c)| c * mono_eval(e, z, &[])).sum()
}

#[derive(Debug, Clone)]
pub struct Term {
    pub r: usize,
    pub J: Vec<usize>,
    pub K: Vec<usize>,
    pub s: usize,
    pub bound: f64,
}

fn subsets(n: usize, r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    if n < r {
        return vec![];
    }
    let mut out = subsets(n - 1, r);
    for mut s in subsets(n - 1, r - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Terms of the Henkin sum at z. `prefix_only` keeps J = (σ_1, …, σ_r) only.
pub fn henkin_terms(z: &[C64], prefix_only: bool) -> Vec<Term> {
    let n = z.len();
    let mut sigma: Vec<usize> = (0..n).collect();
    sigma.sort_by(|&i, &j| z[j].norm().total_cmp(&z[i].norm()));
    let mut out = Vec::new();
    for r in 0..n {
        let positions = if prefix_only { vec![(0..r).collect()] } else { subsets(n, r) };
        for pos in positions {
            let J: Vec<usize> = pos.iter().map(|&p| sigma[p]).collect();
            let K: Vec<usize> = (0..n).filter(|k| !J.contains(k)).collect();
            let bound = J.last().map_or(1.0, |&j| z[j].norm());
            for s in 0..K.len() {
                out.push(Term { r, J: J.clone(), K: K.clone(), s, bound });
            }
        }
    }
    out
}

/// E = 2∫₀^bound t Π_{l∈K} avg_l dt for one component, with the J
/// coordinates pinned at z and the K coordinates on the common circle |ζ| = t.
/// Each average is a Laurent coefficient, constant between the breakpoints |z_k|.
pub fn henkin_term(gk: &MonomialPoly, z: &[C64], t: &Term) -> C64 {
    let mut bps = vec![0.0, t.bound];
    bps.extend(t.K.iter().map(|&k| z[k].norm()).filter(|&r| r < t.bound));
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let mut total = C64::new(0.0, 0.0);
    for (e, c) in terms(gk) {
        let pinned: C64 = t.J.iter().map(|&j| z[j].powu(e[j].0) * z[j].conj().powu(e[j].1)).product();
        for w in bps.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let mut val = c * pinned;
            let mut tp = 1i32;
            for (l, &k) in t.K.iter().enumerate() {
                let (a, b) = e[k];
                tp += 2 * b as i32;
                let eps = if l == t.s { 0 } else { 1 };
                // On |ζ| = t: ζ^a ζ̄^b ζ^ε/(ζ − z) = t^{2b} ζ^{q+1}/(ζ − z) with
                // q = a − b + ε − 1; its average is z^q for |z| < t when q ≥ 0
                // and −z^q for |z| > t when q < 0, zero otherwise.
                let q = a as i32 - b as i32 + eps - 1;
                let f = if q >= 0 {
                    if z[k].norm() < mid { powi(z[k], q) } else { C64::new(0.0, 0.0) }
                } else if z[k].norm() > mid {
                    -powi(z[k], q)
                } else {
                    C64::new(0.0, 0.0)
                };
                val *= f;
            }
            let p = (tp + 1) as f64;
            total += 2.0 * val * (hi.powf(p) - lo.powf(p)) / p;
        }
    }
    total
}

/// Σ_terms E by r.
pub fn henkin_parts(g: &[MonomialPoly], z: &[C64], prefix_only: bool) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); z.len()];
    for t in henkin_terms(z, prefix_only) {
        out[t.r] += henkin_term(&g[t.K[t.s]], z, &t);
    }
    out
}

/// H = −Σ_r c_r · parts_r with every c_r = +1.
pub fn henkin_value(g: &[MonomialPoly], z: &[C64], prefix_only: bool) -> C64 {
    -henkin_parts(g, z, prefix_only).iter().sum::<C64>()
}
