//! Henkin's sector formula and the model operator P.
//!
//! On the sector where |z_{σ(1)}| > … > |z_{σ(n)}| every term lives on a
//! skeleton region: coordinates in J are pinned to z_J, the rest (K) share a
//! common modulus t ≤ bound. With ζ_k = t e^{iθ_k} and dt∧dθ_{k_1}∧… as
//! orientation each term reduces to
//!
//!   E = 2∫₀^bound t · avg_θ[ g_{k_s} · 1/(ζ_{k_s} − z_{k_s}) · Π_{l≠s} ζ_{k_l}/(ζ_{k_l} − z_{k_l}) ] dt
//!
//! and H = −Σ c(n, r) E.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cauchy::{check_closed_disc, op_T, tensor_sum, OperatorConfig};
use crate::error::{DbarError, Result};
use crate::field::{Form01, Point, ScalarFunction};
use crate::quadrature::{cauchy_circle_rule_with_kinks, cauchy_kernel_mean, check_product_size, radial_profile_nodes, CauchyCircleRule};
use crate::C64;

/// Moduli closer than this are treated as lying on a sector boundary.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SectorKey(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct SectorPermutation {
    /// 0-based indices ordered by decreasing modulus.
    pub sigma: Vec<usize>,
    /// Smallest gap between consecutive moduli (1 when n = 1).
    pub margin: f64,
}

pub fn sector_of(z: &[C64], tie_tol: f64) -> Result<SectorPermutation> {
    if z.is_empty() {
        return Err(DbarError::InvalidArgument("empty point".into()));
    }
    let mut sigma: Vec<usize> = (0..z.len()).collect();
    sigma.sort_by(|&a, &b| z[b].norm().total_cmp(&z[a].norm()).then(a.cmp(&b)));
    let mut margin = 1.0f64;
    for w in sigma.windows(2) {
        let gap = z[w[0]].norm() - z[w[1]].norm();
        if gap <= tie_tol {
            let (i, j) = (w[0].min(w[1]) + 1, w[0].max(w[1]) + 1);
            return Err(DbarError::SectorTie { i, j, gap });
        }
        margin = margin.min(gap);
    }
    Ok(SectorPermutation { sigma, margin })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HenkinTerm {
    pub r: usize,
    /// Pinned coordinates in σ order (decreasing modulus).
    pub J: Vec<usize>,
    /// Free coordinates in increasing index order.
    pub K: Vec<usize>,
    /// Position in K of the component that carries the area element.
    pub s: usize,
    /// Upper limit of the common radius.
    pub bound: f64,
}

/// Non-vanishing terms on a sector: every σ-ordered J of size r < n (the
/// ordering constraint on γ_J keeps only σ-subsequences), every s.
pub fn henkin_terms(z: &[C64], sector: &SectorPermutation) -> Vec<HenkinTerm> {
    let n = sector.sigma.len();
    let mut out = Vec::new();
    for r in 0..n {
        for pos in combinations(n, r) {
            let J: Vec<usize> = pos.iter().map(|&p| sector.sigma[p]).collect();
            let K: Vec<usize> = (0..n).filter(|k| !J.contains(k)).collect();
            let bound = J.last().map_or(1.0, |&j| z[j].norm());
            for s in 0..K.len() {
                out.push(HenkinTerm { r, J: J.clone(), K: K.clone(), s, bound });
            }
        }
    }
    out
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, r, &mut Vec::new(), &mut out);
    out
}

/// Angular rule for a free coordinate; a function that ignores the
/// coordinate only needs the exact kernel mean.
fn angular_rule(f: &ScalarFunction, k: usize, t: f64, zk: C64, eps: u8, m: usize) -> Result<CauchyCircleRule> {
    if f.depends_on(k) {
        // Kinks sit on the unit circle; they matter only on the outer shell.
        let kinks = if (t - 1.0).abs() < 1e-12 { f.kinks_on(k) } else { Vec::new() };
        cauchy_circle_rule_with_kinks(t, zk, eps, m, &kinks)
    } else {
        Ok(CauchyCircleRule { thetas: vec![0.0], weights: vec![cauchy_kernel_mean(t, zk, eps)] })
    }
}

/// 2∫₀^bound t · avg[f · Π kernels] dt over the free coordinates `free`,
/// the first of which carries the 1/(ζ − z) kernel.
fn skeleton_integral(f: &ScalarFunction, free: &[usize], first: usize, bound: f64, z: &[C64], cfg: &OperatorConfig) -> Result<C64> {
    if f.is_zero() || bound <= 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let live = free.iter().filter(|&&k| f.depends_on(k)).count();
    check_product_size(cfg.henkin_angular + 1, live)?;
    let exclusions: Vec<f64> = free.iter().map(|&k| z[k].norm()).collect();
    let radial = radial_profile_nodes(bound, cfg.henkin_radial, &exclusions)?;
    let mut p = z.to_vec();
    let mut total = C64::new(0.0, 0.0);
    for (&t, &w) in radial.nodes.iter().zip(&radial.weights) {
        let rules = free
            .iter()
            .map(|&k| {
                let eps = if k == first { 0 } else { 1 };
                angular_rule(f, k, t, z[k], eps, cfg.henkin_angular).map(|r| (k, t, r))
            })
            .collect::<Result<Vec<_>>>()?;
        total += tensor_sum(f, &rules, &mut p) * (2.0 * t * w);
    }
    Ok(total)
}

pub fn eval_henkin_term(g: &Form01, z: &[C64], term: &HenkinTerm, cfg: &OperatorConfig) -> Result<C64> {
    let comp = &g.components[term.K[term.s]];
    skeleton_integral(comp, &term.K, term.K[term.s], term.bound, z, cfg)
}

/// The constants c(n, r).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SignTable {
    entries: BTreeMap<(usize, usize), i8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignEntry {
    pub n: usize,
    pub r: usize,
    pub sign: i8,
}

impl SignTable {
    pub fn all_plus(n: usize) -> Self {
        let mut t = SignTable::default();
        for r in 0..n {
            t.set(n, r, 1);
        }
        t
    }

    pub fn set(&mut self, n: usize, r: usize, sign: i8) {
        self.entries.insert((n, r), sign.signum());
    }

    pub fn get(&self, n: usize, r: usize) -> Result<i8> {
        self.entries
            .get(&(n, r))
            .copied()
            .ok_or_else(|| DbarError::InvalidArgument(format!("sign table has no entry for n = {n}, r = {r}")))
    }

    pub fn merge(&mut self, other: &SignTable) {
        self.entries.extend(other.entries.iter().map(|(k, v)| (*k, *v)));
    }

    pub fn entries(&self) -> Vec<SignEntry> {
        self.entries.iter().map(|(&(n, r), &sign)| SignEntry { n, r, sign }).collect()
    }

    pub fn from_entries(entries: &[SignEntry]) -> Result<Self> {
        let mut t = SignTable::default();
        for e in entries {
            if e.sign != 1 && e.sign != -1 {
                return Err(DbarError::InvalidArgument(format!("sign must be ±1, got {}", e.sign)));
            }
            t.set(e.n, e.r, e.sign);
        }
        Ok(t)
    }
}

impl Serialize for SignTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SignTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<SignEntry>::deserialize(d)?;
        SignTable::from_entries(&entries).map_err(serde::de::Error::custom)
    }
}

/// Σ over terms of each r, before the signs are applied.
pub fn henkin_parts(g: &Form01, z: &[C64], cfg: &OperatorConfig) -> Result<Vec<C64>> {
    let n = g.dim();
    if z.len() != n {
        return Err(DbarError::InvalidArgument(format!("point of dimension {} for n = {n}", z.len())));
    }
    for &c in z {
        check_closed_disc(c)?;
        if c.norm() >= 1.0 {
            return Err(DbarError::OutOfDomain("Henkin formula needs an interior point".into()));
        }
    }
    let sector = sector_of(z, DEFAULT_TIE_TOL)?;
    let mut parts = vec![C64::new(0.0, 0.0); n];
    for term in henkin_terms(z, &sector) {
        parts[term.r] += eval_henkin_term(g, z, &term, cfg)?;
    }
    Ok(parts)
}

/// H[g](z) = −Σ_r c(n, r) Σ_{terms of size r} E.
pub fn op_H(g: &Form01, z: &[C64], signs: &SignTable, cfg: &OperatorConfig) -> Result<C64> {
    let n = g.dim();
    let parts = henkin_parts(g, z, cfg)?;
    let mut total = C64::new(0.0, 0.0);
    for (r, part) in parts.iter().enumerate() {
        total -= *part * signs.get(n, r)? as f64;
    }
    Ok(total)
}

/// Exhaustive search over the 2^n sign assignments for the unique one that
/// makes H agree with T on the corpus.
pub fn calibrate_signs(n: usize, corpus: &[Form01], points: &[Point], cfg: &OperatorConfig, tol: f64) -> Result<SignTable> {
    if corpus.is_empty() {
        return Err(DbarError::CalibrationAmbiguous("calibration corpus is empty; every sign assignment fits".into()));
    }
    if n == 0 || n > 16 {
        return Err(DbarError::InvalidArgument(format!("unsupported dimension {n}")));
    }
    if let Some(g) = corpus.iter().find(|g| g.dim() != n) {
        return Err(DbarError::InvalidArgument(format!("corpus form of dimension {} for n = {n}", g.dim())));
    }
    let mut sectors = std::collections::BTreeSet::new();
    for p in points {
        sectors.insert(SectorKey(sector_of(p, DEFAULT_TIE_TOL)?.sigma));
    }
    let needed: usize = (1..=n).product();
    if sectors.len() < needed {
        return Err(DbarError::InvalidArgument(format!(
            "calibration points cover {} of {needed} sectors",
            sectors.len()
        )));
    }
    let mut samples = Vec::new();
    for g in corpus {
        for p in points {
            samples.push((henkin_parts(g, p, cfg)?, op_T(g, p, cfg)?));
        }
    }
    let mut passing = Vec::new();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let sign = |r: usize| if mask & (1 << r) != 0 { -1.0 } else { 1.0 };
        let err = samples
            .iter()
            .map(|(parts, t)| {
                let h: C64 = parts.iter().enumerate().map(|(r, e)| -*e * sign(r)).sum();
                (h - t).norm()
            })
            .fold(0.0, f64::max);
        best = best.min(err);
        if err < tol {
            passing.push(mask);
        }
    }
    match passing.as_slice() {
        [mask] => {
            let mut t = SignTable::default();
            for r in 0..n {
                t.set(n, r, if mask & (1 << r) != 0 { -1 } else { 1 });
            }
            Ok(t)
        }
        [] => Err(DbarError::CalibrationFailed { best, tol }),
        many => Err(DbarError::CalibrationAmbiguous(format!(
            "{} sign assignments reach max error < {tol:e}; enlarge the corpus",
            many.len()
        ))),
    }
}

/// P[h](z, a, b) = −2∫₀^{|a|} t · avg[h(ζ, a, b)/(ζ_1 − z_1) · Π_{l≥2} ζ_l/(ζ_l − z_l)] dt,
/// normalised so that q = 1, h ≡ 1 gives z̄ for |z| < |a|.
pub fn op_P(h: &ScalarFunction, z: &[C64], a: C64, b: C64, cfg: &OperatorConfig) -> Result<C64> {
    let q = z.len();
    if q == 0 || h.dim() != q + 2 {
        return Err(DbarError::InvalidArgument(format!("P needs h on 𝔻^q×𝔻×𝔻 and q ≥ 1; got dim {} for q = {q}", h.dim())));
    }
    for &c in z.iter().chain([&a, &b]) {
        check_closed_disc(c)?;
    }
    let mut moduli: Vec<(f64, usize)> = z.iter().map(|c| c.norm()).chain([a.norm()]).zip(0..).collect();
    moduli.sort_by(|x, y| x.0.total_cmp(&y.0));
    for w in moduli.windows(2) {
        if w[1].0 - w[0].0 <= DEFAULT_TIE_TOL {
            return Err(DbarError::SectorTie { i: w[0].1 + 1, j: w[1].1 + 1, gap: w[1].0 - w[0].0 });
        }
    }
    let mut full = z.to_vec();
    full.push(a);
    full.push(b);
    let free: Vec<usize> = (0..q).collect();
    Ok(-skeleton_integral(h, &free, 0, a.norm(), &full, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_dbar, exact_opT, form_from_polys, GaussianRational, MonomialPoly};
    use crate::field::Smoothness;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sector_examples() {
        let s = sector_of(&[c(0.8, 0.0), c(0.3, 0.0)], 1e-9).unwrap();
        assert_eq!(s.sigma, vec![0, 1]);
        assert!((s.margin - 0.5).abs() < 1e-12);
        assert_eq!(sector_of(&[c(0.3, 0.0), c(0.0, 0.8)], 1e-9).unwrap().sigma, vec![1, 0]);
        assert!(matches!(sector_of(&[c(0.5, 0.0), c(0.0, 0.5)], 1e-9), Err(DbarError::SectorTie { .. })));
    }

    #[test]
    fn term_counts() {
        let z1 = [c(0.4, 0.0)];
        assert_eq!(henkin_terms(&z1, &sector_of(&z1, 1e-9).unwrap()).len(), 1);
        let z2 = [c(0.8, 0.0), c(0.3, 0.0)];
        let t2 = henkin_terms(&z2, &sector_of(&z2, 1e-9).unwrap());
        assert_eq!(t2.len(), 4);
        assert_eq!(t2.iter().filter(|t| t.r == 1).map(|t| t.J.clone()).collect::<Vec<_>>(), vec![vec![0], vec![1]]);
        let z3 = [c(0.8, 0.0), c(0.5, 0.0), c(0.2, 0.0)];
        let t3 = henkin_terms(&z3, &sector_of(&z3, 1e-9).unwrap());
        assert_eq!(t3.len(), 12);
        assert_eq!(t3.iter().filter(|t| t.r == 2).count(), 3);
        let r1 = t3.iter().find(|t| t.J == vec![1]).unwrap();
        assert!((r1.bound - 0.5).abs() < 1e-15);
    }

    #[test]
    fn n1_matches_disc_transform() {
        let cfg = OperatorConfig::default();
        let signs = SignTable::all_plus(1);
        for (a, b) in [(0u32, 0u32), (1, 0), (0, 2), (2, 1)] {
            let u = MonomialPoly::monomial(vec![(a, b)], GaussianRational::one());
            let gp = exact_dbar(&u);
            if gp[0].is_zero() {
                continue;
            }
            let g = form_from_polys(&gp).unwrap();
            let t = exact_opT(&gp).unwrap();
            for z in [c(0.3, 0.4), c(-0.85, 0.1), c(0.05, 0.0)] {
                let h = op_H(&g, &[z], &signs, &cfg).unwrap();
                assert!((h - t.eval(&[z])).norm() < 1e-6, "{a} {b} {z}: {h} vs {}", t.eval(&[z]));
            }
        }
        let zero = Form01::zero(1);
        assert_eq!(op_H(&zero, &[c(0.2, 0.0)], &signs, &cfg).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn n2_examples() {
        let cfg = OperatorConfig { henkin_angular: 128, henkin_radial: 48, ..Default::default() };
        let signs = SignTable::all_plus(2);
        let g = Form01::new(vec![ScalarFunction::constant(2, c(1.0, 0.0)), ScalarFunction::zero(2)], 1.0).unwrap();
        let v = op_H(&g, &[c(0.6, 0.0), c(0.2, 0.0)], &signs, &cfg).unwrap();
        assert!((v - 0.6).norm() < 1e-2, "{v}");
        let u = MonomialPoly::monomial(vec![(0, 1), (0, 1)], GaussianRational::one());
        let g = form_from_polys(&exact_dbar(&u)).unwrap();
        let v = op_H(&g, &[c(0.7, 0.0), c(0.3, 0.0)], &signs, &cfg).unwrap();
        assert!((v - 0.21).norm() < 1e-2, "{v}");
    }

    #[test]
    fn sign_table_json() {
        let t = SignTable::all_plus(2);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"[{"n":2,"r":0,"sign":1},{"n":2,"r":1,"sign":1}]"#);
        assert_eq!(serde_json::from_str::<SignTable>(&s).unwrap(), t);
        assert!(serde_json::from_str::<SignTable>(r#"[{"n":1,"r":0,"sign":2}]"#).is_err());
    }

    #[test]
    fn calibration_edge_cases() {
        let cfg = OperatorConfig::default();
        let pts = vec![Point::new(vec![c(0.4, 0.1)]).unwrap()];
        assert!(matches!(calibrate_signs(1, &[], &pts, &cfg, 1e-6), Err(DbarError::CalibrationAmbiguous(_))));
        // The zero form cannot tell the signs apart.
        assert!(matches!(
            calibrate_signs(1, &[Form01::zero(1)], &pts, &cfg, 1e-6),
            Err(DbarError::CalibrationAmbiguous(_))
        ));
        let one = Form01::new(vec![ScalarFunction::constant(1, c(1.0, 0.0))], 1.0).unwrap();
        let t = calibrate_signs(1, &[one], &pts, &cfg, 1e-6).unwrap();
        assert_eq!(t.get(1, 0).unwrap(), 1);
    }

    #[test]
    fn p_examples() {
        let cfg = OperatorConfig::default();
        let zero = ScalarFunction::zero(3);
        assert_eq!(op_P(&zero, &[c(0.2, 0.1)], c(0.5, 0.0), c(0.1, 0.0), &cfg).unwrap(), c(0.0, 0.0));
        let one = ScalarFunction::constant(3, c(1.0, 0.0));
        let z = c(0.3, -0.2);
        let v = op_P(&one, &[z], c(0.0, 0.999), c(0.1, 0.0), &cfg).unwrap();
        assert!((v - z.conj()).norm() < 1e-10, "{v}");
        let z = c(0.2, 0.25);
        let v = op_P(&one, &[z], c(-0.5, 0.0), c(0.1, 0.0), &cfg).unwrap();
        assert!((v - z.conj()).norm() < 1e-10, "{v}");
        // outside the sub-disc: |a|²/z
        let z = c(0.6, 0.3);
        let v = op_P(&one, &[z], c(0.5, 0.0), c(0.1, 0.0), &cfg).unwrap();
        assert!((v - 0.25 / z).norm() < 1e-10, "{v}");
        let h = ScalarFunction::new(3, Smoothness::Smooth, |p| p[0]);
        assert!(matches!(op_P(&h, &[c(0.5, 0.0)], c(0.0, 0.5), c(0.0, 0.0), &cfg), Err(DbarError::SectorTie { .. })));
    }
}
