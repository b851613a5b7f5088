//! Quadrature rules for the disc, the circle and product tori, plus the
//! singularity-aware rules used by the Cauchy-type integrals.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

use crate::error::{DbarError, Result};
use crate::C64;

/// Largest product rule we are willing to enumerate.
pub const TORUS_NODE_LIMIT: f64 = 1e8;

/// Grading exponent for panels that end at a singular point.
const GRADING: i32 = 3;

/// Points `m·δ` above this use the plain trapezoid in the corrected
/// circle rule; below it the kernel peak is resolved with graded panels.
const TRAPEZOID_SEPARATION: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNodes {
    pub nodes: Vec<C64>,
    pub weights: Vec<f64>,
}

impl WeightedNodes {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(C64) -> C64>(&self, f: F) -> C64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| f(z) * w)
            .sum()
    }
}

/// Gauss–Legendre nodes and weights mapped to [0, 1]. Cached per degree.
pub fn gauss_legendre_unit(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return hit.clone();
    }
    let rule = if n <= 1 {
        (vec![0.5], vec![1.0])
    } else {
        let gl = GaussLegendre::new(n).expect("degree >= 2");
        let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).unzip()
    };
    let rule = Arc::new(rule);
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

/// Polar product rule on the unit disc: Gauss–Legendre in r (Jacobian folded
/// in), trapezoid in angle.
pub fn disc_nodes(radial_count: usize, angular_count: usize) -> Result<WeightedNodes> {
    if radial_count < 2 || angular_count < 2 {
        return Err(DbarError::InvalidArgument(format!(
            "disc rule needs counts >= 2, got ({radial_count}, {angular_count})"
        )));
    }
    let gl = gauss_legendre_unit(radial_count);
    let dth = 2.0 * PI / angular_count as f64;
    let mut nodes = Vec::with_capacity(radial_count * angular_count);
    let mut weights = Vec::with_capacity(radial_count * angular_count);
    for (&r, &w) in gl.0.iter().zip(&gl.1) {
        for k in 0..angular_count {
            nodes.push(C64::from_polar(r, dth * k as f64));
            weights.push(w * r * dth);
        }
    }
    Ok(WeightedNodes { nodes, weights })
}

/// Equispaced trapezoid rule on the unit circle.
pub fn circle_nodes(m: usize) -> Result<WeightedNodes> {
    if m < 4 {
        return Err(DbarError::InvalidArgument(format!("circle rule needs m >= 4, got {m}")));
    }
    let dth = 2.0 * PI / m as f64;
    Ok(WeightedNodes {
        nodes: (0..m).map(|k| C64::from_polar(1.0, dth * k as f64)).collect(),
        weights: vec![dth; m],
    })
}

/// Product of `dim` circle rules, enumerated lazily.
#[derive(Debug, Clone)]
pub struct TorusNodes {
    pub dim: usize,
    pub circle: WeightedNodes,
}

impl TorusNodes {
    pub fn len(&self) -> usize {
        self.circle.len().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_weight(&self) -> f64 {
        self.circle.total_weight().powi(self.dim as i32)
    }

    /// Node `idx` in row-major order (first coordinate varies slowest).
    pub fn node(&self, mut idx: usize) -> (Vec<C64>, f64) {
        let m = self.circle.len();
        let mut pt = vec![C64::new(0.0, 0.0); self.dim];
        let mut w = 1.0;
        for d in (0..self.dim).rev() {
            let k = idx % m;
            idx /= m;
            pt[d] = self.circle.nodes[k];
            w *= self.circle.weights[k];
        }
        (pt, w)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<C64>, f64)> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }
}

pub fn check_product_size(m: usize, dim: usize) -> Result<()> {
    let count = (m as f64).powi(dim as i32);
    if count > TORUS_NODE_LIMIT {
        return Err(DbarError::ResourceGuard(format!(
            "{m}^{dim} = {count:e} nodes exceeds the limit {TORUS_NODE_LIMIT:e}"
        )));
    }
    Ok(())
}

pub fn torus_nodes(dim: usize, m: usize) -> Result<TorusNodes> {
    if dim == 0 {
        return Err(DbarError::InvalidArgument("torus dimension must be >= 1".into()));
    }
    let circle = circle_nodes(m)?;
    check_product_size(m, dim)?;
    Ok(TorusNodes { dim, circle })
}

/// One-dimensional rule on [0, t_max].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialNodes {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialNodes {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

// Gauss rule on [a, b] graded toward the flagged ends.
fn graded_panel(n: usize, a: f64, b: f64, left: bool, right: bool, out: &mut RadialNodes) {
    if left && right {
        let mid = 0.5 * (a + b);
        let nl = n / 2;
        graded_panel(nl.max(1), a, mid, true, false, out);
        graded_panel((n - nl).max(1), mid, b, false, true, out);
        return;
    }
    let gl = gauss_legendre_unit(n);
    let len = b - a;
    for (&u, &w) in gl.0.iter().zip(&gl.1) {
        if left || right {
            let q = GRADING as f64;
            let s = len * u.powi(GRADING);
            let ws = len * q * u.powi(GRADING - 1) * w;
            out.nodes.push(if left { a + s } else { b - s });
            out.weights.push(ws);
        } else {
            out.nodes.push(a + len * u);
            out.weights.push(len * w);
        }
    }
}

/// Composite Gauss rule on [0, t_max] with panel breaks at every exclusion
/// inside the interval, graded toward them.
pub fn radial_profile_nodes(t_max: f64, count: usize, exclusions: &[f64]) -> Result<RadialNodes> {
    if !(t_max > 0.0) || t_max > 1.0 + 1e-12 {
        return Err(DbarError::InvalidArgument(format!("t_max must lie in (0, 1], got {t_max}")));
    }
    if count == 0 {
        return Err(DbarError::InvalidArgument("radial count must be positive".into()));
    }
    const EPS: f64 = 1e-12;
    let mut cuts: Vec<f64> = exclusions
        .iter()
        .copied()
        .filter(|&e| e > EPS && e < t_max - EPS)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= EPS);
    let top_singular = exclusions.iter().any(|&e| (e - t_max).abs() <= EPS);
    let mut breaks = vec![0.0];
    breaks.extend(&cuts);
    breaks.push(t_max);
    let panels = breaks.len() - 1;
    let base = count / panels;
    let extra = count % panels;
    let mut out = RadialNodes { nodes: Vec::with_capacity(count), weights: Vec::with_capacity(count) };
    for p in 0..panels {
        let n = (base + usize::from(p < extra)).max(1);
        let left = p > 0;
        let right = p + 1 < panels || top_singular;
        graded_panel(n, breaks[p], breaks[p + 1], left, right, &mut out);
    }
    Ok(out)
}

/// A rule for the normalised angular average (1/2π)∫ φ(θ) k(θ) dθ with the
/// Cauchy-type kernel k = ζ^ε/(ζ − z), ζ = t e^{iθ}.
///
/// Kernel moments are folded into complex weights and an anchor node at
/// θ* = arg z carries the exact kernel mean minus the discrete one, i.e. the
/// rule subtracts φ(θ*). This keeps the error bounded as |z| → t.
#[derive(Debug, Clone)]
pub struct CauchyCircleRule {
    pub thetas: Vec<f64>,
    pub weights: Vec<C64>,
}

impl CauchyCircleRule {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn apply<F: FnMut(f64) -> C64>(&self, mut phi: F) -> C64 {
        self.thetas.iter().zip(&self.weights).map(|(&th, &w)| w * phi(th)).sum()
    }
}

/// Exact value of (1/2π)∫ ζ^ε/(ζ − z) dθ on the circle of radius t.
/// A pole on the circle takes the limit from inside (|z| < t).
pub fn cauchy_kernel_mean(t: f64, z: C64, eps: u8) -> C64 {
    let inside = z.norm() <= t * (1.0 + 1e-14);
    match (eps, inside) {
        (0, true) => C64::new(0.0, 0.0),
        (0, false) => -z.inv(),
        (_, true) => C64::new(1.0, 0.0),
        (_, false) => C64::new(0.0, 0.0),
    }
}

fn graded_unit(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return hit.clone();
    }
    let gl = gauss_legendre_unit(n);
    let q = GRADING as f64;
    let rule: (Vec<f64>, Vec<f64>) = gl
        .0
        .iter()
        .zip(&gl.1)
        .map(|(&u, &w)| (u.powi(GRADING), q * u.powi(GRADING - 1) * w))
        .unzip();
    let rule = Arc::new(rule);
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

pub fn cauchy_circle_rule(t: f64, z: C64, eps: u8, m: usize) -> Result<CauchyCircleRule> {
    cauchy_circle_rule_with_kinks(t, z, eps, m, &[])
}

/// As [`cauchy_circle_rule`], with extra panel breaks at angles where φ is
/// known to be non-smooth.
pub fn cauchy_circle_rule_with_kinks(t: f64, z: C64, eps: u8, m: usize, kinks: &[f64]) -> Result<CauchyCircleRule> {
    if m < 4 {
        return Err(DbarError::InvalidArgument(format!("circle rule needs m >= 4, got {m}")));
    }
    if !(t > 0.0) {
        return Err(DbarError::InvalidArgument(format!("circle radius must be positive, got {t}")));
    }
    let anchor = if z.norm() == 0.0 { 0.0 } else { z.arg() };
    let delta = (t - z.norm()).abs() / t;
    let mut thetas = Vec::with_capacity(m + 1);
    let mut base = Vec::with_capacity(m + 1);
    let cuts = kink_offsets(anchor, kinks);
    // With known kinks the panelled rule is used throughout: it resolves them,
    // and switching rules would make the result jump in z.
    if cuts.is_none() && (z.norm() == 0.0 || m as f64 * delta >= TRAPEZOID_SEPARATION) {
        // Nodes independent of z keep the discrete operator holomorphic in z.
        let h = 2.0 * PI / m as f64;
        for j in 0..m {
            thetas.push(j as f64 * h);
            base.push(1.0 / m as f64);
        }
    } else if let Some(cuts) = cuts {
        let mut breaks = vec![0.0];
        breaks.extend(cuts);
        breaks.push(2.0 * PI);
        let mut panel = RadialNodes { nodes: Vec::new(), weights: Vec::new() };
        let last = breaks.len() - 2;
        for (k, b) in breaks.windows(2).enumerate() {
            let share = (m as f64 * (b[1] - b[0]) / (2.0 * PI)).round() as usize;
            // The panels next to the anchor carry the kernel peak.
            let floor = if k == 0 || k == last { m / 4 } else { 16 };
            graded_panel(share.max(floor), b[0], b[1], true, true, &mut panel);
        }
        for (s, w) in panel.nodes.iter().zip(&panel.weights) {
            thetas.push(anchor + s);
            base.push(w / (2.0 * PI));
        }
    } else {
        let g = graded_unit(m / 2);
        for side in [1.0, -1.0] {
            for (&s, &w) in g.0.iter().zip(&g.1) {
                thetas.push(anchor + side * PI * s);
                base.push(0.5 * w);
            }
        }
    }
    let mut weights: Vec<C64> = thetas
        .iter()
        .zip(&base)
        .map(|(&th, &w)| {
            let zeta = C64::from_polar(t, th);
            let num = if eps == 0 { C64::new(1.0, 0.0) } else { zeta };
            num / (zeta - z) * w
        })
        .collect();
    let discrete: C64 = weights.iter().sum();
    thetas.push(anchor);
    weights.push(cauchy_kernel_mean(t, z, eps) - discrete);
    Ok(CauchyCircleRule { thetas, weights })
}

// Kink angles as offsets in (0, 2π) from the anchor; None if there are none
// away from the anchor itself.
fn kink_offsets(anchor: f64, kinks: &[f64]) -> Option<Vec<f64>> {
    const EPS: f64 = 1e-12;
    let mut out: Vec<f64> = kinks
        .iter()
        .map(|&k| (k - anchor).rem_euclid(2.0 * PI))
        .filter(|&d| d > EPS && d < 2.0 * PI - EPS)
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= EPS);
    (!out.is_empty()).then_some(out)
}

/// Node of the disc rule centred at z: ζ = z + ρ e^{iφ}, ρ = u·R(φ), where
/// R(φ) is the distance from z to the unit circle in direction φ.
#[derive(Debug, Clone, Copy)]
pub struct PolarNode {
    pub zeta: C64,
    /// e^{iφ}
    pub dir: C64,
    /// R(φ)
    pub reach: f64,
    /// ρ / R(φ)
    pub u: f64,
    /// Gauss weight in u times the angular step.
    pub w: f64,
}

/// Product rule on the disc in polar coordinates about z (|z| ≤ 1). In these
/// coordinates the Cauchy kernel times the area element is bounded.
pub fn local_polar_nodes(z: C64, radial: usize, angular: usize) -> Result<Vec<PolarNode>> {
    if radial < 2 || angular < 2 {
        return Err(DbarError::InvalidArgument(format!(
            "disc rule needs counts >= 2, got ({radial}, {angular})"
        )));
    }
    let r2 = z.norm_sqr();
    if r2 > 1.0 + 1e-12 {
        return Err(DbarError::OutOfDomain(format!("|z| = {} > 1", z.norm())));
    }
    let gl = gauss_legendre_unit(radial);
    let dphi = 2.0 * PI / angular as f64;
    let mut out = Vec::with_capacity(radial * angular);
    for k in 0..angular {
        let dir = C64::from_polar(1.0, dphi * k as f64);
        let p = (z.conj() * dir).re;
        let reach = -p + (p * p + 1.0 - r2).max(0.0).sqrt();
        if reach <= 0.0 {
            continue;
        }
        for (&u, &w) in gl.0.iter().zip(&gl.1) {
            out.push(PolarNode { zeta: z + dir * (reach * u), dir, reach, u, w: w * dphi });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_examples() {
        let r = disc_nodes(8, 16).unwrap();
        assert!((r.total_weight() - PI).abs() < 1e-10);
        let r = disc_nodes(32, 64).unwrap();
        let v = r.integrate(|z| C64::new(z.norm_sqr(), 0.0));
        assert!((v.re - PI / 2.0).abs() < 1e-8);
        for (a, b) in [(3, 7), (5, 9)] {
            let r = disc_nodes(a, b).unwrap();
            assert!(r.integrate(|z| z).norm() < 1e-10);
        }
        assert!(r.nodes.iter().all(|z| z.norm() <= 1.0));
        assert!(matches!(disc_nodes(1, 8), Err(DbarError::InvalidArgument(_))));
    }

    #[test]
    fn disc_polynomial_exactness() {
        let (mr, mt) = (6, 24);
        let r = disc_nodes(mr, mt).unwrap();
        for a in 0..5u32 {
            for b in 0..5u32 {
                let v = r.integrate(|z| z.powu(a) * z.conj().powu(b));
                let want = if a == b && a as usize <= 2 * mr - 2 { 2.0 * PI / (2 * a + 2) as f64 } else { 0.0 };
                assert!((v - want).norm() <= 1e-10 * want.max(1.0), "{a} {b} {v}");
            }
        }
    }

    #[test]
    fn circle_examples() {
        let c = circle_nodes(8).unwrap();
        assert!((c.total_weight() - 2.0 * PI).abs() < 1e-14);
        assert!(c.integrate(|z| z).norm() < 1e-14);
        assert!(c.nodes.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        // (1/2πi)∮ dζ/ζ = (1/2π)∫ dθ
        let c = circle_nodes(16).unwrap();
        let v = c.integrate(|z| z.inv() * z) / (2.0 * PI);
        assert!((v - 1.0).norm() < 1e-14);
        assert!(circle_nodes(3).is_err());
    }

    #[test]
    fn trapezoid_trig_exactness() {
        let m = 16;
        let c = circle_nodes(m).unwrap();
        for k in -7i32..=7 {
            let v = c.integrate(|z| z.powi(k)) / (2.0 * PI);
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert!((v - want).norm() < 1e-12);
        }
    }

    #[test]
    fn torus_examples() {
        let t = torus_nodes(2, 8).unwrap();
        assert_eq!(t.len(), 64);
        let s: f64 = t.iter().map(|(_, w)| w).sum();
        assert!((s - (2.0 * PI).powi(2)).abs() < 1e-10);
        assert_eq!(torus_nodes(3, 4).unwrap().len(), 64);
        let one = torus_nodes(1, 8).unwrap();
        let c = circle_nodes(8).unwrap();
        for (i, (p, w)) in one.iter().enumerate() {
            assert_eq!(p[0], c.nodes[i]);
            assert_eq!(w, c.weights[i]);
        }
        assert!(matches!(torus_nodes(4, 256), Err(DbarError::ResourceGuard(_))));
    }

    #[test]
    fn radial_examples() {
        let r = radial_profile_nodes(1.0, 16, &[]).unwrap();
        assert_eq!(r.nodes.len(), 16);
        assert!(r.nodes.iter().all(|&t| t > 0.0 && t < 1.0));
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let r = radial_profile_nodes(0.8, 16, &[0.5]).unwrap();
        assert!(r.nodes.iter().all(|&t| (t - 0.5).abs() > 1e-12));
        let below: f64 = r.nodes.iter().zip(&r.weights).filter(|(t, _)| **t < 0.5).map(|(_, w)| w).sum();
        assert!((below - 0.5).abs() < 1e-12);

        let want = 1.0 + 2f64.ln();
        let mut last = f64::INFINITY;
        for count in [32, 64, 128] {
            let r = radial_profile_nodes(1.0, count, &[0.5]).unwrap();
            let err = (r.integrate(|t| (t - 0.5).abs().ln().abs()) - want).abs();
            assert!(err <= last);
            last = err;
        }
        assert!(last < 1e-3, "{last}");
        assert!(radial_profile_nodes(0.0, 8, &[]).is_err());
    }

    #[test]
    fn cauchy_rule_reproduces_kernel_moments() {
        // φ = ζ^k: mean of ζ^{k+ε}/(ζ − z) by residues.
        for &(t, zr) in &[(0.7, 0.3), (0.5, 0.499), (0.5, 0.501), (1.0, 0.999), (1.0, 1.0), (0.2, 0.9)] {
            let z = C64::from_polar(zr, 0.7);
            for eps in [0u8, 1] {
                let rule = cauchy_circle_rule(t, z, eps, 256).unwrap();
                for k in -3i32..=3 {
                    let q = k + eps as i32 - 1;
                    let want = if q >= 0 {
                        if zr <= t { z.powi(q) } else { C64::new(0.0, 0.0) }
                    } else if zr > t {
                        -z.powi(q)
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    let got = rule.apply(|th| C64::from_polar(t, th).powi(k));
                    assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()), "t={t} z={zr} eps={eps} k={k} {got} {want}");
                }
            }
        }
    }

    #[test]
    fn local_polar_integrates_kernel() {
        // -(1/π)∫ f/(ζ−z) dA with f = 1 gives z̄, also on the circle.
        for z in [C64::new(0.3, -0.2), C64::new(0.0, 0.0), C64::from_polar(1.0, 2.0)] {
            let nodes = local_polar_nodes(z, 16, 32).unwrap();
            let v: C64 = nodes.iter().map(|n| n.dir.conj() * n.reach * n.w).sum::<C64>() * (-1.0 / PI);
            assert!((v - z.conj()).norm() < 1e-12, "{z} {v}");
            assert!(nodes.iter().all(|n| n.zeta.norm() <= 1.0 + 1e-12));
        }
        assert!(local_polar_nodes(C64::new(1.1, 0.0), 4, 4).is_err());
    }
    #[test]
    fn kinked_data_near_the_circle() {
        // S[(1 − ζ)^{1/2}] = (1 − z)^{1/2}; the kink sits at θ = 0.
        let f = |th: f64| {
            let d = C64::new(1.0, 0.0) - C64::from_polar(1.0, th);
            if d.norm() == 0.0 { d } else { d.sqrt() }
        };
        for z in [C64::from_polar(0.95, 0.3), C64::from_polar(0.999, -0.05), C64::from_polar(0.5, 2.0), C64::from_polar(1.0, 1.0)] {
            let want = (C64::new(1.0, 0.0) - z).sqrt();
            let plain = cauchy_circle_rule(1.0, z, 1, 256).unwrap().apply(f);
            let kinked = cauchy_circle_rule_with_kinks(1.0, z, 1, 256, &[0.0]).unwrap().apply(f);
            assert!((kinked - want).norm() < 1e-6, "{z}: {kinked} vs {want}");
            assert!((kinked - want).norm() <= (plain - want).norm() + 1e-12, "{z}");
        }
        // A kink at the anchor adds no break.
        let r = cauchy_circle_rule_with_kinks(1.0, C64::from_polar(0.99, 0.0), 1, 64, &[0.0]).unwrap();
        assert_eq!(r.len(), cauchy_circle_rule(1.0, C64::from_polar(0.99, 0.0), 1, 64).unwrap().len());
    }
}
