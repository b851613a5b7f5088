//! One-variable Cauchy transforms and their compositions on the polydisc.
//!
//! Orientation: T[f](z) = −(1/π)∫_𝔻 f(ζ)/(ζ − z) dA(ζ), so that T[1] = z̄ and
//! ∂̄T[f] = f.

use std::f64::consts::PI;
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DbarError, Result};
use crate::field::{self, Form01, Point, ScalarFunction, Smoothness, DOMAIN_SLACK};
use crate::quadrature::{cauchy_circle_rule, cauchy_circle_rule_with_kinks, check_product_size, disc_nodes, local_polar_nodes, CauchyCircleRule};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscScheme {
    /// Polar coordinates about the evaluation point (kernel is bounded).
    LocalPolar,
    /// Polar product rule about the origin.
    Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorConfig {
    /// (radial, angular) counts of the disc rule for T_j and Π_j.
    pub disc_rule: (usize, usize),
    /// Nodes per circle for S_j and the S̃_j tori.
    pub circle_count: usize,
    /// Nodes per circle for the Cauchy torus integral K.
    pub torus_m: usize,
    /// Radial nodes for the common-radius integrals of H and P.
    pub henkin_radial: usize,
    /// Angular nodes per circle for H and P.
    pub henkin_angular: usize,
    pub subtraction: bool,
    /// Minimum distance to the unit circle for boundary Cauchy integrals.
    pub boundary_margin: f64,
    pub disc_scheme: DiscScheme,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            disc_rule: (32, 64),
            circle_count: 256,
            torus_m: 256,
            henkin_radial: 64,
            henkin_angular: 256,
            subtraction: true,
            boundary_margin: 1e-3,
            disc_scheme: DiscScheme::LocalPolar,
        }
    }
}

impl OperatorConfig {
    /// Lighter settings for three variables, where the iterated circle
    /// integrals multiply.
    pub fn reference_n3() -> Self {
        OperatorConfig { circle_count: 96, torus_m: 96, henkin_angular: 48, henkin_radial: 48, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DbarError::InvalidArgument(m));
        if self.disc_rule.0 < 2 || self.disc_rule.1 < 2 {
            return bad(format!("disc rule {:?} needs counts >= 2", self.disc_rule));
        }
        for (name, m) in [("circle_count", self.circle_count), ("torus_m", self.torus_m), ("henkin_angular", self.henkin_angular)] {
            if m < 4 {
                return bad(format!("{name} = {m} must be >= 4"));
            }
        }
        if self.henkin_radial < 1 {
            return bad("henkin_radial must be positive".into());
        }
        if !(0.0..0.5).contains(&self.boundary_margin) {
            return bad(format!("boundary_margin {} outside [0, 0.5)", self.boundary_margin));
        }
        Ok(())
    }
}

pub(crate) fn check_closed_disc(z: C64) -> Result<()> {
    if z.norm() > 1.0 + DOMAIN_SLACK {
        return Err(DbarError::OutOfDomain(format!("|z| = {} > 1", z.norm())));
    }
    Ok(())
}

pub(crate) fn check_margin(z: C64, margin: f64) -> Result<()> {
    check_closed_disc(z)?;
    let distance = 1.0 - z.norm();
    if margin > 0.0 && distance < margin {
        return Err(DbarError::NearBoundary { distance, margin });
    }
    Ok(())
}

/// Solid Cauchy transform of a one-variable oracle at |z| ≤ 1.
pub fn cauchy_disc_T(f: &dyn Fn(C64) -> C64, z: C64, cfg: &OperatorConfig) -> Result<C64> {
    check_closed_disc(z)?;
    let (nr, na) = cfg.disc_rule;
    let fz = if cfg.subtraction { f(z) } else { ZERO };
    let sum: C64 = match cfg.disc_scheme {
        DiscScheme::LocalPolar => local_polar_nodes(z, nr, na)?
            .iter()
            .map(|n| (f(n.zeta) - fz) * n.dir.conj() * (n.reach * n.w))
            .sum(),
        DiscScheme::Origin => {
            let rule = disc_nodes(nr, na)?;
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .filter(|(zeta, _)| **zeta != z)
                .map(|(&zeta, &w)| (f(zeta) - fz) / (zeta - z) * w)
                .sum()
        }
    };
    Ok(-sum / PI + fz * z.conj())
}

/// Boundary Cauchy integral (1/2πi)∮ f(ζ)/(ζ − z) dζ.
pub fn cauchy_circle_S(f: &dyn Fn(C64) -> C64, z: C64, cfg: &OperatorConfig) -> Result<C64> {
    check_margin(z, cfg.boundary_margin)?;
    let rule = cauchy_circle_rule(1.0, z, 1, cfg.circle_count)?;
    Ok(rule.apply(|th| f(C64::from_polar(1.0, th))))
}

/// Apply boundary Cauchy integrals in the listed variables as one tensor
/// product, other coordinates frozen at z.
fn torus_apply(f: &ScalarFunction, vars: &[usize], z: &[C64], m: usize, margin: f64) -> Result<C64> {
    let vars: Vec<usize> = vars.iter().copied().filter(|&v| f.depends_on(v)).collect();
    if f.is_zero() {
        return Ok(ZERO);
    }
    let rules = torus_rules(f, &vars, z, m, margin)?;
    let mut p = z.to_vec();
    Ok(tensor_sum(f, &rules, &mut p))
}

fn torus_rules(f: &ScalarFunction, vars: &[usize], z: &[C64], m: usize, margin: f64) -> Result<Vec<(usize, f64, CauchyCircleRule)>> {
    for &v in vars {
        check_margin(z[v], margin)?;
    }
    check_product_size(m + 1, vars.len())?;
    vars.iter().map(|&v| cauchy_circle_rule_with_kinks(1.0, z[v], 1, m, &f.kinks_on(v)).map(|r| (v, 1.0, r))).collect()
}

/// Tensor product of angular rules; rule (v, t, ·) puts ζ_v = t e^{iθ}.
pub(crate) fn tensor_sum(f: &ScalarFunction, rules: &[(usize, f64, CauchyCircleRule)], p: &mut [C64]) -> C64 {
    match rules.split_first() {
        None => f.eval(p),
        Some(((v, t, rule), rest)) => {
            let mut acc = ZERO;
            for (&th, &w) in rule.thetas.iter().zip(&rule.weights) {
                p[*v] = C64::from_polar(*t, th);
                acc += w * tensor_sum(f, rest, p);
            }
            acc
        }
    }
}

/// The function z ↦ (Π_{i ∈ vars} S_i) f (z) as an oracle.
fn torus_composite(f: &ScalarFunction, vars: Vec<usize>, m: usize, margin: f64) -> ScalarFunction {
    if f.is_zero() {
        return ScalarFunction::zero(f.dim());
    }
    if vars.iter().all(|&v| !f.depends_on(v)) {
        return f.clone();
    }
    let inner = f.clone();
    let tag = f.smoothness;
    let vars: Vec<usize> = vars.into_iter().filter(|&v| f.depends_on(v)).collect();
    // The frozen coordinates rarely change between calls; reuse their rules.
    let last: Mutex<Option<(Vec<C64>, Arc<Vec<(usize, f64, CauchyCircleRule)>>)>> = Mutex::new(None);
    ScalarFunction::new(f.dim(), tag, move |z| {
        let key: Vec<C64> = vars.iter().map(|&v| z[v]).collect();
        let cached = last.lock().unwrap().as_ref().filter(|(k, _)| *k == key).map(|(_, r)| r.clone());
        let rules = match cached {
            Some(r) => r,
            None => match torus_rules(&inner, &vars, z, m, margin) {
                Ok(r) => {
                    let r = Arc::new(r);
                    *last.lock().unwrap() = Some((key, r.clone()));
                    r
                }
                Err(_) => return C64::new(f64::NAN, f64::NAN),
            },
        };
        let mut p = z.to_vec();
        tensor_sum(&inner, &rules, &mut p)
    })
    .with_dep_mask(f.dep_mask())
    .with_kinks_of(f)
    .memoized()
}

fn check_point(z: &[C64], n: usize) -> Result<()> {
    if z.len() != n {
        return Err(DbarError::InvalidArgument(format!("point of dimension {} for n = {n}", z.len())));
    }
    for &c in z {
        check_closed_disc(c)?;
    }
    Ok(())
}

/// T_j applied to one component (j is 0-based).
pub fn op_Tj(g: &ScalarFunction, j: usize, z: &[C64], cfg: &OperatorConfig) -> Result<C64> {
    check_point(z, g.dim())?;
    if j >= g.dim() {
        return Err(DbarError::InvalidArgument(format!("index {j} out of range")));
    }
    if g.is_zero() {
        return Ok(ZERO);
    }
    let s = field::slice(g, z, j)?;
    cauchy_disc_T(&s, z[j], cfg)
}

/// S̃_j f = S_{j-1} … S_0 f (identity for j = 0).
pub fn op_Stilde(j: usize, f: &ScalarFunction, z: &[C64], cfg: &OperatorConfig) -> Result<C64> {
    check_point(z, f.dim())?;
    torus_apply(f, &(0..j).collect::<Vec<_>>(), z, cfg.circle_count, cfg.boundary_margin)
}

/// S̃_j g as an oracle, for composition with T_j.
pub fn stilde_function(j: usize, f: &ScalarFunction, cfg: &OperatorConfig) -> ScalarFunction {
    torus_composite(f, (0..j).collect(), cfg.circle_count, cfg.boundary_margin)
}

/// T[g] = Σ_j T_j S̃_j[g_j].
pub fn op_T(g: &Form01, z: &[C64], cfg: &OperatorConfig) -> Result<C64> {
    let n = g.dim();
    check_point(z, n)?;
    let mut total = ZERO;
    for (j, gj) in g.components.iter().enumerate() {
        if gj.is_zero() {
            continue;
        }
        // The oracle below cannot report errors, so validate its inputs here.
        for i in 0..j {
            if gj.depends_on(i) {
                check_margin(z[i], cfg.boundary_margin)?;
            }
        }
        check_product_size(cfg.circle_count + 1, j)?;
        let h = stilde_function(j, gj, cfg);
        total += op_Tj(&h, j, z, cfg)?;
    }
    Ok(total)
}

/// Cauchy torus integral K[u] = S_n … S_1 u.
pub fn op_K(u: &ScalarFunction, z: &[C64], cfg: &OperatorConfig) -> Result<C64> {
    check_point(z, u.dim())?;
    torus_apply(u, &(0..u.dim()).collect::<Vec<_>>(), z, cfg.torus_m, cfg.boundary_margin)
}

/// K[T[g]] evaluated term by term. For the j-th term K T_j S̃_j g_j the
/// idempotent S_i (i < j) merge with the ones in K, leaving
/// S_j [ T_j [ (Π_{i≠j} S_i) g_j ] ].
pub fn op_KT(g: &Form01, z: &[C64], cfg: &OperatorConfig) -> Result<C64> {
    let n = g.dim();
    check_point(z, n)?;
    let m = cfg.torus_m;
    let mut total = ZERO;
    for (j, gj) in g.components.iter().enumerate() {
        if gj.is_zero() {
            continue;
        }
        let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
        for &i in &others {
            if gj.depends_on(i) {
                check_margin(z[i], cfg.boundary_margin)?;
            }
        }
        check_product_size(m + 1, n)?;
        let h = torus_composite(gj, others, m, cfg.boundary_margin);
        let mut base = z.to_vec();
        let outer = |xi: C64| -> C64 {
            base[j] = xi;
            op_Tj(&h, j, &base, cfg).unwrap_or(C64::new(f64::NAN, f64::NAN))
        };
        check_margin(z[j], cfg.boundary_margin)?;
        let rule = cauchy_circle_rule_with_kinks(1.0, z[j], 1, m, &gj.kinks_on(j))?;
        let mut outer = outer;
        total += rule.apply(|th| outer(C64::from_polar(1.0, th)));
    }
    Ok(total)
}

/// Principal-value transform Π_j[f](z) = −(1/π) PV∫ f/(ζ_j − z_j)² dA, by
/// subtracting f(z) (the principal value of a constant over the disc is 0).
pub fn op_Pij(f: &ScalarFunction, j: usize, z: &[C64], cfg: &OperatorConfig) -> Result<C64> {
    check_point(z, f.dim())?;
    if j >= f.dim() {
        return Err(DbarError::InvalidArgument(format!("index {j} out of range")));
    }
    if f.smoothness == Smoothness::Unknown {
        return Err(DbarError::UnknownSmoothness);
    }
    if f.is_zero() {
        return Ok(ZERO);
    }
    let s = field::slice(f, z, j)?;
    let fz = s(z[j]);
    let (nr, na) = cfg.disc_rule;
    let sum: C64 = local_polar_nodes(z[j], nr, na)?
        .iter()
        .map(|n| (s(n.zeta) - fz) * n.dir.conj().powu(2) * (n.w / n.u))
        .sum();
    Ok(-sum / PI)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveDiagnostics {
    pub wall_ms: f64,
    pub memo_hits: u64,
    pub memo_misses: u64,
    pub failures: usize,
    pub settings: OperatorConfig,
}

impl SolveDiagnostics {
    pub fn cache_hit_rate(&self) -> f64 {
        let total = self.memo_hits + self.memo_misses;
        if total == 0 {
            0.0
        } else {
            self.memo_hits as f64 / total as f64
        }
    }
}

/// op_T at every point; per-point errors are collected, not fatal.
pub fn solve_dbar(g: &Form01, points: &[Point], cfg: &OperatorConfig) -> (Vec<Result<C64>>, SolveDiagnostics) {
    let start = Instant::now();
    let (h0, m0) = (field::MEMO_HITS.load(Ordering::Relaxed), field::MEMO_MISSES.load(Ordering::Relaxed));
    let values: Vec<Result<C64>> = points.par_iter().map(|p| op_T(g, p, cfg)).collect();
    let diag = SolveDiagnostics {
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        memo_hits: field::MEMO_HITS.load(Ordering::Relaxed) - h0,
        memo_misses: field::MEMO_MISSES.load(Ordering::Relaxed) - m0,
        failures: values.iter().filter(|v| v.is_err()).count(),
        settings: cfg.clone(),
    };
    (values, diag)
}
