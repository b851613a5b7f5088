//! Empirical Hölder seminorms and exponent fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DbarError, Result};
use crate::field::{Point, ScalarFunction, DOMAIN_SLACK};
use crate::C64;

pub const ALPHA_CAP: f64 = 1.05;
/// Exponents at which the seminorm is reported.
pub const SEMINORM_ALPHAS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct HolderEstimate {
    pub alpha_hat: f64,
    /// (α, max |Δf| / |Δz|^α) over every sampled pair.
    pub seminorm_at: Vec<(f64, f64)>,
    /// (scale, sup |Δf|), ascending in scale.
    pub bins: Vec<(f64, f64)>,
    pub r2: f64,
    pub pair_count: usize,
    pub degenerate: bool,
    pub dropped_scales: Vec<f64>,
}

/// max over pairs of |f(x) − f(y)| / |x − y|^α; coincident pairs are skipped
/// and counted.
pub fn holder_seminorm(f: &ScalarFunction, pairs: &[(Point, Point)], alpha: f64) -> Result<(f64, usize)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(DbarError::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let mut best = 0.0f64;
    let mut skipped = 0;
    for (x, y) in pairs {
        let d = distance(x, y);
        if d == 0.0 {
            skipped += 1;
            continue;
        }
        best = best.max((f.eval(x) - f.eval(y)).norm() / d.powf(alpha));
    }
    Ok((best, skipped))
}

fn distance(x: &[C64], y: &[C64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

fn in_closed(z: &[C64]) -> bool {
    z.iter().all(|c| c.norm() <= 1.0 + DOMAIN_SLACK)
}

fn uniform_disc(rng: &mut ChaCha8Rng) -> C64 {
    let r = rng.gen::<f64>().sqrt();
    C64::from_polar(r, rng.gen_range(0.0..std::f64::consts::TAU))
}

/// Where sample pairs come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    /// Uniform base point, uniform direction on the sphere of ℂⁿ.
    Uniform { n: usize },
    /// Half of the pairs anchored at coordinate `axis` = `rough`, displaced
    /// along that axis only.
    RoughBiased { n: usize, axis: usize, rough: C64 },
    /// Pairs from `inner` with both ends inside the sector σ with the given
    /// gap between consecutive moduli.
    Sector { sigma: Vec<usize>, margin: f64, inner: Box<Sampler> },
}

impl Sampler {
    pub fn dim(&self) -> usize {
        match self {
            Sampler::Uniform { n } | Sampler::RoughBiased { n, .. } => *n,
            Sampler::Sector { inner, .. } => inner.dim(),
        }
    }

    fn uniform_pair(n: usize, s: f64, rng: &mut ChaCha8Rng) -> Option<(Vec<C64>, Vec<C64>)> {
        for _ in 0..32 {
            let x: Vec<C64> = (0..n).map(|_| uniform_disc(rng)).collect();
            let mut dir: Vec<C64> = (0..n).map(|_| C64::new(gauss(rng), gauss(rng))).collect();
            let norm = dir.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|c| *c /= norm);
            for sign in [1.0, -1.0] {
                let y: Vec<C64> = x.iter().zip(&dir).map(|(a, d)| a + d * (sign * s)).collect();
                if in_closed(&y) {
                    return Some((x, y));
                }
            }
        }
        None
    }

    fn draw(&self, s: f64, rng: &mut ChaCha8Rng) -> Option<(Vec<C64>, Vec<C64>)> {
        match self {
            Sampler::Uniform { n } => Self::uniform_pair(*n, s, rng),
            Sampler::RoughBiased { n, axis, rough } => {
                if rng.gen_bool(0.5) {
                    return Self::uniform_pair(*n, s, rng);
                }
                for _ in 0..32 {
                    let mut x: Vec<C64> = (0..*n).map(|_| uniform_disc(rng)).collect();
                    x[*axis] = *rough;
                    let mut y = x.clone();
                    y[*axis] = rough + C64::from_polar(s, rng.gen_range(0.0..std::f64::consts::TAU));
                    if in_closed(&y) {
                        return Some((x, y));
                    }
                }
                None
            }
            Sampler::Sector { sigma, margin, inner } => {
                for _ in 0..64 {
                    let (x, y) = inner.draw(s, rng)?;
                    if in_sector(&x, sigma, *margin) && in_sector(&y, sigma, *margin) {
                        return Some((x, y));
                    }
                }
                None
            }
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; the direction only needs rotational symmetry.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn in_sector(z: &[C64], sigma: &[usize], margin: f64) -> bool {
    sigma.windows(2).all(|w| z[w[0]].norm() - z[w[1]].norm() >= margin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSettings {
    pub scales: Vec<f64>,
    pub pairs_per_scale: usize,
    /// A scale with fewer accepted pairs is dropped.
    pub min_pairs: usize,
    pub seed: u64,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        EstimateSettings { scales: dyadic_scales(12, 2), pairs_per_scale: 48, min_pairs: 16, seed: 0 }
    }
}

/// 2^{-hi}, …, 2^{-lo}, ascending.
pub fn dyadic_scales(hi: i32, lo: i32) -> Vec<f64> {
    (lo..=hi).rev().map(|k| 2f64.powi(-k)).collect()
}

/// Least-squares slope, intercept and r² of y against x.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Fit the exponent of a vector-valued oracle (|Δ| is the Euclidean norm of
/// the component differences).
pub fn estimate_exponent_with<F>(f: F, sampler: &Sampler, settings: &EstimateSettings) -> Result<HolderEstimate>
where
    F: Fn(&[C64]) -> Result<Vec<C64>> + Sync,
{
    if settings.scales.iter().any(|&s| !(2f64.powi(-12) * (1.0 - 1e-12)..=0.25 * (1.0 + 1e-12)).contains(&s)) {
        return Err(DbarError::InvalidArgument("scales must lie in [2^-12, 2^-2]".into()));
    }
    let mut scales = settings.scales.clone();
    scales.sort_by(f64::total_cmp);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut pairs: Vec<(usize, Vec<C64>, Vec<C64>)> = Vec::new();
    for (k, &s) in scales.iter().enumerate() {
        for _ in 0..settings.pairs_per_scale {
            if let Some((x, y)) = sampler.draw(s, &mut rng) {
                pairs.push((k, x, y));
            }
        }
    }
    let deltas: Vec<(usize, f64, f64)> = pairs
        .par_iter()
        .map(|(k, x, y)| -> Result<(usize, f64, f64)> {
            let (fx, fy) = (f(x)?, f(y)?);
            let d = fx.iter().zip(&fy).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            Ok((*k, d, distance(x, y)))
        })
        .collect::<Result<_>>()?;

    let mut bins = Vec::new();
    let mut dropped = Vec::new();
    for (k, &s) in scales.iter().enumerate() {
        let in_bin: Vec<f64> = deltas.iter().filter(|d| d.0 == k).map(|d| d.1).collect();
        if in_bin.len() < settings.min_pairs {
            dropped.push(s);
            continue;
        }
        bins.push((s, in_bin.iter().copied().fold(0.0, f64::max)));
    }
    let seminorm_at = SEMINORM_ALPHAS
        .iter()
        .map(|&a| (a, deltas.iter().filter(|d| d.2 > 0.0).map(|d| d.1 / d.2.powf(a)).fold(0.0, f64::max)))
        .collect();
    let fit: Vec<(f64, f64)> = bins.iter().filter(|b| b.1 > 0.0).map(|b| (b.0.ln(), b.1.ln())).collect();
    let (alpha_hat, r2, degenerate) = if fit.len() < 3 {
        (ALPHA_CAP, 0.0, true)
    } else {
        let (x, y): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        let (slope, _, r2) = fit_line(&x, &y);
        (slope.clamp(0.0, ALPHA_CAP), r2, false)
    };
    Ok(HolderEstimate { alpha_hat, seminorm_at, bins, r2, pair_count: deltas.len(), degenerate, dropped_scales: dropped })
}

pub fn estimate_exponent(f: &ScalarFunction, sampler: &Sampler, settings: &EstimateSettings) -> Result<HolderEstimate> {
    estimate_exponent_with(|z| Ok(vec![f.eval(z)]), sampler, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Smoothness;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn branch(alpha: f64, axis: usize, n: usize) -> ScalarFunction {
        ScalarFunction::new(n, Smoothness::Hoelder(alpha), move |z| {
            let w = C64::new(1.0, 0.0) - z[axis];
            if w == C64::new(0.0, 0.0) {
                w
            } else {
                w.powf(alpha)
            }
        })
    }

    #[test]
    fn seminorm_examples() {
        let k = ScalarFunction::constant(1, c(2.0, 0.0));
        let p = |a: f64, b: f64| (Point::new(vec![c(a, 0.0)]).unwrap(), Point::new(vec![c(b, 0.0)]).unwrap());
        let pairs = vec![p(0.1, 0.2), p(-0.3, 0.5), p(0.4, 0.4)];
        let (v, skipped) = holder_seminorm(&k, &pairs, 0.5).unwrap();
        assert_eq!((v, skipped), (0.0, 1));
        let f = ScalarFunction::new(1, Smoothness::Smooth, |z| z[0].conj());
        assert!((holder_seminorm(&f, &pairs, 1.0).unwrap().0 - 1.0).abs() < 1e-12);
        let b = branch(0.5, 0, 1);
        let near: Vec<_> = [1e-2, 1e-4, 1e-6].iter().map(|&e| p(1.0 - e, 1.0)).collect();
        let (v, _) = holder_seminorm(&b, &near, 0.5).unwrap();
        assert!(v >= 0.9 && v <= 1.0 + 1e-9, "{v}");
        assert!(holder_seminorm(&b, &near, 0.0).is_err());
    }

    #[test]
    fn smooth_function_saturates() {
        let f = ScalarFunction::new(2, Smoothness::Smooth, |z| z[0] * z[1].conj() + z[0] * z[0]);
        let est = estimate_exponent(&f, &Sampler::Uniform { n: 2 }, &EstimateSettings::default()).unwrap();
        assert!(est.alpha_hat >= 0.95, "{est:?}");
        assert!(!est.degenerate);
    }

    #[test]
    fn branch_function_class() {
        for alpha in [0.3, 0.5, 0.9] {
            let f = branch(alpha, 1, 2);
            let sampler = Sampler::RoughBiased { n: 2, axis: 1, rough: c(1.0, 0.0) };
            let est = estimate_exponent(&f, &sampler, &EstimateSettings { seed: 7, ..Default::default() }).unwrap();
            assert!(est.alpha_hat >= alpha - 0.1 && est.alpha_hat <= alpha + 0.15, "{alpha}: {est:?}");
            assert!(est.r2 >= 0.9, "{alpha}: {est:?}");
        }
    }

    #[test]
    fn constant_is_degenerate() {
        let f = ScalarFunction::constant(2, c(1.0, 1.0));
        let est = estimate_exponent(&f, &Sampler::Uniform { n: 2 }, &EstimateSettings::default()).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.alpha_hat, ALPHA_CAP);
    }

    #[test]
    fn sector_sampler_respects_sector() {
        let sampler = Sampler::Sector { sigma: vec![1, 0], margin: 0.1, inner: Box::new(Sampler::Uniform { n: 2 }) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            if let Some((x, y)) = sampler.draw(0.01, &mut rng) {
                assert!(in_sector(&x, &[1, 0], 0.1) && in_sector(&y, &[1, 0], 0.1));
            }
        }
    }

    #[test]
    fn estimates_are_reproducible() {
        let f = branch(0.5, 0, 1);
        let s = Sampler::RoughBiased { n: 1, axis: 0, rough: c(1.0, 0.0) };
        let set = EstimateSettings { seed: 11, ..Default::default() };
        assert_eq!(estimate_exponent(&f, &s, &set).unwrap(), estimate_exponent(&f, &s, &set).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn scale_invariance(re in 0.5f64..3.0, im in -2.0f64..2.0) {
            let f = branch(0.5, 0, 1);
            let g = f.scaled(C64::new(re, im));
            let s = Sampler::RoughBiased { n: 1, axis: 0, rough: c(1.0, 0.0) };
            let set = EstimateSettings { seed: 5, pairs_per_scale: 24, min_pairs: 8, ..Default::default() };
            let a = estimate_exponent(&f, &s, &set).unwrap();
            let b = estimate_exponent(&g, &s, &set).unwrap();
            prop_assert!((a.alpha_hat - b.alpha_hat).abs() < 1e-6);
            let k = C64::new(re, im).norm();
            for ((_, x), (_, y)) in a.seminorm_at.iter().zip(&b.seminorm_at) {
                prop_assert!((x * k - y).abs() <= 1e-9 * y.max(1.0));
            }
        }
    }
}
