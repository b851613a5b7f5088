//! Points, scalar functions and (0,1)-forms on the closed polydisc.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{DbarError, Result};
use crate::C64;

/// Slack allowed when deciding whether a coordinate lies in the closed disc.
pub const DOMAIN_SLACK: f64 = 1e-12;

const MEMO_QUANTUM: f64 = 1e-14;
const MEMO_CAPACITY: usize = 1 << 20;

/// Process-wide memo statistics (diagnostics only).
pub static MEMO_HITS: AtomicU64 = AtomicU64::new(0);
pub static MEMO_MISSES: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<C64>,
}

impl Point {
    pub fn new(coords: Vec<C64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(DbarError::InvalidArgument("point needs at least one coordinate".into()));
        }
        if let Some((i, c)) = coords.iter().enumerate().find(|(_, c)| c.norm() > 1.0 + DOMAIN_SLACK) {
            return Err(DbarError::OutOfDomain(format!("|z_{}| = {}", i + 1, c.norm())));
        }
        Ok(Point { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_interior(&self) -> bool {
        self.coords.iter().all(|c| c.norm() < 1.0)
    }

    /// Smallest distance from a coordinate to the unit circle.
    pub fn boundary_distance(&self) -> f64 {
        self.coords.iter().map(|c| 1.0 - c.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn into_coords(self) -> Vec<C64> {
        self.coords
    }
}

impl Deref for Point {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.coords
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothness {
    HolomorphicComponent,
    Smooth,
    Hoelder(f64),
    Unknown,
}

type Evaluator = Arc<dyn Fn(&[C64]) -> C64 + Send + Sync>;

/// A complex-valued function on the closed polydisc, given as an oracle.
///
/// `deps` is a bitmask of the coordinates the function actually reads; the
/// operators use it to skip integrals in variables that cannot matter and the
/// memo cache uses it to key on the relevant coordinates only.
#[derive(Clone)]
pub struct ScalarFunction {
    eval: Evaluator,
    dim: usize,
    pub smoothness: Smoothness,
    deps: u64,
    zero: bool,
    memo: Option<Arc<Mutex<HashMap<Vec<i64>, C64>>>>,
    // (coordinate, boundary angle) pairs where the function is known to be non-smooth.
    kinks: Arc<Vec<(usize, f64)>>,
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFunction")
            .field("dim", &self.dim)
            .field("smoothness", &self.smoothness)
            .field("deps", &format_args!("{:#b}", self.deps))
            .field("zero", &self.zero)
            .field("memo", &self.memo.is_some())
            .finish()
    }
}

fn full_mask(dim: usize) -> u64 {
    if dim >= 64 {
        u64::MAX
    } else {
        (1u64 << dim) - 1
    }
}

impl ScalarFunction {
    pub fn new<F>(dim: usize, smoothness: Smoothness, f: F) -> Self
    where
        F: Fn(&[C64]) -> C64 + Send + Sync + 'static,
    {
        ScalarFunction { eval: Arc::new(f), dim, smoothness, deps: full_mask(dim), zero: false, memo: None, kinks: Arc::new(Vec::new()) }
    }

    pub fn zero(dim: usize) -> Self {
        let mut f = Self::new(dim, Smoothness::HolomorphicComponent, |_| C64::new(0.0, 0.0));
        f.deps = 0;
        f.zero = true;
        f
    }

    pub fn constant(dim: usize, c: C64) -> Self {
        if c == C64::new(0.0, 0.0) {
            return Self::zero(dim);
        }
        let mut f = Self::new(dim, Smoothness::HolomorphicComponent, move |_| c);
        f.deps = 0;
        f
    }

    /// Declare the coordinates (0-based) the function depends on.
    pub fn with_deps(mut self, vars: &[usize]) -> Self {
        self.deps = vars.iter().fold(0, |m, &v| m | (1 << v));
        self
    }

    pub fn with_dep_mask(mut self, mask: u64) -> Self {
        self.deps = mask & full_mask(self.dim);
        self
    }

    /// Record that the function is non-smooth where ζ_var = e^{i·angle}.
    pub fn with_boundary_kink(mut self, var: usize, angle: f64) -> Self {
        Arc::make_mut(&mut self.kinks).push((var, angle));
        self
    }

    pub fn with_kinks_of(mut self, other: &ScalarFunction) -> Self {
        Arc::make_mut(&mut self.kinks).extend(other.kinks.iter().copied());
        self
    }

    /// Known kink angles in coordinate `var`.
    pub fn kinks_on(&self, var: usize) -> Vec<f64> {
        self.kinks.iter().filter(|(v, _)| *v == var).map(|(_, a)| *a).collect()
    }

    /// Turn on memoisation keyed by the dependent coordinates, quantised at 1e-14.
    pub fn memoized(mut self) -> Self {
        self.memo = Some(Arc::new(Mutex::new(HashMap::new())));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dep_mask(&self) -> u64 {
        self.deps
    }

    pub fn depends_on(&self, i: usize) -> bool {
        self.deps & (1 << i) != 0
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    fn key(&self, z: &[C64]) -> Vec<i64> {
        let mut key = Vec::with_capacity(2 * z.len());
        for (i, c) in z.iter().enumerate() {
            if self.depends_on(i) {
                key.push((c.re / MEMO_QUANTUM).round() as i64);
                key.push((c.im / MEMO_QUANTUM).round() as i64);
            }
        }
        key
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        debug_assert_eq!(z.len(), self.dim);
        let Some(memo) = &self.memo else {
            return (self.eval)(z);
        };
        let key = self.key(z);
        if let Some(v) = memo.lock().unwrap().get(&key) {
            MEMO_HITS.fetch_add(1, Ordering::Relaxed);
            return *v;
        }
        MEMO_MISSES.fetch_add(1, Ordering::Relaxed);
        let v = (self.eval)(z);
        let mut m = memo.lock().unwrap();
        if m.len() >= MEMO_CAPACITY {
            m.clear();
        }
        // First writer wins so every caller sees the same value.
        *m.entry(key).or_insert(v)
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        if self.zero || alpha == C64::new(0.0, 0.0) {
            return Self::zero(self.dim);
        }
        let inner = self.clone();
        let mut f = Self::new(self.dim, self.smoothness, move |z| alpha * inner.eval(z)).with_kinks_of(self);
        f.deps = self.deps;
        f
    }

    pub fn plus(&self, other: &ScalarFunction) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        if self.zero {
            return other.clone();
        }
        if other.zero {
            return self.clone();
        }
        let (a, b) = (self.clone(), other.clone());
        let smooth = worst(self.smoothness, other.smoothness);
        let mut f = Self::new(self.dim, smooth, move |z| a.eval(z) + b.eval(z)).with_kinks_of(self).with_kinks_of(other);
        f.deps = self.deps | other.deps;
        f
    }
}

fn rank(s: Smoothness) -> (u8, f64) {
    match s {
        Smoothness::HolomorphicComponent => (3, 1.0),
        Smoothness::Smooth => (2, 1.0),
        Smoothness::Hoelder(a) => (1, a),
        Smoothness::Unknown => (0, 0.0),
    }
}

/// The weaker of two smoothness tags.
pub fn worst(a: Smoothness, b: Smoothness) -> Smoothness {
    let (ra, rb) = (rank(a), rank(b));
    if ra.0 < rb.0 || (ra.0 == rb.0 && ra.1 <= rb.1) {
        a
    } else {
        b
    }
}

/// g = Σ g_i dz̄_i.
#[derive(Debug, Clone)]
pub struct Form01 {
    pub components: Vec<ScalarFunction>,
    pub alpha_class: f64,
}

impl Form01 {
    pub fn new(components: Vec<ScalarFunction>, alpha_class: f64) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(DbarError::InvalidArgument("form needs at least one component".into()));
        }
        if let Some(c) = components.iter().find(|c| c.dim() != n) {
            return Err(DbarError::InvalidArgument(format!(
                "component of dimension {} in a form on a {n}-polydisc",
                c.dim()
            )));
        }
        Ok(Form01 { components, alpha_class })
    }

    pub fn zero(n: usize) -> Self {
        Form01 { components: (0..n).map(|_| ScalarFunction::zero(n)).collect(), alpha_class: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }

    /// α·self + other.
    pub fn axpy(&self, alpha: C64, other: &Form01) -> Result<Form01> {
        if self.dim() != other.dim() {
            return Err(DbarError::InvalidArgument("forms of different dimension".into()));
        }
        let comps = self.components.iter().zip(&other.components).map(|(a, b)| a.scaled(alpha).plus(b)).collect();
        Form01::new(comps, self.alpha_class.min(other.alpha_class))
    }
}

/// ζ ↦ f(z_1, …, ζ, …, z_n) with ζ in slot j (0-based).
pub fn slice(f: &ScalarFunction, fixed: &[C64], j: usize) -> Result<impl Fn(C64) -> C64> {
    if j >= f.dim() || fixed.len() != f.dim() {
        return Err(DbarError::InvalidArgument(format!(
            "slice index {j} / point dimension {} for a function of {} variables",
            fixed.len(),
            f.dim()
        )));
    }
    let f = f.clone();
    let base = fixed.to_vec();
    Ok(move |zeta: C64| {
        let mut p = base.clone();
        p[j] = zeta;
        f.eval(&p)
    })
}

/// Central-difference Wirtinger derivative of an arbitrary (fallible) oracle.
pub fn wirtinger_fd_with<F>(f: F, z: &[C64], j: usize, h: f64, conjugate: bool) -> Result<C64>
where
    F: Fn(&[C64]) -> Result<C64>,
{
    if !(h > 0.0) {
        return Err(DbarError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if j >= z.len() {
        return Err(DbarError::InvalidArgument(format!("index {j} out of range for dimension {}", z.len())));
    }
    let steps = [C64::new(h, 0.0), C64::new(-h, 0.0), C64::new(0.0, h), C64::new(0.0, -h)];
    if steps.iter().any(|s| (z[j] + s).norm() > 1.0 + DOMAIN_SLACK) {
        return Err(DbarError::StencilOutOfDomain { index: j, step: h });
    }
    let mut p = z.to_vec();
    let mut at = |s: C64| -> Result<C64> {
        p[j] = z[j] + s;
        f(&p)
    };
    let dx = at(steps[0])? - at(steps[1])?;
    let dy = at(steps[2])? - at(steps[3])?;
    let i = C64::new(0.0, 1.0);
    let num = if conjugate { dx + i * dy } else { dx - i * dy };
    Ok(num / (4.0 * h))
}

pub fn wirtinger_fd(f: &ScalarFunction, z: &[C64], j: usize, h: f64, conjugate: bool) -> Result<C64> {
    wirtinger_fd_with(|p| Ok(f.eval(p)), z, j, h, conjugate)
}

/// max over points and pairs i < j of |∂̄_j g_i − ∂̄_i g_j|.
pub fn check_dbar_closed(g: &Form01, points: &[Point], h: f64) -> Result<f64> {
    let n = g.dim();
    let mut worst = 0.0f64;
    for z in points {
        for i in 0..n {
            for j in (i + 1)..n {
                let a = wirtinger_fd(&g.components[i], z, j, h, true)?;
                let b = wirtinger_fd(&g.components[j], z, i, h, true)?;
                worst = worst.max((a - b).norm());
            }
        }
    }
    Ok(worst)
}
