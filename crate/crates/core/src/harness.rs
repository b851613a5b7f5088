//! Batch checks of the operator identities, with machine-readable reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cauchy::{op_K, op_KT, op_T, op_Stilde, op_Tj, stilde_function, DiscScheme, OperatorConfig};
use crate::corpus::{random_points, Tag, TestCase};
use crate::error::{DbarError, Result};
use crate::exact::{exact_dbar_j, exact_dz, exact_opT, form_from_polys};
use crate::field::{wirtinger_fd_with, Form01, Point};
use crate::henkin::{calibrate_signs, op_H, SignTable};
use crate::holder::{estimate_exponent_with, EstimateSettings, HolderEstimate, Sampler};
use crate::C64;

pub const DEFAULT_FD_STEP: f64 = 1e-3;

pub mod check_ids {
    pub const SOLUTION: &str = "solution";
    pub const CANONICAL: &str = "canonical";
    pub const RECONSTRUCTION: &str = "reconstruction";
    pub const HT: &str = "h_equals_t";
    pub const NUMERIC_EXACT: &str = "numeric_exact";
    pub const DERIVATIVE: &str = "derivative_identity";
    pub const DERIVATIVE_STATED: &str = "derivative_identity_stated";
    pub const HOLDER_CLASS: &str = "holder_class";
    pub const HOLDER_NO_LOSS: &str = "holder_no_loss";
}

/// Frozen per-check tolerances.
pub fn default_tolerance(check: &str, case: &TestCase) -> f64 {
    use check_ids::*;
    if case.has(Tag::Zero) {
        return 1e-12;
    }
    let rough = case.is_rough();
    match check {
        SOLUTION | CANONICAL | RECONSTRUCTION => {
            if rough {
                1e-2
            } else {
                1e-3
            }
        }
        HT => {
            if case.n == 1 {
                1e-6
            } else {
                1e-2
            }
        }
        NUMERIC_EXACT => 1e-4,
        DERIVATIVE | DERIVATIVE_STATED => 1e-2,
        HOLDER_CLASS => 0.0,
        HOLDER_NO_LOSS => 0.1,
        _ => 1e-3,
    }
}

/// Operator settings used for a case of dimension n unless overridden.
pub fn reference_config(n: usize) -> OperatorConfig {
    if n >= 3 {
        OperatorConfig::reference_n3()
    } else {
        OperatorConfig::default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check_id: String,
    pub case_id: String,
    pub n: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub settings: OperatorConfig,
    #[serde(skip)]
    pub runtime_ms: f64,
}

impl CheckReport {
    fn new(check: &str, case: &TestCase, residual: f64, tolerance: f64, cfg: &OperatorConfig, start: Instant) -> Self {
        CheckReport {
            check_id: check.into(),
            case_id: case.id.clone(),
            n: case.n,
            residual,
            tolerance,
            // NaN never passes.
            passed: residual <= tolerance,
            settings: cfg.clone(),
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }
}

fn max_over<F>(points: &[Point], f: F) -> Result<f64>
where
    F: Fn(&Point) -> Result<f64> + Sync + Send,
{
    let vals: Vec<f64> = points.par_iter().map(f).collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) }))
}

/// max_j |∂̄_j T[g] − g_j| by central differences.
pub fn check_solution(case: &TestCase, points: &[Point], cfg: &OperatorConfig, h: f64, tol: f64) -> Result<CheckReport> {
    let start = Instant::now();
    let res = max_over(points, |z| {
        let mut worst = 0.0f64;
        for j in 0..case.n {
            let d = wirtinger_fd_with(|p| op_T(&case.g, p, cfg), z, j, h, true)?;
            worst = worst.max((d - case.g.components[j].eval(z)).norm());
        }
        Ok(worst)
    })?;
    Ok(CheckReport::new(check_ids::SOLUTION, case, res, tol, cfg, start))
}

/// max |K[T[g]]|.
pub fn check_canonical(case: &TestCase, points: &[Point], cfg: &OperatorConfig, tol: f64) -> Result<CheckReport> {
    let start = Instant::now();
    let res = max_over(points, |z| Ok(op_KT(&case.g, z, cfg)?.norm()))?;
    Ok(CheckReport::new(check_ids::CANONICAL, case, res, tol, cfg, start))
}

/// max |T[∂̄u] − (u − K[u])|.
pub fn check_reconstruction(case: &TestCase, points: &[Point], cfg: &OperatorConfig, tol: f64) -> Result<CheckReport> {
    let start = Instant::now();
    let u = case
        .u_true
        .as_ref()
        .ok_or_else(|| DbarError::InvalidArgument(format!("case {} has no manufactured solution", case.id)))?;
    let res = max_over(points, |z| Ok((op_T(&case.g, z, cfg)? - (u.eval(z) - op_K(u, z, cfg)?)).norm()))?;
    Ok(CheckReport::new(check_ids::RECONSTRUCTION, case, res, tol, cfg, start))
}

/// max |H[g] − T[g]|.
pub fn check_HT(case: &TestCase, points: &[Point], signs: &SignTable, cfg: &OperatorConfig, tol: f64) -> Result<CheckReport> {
    let start = Instant::now();
    let res = max_over(points, |z| Ok((op_H(&case.g, z, signs, cfg)? - op_T(&case.g, z, cfg)?).norm()))?;
    Ok(CheckReport::new(check_ids::HT, case, res, tol, cfg, start))
}

/// max |T_num[g] − T_exact[g]|.
pub fn check_numeric_exact(case: &TestCase, points: &[Point], cfg: &OperatorConfig, tol: f64) -> Result<CheckReport> {
    let start = Instant::now();
    let ex = case
        .exact
        .as_ref()
        .ok_or_else(|| DbarError::InvalidArgument(format!("case {} has no exact data", case.id)))?;
    let t = exact_opT(&ex.g)?;
    let res = max_over(points, |z| Ok((op_T(&case.g, z, cfg)? - t.eval(z)).norm()))?;
    Ok(CheckReport::new(check_ids::NUMERIC_EXACT, case, res, tol, cfg, start))
}

/// Right-hand side of the derivative identity for ∂_{z_j} T[g] (0-based j).
///
/// `stated`: T[∂g/∂ζ_j] + S_j[S̃_j[g_j] ζ̄_j²].
/// Otherwise the additional terms −Σ_{i>j} T_i S̃_i[ζ̄_j² ∂̄_j g_i] that come
/// from ∂_z S[f] = S[∂f] − S[ζ̄² ∂̄f] inside the later S̃_i are included.
pub fn derivative_rhs(case: &TestCase, j: usize, z: &[C64], cfg: &OperatorConfig, stated: bool) -> Result<C64> {
    let ex = case
        .exact
        .as_ref()
        .ok_or_else(|| DbarError::InvalidArgument(format!("case {} has no exact data for ∂g/∂ζ_j", case.id)))?;
    let dg = form_from_polys(&ex.g.iter().map(|p| exact_dz(p, j)).collect::<Vec<_>>())?;
    let mut rhs = op_T(&dg, z, cfg)?;
    let boundary = ex.g[j].mul_conj_sq(j).to_function();
    rhs += op_Stilde(j + 1, &boundary, z, cfg)?;
    if !stated {
        for i in (j + 1)..case.n {
            let f = exact_dbar_j(&ex.g[i], j).mul_conj_sq(j).to_function();
            rhs -= op_Tj(&stilde_function(i, &f, cfg), i, z, cfg)?;
        }
    }
    Ok(rhs)
}

pub fn check_derivative_identity(case: &TestCase, j: usize, points: &[Point], cfg: &OperatorConfig, h: f64, tol: f64, stated: bool) -> Result<CheckReport> {
    let start = Instant::now();
    if j >= case.n {
        return Err(DbarError::InvalidArgument(format!("index {j} out of range for n = {}", case.n)));
    }
    let res = max_over(points, |z| {
        let lhs = wirtinger_fd_with(|p| op_T(&case.g, p, cfg), z, j, h, false)?;
        Ok((lhs - derivative_rhs(case, j, z, cfg, stated)?).norm())
    })?;
    let id = if stated { check_ids::DERIVATIVE_STATED } else { check_ids::DERIVATIVE };
    let mut r = CheckReport::new(id, case, res, tol, cfg, start);
    r.check_id = format!("{id}_j{}", j + 1);
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderReport {
    pub case_id: String,
    pub alpha_class: f64,
    pub g: HolderEstimate,
    pub tg: HolderEstimate,
    /// Estimates of T[g] restricted to each sector (σ 1-based).
    pub per_sector: Vec<(Vec<usize>, HolderEstimate)>,
}

fn sampler_for(case: &TestCase) -> Sampler {
    match case.rough_point {
        Some((axis, rough)) => Sampler::RoughBiased { n: case.n, axis, rough },
        None => Sampler::Uniform { n: case.n },
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Exponent fits of g and of T[g] on the closed polydisc, and of T[g] per sector.
pub fn holder_report(case: &TestCase, cfg: &OperatorConfig, settings: &EstimateSettings, per_sector: bool) -> Result<HolderReport> {
    // Hölder sampling reaches the distinguished boundary.
    let cfg = OperatorConfig { boundary_margin: 0.0, ..cfg.clone() };
    let sampler = sampler_for(case);
    let g_est = estimate_exponent_with(|z| Ok(case.g.components.iter().map(|c| c.eval(z)).collect()), &sampler, settings)?;
    let tg = |z: &[C64]| -> Result<Vec<C64>> { Ok(vec![op_T(&case.g, z, &cfg)?]) };
    let tg_est = estimate_exponent_with(tg, &sampler, settings)?;
    let mut sectors = Vec::new();
    if per_sector && case.n >= 2 {
        for sigma in permutations(case.n) {
            let s = Sampler::Sector { sigma: sigma.clone(), margin: 0.05, inner: Box::new(sampler.clone()) };
            let est = estimate_exponent_with(tg, &s, settings)?;
            sectors.push((sigma.iter().map(|i| i + 1).collect(), est));
        }
    }
    Ok(HolderReport { case_id: case.id.clone(), alpha_class: case.alpha_class, g: g_est, tg: tg_est, per_sector: sectors })
}

/// Interval check alpha_hat(T[g]) ∈ [α − 0.1, α + 0.15] with r² ≥ 0.9: the
/// residual is the distance outside the window plus any r² shortfall.
pub fn holder_checks(case: &TestCase, rep: &HolderReport, cfg: &OperatorConfig, tol_class: f64, tol_loss: f64) -> Vec<CheckReport> {
    let start = Instant::now();
    let a = case.alpha_class;
    let t = &rep.tg;
    let outside = (t.alpha_hat - t.alpha_hat.clamp(a - 0.1, a + 0.15)).abs();
    let class = outside + (0.9 - t.r2).max(0.0);
    let loss = (rep.g.alpha_hat - t.alpha_hat).max(0.0);
    vec![
        CheckReport::new(check_ids::HOLDER_CLASS, case, class, tol_class, cfg, start),
        CheckReport::new(check_ids::HOLDER_NO_LOSS, case, loss, tol_loss, cfg, start),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub resolution: usize,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub case_id: String,
    pub rows: Vec<ConvergenceRow>,
    /// −slope of log error against log resolution; None when every error is 0.
    pub fitted_order: Option<f64>,
    /// Errors decrease, allowing 10% slack between consecutive rows.
    pub monotone: bool,
}

/// Error of T[g] against the exact backend for the origin-centred product
/// rule without subtraction, angular count = 2 × radial count.
pub fn convergence_study(case: &TestCase, resolutions: &[usize], points: &[Point], base: &OperatorConfig) -> Result<ConvergenceStudy> {
    let ex = case
        .exact
        .as_ref()
        .ok_or_else(|| DbarError::InvalidArgument(format!("case {} has no exact oracle", case.id)))?;
    let t = exact_opT(&ex.g)?;
    let mut rows = Vec::new();
    for &r in resolutions {
        let cfg = OperatorConfig { disc_rule: (r, 2 * r), disc_scheme: DiscScheme::Origin, subtraction: false, ..base.clone() };
        cfg.validate()?;
        let err = max_over(points, |z| Ok((op_T(&case.g, z, &cfg)? - t.eval(z)).norm()))?;
        rows.push(ConvergenceRow { resolution: r, error: err });
    }
    let monotone = rows.windows(2).all(|w| w[1].error <= 1.1 * w[0].error);
    let fitted_order = if rows.len() >= 2 && rows.iter().all(|r| r.error > 0.0) {
        let x: Vec<f64> = rows.iter().map(|r| (r.resolution as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.error.ln()).collect();
        Some(-crate::holder::fit_line(&x, &y).0)
    } else {
        None
    };
    Ok(ConvergenceStudy { case_id: case.id.clone(), rows, fitted_order, monotone })
}

/// Seeded points with every modulus in [lo, hi].
pub fn annulus_points(n: usize, count: usize, lo: f64, hi: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c = (0..n).map(|_| C64::from_polar(rng.gen_range(lo..hi), rng.gen_range(0.0..std::f64::consts::TAU))).collect();
            Point::new(c).expect("inside the disc")
        })
        .collect()
}

/// Seeded points spread over every sector, consecutive moduli at least
/// `margin` apart and all moduli in [0.05, 0.9].
pub fn sector_points(n: usize, per_sector: usize, margin: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (0.05, 0.9);
    let mut out = Vec::new();
    for sigma in permutations(n) {
        let mut made = 0;
        while made < per_sector {
            let mut mods: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
            mods.sort_by(|a, b| b.total_cmp(a));
            if mods.windows(2).any(|w| w[0] - w[1] < margin) {
                continue;
            }
            let mut c = vec![C64::new(0.0, 0.0); n];
            for (rank, &idx) in sigma.iter().enumerate() {
                c[idx] = C64::from_polar(mods[rank], rng.gen_range(0.0..std::f64::consts::TAU));
            }
            out.push(Point::new(c).expect("inside the disc"));
            made += 1;
        }
    }
    out
}

/// Partial override of the quadrature counts; unset fields keep the
/// per-dimension reference values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub radial: Option<usize>,
    pub angular: Option<usize>,
    pub circle: Option<usize>,
    pub torus_m: Option<usize>,
}

impl Grid {
    pub fn apply(&self, base: &OperatorConfig) -> OperatorConfig {
        let mut c = base.clone();
        c.disc_rule = (self.radial.unwrap_or(c.disc_rule.0), self.angular.unwrap_or(c.disc_rule.1));
        c.circle_count = self.circle.unwrap_or(c.circle_count);
        c.torus_m = self.torus_m.unwrap_or(c.torus_m);
        c
    }

    /// Validate against the quadrature guards for every dimension in `dims`.
    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        for &n in dims {
            let c = self.apply(&reference_config(n));
            c.validate()?;
            crate::quadrature::check_product_size(c.torus_m + 1, n)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VerifySettings {
    pub points: usize,
    pub canonical_points: usize,
    pub ht_points_per_sector: usize,
    pub fd_step: f64,
    pub seed: u64,
    pub holder: EstimateSettings,
    pub tolerance_overrides: BTreeMap<String, f64>,
    /// Also report the derivative identity in its uncorrected form.
    pub include_stated_derivative: bool,
    pub grid: Grid,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            points: 12,
            canonical_points: 4,
            ht_points_per_sector: 3,
            fd_step: DEFAULT_FD_STEP,
            seed: 0,
            holder: EstimateSettings::default(),
            tolerance_overrides: BTreeMap::new(),
            include_stated_derivative: false,
            grid: Grid::default(),
        }
    }
}

impl VerifySettings {
    pub fn tolerance(&self, check: &str, case: &TestCase) -> f64 {
        let base = check.split("_j").next().unwrap_or(check);
        self.tolerance_overrides.get(base).copied().unwrap_or_else(|| default_tolerance(base, case))
    }

    pub fn config_for(&self, n: usize) -> OperatorConfig {
        self.grid.apply(&reference_config(n))
    }

    /// The canonical check nests a disc rule inside a full torus; for n ≥ 3
    /// it starts from a coarser grid.
    pub fn canonical_config_for(&self, n: usize) -> OperatorConfig {
        if n >= 3 {
            self.grid.apply(&OperatorConfig { torus_m: 48, disc_rule: (16, 32), ..reference_config(n) })
        } else {
            self.config_for(n)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutput {
    pub reports: Vec<CheckReport>,
    pub henkin_signs: SignTable,
    pub holder: Vec<HolderReport>,
}

impl VerifyOutput {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

/// Calibrate c(n, r) on the monomial cases of dimension n.
pub fn calibrate_for(n: usize, cases: &[TestCase], cfg: &OperatorConfig, seed: u64) -> Result<SignTable> {
    let corpus: Vec<Form01> = cases.iter().filter(|c| c.n == n && c.has(Tag::Monomial) && !c.has(Tag::Zero)).map(|c| c.g.clone()).collect();
    let pts = sector_points(n, 1, 0.1, seed ^ 0xca1);
    calibrate_signs(n, &corpus, &pts, cfg, 1e-4)
}

/// The full suite on the given cases. Reports come back ordered by (check id, case id).
pub fn run_verify(cases: &[TestCase], set: &VerifySettings) -> Result<VerifyOutput> {
    let mut reports = Vec::new();
    let mut signs = SignTable::default();
    let registry = crate::corpus::registry();
    let mut dims: Vec<usize> = cases.iter().map(|c| c.n).collect();
    dims.sort();
    dims.dedup();
    for &n in &dims {
        let pool: Vec<TestCase> = registry.iter().chain(cases.iter()).filter(|c| c.n == n).cloned().collect();
        match calibrate_for(n, &pool, &set.config_for(n), set.seed) {
            Ok(t) => signs.merge(&t),
            Err(DbarError::CalibrationAmbiguous(_) | DbarError::InvalidArgument(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let mut holder = Vec::new();
    for (k, case) in cases.iter().enumerate() {
        let cfg = set.config_for(case.n);
        let seed = set.seed.wrapping_add(1000 * k as u64);
        let pts = random_points(case.n, set.points, 0.95, seed);
        let tol = |c: &str| set.tolerance(c, case);
        reports.push(check_solution(case, &pts, &cfg, set.fd_step, tol(check_ids::SOLUTION))?);
        let cpts = annulus_points(case.n, set.canonical_points, 0.5, 0.9, seed + 1);
        reports.push(check_canonical(case, &cpts, &set.canonical_config_for(case.n), tol(check_ids::CANONICAL))?);
        if case.u_true.is_some() {
            reports.push(check_reconstruction(case, &pts, &cfg, tol(check_ids::RECONSTRUCTION))?);
        }
        if case.exact.is_some() {
            reports.push(check_numeric_exact(case, &pts, &cfg, tol(check_ids::NUMERIC_EXACT))?);
        }
        if case.n <= 2 || case.has(Tag::Monomial) {
            let hpts = sector_points(case.n, set.ht_points_per_sector, 0.1, seed + 2);
            let t = if signs.get(case.n, 0).is_ok() { signs.clone() } else { SignTable::all_plus(case.n) };
            reports.push(check_HT(case, &hpts, &t, &cfg, tol(check_ids::HT))?);
        }
        if case.exact.is_some() {
            let dpts = random_points(case.n, set.points.min(6), 0.9, seed + 3);
            for j in 0..case.n {
                reports.push(check_derivative_identity(case, j, &dpts, &cfg, set.fd_step, tol(check_ids::DERIVATIVE), false)?);
                if set.include_stated_derivative {
                    reports.push(check_derivative_identity(case, j, &dpts, &cfg, set.fd_step, tol(check_ids::DERIVATIVE_STATED), true)?);
                }
            }
        }
        if case.is_rough() {
            let hs = EstimateSettings { seed: set.holder.seed ^ seed, ..set.holder.clone() };
            let rep = holder_report(case, &cfg, &hs, false)?;
            reports.extend(holder_checks(case, &rep, &cfg, tol(check_ids::HOLDER_CLASS), tol(check_ids::HOLDER_NO_LOSS)));
            holder.push(rep);
        }
    }
    reports.sort_by(|a, b| (a.check_id.as_str(), a.case_id.as_str()).cmp(&(b.check_id.as_str(), b.case_id.as_str())));
    Ok(VerifyOutput { reports, henkin_signs: signs, holder })
}

fn fmt_e(x: f64) -> String {
    format!("{x:e}")
}

/// checks.json, checks.csv, results.json (deterministic) and timings.csv.
pub fn write_reports(out: &VerifyOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("checks.json"), serde_json::to_string_pretty(&out.reports).map_err(json_err)?)?;
    let mut w = csv::Writer::from_path(dir.join("checks.csv")).map_err(csv_err)?;
    w.write_record(["check_id", "case_id", "n", "residual", "tolerance", "passed"]).map_err(csv_err)?;
    for r in &out.reports {
        w.write_record([r.check_id.clone(), r.case_id.clone(), r.n.to_string(), fmt_e(r.residual), fmt_e(r.tolerance), r.passed.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Results<'a> {
        henkin_signs: &'a SignTable,
        holder: &'a [HolderReport],
        all_passed: bool,
    }
    let res = Results { henkin_signs: &out.henkin_signs, holder: &out.holder, all_passed: out.all_passed() };
    std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(&res).map_err(json_err)?)?;
    let mut t = std::fs::File::create(dir.join("timings.csv"))?;
    writeln!(t, "check_id,case_id,runtime_ms")?;
    for r in &out.reports {
        writeln!(t, "{},{},{}", r.check_id, r.case_id, fmt_e(r.runtime_ms))?;
    }
    Ok(())
}

pub(crate) fn json_err(e: serde_json::Error) -> DbarError {
    DbarError::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
}

pub(crate) fn csv_err(e: csv::Error) -> DbarError {
    DbarError::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
}
