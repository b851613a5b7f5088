//! Command-line front end. `run` returns the process exit code:
//! 0 pass, 1 check or runtime failure, 2 configuration error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cauchy::op_T;
use crate::corpus::{find_case, random_points, registry, Tag, TestCase};
use crate::error::{DbarError, Result};
use crate::field::{Form01, Point};
use crate::harness::{self, check_ids, Grid, VerifySettings};
use crate::henkin::{calibrate_signs, op_H, SignTable};
use crate::holder::EstimateSettings;
use crate::C64;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dbar", about = "Solution operators for the dbar-equation on the polydisc")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the check suite and write JSON + CSV reports.
    Verify,
    /// Evaluate T[g] (and H[g] with --henkin) at the points of a CSV file.
    Solve,
    /// Hölder exponent estimates of g and T[g].
    Holder,
    /// Determine the Henkin sign constants c(n, r).
    Calibrate,
    /// Error of T[g] against the exact backend over radial resolutions.
    Convergence,
    /// List the registry.
    ListCases,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Case id or poly:<file>; repeatable.
    #[arg(long = "case", global = true)]
    pub cases: Vec<String>,
    /// CSV of points, one per row: re_1,im_1,…,re_n,im_n.
    #[arg(long, global = true)]
    pub points: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also evaluate the Henkin formula.
    #[arg(long, global = true)]
    pub henkin: bool,
    /// Disc rule counts "radial,angular".
    #[arg(long, global = true)]
    pub grid: Option<String>,
    #[arg(long = "fd-step", global = true)]
    pub fd_step: Option<f64>,
    /// Dimension for calibrate, or a registry filter.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Tolerance override "check_id=value"; repeatable.
    #[arg(long = "tolerance", global = true)]
    pub tolerances: Vec<String>,
    /// Radial counts for the convergence study, comma separated.
    #[arg(long, global = true)]
    pub resolutions: Option<String>,
    /// Sign table (as written by calibrate) for --henkin.
    #[arg(long, global = true)]
    pub signs: Option<PathBuf>,
    /// Also report the uncorrected derivative identity.
    #[arg(long = "stated-derivative", global = true)]
    pub stated_derivative: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n: Option<usize>,
    pub cases: Vec<String>,
    pub grid: Grid,
    pub fd_step: Option<f64>,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    pub out: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub resolutions: Option<Vec<usize>>,
    pub signs: Option<PathBuf>,
    pub henkin: bool,
    pub stated_derivative: bool,
}

const KNOWN_CHECKS: &[&str] = &[
    check_ids::SOLUTION,
    check_ids::CANONICAL,
    check_ids::RECONSTRUCTION,
    check_ids::HT,
    check_ids::NUMERIC_EXACT,
    check_ids::DERIVATIVE,
    check_ids::DERIVATIVE_STATED,
    check_ids::HOLDER_CLASS,
    check_ids::HOLDER_NO_LOSS,
];

fn config_err(msg: impl Into<String>) -> DbarError {
    DbarError::InvalidArgument(msg.into())
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| config_err(format!("bad {what} entry '{p}'"))))
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("config {}: {e}", path.display())))
    }

    /// Config file (if any) with the command-line flags laid over it.
    pub fn from_flags(flags: &Flags) -> Result<Self> {
        let mut c = match &flags.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if !flags.cases.is_empty() {
            c.cases = flags.cases.clone();
        }
        if let Some(p) = &flags.points {
            c.points = Some(p.clone());
        }
        if let Some(p) = &flags.out {
            c.out = Some(p.clone());
        }
        if let Some(s) = flags.seed {
            c.seed = s;
        }
        c.henkin |= flags.henkin;
        c.stated_derivative |= flags.stated_derivative;
        if let Some(g) = &flags.grid {
            let v = parse_list(g, "grid")?;
            if v.len() != 2 {
                return Err(config_err(format!("--grid expects radial,angular, got '{g}'")));
            }
            c.grid.radial = Some(v[0]);
            c.grid.angular = Some(v[1]);
        }
        if let Some(h) = flags.fd_step {
            c.fd_step = Some(h);
        }
        if let Some(n) = flags.n {
            c.n = Some(n);
        }
        for t in &flags.tolerances {
            let (k, v) = t.split_once('=').ok_or_else(|| config_err(format!("--tolerance expects check=value, got '{t}'")))?;
            let v: f64 = v.trim().parse().map_err(|_| config_err(format!("bad tolerance value '{v}'")))?;
            c.tolerances.insert(k.trim().to_string(), v);
        }
        if let Some(r) = &flags.resolutions {
            c.resolutions = Some(parse_list(r, "resolution")?);
        }
        if let Some(s) = &flags.signs {
            c.signs = Some(s.clone());
        }
        Ok(c)
    }

    /// Resolve the case list (the registry, optionally filtered by n, when empty).
    pub fn resolve_cases(&self) -> Result<Vec<TestCase>> {
        let cases: Vec<TestCase> = if self.cases.is_empty() {
            registry().into_iter().filter(|c| self.n.map_or(true, |n| c.n == n)).collect()
        } else {
            self.cases.iter().map(|id| find_case(id)).collect::<Result<_>>()?
        };
        if cases.is_empty() {
            return Err(config_err("no cases selected"));
        }
        Ok(cases)
    }

    /// Guards checked before any computation.
    pub fn validate(&self, cases: &[TestCase]) -> Result<()> {
        if let Some(h) = self.fd_step {
            // Probe points keep a margin of 0.05 ≥ 5h.
            if !(h > 0.0 && h <= 0.01) {
                return Err(config_err(format!("fd_step must lie in (0, 0.01], got {h}")));
            }
        }
        for (k, v) in &self.tolerances {
            if !KNOWN_CHECKS.contains(&k.as_str()) {
                return Err(config_err(format!("unknown check id '{k}' in tolerances")));
            }
            if !(*v >= 0.0) {
                return Err(config_err(format!("tolerance for {k} must be >= 0, got {v}")));
            }
        }
        if let Some(r) = &self.resolutions {
            if r.is_empty() || r.iter().any(|&x| x < 2) {
                return Err(config_err("resolutions must be non-empty and >= 2"));
            }
        }
        let mut dims: Vec<usize> = cases.iter().map(|c| c.n).collect();
        dims.sort();
        dims.dedup();
        self.grid.validate(&dims)
    }

    pub fn verify_settings(&self) -> VerifySettings {
        let mut s = VerifySettings { seed: self.seed, grid: self.grid.clone(), ..VerifySettings::default() };
        if let Some(h) = self.fd_step {
            s.fd_step = h;
        }
        s.tolerance_overrides = self.tolerances.clone();
        s.include_stated_derivative = self.stated_derivative;
        s.holder = EstimateSettings { seed: self.seed, ..EstimateSettings::default() };
        s
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("dbar-out"))
    }
}

fn init_threads() {
    if let Some(k) = std::env::var("DBAR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A second initialisation in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
}

/// Parse arguments and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    init_threads();
    let cfg = match ExperimentConfig::from_flags(&cli.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    match cli.command {
        Command::Verify => cmd_verify(&cfg),
        Command::Solve => cmd_solve(&cfg),
        Command::Holder => cmd_holder(&cfg),
        Command::Calibrate => cmd_calibrate(&cfg),
        Command::Convergence => cmd_convergence(&cfg),
        Command::ListCases => cmd_list_cases(&cfg),
    }
}

// Resolve and validate; Err carries the exit code.
fn prepare(cfg: &ExperimentConfig) -> std::result::Result<Vec<TestCase>, i32> {
    let cases = cfg.resolve_cases().and_then(|c| cfg.validate(&c).map(|_| c));
    cases.map_err(|e| {
        eprintln!("config error: {e}");
        EXIT_CONFIG
    })
}

fn runtime_failure(e: DbarError) -> i32 {
    eprintln!("error: {e}");
    EXIT_FAIL
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> i32 {
    let cases = match prepare(cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out = match harness::run_verify(&cases, &cfg.verify_settings()) {
        Ok(o) => o,
        Err(e) => return runtime_failure(e),
    };
    if let Err(e) = harness::write_reports(&out, &cfg.out_dir()) {
        return runtime_failure(e);
    }
    for r in &out.reports {
        println!(
            "{} {} {} residual={:e} tolerance={:e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.check_id,
            r.case_id,
            r.residual,
            r.tolerance
        );
    }
    let failed = out.reports.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed; reports in {}", out.reports.len(), failed, cfg.out_dir().display());
    if failed == 0 {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

/// Rows of 2n floats; a non-numeric first row is taken as a header.
pub fn read_points(path: &Path, n: usize) -> Result<Vec<Vec<C64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(harness::csv_err)?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(harness::csv_err)?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
        let vals = match vals {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(_) => return Err(DbarError::Parse { line: line + 1, msg: "non-numeric field".into() }),
        };
        if vals.len() != 2 * n {
            return Err(DbarError::Parse { line: line + 1, msg: format!("expected {} values, got {}", 2 * n, vals.len()) });
        }
        out.push(vals.chunks(2).map(|c| C64::new(c[0], c[1])).collect());
    }
    Ok(out)
}

fn format_coords(z: &[C64]) -> String {
    z.iter().map(|c| format!("{:e} {:e}", c.re, c.im)).collect::<Vec<_>>().join(" ")
}

fn load_signs(cfg: &ExperimentConfig, n: usize) -> Result<SignTable> {
    match &cfg.signs {
        Some(p) => {
            let t: SignTable = serde_json::from_str(&std::fs::read_to_string(p)?)
                .map_err(|e| config_err(format!("sign table {}: {e}", p.display())))?;
            for r in 0..n {
                t.get(n, r)?;
            }
            Ok(t)
        }
        // The calibrated constants are all +1.
        None => Ok(SignTable::all_plus(n)),
    }
}

pub fn cmd_solve(cfg: &ExperimentConfig) -> i32 {
    let cases = match prepare(cfg) {
        Ok(c) if c.len() == 1 => c,
        Ok(_) => {
            eprintln!("config error: solve takes exactly one --case");
            return EXIT_CONFIG;
        }
        Err(code) => return code,
    };
    let case = &cases[0];
    let Some(path) = &cfg.points else {
        eprintln!("config error: solve needs --points");
        return EXIT_CONFIG;
    };
    let pts = match read_points(path, case.n) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let signs = if cfg.henkin {
        match load_signs(cfg, case.n) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_CONFIG;
            }
        }
    } else {
        None
    };
    let op = harness::reference_config(case.n);
    let op = cfg.grid.apply(&op);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut code = EXIT_PASS;
    let header = ["case_id", "coords", "value_re", "value_im", "method"];
    let _ = wtr.write_record(header);
    for z in &pts {
        let coords = format_coords(z);
        let mut methods: Vec<(&str, Box<dyn Fn(&Point) -> Result<C64>>)> = vec![("T", Box::new(|p: &Point| op_T(&case.g, p, &op)))];
        if let Some(s) = &signs {
            let s = s.clone();
            let (g, op) = (case.g.clone(), op.clone());
            methods.push(("H", Box::new(move |p: &Point| op_H(&g, p, &s, &op))));
        }
        for (name, f) in &methods {
            let (v, method) = match Point::new(z.clone()) {
                Err(e) => (Err(e), format!("{name}:exterior")),
                Ok(p) => (f(&p), name.to_string()),
            };
            let row = match v {
                Ok(v) => [case.id.clone(), coords.clone(), format!("{:e}", v.re), format!("{:e}", v.im), method],
                Err(e) => {
                    eprintln!("point {coords}: {e}");
                    code = EXIT_FAIL;
                    let m = if method.contains(':') { method } else { format!("{method}:failed") };
                    [case.id.clone(), coords.clone(), "NaN".into(), "NaN".into(), m]
                }
            };
            let _ = wtr.write_record(&row);
        }
    }
    let bytes = match wtr.into_inner() {
        Ok(b) => b,
        Err(e) => return runtime_failure(DbarError::Io(std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))),
    };
    let _ = std::io::stdout().write_all(&bytes);
    if let Some(dir) = &cfg.out {
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join("solve.csv"), &bytes)) {
            return runtime_failure(e.into());
        }
    }
    code
}

pub fn cmd_holder(cfg: &ExperimentConfig) -> i32 {
    let mut cfg = cfg.clone();
    if cfg.cases.is_empty() {
        cfg.cases = vec!["rough-a0.5-n2".into()];
    }
    let cases = match prepare(&cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let settings = EstimateSettings { seed: cfg.seed, ..EstimateSettings::default() };
    let mut reports = Vec::new();
    for case in &cases {
        let op = cfg.grid.apply(&harness::reference_config(case.n));
        match harness::holder_report(case, &op, &settings, true) {
            Ok(r) => reports.push(r),
            Err(e) => return runtime_failure(e),
        }
    }
    let mut bins = String::from("case_id,function,scale,sup_delta\n");
    for r in &reports {
        for (name, est) in [("g", &r.g), ("Tg", &r.tg)] {
            for (s, d) in &est.bins {
                bins.push_str(&format!("{},{name},{s:e},{d:e}\n", r.case_id));
            }
        }
        println!(
            "{} alpha_hat(g)={:e} alpha_hat(Tg)={:e} r2(Tg)={:e}{}",
            r.case_id,
            r.g.alpha_hat,
            r.tg.alpha_hat,
            r.tg.r2,
            if r.tg.degenerate { " degenerate" } else { "" }
        );
    }
    let dir = cfg.out_dir();
    let json = match serde_json::to_string_pretty(&reports) {
        Ok(j) => j,
        Err(e) => return runtime_failure(harness::json_err(e)),
    };
    let res = std::fs::create_dir_all(&dir)
        .and_then(|_| std::fs::write(dir.join("holder.json"), json))
        .and_then(|_| std::fs::write(dir.join("holder_bins.csv"), bins));
    match res {
        Ok(()) => EXIT_PASS,
        Err(e) => runtime_failure(e.into()),
    }
}

pub fn cmd_calibrate(cfg: &ExperimentConfig) -> i32 {
    let n = cfg.n.unwrap_or(2);
    let corpus: Vec<Form01> = if cfg.cases.is_empty() {
        registry().into_iter().filter(|c| c.n == n && c.has(Tag::Monomial) && !c.has(Tag::Zero)).map(|c| c.g).collect()
    } else {
        let cases = match prepare(cfg) {
            Ok(c) => c,
            Err(code) => return code,
        };
        if let Some(c) = cases.iter().find(|c| c.n != n) {
            eprintln!("config error: case {} has n = {}, calibrating n = {n}", c.id, c.n);
            return EXIT_CONFIG;
        }
        cases.into_iter().filter(|c| !c.has(Tag::Zero)).map(|c| c.g).collect()
    };
    if n == 0 {
        eprintln!("config error: n must be >= 1");
        return EXIT_CONFIG;
    }
    let op = cfg.grid.apply(&harness::reference_config(n));
    let pts = harness::sector_points(n, 1, 0.1, cfg.seed ^ 0xca1);
    let table = match calibrate_signs(n, &corpus, &pts, &op, 1e-4) {
        Ok(t) => t,
        Err(e) => return runtime_failure(e),
    };
    let json = match serde_json::to_string_pretty(&table) {
        Ok(j) => j,
        Err(e) => return runtime_failure(harness::json_err(e)),
    };
    println!("{json}");
    let dir = cfg.out_dir();
    match std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join("signs.json"), &json)) {
        Ok(()) => EXIT_PASS,
        Err(e) => runtime_failure(e.into()),
    }
}

pub fn cmd_convergence(cfg: &ExperimentConfig) -> i32 {
    let mut cfg = cfg.clone();
    if cfg.cases.is_empty() {
        cfg.cases = vec!["mono-n2-conj2".into()];
    }
    let cases = match prepare(&cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let res = cfg.resolutions.clone().unwrap_or_else(|| vec![16, 32, 64, 128]);
    let mut csv = String::from("case_id,resolution,error,fitted_order\n");
    let mut code = EXIT_PASS;
    for case in &cases {
        let pts = random_points(case.n, 20, 0.9, cfg.seed);
        let base = cfg.grid.apply(&harness::reference_config(case.n));
        let study = match harness::convergence_study(case, &res, &pts, &base) {
            Ok(s) => s,
            Err(e) => return runtime_failure(e),
        };
        let order = study.fitted_order.map_or("NaN".to_string(), |o| format!("{o:e}"));
        for r in &study.rows {
            csv.push_str(&format!("{},{},{:e},{order}\n", case.id, r.resolution, r.error));
        }
        println!("{} fitted_order={order} monotone={}", case.id, study.monotone);
        if !study.monotone {
            code = EXIT_FAIL;
        }
    }
    print!("{csv}");
    let dir = cfg.out_dir();
    match std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join("convergence.csv"), &csv)) {
        Ok(()) => code,
        Err(e) => runtime_failure(e.into()),
    }
}

pub fn cmd_list_cases(cfg: &ExperimentConfig) -> i32 {
    for c in registry().iter().filter(|c| cfg.n.map_or(true, |n| c.n == n)) {
        let tags: Vec<String> = c.tags.iter().map(|t| format!("{t:?}").to_lowercase()).collect();
        println!("{}\tn={}\talpha={}\t{}", c.id, c.n, c.alpha_class, tags.join(","));
    }
    EXIT_PASS
}
