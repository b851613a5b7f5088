//! Registry of test cases: manufactured polynomial solutions and rough
//! branch-function data.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{DbarError, Result};
use crate::exact::{exact_dbar, GaussianRational, MonomialPoly};
use crate::field::{check_dbar_closed, wirtinger_fd, Form01, Point, ScalarFunction, Smoothness};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    Smooth,
    Rough,
    Monomial,
    Zero,
}

/// Exact data behind a polynomial case.
#[derive(Debug, Clone)]
pub struct ExactData {
    pub u: MonomialPoly,
    pub g: Vec<MonomialPoly>,
}

#[derive(Debug, Clone)]
pub struct TestCase {
    pub id: String,
    pub n: usize,
    pub g: Form01,
    pub u_true: Option<ScalarFunction>,
    pub alpha_class: f64,
    pub tags: Vec<Tag>,
    pub exact: Option<ExactData>,
    /// (axis, point) where the data is least regular, for biased sampling.
    pub rough_point: Option<(usize, C64)>,
}

impl TestCase {
    pub fn has(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }

    pub fn is_rough(&self) -> bool {
        self.has(Tag::Rough)
    }

    /// Closedness and ∂̄u_true = g at the given interior points.
    pub fn self_check(&self, points: &[Point], h: f64) -> Result<f64> {
        let mut worst = check_dbar_closed(&self.g, points, h)?;
        if let Some(u) = &self.u_true {
            for z in points {
                for (j, gj) in self.g.components.iter().enumerate() {
                    let d = wirtinger_fd(u, z, j, h, true)?;
                    worst = worst.max((d - gj.eval(z)).norm());
                }
            }
        }
        Ok(worst)
    }
}

/// g = ∂̄u for a polynomial u.
pub fn manufactured_case(id: &str, u: MonomialPoly) -> TestCase {
    let gp = exact_dbar(&u);
    let n = u.dim();
    let zero = u.is_zero();
    let g = Form01::new(gp.iter().map(|p| p.to_function()).collect(), 1.0).expect("dimensions agree");
    let tags = if zero { vec![Tag::Zero, Tag::Smooth, Tag::Monomial] } else { vec![Tag::Smooth, Tag::Monomial] };
    TestCase {
        id: id.to_string(),
        n,
        g,
        u_true: Some(u.to_function()),
        alpha_class: 1.0,
        tags,
        exact: Some(ExactData { u, g: gp }),
        rough_point: None,
    }
}

/// Case from closed forms; `g` must be ∂̄u (checked by `self_check`).
pub fn manufactured_closed_form(id: &str, u: ScalarFunction, g: Vec<ScalarFunction>, alpha_class: f64, tags: Vec<Tag>) -> Result<TestCase> {
    if u.smoothness == Smoothness::Unknown {
        return Err(DbarError::InvalidArgument("u must have a known smoothness class to be differentiated".into()));
    }
    let n = u.dim();
    let g = Form01::new(g, alpha_class)?;
    if g.dim() != n {
        return Err(DbarError::InvalidArgument("form and solution dimensions differ".into()));
    }
    Ok(TestCase { id: id.into(), n, g, u_true: Some(u), alpha_class, tags, exact: None, rough_point: None })
}

/// (1 − z)^α, principal branch, with 0^α = 0.
pub fn branch_power(w: C64, alpha: f64) -> C64 {
    let base = C64::new(1.0, 0.0) - w;
    if base == C64::new(0.0, 0.0) {
        base
    } else {
        base.powf(alpha)
    }
}

/// g = (1 − z_i)^α dz̄_j, u = (1 − z_i)^α z̄_j (0-based i ≠ j).
pub fn rough_case(alpha: f64, i: usize, j: usize, n: usize) -> Result<TestCase> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DbarError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n < 2 || i >= n || j >= n {
        return Err(DbarError::InvalidArgument(format!("axes ({i}, {j}) invalid for n = {n}")));
    }
    if i == j {
        return Err(DbarError::InvalidArgument("roughness axis must differ from the form axis".into()));
    }
    let tag = Smoothness::Hoelder(alpha);
    let gj = ScalarFunction::new(n, tag, move |z| branch_power(z[i], alpha)).with_deps(&[i]).with_boundary_kink(i, 0.0);
    let u = ScalarFunction::new(n, tag, move |z| branch_power(z[i], alpha) * z[j].conj())
        .with_deps(&[i, j])
        .with_boundary_kink(i, 0.0);
    let comps = (0..n).map(|k| if k == j { gj.clone() } else { ScalarFunction::zero(n) }).collect();
    let suffix = if i < j { "-swap" } else { "" };
    let mut case = manufactured_closed_form(&format!("rough-a{alpha}-n{n}{suffix}"), u, comps, alpha, vec![Tag::Rough])?;
    case.rough_point = Some((i, C64::new(1.0, 0.0)));
    Ok(case)
}

fn mono(exps: &[(u32, u32)]) -> MonomialPoly {
    MonomialPoly::monomial(exps.to_vec(), GaussianRational::one())
}

/// The fixed case list.
pub fn registry() -> Vec<TestCase> {
    let mut poly = mono(&[(0, 2), (1, 0)]);
    poly.add_term(vec![(1, 0), (0, 3)], GaussianRational::new(num_rational::BigRational::new(1.into(), 2.into()), num_rational::BigRational::from_integer(1.into())));
    poly.add_term(vec![(2, 1), (0, 2)], GaussianRational::from_ints(-3, 0));
    let mut cases = vec![
        manufactured_case("zero-n2", MonomialPoly::zero(2)),
        manufactured_case("mono-n1-conj", mono(&[(0, 2)])),
        manufactured_case("mono-n1-abs", mono(&[(1, 1)])),
        manufactured_case("mono-n1-mixed", mono(&[(2, 3)])),
        manufactured_case("mono-n2-conj2", mono(&[(0, 1), (0, 1)])),
        manufactured_case("mono-n2-mixed", mono(&[(2, 1), (0, 1)])),
        manufactured_case("mono-n2-abs", mono(&[(1, 1), (1, 1)])),
        manufactured_case("mono-n2-poly", poly),
        manufactured_case("mono-n3-conj3", mono(&[(0, 1), (0, 1), (0, 1)])),
        manufactured_case("mono-n3-mixed", mono(&[(1, 0), (0, 2), (0, 1)])),
    ];
    for alpha in [0.3, 0.5, 0.9] {
        cases.push(rough_case(alpha, 1, 0, 2).expect("valid rough case"));
    }
    cases.push(rough_case(0.5, 0, 1, 2).expect("valid rough case"));
    cases
}

pub fn find_case(id: &str) -> Result<TestCase> {
    if let Some(path) = id.strip_prefix("poly:") {
        return load_poly_case(Path::new(path));
    }
    registry()
        .into_iter()
        .find(|c| c.id == id)
        .ok_or_else(|| DbarError::InvalidArgument(format!("unknown case id `{id}`")))
}

pub fn load_poly_case(path: &Path) -> Result<TestCase> {
    let text = std::fs::read_to_string(path)?;
    let u = MonomialPoly::parse(&text)?;
    Ok(manufactured_case(&format!("poly:{}", path.display()), u))
}

/// Seeded interior points with every |z_i| ≤ max_modulus.
pub fn random_points(n: usize, count: usize, max_modulus: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coords = (0..n)
                .map(|_| C64::from_polar(max_modulus * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect();
            Point::new(coords).expect("inside the disc")
        })
        .collect()
}
