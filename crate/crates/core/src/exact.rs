//! Exact operator calculus on polynomials in z and z̄ with Gaussian-rational
//! coefficients.
//!
//! Closed forms per variable, for the monomial z^a z̄^b:
//! - S:  z^{a-b} if a ≥ b, else 0 (ζ̄ = 1/ζ on the circle, then residues);
//! - T:  (z^a z̄^{b+1} − [a ≥ b+1] z^{a-b-1}) / (b+1);
//! - K:  S in every variable.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{DbarError, Result};
use crate::field::{Form01, ScalarFunction, Smoothness};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GaussianRational {
    pub re: BigRational,
    pub im: BigRational,
}

impl GaussianRational {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        GaussianRational { re, im }
    }

    pub fn from_ints(re: i64, im: i64) -> Self {
        GaussianRational::new(BigRational::from_integer(re.into()), BigRational::from_integer(im.into()))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        GaussianRational::new(BigRational::new(num.into(), den.into()), BigRational::zero())
    }

    pub fn zero() -> Self {
        Self::from_ints(0, 0)
    }

    pub fn one() -> Self {
        Self::from_ints(1, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn to_c64(&self) -> C64 {
        C64::new(self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
}

impl Add for &GaussianRational {
    type Output = GaussianRational;
    fn add(self, o: &GaussianRational) -> GaussianRational {
        GaussianRational::new(&self.re + &o.re, &self.im + &o.im)
    }
}

impl Sub for &GaussianRational {
    type Output = GaussianRational;
    fn sub(self, o: &GaussianRational) -> GaussianRational {
        GaussianRational::new(&self.re - &o.re, &self.im - &o.im)
    }
}

impl Mul for &GaussianRational {
    type Output = GaussianRational;
    fn mul(self, o: &GaussianRational) -> GaussianRational {
        GaussianRational::new(&self.re * &o.re - &self.im * &o.im, &self.re * &o.im + &self.im * &o.re)
    }
}

impl Neg for &GaussianRational {
    type Output = GaussianRational;
    fn neg(self) -> GaussianRational {
        GaussianRational::new(-&self.re, -&self.im)
    }
}

impl fmt::Display for GaussianRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.re, self.im)
    }
}

fn parse_rational(s: &str) -> std::result::Result<BigRational, String> {
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a, b),
        None => (s, "1"),
    };
    let num = BigInt::from_str(num.trim()).map_err(|e| format!("bad numerator `{num}`: {e}"))?;
    let den = BigInt::from_str(den.trim()).map_err(|e| format!("bad denominator `{den}`: {e}"))?;
    if den.is_zero() {
        return Err("zero denominator".into());
    }
    Ok(BigRational::new(num, den))
}

/// Exponent vector ((a_1, b_1), …, (a_n, b_n)) for Π z_i^{a_i} z̄_i^{b_i}.
pub type Exponents = Vec<(u32, u32)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialPoly {
    n: usize,
    terms: BTreeMap<Exponents, GaussianRational>,
}

impl MonomialPoly {
    pub fn zero(n: usize) -> Self {
        MonomialPoly { n, terms: BTreeMap::new() }
    }

    pub fn monomial(exps: Exponents, coeff: GaussianRational) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, coeff);
        p
    }

    pub fn one(n: usize) -> Self {
        Self::monomial(vec![(0, 0); n], GaussianRational::one())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &GaussianRational)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, exps: Exponents, coeff: GaussianRational) {
        assert_eq!(exps.len(), self.n, "exponent vector of wrong length");
        if coeff.is_zero() {
            return;
        }
        let sum = match self.terms.get(&exps) {
            Some(c) => c + &coeff,
            None => coeff,
        };
        if sum.is_zero() {
            self.terms.remove(&exps);
        } else {
            self.terms.insert(exps, sum);
        }
    }

    pub fn add(&self, other: &MonomialPoly) -> MonomialPoly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &MonomialPoly) -> MonomialPoly {
        self.add(&other.scale(&GaussianRational::from_ints(-1, 0)))
    }

    pub fn scale(&self, c: &GaussianRational) -> MonomialPoly {
        let mut out = Self::zero(self.n);
        for (e, k) in &self.terms {
            out.add_term(e.clone(), k * c);
        }
        out
    }

    fn map_terms<F: Fn(&Exponents, &GaussianRational, &mut MonomialPoly)>(&self, f: F) -> MonomialPoly {
        let mut out = Self::zero(self.n);
        for (e, c) in &self.terms {
            f(e, c, &mut out);
        }
        out
    }

    /// Multiply by z̄_j².
    pub fn mul_conj_sq(&self, j: usize) -> MonomialPoly {
        self.map_terms(|e, c, out| {
            let mut e2 = e.clone();
            e2[j].1 += 2;
            out.add_term(e2, c.clone());
        })
    }

    /// Bitmask of the variables appearing with a nonzero exponent.
    pub fn dep_mask(&self) -> u64 {
        self.terms
            .keys()
            .flat_map(|e| e.iter().enumerate().filter(|(_, (a, b))| a + b > 0).map(|(i, _)| 1u64 << i))
            .fold(0, |m, b| m | b)
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        let zb: Vec<C64> = z.iter().map(|c| c.conj()).collect();
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .enumerate()
                    .fold(c.to_c64(), |acc, (i, &(a, b))| acc * z[i].powu(a) * zb[i].powu(b))
            })
            .sum()
    }

    pub fn is_holomorphic(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&(_, b)| b == 0))
    }

    /// Numeric oracle for this polynomial.
    pub fn to_function(&self) -> ScalarFunction {
        if self.is_zero() {
            return ScalarFunction::zero(self.n);
        }
        let tag = if self.is_holomorphic() { Smoothness::HolomorphicComponent } else { Smoothness::Smooth };
        let mask = self.dep_mask();
        let terms: Vec<(Exponents, C64)> = self.terms.iter().map(|(e, c)| (e.clone(), c.to_c64())).collect();
        ScalarFunction::new(self.n, tag, move |z| {
            let mut acc = C64::new(0.0, 0.0);
            for (e, c) in &terms {
                let mut t = *c;
                for (i, &(a, b)) in e.iter().enumerate() {
                    if a > 0 {
                        t *= z[i].powu(a);
                    }
                    if b > 0 {
                        t *= z[i].conj().powu(b);
                    }
                }
                acc += t;
            }
            acc
        })
        .with_dep_mask(mask)
    }

    /// Text form: one `(a1 b1 | a2 b2 | …) re im` line per term.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (e, c) in &self.terms {
            let ex: Vec<String> = e.iter().map(|(a, b)| format!("{a} {b}")).collect();
            s.push_str(&format!("({}) {}\n", ex.join(" | "), c));
        }
        s
    }

    pub fn parse(text: &str) -> Result<MonomialPoly> {
        let mut poly: Option<MonomialPoly> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |msg: String| DbarError::Parse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let rest = line.strip_prefix('(').ok_or_else(|| err("expected `(`".into()))?;
            let (exps_txt, coeff_txt) = rest.split_once(')').ok_or_else(|| err("missing `)`".into()))?;
            let mut exps = Vec::new();
            for group in exps_txt.split('|') {
                let nums: Vec<&str> = group.split_whitespace().collect();
                if nums.len() != 2 {
                    return Err(err(format!("exponent group `{}` needs two integers", group.trim())));
                }
                let a = nums[0].parse::<u32>().map_err(|e| err(format!("exponent `{}`: {e}", nums[0])))?;
                let b = nums[1].parse::<u32>().map_err(|e| err(format!("exponent `{}`: {e}", nums[1])))?;
                exps.push((a, b));
            }
            let parts: Vec<&str> = coeff_txt.split_whitespace().collect();
            let (re, im) = match parts.as_slice() {
                [re] => (parse_rational(re).map_err(err)?, BigRational::zero()),
                [re, im] => (parse_rational(re).map_err(err)?, parse_rational(im).map_err(err)?),
                _ => return Err(err("coefficient must be `re` or `re im`".into())),
            };
            let p = poly.get_or_insert_with(|| MonomialPoly::zero(exps.len()));
            if exps.len() != p.n {
                return Err(err(format!("term has {} variables, expected {}", exps.len(), p.n)));
            }
            p.add_term(exps, GaussianRational::new(re, im));
        }
        poly.ok_or(DbarError::Parse { line: 0, msg: "no terms".into() })
    }
}

impl fmt::Display for MonomialPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mono: Vec<String> = e
                    .iter()
                    .enumerate()
                    .flat_map(|(i, &(a, b))| {
                        let mut v = Vec::new();
                        if a > 0 {
                            v.push(format!("z{}^{a}", i + 1));
                        }
                        if b > 0 {
                            v.push(format!("zb{}^{b}", i + 1));
                        }
                        v
                    })
                    .collect();
                format!("({})·{}", c.to_string().replace(' ', ", "), if mono.is_empty() { "1".into() } else { mono.join("·") })
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

fn check_index(p: &MonomialPoly, j: usize) {
    assert!(j < p.n, "variable index {j} out of range for dimension {}", p.n);
}

pub fn exact_S(p: &MonomialPoly, j: usize) -> MonomialPoly {
    check_index(p, j);
    p.map_terms(|e, c, out| {
        let (a, b) = e[j];
        if a >= b {
            let mut e2 = e.clone();
            e2[j] = (a - b, 0);
            out.add_term(e2, c.clone());
        }
    })
}

pub fn exact_T(p: &MonomialPoly, j: usize) -> MonomialPoly {
    check_index(p, j);
    p.map_terms(|e, c, out| {
        let (a, b) = e[j];
        let k = c * &GaussianRational::ratio(1, b as i64 + 1);
        let mut e2 = e.clone();
        e2[j] = (a, b + 1);
        out.add_term(e2, k.clone());
        if a > b {
            let mut e3 = e.clone();
            e3[j] = (a - b - 1, 0);
            out.add_term(e3, -&k);
        }
    })
}

pub fn exact_K(p: &MonomialPoly) -> MonomialPoly {
    (0..p.n).fold(p.clone(), |acc, j| exact_S(&acc, j))
}

/// S_{j-1} … S_0 (0-based; identity for j = 0).
pub fn exact_stilde(p: &MonomialPoly, j: usize) -> MonomialPoly {
    (0..j).fold(p.clone(), |acc, i| exact_S(&acc, i))
}

/// ∂p/∂z̄_j.
pub fn exact_dbar_j(p: &MonomialPoly, j: usize) -> MonomialPoly {
    check_index(p, j);
    p.map_terms(|e, c, out| {
        let (a, b) = e[j];
        if b > 0 {
            let mut e2 = e.clone();
            e2[j] = (a, b - 1);
            out.add_term(e2, c * &GaussianRational::from_ints(b as i64, 0));
        }
    })
}

/// ∂p/∂z_j.
pub fn exact_dz(p: &MonomialPoly, j: usize) -> MonomialPoly {
    check_index(p, j);
    p.map_terms(|e, c, out| {
        let (a, b) = e[j];
        if a > 0 {
            let mut e2 = e.clone();
            e2[j] = (a - 1, b);
            out.add_term(e2, c * &GaussianRational::from_ints(a as i64, 0));
        }
    })
}

pub fn exact_dbar(p: &MonomialPoly) -> Vec<MonomialPoly> {
    (0..p.n).map(|j| exact_dbar_j(p, j)).collect()
}

/// Symbolic ∂̄-closedness: ∂̄_i g_j = ∂̄_j g_i for all pairs.
pub fn check_closed(g: &[MonomialPoly]) -> Result<()> {
    let n = g.len();
    for (i, gi) in g.iter().enumerate() {
        if gi.dim() != n {
            return Err(DbarError::InvalidArgument(format!(
                "component {i} has {} variables in a form with {n} components",
                gi.dim()
            )));
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if exact_dbar_j(&g[j], i) != exact_dbar_j(&g[i], j) {
                return Err(DbarError::ClosednessViolation { i: i + 1, j: j + 1 });
            }
        }
    }
    Ok(())
}

/// T[g] = Σ_j T_j S̃_j[g_j], exactly.
pub fn exact_opT(g: &[MonomialPoly]) -> Result<MonomialPoly> {
    if g.is_empty() {
        return Err(DbarError::InvalidArgument("empty form".into()));
    }
    check_closed(g)?;
    let n = g.len();
    Ok((0..n).fold(MonomialPoly::zero(n), |acc, j| acc.add(&exact_T(&exact_stilde(&g[j], j), j))))
}

/// Numeric form from exact components.
pub fn form_from_polys(g: &[MonomialPoly]) -> Result<Form01> {
    Form01::new(g.iter().map(|p| p.to_function()).collect(), 1.0)
}

/// Every monomial in n variables with each exponent at most `max_exp`.
pub fn all_monomials(n: usize, max_exp: u32) -> Vec<Exponents> {
    let per: Vec<(u32, u32)> = (0..=max_exp).flat_map(|a| (0..=max_exp).map(move |b| (a, b))).collect();
    let mut out: Vec<Exponents> = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|e| per.iter().map(move |&ab| {
            let mut e2 = e.clone();
            e2.push(ab);
            e2
        })).collect();
    }
    out
}

/// |c| magnitude bound used for reporting.
pub fn max_abs_coeff(p: &MonomialPoly) -> f64 {
    p.terms.values().map(|c| c.to_c64().norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mono(e: &[(u32, u32)]) -> MonomialPoly {
        MonomialPoly::monomial(e.to_vec(), GaussianRational::one())
    }

    #[test]
    fn s_examples() {
        assert_eq!(exact_S(&mono(&[(2, 0)]), 0), mono(&[(2, 0)]));
        assert!(exact_S(&mono(&[(0, 1)]), 0).is_zero());
        assert_eq!(exact_S(&mono(&[(2, 1)]), 0), mono(&[(1, 0)]));
    }

    #[test]
    fn t_examples() {
        assert_eq!(exact_T(&mono(&[(0, 0)]), 0), mono(&[(0, 1)]));
        assert_eq!(exact_T(&mono(&[(1, 0)]), 0), mono(&[(1, 1)]).sub(&mono(&[(0, 0)])));
        assert_eq!(exact_T(&mono(&[(0, 1)]), 0), mono(&[(0, 2)]).scale(&GaussianRational::ratio(1, 2)));
    }

    #[test]
    fn k_and_dbar_examples() {
        assert_eq!(exact_K(&mono(&[(1, 0), (1, 0)])), mono(&[(1, 0), (1, 0)]));
        assert!(exact_K(&mono(&[(0, 1), (0, 0)])).is_zero());
        assert_eq!(exact_K(&mono(&[(1, 1), (0, 0)])), mono(&[(0, 0), (0, 0)]));
        let d = exact_dbar(&mono(&[(0, 1), (0, 1)]));
        assert_eq!(d, vec![mono(&[(0, 0), (0, 1)]), mono(&[(0, 1), (0, 0)])]);
        assert!(exact_dbar(&mono(&[(3, 0), (1, 0)])).iter().all(|p| p.is_zero()));
        let d = exact_dbar(&mono(&[(1, 2), (0, 0)]));
        assert_eq!(d[0], mono(&[(1, 1), (0, 0)]).scale(&GaussianRational::from_ints(2, 0)));
        assert!(d[1].is_zero());
    }

    #[test]
    fn opt_examples() {
        let u = mono(&[(0, 1), (0, 1)]);
        assert_eq!(exact_opT(&exact_dbar(&u)).unwrap(), u);
        let g = vec![MonomialPoly::one(2), MonomialPoly::zero(2)];
        assert_eq!(exact_opT(&g).unwrap(), mono(&[(0, 1), (0, 0)]));
        assert!(exact_opT(&[MonomialPoly::zero(2), MonomialPoly::zero(2)]).unwrap().is_zero());
        let bad = vec![mono(&[(0, 0), (0, 1)]), MonomialPoly::zero(2)];
        assert!(matches!(exact_opT(&bad), Err(DbarError::ClosednessViolation { i: 1, j: 2 })));
    }

    #[test]
    fn text_round_trip() {
        let mut p = mono(&[(1, 0), (0, 2)]);
        p.add_term(vec![(0, 3), (1, 1)], GaussianRational::new(BigRational::new(3.into(), 4.into()), BigRational::new((-1).into(), 2.into())));
        let txt = p.to_text();
        assert_eq!(MonomialPoly::parse(&txt).unwrap(), p);
        let with_comments = format!("# header\n\n{txt}# tail\n");
        assert_eq!(MonomialPoly::parse(&with_comments).unwrap(), p);
        assert!(matches!(MonomialPoly::parse("(1 0 | 2) 1"), Err(DbarError::Parse { line: 1, .. })));
        assert!(MonomialPoly::parse("(1 0) 1\n(1 0 | 0 0) 1").is_err());
    }

    #[test]
    fn evaluation_matches_closed_form() {
        let z = [C64::new(0.3, 0.2), C64::new(-0.1, 0.5)];
        let p = mono(&[(2, 1), (0, 1)]);
        let want = z[0] * z[0] * z[0].conj() * z[1].conj();
        assert!((p.eval(&z) - want).norm() < 1e-15);
    }

    #[test]
    fn small_sweep_of_identities() {
        for n in [1usize, 2] {
            for e in all_monomials(n, 3) {
                let p = mono(&e);
                for j in 0..n {
                    assert!(exact_S(&exact_T(&p, j), j).is_zero());
                }
                let g = exact_dbar(&p);
                let t = exact_opT(&g).unwrap();
                assert!(exact_K(&t).is_zero());
                assert_eq!(exact_dbar(&t), g);
                assert_eq!(t, p.sub(&exact_K(&p)));
            }
        }
    }

    proptest! {
        #[test]
        fn opt_is_linear(e1 in proptest::collection::vec((0u32..4, 0u32..4), 2), e2 in proptest::collection::vec((0u32..4, 0u32..4), 2), re in -5i64..5, im in -5i64..5) {
            let c = GaussianRational::from_ints(re, im);
            let p = mono(&e1).scale(&c).add(&mono(&e2));
            let lhs = exact_opT(&exact_dbar(&p)).unwrap();
            let rhs = exact_opT(&exact_dbar(&mono(&e1))).unwrap().scale(&c).add(&exact_opT(&exact_dbar(&mono(&e2))).unwrap());
            prop_assert_eq!(lhs, rhs);
        }
    }
}
