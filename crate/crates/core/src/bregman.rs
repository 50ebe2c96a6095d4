//! Bregman generators and the divergences they induce.
//!
//! Every generator `G` is strictly convex on an open interval. The calibration
//! solver works with its derivative `g = G'`, the curvature `g'`, the analytic
//! inverse `g⁻¹` and the convex conjugate `F(ν) = ν g⁻¹(ν) − G(g⁻¹(ν))`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Order parameter of the Rényi generator `u^{α+1}/(α+1)`; finite and positive.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(RenyiOrder(alpha))
        } else {
            Err(Error::invalid(format!(
                "renyi order must be a finite positive real, got {alpha}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Generator {
    /// `½u²` on the whole real line.
    Quadratic,
    /// `u log u`.
    KullbackLeibler,
    /// `−log u`.
    EmpiricalLikelihood,
    /// `(√u − 1)²`.
    Hellinger,
    /// `1/(2u)`.
    Inverse,
    /// `u^{α+1}/(α+1)`.
    Renyi(RenyiOrder),
}

/// All six generator kinds, with Rényi at `α = 1/2`.
pub const ALL_KINDS: [Generator; 6] = [
    Generator::Quadratic,
    Generator::KullbackLeibler,
    Generator::EmpiricalLikelihood,
    Generator::Hellinger,
    Generator::Inverse,
    Generator::Renyi(RenyiOrder(0.5)),
];

// Below this |u/v - 1| the closed forms lose digits to cancellation and the
// Taylor series in r = (u - v)/v is used instead.
const SERIES_CUTOFF: f64 = 1e-3;

impl Generator {
    pub fn renyi(alpha: f64) -> Result<Self> {
        Ok(Generator::Renyi(RenyiOrder::new(alpha)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Generator::Quadratic => "quadratic",
            Generator::KullbackLeibler => "kullback_leibler",
            Generator::EmpiricalLikelihood => "empirical_likelihood",
            Generator::Hellinger => "hellinger",
            Generator::Inverse => "inverse",
            Generator::Renyi(_) => "renyi",
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Generator::Quadratic)
    }

    /// Whether `u` is an admissible weight value.
    pub fn in_domain(&self, u: f64) -> bool {
        match self {
            Generator::Quadratic => u.is_finite(),
            _ => u.is_finite() && u > 0.0,
        }
    }

    /// Open interval `g(domain)` as `(lower, upper)`, infinite ends allowed.
    pub fn dual_image(&self) -> (f64, f64) {
        match self {
            Generator::Quadratic | Generator::KullbackLeibler => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            Generator::EmpiricalLikelihood | Generator::Inverse => (f64::NEG_INFINITY, 0.0),
            Generator::Hellinger => (f64::NEG_INFINITY, 1.0),
            Generator::Renyi(_) => (0.0, f64::INFINITY),
        }
    }

    /// Whether `nu` lies inside `g(domain)` with at least `margin` to spare at
    /// each finite end.
    pub fn in_dual_image(&self, nu: f64, margin: f64) -> bool {
        if !nu.is_finite() {
            return false;
        }
        let (lo, hi) = self.dual_image();
        nu > lo + margin && nu < hi - margin
    }

    fn check(&self, what: &'static str, u: f64) -> Result<()> {
        if self.in_domain(u) {
            Ok(())
        } else {
            Err(self.domain_error(what, u))
        }
    }

    fn domain_error(&self, what: &'static str, value: f64) -> Error {
        Error::Domain {
            generator: self.to_string(),
            what,
            value,
        }
    }

    /// `G(u)`.
    pub fn value(&self, u: f64) -> Result<f64> {
        self.check("u", u)?;
        Ok(match self {
            Generator::Quadratic => 0.5 * u * u,
            Generator::KullbackLeibler => u * u.ln(),
            Generator::EmpiricalLikelihood => -u.ln(),
            Generator::Hellinger => {
                let s = u.sqrt() - 1.0;
                s * s
            }
            Generator::Inverse => 0.5 / u,
            Generator::Renyi(a) => u.powf(a.0 + 1.0) / (a.0 + 1.0),
        })
    }

    /// `g(u) = G'(u)`.
    pub fn derivative(&self, u: f64) -> Result<f64> {
        self.check("u", u)?;
        Ok(self.derivative_unchecked(u))
    }

    pub(crate) fn derivative_unchecked(&self, u: f64) -> f64 {
        match self {
            Generator::Quadratic => u,
            Generator::KullbackLeibler => u.ln() + 1.0,
            Generator::EmpiricalLikelihood => -1.0 / u,
            Generator::Hellinger => 1.0 - 1.0 / u.sqrt(),
            Generator::Inverse => -0.5 / (u * u),
            Generator::Renyi(a) => u.powf(a.0),
        }
    }

    /// `g'(u) = G''(u)`, strictly positive on the domain.
    pub fn curvature(&self, u: f64) -> Result<f64> {
        self.check("u", u)?;
        Ok(self.curvature_unchecked(u))
    }

    pub(crate) fn curvature_unchecked(&self, u: f64) -> f64 {
        match self {
            Generator::Quadratic => 1.0,
            Generator::KullbackLeibler => 1.0 / u,
            Generator::EmpiricalLikelihood => 1.0 / (u * u),
            Generator::Hellinger => 0.5 / (u * u.sqrt()),
            Generator::Inverse => 1.0 / (u * u * u),
            Generator::Renyi(a) => a.0 * u.powf(a.0 - 1.0),
        }
    }

    /// `g⁻¹(ν)`; rejects `ν` outside the image of `g`.
    pub fn derivative_inverse(&self, nu: f64) -> Result<f64> {
        if !self.in_dual_image(nu, 0.0) {
            return Err(self.domain_error("nu", nu));
        }
        Ok(self.derivative_inverse_unchecked(nu))
    }

    pub(crate) fn derivative_inverse_unchecked(&self, nu: f64) -> f64 {
        match self {
            Generator::Quadratic => nu,
            Generator::KullbackLeibler => (nu - 1.0).exp(),
            Generator::EmpiricalLikelihood => -1.0 / nu,
            Generator::Hellinger => {
                let t = 1.0 - nu;
                1.0 / (t * t)
            }
            Generator::Inverse => 1.0 / (-2.0 * nu).sqrt(),
            Generator::Renyi(a) => nu.powf(1.0 / a.0),
        }
    }

    /// Convex conjugate `F(ν) = sup_u {νu − G(u)}`, whose derivative is `g⁻¹`.
    pub fn conjugate(&self, nu: f64) -> Result<f64> {
        if !self.in_dual_image(nu, 0.0) {
            return Err(self.domain_error("nu", nu));
        }
        Ok(self.conjugate_unchecked(nu))
    }

    pub(crate) fn conjugate_unchecked(&self, nu: f64) -> f64 {
        match self {
            Generator::Quadratic => 0.5 * nu * nu,
            Generator::KullbackLeibler => (nu - 1.0).exp(),
            Generator::EmpiricalLikelihood => -1.0 - (-nu).ln(),
            Generator::Hellinger => nu / (1.0 - nu),
            Generator::Inverse => -(-2.0 * nu).sqrt(),
            Generator::Renyi(a) => {
                let a = a.0;
                a / (a + 1.0) * nu.powf((a + 1.0) / a)
            }
        }
    }

    /// Scalar Bregman divergence `D_G(u‖v) = G(u) − G(v) − g(v)(u − v)`.
    ///
    /// Evaluated from closed forms in the relative gap `r = (u − v)/v` so the
    /// result is nonnegative and vanishes only at `u = v`.
    pub fn divergence(&self, u: f64, v: f64) -> Result<f64> {
        self.check("u", u)?;
        self.check("v", v)?;
        Ok(self.divergence_unchecked(u, v))
    }

    pub(crate) fn divergence_unchecked(&self, u: f64, v: f64) -> f64 {
        if u == v {
            return 0.0;
        }
        if let Generator::Quadratic = self {
            let diff = u - v;
            return 0.5 * diff * diff;
        }
        let r = (u - v) / v;
        match self {
            Generator::Quadratic => unreachable!(),
            Generator::KullbackLeibler => v * kl_gap(r),
            Generator::EmpiricalLikelihood => el_gap(r),
            Generator::Hellinger => {
                let s = (1.0 + r).sqrt() + 1.0;
                v.sqrt() * r * r / (s * s)
            }
            Generator::Inverse => r * r / (2.0 * v * (1.0 + r)),
            Generator::Renyi(a) => v.powf(a.0 + 1.0) * renyi_gap(a.0, r),
        }
    }

    /// Separable divergence `Σ_j D_G(ω_j‖d_j)`.
    pub fn separable_divergence(&self, omega: &[f64], anchor: &[f64]) -> Result<f64> {
        if omega.len() != anchor.len() {
            return Err(Error::invalid(format!(
                "weight vectors differ in length: {} vs {}",
                omega.len(),
                anchor.len()
            )));
        }
        omega
            .iter()
            .zip(anchor)
            .map(|(&w, &d)| self.divergence(w, d))
            .sum()
    }
}

/// `(1+r)ln(1+r) − r`.
fn kl_gap(r: f64) -> f64 {
    if r.abs() < SERIES_CUTOFF {
        // Σ_{k≥2} (−1)^k r^k / (k(k−1))
        let mut term = r;
        let mut acc = 0.0;
        for k in 2..10 {
            term *= -r;
            acc -= term / (k * (k - 1)) as f64;
        }
        acc
    } else {
        (1.0 + r) * r.ln_1p() - r
    }
}

/// `r − ln(1+r)`.
fn el_gap(r: f64) -> f64 {
    if r.abs() < SERIES_CUTOFF {
        let mut term = r;
        let mut acc = 0.0;
        for k in 2..10 {
            term *= -r;
            acc -= term / k as f64;
        }
        acc
    } else {
        r - r.ln_1p()
    }
}

/// `((1+r)^{a+1} − 1)/(a+1) − r`.
fn renyi_gap(a: f64, r: f64) -> f64 {
    if r.abs() < SERIES_CUTOFF {
        // binomial series: Σ_{k≥2} a(a−1)…(a−k+2)/k! · r^k
        let mut coef = 1.0;
        let mut power = r;
        let mut acc = 0.0;
        for k in 2..10 {
            coef *= (a - (k as f64 - 2.0)) / k as f64;
            power *= r;
            acc += coef * power;
        }
        acc
    } else {
        ((a + 1.0) * r.ln_1p()).exp_m1() / (a + 1.0) - r
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Renyi(a) => write!(f, "renyi:{}", a.0),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k, Some(p)),
            None => (s, None),
        };
        let gen = match kind.to_ascii_lowercase().as_str() {
            "quadratic" => Generator::Quadratic,
            "kullback_leibler" | "kl" => Generator::KullbackLeibler,
            "empirical_likelihood" | "el" => Generator::EmpiricalLikelihood,
            "hellinger" => Generator::Hellinger,
            "inverse" => Generator::Inverse,
            "renyi" => {
                let p = param.ok_or_else(|| {
                    Error::invalid("renyi generator requires an order, e.g. renyi:0.5")
                })?;
                let alpha: f64 = p
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad renyi order {p:?}")))?;
                return Generator::renyi(alpha);
            }
            other => return Err(Error::invalid(format!("unknown generator {other:?}"))),
        };
        if param.is_some() {
            return Err(Error::invalid(format!("generator {kind} takes no parameter")));
        }
        Ok(gen)
    }
}

impl Serialize for Generator {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Generator {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn generator_values() {
        assert_eq!(Generator::Quadratic.value(2.0).unwrap(), 2.0);
        assert_eq!(Generator::EmpiricalLikelihood.value(1.0).unwrap(), 0.0);
        // α = 1, u = 3: 3² / 2
        let expected = 4.5;
        let got = Generator::renyi(1.0).unwrap().value(3.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(Generator::Quadratic.derivative_inverse(5.0).unwrap(), 5.0);
        assert!((Generator::KullbackLeibler.derivative_inverse(1.0).unwrap() - 1.0).abs() < 1e-15);
        let el = Generator::EmpiricalLikelihood;
        assert_eq!(el.derivative(2.0).unwrap(), -0.5);
        assert_eq!(el.curvature(2.0).unwrap(), 0.25);
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(Generator::Quadratic.divergence(3.0, 1.0).unwrap(), 2.0);
        assert_eq!(Generator::KullbackLeibler.divergence(2.0, 2.0).unwrap(), 0.0);
        let el = Generator::EmpiricalLikelihood.divergence(2.0, 1.0).unwrap();
        assert!((el - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((el - 0.306853).abs() < 1e-6);
    }

    #[test]
    fn separable_examples() {
        let q = Generator::Quadratic;
        assert_eq!(q.separable_divergence(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        for gen in ALL_KINDS {
            assert_eq!(gen.separable_divergence(&[0.7, 4.0], &[0.7, 4.0]).unwrap(), 0.0);
        }
        let kl = Generator::KullbackLeibler
            .separable_divergence(&[2.0, 2.0], &[1.0, 1.0])
            .unwrap();
        assert!((kl - 2.0 * (2.0 * 2f64.ln() - 1.0)).abs() < 1e-14);
        assert!((kl - 0.772589).abs() < 1e-6);
        assert!(q.separable_divergence(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn domain_violations_rejected() {
        for gen in ALL_KINDS.iter().filter(|g| !g.is_quadratic()) {
            assert!(gen.value(0.0).is_err());
            assert!(gen.value(-1.0).is_err());
            assert!(gen.divergence(1.0, -2.0).is_err());
        }
        assert!(Generator::Quadratic.value(-3.0).is_ok());
        assert!(Generator::Quadratic.value(f64::NAN).is_err());
        assert!(Generator::EmpiricalLikelihood.derivative_inverse(0.5).is_err());
        assert!(Generator::Hellinger.derivative_inverse(1.0).is_err());
        assert!(Generator::Inverse.derivative_inverse(0.0).is_err());
        assert!(Generator::renyi(0.5).unwrap().derivative_inverse(-1.0).is_err());
        assert!(Generator::renyi(0.0).is_err());
        assert!(Generator::renyi(f64::INFINITY).is_err());
    }

    #[test]
    fn table_closed_forms() {
        // Closed forms written out independently of the r-parameterisation.
        let pts: [(f64, f64); 4] = [(0.3, 2.0), (5.0, 1.5), (1.0, 7.0), (12.0, 0.2)];
        for &(u, v) in &pts {
            let kl = u * (u / v).ln() - u + v;
            let el = -(u / v).ln() + u / v - 1.0;
            let hel = (u.sqrt() - v.sqrt()).powi(2) / v.sqrt();
            let inv = 0.5 * (1.0 / u - 1.0 / v) + (u - v) / (2.0 * v * v);
            let a = 0.5;
            let ren = (u.powf(a + 1.0) - v.powf(a + 1.0)) / (a + 1.0) - v.powf(a) * (u - v);
            let cases = [
                (Generator::KullbackLeibler, kl),
                (Generator::EmpiricalLikelihood, el),
                (Generator::Hellinger, hel),
                (Generator::Inverse, inv),
                (Generator::renyi(a).unwrap(), ren),
            ];
            for (gen, want) in cases {
                let got = gen.divergence(u, v).unwrap();
                assert!(rel_close(got, want, 1e-10), "{gen} ({u},{v}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn conjugate_matches_definition() {
        for gen in ALL_KINDS {
            for &u in &[0.2, 1.0, 3.5, 9.0] {
                let nu = gen.derivative(u).unwrap();
                let direct = nu * u - gen.value(u).unwrap();
                let closed = gen.conjugate(nu).unwrap();
                assert!((direct - closed).abs() <= 1e-12 * (1.0 + direct.abs()), "{gen} at {u}");
            }
        }
    }

    #[test]
    fn parse_and_display() {
        for gen in ALL_KINDS {
            let s = gen.to_string();
            assert_eq!(s.parse::<Generator>().unwrap(), gen);
        }
        assert_eq!("renyi:0.5".parse::<Generator>().unwrap().to_string(), "renyi:0.5");
        assert_eq!("KL".parse::<Generator>().unwrap(), Generator::KullbackLeibler);
        assert!("renyi".parse::<Generator>().is_err());
        assert!("quadratic:2".parse::<Generator>().is_err());
        assert!("cubic".parse::<Generator>().is_err());
        let json = serde_json::to_string(&Generator::renyi(0.25).unwrap()).unwrap();
        assert_eq!(json, "\"renyi:0.25\"");
    }

    fn any_generator() -> impl Strategy<Value = Generator> {
        prop_oneof![
            Just(Generator::Quadratic),
            Just(Generator::KullbackLeibler),
            Just(Generator::EmpiricalLikelihood),
            Just(Generator::Hellinger),
            Just(Generator::Inverse),
            (0.1f64..3.0).prop_map(|a| Generator::renyi(a).unwrap()),
        ]
    }

    fn domain_point(gen: Generator) -> impl Strategy<Value = f64> {
        if gen.is_quadratic() {
            (-50.0f64..50.0).boxed()
        } else {
            (-4.0f64..4.0).prop_map(f64::exp).boxed()
        }
    }

    fn gen_with_pair() -> impl Strategy<Value = (Generator, f64, f64)> {
        any_generator().prop_flat_map(|g| (Just(g), domain_point(g), domain_point(g)))
    }

    proptest! {
        #[test]
        fn nonnegative_and_zero_only_on_diagonal((gen, u, v) in gen_with_pair()) {
            let dv = gen.divergence(u, v).unwrap();
            prop_assert!(dv >= 0.0);
            if (u - v).abs() > 1e-12 {
                prop_assert!(dv > 0.0, "{} D({},{}) = {}", gen, u, v, dv);
            }
            prop_assert_eq!(gen.divergence(u, u).unwrap(), 0.0);
        }

        #[test]
        fn taylor_gap_identity((gen, u, v) in gen_with_pair()) {
            let gu = gen.value(u).unwrap();
            let gv = gen.value(v).unwrap();
            let tangent = gen.derivative(v).unwrap() * (u - v);
            let gap = gu - (gv + tangent);
            let scale = 1.0 + gu.abs() + gv.abs() + tangent.abs();
            prop_assert!((gen.divergence(u, v).unwrap() - gap).abs() <= 1e-12 * scale);
        }

        #[test]
        fn inverse_round_trip((gen, u, _v) in gen_with_pair()) {
            let back = gen.derivative_inverse(gen.derivative(u).unwrap()).unwrap();
            prop_assert!((back - u).abs() <= 1e-12 * u.abs().max(1.0));
        }

        #[test]
        fn derivatives_match_finite_differences((gen, u, _v) in gen_with_pair()) {
            prop_assume!(gen.is_quadratic() || u > 1e-2);
            let h = 1e-6 * u.abs().max(1.0);
            let fd_g = (gen.value(u + h).unwrap() - gen.value(u - h).unwrap()) / (2.0 * h);
            let fd_gp = (gen.derivative(u + h).unwrap() - gen.derivative(u - h).unwrap()) / (2.0 * h);
            let g = gen.derivative(u).unwrap();
            let gp = gen.curvature(u).unwrap();
            // absolute floor guards derivative values that pass through zero
            let gscale = g.abs().max(gen.value(u).unwrap().abs() / u.abs().max(1.0)).max(1e-3);
            prop_assert!((fd_g - g).abs() <= 1e-5 * gscale, "{} g({}) {} vs {}", gen, u, g, fd_g);
            prop_assert!((fd_gp - gp).abs() <= 1e-5 * gp.abs().max(1e-3), "{} g'({}) {} vs {}", gen, u, gp, fd_gp);
        }

        #[test]
        fn derivative_strictly_increasing((gen, u, v) in gen_with_pair()) {
            prop_assume!(u < v);
            prop_assert!(gen.derivative(u).unwrap() < gen.derivative(v).unwrap());
        }
    }
}
