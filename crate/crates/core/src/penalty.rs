//! Sparsity penalties `g` with closed-form derivatives, and the admissibility
//! check a penalty must pass before it can drive the adaptive leak.
//!
//! A penalty is admissible for weight `λ` when
//!
//! 1. `g >= 0` on `[0, ∞)` (and subanalytic, which holds for every built-in kind),
//! 2. `g'` is continuous and `g' >= 0`,
//! 3. `-1/λ < g''(x) < 0` for every `x > 0`.
//!
//! `L1` is kept as the non-adaptive baseline. It fails rule 3 (`g'' ≡ 0`) and is
//! reported as baseline-exempt rather than rejected.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PenaltySpec", into = "PenaltySpec")]
pub enum Penalty {
    /// `g(x) = x`
    L1,
    /// `g(x) = 1 - exp(-γx)`
    Exponential { gamma: f64 },
    /// `g(x) = log(x + ε)`
    Logarithmic { epsilon: f64 },
    /// `g(x) = atan(x / η)`
    Arctangent { eta: f64 },
}

/// Wire form, e.g. `{"penalty": "exp", "param": 1.0}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    pub penalty: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

impl Penalty {
    /// Parses a kind name (`l1`, `exp`, `log`, `arctan`) and its parameter.
    pub fn from_name(name: &str, param: Option<f64>) -> Result<Self> {
        let kind = name.to_ascii_lowercase();
        let penalty = match kind.as_str() {
            "l1" => return Ok(Penalty::L1),
            "exp" | "exponential" => Penalty::Exponential {
                gamma: param.unwrap_or(1.0),
            },
            "log" | "logarithmic" => Penalty::Logarithmic {
                epsilon: param.unwrap_or(1.0),
            },
            "arctan" | "atan" | "arctangent" => Penalty::Arctangent {
                eta: param.unwrap_or(1.0),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown penalty {other:?} (expected l1, exp, log or arctan)"
                )))
            }
        };
        let p = penalty.param().unwrap_or(1.0);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Config(format!(
                "penalty parameter must be positive and finite, got {p}"
            )));
        }
        Ok(penalty)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::Exponential { .. } => "exp",
            Penalty::Logarithmic { .. } => "log",
            Penalty::Arctangent { .. } => "arctan",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            Penalty::L1 => None,
            Penalty::Exponential { gamma } => Some(gamma),
            Penalty::Logarithmic { epsilon } => Some(epsilon),
            Penalty::Arctangent { eta } => Some(eta),
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, Penalty::L1)
    }

    pub fn g(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn g_prime(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.slope_unchecked(x))
    }

    pub fn g_second(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.curvature_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: f64) -> f64 {
        match *self {
            Penalty::L1 => x,
            Penalty::Exponential { gamma } => -(-gamma * x).exp_m1(),
            Penalty::Logarithmic { epsilon } => (x + epsilon).ln(),
            Penalty::Arctangent { eta } => (x / eta).atan(),
        }
    }

    pub(crate) fn slope_unchecked(&self, x: f64) -> f64 {
        match *self {
            Penalty::L1 => 1.0,
            Penalty::Exponential { gamma } => gamma * (-gamma * x).exp(),
            Penalty::Logarithmic { epsilon } => 1.0 / (x + epsilon),
            Penalty::Arctangent { eta } => eta / (eta * eta + x * x),
        }
    }

    pub(crate) fn curvature_unchecked(&self, x: f64) -> f64 {
        match *self {
            Penalty::L1 => 0.0,
            Penalty::Exponential { gamma } => -gamma * gamma * (-gamma * x).exp(),
            Penalty::Logarithmic { epsilon } => -1.0 / ((x + epsilon) * (x + epsilon)),
            Penalty::Arctangent { eta } => {
                let d = eta * eta + x * x;
                -2.0 * eta * x / (d * d)
            }
        }
    }

    /// Supremum of `|g''|` on `(0, ∞)` where it has a closed form.
    fn analytic_curvature_sup(&self) -> Option<f64> {
        match *self {
            Penalty::L1 => Some(0.0),
            Penalty::Exponential { gamma } => Some(gamma * gamma),
            Penalty::Logarithmic { epsilon } => Some(1.0 / (epsilon * epsilon)),
            Penalty::Arctangent { .. } => None,
        }
    }

    /// Checks the admissibility rules for weight `lambda` on `grid`.
    pub fn validate_rules(&self, lambda: f64, grid: &SampleGrid) -> RuleReport {
        let mut violations = Vec::new();
        let mut push = |rule: Rule, x: f64, value: f64| {
            // one witness per rule is enough
            if !violations.iter().any(|v: &RuleViolation| v.rule == rule) {
                violations.push(RuleViolation { rule, x, value });
            }
        };
        if !(lambda > 0.0 && lambda.is_finite()) {
            push(Rule::Curvature, f64::NAN, lambda);
        }
        let points = grid.points();
        let mut sup = 0.0f64;
        for &x in std::iter::once(&0.0).chain(points.iter()) {
            let g = self.value_unchecked(x);
            if !(g >= 0.0 && g.is_finite()) {
                push(Rule::NonNegative, x, g);
            }
            let d1 = self.slope_unchecked(x);
            if !(d1 >= 0.0 && d1.is_finite()) {
                push(Rule::Slope, x, d1);
            }
        }
        let bound = -1.0 / lambda;
        // a curvature that decays to zero through subnormals is still negative
        let mut underflowing = false;
        for &x in &points {
            let d2 = self.curvature_unchecked(x);
            sup = sup.max(d2.abs());
            if d2 == 0.0 && underflowing {
                continue;
            }
            underflowing = d2 < 0.0 && d2 > -1e-250;
            if !(d2 < 0.0 && d2 > bound) {
                push(Rule::Curvature, x, d2);
            }
        }
        if let Some(analytic) = self.analytic_curvature_sup() {
            // the supremum sits at x -> 0+, just outside any grid
            sup = analytic;
            if analytic >= 1.0 / lambda {
                push(Rule::Curvature, 0.0, -analytic);
            }
        }
        let passed = violations.is_empty();
        RuleReport {
            penalty: *self,
            lambda,
            passed,
            baseline_exempt: self.is_baseline(),
            violations,
            sup_second_derivative_magnitude: sup,
        }
    }

    /// Largest deviation of the closed-form derivatives from central differences.
    pub fn check_derivatives(&self, xs: &[f64], h: f64) -> f64 {
        xs.iter()
            .map(|&x| {
                let fd1 = (self.value_unchecked(x + h) - self.value_unchecked(x - h)) / (2.0 * h);
                let fd2 = (self.slope_unchecked(x + h) - self.slope_unchecked(x - h)) / (2.0 * h);
                (fd1 - self.slope_unchecked(x))
                    .abs()
                    .max((fd2 - self.curvature_unchecked(x)).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Admissibility as a hard requirement: baseline L1 or a passing report.
    pub fn ensure_admissible(&self, lambda: f64) -> Result<()> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        let report = self.validate_rules(lambda, &SampleGrid::default());
        if report.passed || report.baseline_exempt {
            return Ok(());
        }
        let v = &report.violations[0];
        Err(Error::Config(format!(
            "{self} violates {} at lambda = {lambda}: witness x = {}, value = {}",
            v.rule, v.x, v.value
        )))
    }
}

fn check_domain(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "penalty argument",
            value: x,
        })
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            None => write!(f, "{}", self.name()),
            Some(p) => write!(f, "{}({p})", self.name()),
        }
    }
}

impl TryFrom<PenaltySpec> for Penalty {
    type Error = Error;

    fn try_from(spec: PenaltySpec) -> Result<Self> {
        Penalty::from_name(&spec.penalty, spec.param)
    }
}

impl From<Penalty> for PenaltySpec {
    fn from(p: Penalty) -> Self {
        PenaltySpec {
            penalty: p.name().to_string(),
            param: p.param(),
        }
    }
}

/// Log-spaced sample points on `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for SampleGrid {
    fn default() -> Self {
        SampleGrid {
            lo: 1e-6,
            hi: 1e3,
            count: 10_000,
        }
    }
}

impl SampleGrid {
    pub fn points(&self) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (1..=self.count)
            .map(|k| (a + (b - a) * k as f64 / self.count as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// rule 1: `g >= 0`
    #[serde(rename = "rule-1")]
    NonNegative,
    /// rule 2: `g' >= 0`, continuous
    #[serde(rename = "rule-2")]
    Slope,
    /// rule 3: `-1/λ < g'' < 0`
    #[serde(rename = "rule-3")]
    Curvature,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::NonNegative => "rule-1 (g >= 0)",
            Rule::Slope => "rule-2 (g' >= 0)",
            Rule::Curvature => "rule-3 (-1/lambda < g'' < 0)",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule: Rule,
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub penalty: Penalty,
    pub lambda: f64,
    pub passed: bool,
    pub baseline_exempt: bool,
    pub violations: Vec<RuleViolation>,
    pub sup_second_derivative_magnitude: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXP1: Penalty = Penalty::Exponential { gamma: 1.0 };
    const LOG1: Penalty = Penalty::Logarithmic { epsilon: 1.0 };
    const ATAN1: Penalty = Penalty::Arctangent { eta: 1.0 };
    const ALL: [Penalty; 4] = [Penalty::L1, EXP1, LOG1, ATAN1];

    #[test]
    fn values_at_zero() {
        assert_eq!(EXP1.g(0.0).unwrap(), 0.0);
        assert_eq!(Penalty::L1.g(0.5).unwrap(), 0.5);
        assert_eq!(LOG1.g(0.0).unwrap(), 0.0);
        assert_eq!(EXP1.g_prime(0.0).unwrap(), 1.0);
        assert_eq!(LOG1.g_prime(0.0).unwrap(), 1.0);
        assert_eq!(EXP1.g_second(0.0).unwrap(), -1.0);
        assert_eq!(ATAN1.g_second(0.0).unwrap(), 0.0);
        for x in [0.0, 0.3, 7.0] {
            assert_eq!(Penalty::L1.g_second(x).unwrap(), 0.0);
        }
    }

    #[test]
    fn exp_slope_at_one_matches_finite_difference() {
        let h = 1e-6;
        let fd = (EXP1.g(1.0 + h).unwrap() - EXP1.g(1.0 - h).unwrap()) / (2.0 * h);
        let closed = EXP1.g_prime(1.0).unwrap();
        assert!((closed - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((fd - closed).abs() < 1e-9);
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        for p in ALL {
            assert!(matches!(p.g(-0.1), Err(Error::Domain { .. })));
            assert!(p.g_prime(-1.0).is_err());
            assert!(p.g_second(f64::NAN).is_err());
        }
    }

    #[test]
    fn exp_rule_three_depends_on_lambda() {
        let r = EXP1.validate_rules(0.5, &SampleGrid::default());
        assert!(r.passed, "{r:?}");
        assert_eq!(r.sup_second_derivative_magnitude, 1.0);
        let r = EXP1.validate_rules(2.0, &SampleGrid::default());
        assert!(!r.passed);
        assert!(r.violations.iter().any(|v| v.rule == Rule::Curvature));
        // boundary: gamma^2 == 1/lambda fails the strict inequality
        assert!(!EXP1.validate_rules(1.0, &SampleGrid::default()).passed);
    }

    #[test]
    fn log_rule_three_depends_on_lambda() {
        assert!(LOG1.validate_rules(0.5, &SampleGrid::default()).passed);
        assert!(!LOG1.validate_rules(2.0, &SampleGrid::default()).passed);
        // eps < 1 makes g(0) = log(eps) negative
        let r = Penalty::Logarithmic { epsilon: 0.5 }.validate_rules(0.01, &SampleGrid::default());
        assert!(r.violations.iter().any(|v| v.rule == Rule::NonNegative));
    }

    #[test]
    fn arctan_sup_from_grid() {
        let r = ATAN1.validate_rules(1.0, &SampleGrid::default());
        assert!(r.passed);
        // max of 2x/(1+x^2)^2 is 9/(8 sqrt 3) at x = 1/sqrt 3
        let exact = 9.0 / (8.0 * 3f64.sqrt());
        assert!((r.sup_second_derivative_magnitude - exact).abs() < 1e-5);
        assert!(!ATAN1.validate_rules(1.6, &SampleGrid::default()).passed);
    }

    #[test]
    fn l1_is_baseline_exempt() {
        for lambda in [0.01, 0.3, 5.0] {
            let r = Penalty::L1.validate_rules(lambda, &SampleGrid::default());
            assert!(!r.passed);
            assert!(r.baseline_exempt);
            assert_eq!(r.violations.len(), 1);
            assert_eq!(r.violations[0].rule, Rule::Curvature);
            assert!(Penalty::L1.ensure_admissible(lambda).is_ok());
        }
        assert!(EXP1.ensure_admissible(2.0).is_err());
    }

    #[test]
    fn derivative_checks() {
        let xs: Vec<f64> = (1..=50).map(|k| 0.1 * k as f64).collect();
        for p in ALL {
            let dev = p.check_derivatives(&xs, 1e-5);
            assert!(dev < 1e-6, "{p}: {dev}");
        }
        assert!(Penalty::L1.check_derivatives(&xs, 1e-5) < 1e-9);
    }

    #[test]
    fn serde_wire_form() {
        let p: Penalty = serde_json::from_str(r#"{"penalty": "exp", "param": 1.0}"#).unwrap();
        assert_eq!(p, EXP1);
        assert_eq!(serde_json::to_string(&Penalty::L1).unwrap(), r#"{"penalty":"l1"}"#);
        assert!(serde_json::from_str::<Penalty>(r#"{"penalty": "scad", "param": 1.0}"#).is_err());
        assert!(serde_json::from_str::<Penalty>(r#"{"penalty": "exp", "param": -1.0}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn nonconvex() -> impl Strategy<Value = Penalty> {
            prop_oneof![
                (0.1f64..5.0).prop_map(|gamma| Penalty::Exponential { gamma }),
                (1.0f64..5.0).prop_map(|epsilon| Penalty::Logarithmic { epsilon }),
                (0.1f64..5.0).prop_map(|eta| Penalty::Arctangent { eta }),
            ]
        }

        proptest! {
            #[test]
            fn nonnegative_value_and_slope(p in nonconvex(), x in 0.0f64..1e3) {
                prop_assert!(p.g(x).unwrap() >= 0.0);
                prop_assert!(p.g_prime(x).unwrap() >= 0.0);
            }

            #[test]
            fn strictly_concave(p in nonconvex(), x in 1e-6f64..1e2) {
                prop_assert!(p.g_second(x).unwrap() < 0.0);
            }

            #[test]
            fn slope_non_increasing(p in nonconvex(), x in 0.0f64..50.0, dx in 0.0f64..10.0) {
                prop_assert!(p.g_prime(x + dx).unwrap() <= p.g_prime(x).unwrap());
            }

            #[test]
            fn exp_validation_matches_analytic(gamma in 0.1f64..3.0, lambda in 0.05f64..3.0) {
                prop_assume!((gamma * gamma * lambda - 1.0).abs() > 1e-9);
                let r = Penalty::Exponential { gamma }.validate_rules(lambda, &SampleGrid::default());
                prop_assert_eq!(r.passed, gamma * gamma < 1.0 / lambda);
            }

            #[test]
            fn log_validation_matches_analytic(epsilon in 1.0f64..3.0, lambda in 0.05f64..3.0) {
                prop_assume!((lambda / (epsilon * epsilon) - 1.0).abs() > 1e-9);
                let r = Penalty::Logarithmic { epsilon }.validate_rules(lambda, &SampleGrid::default());
                prop_assert_eq!(r.passed, 1.0 / (epsilon * epsilon) < 1.0 / lambda);
            }
        }
    }
}
