//! Transmission-model families and their parameter validation.
//!
//! Every linear family is normalized so that the observed outcome `y` and each
//! latent endowment have unit variance in every generation. Shock variances
//! are therefore not free parameters; they follow from the stationarity
//! identities and are exposed through the `*_variance` helpers below.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One observed outcome `y = rho * e + u` driven by a latent endowment
/// `e_t = lambda * e_{t-1} + v_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentFactorParams {
    #[serde(alias = "rho")]
    pub returns_rho: f64,
    #[serde(alias = "lambda")]
    pub transferability_lambda: f64,
    /// Correlation of the market-luck shock `u` between siblings.
    #[serde(default)]
    pub sibling_shared_u: f64,
    /// Correlation of the endowment shock `v` between siblings.
    #[serde(default)]
    pub sibling_shared_v: f64,
}

impl LatentFactorParams {
    pub fn new(rho: f64, lambda: f64) -> Self {
        Self {
            returns_rho: rho,
            transferability_lambda: lambda,
            sibling_shared_u: 0.0,
            sibling_shared_v: 0.0,
        }
    }

    pub fn with_sibling_shocks(mut self, shared_u: f64, shared_v: f64) -> Self {
        self.sibling_shared_u = shared_u;
        self.sibling_shared_v = shared_v;
        self
    }

    pub fn u_variance(&self) -> f64 {
        1.0 - self.returns_rho * self.returns_rho
    }

    pub fn v_variance(&self) -> f64 {
        1.0 - self.transferability_lambda * self.transferability_lambda
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        let rho = self.returns_rho;
        let lambda = self.transferability_lambda;
        if !(rho > 0.0 && rho <= 1.0) {
            out.push(Violation::error("returns_rho", format!("rho = {rho} must lie in (0, 1]")));
        }
        if !(0.0..1.0).contains(&lambda) {
            out.push(Violation::error(
                "transferability_lambda",
                format!("lambda = {lambda} must lie in [0, 1)"),
            ));
        }
        for (field, c) in [
            ("sibling_shared_u", self.sibling_shared_u),
            ("sibling_shared_v", self.sibling_shared_v),
        ] {
            if !(0.0..1.0).contains(&c) {
                out.push(Violation::error(field, format!("{field} = {c} must lie in [0, 1)")));
            }
        }
    }
}

/// Structural grandparent effects: `y_t = gamma_p y_{t-1} + gamma_gp y_{t-2} + v_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrandparentAR2Params {
    pub gamma_p: f64,
    pub gamma_gp: f64,
}

impl GrandparentAR2Params {
    pub fn new(gamma_p: f64, gamma_gp: f64) -> Self {
        Self { gamma_p, gamma_gp }
    }

    pub fn is_stationary(&self) -> bool {
        let (a, b) = (self.gamma_p, self.gamma_gp);
        b.abs() < 1.0 && a + b < 1.0 && b - a < 1.0
    }

    /// Stationary autocorrelations at lags one and two.
    pub fn autocorrelations(&self) -> (f64, f64) {
        let r1 = self.gamma_p / (1.0 - self.gamma_gp);
        let r2 = self.gamma_p * r1 + self.gamma_gp;
        (r1, r2)
    }

    /// Innovation variance that makes the stationary variance of `y` one.
    pub fn shock_variance(&self) -> f64 {
        let (r1, r2) = self.autocorrelations();
        1.0 - self.gamma_p * r1 - self.gamma_gp * r2
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        if !self.gamma_p.is_finite() || !self.gamma_gp.is_finite() {
            out.push(Violation::error("gamma_p", "coefficients must be finite"));
            return;
        }
        let (a, b) = (self.gamma_p, self.gamma_gp);
        if b.abs() >= 1.0 {
            out.push(Violation::error("gamma_gp", format!("|gamma_gp| = {} must be < 1", b.abs())));
        }
        if a + b >= 1.0 {
            out.push(Violation::error(
                "gamma_p",
                format!("gamma_p + gamma_gp = {} must be < 1", a + b),
            ));
        }
        if b - a >= 1.0 {
            out.push(Violation::error(
                "gamma_gp",
                format!("gamma_gp - gamma_p = {} must be < 1", b - a),
            ));
        }
    }
}

/// Two independent latent endowments with different transferabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplicityParams {
    pub rho1_sq: f64,
    pub rho2_sq: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl MultiplicityParams {
    pub fn new(rho1_sq: f64, rho2_sq: f64, lambda1: f64, lambda2: f64) -> Self {
        Self {
            rho1_sq,
            rho2_sq,
            lambda1,
            lambda2,
        }
    }

    pub fn u_variance(&self) -> f64 {
        (1.0 - self.rho1_sq - self.rho2_sq).max(0.0)
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        for (field, r) in [("rho1_sq", self.rho1_sq), ("rho2_sq", self.rho2_sq)] {
            if !(r > 0.0 && r < 1.0) {
                out.push(Violation::error(field, format!("{field} = {r} must lie in (0, 1)")));
            }
        }
        // Allow the perfectly-determined case to carry rounding noise.
        if self.rho1_sq + self.rho2_sq > 1.0 + 1e-12 {
            out.push(Violation::error(
                "rho2_sq",
                format!(
                    "rho1_sq + rho2_sq = {} exceeds 1",
                    self.rho1_sq + self.rho2_sq
                ),
            ));
        }
        for (field, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(0.0..1.0).contains(&l) {
                out.push(Violation::error(field, format!("{field} = {l} must lie in [0, 1)")));
            }
        }
    }
}

/// Piecewise-linear transmission with a kink at `threshold_ybar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovertyTrapParams {
    pub gamma_low: f64,
    pub gamma_high: f64,
    pub threshold_ybar: f64,
    #[serde(default = "default_shock_sd")]
    pub shock_sd: f64,
}

fn default_shock_sd() -> f64 {
    0.5
}

impl PovertyTrapParams {
    pub fn new(gamma_low: f64, gamma_high: f64, threshold_ybar: f64) -> Self {
        Self {
            gamma_low,
            gamma_high,
            threshold_ybar,
            shock_sd: default_shock_sd(),
        }
    }

    /// Deterministic part of the transition for a parent outcome `y`.
    pub fn transition(&self, y: f64) -> f64 {
        let gap = y - self.threshold_ybar;
        if y < self.threshold_ybar {
            self.gamma_low * gap
        } else {
            self.gamma_high * gap
        }
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        if !(self.shock_sd > 0.0 && self.shock_sd.is_finite()) {
            out.push(Violation::error(
                "shock_sd",
                format!("shock_sd = {} must be positive", self.shock_sd),
            ));
        }
        if !self.threshold_ybar.is_finite() {
            out.push(Violation::error("threshold_ybar", "threshold must be finite"));
        }
        if !self.gamma_low.is_finite() || !self.gamma_high.is_finite() {
            out.push(Violation::error("gamma_low", "slopes must be finite"));
        } else if self.gamma_low <= self.gamma_high {
            out.push(Violation::warning(
                "gamma_low",
                format!(
                    "gamma_low = {} does not exceed gamma_high = {}; no trap below the threshold",
                    self.gamma_low, self.gamma_high
                ),
            ));
        }
    }
}

/// Two-parent latent factor model; the child's endowment depends on the
/// average of both parents' endowments, whose correlation is `assortative_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssortativeParams {
    #[serde(alias = "rho")]
    pub returns_rho: f64,
    #[serde(alias = "lambda_tilde")]
    pub transferability_lambda_tilde: f64,
    #[serde(alias = "m")]
    pub assortative_m: f64,
}

impl AssortativeParams {
    pub fn new(rho: f64, lambda_tilde: f64, m: f64) -> Self {
        Self {
            returns_rho: rho,
            transferability_lambda_tilde: lambda_tilde,
            assortative_m: m,
        }
    }

    pub fn u_variance(&self) -> f64 {
        1.0 - self.returns_rho * self.returns_rho
    }

    /// `1 - lambda_tilde^2 (1 + m) / 2`.
    pub fn v_variance(&self) -> f64 {
        let l = self.transferability_lambda_tilde;
        1.0 - l * l * (1.0 + self.assortative_m) / 2.0
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        let rho = self.returns_rho;
        let l = self.transferability_lambda_tilde;
        let m = self.assortative_m;
        if !(rho > 0.0 && rho <= 1.0) {
            out.push(Violation::error("returns_rho", format!("rho = {rho} must lie in (0, 1]")));
        }
        if !(0.0..1.0).contains(&l) {
            out.push(Violation::error(
                "transferability_lambda_tilde",
                format!("lambda_tilde = {l} must lie in [0, 1)"),
            ));
        }
        if !(0.0..1.0).contains(&m) {
            out.push(Violation::error("assortative_m", format!("m = {m} must lie in [0, 1)")));
        } else if self.v_variance() < 0.0 {
            out.push(Violation::error(
                "assortative_m",
                format!("implied Var(v) = {} is negative", self.v_variance()),
            ));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params", deny_unknown_fields)]
pub enum ModelSpec {
    #[serde(rename = "latent_factor")]
    LatentFactor(LatentFactorParams),
    #[serde(rename = "grandparent_ar2")]
    GrandparentAR2(GrandparentAR2Params),
    #[serde(rename = "multiplicity")]
    Multiplicity(MultiplicityParams),
    #[serde(rename = "poverty_trap")]
    PovertyTrap(PovertyTrapParams),
    #[serde(rename = "assortative")]
    Assortative(AssortativeParams),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::LatentFactor(_) => "latent_factor",
            ModelSpec::GrandparentAR2(_) => "grandparent_ar2",
            ModelSpec::Multiplicity(_) => "multiplicity",
            ModelSpec::PovertyTrap(_) => "poverty_trap",
            ModelSpec::Assortative(_) => "assortative",
        }
    }

    /// Parent records each non-founder needs.
    pub fn parents_per_child(&self) -> usize {
        match self {
            ModelSpec::Assortative(_) => 2,
            _ => 1,
        }
    }

    /// Whether the family keeps `Var(y) = 1` analytically.
    pub fn is_normalized(&self) -> bool {
        !matches!(self, ModelSpec::PovertyTrap(_))
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    /// Error unless there are no error-severity violations.
    pub fn check(&self) -> crate::Result<()> {
        let errors: Vec<_> = validate(self)
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::InvalidModel(errors))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    fn error(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

/// Lists every violated invariant of `spec`. Never fails.
pub fn validate(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    match spec {
        ModelSpec::LatentFactor(p) => p.violations(&mut out),
        ModelSpec::GrandparentAR2(p) => p.violations(&mut out),
        ModelSpec::Multiplicity(p) => p.violations(&mut out),
        ModelSpec::PovertyTrap(p) => p.violations(&mut out),
        ModelSpec::Assortative(p) => p.violations(&mut out),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(spec: ModelSpec) -> Vec<Violation> {
        validate(&spec)
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .collect()
    }

    #[test]
    fn figure_parameters_are_valid() {
        assert!(validate(&ModelSpec::LatentFactor(LatentFactorParams::new(0.8, 0.7))).is_empty());
        assert!(validate(&ModelSpec::Multiplicity(MultiplicityParams::new(0.3, 0.7, 0.9, 0.5))).is_empty());
        assert!(validate(&ModelSpec::PovertyTrap(PovertyTrapParams::new(0.9, 0.2, -0.3))).is_empty());
        for m in [0.0, 0.5, 0.8] {
            assert!(validate(&ModelSpec::Assortative(AssortativeParams::new(0.8, 0.7, m))).is_empty());
        }
        assert!(validate(&ModelSpec::GrandparentAR2(GrandparentAR2Params::new(0.4, 0.2))).is_empty());
    }

    #[test]
    fn lambda_at_one_rejected() {
        let v = errors(ModelSpec::LatentFactor(LatentFactorParams::new(0.8, 1.0)));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "transferability_lambda");
    }

    #[test]
    fn rho_zero_rejected() {
        let v = errors(ModelSpec::LatentFactor(LatentFactorParams::new(0.0, 0.5)));
        assert_eq!(v[0].field, "returns_rho");
    }

    #[test]
    fn assortative_ranges() {
        // 0.99^2 * 0.95 < 1, so the v-variance is still positive.
        assert!(errors(ModelSpec::Assortative(AssortativeParams::new(0.8, 0.99, 0.9))).is_empty());
        let v = errors(ModelSpec::Assortative(AssortativeParams::new(0.8, 0.99, 1.2)));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "assortative_m");
    }

    #[test]
    fn ar2_stationarity_triangle() {
        assert!(errors(ModelSpec::GrandparentAR2(GrandparentAR2Params::new(0.6, 0.5))).len() == 1);
        assert!(!errors(ModelSpec::GrandparentAR2(GrandparentAR2Params::new(-0.6, 0.5))).is_empty());
        assert!(!errors(ModelSpec::GrandparentAR2(GrandparentAR2Params::new(0.0, -1.0))).is_empty());
        assert!(errors(ModelSpec::GrandparentAR2(GrandparentAR2Params::new(1.2, -0.5))).is_empty());
    }

    #[test]
    fn ar2_shock_variance_normalizes() {
        let p = GrandparentAR2Params::new(0.4, 0.2);
        let (r1, r2) = p.autocorrelations();
        assert!((r1 - 0.5).abs() < 1e-15);
        assert!((r2 - 0.4).abs() < 1e-15);
        assert!((p.shock_variance() - 0.72).abs() < 1e-15);
    }

    #[test]
    fn poverty_trap_order_is_a_warning() {
        let v = validate(&ModelSpec::PovertyTrap(PovertyTrapParams::new(0.5, 0.5, 0.0)));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].severity, Severity::Warning);
        assert!(ModelSpec::PovertyTrap(PovertyTrapParams::new(0.5, 0.5, 0.0)).check().is_ok());
        let mut p = PovertyTrapParams::new(0.9, 0.2, -0.3);
        p.shock_sd = 0.0;
        assert!(ModelSpec::PovertyTrap(p).check().is_err());
    }

    #[test]
    fn multiplicity_sum_above_one() {
        let v = errors(ModelSpec::Multiplicity(MultiplicityParams::new(0.5, 0.6, 0.9, 0.5)));
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn validate_is_pure() {
        let spec = ModelSpec::Assortative(AssortativeParams::new(2.0, 1.5, -0.1));
        assert_eq!(validate(&spec), validate(&spec));
        assert_eq!(validate(&spec).len(), 3);
    }

    #[test]
    fn json_round_trip_and_aliases() {
        let spec: ModelSpec =
            serde_json::from_str(r#"{"model": "latent_factor", "params": {"rho": 0.8, "lambda": 0.7}}"#)
                .unwrap();
        assert_eq!(spec, ModelSpec::LatentFactor(LatentFactorParams::new(0.8, 0.7)));
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"returns_rho\":0.8"));
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn json_unknown_fields_rejected() {
        let bad = r#"{"model": "latent_factor", "params": {"rho": 0.8, "lambda": 0.7, "kappa": 1}}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad).is_err());
        let bad = r#"{"model": "latent_factor", "params": {"rho": 0.8, "lambda": 0.7}, "x": 1}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad).is_err());
        let bad = r#"{"model": "galton", "params": {}}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad).is_err());
    }
}
