//! Closed-form kinship moments for the normalized model families.
//!
//! All correlations refer to the observed outcome `y` unless stated otherwise.
//! `beta_k[k]` is the correlation between a person and a single ancestor `k`
//! generations back along one line of descent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    AssortativeParams, GrandparentAR2Params, LatentFactorParams, ModelSpec, MultiplicityParams,
};
use crate::{Error, Result};

pub const MAX_K: u32 = 64;

/// Values whose magnitude falls below this are reported as zero.
pub const UNDERFLOW_CLAMP: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentSet {
    pub beta_k: BTreeMap<u32, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sibling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cousin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spousal: Option<f64>,
    /// Correlations of the latent endowment `e`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_beta_k: Option<BTreeMap<u32, f64>>,
    /// Share of `beta_k[k]` carried by the first endowment (multiplicity only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_endowment_share: Option<BTreeMap<u32, f64>>,
}

impl MomentSet {
    /// Moment set holding only the given ancestor correlations, `betas[0]` at k = 1.
    pub fn from_betas(betas: &[f64]) -> Self {
        Self {
            beta_k: betas
                .iter()
                .enumerate()
                .map(|(i, &b)| (i as u32 + 1, b))
                .collect(),
            ..Self::default()
        }
    }

    pub fn beta(&self, k: u32) -> Option<f64> {
        self.beta_k.get(&k).copied()
    }

    pub fn max_k(&self) -> u32 {
        self.beta_k.keys().next_back().copied().unwrap_or(0)
    }

    /// Checks the value range and that `beta_k` keys run 1..=max_k.
    pub fn check(&self) -> Result<()> {
        for (i, k) in self.beta_k.keys().enumerate() {
            if *k != i as u32 + 1 {
                return Err(Error::Argument(format!(
                    "beta_k keys must be contiguous from 1; found gap before k = {k}"
                )));
            }
        }
        let mut all = self.beta_k.values().copied().collect::<Vec<_>>();
        all.extend(self.sibling);
        all.extend(self.cousin);
        all.extend(self.spousal);
        if let Some(l) = &self.latent_beta_k {
            all.extend(l.values().copied());
        }
        if let Some(bad) = all.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("correlation {bad} outside [-1, 1]")));
        }
        Ok(())
    }
}

fn clamp(v: f64) -> f64 {
    if v.abs() < UNDERFLOW_CLAMP {
        0.0
    } else {
        v
    }
}

fn check_k(max_k: u32) -> Result<()> {
    if max_k == 0 || max_k > MAX_K {
        return Err(Error::Argument(format!("max_k = {max_k} must lie in 1..={MAX_K}")));
    }
    Ok(())
}

fn series(max_k: u32, f: impl Fn(u32) -> f64) -> BTreeMap<u32, f64> {
    (1..=max_k).map(|k| (k, clamp(f(k)))).collect()
}

/// Naive geometric extrapolation `beta1^k`.
pub fn iterated_prediction(beta1: f64, k: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if !(beta1.abs() <= 1.0) {
        return Err(Error::Argument(format!("|beta1| = {} exceeds 1", beta1.abs())));
    }
    Ok(beta1.powi(k as i32))
}

/// Grandparent coefficient of the child-parent-grandparent regression implied
/// by a stationary pair of correlations: `(beta2 - beta1^2) / (1 - beta1^2)`.
pub fn duality_gp_coefficient(beta1: f64, beta2: f64) -> Result<f64> {
    let denom = 1.0 - beta1 * beta1;
    if !(denom > 0.0) {
        return Err(Error::Singular(format!(
            "beta1 = {beta1}: the parent and grandparent regressors are perfectly collinear"
        )));
    }
    Ok((beta2 - beta1 * beta1) / denom)
}

pub fn latent_factor_moments(p: &LatentFactorParams, max_k: u32) -> Result<MomentSet> {
    ModelSpec::LatentFactor(*p).check()?;
    check_k(max_k)?;
    let rho2 = p.returns_rho * p.returns_rho;
    let lambda = p.transferability_lambda;
    let sib_latent = lambda * lambda + p.sibling_shared_v * p.v_variance();
    Ok(MomentSet {
        beta_k: series(max_k, |k| rho2 * lambda.powi(k as i32)),
        sibling: Some(rho2 * sib_latent + p.sibling_shared_u * p.u_variance()),
        cousin: Some(rho2 * lambda * lambda * sib_latent),
        spousal: None,
        latent_beta_k: Some(series(max_k, |k| lambda.powi(k as i32))),
        first_endowment_share: None,
    })
}

/// `Delta = beta1^2 - beta2 = (rho^2 - 1) rho^2 lambda^2`.
pub fn latent_factor_extrapolation_error(p: &LatentFactorParams) -> Result<f64> {
    ModelSpec::LatentFactor(*p).check()?;
    let rho2 = p.returns_rho * p.returns_rho;
    let lambda = p.transferability_lambda;
    Ok((rho2 - 1.0) * rho2 * lambda * lambda)
}

/// Yule-Walker recursion for the stationary AR(2).
pub fn ar2_moments(p: &GrandparentAR2Params, max_k: u32) -> Result<MomentSet> {
    ModelSpec::GrandparentAR2(*p).check()?;
    check_k(max_k)?;
    let (a, b) = (p.gamma_p, p.gamma_gp);
    let mut acf = vec![1.0, a / (1.0 - b)];
    for k in 2..=max_k as usize {
        acf.push(a * acf[k - 1] + b * acf[k - 2]);
    }
    // Siblings share both the parent and the grandparent.
    let sibling = 1.0 - p.shock_variance();
    let cousin = a * a * sibling + 2.0 * a * b * acf[1] + b * b;
    Ok(MomentSet {
        beta_k: series(max_k, |k| acf[k as usize]),
        sibling: Some(sibling),
        cousin: Some(cousin),
        ..MomentSet::default()
    })
}

pub fn multiplicity_moments(p: &MultiplicityParams, max_k: u32) -> Result<MomentSet> {
    ModelSpec::Multiplicity(*p).check()?;
    check_k(max_k)?;
    let first = |k: u32| p.rho1_sq * p.lambda1.powi(k as i32);
    let second = |k: u32| p.rho2_sq * p.lambda2.powi(k as i32);
    let beta = |k: u32| first(k) + second(k);
    let (l1, l2) = (p.lambda1 * p.lambda1, p.lambda2 * p.lambda2);
    Ok(MomentSet {
        beta_k: series(max_k, beta),
        sibling: Some(p.rho1_sq * l1 + p.rho2_sq * l2),
        cousin: Some(p.rho1_sq * l1 * l1 + p.rho2_sq * l2 * l2),
        first_endowment_share: Some(
            (1..=max_k)
                .map(|k| {
                    let total = beta(k);
                    (k, if total > 0.0 { first(k) / total } else { 0.0 })
                })
                .collect(),
        ),
        ..MomentSet::default()
    })
}

/// `Delta = rho1^2 (rho1^2 - 1) (lambda1 - lambda2)^2`, valid only when the two
/// endowments fully determine the outcome.
pub fn multiplicity_extrapolation_error(p: &MultiplicityParams) -> Result<f64> {
    ModelSpec::Multiplicity(*p).check()?;
    if (p.rho1_sq + p.rho2_sq - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "rho1_sq + rho2_sq = {} != 1; the closed form needs Var(u) = 0, \
             compute beta1^2 - beta2 from multiplicity_moments instead",
            p.rho1_sq + p.rho2_sq
        )));
    }
    let d = p.lambda1 - p.lambda2;
    Ok(p.rho1_sq * (p.rho1_sq - 1.0) * d * d)
}

pub fn assortative_moments(p: &AssortativeParams, max_k: u32) -> Result<MomentSet> {
    ModelSpec::Assortative(*p).check()?;
    check_k(max_k)?;
    let rho2 = p.returns_rho * p.returns_rho;
    let m = p.assortative_m;
    let step = p.transferability_lambda_tilde * (1.0 + m) / 2.0;
    let lt2 = p.transferability_lambda_tilde * p.transferability_lambda_tilde;
    Ok(MomentSet {
        beta_k: series(max_k, |k| rho2 * step.powi(k as i32)),
        sibling: Some(rho2 * lt2 * (1.0 + m) / 2.0),
        // Paternal cousins: brothers whose wives are each drawn around them.
        cousin: Some(rho2 * lt2 * lt2 * (1.0 + m).powi(3) / 8.0),
        spousal: Some(rho2 * m),
        latent_beta_k: Some(series(max_k, |k| step.powi(k as i32))),
        first_endowment_share: None,
    })
}

/// Analytic moments for any family that has them.
pub fn analytic_moments(spec: &ModelSpec, max_k: u32) -> Result<MomentSet> {
    match spec {
        ModelSpec::LatentFactor(p) => latent_factor_moments(p, max_k),
        ModelSpec::GrandparentAR2(p) => ar2_moments(p, max_k),
        ModelSpec::Multiplicity(p) => multiplicity_moments(p, max_k),
        ModelSpec::Assortative(p) => assortative_moments(p, max_k),
        ModelSpec::PovertyTrap(_) => Err(Error::Argument(
            "the poverty-trap model has no closed-form moments; simulate it".into(),
        )),
    }
}
