//! Regression and moment estimators over pedigree panels.
//!
//! Every regression runs on outcomes standardized within generation, so a
//! bivariate slope estimates a correlation. Observations are built from the
//! persons that have every requested relative; the ancestor line is the
//! father line unless [`PairOptions::line`] says otherwise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::moments::MomentSet;
use crate::ols::{ols, RegressionResult};
use crate::pedigree::{AncestorLine, Pedigree};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairOptions {
    pub line: AncestorLine,
    /// Restrict observations to descendants born in this generation.
    pub descendant_generation: Option<u32>,
}

impl PairOptions {
    pub fn in_generation(generation: u32) -> Self {
        Self {
            descendant_generation: Some(generation),
            ..Self::default()
        }
    }
}

/// Extra regressors measured on relatives of the child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    MotherY,
    SpouseY,
}

impl Control {
    pub fn column(&self) -> &'static str {
        match self {
            Control::MotherY => "mother_y",
            Control::SpouseY => "spouse_y",
        }
    }
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Control {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mother_y" => Ok(Control::MotherY),
            "spouse_y" => Ok(Control::SpouseY),
            other => Err(Error::Argument(format!(
                "unknown control `{other}` (expected mother_y or spouse_y)"
            ))),
        }
    }
}

/// Regressor name for the ancestor `k` generations back.
pub fn lag_name(k: u32) -> String {
    match k {
        1 => "parent_y".to_string(),
        2 => "grandparent_y".to_string(),
        k => format!("ancestor{k}_y"),
    }
}

fn check_line(ped: &Pedigree, line: AncestorLine) -> Result<()> {
    if line == AncestorLine::Maternal && !ped.columns().mother_id {
        return Err(Error::MissingColumn("mother_id".into()));
    }
    Ok(())
}

/// Slope of descendant `y` on the `y` of the ancestor `k` generations back.
pub fn beta_k_estimate(ped: &Pedigree, k: u32, opts: &PairOptions) -> Result<RegressionResult> {
    multigen_regression(ped, &[k], &[], opts)
}

/// Child `y` on the listed ancestors' `y` plus relative controls.
pub fn multigen_regression(
    ped: &Pedigree,
    ancestor_lags: &[u32],
    extra_controls: &[Control],
    opts: &PairOptions,
) -> Result<RegressionResult> {
    if ancestor_lags.is_empty() {
        return Err(Error::Argument("at least one ancestor lag is required".into()));
    }
    if let Some(&k) = ancestor_lags.iter().find(|&&k| k == 0) {
        return Err(Error::Argument(format!("ancestor lag {k} must be at least 1")));
    }
    let span = ped.generation_count();
    if let Some(&k) = ancestor_lags.iter().find(|&&k| k >= span) {
        return Err(Error::InsufficientData(format!(
            "lag {k} needs at least {} generations; the panel has {span}",
            k + 1
        )));
    }
    check_line(ped, opts.line)?;
    for c in extra_controls {
        match c {
            Control::MotherY if !ped.columns().mother_id => {
                return Err(Error::MissingColumn("mother_id".into()))
            }
            Control::SpouseY if !ped.columns().spouse_id => {
                return Err(Error::MissingColumn("spouse_id".into()))
            }
            _ => {}
        }
    }

    let z = ped.standardized_y();
    let width = ancestor_lags.len() + extra_controls.len();
    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); width];
    let mut row = vec![0.0; width];
    'person: for (i, p) in ped.persons().iter().enumerate() {
        if opts.descendant_generation.is_some_and(|g| g != p.generation) {
            continue;
        }
        for (j, &k) in ancestor_lags.iter().enumerate() {
            match ped.ancestor(i, k, opts.line) {
                Some(a) => row[j] = z[a],
                None => continue 'person,
            }
        }
        for (j, c) in extra_controls.iter().enumerate() {
            let rel = match c {
                Control::MotherY => ped.mother(i),
                Control::SpouseY => ped.spouse(i),
            };
            match rel {
                Some(r) => row[ancestor_lags.len() + j] = z[r],
                None => continue 'person,
            }
        }
        y.push(z[i]);
        for (col, v) in cols.iter_mut().zip(&row) {
            col.push(*v);
        }
    }
    if y.is_empty() {
        return Err(Error::InsufficientData(
            "no person has every requested relative".into(),
        ));
    }

    let names: Vec<String> = ancestor_lags
        .iter()
        .map(|&k| lag_name(k))
        .chain(extra_controls.iter().map(|c| c.column().to_string()))
        .collect();
    let regressors: Vec<(&str, &[f64])> = names
        .iter()
        .zip(&cols)
        .map(|(n, c)| (n.as_str(), c.as_slice()))
        .collect();
    ols(&y, &regressors)
}

/// Child `y` on a sibling's `y`; every ordered sibling pair is one
/// observation, so each unordered pair enters twice.
pub fn sibling_regression(ped: &Pedigree, include_parent: bool, opts: &PairOptions) -> Result<RegressionResult> {
    check_line(ped, opts.line)?;
    let parent_of = |i: usize| match opts.line {
        AncestorLine::Paternal => ped.father(i),
        AncestorLine::Maternal => ped.mother(i),
    };
    let mut families: BTreeMap<(u64, Option<u64>), Vec<usize>> = BTreeMap::new();
    for (i, p) in ped.persons().iter().enumerate() {
        if opts.descendant_generation.is_some_and(|g| g != p.generation) {
            continue;
        }
        let Some(father) = p.father_id else { continue };
        if parent_of(i).is_none() {
            continue;
        }
        families.entry((father, p.mother_id)).or_default().push(i);
    }

    let z = ped.standardized_y();
    let (mut y, mut sib, mut parent) = (Vec::new(), Vec::new(), Vec::new());
    for members in families.values() {
        for &a in members {
            for &b in members {
                if a == b {
                    continue;
                }
                y.push(z[a]);
                sib.push(z[b]);
                if include_parent {
                    parent.push(z[parent_of(a).expect("filtered above")]);
                }
            }
        }
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("no sibling pairs in the panel".into()));
    }
    if include_parent {
        ols(&y, &[("parent_y", &parent), ("sibling_y", &sib)])
    } else {
        ols(&y, &[("sibling_y", &sib)])
    }
}

/// Slope of dynasty-mean `y` in generation `to` on dynasty-mean `y` in
/// generation `from` across dynasties.
pub fn group_level_estimate(ped: &Pedigree, generation_pair: (u32, u32)) -> Result<RegressionResult> {
    let (from, to) = generation_pair;
    if from >= to {
        return Err(Error::Argument(format!(
            "generation pair ({from}, {to}) must be increasing"
        )));
    }
    let z = ped.standardized_y();
    let mut groups: BTreeMap<u64, [(f64, usize); 2]> = BTreeMap::new();
    for (i, p) in ped.persons().iter().enumerate() {
        let slot = if p.generation == from {
            0
        } else if p.generation == to {
            1
        } else {
            continue;
        };
        let g = groups.entry(p.dynasty_id).or_insert([(0.0, 0); 2]);
        g[slot].0 += z[i];
        g[slot].1 += 1;
    }
    let (mut prev, mut next) = (Vec::new(), Vec::new());
    for g in groups.values() {
        if g[0].1 > 0 && g[1].1 > 0 {
            prev.push(g[0].0 / g[0].1 as f64);
            next.push(g[1].0 / g[1].1 as f64);
        }
    }
    if prev.len() < 30 {
        return Err(Error::InsufficientData(format!(
            "only {} groups observed in both generations; at least 30 are needed",
            prev.len()
        )));
    }
    ols(&next, &[("group_mean_y_prev", &prev)])
}

pub fn r2_of(result: &RegressionResult) -> f64 {
    result.r_squared
}

/// Residual norm above which a single-factor fit is flagged as a misfit.
pub const MISFIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rho_sq: f64,
    pub lambda: f64,
    pub residual_norm: f64,
    pub n_moments: usize,
    pub misfit: bool,
}

/// Recovers `(rho^2, lambda)` of the latent factor model from ancestor
/// correlations `beta_k = rho^2 lambda^k`.
///
/// Two moments are inverted exactly. With more, the sum of squared moment
/// residuals is minimized from every point of a 10x10 start grid on
/// `(0, 1]^2` with a projected Levenberg-Marquardt refinement.
pub fn fit_latent_factor(moments: &MomentSet) -> Result<FitResult> {
    let b1 = moments
        .beta(1)
        .ok_or_else(|| Error::Argument("beta_k[1] is required".into()))?;
    let b2 = moments
        .beta(2)
        .ok_or_else(|| Error::Argument("beta_k[2] is required".into()))?;
    moments.check()?;
    if !(b1 > 0.0 && b2 > 0.0) {
        return Err(Error::Infeasible(format!(
            "beta_1 = {b1} and beta_2 = {b2} must both be positive"
        )));
    }
    if b2 >= b1 {
        return Err(Error::Infeasible(format!(
            "beta_2 = {b2} does not decay below beta_1 = {b1}"
        )));
    }
    let n = moments.beta_k.len();
    if n == 2 {
        let lambda = b2 / b1;
        let mut rho_sq = b1 * b1 / b2;
        if rho_sq > 1.0 + 1e-12 {
            return Err(Error::Infeasible(format!(
                "implied rho_sq = {rho_sq} exceeds 1 (beta_2 < beta_1^2)"
            )));
        }
        rho_sq = rho_sq.min(1.0);
        return Ok(FitResult {
            rho_sq,
            lambda,
            residual_norm: 0.0,
            n_moments: 2,
            misfit: false,
        });
    }

    let data: Vec<(i32, f64)> = moments.beta_k.iter().map(|(&k, &b)| (k as i32, b)).collect();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 1..=10 {
        for j in 1..=10 {
            let start = (i as f64 / 10.0, (j as f64 - 0.5) / 10.0);
            let (a, l, f) = refine(&data, start);
            if f < best.0 {
                best = (f, a, l);
            }
        }
    }
    let (f, rho_sq, lambda) = best;
    let residual_norm = f.sqrt();
    Ok(FitResult {
        rho_sq,
        lambda,
        residual_norm,
        n_moments: n,
        misfit: residual_norm > MISFIT_TOL,
    })
}

const LAMBDA_MAX: f64 = 1.0 - 1e-12;

fn objective(data: &[(i32, f64)], a: f64, l: f64) -> f64 {
    data.iter()
        .map(|&(k, b)| (b - a * l.powi(k)).powi(2))
        .sum()
}

fn project(a: f64, l: f64) -> (f64, f64) {
    (a.clamp(1e-12, 1.0), l.clamp(0.0, LAMBDA_MAX))
}

/// Projected Levenberg-Marquardt on `(rho_sq, lambda)`.
fn refine(data: &[(i32, f64)], start: (f64, f64)) -> (f64, f64, f64) {
    let (mut a, mut l) = start;
    let mut f = objective(data, a, l);
    let mut mu = 1e-3;
    for _ in 0..500 {
        // Normal equations J'J and gradient J'r for r_k = b_k - a l^k.
        let (mut h11, mut h12, mut h22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(k, b) in data {
            let lk = l.powi(k);
            let r = b - a * lk;
            let ja = -lk;
            let jl = -a * k as f64 * l.powi(k - 1);
            h11 += ja * ja;
            h12 += ja * jl;
            h22 += jl * jl;
            g1 += ja * r;
            g2 += jl * r;
        }
        let mut improved = false;
        for _ in 0..60 {
            let (d11, d22) = (h11 * (1.0 + mu), h22 * (1.0 + mu));
            let det = d11 * d22 - h12 * h12;
            if !(det.abs() > 0.0) {
                mu *= 10.0;
                continue;
            }
            let da = -(d22 * g1 - h12 * g2) / det;
            let dl = -(d11 * g2 - h12 * g1) / det;
            let (na, nl) = project(a + da, l + dl);
            let nf = objective(data, na, nl);
            if nf < f {
                let gain = f - nf;
                let step = (na - a).abs() + (nl - l).abs();
                a = na;
                l = nl;
                f = nf;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if gain <= 1e-10 * f || step < 1e-15 {
                    return (a, l, f);
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved || f == 0.0 {
            break;
        }
    }
    (a, l, f)
}
