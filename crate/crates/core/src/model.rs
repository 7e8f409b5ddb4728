//! Latent Gaussian outcome model.
//!
//! Each patient carries latent traits `Z = (Z_tox, Z_eff[, Z_bio])` with unit
//! variances and correlation matrix `R`:
//!
//! * `Z_tox = α₁ + β₁·d + ε`, DLT observed iff `Z_tox > 0`;
//! * `Z_eff = α₂ + β₂·d + γ₂·d² + ε`, category 0 below 0, 1 on `[0, ζ)`, 2 at or
//!   above `ζ`;
//! * `Z_bio = α₃ + β₃·d + γ₃·d² + ε`, binary response iff `Z_bio > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Which outcomes enter the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeModel {
    /// Binary toxicity only.
    ToxOnly,
    /// Toxicity and the ordinal efficacy biomarker.
    #[default]
    Joint,
    /// Toxicity, efficacy and a third binary biomarker.
    JointBiomarker,
}

impl OutcomeModel {
    /// Number of latent dimensions.
    pub fn dim(self) -> usize {
        match self {
            OutcomeModel::ToxOnly => 1,
            OutcomeModel::Joint => 2,
            OutcomeModel::JointBiomarker => 3,
        }
    }

    pub fn has_efficacy(self) -> bool {
        !matches!(self, OutcomeModel::ToxOnly)
    }

    pub fn has_biomarker(self) -> bool {
        matches!(self, OutcomeModel::JointBiomarker)
    }
}

/// Coefficients of the third latent and its correlations with the first two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerParams {
    pub alpha3: f64,
    pub beta3: f64,
    pub gamma3: f64,
    pub rho13: f64,
    pub rho23: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub gamma2: f64,
    pub zeta: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biomarker: Option<BiomarkerParams>,
}

impl ModelParams {
    /// Toxicity/efficacy parameters with no biomarker block.
    pub fn joint(alpha1: f64, beta1: f64, alpha2: f64, beta2: f64, gamma2: f64, zeta: f64, rho: f64) -> Self {
        Self {
            alpha1,
            beta1,
            alpha2,
            beta2,
            gamma2,
            zeta,
            rho,
            biomarker: None,
        }
    }

    /// Latent correlation matrix (2×2, or 3×3 with the biomarker block).
    pub fn correlation(&self) -> Vec<Vec<f64>> {
        match &self.biomarker {
            None => vec![vec![1.0, self.rho], vec![self.rho, 1.0]],
            Some(b) => vec![
                vec![1.0, self.rho, b.rho13],
                vec![self.rho, 1.0, b.rho23],
                vec![b.rho13, b.rho23, 1.0],
            ],
        }
    }

    /// ζ > 0, all correlations in [-1, 1] and the correlation matrix PSD.
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0) {
            return Err(Error::Domain(format!(
                "cut point ζ must be positive, got {}",
                self.zeta
            )));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::Domain(format!("ρ must lie in [-1, 1], got {}", self.rho)));
        }
        if let Some(b) = &self.biomarker {
            if !(b.rho13.abs() <= 1.0 && b.rho23.abs() <= 1.0) {
                return Err(Error::Domain("biomarker correlations must lie in [-1, 1]".into()));
            }
            let det =
                1.0 + 2.0 * self.rho * b.rho13 * b.rho23 - self.rho * self.rho - b.rho13 * b.rho13 - b.rho23 * b.rho23;
            if det < -1e-12 {
                return Err(Error::Domain(format!(
                    "latent correlation matrix is not positive semi-definite (det = {det})"
                )));
            }
        }
        Ok(())
    }
}

/// One patient's dose level (0-based) and observed outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub dose_level: usize,
    pub y_tox: u8,
    pub y_eff: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_bio: Option<u8>,
}

impl OutcomeRecord {
    pub fn new(dose_level: usize, y_tox: u8, y_eff: u8, y_bio: Option<u8>) -> Self {
        Self {
            dose_level,
            y_tox,
            y_eff,
            y_bio,
        }
    }

    pub fn validate(&self, n_levels: usize) -> Result<()> {
        if self.dose_level >= n_levels {
            return Err(Error::Domain(format!(
                "dose level {} outside grid of {n_levels} levels",
                self.dose_level
            )));
        }
        if self.y_tox > 1 {
            return Err(Error::Domain(format!("y_tox must be 0 or 1, got {}", self.y_tox)));
        }
        if self.y_eff > 2 {
            return Err(Error::Domain(format!("y_eff must be 0, 1 or 2, got {}", self.y_eff)));
        }
        if matches!(self.y_bio, Some(b) if b > 1) {
            return Err(Error::Domain("y_bio must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// Linear predictor of the toxicity latent.
#[inline]
pub fn tox_latent_mean(params: &ModelParams, d: f64) -> f64 {
    params.alpha1 + params.beta1 * d
}

/// Φ(α₁ + β₁·d).
#[inline]
pub fn tox_prob(params: &ModelParams, d: f64) -> f64 {
    normal::cdf(tox_latent_mean(params, d))
}

/// η_eff = α₂ + β₂·d + γ₂·d².
#[inline]
pub fn eff_latent_mean(params: &ModelParams, d: f64) -> f64 {
    params.alpha2 + params.beta2 * d + params.gamma2 * d * d
}

/// Probabilities of efficacy categories 0, 1 and 2.
pub fn eff_category_probs(params: &ModelParams, d: f64) -> [f64; 3] {
    let eta = eff_latent_mean(params, d);
    let p0 = normal::cdf(-eta);
    let p2 = normal::sf(params.zeta - eta);
    [p0, 1.0 - p0 - p2, p2]
}

/// Pr(Y_eff ≥ 1) = Φ(η_eff).
#[inline]
pub fn eff_response_prob(params: &ModelParams, d: f64) -> f64 {
    normal::cdf(eff_latent_mean(params, d))
}

/// η_bio = α₃ + β₃·d + γ₃·d²; fails without a biomarker block.
pub fn bio_latent_mean(params: &ModelParams, d: f64) -> Result<f64> {
    let b = params
        .biomarker
        .as_ref()
        .ok_or_else(|| Error::config("biomarker", "model has no biomarker parameters"))?;
    Ok(b.alpha3 + b.beta3 * d + b.gamma3 * d * d)
}

/// Pr(Y_bio = 1) = Φ(η_bio).
pub fn bio_response_prob(params: &ModelParams, d: f64) -> Result<f64> {
    bio_latent_mean(params, d).map(normal::cdf)
}

/// Latent interval implied by a binary outcome.
#[inline]
pub(crate) fn binary_interval(y: u8) -> (f64, f64) {
    if y == 1 {
        (0.0, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, 0.0)
    }
}

/// Latent interval implied by an efficacy category.
#[inline]
pub(crate) fn efficacy_interval(y: u8, zeta: f64) -> (f64, f64) {
    match y {
        0 => (f64::NEG_INFINITY, 0.0),
        1 => (0.0, zeta),
        _ => (zeta, f64::INFINITY),
    }
}

/// Probability of the joint cell (y_tox, y_eff) at covariate `d`: the mass of
/// the bivariate normal (η_tox, η_eff; unit variances, correlation ρ) over the
/// rectangle selected by the outcomes.
pub fn joint_cell_prob(params: &ModelParams, d: f64, y_tox: u8, y_eff: u8) -> Result<f64> {
    if !(params.rho.abs() <= 1.0) {
        return Err(Error::Domain(format!("ρ must lie in [-1, 1], got {}", params.rho)));
    }
    if y_tox > 1 || y_eff > 2 {
        return Err(Error::Domain(format!("invalid cell ({y_tox}, {y_eff})")));
    }
    let eta_t = tox_latent_mean(params, d);
    let eta_e = eff_latent_mean(params, d);
    let (lt, ht) = binary_interval(y_tox);
    let (le, he) = efficacy_interval(y_eff, params.zeta);
    Ok(normal::bvn_rectangle(
        lt - eta_t,
        ht - eta_t,
        le - eta_e,
        he - eta_e,
        params.rho,
    ))
}

// Gauss–Legendre 48-point nodes on [-1, 1] are generated once by Newton's method.
fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let nf = n as f64;
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn legendre48() -> &'static [(f64, f64)] {
    static RULE: std::sync::OnceLock<Vec<(f64, f64)>> = std::sync::OnceLock::new();
    RULE.get_or_init(|| legendre_rule(48))
}

const XMAX: f64 = 9.0;

/// Probability of the joint cell (y_tox, y_eff, y_bio) under the trivariate
/// latent model.
///
/// The toxicity latent is integrated out with a composite Gauss–Legendre rule
/// against its density; the inner term is the conditional bivariate rectangle
/// probability of (Z_eff, Z_bio).
pub fn joint_cell_prob3(params: &ModelParams, d: f64, y_tox: u8, y_eff: u8, y_bio: u8) -> Result<f64> {
    params.validate()?;
    let b = params
        .biomarker
        .as_ref()
        .ok_or_else(|| Error::config("biomarker", "model has no biomarker parameters"))?;
    let eta = [
        tox_latent_mean(params, d),
        eff_latent_mean(params, d),
        bio_latent_mean(params, d)?,
    ];
    let (lt, ht) = binary_interval(y_tox);
    let (le, he) = efficacy_interval(y_eff, params.zeta);
    let (lb, hb) = binary_interval(y_bio);
    let (r12, r13, r23) = (params.rho, b.rho13, b.rho23);

    // standardized bounds of the toxicity latent, truncated where φ is negligible
    let x_lo = (lt - eta[0]).max(-XMAX);
    let x_hi = (ht - eta[0]).min(XMAX);
    if x_hi <= x_lo {
        return Ok(0.0);
    }
    let s2 = (1.0 - r12 * r12).max(0.0).sqrt();
    let s3 = (1.0 - r13 * r13).max(0.0).sqrt();
    // partial correlation of (Z_eff, Z_bio) given Z_tox
    let r23_1 = if s2 > 0.0 && s3 > 0.0 {
        ((r23 - r12 * r13) / (s2 * s3)).clamp(-1.0, 1.0)
    } else {
        0.0
    };

    let panels = ((x_hi - x_lo) / 0.75).ceil().max(1.0) as usize;
    let width = (x_hi - x_lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = x_lo + p as f64 * width;
        for &(t, w) in legendre48() {
            let x = a + 0.5 * width * (t + 1.0);
            let cond = |lo: f64, hi: f64, mean: f64, r: f64, s: f64| -> (f64, f64) {
                let m = mean + r * x;
                if s > 0.0 {
                    ((lo - m) / s, (hi - m) / s)
                } else {
                    // degenerate: latent is a deterministic function of x
                    let inside = m > lo && m <= hi;
                    if inside {
                        (f64::NEG_INFINITY, f64::INFINITY)
                    } else {
                        (0.0, 0.0)
                    }
                }
            };
            let (e_lo, e_hi) = cond(le, he, eta[1], r12, s2);
            let (b_lo, b_hi) = cond(lb, hb, eta[2], r13, s3);
            let inner = normal::bvn_rectangle(e_lo, e_hi, b_lo, b_hi, r23_1);
            total += 0.5 * width * w * normal::pdf(x) * inner;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Cell probability for a record under the given outcome model.
pub fn record_prob(params: &ModelParams, d: f64, rec: &OutcomeRecord, model: OutcomeModel) -> Result<f64> {
    match model {
        OutcomeModel::ToxOnly => {
            let p = tox_prob(params, d);
            Ok(if rec.y_tox == 1 {
                p
            } else {
                normal::sf(tox_latent_mean(params, d))
            })
        }
        OutcomeModel::Joint => joint_cell_prob(params, d, rec.y_tox, rec.y_eff),
        OutcomeModel::JointBiomarker => {
            let y_bio = rec
                .y_bio
                .ok_or_else(|| Error::config("y_bio", "biomarker outcome missing from record"))?;
            joint_cell_prob3(params, d, rec.y_tox, rec.y_eff, y_bio)
        }
    }
}
