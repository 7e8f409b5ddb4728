//! Data-augmentation MCMC for the latent probit model.
//!
//! One sweep of a chain:
//!
//! 1. ζ by random-walk Metropolis on its likelihood given the other latents
//!    (the efficacy latents are integrated out), immediately followed by
//! 2. every latent from its truncated conditional normal given the rest,
//! 3. all regression coefficients jointly from their Gaussian full
//!    conditional (known latent covariance R),
//! 4. the off-diagonal entries of R by random-walk Metropolis on the
//!    Gaussian latent likelihood times the normalized-Wishart prior.
//!
//! Random-walk scales adapt toward a 0.3 acceptance rate during burn-in only.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{effective_sample_size, split_rhat};
use super::prior::{log_det_corr, NormalPrior, PriorSpec};
use crate::dose::DoseGrid;
use crate::error::{Error, Result};
use crate::model::{binary_interval, efficacy_interval, BiomarkerParams, ModelParams, OutcomeModel, OutcomeRecord};
use crate::normal;

const TARGET_ACCEPT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub kept_draws: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            kept_draws: 4000,
            thin: 1,
            seed: 2023,
            n_chains: 1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in < 1 {
            return Err(Error::config("mcmc.burn_in", "must be at least 1"));
        }
        if self.kept_draws < 100 {
            return Err(Error::config("mcmc.kept_draws", "must be at least 100"));
        }
        if self.thin < 1 {
            return Err(Error::config("mcmc.thin", "must be at least 1"));
        }
        if self.n_chains < 1 {
            return Err(Error::config("mcmc.n_chains", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub ess: f64,
    pub split_rhat: f64,
}

/// Kept posterior draws with their provenance and convergence summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    model: OutcomeModel,
    draws: Vec<ModelParams>,
    seed: u64,
    n_chains: usize,
    diagnostics: Vec<ParamDiagnostics>,
    zeta_acceptance: Option<f64>,
    correlation_acceptance: Option<f64>,
}

impl PosteriorDraws {
    /// Wrap an externally produced draw set as a single chain.
    pub fn from_draws(model: OutcomeModel, draws: Vec<ModelParams>, seed: u64) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Domain("posterior draw set is empty".into()));
        }
        for d in &draws {
            d.validate()?;
        }
        let diagnostics = compute_diagnostics(model, &draws, 1);
        Ok(Self {
            model,
            draws,
            seed,
            n_chains: 1,
            diagnostics,
            zeta_acceptance: None,
            correlation_acceptance: None,
        })
    }

    pub fn model(&self) -> OutcomeModel {
        self.model
    }

    pub fn draws(&self) -> &[ModelParams] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn diagnostics(&self) -> &[ParamDiagnostics] {
        &self.diagnostics
    }

    pub fn zeta_acceptance(&self) -> Option<f64> {
        self.zeta_acceptance
    }

    pub fn correlation_acceptance(&self) -> Option<f64> {
        self.correlation_acceptance
    }

    /// Convergence warnings: split R̂ above `max_rhat` or ESS below `min_ess`.
    pub fn convergence_warnings(&self, max_rhat: f64, min_ess: f64) -> Vec<String> {
        self.diagnostics
            .iter()
            .filter_map(|d| {
                if d.split_rhat.is_finite() && d.split_rhat > max_rhat {
                    Some(format!("{}: split R-hat {:.3} > {max_rhat}", d.name, d.split_rhat))
                } else if d.ess < min_ess {
                    Some(format!("{}: ESS {:.0} < {min_ess}", d.name, d.ess))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Posterior mean of a scalar functional.
    pub fn mean_of(&self, f: impl Fn(&ModelParams) -> f64) -> f64 {
        self.draws.iter().map(f).sum::<f64>() / self.draws.len() as f64
    }
}

fn param_series(model: OutcomeModel) -> Vec<(&'static str, fn(&ModelParams) -> f64)> {
    let mut v: Vec<(&'static str, fn(&ModelParams) -> f64)> = vec![("alpha1", |p| p.alpha1), ("beta1", |p| p.beta1)];
    if model.has_efficacy() {
        v.extend([
            ("alpha2", (|p: &ModelParams| p.alpha2) as fn(&ModelParams) -> f64),
            ("beta2", |p| p.beta2),
            ("gamma2", |p| p.gamma2),
            ("zeta", |p| p.zeta),
            ("rho", |p| p.rho),
        ]);
    }
    if model.has_biomarker() {
        fn bio(p: &ModelParams) -> BiomarkerParams {
            p.biomarker.expect("biomarker block present")
        }
        v.extend([
            ("alpha3", (|p: &ModelParams| bio(p).alpha3) as fn(&ModelParams) -> f64),
            ("beta3", |p| bio(p).beta3),
            ("gamma3", |p| bio(p).gamma3),
            ("rho13", |p| bio(p).rho13),
            ("rho23", |p| bio(p).rho23),
        ]);
    }
    v
}

fn compute_diagnostics(model: OutcomeModel, draws: &[ModelParams], n_chains: usize) -> Vec<ParamDiagnostics> {
    let per_chain = draws.len() / n_chains;
    param_series(model)
        .into_iter()
        .map(|(name, f)| {
            let chains: Vec<Vec<f64>> = (0..n_chains)
                .map(|c| draws[c * per_chain..(c + 1) * per_chain].iter().map(f).collect())
                .collect();
            ParamDiagnostics {
                name: name.to_string(),
                ess: chains.iter().map(|c| effective_sample_size(c)).sum(),
                split_rhat: split_rhat(&chains),
            }
        })
        .collect()
}

/// Per-patient data prepared for the sampler.
#[derive(Clone, Copy)]
struct Patient {
    basis: [f64; 3],
    y_tox: u8,
    y_eff: u8,
    y_bio: u8,
}

struct Prepared {
    model: OutcomeModel,
    patients: Vec<Patient>,
    // Σᵢ xᵢ^p for p = 0..=4
    moments: [f64; 5],
    coef_priors: Vec<NormalPrior>,
    zeta_bounds: (f64, f64),
    lkj_shape: f64,
}

/// Offsets of the tox / eff / bio coefficient blocks and their lengths.
const BLOCKS: [(usize, usize); 3] = [(0, 2), (2, 3), (5, 3)];

struct Chain<'a> {
    data: &'a Prepared,
    k: usize,
    coef: Vec<f64>,
    zeta: f64,
    // r12, r13, r23
    corr: [f64; 3],
    z: Vec<[f64; 3]>,
    mu: Vec<[f64; 3]>,
    zeta_log_step: f64,
    corr_log_step: [f64; 3],
    zeta_accepts: usize,
    zeta_tries: usize,
    corr_accepts: usize,
    corr_tries: usize,
    rng: ChaCha8Rng,
}

/// Conditional regression of latent `k` on the other latents.
#[derive(Clone, Copy, Default)]
struct Conditional {
    others: [usize; 2],
    weights: [f64; 2],
    n_others: usize,
    sd: f64,
}

impl<'a> Chain<'a> {
    fn new(data: &'a Prepared, prior: &PriorSpec, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let k = data.model.dim();
        let coef: Vec<f64> = data.coef_priors.iter().map(|p| p.mean).collect();
        let zeta = 1.0f64.clamp(
            prior.zeta.low + 1e-3 * (prior.zeta.high - prior.zeta.low),
            prior.zeta.high - 1e-3 * (prior.zeta.high - prior.zeta.low),
        );
        let n = data.patients.len();
        let mut chain = Chain {
            data,
            k,
            coef,
            zeta,
            corr: [0.0; 3],
            z: vec![[0.0; 3]; n],
            mu: vec![[0.0; 3]; n],
            zeta_log_step: 0.3f64.ln(),
            corr_log_step: [0.2f64.ln(); 3],
            zeta_accepts: 0,
            zeta_tries: 0,
            corr_accepts: 0,
            corr_tries: 0,
            rng,
        };
        chain.update_means();
        // start latents inside their truncation regions at the initial means
        for _ in 0..2 {
            chain.draw_latents();
        }
        chain
    }

    fn corr_entry(&self, a: usize, b: usize) -> f64 {
        match (a.min(b), a.max(b)) {
            (0, 1) => self.corr[0],
            (0, 2) => self.corr[1],
            (1, 2) => self.corr[2],
            _ => 1.0,
        }
    }

    fn conditional(&self, comp: usize) -> Conditional {
        match self.k {
            1 => Conditional {
                sd: 1.0,
                ..Default::default()
            },
            2 => {
                let o = 1 - comp;
                let r = self.corr[0];
                Conditional {
                    others: [o, 0],
                    weights: [r, 0.0],
                    n_others: 1,
                    sd: (1.0 - r * r).max(1e-12).sqrt(),
                }
            }
            _ => {
                let others = match comp {
                    0 => [1, 2],
                    1 => [0, 2],
                    _ => [0, 1],
                };
                let r_jl = self.corr_entry(others[0], others[1]);
                let r_kj = self.corr_entry(comp, others[0]);
                let r_kl = self.corr_entry(comp, others[1]);
                let det = 1.0 - r_jl * r_jl;
                let w0 = (r_kj - r_kl * r_jl) / det;
                let w1 = (r_kl - r_kj * r_jl) / det;
                let var = 1.0 - (w0 * r_kj + w1 * r_kl);
                Conditional {
                    others,
                    weights: [w0, w1],
                    n_others: 2,
                    sd: var.max(1e-12).sqrt(),
                }
            }
        }
    }

    fn update_means(&mut self) {
        let c = &self.coef;
        let k = self.k;
        for (mu, p) in self.mu.iter_mut().zip(&self.data.patients) {
            let b = p.basis;
            mu[0] = c[0] + c[1] * b[1];
            if k > 1 {
                mu[1] = c[2] + c[3] * b[1] + c[4] * b[2];
            }
            if k > 2 {
                mu[2] = c[5] + c[6] * b[1] + c[7] * b[2];
            }
        }
    }

    #[inline]
    fn interval(&self, comp: usize, p: &Patient) -> (f64, f64) {
        match comp {
            0 => binary_interval(p.y_tox),
            1 => efficacy_interval(p.y_eff, self.zeta),
            _ => binary_interval(p.y_bio),
        }
    }

    fn draw_component(&mut self, comp: usize) {
        let cond = self.conditional(comp);
        for i in 0..self.data.patients.len() {
            let p = self.data.patients[i];
            let mu = self.mu[i];
            let z = self.z[i];
            let mut m = mu[comp];
            for j in 0..cond.n_others {
                let o = cond.others[j];
                m += cond.weights[j] * (z[o] - mu[o]);
            }
            let (lo, hi) = self.interval(comp, &p);
            self.z[i][comp] = normal::truncated_normal(&mut self.rng, m, cond.sd, lo, hi);
        }
    }

    fn draw_latents(&mut self) {
        // efficacy first so a fresh ζ is paired with fresh efficacy latents
        if self.k > 1 {
            self.draw_component(1);
        }
        self.draw_component(0);
        if self.k > 2 {
            self.draw_component(2);
        }
    }

    fn zeta_log_target(&self, zeta: f64, cond: &Conditional) -> f64 {
        let (low, high) = self.data.zeta_bounds;
        if !(zeta > low && zeta < high) {
            return f64::NEG_INFINITY;
        }
        let mut lp = 0.0;
        for (i, p) in self.data.patients.iter().enumerate() {
            if p.y_eff == 0 {
                continue;
            }
            let mu = self.mu[i];
            let z = self.z[i];
            let mut m = mu[1];
            for j in 0..cond.n_others {
                let o = cond.others[j];
                m += cond.weights[j] * (z[o] - mu[o]);
            }
            let b = (zeta - m) / cond.sd;
            let prob = if p.y_eff == 1 {
                interval_prob(-m / cond.sd, b)
            } else {
                normal::sf(b)
            };
            if prob <= 0.0 {
                return f64::NEG_INFINITY;
            }
            lp += prob.ln();
        }
        lp
    }

    fn update_zeta(&mut self, adapt: Option<f64>) {
        let cond = self.conditional(1);
        let current = self.zeta_log_target(self.zeta, &cond);
        let proposal = self.zeta + self.zeta_log_step.exp() * normal::std_normal(&mut self.rng);
        let cand = self.zeta_log_target(proposal, &cond);
        let log_ratio = cand - current;
        let accept_prob = if log_ratio.is_nan() {
            0.0
        } else {
            log_ratio.min(0.0).exp()
        };
        self.zeta_tries += 1;
        if normal::open01(&mut self.rng) < accept_prob {
            self.zeta = proposal;
            self.zeta_accepts += 1;
        }
        if let Some(rate) = adapt {
            self.zeta_log_step += rate * (accept_prob - TARGET_ACCEPT);
        }
    }

    fn update_coefficients(&mut self) {
        let data = self.data;
        let p = data.coef_priors.len();
        let omega = self.precision_matrix();
        let mut prec = DMatrix::<f64>::zeros(p, p);
        let mut h = DVector::<f64>::zeros(p);
        for kc in 0..self.k {
            let (ok, lk) = BLOCKS[kc];
            for lc in 0..self.k {
                let (ol, ll) = BLOCKS[lc];
                let w = omega[kc][lc];
                for a in 0..lk {
                    for b in 0..ll {
                        prec[(ok + a, ol + b)] += w * data.moments[a + b];
                    }
                }
            }
        }
        for (i, pat) in data.patients.iter().enumerate() {
            let z = self.z[i];
            for kc in 0..self.k {
                let t: f64 = (0..self.k).map(|lc| omega[kc][lc] * z[lc]).sum();
                let (ok, lk) = BLOCKS[kc];
                for a in 0..lk {
                    h[ok + a] += pat.basis[a] * t;
                }
            }
        }
        for (j, pr) in data.coef_priors.iter().enumerate() {
            prec[(j, j)] += 1.0 / pr.variance;
            h[j] += pr.mean / pr.variance;
        }
        let chol = prec.cholesky().expect("coefficient precision is positive definite");
        let mean = chol.solve(&h);
        let noise = DVector::from_iterator(p, (0..p).map(|_| normal::std_normal(&mut self.rng)));
        let shift = chol
            .l()
            .transpose()
            .solve_upper_triangular(&noise)
            .expect("triangular factor is invertible");
        let draw = mean + shift;
        self.coef.copy_from_slice(draw.as_slice());
        self.update_means();
    }

    /// R⁻¹ as a dense K×K array.
    fn precision_matrix(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        match self.k {
            1 => out[0][0] = 1.0,
            2 => {
                let r = self.corr[0];
                let det = 1.0 - r * r;
                out[0][0] = 1.0 / det;
                out[1][1] = 1.0 / det;
                out[0][1] = -r / det;
                out[1][0] = -r / det;
            }
            _ => {
                let [a, b, c] = self.corr;
                let det = 1.0 + 2.0 * a * b * c - a * a - b * b - c * c;
                out[0][0] = (1.0 - c * c) / det;
                out[1][1] = (1.0 - b * b) / det;
                out[2][2] = (1.0 - a * a) / det;
                out[0][1] = (b * c - a) / det;
                out[0][2] = (a * c - b) / det;
                out[1][2] = (a * b - c) / det;
                out[1][0] = out[0][1];
                out[2][0] = out[0][2];
                out[2][1] = out[1][2];
            }
        }
        out
    }

    /// Log density of the latent residuals and the correlation prior at `corr`.
    fn corr_log_target(&self, corr: [f64; 3], scatter: &[[f64; 3]; 3]) -> f64 {
        let n = self.data.patients.len() as f64;
        let Some(log_det) = log_det_corr(corr[0], corr[1], corr[2], self.k) else {
            return f64::NEG_INFINITY;
        };
        let trace = if self.k == 2 {
            let r = corr[0];
            (scatter[0][0] - 2.0 * r * scatter[0][1] + scatter[1][1]) / (1.0 - r * r)
        } else {
            let [a, b, c] = corr;
            let det = log_det.exp();
            let inv = [
                [(1.0 - c * c), (b * c - a), (a * c - b)],
                [(b * c - a), (1.0 - b * b), (a * b - c)],
                [(a * c - b), (a * b - c), (1.0 - a * a)],
            ];
            let mut t = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    t += inv[i][j] * scatter[j][i];
                }
            }
            t / det
        };
        -0.5 * n * log_det - 0.5 * trace + (self.data.lkj_shape - 1.0) * log_det
    }

    fn update_correlation(&mut self, adapt: Option<f64>) {
        let mut scatter = [[0.0; 3]; 3];
        for (z, mu) in self.z.iter().zip(&self.mu) {
            let e = [z[0] - mu[0], z[1] - mu[1], z[2] - mu[2]];
            for a in 0..self.k {
                for b in 0..self.k {
                    scatter[a][b] += e[a] * e[b];
                }
            }
        }
        let n_entries = if self.k == 2 { 1 } else { 3 };
        for _ in 0..2 {
            for entry in 0..n_entries {
                let current = self.corr_log_target(self.corr, &scatter);
                let mut cand = self.corr;
                cand[entry] += self.corr_log_step[entry].exp() * normal::std_normal(&mut self.rng);
                let proposed = self.corr_log_target(cand, &scatter);
                let log_ratio = proposed - current;
                let accept_prob = if log_ratio.is_nan() {
                    0.0
                } else {
                    log_ratio.min(0.0).exp()
                };
                self.corr_tries += 1;
                if normal::open01(&mut self.rng) < accept_prob {
                    self.corr = cand;
                    self.corr_accepts += 1;
                }
                if let Some(rate) = adapt {
                    self.corr_log_step[entry] += rate * (accept_prob - TARGET_ACCEPT);
                }
            }
        }
    }

    fn sweep(&mut self, adapt: Option<f64>) {
        if self.k > 1 {
            self.update_zeta(adapt);
        }
        self.draw_latents();
        self.update_coefficients();
        if self.k > 1 {
            self.update_correlation(adapt);
        }
    }

    fn snapshot(&self, prior: &PriorSpec) -> ModelParams {
        let c = &self.coef;
        match self.data.model {
            // efficacy parameters are not part of the toxicity-only model; they
            // are reported at their prior means
            OutcomeModel::ToxOnly => ModelParams {
                alpha1: c[0],
                beta1: c[1],
                alpha2: prior.alpha2.mean,
                beta2: prior.beta2.mean,
                gamma2: prior.gamma2.mean,
                zeta: 0.5 * (prior.zeta.low + prior.zeta.high),
                rho: 0.0,
                biomarker: None,
            },
            OutcomeModel::Joint => ModelParams::joint(c[0], c[1], c[2], c[3], c[4], self.zeta, self.corr[0]),
            OutcomeModel::JointBiomarker => ModelParams {
                biomarker: Some(BiomarkerParams {
                    alpha3: c[5],
                    beta3: c[6],
                    gamma3: c[7],
                    rho13: self.corr[1],
                    rho23: self.corr[2],
                }),
                ..ModelParams::joint(c[0], c[1], c[2], c[3], c[4], self.zeta, self.corr[0])
            },
        }
    }
}

/// Pr(a < Z ≤ b) for standard normal Z, evaluated on the tail that avoids cancellation.
#[inline]
fn interval_prob(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal::sf(a) - normal::sf(b)
    } else {
        normal::cdf(b) - normal::cdf(a)
    }
}

fn prepare(data: &[OutcomeRecord], grid: &DoseGrid, prior: &PriorSpec, model: OutcomeModel) -> Result<Prepared> {
    let mut patients = Vec::with_capacity(data.len());
    let mut moments = [0.0; 5];
    for rec in data {
        rec.validate(grid.len())?;
        if model.has_biomarker() && rec.y_bio.is_none() {
            return Err(Error::config("y_bio", "biomarker outcome missing from record"));
        }
        let x = grid.covariate(rec.dose_level);
        let mut pw = 1.0;
        for m in moments.iter_mut() {
            *m += pw;
            pw *= x;
        }
        patients.push(Patient {
            basis: [1.0, x, x * x],
            y_tox: rec.y_tox,
            y_eff: rec.y_eff,
            y_bio: rec.y_bio.unwrap_or(0),
        });
    }
    Ok(Prepared {
        model,
        patients,
        moments,
        coef_priors: prior.coefficient_priors(model),
        zeta_bounds: (prior.zeta.low, prior.zeta.high),
        lkj_shape: prior.lkj_shape(model.dim().max(2)),
    })
}

struct ChainOutput {
    draws: Vec<ModelParams>,
    zeta: (usize, usize),
    corr: (usize, usize),
}

fn run_chain(data: &Prepared, prior: &PriorSpec, cfg: &McmcConfig, chain_index: usize) -> ChainOutput {
    let mut chain = Chain::new(data, prior, cfg.seed, chain_index as u64);
    for it in 0..cfg.burn_in {
        let rate = 1.0 / ((it + 1) as f64).powf(0.6);
        chain.sweep(Some(rate));
    }
    chain.zeta_accepts = 0;
    chain.zeta_tries = 0;
    chain.corr_accepts = 0;
    chain.corr_tries = 0;
    let mut draws = Vec::with_capacity(cfg.kept_draws);
    for _ in 0..cfg.kept_draws {
        for _ in 0..cfg.thin {
            chain.sweep(None);
        }
        draws.push(chain.snapshot(prior));
    }
    ChainOutput {
        draws,
        zeta: (chain.zeta_accepts, chain.zeta_tries),
        corr: (chain.corr_accepts, chain.corr_tries),
    }
}

/// Draw from p(θ | data) ∝ L(data | θ) p(θ).
///
/// Empty `data` samples the prior. Results are bit-reproducible for a given
/// seed, chain count and configuration; chains run in parallel on disjoint
/// ChaCha streams and are concatenated in chain order.
pub fn sample_posterior(
    data: &[OutcomeRecord],
    grid: &DoseGrid,
    prior: &PriorSpec,
    cfg: &McmcConfig,
    model: OutcomeModel,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    prior.validate(model)?;
    let prepared = prepare(data, grid, prior, model)?;
    let outputs: Vec<ChainOutput> = if cfg.n_chains == 1 {
        vec![run_chain(&prepared, prior, cfg, 0)]
    } else {
        (0..cfg.n_chains)
            .into_par_iter()
            .map(|c| run_chain(&prepared, prior, cfg, c))
            .collect()
    };
    let ratio = |f: fn(&ChainOutput) -> (usize, usize)| {
        let (a, t) = outputs.iter().map(f).fold((0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
        (t > 0).then(|| a as f64 / t as f64)
    };
    let zeta_acceptance = ratio(|o| o.zeta);
    let correlation_acceptance = ratio(|o| o.corr);
    let draws: Vec<ModelParams> = outputs.into_iter().flat_map(|o| o.draws).collect();
    let diagnostics = compute_diagnostics(model, &draws, cfg.n_chains);
    Ok(PosteriorDraws {
        model,
        draws,
        seed: cfg.seed,
        n_chains: cfg.n_chains,
        diagnostics,
        zeta_acceptance,
        correlation_acceptance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> McmcConfig {
        McmcConfig {
            burn_in: 300,
            kept_draws: 1000,
            ..McmcConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        let bad = McmcConfig {
            kept_draws: 99,
            ..McmcConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "mcmc.kept_draws"));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = DoseGrid::default_nine_dose();
        let data = vec![
            OutcomeRecord::new(0, 0, 1, None),
            OutcomeRecord::new(0, 0, 0, None),
            OutcomeRecord::new(1, 1, 2, None),
        ];
        let prior = PriorSpec::default();
        let a = sample_posterior(&data, &g, &prior, &quick(), OutcomeModel::Joint).unwrap();
        let b = sample_posterior(&data, &g, &prior, &quick(), OutcomeModel::Joint).unwrap();
        assert_eq!(a, b);
        let c = sample_posterior(&data, &g, &prior, &quick().with_seed(99), OutcomeModel::Joint).unwrap();
        assert_ne!(a.draws()[10], c.draws()[10]);
    }

    #[test]
    fn draw_count_and_validity() {
        let g = DoseGrid::default_nine_dose();
        let data: Vec<_> = (0..12)
            .map(|i| OutcomeRecord::new(i % 4, (i % 5 == 0) as u8, (i % 3) as u8, Some((i % 2) as u8)))
            .collect();
        let cfg = McmcConfig { n_chains: 2, ..quick() };
        let post = sample_posterior(&data, &g, &PriorSpec::default(), &cfg, OutcomeModel::JointBiomarker).unwrap();
        assert_eq!(post.len(), 2 * cfg.kept_draws);
        assert!(post.draws().iter().all(|p| p.validate().is_ok()));
        assert_eq!(post.diagnostics().len(), 12);
        assert!(post
            .diagnostics()
            .iter()
            .all(|d| d.ess > 0.0 && d.split_rhat.is_finite()));
    }

    #[test]
    fn tox_only_reports_prior_means_for_efficacy() {
        let g = DoseGrid::default_nine_dose();
        let data = vec![OutcomeRecord::new(0, 0, 2, None); 3];
        let prior = PriorSpec::default();
        let post = sample_posterior(&data, &g, &prior, &quick(), OutcomeModel::ToxOnly).unwrap();
        assert!(post
            .draws()
            .iter()
            .all(|p| p.alpha2 == prior.alpha2.mean && p.rho == 0.0));
        assert_eq!(post.zeta_acceptance(), None);
    }

    #[test]
    fn missing_biomarker_outcome_is_rejected() {
        let g = DoseGrid::default_nine_dose();
        let data = vec![OutcomeRecord::new(0, 0, 2, None)];
        let r = sample_posterior(&data, &g, &PriorSpec::default(), &quick(), OutcomeModel::JointBiomarker);
        assert!(r.is_err());
    }
}
