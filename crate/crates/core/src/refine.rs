//! Bayesian refinement of the decay precisions from test outcomes.
//!
//! With a shared spatial precision `tau = 1/sigma_xy^2` and a temporal
//! precision `tau_t = 1/sigma_t^2`, both Gamma distributed a priori, each
//! tested person's outcome is Bernoulli with success probability equal to the
//! trajectory risk under `(tau, tau_t)`. The posterior is sampled by a
//! random-walk Metropolis-Hastings chain on `(ln tau, ln tau_t)`.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_risk_map, CellIndex, GridSpec, RiskMap};
use crate::risk::{log_complement, probability_from_log_complement, PresenceCell, RiskParams, Trajectory};

/// Shape/rate hyperparameters of the Gamma priors on `tau` and `tau_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
}

impl PriorHyperparams {
    pub fn new(alpha: f64, beta: f64, alpha_t: f64, beta_t: f64) -> Result<Self> {
        let p = Self { alpha, beta, alpha_t, beta_t };
        p.validate()?;
        Ok(p)
    }

    /// Shape 2 priors whose means are the nominal precisions of `params`
    /// (spatial precision taken from `sigma_x`).
    pub fn centered_on(params: &RiskParams) -> Self {
        Self { alpha: 2.0, beta: 2.0 * params.sigma_x().powi(2), alpha_t: 2.0, beta_t: 2.0 * params.sigma_t().powi(2) }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("alpha", self.alpha), ("beta", self.beta), ("alpha_t", self.alpha_t), ("beta_t", self.beta_t)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn mean_tau(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn mean_tau_t(&self) -> f64 {
        self.alpha_t / self.beta_t
    }

    /// Unnormalized Gamma log-density of both precisions.
    pub fn log_density(&self, tau: f64, tau_t: f64) -> f64 {
        if !(tau > 0.0 && tau_t > 0.0) {
            return f64::NEG_INFINITY;
        }
        (self.alpha - 1.0) * tau.ln() - self.beta * tau + (self.alpha_t - 1.0) * tau_t.ln() - self.beta_t * tau_t
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let g = Gamma::new(self.alpha, self.beta.recip()).expect("validated shape and rate");
        let gt = Gamma::new(self.alpha_t, self.beta_t.recip()).expect("validated shape and rate");
        (g.sample(rng), gt.sample(rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestObservation {
    pub trajectory: Trajectory,
    /// `true` for a positive test.
    pub outcome: bool,
}

impl TestObservation {
    pub fn new(trajectory: Trajectory, outcome: bool) -> Result<Self> {
        if trajectory.is_empty() {
            return Err(Error::Domain("observation trajectory must not be empty".into()));
        }
        Ok(Self { trajectory, outcome })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub iteration: usize,
    pub tau: f64,
    pub tau_t: f64,
    pub log_posterior: f64,
}

/// Risk of a trajectory under the precision parameterization.
pub fn precision_trajectory_risk(user: &Trajectory, patients: &[PresenceCell], tau: f64, tau_t: f64, p0: f64) -> f64 {
    probability_from_log_complement(CompiledObservation::new(user, patients, false).log_complement(tau, tau_t, p0))
}

/// Bernoulli likelihood of one test outcome.
pub fn likelihood(obs: &TestObservation, patients: &[PresenceCell], tau: f64, tau_t: f64, p0: f64) -> f64 {
    log_likelihood(obs, patients, tau, tau_t, p0).exp()
}

pub fn log_likelihood(obs: &TestObservation, patients: &[PresenceCell], tau: f64, tau_t: f64, p0: f64) -> f64 {
    CompiledObservation::new(&obs.trajectory, patients, obs.outcome).log_likelihood(tau, tau_t, p0)
}

/// Unnormalized log posterior density of `(tau, tau_t)`.
pub fn log_posterior(
    tau: f64,
    tau_t: f64,
    observations: &[TestObservation],
    patients: &[PresenceCell],
    prior: &PriorHyperparams,
    p0: f64,
) -> f64 {
    Posterior::new(observations, patients, *prior, p0).log_density(tau, tau_t)
}

/// An observation reduced to its distinct `(squared distance, squared lag)`
/// exposure pairs with multiplicities.
#[derive(Debug, Clone)]
struct CompiledObservation {
    outcome: bool,
    terms: Vec<(f64, f64, f64)>,
}

impl CompiledObservation {
    fn new(user: &Trajectory, patients: &[PresenceCell], outcome: bool) -> Self {
        let mut counts: HashMap<(u64, u64), f64> = HashMap::new();
        for u in user.cells() {
            for p in patients {
                if u.t < p.t {
                    continue;
                }
                let d2 = (u.x - p.x).powi(2) + (u.y - p.y).powi(2);
                let t2 = (u.t - p.t).powi(2);
                *counts.entry((d2.to_bits(), t2.to_bits())).or_insert(0.0) += 1.0;
            }
        }
        let mut terms: Vec<(f64, f64, f64)> =
            counts.into_iter().map(|((a, b), n)| (f64::from_bits(a), f64::from_bits(b), n)).collect();
        // fixed summation order keeps chains bit-reproducible
        terms.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        Self { outcome, terms }
    }

    fn log_complement(&self, tau: f64, tau_t: f64, p0: f64) -> f64 {
        self.terms.iter().map(|&(d2, t2, n)| n * log_complement(p0 * (-tau * d2 - tau_t * t2).exp())).sum()
    }

    fn log_likelihood(&self, tau: f64, tau_t: f64, p0: f64) -> f64 {
        let l = self.log_complement(tau, tau_t, p0);
        if self.outcome {
            // ln P with P = 1 - exp(l); -inf when P = 0
            (-l.exp_m1()).ln()
        } else {
            l
        }
    }
}

/// Precompiled posterior over `(tau, tau_t)`.
pub struct Posterior {
    observations: Vec<CompiledObservation>,
    prior: PriorHyperparams,
    p0: f64,
}

impl Posterior {
    pub fn new(observations: &[TestObservation], patients: &[PresenceCell], prior: PriorHyperparams, p0: f64) -> Self {
        Self {
            observations: observations
                .iter()
                .map(|o| CompiledObservation::new(&o.trajectory, patients, o.outcome))
                .collect(),
            prior,
            p0,
        }
    }

    pub fn log_density(&self, tau: f64, tau_t: f64) -> f64 {
        let lp = self.prior.log_density(tau, tau_t);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let mut total = lp;
        for o in &self.observations {
            total += o.log_likelihood(tau, tau_t, self.p0);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        total
    }

    /// Target density of `(ln tau, ln tau_t)`, including the Jacobian.
    fn log_target(&self, u: f64, v: f64) -> (f64, f64) {
        let lp = self.log_density(u.exp(), v.exp());
        (lp + u + v, lp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial proposal standard deviation on each log-precision.
    pub proposal_scale: f64,
    /// Adapt proposal scales during burn-in toward 20-50% acceptance.
    pub adapt: bool,
    /// Prior draws tried when the starting point has zero posterior density.
    pub max_init_attempts: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { iterations: 10_000, burn_in: 1_000, thin: 5, proposal_scale: 0.3, adapt: true, max_init_attempts: 100 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Domain("thin must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Domain(format!(
                "burn-in ({}) must be shorter than the chain ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::Domain(format!("proposal scale must be positive, got {}", self.proposal_scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRun {
    pub samples: Vec<PosteriorSample>,
    /// Post-burn-in acceptance rate over both coordinate updates.
    pub acceptance_rate: f64,
    /// Proposal scales after adaptation, `(ln tau, ln tau_t)`.
    pub proposal_scales: (f64, f64),
}

const ADAPT_WINDOW: usize = 50;

fn adapt_scale(scale: &mut f64, accepted: usize) {
    let rate = accepted as f64 / ADAPT_WINDOW as f64;
    if rate < 0.2 {
        *scale *= 0.7;
    } else if rate > 0.5 {
        *scale *= 1.4;
    }
}

/// Samples the posterior with coordinate-wise random-walk Metropolis-Hastings
/// on `(ln tau, ln tau_t)`.
pub fn sample_posterior<R: Rng>(
    observations: &[TestObservation],
    patients: &[PresenceCell],
    prior: &PriorHyperparams,
    p0: f64,
    mcmc: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorRun> {
    prior.validate()?;
    mcmc.validate()?;
    RiskParams::from_precisions(p0, 1.0, 1.0)?;
    let post = Posterior::new(observations, patients, *prior, p0);

    let (mut u, mut v) = (prior.mean_tau().ln(), prior.mean_tau_t().ln());
    let (mut target, mut lp) = post.log_target(u, v);
    let mut attempts = 0;
    while !target.is_finite() {
        if attempts == mcmc.max_init_attempts {
            return Err(Error::InconsistentObservations(format!(
                "no starting point with positive posterior density after {attempts} prior draws"
            )));
        }
        attempts += 1;
        let (tau, tau_t) = prior.draw(rng);
        (u, v) = (tau.ln(), tau_t.ln());
        (target, lp) = post.log_target(u, v);
    }

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut scales = [mcmc.proposal_scale; 2];
    let mut window = [0usize; 2];
    let mut accepted_after_burn_in = 0usize;
    let mut samples = Vec::with_capacity((mcmc.iterations - mcmc.burn_in) / mcmc.thin + 1);

    for it in 0..mcmc.iterations {
        for (dim, scale) in scales.iter().enumerate() {
            let step = scale * std_normal.sample(rng);
            let (nu, nv) = if dim == 0 { (u + step, v) } else { (u, v + step) };
            let (nt, nlp) = post.log_target(nu, nv);
            let log_u: f64 = rng.random::<f64>().ln();
            if nt.is_finite() && log_u < nt - target {
                (u, v, target, lp) = (nu, nv, nt, nlp);
                window[dim] += 1;
                if it >= mcmc.burn_in {
                    accepted_after_burn_in += 1;
                }
            }
        }
        if it < mcmc.burn_in && (it + 1) % ADAPT_WINDOW == 0 {
            if mcmc.adapt {
                for dim in 0..2 {
                    adapt_scale(&mut scales[dim], window[dim]);
                }
            }
            window = [0, 0];
        }
        if it >= mcmc.burn_in && (it - mcmc.burn_in).is_multiple_of(mcmc.thin) {
            samples.push(PosteriorSample { iteration: it, tau: u.exp(), tau_t: v.exp(), log_posterior: lp });
        }
    }

    let proposals = 2 * (mcmc.iterations - mcmc.burn_in);
    Ok(PosteriorRun {
        samples,
        acceptance_rate: accepted_after_burn_in as f64 / proposals as f64,
        proposal_scales: (scales[0], scales[1]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub mean: f64,
    pub sd: f64,
    /// Monte Carlo standard error of the mean, by batch means.
    pub mc_se: f64,
    pub ci90_low: f64,
    pub ci90_high: f64,
}

impl ParameterSummary {
    pub fn from_draws(draws: &[f64]) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean,
            sd,
            mc_se: batch_means_se(draws),
            ci90_low: quantile(&sorted, 0.05),
            ci90_high: quantile(&sorted, 0.95),
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        (self.ci90_low..=self.ci90_high).contains(&value)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Standard error of the mean of a correlated sequence using
/// `floor(sqrt(n))` batches.
pub fn batch_means_se(draws: &[f64]) -> f64 {
    let n = draws.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return f64::NAN;
    }
    let size = n / batches;
    let means: Vec<f64> = draws.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub tau: ParameterSummary,
    pub tau_t: ParameterSummary,
    pub acceptance_rate: f64,
    pub n_samples: usize,
}

impl PosteriorSummary {
    pub fn new(run: &PosteriorRun) -> Self {
        let tau: Vec<f64> = run.samples.iter().map(|s| s.tau).collect();
        let tau_t: Vec<f64> = run.samples.iter().map(|s| s.tau_t).collect();
        Self {
            tau: ParameterSummary::from_draws(&tau),
            tau_t: ParameterSummary::from_draws(&tau_t),
            acceptance_rate: run.acceptance_rate,
            n_samples: run.samples.len(),
        }
    }
}

/// Posterior predictive map: each cell holds the mean over samples of its
/// per-sample aggregate risk. The header carries the posterior-mean precisions.
pub fn refined_risk_map(
    posterior: &[PosteriorSample],
    patients: &[Trajectory],
    spec: &GridSpec,
    p0: f64,
    truncation_eps: f64,
) -> Result<RiskMap> {
    if posterior.is_empty() {
        return Err(Error::Domain("posterior sample is empty".into()));
    }
    let n = posterior.len() as f64;
    let mean_tau = posterior.iter().map(|s| s.tau).sum::<f64>() / n;
    let mean_tau_t = posterior.iter().map(|s| s.tau_t).sum::<f64>() / n;
    let header_params = RiskParams::from_precisions(p0, mean_tau, mean_tau_t)?;

    // Repeated parameter points share one build.
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    let mut weights: HashMap<(u64, u64), f64> = HashMap::new();
    let mut order = Vec::new();
    for s in posterior {
        let key = (s.tau.to_bits(), s.tau_t.to_bits());
        *weights.entry(key).or_insert(0.0) += 1.0;
        if seen.insert(key) {
            order.push(key);
        }
    }

    let mut sums: HashMap<CellIndex, f64> = HashMap::new();
    for key in order {
        let params = RiskParams::from_precisions(p0, f64::from_bits(key.0), f64::from_bits(key.1))?;
        let map = build_risk_map(patients, &params, spec, truncation_eps)?;
        let w = weights[&key];
        for (idx, _) in map.entries() {
            *sums.entry(idx).or_insert(0.0) += w * map.risk_at(idx);
        }
    }
    let mut entries: Vec<(CellIndex, f64)> = sums
        .into_iter()
        .map(|(idx, s)| (idx, s / n))
        .filter(|&(_, risk)| risk >= truncation_eps)
        .map(|(idx, risk)| (idx, (-risk).ln_1p()))
        .collect();
    entries.sort_by_key(|e| e.0);
    let limit = (-truncation_eps).ln_1p();
    // rounding in ln_1p can nudge a boundary cell just above the limit
    entries.retain(|&(_, l)| l <= limit);
    RiskMap::from_parts(*spec, header_params, truncation_eps, entries)
}

/// Test-design helper: one patient standing still at the origin cell for
/// `patient_secs`, and `n` tested people each standing still for
/// `visit_secs` at a random offset of up to `max_offset` cells, arriving a
/// random `0..max_lag` seconds after the patient. Outcomes are drawn at `truth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub patient_secs: i64,
    pub visit_secs: i64,
    pub max_offset: i32,
    pub max_lag: i64,
}

impl Default for SyntheticDesign {
    fn default() -> Self {
        Self { patient_secs: 30, visit_secs: 20, max_offset: 2, max_lag: 250 }
    }
}

pub fn synthetic_observations<R: Rng>(
    design: &SyntheticDesign,
    n: usize,
    truth: &RiskParams,
    spec: &GridSpec,
    rng: &mut R,
) -> Result<(Trajectory, Vec<TestObservation>)> {
    let patient = Trajectory::new((0..design.patient_secs).map(|k| spec.center(CellIndex::new(0, 0, k))).collect())?;
    let mut obs = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(-design.max_offset..=design.max_offset);
        let j = rng.random_range(-design.max_offset..=design.max_offset);
        let start = rng.random_range(0..design.max_lag);
        let traj = Trajectory::new(
            (start..start + design.visit_secs).map(|k| spec.center(CellIndex::new(i, j, k))).collect(),
        )?;
        let p = crate::risk::trajectory_risk(&traj, patient.cells(), truth);
        let outcome = rng.random::<f64>() < p;
        obs.push(TestObservation::new(traj, outcome)?);
    }
    Ok((patient, obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{trajectory_risk, DEFAULT_P0};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(x: f64, y: f64, t: f64) -> PresenceCell {
        PresenceCell::new(x, y, t)
    }

    fn hand_instance() -> (Trajectory, Vec<PresenceCell>) {
        let user = Trajectory::new(vec![cell(0.5, 0.5, 3.5), cell(1.5, 0.5, 4.5), cell(1.5, 1.5, 9.5)]).unwrap();
        let patients = vec![cell(0.5, 1.5, 0.5), cell(2.5, 0.5, 4.5)];
        (user, patients)
    }

    #[test]
    fn precision_form_matches_scale_form() {
        let (user, patients) = hand_instance();
        let (tau, tau_t) = (1.0, 1.0 / 10_000.0);
        let scale = RiskParams::from_precisions(DEFAULT_P0, tau, tau_t).unwrap();
        let a = precision_trajectory_risk(&user, &patients, tau, tau_t, DEFAULT_P0);
        let b = trajectory_risk(&user, &patients, &scale);
        assert!((a - b).abs() <= 1e-12 * b);
        for outcome in [true, false] {
            let obs = TestObservation::new(user.clone(), outcome).unwrap();
            let l = likelihood(&obs, &patients, tau, tau_t, DEFAULT_P0);
            let expected = if outcome { b } else { 1.0 - b };
            assert!((l - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn zero_risk_observations() {
        let user = Trajectory::new(vec![cell(0.5, 0.5, 0.5)]).unwrap();
        let patients = [cell(0.5, 0.5, 10.5)];
        let neg = TestObservation::new(user.clone(), false).unwrap();
        let pos = TestObservation::new(user, true).unwrap();
        assert_eq!(likelihood(&neg, &patients, 1.0, 1e-4, DEFAULT_P0), 1.0);
        assert_eq!(likelihood(&pos, &patients, 1.0, 1e-4, DEFAULT_P0), 0.0);
        assert_eq!(log_likelihood(&pos, &patients, 1.0, 1e-4, DEFAULT_P0), f64::NEG_INFINITY);
    }

    #[test]
    fn empty_observation_rejected() {
        assert!(TestObservation::new(Trajectory::default(), true).is_err());
    }

    #[test]
    fn log_posterior_decomposes() {
        let prior = PriorHyperparams::centered_on(&RiskParams::reference());
        let (tau, tau_t) = (0.8, 2e-4);
        assert_eq!(log_posterior(tau, tau_t, &[], &[], &prior, DEFAULT_P0), prior.log_density(tau, tau_t));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (patient, obs) = synthetic_observations(
            &SyntheticDesign::default(),
            5,
            &RiskParams::reference(),
            &GridSpec::default(),
            &mut rng,
        )
        .unwrap();
        let total = log_posterior(tau, tau_t, &obs, patient.cells(), &prior, DEFAULT_P0);
        // term by term, in reverse order
        let mut oracle = 0.0;
        for o in obs.iter().rev() {
            let p = trajectory_risk(
                &o.trajectory,
                patient.cells(),
                &RiskParams::from_precisions(DEFAULT_P0, tau, tau_t).unwrap(),
            );
            oracle += if o.outcome { p.ln() } else { (1.0 - p).ln() };
        }
        oracle += (prior.alpha - 1.0) * tau.ln() - prior.beta * tau;
        oracle += (prior.alpha_t - 1.0) * tau_t.ln() - prior.beta_t * tau_t;
        assert!((total - oracle).abs() <= 1e-12 * oracle.abs(), "{total} vs {oracle}");

        // an observation with likelihood 1 changes nothing
        let safe = TestObservation::new(Trajectory::new(vec![cell(0.5, 0.5, -100.5)]).unwrap(), false).unwrap();
        let mut more = obs.clone();
        more.push(safe);
        assert_eq!(log_posterior(tau, tau_t, &more, patient.cells(), &prior, DEFAULT_P0), total);
    }

    #[test]
    fn prior_recovery_without_data() {
        let prior = PriorHyperparams::new(2.0, 2.0, 2.0, 20_000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let run = sample_posterior(&[], &[], &prior, DEFAULT_P0, &McmcConfig::default(), &mut rng).unwrap();
        assert_eq!(run.samples.len(), 1800);
        let s = PosteriorSummary::new(&run);
        assert!((s.tau.mean - prior.mean_tau()).abs() < 3.0 * s.tau.mc_se, "{:?}", s.tau);
        assert!((s.tau_t.mean - prior.mean_tau_t()).abs() < 3.0 * s.tau_t.mc_se, "{:?}", s.tau_t);
        assert!(run.acceptance_rate > 0.15 && run.acceptance_rate < 0.6);
    }

    #[test]
    fn impossible_positive_is_inconsistent() {
        let prior = PriorHyperparams::centered_on(&RiskParams::reference());
        let obs = TestObservation::new(Trajectory::new(vec![cell(0.5, 0.5, 0.5)]).unwrap(), true).unwrap();
        let patients = [cell(0.5, 0.5, 50.5)];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = sample_posterior(&[obs], &patients, &prior, DEFAULT_P0, &McmcConfig::default(), &mut rng);
        assert!(matches!(err, Err(Error::InconsistentObservations(_))));
    }

    #[test]
    fn chains_are_deterministic() {
        let prior = PriorHyperparams::centered_on(&RiskParams::reference());
        let mut data_rng = ChaCha8Rng::seed_from_u64(3);
        let (patient, obs) = synthetic_observations(
            &SyntheticDesign::default(),
            40,
            &RiskParams::reference(),
            &GridSpec::default(),
            &mut data_rng,
        )
        .unwrap();
        let cfg = McmcConfig { iterations: 600, burn_in: 100, ..McmcConfig::default() };
        let run = |seed| {
            sample_posterior(&obs, patient.cells(), &prior, DEFAULT_P0, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn invalid_mcmc_config() {
        let prior = PriorHyperparams::centered_on(&RiskParams::reference());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for cfg in [
            McmcConfig { thin: 0, ..McmcConfig::default() },
            McmcConfig { burn_in: 10_000, ..McmcConfig::default() },
            McmcConfig { proposal_scale: 0.0, ..McmcConfig::default() },
        ] {
            assert!(sample_posterior(&[], &[], &prior, DEFAULT_P0, &cfg, &mut rng).is_err());
        }
        assert!(PriorHyperparams::new(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn positive_tests_raise_predictive_risk() {
        let truth = RiskParams::reference();
        let prior = PriorHyperparams::centered_on(&truth);
        let patient: Vec<PresenceCell> = (0..20).map(|k| cell(0.5, 0.5, k as f64 + 0.5)).collect();
        // close, short-lag visits that all tested positive
        let obs: Vec<TestObservation> = (0..15)
            .map(|n| {
                let start = 25 + 7 * n;
                let t = Trajectory::new((start..start + 10).map(|k| cell(1.5, 0.5, k as f64 + 0.5)).collect()).unwrap();
                TestObservation::new(t, true).unwrap()
            })
            .collect();
        let cfg = McmcConfig { iterations: 4000, burn_in: 500, ..McmcConfig::default() };
        let predictive = |data: &[TestObservation], seed| {
            let run = sample_posterior(data, &patient, &prior, truth.p0(), &cfg, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            let risks: Vec<f64> = run
                .samples
                .iter()
                .map(|s| {
                    obs.iter()
                        .map(|o| precision_trajectory_risk(&o.trajectory, &patient, s.tau, s.tau_t, truth.p0()))
                        .sum::<f64>()
                        / obs.len() as f64
                })
                .collect();
            ParameterSummary::from_draws(&risks)
        };
        let before = predictive(&[], 1);
        let after = predictive(&obs, 2);
        assert!(after.mean > before.mean - 3.0 * (before.mc_se.powi(2) + after.mc_se.powi(2)).sqrt());
        assert!(after.mean > before.mean);
    }

    #[test]
    fn refined_map_single_sample_matches_point_build() {
        let patients = [Trajectory::new((0..5).map(|k| cell(k as f64 + 0.5, 0.5, k as f64 + 0.5)).collect()).unwrap()];
        let spec = GridSpec::default();
        let s = PosteriorSample { iteration: 0, tau: 0.7, tau_t: 1.0 / 400.0, log_posterior: 0.0 };
        let refined = refined_risk_map(&[s], &patients, &spec, 0.05, 1e-9).unwrap();
        let point =
            build_risk_map(&patients, &RiskParams::from_precisions(0.05, 0.7, 1.0 / 400.0).unwrap(), &spec, 1e-9)
                .unwrap();
        assert_eq!(refined.len(), point.len());
        for (idx, _) in point.entries() {
            assert!((refined.risk_at(idx) - point.risk_at(idx)).abs() <= 1e-15 * point.risk_at(idx));
        }
    }

    #[test]
    fn refined_map_two_samples_is_average() {
        let patients = [Trajectory::new((0..5).map(|k| cell(0.5, k as f64 + 0.5, k as f64 + 0.5)).collect()).unwrap()];
        let spec = GridSpec::default();
        let s1 = PosteriorSample { iteration: 0, tau: 0.7, tau_t: 1.0 / 400.0, log_posterior: 0.0 };
        let s2 = PosteriorSample { iteration: 5, tau: 1.6, tau_t: 1.0 / 100.0, log_posterior: 0.0 };
        let eps = 1e-12;
        let refined = refined_risk_map(&[s1, s2], &patients, &spec, 0.05, eps).unwrap();
        let m1 = build_risk_map(&patients, &RiskParams::from_precisions(0.05, s1.tau, s1.tau_t).unwrap(), &spec, eps)
            .unwrap();
        let m2 = build_risk_map(&patients, &RiskParams::from_precisions(0.05, s2.tau, s2.tau_t).unwrap(), &spec, eps)
            .unwrap();
        for (idx, _) in m1.entries().chain(m2.entries()) {
            let avg = (m1.risk_at(idx) + m2.risk_at(idx)) / 2.0;
            assert!((refined.risk_at(idx) - avg).abs() <= 1e-12, "{idx:?}");
        }
        assert!((refined.params().precisions().tau_x - 1.15).abs() < 1e-12);
        assert!(refined_risk_map(&[], &patients, &spec, 0.05, eps).is_err());
    }
}
