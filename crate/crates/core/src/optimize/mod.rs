//! Derivative-free search for Fourier coefficients that minimize the CZ
//! error of a configuration.
//!
//! A candidate is a flat vector holding, for every free role in order,
//! either the full `[a_0, …, a_N]` or only the tail `[a_1, …, a_N]` when
//! zero endpoints are enforced (then `a_0 = −2 Σ a_n`).

pub mod differential_evolution;
pub mod nelder_mead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate_model, DEFAULT_STEPS};
use crate::gates::{computational_block, cz_error, GateReport};
use crate::model::{GateConfiguration, Model, Role};
use crate::pulse::{json_error, zero_endpoint_reparam, Decimal, PulseDocument, PulseSet, Waveform};
use crate::{Error, Result};

pub const SEARCH_STEPS: usize = 1024;

/// Default weight of `Σ boundary_residual²` (residuals in 2π×MHz). Small
/// enough that the 0.01 rounding of published coefficients stays far below
/// the 1e-4 error target.
pub const DEFAULT_LAMBDA: f64 = 1e-6;

/// Weight of the squared bound excess added to out-of-box candidates.
pub const OUT_OF_BOUNDS_WEIGHT: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct OptimizationProblem {
    pub config: GateConfiguration,
    /// Waveforms of the fixed roles; free roles present here seed warm starts.
    pub base_pulses: PulseSet,
    pub free_roles: Vec<Role>,
    pub n_harmonics: usize,
    pub tau: f64,
    /// Coefficient box, applied to every searched coordinate.
    pub bounds: (f64, f64),
    pub enforce_zero_endpoints: bool,
    /// Weight of `Σ boundary_residual²`; ignored with zero endpoints.
    pub lambda: f64,
    pub search_steps: usize,
    pub verify_steps: usize,
}

impl OptimizationProblem {
    pub fn new(config: GateConfiguration, base_pulses: PulseSet, free_roles: Vec<Role>, n_harmonics: usize, tau: f64) -> Self {
        let two_photon = config.scheme == crate::model::Scheme::TwoPhotonTwoQubit;
        OptimizationProblem {
            config,
            base_pulses,
            free_roles,
            n_harmonics,
            tau,
            bounds: if two_photon { (-3000.0, 3000.0) } else { (-400.0, 400.0) },
            enforce_zero_endpoints: false,
            lambda: DEFAULT_LAMBDA,
            search_steps: SEARCH_STEPS,
            verify_steps: DEFAULT_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("bounds must be finite with low < high, got [{lo}, {hi}]")));
        }
        if self.free_roles.is_empty() {
            return Err(Error::invalid("at least one role must be free"));
        }
        for r in &self.free_roles {
            if !self.config.scheme.roles().contains(r) {
                return Err(Error::invalid(format!("free role {r} does not belong to {}", self.config.scheme)));
            }
        }
        if self.search_steps == 0 || self.verify_steps == 0 {
            return Err(Error::invalid("step counts must be positive"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid("tau must be > 0"));
        }
        Ok(())
    }

    fn per_role(&self) -> usize {
        if self.enforce_zero_endpoints {
            self.n_harmonics
        } else {
            self.n_harmonics + 1
        }
    }

    pub fn dim(&self) -> usize {
        self.free_roles.len() * self.per_role()
    }

    /// Pulse set for candidate `x` (assumed inside the box).
    pub fn decode(&self, x: &[f64]) -> Result<PulseSet> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("candidate has {} entries, expected {}", x.len(), self.dim())));
        }
        let mut pulses = self.base_pulses.clone();
        for (role, chunk) in self.free_roles.iter().zip(x.chunks(self.per_role())) {
            let w = if self.enforce_zero_endpoints {
                zero_endpoint_reparam(chunk, self.tau)?
            } else {
                Waveform::modulated(chunk.to_vec(), self.tau)?
            };
            pulses.insert(*role, w);
        }
        Ok(pulses)
    }

    /// Candidate vector for the free roles' current waveforms.
    pub fn encode(&self, pulses: &PulseSet) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.dim());
        for role in &self.free_roles {
            let c = pulses
                .get(*role)
                .and_then(Waveform::coefficients)
                .ok_or_else(|| Error::invalid(format!("free role {role} has no modulated waveform")))?;
            if c.len() != self.n_harmonics + 1 {
                return Err(Error::invalid(format!("free role {role} has {} coefficients", c.len())));
            }
            x.extend_from_slice(if self.enforce_zero_endpoints { &c[1..] } else { c });
        }
        Ok(x)
    }
}

/// Reusable objective evaluator for one problem.
pub struct Objective<'p> {
    problem: &'p OptimizationProblem,
    model: Model,
}

impl<'p> Objective<'p> {
    pub fn new(problem: &'p OptimizationProblem) -> Result<Self> {
        problem.validate()?;
        let model = Model::new(&problem.config)?;
        let probe = problem.decode(&vec![0.0; problem.dim()])?;
        problem.config.check_wiring(&probe)?;
        Ok(Objective { problem, model })
    }

    /// Gate error at `n_steps`.
    pub fn gate_report(&self, pulses: &PulseSet, n_steps: usize) -> Result<GateReport> {
        let u = propagate_model(&self.model, pulses, n_steps)?;
        Ok(cz_error(&computational_block(&u, &self.model.space)))
    }

    /// `error + λ·Σ residual² + w·Σ excess²`, evaluated at the box-clamped
    /// candidate.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let p = self.problem;
        let (lo, hi) = p.bounds;
        let mut excess = 0.0;
        let clamped: Vec<f64> = x
            .iter()
            .map(|&v| {
                let c = v.clamp(lo, hi);
                excess += (v - c).powi(2);
                c
            })
            .collect();
        let pulses = p.decode(&clamped)?;
        let mut value = self.gate_report(&pulses, p.search_steps)?.error;
        if !p.enforce_zero_endpoints && p.lambda != 0.0 {
            let residuals: f64 = p
                .free_roles
                .iter()
                .map(|r| pulses.get(*r).unwrap().boundary_residual().map(|v| v * v))
                .sum::<Result<f64>>()?;
            value += p.lambda * residuals;
        }
        Ok(value + OUT_OF_BOUNDS_WEIGHT * excess)
    }

    fn value_or_inf(&self, x: &[f64]) -> f64 {
        self.value(x).unwrap_or(f64::INFINITY)
    }
}

/// Objective of `candidate` for `problem` at search resolution.
pub fn objective(candidate: &[f64], problem: &OptimizationProblem) -> Result<f64> {
    Objective::new(problem)?.value(candidate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NelderMead,
    DifferentialEvolution,
}

#[derive(Clone, Debug)]
pub struct SearchSettings {
    pub algorithm: Algorithm,
    /// Objective evaluations per restart.
    pub max_evals: usize,
    pub n_restarts: usize,
    pub seed: u64,
    /// Success threshold on the gate error.
    pub target: f64,
    /// Stop a restart once its objective is below `target`, and skip
    /// remaining restart batches once any restart succeeded.
    pub stop_at_target: bool,
    /// Restart 0 starts here instead of a random point.
    pub warm_start: Option<Vec<f64>>,
    /// Initial simplex edge as a fraction of the box width.
    pub simplex_fraction: f64,
    /// Absolute initial simplex edge for `refine`.
    pub refine_step: f64,
    /// Worker threads; restarts are evaluated in batches of this size.
    pub jobs: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            algorithm: Algorithm::NelderMead,
            max_evals: 20_000,
            n_restarts: 10,
            seed: 0,
            target: 1e-4,
            stop_at_target: true,
            warm_start: None,
            simplex_fraction: 0.05,
            refine_step: 1.0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub objective: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub best: Vec<f64>,
    pub best_pulses: PulseSet,
    /// Objective of `best` at search resolution.
    pub best_objective: f64,
    /// Report at verification resolution.
    pub report: GateReport,
    /// Running-best objective, indexed by cumulative evaluation count with
    /// restarts laid end to end in index order.
    pub history: Vec<(usize, f64)>,
    pub seed: u64,
    pub restarts_used: usize,
    pub evaluations: usize,
    pub restarts: Vec<RestartSummary>,
    pub reached_target: bool,
}

struct RestartOutcome {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    history: Vec<(usize, f64)>,
}

fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_restart(obj: &Objective, settings: &SearchSettings, index: usize) -> RestartOutcome {
    let p = obj.problem;
    let dim = p.dim();
    let (lo, hi) = p.bounds;
    let mut rng = restart_rng(settings.seed, index);
    let start: Vec<f64> = match (&settings.warm_start, index) {
        (Some(w), 0) => w.clone(),
        _ => (0..dim).map(|_| rng.gen_range(lo..=hi)).collect(),
    };
    match settings.algorithm {
        Algorithm::NelderMead => {
            let mut opts = nelder_mead::NelderMeadOptions::new(
                settings.max_evals,
                vec![settings.simplex_fraction * (hi - lo); dim],
            );
            opts.x_tol = 1e-8;
            opts.f_tol = 1e-12;
            opts.restart_on_convergence = true;
            if settings.stop_at_target {
                opts.target = Some(settings.target);
            }
            let out = nelder_mead::minimize(|x| obj.value_or_inf(x), &start, &opts);
            RestartOutcome { x: out.x, f: out.f, evals: out.evals, history: out.history }
        }
        Algorithm::DifferentialEvolution => {
            let opts = differential_evolution::DeOptions {
                max_evals: settings.max_evals,
                target: settings.stop_at_target.then_some(settings.target),
                ..Default::default()
            };
            let seed_point = (settings.warm_start.is_some() && index == 0).then_some(start.as_slice());
            let out = differential_evolution::minimize(
                |x| obj.value_or_inf(x),
                &vec![lo; dim],
                &vec![hi; dim],
                seed_point,
                &opts,
                &mut rng,
            );
            RestartOutcome { x: out.x, f: out.f, evals: out.evals, history: out.history }
        }
    }
}

fn finish(
    obj: &Objective,
    settings: &SearchSettings,
    outcomes: Vec<RestartOutcome>,
) -> Result<OptimizationResult> {
    let p = obj.problem;
    let mut history = Vec::new();
    let mut running = f64::INFINITY;
    let mut offset = 0;
    let mut restarts = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        for &(e, v) in &o.history {
            if v < running {
                running = v;
                history.push((offset + e, v));
            }
        }
        offset += o.evals;
        restarts.push(RestartSummary { index: i, objective: o.f, evaluations: o.evals });
    }
    // lowest objective, then lowest restart index
    let winner = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::invalid("no restarts were run"))?;
    let (lo, hi) = p.bounds;
    let best: Vec<f64> = outcomes[winner].x.iter().map(|v| v.clamp(lo, hi)).collect();
    let best_pulses = p.decode(&best)?;
    let report = obj.gate_report(&best_pulses, p.verify_steps)?;
    Ok(OptimizationResult {
        best,
        best_pulses,
        best_objective: outcomes[winner].f,
        reached_target: report.error < settings.target,
        report,
        history,
        seed: settings.seed,
        restarts_used: outcomes.len(),
        evaluations: offset,
        restarts,
    })
}

/// Multi-restart search. Deterministic for fixed problem and settings
/// (including `jobs`, which sets the batch size when stopping early).
pub fn search(problem: &OptimizationProblem, settings: &SearchSettings) -> Result<OptimizationResult> {
    let obj = Objective::new(problem)?;
    if let Some(w) = &settings.warm_start {
        if w.len() != problem.dim() {
            return Err(Error::invalid("warm start does not match the problem dimension"));
        }
    }
    let n_restarts = settings.n_restarts.max(1);
    let jobs = settings.jobs.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let mut outcomes: Vec<RestartOutcome> = Vec::with_capacity(n_restarts);
    let batch = if settings.stop_at_target { jobs } else { n_restarts };
    let mut next = 0;
    while next < n_restarts {
        let end = (next + batch).min(n_restarts);
        let mut done: Vec<RestartOutcome> =
            pool.install(|| (next..end).into_par_iter().map(|i| run_restart(&obj, settings, i)).collect());
        outcomes.append(&mut done);
        next = end;
        if settings.stop_at_target && outcomes.iter().any(|o| o.f < settings.target) {
            break;
        }
    }
    finish(&obj, settings, outcomes)
}

/// Local Nelder–Mead polish from `start` with simplex edge
/// `settings.refine_step`. Never returns a worse objective than `start`.
pub fn refine(start: &[f64], problem: &OptimizationProblem, settings: &SearchSettings) -> Result<OptimizationResult> {
    let obj = Objective::new(problem)?;
    if start.len() != problem.dim() {
        return Err(Error::invalid("start does not match the problem dimension"));
    }
    let mut opts = nelder_mead::NelderMeadOptions::new(settings.max_evals, vec![settings.refine_step; start.len()]);
    opts.x_tol = 1e-8;
    opts.f_tol = 1e-14;
    opts.restart_on_convergence = true;
    let out = nelder_mead::minimize(|x| obj.value_or_inf(x), start, &opts);
    finish(&obj, settings, vec![RestartOutcome { x: out.x, f: out.f, evals: out.evals, history: out.history }])
}

// ---------------------------------------------------------------------------
// Documents

fn default_steps_search() -> usize {
    SEARCH_STEPS
}
fn default_steps_verify() -> usize {
    DEFAULT_STEPS
}
fn default_restarts() -> usize {
    10
}
fn default_evals() -> usize {
    20_000
}
fn default_target() -> Decimal {
    Decimal(1e-4)
}
fn default_lambda() -> Decimal {
    Decimal(DEFAULT_LAMBDA)
}
fn default_algorithm() -> Algorithm {
    Algorithm::NelderMead
}

/// Problem plus settings. The embedded pulses wire every role; the free
/// roles' coefficients are the warm start when `warm_start` is set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemDocument {
    #[serde(flatten)]
    pub pulse: PulseDocument,
    pub free_roles: Vec<String>,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_evals")]
    pub max_evals: usize,
    #[serde(default = "default_restarts")]
    pub n_restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bounds: Option<(Decimal, Decimal)>,
    #[serde(default)]
    pub enforce_zero_endpoints: bool,
    #[serde(default = "default_lambda")]
    pub lambda: Decimal,
    #[serde(default)]
    pub warm_start: bool,
    #[serde(default = "default_target")]
    pub target_error: Decimal,
    #[serde(default = "default_steps_search")]
    pub search_steps: usize,
    #[serde(default = "default_steps_verify")]
    pub verify_steps: usize,
}

impl ProblemDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(json_error)
    }

    pub fn to_problem(&self) -> Result<(OptimizationProblem, SearchSettings)> {
        let (config, pulses) = self.pulse.to_model()?;
        let free_roles = self
            .free_roles
            .iter()
            .map(|n| Role::from_name(n).ok_or_else(|| Error::parse("free_roles", format!("unknown role '{n}'"))))
            .collect::<Result<Vec<_>>>()?;
        let mut problem =
            OptimizationProblem::new(config, pulses.clone(), free_roles, self.pulse.n_harmonics, self.pulse.tau_us.0);
        if let Some((lo, hi)) = self.bounds {
            problem.bounds = (lo.0, hi.0);
        }
        problem.enforce_zero_endpoints = self.enforce_zero_endpoints;
        problem.lambda = self.lambda.0;
        problem.search_steps = self.search_steps;
        problem.verify_steps = self.verify_steps;
        problem.validate()?;
        let warm_start = if self.warm_start { Some(problem.encode(&pulses)?) } else { None };
        let settings = SearchSettings {
            algorithm: self.algorithm,
            max_evals: self.max_evals,
            n_restarts: self.n_restarts,
            seed: self.seed,
            target: self.target_error.0,
            warm_start,
            ..Default::default()
        };
        Ok((problem, settings))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultDocument {
    pub best_objective: f64,
    pub verification_error: f64,
    pub reached_target: bool,
    pub seed: u64,
    pub restarts_used: usize,
    pub evaluations: usize,
    pub history: Vec<(usize, f64)>,
    pub restarts: Vec<RestartSummary>,
    pub report: GateReport,
    pub pulse_file: PulseDocument,
}

impl ResultDocument {
    pub fn new(problem: &OptimizationProblem, r: &OptimizationResult) -> Result<Self> {
        Ok(ResultDocument {
            best_objective: r.best_objective,
            verification_error: r.report.error,
            reached_target: r.reached_target,
            seed: r.seed,
            restarts_used: r.restarts_used,
            evaluations: r.evaluations,
            history: r.history.clone(),
            restarts: r.restarts.clone(),
            report: r.report.clone(),
            pulse_file: PulseDocument::from_model(&problem.config, &r.best_pulses)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::preset;

    fn fig2_problem() -> OptimizationProblem {
        let (cfg, pulses) = preset("fig2").unwrap();
        OptimizationProblem::new(cfg, pulses, vec![Role::OmegaC, Role::OmegaT], 5, 0.25)
    }

    #[test]
    fn preset_objective_is_small() {
        let p = fig2_problem();
        let x = p.encode(&p.base_pulses).unwrap();
        let v = objective(&x, &p).unwrap();
        assert!(v < 1e-4 + p.lambda * (0.01f64.powi(2) * 2.0) + 1e-9, "{v}");
    }

    #[test]
    fn zero_candidate_scores_identity() {
        let p = fig2_problem();
        let v = objective(&vec![0.0; p.dim()], &p).unwrap();
        let identity = cz_error(&crate::gates::Block::identity()).error;
        assert!((v - identity).abs() < 1e-12);
    }

    #[test]
    fn out_of_box_candidates_are_clamped_and_penalized() {
        let p = fig2_problem();
        let x = p.encode(&p.base_pulses).unwrap();
        let inside = objective(&x, &p).unwrap();
        let mut y = x.clone();
        y[3] = 410.0;
        let mut clamped = x.clone();
        clamped[3] = 400.0;
        let vy = objective(&y, &p).unwrap();
        let vc = objective(&clamped, &p).unwrap();
        assert!((vy - vc - 100.0 * OUT_OF_BOUNDS_WEIGHT).abs() < 1e-9);
        assert!(inside < vc);
    }

    #[test]
    fn reparameterized_candidates_have_zero_endpoints() {
        let mut p = fig2_problem();
        p.enforce_zero_endpoints = true;
        assert_eq!(p.dim(), 10);
        let x = p.encode(&p.base_pulses).unwrap();
        let pulses = p.decode(&x).unwrap();
        for r in &p.free_roles {
            assert_eq!(pulses.get(*r).unwrap().boundary_residual().unwrap(), 0.0);
        }
    }

    #[test]
    fn search_is_deterministic() {
        let p = fig2_problem();
        let settings = SearchSettings { max_evals: 60, n_restarts: 2, seed: 7, stop_at_target: false, ..Default::default() };
        let a = search(&p, &settings).unwrap();
        let b = search(&p, &settings).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best, b.best);
        assert_eq!(a.restarts_used, 2);
        assert_eq!(a.evaluations, 120);
        assert!(a.history.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn refine_never_worsens() {
        let p = fig2_problem();
        let start = p.encode(&p.base_pulses).unwrap();
        let settings = SearchSettings { max_evals: 40, ..Default::default() };
        let r = refine(&start, &p, &settings).unwrap();
        assert!(r.best_objective <= objective(&start, &p).unwrap());
    }

    #[test]
    fn refine_recovers_from_perturbed_preset() {
        let p = fig2_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start: Vec<f64> =
            p.encode(&p.base_pulses).unwrap().iter().map(|a| a + rng.gen_range(-1.0..=1.0)).collect();
        let before = Objective::new(&p).unwrap().gate_report(&p.decode(&start).unwrap(), p.verify_steps).unwrap();
        assert!(before.error > 1e-4, "perturbation too small: {}", before.error);
        let r = refine(&start, &p, &SearchSettings { max_evals: 5000, ..Default::default() }).unwrap();
        assert!(r.report.error < 1e-4, "{}", r.report.error);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let mut p = fig2_problem();
        p.bounds = (1.0, -1.0);
        assert!(Objective::new(&p).is_err());
        let mut p = fig2_problem();
        p.free_roles = vec![Role::Omega1];
        assert!(Objective::new(&p).is_err());
        let p = fig2_problem();
        assert!(objective(&[1.0, 2.0], &p).is_err());
    }
}
