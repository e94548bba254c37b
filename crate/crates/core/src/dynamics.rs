//! Time evolution under H(t) with ħ = 1.
//!
//! The integrator is the exponential midpoint rule on a uniform grid: each
//! step applies `exp(−i·H(t_k + dt/2)·dt)` computed from a Hermitian
//! eigendecomposition. Propagation runs sector by sector, so cross-sector
//! entries of the propagator are exactly zero.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::model::{GateConfiguration, HermitianOperator, Model};
use crate::pulse::PulseSet;
use crate::{Error, Result, C64};

pub const DEFAULT_STEPS: usize = 4096;

/// Population below which a phase sample is treated as unreliable.
pub const JUMP_EPSILON: f64 = 0.01;

/// `exp(−i·H·dt)` via eigendecomposition.
pub fn step_propagator(h: &HermitianOperator, dt: f64) -> Result<DMatrix<C64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("step must be > 0, got {dt}")));
    }
    let eig = h.matrix().clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -e * dt)),
    );
    let mut vd = v.clone();
    for (j, mut col) in vd.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    Ok(vd * v.adjoint())
}

/// Real-symmetric version used on sector blocks: the couplings are real
/// by construction, only the propagator is complex.
fn real_step(h: DMatrix<f64>, dt: f64) -> DMatrix<C64> {
    let n = h.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, C64::from_polar(1.0, -h[(0, 0)] * dt));
    }
    if n == 2 {
        // H = m·I + z·σz + g·σx  ⇒  e^{-iHdt} = e^{-imdt}(cos θ − i sin θ (z·σz + g·σx)/ω)
        let (m, z, g) = (0.5 * (h[(0, 0)] + h[(1, 1)]), 0.5 * (h[(0, 0)] - h[(1, 1)]), h[(0, 1)]);
        let w = z.hypot(g);
        let (s, c) = (w * dt).sin_cos();
        let (sz, sg) = if w > 0.0 { (s * z / w, s * g / w) } else { (0.0, 0.0) };
        let p = C64::from_polar(1.0, -m * dt);
        return DMatrix::from_row_slice(
            2,
            2,
            &[p * C64::new(c, -sz), p * C64::new(0.0, -sg), p * C64::new(0.0, -sg), p * C64::new(c, sz)],
        );
    }
    if n == 3 {
        let eig = Matrix3::from_fn(|i, j| h[(i, j)]).symmetric_eigen();
        return spectral(3, eig.eigenvalues.as_slice(), |i, k| eig.eigenvectors[(i, k)], dt);
    }
    let eig = h.symmetric_eigen();
    spectral(n, eig.eigenvalues.as_slice(), |i, k| eig.eigenvectors[(i, k)], dt)
}

/// `Σ_k e^{-i e_k dt} v_k v_kᵀ`.
fn spectral(n: usize, values: &[f64], v: impl Fn(usize, usize) -> f64, dt: f64) -> DMatrix<C64> {
    let phases: Vec<C64> = values.iter().map(|&e| C64::from_polar(1.0, -e * dt)).collect();
    let mut u = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let pj = phases[k] * v(j, k);
            for i in j..n {
                u[(i, j)] += pj * v(i, k);
            }
        }
    }
    for j in 0..n {
        for i in 0..j {
            u[(i, j)] = u[(j, i)];
        }
    }
    u
}

struct SectorPlan {
    indices: Vec<usize>,
    diagonal: Vec<f64>,
    /// (local a, local b, role slot)
    couplings: Vec<(usize, usize, usize)>,
}

/// Per-sector data for fast stepping.
pub(crate) struct Stepper<'a> {
    model: &'a Model,
    plans: Vec<SectorPlan>,
    sector_of: Vec<(usize, usize)>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(model: &'a Model) -> Self {
        let space = &model.space;
        let mut sector_of = vec![(0, 0); space.dim()];
        let plans = space
            .sectors
            .iter()
            .enumerate()
            .map(|(s, idx)| {
                for (k, &i) in idx.iter().enumerate() {
                    sector_of[i] = (s, k);
                }
                SectorPlan {
                    indices: idx.clone(),
                    diagonal: idx.iter().map(|&i| space.diagonal[i]).collect(),
                    couplings: Vec::new(),
                }
            })
            .collect::<Vec<_>>();
        let mut stepper = Stepper { model, plans, sector_of };
        for c in &space.couplings {
            let (s, a) = stepper.sector_of[c.a];
            let (_, b) = stepper.sector_of[c.b];
            stepper.plans[s].couplings.push((a, b, crate::model::role_slot(c.role)));
        }
        stepper
    }

    fn block(&self, sector: usize, values: &[f64; 8]) -> DMatrix<f64> {
        let plan = &self.plans[sector];
        let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(&plan.diagonal));
        for &(a, b, slot) in &plan.couplings {
            h[(a, b)] += 0.5 * values[slot];
            h[(b, a)] += 0.5 * values[slot];
        }
        h
    }

    /// Role values at the midpoint of each of `n_steps` uniform steps.
    fn midpoint_values(&self, pulses: &PulseSet, n_steps: usize) -> Result<Vec<[f64; 8]>> {
        let dt = self.model.config.duration / n_steps as f64;
        (0..n_steps).map(|k| self.model.role_values(pulses, (k as f64 + 0.5) * dt)).collect()
    }

    pub(crate) fn sector_blocks(&self, pulses: &PulseSet, n_steps: usize) -> Result<Vec<DMatrix<C64>>> {
        let dt = self.model.config.duration / n_steps as f64;
        let values = self.midpoint_values(pulses, n_steps)?;
        Ok((0..self.plans.len())
            .map(|s| {
                let n = self.plans[s].indices.len();
                let mut u = DMatrix::<C64>::identity(n, n);
                for v in &values {
                    u = real_step(self.block(s, v), dt) * u;
                }
                u
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct Propagator {
    pub matrix: DMatrix<C64>,
    pub n_steps: usize,
    pub duration: f64,
}

impl Propagator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `‖U†U − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        let d = self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(n, n);
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn propagate_model(model: &Model, pulses: &PulseSet, n_steps: usize) -> Result<Propagator> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    model.config.check_wiring(pulses)?;
    let stepper = Stepper::new(model);
    let blocks = stepper.sector_blocks(pulses, n_steps)?;
    let n = model.space.dim();
    let mut matrix = DMatrix::<C64>::zeros(n, n);
    for (plan, block) in stepper.plans.iter().zip(&blocks) {
        for (a, &i) in plan.indices.iter().enumerate() {
            for (b, &j) in plan.indices.iter().enumerate() {
                matrix[(i, j)] = block[(a, b)];
            }
        }
    }
    Ok(Propagator { matrix, n_steps, duration: model.config.duration })
}

/// Full-space propagator over `[0, T]`.
pub fn propagate(config: &GateConfiguration, pulses: &PulseSet, n_steps: usize) -> Result<Propagator> {
    propagate_model(&Model::new(config)?, pulses, n_steps)
}

/// Amplitude history on the grid `t_k = k·T/n_steps`, `k = 0..=n_steps`.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `amplitudes[k][i]`: amplitude of basis state `i` at `times[k]`.
    pub amplitudes: Vec<Vec<C64>>,
    /// `phases[i][k]`: unwrapped phase of basis state `i`.
    pub phases: Vec<Vec<f64>>,
    /// Basis index the trajectory starts from.
    pub reference: usize,
}

impl TrajectoryRecord {
    fn from_amplitudes(times: Vec<f64>, labels: Vec<String>, amplitudes: Vec<Vec<C64>>, reference: usize) -> Self {
        let phases = (0..labels.len())
            .map(|i| {
                let raw: Vec<C64> = amplitudes.iter().map(|a| a[i]).collect();
                unwrap_phases(&raw, JUMP_EPSILON)
            })
            .collect();
        TrajectoryRecord { times, labels, amplitudes, phases, reference }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn populations(&self, state: usize) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a[state].norm_sqr()).collect()
    }

    pub fn total_population(&self, k: usize) -> f64 {
        self.amplitudes[k].iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn reference_label(&self) -> &str {
        &self.labels[self.reference]
    }

    /// Header `t_us,<label>_re,<label>_im,<label>_pop,<label>_phase,…`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t_us".to_string()];
        for l in &self.labels {
            for field in ["re", "im", "pop", "phase"] {
                header.push(format!("{l}_{field}"));
            }
        }
        w.write_record(&header).map_err(csv_error)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for (i, z) in self.amplitudes[k].iter().enumerate() {
                row.push(z.re.to_string());
                row.push(z.im.to_string());
                row.push(z.norm_sqr().to_string());
                row.push(self.phases[i][k].to_string());
            }
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv). The reference
    /// state is the one with the largest initial population.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_error)?.clone();
        if header.get(0) != Some("t_us") || (header.len() - 1) % 4 != 0 {
            return Err(Error::parse("header", "expected t_us followed by groups of 4 columns"));
        }
        let labels: Vec<String> = (1..header.len())
            .step_by(4)
            .map(|c| header[c].trim_end_matches("_re").to_string())
            .collect();
        let mut times = Vec::new();
        let mut amplitudes = Vec::new();
        let mut phases = vec![Vec::new(); labels.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::parse(format!("row {} column {}", line + 2, c + 1), "not a number"))
            };
            times.push(num(0)?);
            let mut amps = Vec::with_capacity(labels.len());
            for i in 0..labels.len() {
                amps.push(C64::new(num(1 + 4 * i)?, num(2 + 4 * i)?));
                phases[i].push(num(4 + 4 * i)?);
            }
            amplitudes.push(amps);
        }
        if times.is_empty() {
            return Err(Error::parse("body", "trajectory has no rows"));
        }
        let reference = (0..labels.len())
            .max_by(|&a, &b| amplitudes[0][a].norm_sqr().total_cmp(&amplitudes[0][b].norm_sqr()))
            .unwrap_or(0);
        Ok(TrajectoryRecord { times, labels, amplitudes, phases, reference })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::parse("csv", e.to_string())
}

/// Unwraps `arg(z_k)` by adding multiples of 2π so each sample lands as
/// close as possible to the last sample whose population was at least
/// `epsilon`. Samples below `epsilon` never become the anchor, so a genuine
/// jump across a population zero survives unwrapping.
pub fn unwrap_phases(samples: &[C64], epsilon: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut anchor: Option<f64> = None;
    for z in samples {
        let raw = z.arg();
        let phase = match anchor {
            None => raw,
            Some(a) => raw + TAU * ((a - raw) / TAU).round(),
        };
        if z.norm_sqr() >= epsilon || anchor.is_none() {
            anchor = Some(phase);
        }
        out.push(phase);
    }
    out
}

/// Wraps an angle into (−π, π].
pub fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Evolves an arbitrary initial vector and records every grid point.
pub fn trajectory_from(
    model: &Model,
    pulses: &PulseSet,
    initial: DVector<C64>,
    reference: usize,
    n_steps: usize,
) -> Result<TrajectoryRecord> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    if initial.len() != model.space.dim() || reference >= model.space.dim() {
        return Err(Error::invalid("initial vector does not match the state space"));
    }
    model.config.check_wiring(pulses)?;
    let stepper = Stepper::new(model);
    let dt = model.config.duration / n_steps as f64;
    let values = stepper.midpoint_values(pulses, n_steps)?;
    let active: Vec<usize> = (0..stepper.plans.len())
        .filter(|&s| stepper.plans[s].indices.iter().any(|&i| initial[i] != C64::new(0.0, 0.0)))
        .collect();
    let mut psi = initial;
    let mut amplitudes = Vec::with_capacity(n_steps + 1);
    amplitudes.push(psi.iter().copied().collect::<Vec<_>>());
    for v in &values {
        for &s in &active {
            let plan = &stepper.plans[s];
            let u = real_step(stepper.block(s, v), dt);
            let sub = DVector::from_iterator(plan.indices.len(), plan.indices.iter().map(|&i| psi[i]));
            let next = u * sub;
            for (k, &i) in plan.indices.iter().enumerate() {
                psi[i] = next[k];
            }
        }
        amplitudes.push(psi.iter().copied().collect());
    }
    let times = (0..=n_steps).map(|k| k as f64 * dt).collect();
    Ok(TrajectoryRecord::from_amplitudes(times, model.space.labels(), amplitudes, reference))
}

/// Trajectory starting from the computational basis state `initial`.
pub fn trajectory(
    config: &GateConfiguration,
    pulses: &PulseSet,
    initial: &str,
    n_steps: usize,
) -> Result<TrajectoryRecord> {
    let model = Model::new(config)?;
    trajectory_of_model(&model, pulses, initial, n_steps)
}

pub fn trajectory_of_model(
    model: &Model,
    pulses: &PulseSet,
    initial: &str,
    n_steps: usize,
) -> Result<TrajectoryRecord> {
    let idx = model
        .space
        .computational
        .iter()
        .copied()
        .find(|&i| model.space.states[i].label() == initial)
        .ok_or_else(|| Error::invalid(format!("'{initial}' is not a computational basis state")))?;
    let mut psi = DVector::<C64>::zeros(model.space.dim());
    psi[idx] = C64::new(1.0, 0.0);
    trajectory_from(model, pulses, psi, idx, n_steps)
}
