//! CZ scoring of the computational block and the phase/spectrum diagnostics.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_pi, Propagator, TrajectoryRecord, JUMP_EPSILON};
use crate::model::{GateConfiguration, Model, StateSpace};
use crate::optimize::nelder_mead::{self, NelderMeadOptions};
use crate::pulse::PulseSet;
use crate::{Error, Result, C64};

pub type Block = Matrix4<C64>;

/// Computational inputs in block order.
pub const INPUT_LABELS: [&str; 4] = ["00", "01", "10", "11"];

/// `⟨comp_i|U|comp_j⟩` over (00, 01, 10, 11).
pub fn computational_block(u: &Propagator, space: &StateSpace) -> Block {
    let c = space.computational;
    Block::from_fn(|i, j| u.matrix[(c[i], c[j])])
}

/// `diag(1, e^{iφ_t}, e^{iφ_c}, −e^{i(φ_c+φ_t)})`.
pub fn cz_target(phi_c: f64, phi_t: f64) -> Block {
    Block::from_diagonal(&nalgebra::Vector4::new(
        C64::new(1.0, 0.0),
        C64::from_polar(1.0, phi_t),
        C64::from_polar(1.0, phi_c),
        -C64::from_polar(1.0, phi_c + phi_t),
    ))
}

/// `[Tr(MM†) + |Tr M|²] / 20` with `M = U_CZ(φ_c, φ_t)† · block`.
pub fn fidelity_at(block: &Block, phi_c: f64, phi_t: f64) -> f64 {
    let m = cz_target(phi_c, phi_t).adjoint() * block;
    ((m * m.adjoint()).trace().re + m.trace().norm_sqr()) / 20.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    /// Fidelity maximized over the single-qubit compensation phases.
    pub fidelity: f64,
    pub error: f64,
    /// φ11 − φ10 − φ01 + φ00 in [0, 2π); absent when a diagonal entry is
    /// too small to carry a phase.
    #[serde(rename = "conditional_phase_rad")]
    pub conditional_phase: Option<f64>,
    pub phi_c: f64,
    pub phi_t: f64,
    /// Fidelity with φ_c = φ_t = 0.
    pub raw_fidelity: f64,
    pub leakage: BTreeMap<String, f64>,
}

/// Maximizes the CZ fidelity over (φ_c, φ_t): 64×64 grid, then a simplex
/// polish to ~1e-10 in the phases.
pub fn cz_error(block: &Block) -> GateReport {
    const GRID: usize = 64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for a in 0..GRID {
        for b in 0..GRID {
            let (pc, pt) = (TAU * a as f64 / GRID as f64, TAU * b as f64 / GRID as f64);
            let f = fidelity_at(block, pc, pt);
            if f > best.0 {
                best = (f, pc, pt);
            }
        }
    }
    let mut opts = NelderMeadOptions::new(2000, vec![TAU / GRID as f64; 2]);
    opts.x_tol = 1e-11;
    opts.f_tol = 1e-17;
    let out = nelder_mead::minimize(|x| -fidelity_at(block, x[0], x[1]), &[best.1, best.2], &opts);
    let (fidelity, phi_c, phi_t) = if -out.f > best.0 { (-out.f, out.x[0], out.x[1]) } else { best };
    let fidelity = fidelity.clamp(0.0, 1.0);
    let leakage = INPUT_LABELS
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let kept: f64 = (0..4).map(|i| block[(i, j)].norm_sqr()).sum();
            (l.to_string(), (1.0 - kept).clamp(0.0, 1.0))
        })
        .collect();
    GateReport {
        fidelity,
        error: 1.0 - fidelity,
        conditional_phase: conditional_phase(block).ok(),
        phi_c: phi_c.rem_euclid(TAU),
        phi_t: phi_t.rem_euclid(TAU),
        raw_fidelity: fidelity_at(block, 0.0, 0.0),
        leakage,
    }
}

/// `arg(b₁₁ b₀₀) − arg(b₀₁) − arg(b₁₀)` reduced to [0, 2π).
pub fn conditional_phase(block: &Block) -> Result<f64> {
    let d: Vec<C64> = (0..4).map(|i| block[(i, i)]).collect();
    if let Some(i) = d.iter().position(|z| z.norm() <= 0.5) {
        return Err(Error::UndefinedPhase(format!(
            "|⟨{0}|U|{0}⟩| = {1:.3e} is too small",
            INPUT_LABELS[i],
            d[i].norm()
        )));
    }
    Ok(((d[3] * d[0]).arg() - d[1].arg() - d[2].arg()).rem_euclid(TAU))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseJump {
    pub time: f64,
    pub jump_size: f64,
}

/// Interior population dips below `epsilon` and the phase change across
/// each, wrapped to (−π, π]. The reported time is the population minimum.
pub fn detect_phase_jumps(traj: &TrajectoryRecord, state: usize, epsilon: f64) -> Vec<PhaseJump> {
    let pops = traj.populations(state);
    let phases = &traj.phases[state];
    let n = pops.len();
    let mut jumps = Vec::new();
    let mut k = 0;
    while k < n {
        if pops[k] >= epsilon {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && pops[k] < epsilon {
            k += 1;
        }
        if start == 0 || k == n {
            continue;
        }
        let min = (start..k).min_by(|&a, &b| pops[a].total_cmp(&pops[b])).unwrap();
        jumps.push(PhaseJump {
            time: traj.times[min],
            jump_size: wrap_pi(phases[k] - phases[start - 1]),
        });
    }
    jumps
}

pub fn detect_phase_jumps_by_label(traj: &TrajectoryRecord, label: &str) -> Result<Vec<PhaseJump>> {
    let i = traj
        .index_of(label)
        .ok_or_else(|| Error::invalid(format!("trajectory has no state '{label}'")))?;
    Ok(detect_phase_jumps(traj, i, JUMP_EPSILON))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDecomposition {
    /// Unwrapped phase gained by the reference amplitude over the gate.
    pub total_phase: f64,
    /// `−∫⟨ψ|H|ψ⟩dt`.
    pub dynamical_phase: f64,
    pub geometric_phase: f64,
    pub total_phase_mod: f64,
    pub dynamical_phase_mod: f64,
    pub geometric_phase_mod: f64,
    /// `|dynamical| / |total|`.
    pub dynamical_fraction: f64,
}

/// Splits the accumulated phase of the trajectory's reference amplitude
/// into dynamical and geometric parts (trapezoidal quadrature on the grid).
pub fn dynamical_phase(traj: &TrajectoryRecord, model: &Model, pulses: &PulseSet) -> Result<PhaseDecomposition> {
    let last = traj.times.len() - 1;
    if (traj.times[last] - model.config.duration).abs() > 1e-9 * model.config.duration {
        return Err(Error::invalid("trajectory grid does not span the configured duration"));
    }
    if traj.labels != model.space.labels() {
        return Err(Error::invalid("trajectory basis does not match the model"));
    }
    let reference = traj.reference;
    let final_pop = traj.amplitudes[last][reference].norm_sqr();
    if final_pop < 0.5 {
        return Err(Error::DecompositionUndefined(format!(
            "final population of {} is {final_pop:.3e} < 0.5",
            traj.labels[reference]
        )));
    }
    let energies = traj
        .times
        .iter()
        .zip(&traj.amplitudes)
        .map(|(&t, psi)| {
            let h = model.assemble(&model.role_values(pulses, t)?);
            let psi = nalgebra::DVector::from_column_slice(psi);
            Ok(psi.dotc(&(h * &psi)).re)
        })
        .collect::<Result<Vec<f64>>>()?;
    let integral: f64 = traj
        .times
        .windows(2)
        .zip(energies.windows(2))
        .map(|(t, e)| 0.5 * (t[1] - t[0]) * (e[0] + e[1]))
        .sum();
    let dynamical = -integral;
    let total = traj.phases[reference][last] - traj.phases[reference][0];
    let geometric = total - dynamical;
    Ok(PhaseDecomposition {
        total_phase: total,
        dynamical_phase: dynamical,
        geometric_phase: geometric,
        total_phase_mod: total.rem_euclid(TAU),
        dynamical_phase_mod: dynamical.rem_euclid(TAU),
        geometric_phase_mod: geometric.rem_euclid(TAU),
        dynamical_fraction: if total == 0.0 { f64::NAN } else { dynamical.abs() / total.abs() },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTrace {
    pub times: Vec<f64>,
    /// Basis labels of each sector.
    pub sector_labels: Vec<Vec<String>>,
    /// `eigenvalues[s][k]`: ascending eigenvalues (rad/μs) of sector `s` at `times[k]`.
    pub eigenvalues: Vec<Vec<Vec<f64>>>,
    /// Sector holding the |11⟩ input.
    pub doubly_driven_sector: usize,
    /// Time-averaged smallest nonzero adjacent gap in that sector, rad/μs.
    pub mean_gap: f64,
    /// `mean_gap · T`.
    pub fastness: f64,
}

/// Instantaneous eigenvalues of H(t) per sector on `n_samples` evenly
/// spaced times spanning `[0, T]`.
pub fn adiabatic_spectrum(config: &GateConfiguration, pulses: &PulseSet, n_samples: usize) -> Result<SpectrumTrace> {
    if n_samples < 2 {
        return Err(Error::invalid("need at least 2 spectrum samples"));
    }
    let model = Model::new(config)?;
    config.check_wiring(pulses)?;
    let space = &model.space;
    let times: Vec<f64> =
        (0..n_samples).map(|k| config.duration * k as f64 / (n_samples - 1) as f64).collect();
    let mut eigenvalues = vec![Vec::with_capacity(n_samples); space.sectors.len()];
    for &t in &times {
        let h = model.assemble(&model.role_values(pulses, t)?);
        for (s, idx) in space.sectors.iter().enumerate() {
            let block = DMatrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])].re);
            let mut ev: Vec<f64> = block.symmetric_eigen().eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            eigenvalues[s].push(ev);
        }
    }
    let doubly_driven_sector = space.sector_of(space.computational[3]);
    let gaps: Vec<f64> = eigenvalues[doubly_driven_sector]
        .iter()
        .map(|ev| {
            let scale = ev.iter().fold(1.0f64, |m, e| m.max(e.abs()));
            ev.windows(2)
                .map(|w| w[1] - w[0])
                .filter(|&g| g > 1e-9 * scale)
                .fold(f64::INFINITY, f64::min)
        })
        .map(|g| if g.is_finite() { g } else { 0.0 })
        .collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    Ok(SpectrumTrace {
        times,
        sector_labels: space
            .sectors
            .iter()
            .map(|idx| idx.iter().map(|&i| space.states[i].label()).collect())
            .collect(),
        eigenvalues,
        doubly_driven_sector,
        mean_gap,
        fastness: mean_gap * config.duration,
    })
}

impl SpectrumTrace {
    /// One row per sample, eigenvalues in 2π×MHz; the last two columns
    /// repeat Ē (2π×MHz) and the fastness.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t_us".to_string()];
        for (s, labels) in self.sector_labels.iter().enumerate() {
            for k in 0..labels.len() {
                header.push(format!("s{s}[{}]_ev{k}_2pi_MHz", labels.join(" ")));
            }
        }
        header.push("mean_gap_2pi_MHz".into());
        header.push("fastness".into());
        let err = |e: csv::Error| Error::parse("csv", e.to_string());
        w.write_record(&header).map_err(err)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for sector in &self.eigenvalues {
                row.extend(sector[k].iter().map(|e| (e / TAU).to_string()));
            }
            row.push((self.mean_gap / TAU).to_string());
            row.push(self.fastness.to_string());
            w.write_record(&row).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// True if some sector eigenvalue stays at zero over every sample.
    pub fn has_constant_zero_trace(&self, sector: usize, tol: f64) -> bool {
        let n = self.eigenvalues[sector][0].len();
        (0..n).any(|j| self.eigenvalues[sector].iter().all(|ev| ev[j].abs() <= tol))
    }
}

/// π, for readability at call sites checking a CZ.
pub const CZ_PHASE: f64 = PI;
