//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every verdict is printed in order.
//! The process exits non-zero if any hard-gated criterion fails; criterion
//! 10 is a reported diagnostic and never fails the run.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};

use armd::cli;
use armd::dynamics::{propagate, propagate_model, trajectory, trajectory_from, DEFAULT_STEPS, JUMP_EPSILON};
use armd::gates::{
    computational_block, cz_error, cz_target, detect_phase_jumps, dynamical_phase, fidelity_at, Block,
    INPUT_LABELS,
};
use armd::model::{hamiltonian_at, Blockade, GateConfiguration, Mhz, Model, Role, Scheme};
use armd::optimize::{refine, search, OptimizationProblem, SearchSettings};
use armd::pulse::{preset, PulseSet, Waveform, PRESET_NAMES, REFERENCE_TAU};
use armd::C64;

/// Detuning used wherever the published value is unavailable (fig3, fig4).
const DELTA_2PI_MHZ: f64 = 1000.0;
const ERROR_TARGET: f64 = 1e-4;
const PHASE_TOLERANCE: f64 = 0.01;
/// Reproduction errors in [ERROR_TARGET, GUARD_CEILING) trigger the refine guard.
const GUARD_CEILING: f64 = 1e-3;
const GUARD_DRIFT: f64 = 0.01;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

type Outcome = Result<Verdict, String>;

/// (name, hard-gated, check)
type Criterion = (&'static str, bool, fn() -> Outcome);

fn config_with_delta(name: &str) -> (GateConfiguration, PulseSet) {
    let (mut config, pulses) = preset(name).expect("preset exists");
    if config.scheme == Scheme::TwoPhotonTwoQubit {
        config.delta = Some(Mhz(DELTA_2PI_MHZ));
    }
    (config, pulses)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------------------
// 1. Unitarity and oracle equivalence

/// `exp(−iH dt)` applied to `u` by a fourth-order Taylor step, using only the
/// nonzero entries of the full-space Hamiltonian.
fn taylor4_step(entries: &[(usize, usize, C64)], u: &mut [C64], n: usize, dt: f64) {
    let apply = |x: &[C64], scale: C64| {
        let mut y = vec![C64::new(0.0, 0.0); n * n];
        for &(i, j, h) in entries {
            let f = h * scale;
            for col in 0..n {
                y[col * n + i] += f * x[col * n + j];
            }
        }
        y
    };
    let k = C64::new(0.0, -dt);
    let mut term = u.to_vec();
    for order in 1..=4 {
        term = apply(&term, k / order as f64);
        for (a, b) in u.iter_mut().zip(&term) {
            *a += b;
        }
    }
}

/// Full-space propagator from the left-endpoint Hamiltonian on `substeps`
/// uniform steps. Independent of the sector machinery.
fn brute_force_oracle(config: &GateConfiguration, pulses: &PulseSet, substeps: usize) -> DMatrix<C64> {
    let n = Model::new(config).unwrap().space.dim();
    let dt = config.duration / substeps as f64;
    let mut u = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        u[i * n + i] = C64::new(1.0, 0.0);
    }
    for k in 0..substeps {
        let h = hamiltonian_at(config, pulses, k as f64 * dt).unwrap().into_matrix();
        let entries: Vec<(usize, usize, C64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| h[(i, j)] != C64::new(0.0, 0.0))
            .map(|(i, j)| (i, j, h[(i, j)]))
            .collect();
        taylor4_step(&entries, &mut u, n, dt);
    }
    DMatrix::from_column_slice(n, n, &u)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_defect: f64 = 0.0;
    for name in PRESET_NAMES {
        let (config, pulses) = config_with_delta(name);
        let u = propagate(&config, &pulses, DEFAULT_STEPS).map_err(|e| e.to_string())?;
        worst_defect = worst_defect.max(u.unitarity_defect());
    }
    let (config, pulses) = preset("fig2").unwrap();
    let u = propagate(&config, &pulses, DEFAULT_STEPS).map_err(|e| e.to_string())?;
    let oracle = brute_force_oracle(&config, &pulses, 1_000_000);
    let deviation = (&u.matrix - &oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let elapsed = secs(start.elapsed());
    Ok(Verdict::new(
        worst_defect < 1e-10 && deviation < 1e-6 && elapsed < 10.0,
        format!("max ‖U†U−I‖ = {worst_defect:.2e}, oracle deviation = {deviation:.2e}, {elapsed:.2} s"),
    ))
}

// ---------------------------------------------------------------------------
// 2, 3. Reproduction with refine guard

fn reproduction(figure: &str, budget_s: f64) -> Outcome {
    let dir = std::env::temp_dir().join(format!("armd-acceptance-{figure}-{}", std::process::id()));
    let start = Instant::now();
    let row = cli::reproduce(figure, &dir, None, DEFAULT_STEPS).map_err(|e| e.to_string())?;
    let elapsed = secs(start.elapsed());
    let _ = std::fs::remove_dir_all(&dir);
    let phase = row.conditional_phase_rad;
    let phase_ok = phase.is_some_and(|p| (p - PI).abs() < PHASE_TOLERANCE);
    let mut detail = format!(
        "error = {:.3e}, conditional phase = {}, {elapsed:.2} s",
        row.error,
        phase.map_or("undefined".into(), |p| format!("{p:.4}")),
    );
    let error_ok = if row.error < ERROR_TARGET {
        true
    } else if row.error < GUARD_CEILING {
        let (ok, note) = refine_guard(figure)?;
        detail.push_str(&format!("; refine guard: {note}"));
        ok
    } else {
        detail.push_str(&format!("; outside the refine-guard window [{ERROR_TARGET:e}, {GUARD_CEILING:e})"));
        false
    };
    Ok(Verdict::new(error_ok && phase_ok && elapsed < budget_s, detail))
}

/// Polishes the published coefficients and checks that < 1e-4 is reached
/// with every coefficient moving by less than 1 %.
fn refine_guard(figure: &str) -> Result<(bool, String), String> {
    let (config, pulses) = preset(figure).unwrap();
    let roles: Vec<Role> = pulses.iter().filter(|(_, w)| w.coefficients().is_some()).map(|(r, _)| r).collect();
    let mut problem = OptimizationProblem::new(config, pulses.clone(), roles, 5, REFERENCE_TAU);
    problem.lambda = 0.0;
    let start = problem.encode(&pulses).map_err(|e| e.to_string())?;
    let settings = SearchSettings { max_evals: 4000, refine_step: 0.05, ..Default::default() };
    let r = refine(&start, &problem, &settings).map_err(|e| e.to_string())?;
    let drift = start
        .iter()
        .zip(&r.best)
        .map(|(a, b)| if *a == 0.0 { (b - a).abs() } else { ((b - a) / a).abs() })
        .fold(0.0, f64::max);
    Ok((r.report.error < ERROR_TARGET && drift < GUARD_DRIFT, format!("refined error {:.3e}, max drift {:.3}%", r.report.error, 100.0 * drift)))
}

// ---------------------------------------------------------------------------
// 4. Phase jumps

fn criterion_4() -> Outcome {
    let (config, pulses) = preset("fig2").unwrap();
    let mut best: Option<(String, f64, f64)> = None;
    for input in INPUT_LABELS {
        let tr = trajectory(&config, &pulses, input, DEFAULT_STEPS).map_err(|e| e.to_string())?;
        for j in detect_phase_jumps(&tr, tr.reference, JUMP_EPSILON) {
            let off = (j.jump_size.abs() - PI).abs();
            if best.as_ref().is_none_or(|b| off < (b.2.abs() - PI).abs()) {
                best = Some((input.to_string(), j.time, j.jump_size));
            }
        }
    }
    Ok(match best {
        Some((input, t, size)) => Verdict::new(
            (size.abs() - PI).abs() < 0.1,
            format!("closest jump on |{input}⟩ at t = {t:.4} μs, size {size:.4} rad"),
        ),
        None => Verdict::new(false, "no phase jumps detected"),
    })
}

// ---------------------------------------------------------------------------
// 5. Boundary property

fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for name in PRESET_NAMES {
        let (_, pulses) = preset(name).unwrap();
        for (role, w) in pulses.iter() {
            let Some(c) = w.coefficients() else { continue };
            let residual = w.boundary_residual().map_err(|e| e.to_string())?;
            let ratio = residual / c[0];
            worst = worst.max(ratio);
            pass &= ratio < 1e-3;
            // fig3/fig4 are exact to the printed two decimals
            if matches!(name, "fig3" | "fig4") && residual >= 0.005 {
                println!("    {name}:{role} residual {residual} is not zero to printed precision");
                pass = false;
            }
        }
    }
    Ok(Verdict::new(pass, format!("max residual/a0 = {worst:.2e}")))
}

// ---------------------------------------------------------------------------
// 6, 7. Synthesis

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

fn criterion_6() -> Outcome {
    let (config, pulses) = preset("fig2").unwrap();
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in [1u64, 2, 3] {
        let mut problem =
            OptimizationProblem::new(config.clone(), pulses.zeroed(), vec![Role::OmegaC, Role::OmegaT], 5, REFERENCE_TAU);
        problem.enforce_zero_endpoints = true;
        let settings = SearchSettings { seed, n_restarts: 10, max_evals: 20_000, jobs: workers(), ..Default::default() };
        let r = search(&problem, &settings).map_err(|e| e.to_string())?;
        pass &= r.report.error < ERROR_TARGET;
        lines.push(format!("seed {seed}: {:.2e} ({} restarts, {} evals)", r.report.error, r.restarts_used, r.evaluations));
    }
    let elapsed = secs(start.elapsed());
    Ok(Verdict::new(
        pass && elapsed < 900.0,
        format!("{}; {elapsed:.1} s with {} workers", lines.join(", "), workers()),
    ))
}

fn criterion_7() -> Outcome {
    let (config, pulses) = preset("fig3").unwrap();
    let config = config.with_delta(Mhz(DELTA_2PI_MHZ));
    let mut problem =
        OptimizationProblem::new(config, pulses.zeroed(), vec![Role::OmegaCp, Role::OmegaTp], 5, REFERENCE_TAU);
    // Stokes fields stay at the published constants; probes are searched.
    problem.base_pulses.insert(Role::OmegaCs, pulses.get(Role::OmegaCs).unwrap().clone());
    problem.base_pulses.insert(Role::OmegaTs, pulses.get(Role::OmegaTs).unwrap().clone());
    problem.enforce_zero_endpoints = true;
    let settings = SearchSettings { seed: 7, jobs: workers(), ..Default::default() };
    let start = Instant::now();
    let r = search(&problem, &settings).map_err(|e| e.to_string())?;
    let elapsed = secs(start.elapsed());

    let dir = std::env::temp_dir().join(format!("armd-acceptance-fig3-{}", std::process::id()));
    let reproduced = cli::reproduce("fig3", &dir, Some(DELTA_2PI_MHZ), DEFAULT_STEPS);
    let _ = std::fs::remove_dir_all(&dir);
    let fig3_note = match &reproduced {
        Ok(row) => format!("reproduce fig3 --delta {DELTA_2PI_MHZ} reports error {:.3e} (no claim)", row.error),
        Err(e) => format!("reproduce fig3 failed: {e}"),
    };
    Ok(Verdict::new(
        r.report.error < ERROR_TARGET && reproduced.is_ok(),
        format!(
            "Δ = 2π×{DELTA_2PI_MHZ} MHz: synthesized error {:.2e} ({} evals, {elapsed:.1} s); {fig3_note}",
            r.report.error, r.evaluations
        ),
    ))
}

// ---------------------------------------------------------------------------
// 8. Fidelity invariants

fn diag(d: [C64; 4]) -> Block {
    Block::from_diagonal(&nalgebra::Vector4::from(d))
}

fn dressing(a: f64, b: f64) -> Block {
    diag([C64::new(1.0, 0.0), C64::from_polar(1.0, a), C64::from_polar(1.0, b), C64::from_polar(1.0, a + b)])
}

/// Brute-force maximum of F over a `grid`×`grid` lattice of (φ_c, φ_t).
fn phase_scan_oracle(block: &Block, grid: usize) -> f64 {
    let step = TAU / grid as f64;
    (0..grid)
        .flat_map(|i| (0..grid).map(move |j| (i as f64 * step, j as f64 * step)))
        .map(|(pc, pt)| fidelity_at(block, pc, pt))
        .fold(0.0, f64::max)
}

fn criterion_8() -> Outcome {
    let (config, pulses) = preset("fig2").unwrap();
    let u = propagate(&config, &pulses, DEFAULT_STEPS).map_err(|e| e.to_string())?;
    let fig2 = computational_block(&u, &Model::new(&config).unwrap().space);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let swap = Block::from_fn(|i, j| {
        let p = [0, 2, 1, 3];
        if p[i] == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    let mut worst_dressing: f64 = 0.0;
    let mut worst_swap: f64 = 0.0;
    let mut worst_cz: f64 = 0.0;
    for _ in 0..50 {
        // a leaky, dephased block built from the fig2 gate
        let base = dressing(rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU))
            * fig2
            * diag([C64::new(1.0, 0.0), C64::new(0.9, 0.1), C64::new(1.0, 0.0), C64::new(0.7, -0.3)]);
        let f0 = cz_error(&base).fidelity;
        let dressed = dressing(rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU))
            * base
            * dressing(rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
        worst_dressing = worst_dressing.max((cz_error(&dressed).fidelity - f0).abs());
        worst_swap = worst_swap.max((cz_error(&(swap * base * swap)).fidelity - f0).abs());
        let target = cz_target(rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
        worst_cz = worst_cz.max((1.0 - cz_error(&target).fidelity).abs());
    }
    let lossy = diag([C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let oracle = phase_scan_oracle(&lossy, 720);
    let lossy_f = cz_error(&lossy).fidelity;
    Ok(Verdict::new(
        worst_dressing < 1e-9 && worst_swap < 1e-9 && worst_cz < 1e-9 && (oracle - 0.6).abs() < 1e-12 && (lossy_f - 0.6).abs() < 1e-9,
        format!(
            "dressing ΔF {worst_dressing:.1e}, swap ΔF {worst_swap:.1e}, 1−F(CZ) {worst_cz:.1e}, F(diag(1,1,1,0)) = {lossy_f:.12} (oracle {oracle:.12})"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 9. Analytic micro-cases

fn one_photon(duration: f64, omega_c: f64, omega_t: f64) -> (GateConfiguration, PulseSet) {
    (
        GateConfiguration::new(Scheme::OnePhotonTwoQubit, Blockade::Infinite, duration),
        PulseSet::from_pairs([
            (Role::OmegaC, Waveform::constant(Mhz(omega_c))),
            (Role::OmegaT, Waveform::constant(Mhz(omega_t))),
        ]),
    )
}

fn criterion_9() -> Outcome {
    let err = |e: armd::Error| e.to_string();
    // π pulse on the target: Ω = 2π×10 MHz for 0.05 μs
    let (config, pulses) = one_photon(0.05, 0.0, 10.0);
    let model = Model::new(&config).map_err(err)?;
    let u = propagate_model(&model, &pulses, DEFAULT_STEPS).map_err(err)?;
    let (i01, i0r) = (model.space.index_of("01").unwrap(), model.space.index_of("0r").unwrap());
    let transfer_error = (1.0 - u.matrix[(i0r, i01)].norm_sqr()).abs();

    // two-body block {11, 1r, r1}
    let (config, pulses) = one_photon(0.2, 10.0, 10.0);
    let model = Model::new(&config).map_err(err)?;
    let h = model.hamiltonian_at(&pulses, 0.1).map_err(err)?.into_matrix();
    let idx: Vec<usize> = ["11", "1r", "r1"].iter().map(|l| model.space.index_of(l).unwrap()).collect();
    let block = Matrix3::from_fn(|i, j| h[(idx[i], idx[j])].re);
    let mut eig: Vec<f64> = block.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let half = 0.5 * (Mhz(10.0).angular().powi(2) * 2.0).sqrt();
    let eig_error = [(eig[0] + half).abs(), eig[1].abs(), (eig[2] - half).abs()].into_iter().fold(0.0, f64::max);

    // eigenstate of that block: dynamical phase −E·T
    let full = h.map(|z| z.re);
    let mut sub = DMatrix::<f64>::zeros(3, 3);
    for a in 0..3 {
        for b in 0..3 {
            sub[(a, b)] = full[(idx[a], idx[b])];
        }
    }
    let se = sub.symmetric_eigen();
    let k = (0..3).max_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b])).unwrap();
    let energy = se.eigenvalues[k];
    let mut psi = DVector::<C64>::zeros(model.space.dim());
    for a in 0..3 {
        psi[idx[a]] = C64::new(se.eigenvectors[(a, k)], 0.0);
    }
    let reference = (0..3).max_by(|&a, &b| se.eigenvectors[(a, k)].abs().total_cmp(&se.eigenvectors[(b, k)].abs())).unwrap();
    let tr = trajectory_from(&model, &pulses, psi, idx[reference], 2000).map_err(err)?;
    let d = dynamical_phase(&tr, &model, &pulses).map_err(err)?;
    let phase_error = (d.dynamical_phase + energy * config.duration).abs();

    Ok(Verdict::new(
        transfer_error < 1e-10 && eig_error < 1e-10 && phase_error < 1e-8,
        format!("π-pulse error {transfer_error:.1e}, eigenvalue error {eig_error:.1e}, −E·T error {phase_error:.1e}"),
    ))
}

// ---------------------------------------------------------------------------
// 10. Phase origin (reported only)

fn criterion_10() -> Outcome {
    let (config, pulses) = preset("fig2").unwrap();
    let model = Model::new(&config).map_err(|e| e.to_string())?;
    let mut raw = Vec::new();
    let mut fraction = f64::NAN;
    for input in INPUT_LABELS {
        let tr = trajectory(&config, &pulses, input, DEFAULT_STEPS).map_err(|e| e.to_string())?;
        match dynamical_phase(&tr, &model, &pulses) {
            Ok(d) => {
                if input == "11" {
                    fraction = d.dynamical_fraction;
                }
                raw.push(format!(
                    "{input}: total {:.4}, dynamical {:.4}, geometric {:.4}",
                    d.total_phase, d.dynamical_phase, d.geometric_phase
                ));
            }
            Err(e) => raw.push(format!("{input}: {e}")),
        }
    }
    Ok(Verdict::new(fraction > 0.5, format!("|11⟩ dynamical fraction {fraction:.4} [{}]", raw.join("; "))))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 unitarity & oracle equivalence", true, criterion_1),
        ("2 fig2 reproduction", true, || reproduction("fig2", 2.0)),
        ("3 fig5 BAM reproduction", true, || reproduction("fig5", 5.0)),
        ("4 phase-jump detection", true, criterion_4),
        ("5 boundary property", true, criterion_5),
        ("6 one-photon synthesis", true, criterion_6),
        ("7 two-photon synthesis", true, criterion_7),
        ("8 fidelity invariants", true, criterion_8),
        ("9 analytic micro-cases", true, criterion_9),
        ("10 phase-origin diagnostic (reported)", false, criterion_10),
    ];
    let mut failed = Vec::new();
    for (name, gated, check) in criteria {
        let verdict = check().unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        println!("{} criterion {name}: {}", if verdict.pass { "PASS" } else { "FAIL" }, verdict.detail);
        if gated && !verdict.pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        println!("{} gated criteria failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
