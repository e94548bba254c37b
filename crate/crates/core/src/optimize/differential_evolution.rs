//! Differential evolution, rand/1/bin, inside a box.

use rand::Rng;

#[derive(Clone, Debug)]
pub struct DeOptions {
    /// Population size; 0 selects `15 · dim`.
    pub population: usize,
    pub crossover: f64,
    pub weight: f64,
    pub max_evals: usize,
    pub target: Option<f64>,
}

impl Default for DeOptions {
    fn default() -> Self {
        DeOptions { population: 0, crossover: 0.9, weight: 0.7, max_evals: 10_000, target: None }
    }
}

#[derive(Clone, Debug)]
pub struct DeOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub history: Vec<(usize, f64)>,
}

/// Minimizes `f` over the box `lower ≤ x ≤ upper`. Trial coordinates that
/// leave the box are resampled uniformly between the base vector and the
/// violated bound. `seed_point`, when given, replaces the first member of
/// the initial population.
pub fn minimize<F, R>(
    mut f: F,
    lower: &[f64],
    upper: &[f64],
    seed_point: Option<&[f64]>,
    opts: &DeOptions,
    rng: &mut R,
) -> DeOutcome
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    let dim = lower.len();
    let np = if opts.population == 0 { 15 * dim } else { opts.population }.max(4);
    let budget = opts.max_evals.max(1);
    let mut evals = 0usize;
    let mut history = Vec::new();
    let mut best = (Vec::new(), f64::INFINITY);
    let mut eval = |x: &[f64], evals: &mut usize, best: &mut (Vec<f64>, f64), history: &mut Vec<(usize, f64)>| {
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        *evals += 1;
        if v < best.1 {
            *best = (x.to_vec(), v);
            history.push((*evals, v));
        }
        v
    };
    let hit = |v: f64| opts.target.is_some_and(|t| v < t);

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(np);
    let mut fit: Vec<f64> = Vec::with_capacity(np);
    for i in 0..np {
        if evals >= budget || hit(best.1) {
            break;
        }
        let x: Vec<f64> = match (i, seed_point) {
            (0, Some(p)) => p.to_vec(),
            _ => (0..dim).map(|j| rng.gen_range(lower[j]..=upper[j])).collect(),
        };
        let v = eval(&x, &mut evals, &mut best, &mut history);
        pop.push(x);
        fit.push(v);
    }

    if pop.len() == np {
        'gen: loop {
            for i in 0..np {
                if evals >= budget || hit(best.1) {
                    break 'gen;
                }
                let pick = |rng: &mut R, not: &[usize]| loop {
                    let k = rng.gen_range(0..np);
                    if !not.contains(&k) {
                        break k;
                    }
                };
                let a = pick(rng, &[i]);
                let b = pick(rng, &[i, a]);
                let c = pick(rng, &[i, a, b]);
                let forced = rng.gen_range(0..dim);
                let trial: Vec<f64> = (0..dim)
                    .map(|j| {
                        if j == forced || rng.gen::<f64>() < opts.crossover {
                            let v = pop[a][j] + opts.weight * (pop[b][j] - pop[c][j]);
                            if v < lower[j] {
                                rng.gen_range(lower[j]..=pop[a][j].max(lower[j]))
                            } else if v > upper[j] {
                                rng.gen_range(pop[a][j].min(upper[j])..=upper[j])
                            } else {
                                v
                            }
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect();
                let v = eval(&trial, &mut evals, &mut best, &mut history);
                if v <= fit[i] {
                    pop[i] = trial;
                    fit[i] = v;
                }
            }
        }
    }
    DeOutcome { x: best.0, f: best.1, evals, history }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn minimizes_shifted_sphere() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (v - i as f64 * 0.5).powi(2)).sum::<f64>();
        let out = minimize(f, &[-5.0; 4], &[5.0; 4], None, &DeOptions { max_evals: 20_000, ..Default::default() }, &mut rng);
        assert!(out.f < 1e-8, "{}", out.f);
        assert!(out.evals <= 20_000);
    }

    #[test]
    fn stays_in_box_and_is_deterministic() {
        let run = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            let mut seen_outside = false;
            let out = minimize(
                |x: &[f64]| {
                    seen_outside |= x.iter().any(|v| !(-1.0..=2.0).contains(v));
                    x.iter().map(|v| (v + 3.0).powi(2)).sum()
                },
                &[-1.0; 3],
                &[2.0; 3],
                None,
                &DeOptions { max_evals: 3000, ..Default::default() },
                &mut rng,
            );
            assert!(!seen_outside);
            out
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert!(a.x.iter().all(|v| (v + 1.0).abs() < 1e-6));
    }
}
