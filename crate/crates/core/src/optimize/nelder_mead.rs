//! Bounded-budget Nelder–Mead simplex minimizer with dimension-adaptive
//! coefficients.

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Per-coordinate offset of the initial simplex vertices.
    pub initial_step: Vec<f64>,
    /// Converged when the simplex spans less than this in every coordinate...
    pub x_tol: f64,
    /// ...and the vertex values spread less than this.
    pub f_tol: f64,
    /// Stop as soon as the best value drops below this.
    pub target: Option<f64>,
    /// Rebuild the simplex around the best vertex after convergence while
    /// budget remains.
    pub restart_on_convergence: bool,
}

impl NelderMeadOptions {
    pub fn new(max_evals: usize, initial_step: Vec<f64>) -> Self {
        NelderMeadOptions {
            max_evals,
            initial_step,
            x_tol: 1e-10,
            f_tol: 1e-14,
            target: None,
            restart_on_convergence: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// (evaluation number, new best value), recorded on every improvement.
    pub history: Vec<(usize, f64)>,
    pub converged: bool,
}

struct Counter<F> {
    f: F,
    evals: usize,
    best: f64,
    history: Vec<(usize, f64)>,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        self.evals += 1;
        if v < self.best {
            self.best = v;
            self.history.push((self.evals, v));
        }
        v
    }
}

/// Minimizes `f` from `x0`. The start point is the first evaluation and is
/// kept unless a strictly better vertex replaces it, so the returned value
/// never exceeds `f(x0)`. At least one evaluation is always performed.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadOutcome {
    let n = x0.len();
    let mut c = Counter { f, evals: 0, best: f64::INFINITY, history: Vec::new() };
    let f0 = c.eval(x0);
    let budget = opts.max_evals.max(1);
    let hit = |v: f64| opts.target.is_some_and(|t| v < t);
    if n == 0 || budget <= 1 || hit(f0) {
        return NelderMeadOutcome { x: x0.to_vec(), f: f0, evals: c.evals, history: c.history, converged: n == 0 };
    }

    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    let mut converged = false;

    'outer: loop {
        // (re)build vertices around simplex[0]
        let base = simplex[0].clone();
        simplex.clear();
        simplex.push(base.clone());
        for i in 0..n {
            if c.evals >= budget {
                break 'outer;
            }
            let mut x = base.0.clone();
            let step = opts.initial_step.get(i).copied().unwrap_or(1.0);
            x[i] += if step == 0.0 { 1e-3 } else { step };
            let v = c.eval(&x);
            simplex.push((x, v));
            if hit(v) {
                break 'outer;
            }
        }

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if hit(simplex[0].1) || c.evals >= budget {
                break 'outer;
            }
            let spread = simplex[n].1 - simplex[0].1;
            let width = (0..n)
                .map(|j| {
                    simplex.iter().map(|v| (v.0[j] - simplex[0].0[j]).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if (spread.abs() <= opts.f_tol && width <= opts.x_tol) || width == 0.0 {
                converged = true;
                if opts.restart_on_convergence && c.evals + n + 1 < budget {
                    continue 'outer;
                }
                break 'outer;
            }

            let centroid: Vec<f64> =
                (0..n).map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / nf).collect();
            let toward = |coef: f64| -> Vec<f64> {
                (0..n).map(|j| centroid[j] + coef * (simplex[n].0[j] - centroid[j])).collect()
            };

            let xr = toward(-alpha);
            let fr = c.eval(&xr);
            if fr < simplex[0].1 {
                if c.evals >= budget {
                    simplex[n] = (xr, fr);
                    continue;
                }
                let xe = toward(-alpha * gamma);
                let fe = c.eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            if c.evals >= budget {
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let x = toward(-alpha * rho);
                let v = c.eval(&x);
                (x, v)
            } else {
                let x = toward(rho);
                let v = c.eval(&x);
                (x, v)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            // shrink toward the best vertex
            let best = simplex[0].0.clone();
            for k in 1..=n {
                if c.evals >= budget {
                    break;
                }
                let x: Vec<f64> = (0..n).map(|j| best[j] + sigma * (simplex[k].0[j] - best[j])).collect();
                let v = c.eval(&x);
                simplex[k] = (x, v);
            }
        }
    }

    let best = simplex.iter().min_by(|a, b| a.1.total_cmp(&b.1)).cloned().unwrap_or((x0.to_vec(), f0));
    NelderMeadOutcome { x: best.0, f: best.1, evals: c.evals, history: c.history, converged }
}
