//! Derivative-free minimizers used by the model fitters.

/// Nelder–Mead settings.
#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Per-coordinate offsets for the initial simplex vertices.
    pub initial_step: Vec<f64>,
    /// Stop once the spread of vertex values falls below this (relative).
    pub ftol: f64,
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best objective value after each iteration, starting with the initial
    /// simplex.
    pub trace: Vec<f64>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` starting from `x0` with the standard Nelder–Mead moves.
///
/// Only improvements are accepted into the best vertex, so `trace` is
/// non-increasing.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    if n == 0 {
        let fx = eval(x0, &mut evaluations);
        return SimplexOutcome {
            x: Vec::new(),
            fx,
            iterations: 0,
            evaluations,
            trace: vec![fx],
        };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = opts.initial_step.get(i).copied().unwrap_or(0.1);
        v[i] += if step != 0.0 { step } else { 0.1 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evaluations)).collect();

    let mut order: Vec<usize> = (0..=n).collect();
    let sort = |order: &mut Vec<usize>, values: &[f64]| {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    };
    sort(&mut order, &values);

    let mut trace = vec![values[order[0]]];
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let best = values[order[0]];
        let worst = values[order[n]];
        if best.is_finite()
            && worst.is_finite()
            && (worst - best).abs() <= opts.ftol * (best.abs() + worst.abs() + 1e-300)
        {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &idx in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += x / n as f64;
            }
        }
        let worst_idx = order[n];
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst_idx])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(REFLECT);
        let f_reflected = eval(&reflected, &mut evaluations);
        let second_worst = values[order[n - 1]];

        if f_reflected < best {
            let expanded = along(EXPAND);
            let f_expanded = eval(&expanded, &mut evaluations);
            if f_expanded < f_reflected {
                simplex[worst_idx] = expanded;
                values[worst_idx] = f_expanded;
            } else {
                simplex[worst_idx] = reflected;
                values[worst_idx] = f_reflected;
            }
        } else if f_reflected < second_worst {
            simplex[worst_idx] = reflected;
            values[worst_idx] = f_reflected;
        } else {
            let (candidate, f_candidate) = if f_reflected < worst {
                let c = along(CONTRACT);
                let fc = eval(&c, &mut evaluations);
                (c, fc)
            } else {
                let c = along(-CONTRACT);
                let fc = eval(&c, &mut evaluations);
                (c, fc)
            };
            if f_candidate < worst.min(f_reflected) {
                simplex[worst_idx] = candidate;
                values[worst_idx] = f_candidate;
            } else {
                let best_vertex = simplex[order[0]].clone();
                for &idx in &order[1..] {
                    let shrunk: Vec<f64> = best_vertex
                        .iter()
                        .zip(&simplex[idx])
                        .map(|(b, x)| b + SHRINK * (x - b))
                        .collect();
                    values[idx] = eval(&shrunk, &mut evaluations);
                    simplex[idx] = shrunk;
                }
            }
        }

        sort(&mut order, &values);
        trace.push(values[order[0]]);
    }

    let best = order[0];
    SimplexOutcome {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        evaluations,
        trace,
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]` for `iterations` shrink steps.
///
/// Returns the best point evaluated, which is never worse than `seed` when
/// one is given (pass the bracket's known best).
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, iterations: usize, seed: Option<(f64, f64)>) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let mut best = seed.unwrap_or((f64::NAN, f64::INFINITY));
    let consider = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx < best.1 || best.0.is_nan() {
            *best = (x, fx);
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);
    for _ in 0..iterations {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            consider(d, fd, &mut best);
        }
    }
    best
}
