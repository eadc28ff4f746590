//! Nelder-Mead simplex descent.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and the simplex diameter below this.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 2000,
            f_tol: 1e-9,
            x_tol: 1e-7,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
    /// `(evaluation index, point, value)` each time the best value improved.
    pub improvements: Vec<(usize, Vec<f64>, f64)>,
}

/// Minimizes `f` from `x0` with the standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let dim = x0.len();
    let mut evals = 0;
    let mut best = f64::INFINITY;
    let mut improvements = Vec::new();
    let mut eval = |x: &[f64], evals: &mut usize, best: &mut f64, imp: &mut Vec<(usize, Vec<f64>, f64)>| {
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        *evals += 1;
        if v < *best {
            *best = v;
            imp.push((*evals, x.to_vec(), v));
        }
        v
    };

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex
        .iter()
        .map(|x| eval(x, &mut evals, &mut best, &mut improvements))
        .collect();

    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        // a flat simplex counts as converged whatever its size
        if dim == 0 || spread <= opts.f_tol && diameter <= opts.x_tol || spread <= opts.f_tol * 1e-3 {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|x| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals, &mut best, &mut improvements);
        if fr < values[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals, &mut best, &mut improvements);
            if fe < fr {
                simplex[dim] = xe;
                values[dim] = fe;
            } else {
                simplex[dim] = xr;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = xr;
            values[dim] = fr;
            continue;
        }
        let xc = if fr < values[dim] { along(0.5) } else { along(-0.5) };
        let fc = eval(&xc, &mut evals, &mut best, &mut improvements);
        if fc < values[dim].min(fr) {
            simplex[dim] = xc;
            values[dim] = fc;
            continue;
        }
        for i in 1..=dim {
            let x: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, xi)| b + 0.5 * (xi - b))
                .collect();
            values[i] = eval(&x, &mut evals, &mut best, &mut improvements);
            simplex[i] = x;
        }
    }

    let ib = (0..=dim)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    NelderMeadResult {
        x: simplex[ib].clone(),
        value: values[ib],
        evals,
        converged,
        improvements,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(
            f,
            &[-1.2, 1.0],
            &NelderMeadOptions {
                max_evals: 5000,
                f_tol: 1e-14,
                x_tol: 1e-10,
                initial_step: 0.5,
            },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn quadratic_bowl_and_budget() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 0.3).powi(2)).sum();
        let r = nelder_mead(f, &[0.0; 4], &NelderMeadOptions::default());
        assert!(r.value < 1e-8);
        let short = nelder_mead(
            f,
            &[0.0; 4],
            &NelderMeadOptions {
                max_evals: 10,
                ..Default::default()
            },
        );
        assert!(!short.converged);
        assert!(short.evals <= 12);
    }

    #[test]
    fn improvements_are_decreasing() {
        let f = |x: &[f64]| (x[0] - 2.0).powi(2) + x[1].abs();
        let r = nelder_mead(f, &[0.0, 1.0], &NelderMeadOptions::default());
        assert!(r.improvements.windows(2).all(|w| w[1].2 < w[0].2));
        assert_eq!(r.improvements.last().unwrap().2, r.value);
    }
}
