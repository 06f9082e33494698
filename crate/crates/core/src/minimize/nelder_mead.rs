use super::{MinimizeOptions, Minimizer, Minimum};

/// Reflection, expansion, contraction and shrink coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexCoefficients {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl SimplexCoefficients {
    pub const STANDARD: SimplexCoefficients = SimplexCoefficients {
        reflection: 1.0,
        expansion: 2.0,
        contraction: 0.5,
        shrink: 0.5,
    };

    /// Dimension-dependent coefficients of Gao and Han (2012), which avoid
    /// the premature simplex collapse of the standard choice in higher dimensions.
    pub fn adaptive(dim: usize) -> Self {
        let n = dim.max(2) as f64;
        Self {
            reflection: 1.0,
            expansion: 1.0 + 2.0 / n,
            contraction: 0.75 - 1.0 / (2.0 * n),
            shrink: 1.0 - 1.0 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Standard,
    Adaptive,
}

/// Nelder–Mead simplex search.
///
/// On convergence the simplex is rebuilt around the best vertex and the search
/// resumed; it stops once a rebuilt simplex fails to improve the best value by
/// more than the value tolerance, or the iteration budget runs out.
#[derive(Debug, Clone)]
pub struct NelderMead {
    variant: Variant,
    max_restarts: usize,
}

impl NelderMead {
    pub fn standard() -> Self {
        Self {
            variant: Variant::Standard,
            max_restarts: 3,
        }
    }

    pub fn adaptive() -> Self {
        Self {
            variant: Variant::Adaptive,
            max_restarts: 3,
        }
    }

    pub fn with_max_restarts(mut self, n: usize) -> Self {
        self.max_restarts = n;
        self
    }

    fn coefficients(&self, dim: usize) -> SimplexCoefficients {
        match self.variant {
            Variant::Standard => SimplexCoefficients::STANDARD,
            Variant::Adaptive => SimplexCoefficients::adaptive(dim),
        }
    }
}

struct Simplex<'a> {
    objective: &'a dyn Fn(&[f64]) -> f64,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    evaluations: usize,
}

impl<'a> Simplex<'a> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.objective)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn build(objective: &'a dyn Fn(&[f64]) -> f64, origin: &[f64], step: f64) -> Self {
        let mut s = Simplex {
            objective,
            points: Vec::with_capacity(origin.len() + 1),
            values: Vec::with_capacity(origin.len() + 1),
            evaluations: 0,
        };
        let v0 = s.eval(origin);
        s.points.push(origin.to_vec());
        s.values.push(v0);
        for i in 0..origin.len() {
            let mut p = origin.to_vec();
            p[i] += step;
            let v = s.eval(&p);
            s.points.push(p);
            s.values.push(v);
        }
        s.sort();
        s
    }

    /// Orders vertices best-first; stable so equal values keep insertion order.
    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.points = idx.iter().map(|&i| self.points[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn converged(&self, opts: &MinimizeOptions) -> bool {
        let best = &self.points[0];
        let x_spread = self.points[1..]
            .iter()
            .flat_map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let f_spread = self.values[1..]
            .iter()
            .map(|v| (v - self.values[0]).abs())
            .fold(0.0, f64::max);
        x_spread <= opts.x_tolerance && f_spread <= opts.f_tolerance
    }

    fn step(&mut self, c: &SimplexCoefficients) {
        let n = self.points.len() - 1;
        let dim = self.points[0].len();
        let mut centroid = vec![0.0; dim];
        for p in &self.points[..n] {
            for (acc, v) in centroid.iter_mut().zip(p) {
                *acc += v;
            }
        }
        centroid.iter_mut().for_each(|v| *v /= n as f64);

        let worst = self.points[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst).map(|(ci, wi)| ci + t * (ci - wi)).collect() };

        let reflected = along(c.reflection);
        let f_reflected = self.eval(&reflected);

        if f_reflected < self.values[0] {
            let expanded = along(c.reflection * c.expansion);
            let f_expanded = self.eval(&expanded);
            if f_expanded < f_reflected {
                self.replace_worst(expanded, f_expanded);
            } else {
                self.replace_worst(reflected, f_reflected);
            }
        } else if f_reflected < self.values[n - 1] {
            self.replace_worst(reflected, f_reflected);
        } else {
            let outside = f_reflected < self.values[n];
            let (trial, bound) = if outside {
                (along(c.reflection * c.contraction), f_reflected)
            } else {
                (along(-c.contraction), self.values[n])
            };
            let f_trial = self.eval(&trial);
            let accept = if outside { f_trial <= bound } else { f_trial < bound };
            if accept {
                self.replace_worst(trial, f_trial);
            } else {
                self.shrink(c.shrink);
            }
        }
        self.sort();
    }

    fn replace_worst(&mut self, x: Vec<f64>, v: f64) {
        let n = self.points.len() - 1;
        self.points[n] = x;
        self.values[n] = v;
    }

    fn shrink(&mut self, factor: f64) {
        let best = self.points[0].clone();
        for i in 1..self.points.len() {
            let p: Vec<f64> = self.points[i]
                .iter()
                .zip(&best)
                .map(|(x, b)| b + factor * (x - b))
                .collect();
            let v = self.eval(&p);
            self.points[i] = p;
            self.values[i] = v;
        }
    }
}

impl Minimizer for NelderMead {
    fn name(&self) -> &'static str {
        match self.variant {
            Variant::Standard => "nelder-mead",
            Variant::Adaptive => "nelder-mead-adaptive",
        }
    }

    fn minimize(&self, objective: &dyn Fn(&[f64]) -> f64, start: &[f64], options: &MinimizeOptions) -> Minimum {
        let coeffs = self.coefficients(start.len());
        let mut iterations = 0;
        let mut evaluations = 0;
        let mut origin = start.to_vec();
        let mut previous: Option<f64> = None;
        let mut restarts = 0;
        loop {
            let mut simplex = Simplex::build(objective, &origin, options.initial_step);
            let mut converged = false;
            while iterations < options.max_iterations {
                if simplex.converged(options) {
                    converged = true;
                    break;
                }
                simplex.step(&coeffs);
                iterations += 1;
            }
            converged = converged || simplex.converged(options);
            evaluations += simplex.evaluations;
            let value = simplex.values[0];
            let stalled = previous.is_some_and(|p| value >= p - options.f_tolerance);
            if !converged || stalled || restarts == self.max_restarts {
                return Minimum {
                    x: simplex.points.swap_remove(0),
                    value,
                    iterations,
                    evaluations,
                    converged: converged && value.is_finite(),
                };
            }
            previous = Some(value);
            origin = simplex.points.swap_remove(0);
            restarts += 1;
        }
    }
}
