//! Derivative-free minimizers for circuit parameters.
//!
//! [`cobyla_minimize`] is a linear-approximation trust-region method in the
//! spirit of COBYLA (without constraints): a linear model is interpolated on a
//! simplex of `n + 1` points, a step of length `rho` is taken along its
//! steepest descent direction and `rho` shrinks when steps stop paying off.
//! [`bayes_minimize`] is an ask/tell loop over a Gaussian-process surrogate
//! with a Matern-5/2 kernel and a fitted noise term.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerBudget {
    pub max_evals: usize,
    /// Energy tolerance in Hartree.
    pub tol: f64,
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl OptimizerBudget {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.max_evals < 1 {
            return Err(Error::Invalid("max_evals must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Invalid("tolerance must be positive".into()));
        }
        if let Some(b) = &self.bounds {
            if b.len() != dim {
                return Err(Error::WidthMismatch(b.len(), dim));
            }
            if b.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::Invalid("every bound must satisfy lower < upper".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Trust-region radius fell below its final value.
    Radius,
    /// Evaluation budget spent.
    Budget,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub eval_trace: Vec<(Vec<f64>, f64)>,
    pub converged: bool,
    pub reason: StopReason,
}

pub type Objective<'a> = dyn FnMut(&[f64]) -> f64 + 'a;

struct Tracker<'a, 'b> {
    f: &'a mut Objective<'b>,
    trace: Vec<(Vec<f64>, f64)>,
    max_evals: usize,
}

impl Tracker<'_, '_> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let v = (self.f)(x);
        if !v.is_finite() {
            return Err(Error::Numerical(format!("objective returned {v} at {x:?}")));
        }
        self.trace.push((x.to_vec(), v));
        Ok(v)
    }

    fn exhausted(&self) -> bool {
        self.trace.len() >= self.max_evals
    }

    fn finish(self, converged: bool, reason: StopReason) -> OptResult {
        let (best_params, best_value) = self
            .trace
            .iter()
            .fold(None::<&(Vec<f64>, f64)>, |b, e| match b {
                Some(b) if b.1 <= e.1 => Some(b),
                _ => Some(e),
            })
            .map(|(x, v)| (x.clone(), *v))
            .expect("at least one evaluation");
        OptResult { best_params, best_value, eval_trace: self.trace, converged, reason }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CobylaOptions {
    pub rho_begin: f64,
    pub rho_end: f64,
}

impl CobylaOptions {
    /// Initial radius 0.5 (a quarter of the smallest bound width if tighter), final radius `tol`.
    pub fn from_budget(budget: &OptimizerBudget) -> CobylaOptions {
        let mut rho_begin: f64 = 0.5;
        if let Some(b) = &budget.bounds {
            for (lo, hi) in b {
                rho_begin = rho_begin.min(0.25 * (hi - lo));
            }
        }
        CobylaOptions { rho_begin, rho_end: budget.tol.min(rho_begin) }
    }
}

fn clamp_to(x: &mut [f64], bounds: &Option<Vec<(f64, f64)>>) {
    if let Some(b) = bounds {
        for (xi, (lo, hi)) in x.iter_mut().zip(b) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimizes with radius schedule derived from the budget.
pub fn cobyla_minimize(objective: &mut Objective<'_>, x0: &[f64], budget: &OptimizerBudget) -> Result<OptResult> {
    cobyla_minimize_with(objective, x0, budget, &CobylaOptions::from_budget(budget))
}

pub fn cobyla_minimize_with(objective: &mut Objective<'_>, x0: &[f64], budget: &OptimizerBudget, opts: &CobylaOptions) -> Result<OptResult> {
    let n = x0.len();
    budget.validate(n)?;
    if !(opts.rho_begin > 0.0 && opts.rho_end > 0.0 && opts.rho_end <= opts.rho_begin) {
        return Err(Error::Invalid("need 0 < rho_end <= rho_begin".into()));
    }
    let mut t = Tracker { f: objective, trace: Vec::new(), max_evals: budget.max_evals };
    let mut xb = x0.to_vec();
    clamp_to(&mut xb, &budget.bounds);
    let mut fb = t.eval(&xb)?;
    if n == 0 {
        return Ok(t.finish(true, StopReason::Radius));
    }
    let mut rho = opts.rho_begin;
    let mut sim: Vec<(Vec<f64>, f64)> = Vec::new();
    loop {
        if t.exhausted() {
            return Ok(t.finish(false, StopReason::Budget));
        }
        // Refresh the interpolation set when it is too spread out or degenerate.
        let spread = sim.iter().any(|(y, _)| dist(y, &xb) > 2.0 * rho + 1e-15);
        let poor = sim.len() < n || spread || {
            let d = DMatrix::from_fn(n, n, |i, j| (sim[i].0[j] - xb[j]) / rho);
            let sv = d.singular_values();
            sv.min() < 0.1 * sv.max().max(1e-300) || sv.min() < 0.05
        };
        if poor {
            sim.clear();
            for i in 0..n {
                if t.exhausted() {
                    return Ok(t.finish(false, StopReason::Budget));
                }
                let mut y = xb.clone();
                y[i] += rho;
                if let Some(b) = &budget.bounds {
                    if y[i] > b[i].1 {
                        y[i] = xb[i] - rho;
                    }
                }
                clamp_to(&mut y, &budget.bounds);
                let fy = t.eval(&y)?;
                sim.push((y, fy));
            }
            // A simplex vertex may beat the centre; move the centre there.
            if let Some(k) = (0..n).filter(|&k| sim[k].1 < fb).min_by(|&a, &b| sim[a].1.total_cmp(&sim[b].1)) {
                let (y, fy) = sim[k].clone();
                sim[k] = (xb.clone(), fb);
                xb = y;
                fb = fy;
                continue;
            }
        }
        let d = DMatrix::from_fn(n, n, |i, j| sim[i].0[j] - xb[j]);
        let df = DVector::from_fn(n, |i, _| sim[i].1 - fb);
        let g = match d.clone().lu().solve(&df) {
            Some(g) if g.iter().all(|v| v.is_finite()) => g,
            _ => {
                sim.clear();
                continue;
            }
        };
        let gn = g.norm();
        let mut trial_ok = false;
        if gn > 0.0 {
            if t.exhausted() {
                return Ok(t.finish(false, StopReason::Budget));
            }
            let mut xt: Vec<f64> = xb.iter().zip(g.iter()).map(|(x, gi)| x - rho * gi / gn).collect();
            clamp_to(&mut xt, &budget.bounds);
            if dist(&xt, &xb) > 1e-3 * rho {
                let ft = t.eval(&xt)?;
                // Drop the vertex farthest from the better of the two points.
                if ft < fb {
                    let far = (0..n).max_by(|&a, &b| dist(&sim[a].0, &xt).total_cmp(&dist(&sim[b].0, &xt))).expect("n > 0");
                    sim[far] = (xb.clone(), fb);
                    xb = xt;
                    fb = ft;
                    trial_ok = true;
                } else {
                    let far = (0..n).max_by(|&a, &b| dist(&sim[a].0, &xb).total_cmp(&dist(&sim[b].0, &xb))).expect("n > 0");
                    if dist(&sim[far].0, &xb) > rho * 1.5 {
                        sim[far] = (xt, ft);
                    }
                }
            }
        }
        if !trial_ok {
            if rho <= opts.rho_end {
                return Ok(t.finish(true, StopReason::Radius));
            }
            rho = (0.5 * rho).max(opts.rho_end);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    ExpectedImprovement,
    LowerConfidenceBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesOptions {
    /// First point to evaluate, typically a warm start.
    pub x0: Option<Vec<f64>>,
    pub n_initial: Option<usize>,
    pub acquisition: Acquisition,
    /// Exploration weight for lower confidence bound.
    pub kappa: f64,
}

impl Default for BayesOptions {
    fn default() -> Self {
        BayesOptions { x0: None, n_initial: None, acquisition: Acquisition::ExpectedImprovement, kappa: 1.96 }
    }
}

/// Gaussian-process regression on inputs scaled to the unit cube.
struct Gp {
    x: Vec<Vec<f64>>,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    hyp: Hyper,
}

#[derive(Clone, Debug)]
struct Hyper {
    log_signal: f64,
    log_len: Vec<f64>,
    log_noise: f64,
}

const NOISE_FLOOR: f64 = 1e-10;
const SQRT5: f64 = 2.23606797749979;

fn matern52(a: &[f64], b: &[f64], hyp: &Hyper) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(&hyp.log_len).map(|((x, y), l)| ((x - y) / l.exp()).powi(2)).sum();
    let r = r2.sqrt();
    hyp.log_signal.exp() * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

fn gram(x: &[Vec<f64>], hyp: &Hyper) -> DMatrix<f64> {
    let n = x.len();
    let noise = hyp.log_noise.exp().max(NOISE_FLOOR);
    DMatrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], hyp) + if i == j { noise + 1e-10 } else { 0.0 })
}

/// Negative log marginal likelihood and the factorization it used.
fn nll(x: &[Vec<f64>], y: &DVector<f64>, hyp: &Hyper) -> Option<(f64, DMatrix<f64>, DVector<f64>)> {
    let k = gram(x, hyp);
    let ch = k.cholesky()?;
    let alpha = ch.solve(y);
    let l = ch.l();
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let v = 0.5 * y.dot(&alpha) + 0.5 * logdet + 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln();
    v.is_finite().then_some((v, l, alpha))
}

fn hyper_to_vec(h: &Hyper) -> Vec<f64> {
    let mut v = vec![h.log_signal];
    v.extend(&h.log_len);
    v.push(h.log_noise);
    v
}

fn vec_to_hyper(v: &[f64]) -> Hyper {
    Hyper { log_signal: v[0], log_len: v[1..v.len() - 1].to_vec(), log_noise: v[v.len() - 1] }
}

impl Gp {
    fn fit(x: Vec<Vec<f64>>, yraw: &[f64], start: &Hyper, max_evals: usize) -> Gp {
        let y_mean = yraw.iter().sum::<f64>() / yraw.len() as f64;
        let var = yraw.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / yraw.len() as f64;
        let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(yraw.len(), yraw.iter().map(|v| (v - y_mean) / y_scale));
        let d = start.log_len.len();
        let lo: Vec<f64> = std::iter::once(-4.6).chain(std::iter::repeat(-4.6).take(d)).chain(std::iter::once(NOISE_FLOOR.ln())).collect();
        let hi: Vec<f64> = std::iter::once(4.6).chain(std::iter::repeat(2.3).take(d)).chain(std::iter::once(0.0)).collect();
        let mut best = hyper_to_vec(start);
        for (b, (l, h)) in best.iter_mut().zip(lo.iter().zip(&hi)) {
            *b = b.clamp(*l, *h);
        }
        let eval = |v: &[f64]| nll(&x, &y, &vec_to_hyper(v)).map(|r| r.0).unwrap_or(f64::INFINITY);
        let mut fbest = eval(&best);
        let mut step = 1.0;
        let mut evals = 1;
        // Coordinate pattern search in log space.
        while step > 0.02 && evals < max_evals {
            let mut improved = false;
            for i in 0..best.len() {
                for s in [step, -step] {
                    let mut c = best.clone();
                    c[i] = (c[i] + s).clamp(lo[i], hi[i]);
                    if c[i] == best[i] {
                        continue;
                    }
                    let fc = eval(&c);
                    evals += 1;
                    if fc < fbest {
                        fbest = fc;
                        best = c;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        let mut hyp = vec_to_hyper(&best);
        let (chol, alpha) = loop {
            if let Some((_, l, a)) = nll(&x, &y, &hyp) {
                break (l, a);
            }
            hyp.log_noise += 1.0;
        };
        Gp { x, chol, alpha, hyp }
    }

    /// Posterior mean and standard deviation in standardized units.
    fn predict(&self, u: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| matern52(xi, u, &self.hyp)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve_lower_triangular(&k).expect("triangular solve");
        let var = (self.hyp.log_signal.exp() - v.dot(&v)).max(1e-18);
        (mean, var.sqrt())
    }
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Minimizes over the box `budget.bounds` with a GP surrogate.
pub fn bayes_minimize(objective: &mut Objective<'_>, budget: &OptimizerBudget, seed: u64) -> Result<OptResult> {
    bayes_minimize_with(objective, budget, seed, &BayesOptions::default())
}

pub fn bayes_minimize_with(objective: &mut Objective<'_>, budget: &OptimizerBudget, seed: u64, opts: &BayesOptions) -> Result<OptResult> {
    let bounds = budget.bounds.clone().ok_or_else(|| Error::Invalid("Bayesian optimization needs bounds".into()))?;
    let d = bounds.len();
    budget.validate(d)?;
    if d == 0 {
        return Err(Error::Invalid("Bayesian optimization needs at least one parameter".into()));
    }
    let to_x = |u: &[f64]| -> Vec<f64> { u.iter().zip(&bounds).map(|(ui, (lo, hi))| lo + ui * (hi - lo)).collect() };
    let to_u = |x: &[f64]| -> Vec<f64> { x.iter().zip(&bounds).map(|(xi, (lo, hi))| ((xi - lo) / (hi - lo)).clamp(0.0, 1.0)).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker { f: objective, trace: Vec::new(), max_evals: budget.max_evals };
    let mut us: Vec<Vec<f64>> = Vec::new();
    let n_init = opts.n_initial.unwrap_or((2 * d + 1).clamp(3, 10)).clamp(1, budget.max_evals);
    if let Some(x0) = &opts.x0 {
        if x0.len() != d {
            return Err(Error::WidthMismatch(x0.len(), d));
        }
        let u = to_u(x0);
        t.eval(&to_x(&u))?;
        us.push(u);
    }
    // Latin hypercube for the remaining initial points.
    let m = n_init.saturating_sub(us.len());
    if m > 0 {
        let mut cols: Vec<Vec<usize>> = (0..d).map(|_| (0..m).collect()).collect();
        for c in &mut cols {
            for i in (1..m).rev() {
                let j = rng.random_range(0..=i);
                c.swap(i, j);
            }
        }
        for i in 0..m {
            if t.exhausted() {
                break;
            }
            let u: Vec<f64> = (0..d).map(|k| (cols[k][i] as f64 + rng.random::<f64>()) / m as f64).collect();
            t.eval(&to_x(&u))?;
            us.push(u);
        }
    }
    let mut hyp = Hyper { log_signal: 0.0, log_len: vec![(0.3f64).ln(); d], log_noise: (1e-4f64).ln() };
    while !t.exhausted() {
        let ys: Vec<f64> = t.trace.iter().map(|(_, v)| *v).collect();
        let fit_evals = if us.len() < 40 { 200 } else { 60 };
        let gp = Gp::fit(us.clone(), &ys, &hyp, fit_evals);
        hyp = gp.hyp.clone();
        let incumbent = us.iter().map(|u| gp.predict(u).0).fold(f64::INFINITY, f64::min);
        let acq = |u: &[f64]| -> f64 {
            let (mu, sd) = gp.predict(u);
            match opts.acquisition {
                Acquisition::ExpectedImprovement => {
                    let imp = incumbent - mu;
                    let z = imp / sd;
                    imp * norm_cdf(z) + sd * norm_pdf(z)
                }
                Acquisition::LowerConfidenceBound => -(mu - opts.kappa * sd),
            }
        };
        // Multi-start: random candidates plus perturbations of the best points.
        let mut cands: Vec<Vec<f64>> = (0..512).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let mut order: Vec<usize> = (0..us.len()).collect();
        order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
        for &i in order.iter().take(5) {
            for scale in [0.1, 0.02, 0.004] {
                for _ in 0..16 {
                    let c: Vec<f64> = us[i].iter().map(|v| (v + scale * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0)).collect();
                    cands.push(c);
                }
            }
        }
        let mut scored: Vec<(f64, Vec<f64>)> = cands.into_iter().map(|c| (acq(&c), c)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best_u = scored[0].1.clone();
        let mut best_a = scored[0].0;
        for (a0, c0) in scored.into_iter().take(5) {
            let (mut c, mut a) = (c0, a0);
            let mut step = 0.05;
            while step > 1e-5 {
                let mut moved = false;
                for k in 0..d {
                    for s in [step, -step] {
                        let mut trial = c.clone();
                        trial[k] = (trial[k] + s).clamp(0.0, 1.0);
                        let at = acq(&trial);
                        if at > a {
                            a = at;
                            c = trial;
                            moved = true;
                        }
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
            if a > best_a {
                best_a = a;
                best_u = c;
            }
        }
        t.eval(&to_x(&best_u))?;
        us.push(best_u);
    }
    Ok(t.finish(true, StopReason::Budget))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_from_zero() {
        let budget = OptimizerBudget { max_evals: 200, tol: 1e-6, bounds: None };
        let r = cobyla_minimize(&mut |x: &[f64]| (x[0] - 2.0).powi(2), &[0.0], &budget).unwrap();
        assert!((r.best_params[0] - 2.0).abs() < 1e-4, "{:?}", r.best_params);
        assert!(r.converged);
    }

    #[test]
    fn single_evaluation_budget_returns_start() {
        let budget = OptimizerBudget { max_evals: 1, tol: 1e-6, bounds: None };
        let r = cobyla_minimize(&mut |x: &[f64]| (x[0] - 2.0).powi(2), &[0.0], &budget).unwrap();
        assert_eq!(r.best_params, vec![0.0]);
        assert!(!r.converged);
        assert_eq!(r.reason, StopReason::Budget);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let budget = OptimizerBudget { max_evals: 10, tol: 1e-6, bounds: None };
        assert!(cobyla_minimize(&mut |_x: &[f64]| f64::NAN, &[0.0], &budget).is_err());
    }

    #[test]
    fn bayes_requires_bounds() {
        let budget = OptimizerBudget { max_evals: 10, tol: 1e-6, bounds: None };
        assert!(bayes_minimize(&mut |x: &[f64]| x[0], &budget, 1).is_err());
    }

    #[test]
    fn constant_objective_spends_budget() {
        let budget = OptimizerBudget { max_evals: 12, tol: 1e-6, bounds: Some(vec![(-1.0, 1.0), (0.0, 2.0)]) };
        let r = bayes_minimize(&mut |_x: &[f64]| 3.0, &budget, 4).unwrap();
        assert_eq!(r.eval_trace.len(), 12);
        assert!(r.converged);
        assert_eq!(r.best_value, 3.0);
    }
}
