//! Empirical distribution functions, seeded trial orchestration and the
//! experiments that compare measured errors with bounds and with the
//! uniform rounding-error model.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::bounds::Method;
use crate::error::{Error, Result};
use crate::kernels::{dot_report, dot_with, matvec_report, matvec_with, BoundConfig, KernelRun, Matrix};
use crate::precision::{emulated_op, realized_delta, ErrorModel, FloatFormat, Modeled, Op};
use crate::rng::Stream;

/// Step function `F(t) = #{x_i <= t} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edf {
    sorted: Vec<f64>,
}

impl Edf {
    pub fn build(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(*x));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Edf { sorted })
    }

    pub fn query(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Steps of the function: each distinct sample with `F` just after it.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in self.sorted.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = (i + 1) as f64 / n,
                _ => out.push((x, (i + 1) as f64 / n)),
            }
        }
        out
    }

    /// Two-column CSV `t,F` over the steps.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,F")?;
        for (t, f) in self.steps() {
            writeln!(w, "{t:?},{f:?}")?;
        }
        Ok(())
    }
}

/// `F_lower(t) <= F_upper(t) + slack` at every pooled sample point, i.e.
/// samples behind `lower` are stochastically larger up to `slack`.
pub fn edf_dominates(lower: &Edf, upper: &Edf, slack: f64) -> bool {
    max_excess(lower, upper) <= slack
}

/// `max_t F_lower(t) - F_upper(t)` over pooled sample points.
pub fn max_excess(lower: &Edf, upper: &Edf) -> f64 {
    let (a, b) = (&lower.sorted, &upper.sorted);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut worst = f64::NEG_INFINITY;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        worst = worst.max(i as f64 / na - j as f64 / nb);
    }
    worst
}

/// Statistical acceptance slack `3 sqrt(p (1 - p) / trials)`.
pub fn slack(p: f64, trials: usize) -> f64 {
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialPlan {
    pub n_trials: usize,
    pub base_seed: u64,
    pub target_confidence: f64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl TrialPlan {
    pub fn new(n_trials: usize, base_seed: u64) -> Result<Self> {
        if n_trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        Ok(TrialPlan {
            n_trials,
            base_seed,
            target_confidence: 0.99,
            jobs: None,
        })
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target_confidence = target;
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = Some(jobs.max(1));
        self
    }
}

/// What a trial reports back to the summary.
pub trait Outcome {
    fn covered(&self) -> bool;
    fn error(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary<T> {
    pub outcomes: Vec<T>,
    pub coverage: f64,
    pub max_error: f64,
    pub errors: Edf,
}

/// Runs `experiment(index)` for every trial, possibly in parallel, and
/// reduces in trial order. The experiment must derive its randomness from
/// `(plan.base_seed, index)` alone.
pub fn run_trials<T, F>(plan: &TrialPlan, experiment: F) -> Result<TrialSummary<T>>
where
    T: Outcome + Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if plan.n_trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let go = || -> Vec<Result<T>> { (0..plan.n_trials).into_par_iter().map(&experiment).collect() };
    let results = match plan.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    };
    let mut outcomes = Vec::with_capacity(plan.n_trials);
    for (index, r) in results.into_iter().enumerate() {
        outcomes.push(r.map_err(|e| Error::Trial {
            index,
            source: Box::new(e),
        })?);
    }
    let covered = outcomes.iter().filter(|o| o.covered()).count();
    let errs: Vec<f64> = outcomes.iter().map(Outcome::error).collect();
    Ok(TrialSummary {
        coverage: covered as f64 / outcomes.len() as f64,
        max_error: errs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        errors: Edf::build(&errs)?,
        outcomes,
    })
}

/// Relative rounding errors of emulated operations on random operands,
/// next to the same number of draws from the uniform model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSamples {
    pub true_abs: Vec<f64>,
    pub model_abs: Vec<f64>,
}

/// Operand with uniformly distributed significand in `[1, 2)`, a random
/// sign, and exponent uniform in `[-4, 4]`.
fn random_magnitude(s: &mut Stream) -> f64 {
    let m = 1.0 + s.next_unit();
    let e = (s.next_unit() * 9.0).floor() as i32 - 4;
    let sign = if s.next_unit() < 0.5 { -1.0 } else { 1.0 };
    sign * m * 2f64.powi(e)
}

/// `op = None` samples representation errors `fl(z)/z - 1`.
pub fn rounding_deltas(fmt: &FloatFormat, op: Option<Op>, samples: usize, seed: u64) -> Result<DeltaSamples> {
    let model = ErrorModel::for_format(fmt);
    let true_abs = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut s = Stream::named(seed, "operands", i as u64);
            let (exact, computed) = match op {
                None => {
                    let z = random_magnitude(&mut s);
                    (z, fmt.round(z)?)
                }
                Some(op) => {
                    let a = fmt.round(random_magnitude(&mut s))?;
                    let b = fmt.round(random_magnitude(&mut s))?;
                    (op.exact(a, b), emulated_op(a, b, op, fmt)?)
                }
            };
            Ok(if exact == 0.0 { 0.0 } else { realized_delta(exact, computed)?.abs() })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut m = Stream::named(seed, "model", 0);
    let model_abs = (0..samples).map(|_| model.sample(&mut m).abs()).collect();
    Ok(DeltaSamples { true_abs, model_abs })
}

/// One dot-product trial: the kernel in `fmt` and the same data pushed
/// through the uniform error model.
#[derive(Debug, Clone, PartialEq)]
pub struct DotTrial {
    pub run: KernelRun,
    pub model_bwd: f64,
    /// The method whose coverage this trial reports.
    pub method: Method,
}

impl Outcome for DotTrial {
    fn covered(&self) -> bool {
        self.run.gamma(self.method).is_some_and(|g| self.run.measured_bwd <= g)
    }
    fn error(&self) -> f64 {
        self.run.measured_bwd
    }
}

/// Vector of `U[-1, 1]` entries rounded into `fmt`.
pub fn uniform_data(s: &mut Stream, n: usize, fmt: &FloatFormat) -> Result<Vec<f64>> {
    (0..n).map(|_| fmt.round(s.next_symmetric())).collect()
}

pub fn dot_trial(fmt: &FloatFormat, n: usize, seed: u64, index: usize, cfg: &BoundConfig) -> Result<DotTrial> {
    let mut s = Stream::named(seed, "data", index as u64);
    let a = uniform_data(&mut s, n, fmt)?;
    let b = uniform_data(&mut s, n, fmt)?;
    let y_hat = dot_with(&a, &b, &mut { *fmt })?;
    let run = dot_report(&a, &b, y_hat, fmt, cfg)?;
    let mut model = Modeled::new(ErrorModel::for_format(fmt), Stream::named(seed, "model", index as u64));
    let y_model = dot_with(&a, &b, &mut model)?;
    let model_bwd = dot_report(&a, &b, y_model, fmt, cfg)?.measured_bwd;
    Ok(DotTrial {
        run,
        model_bwd,
        method: Method::Vibea,
    })
}

pub fn dot_experiment(fmt: &FloatFormat, n: usize, plan: &TrialPlan, cfg: &BoundConfig) -> Result<TrialSummary<DotTrial>> {
    run_trials(plan, |i| dot_trial(fmt, n, plan.base_seed, i, cfg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatvecTrial {
    pub run: KernelRun,
    pub method: Method,
}

impl Outcome for MatvecTrial {
    fn covered(&self) -> bool {
        self.run.gamma(self.method).is_some_and(|g| self.run.measured_bwd <= g)
    }
    fn error(&self) -> f64 {
        self.run.measured_bwd
    }
}

pub fn matvec_trial(fmt: &FloatFormat, m: usize, n: usize, seed: u64, index: usize, cfg: &BoundConfig) -> Result<MatvecTrial> {
    let mut s = Stream::named(seed, "data", index as u64);
    let a = Matrix::from_col_major(m, n, uniform_data(&mut s, m * n, fmt)?)?;
    let x = uniform_data(&mut s, n, fmt)?;
    let y = matvec_with(&a, &x, &mut { *fmt })?;
    Ok(MatvecTrial {
        run: matvec_report(&a, &x, &y, fmt, cfg)?,
        method: Method::Vibea,
    })
}

/// Model check on dot products: backward errors under the uniform model
/// should be stochastically larger than the real ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheck {
    pub true_errors: Edf,
    pub model_errors: Edf,
    pub max_excess: f64,
    pub slack: f64,
}

impl ModelCheck {
    pub fn passed(&self) -> bool {
        self.max_excess <= self.slack
    }
}

pub fn edf_model_check(fmt: &FloatFormat, n: usize, plan: &TrialPlan, cfg: &BoundConfig, slack: f64) -> Result<ModelCheck> {
    let s = dot_experiment(fmt, n, plan, cfg)?;
    let model: Vec<f64> = s.outcomes.iter().map(|t| t.model_bwd).collect();
    let model_errors = Edf::build(&model)?;
    Ok(ModelCheck {
        max_excess: max_excess(&model_errors, &s.errors),
        true_errors: s.errors,
        model_errors,
        slack,
    })
}
