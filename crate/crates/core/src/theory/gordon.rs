use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{Cell, ExperimentReport};
use crate::seed::derive_seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GordonTrial {
    pub trial: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// `s_min ≥ √D − √D − t` and `s_max ≤ 2√D + t`.
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GordonSummary {
    pub d: usize,
    pub t: f64,
    pub trials: Vec<GordonTrial>,
}

impl GordonSummary {
    /// Concentration bound `1 − e^{−t²/2}` on the probability of `within`.
    pub fn bound(&self) -> f64 {
        1.0 - (-self.t * self.t / 2.0).exp()
    }

    pub fn lower(&self) -> f64 {
        -self.t
    }

    pub fn upper(&self) -> f64 {
        2.0 * (self.d as f64).sqrt() + self.t
    }

    pub fn violations(&self) -> usize {
        self.trials.iter().filter(|t| !t.within).count()
    }

    pub fn fraction_within(&self) -> f64 {
        1.0 - self.violations() as f64 / self.trials.len() as f64
    }

    pub fn mean_s_max_over_sqrt_d(&self) -> f64 {
        let root = (self.d as f64).sqrt();
        self.trials.iter().map(|t| t.s_max / root).sum::<f64>() / self.trials.len() as f64
    }
}

/// Extreme singular values of `trials` standard-Gaussian `d x d` matrices.
pub fn run_gordon(d: usize, trials: usize, t: f64, seed: u64) -> Result<GordonSummary> {
    if d < 2 {
        return Err(Error::invalid(format!(
            "gordon trial needs d >= 2, got {d}"
        )));
    }
    if trials == 0 || !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(
            "gordon trial needs trials >= 1 and finite t >= 0",
        ));
    }
    let mut summary = GordonSummary {
        d,
        t,
        trials: Vec::with_capacity(trials),
    };
    let (lower, upper) = (summary.lower(), summary.upper());
    for k in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64]));
        let s = Tensor::randn(d, d, 1.0, &mut rng)
            .to_dmatrix()
            .singular_values();
        let s_max = s.max();
        let s_min = s.min();
        summary.trials.push(GordonTrial {
            trial: k,
            s_min,
            s_max,
            within: s_min >= lower && s_max <= upper,
        });
    }
    Ok(summary)
}

/// One row per sample plus a `summary` row with the empirical fraction
/// inside the interval and the bound.
pub fn gordon_bound_trial(d: usize, trials: usize, t: f64, seed: u64) -> Result<ExperimentReport> {
    let s = run_gordon(d, trials, t, seed)?;
    let mut report = ExperimentReport::new(
        "gordon_bound",
        &["trial", "s_min", "s_max", "within", "bound"],
    );
    let bound = s.bound();
    for tr in &s.trials {
        report.push_row(vec![
            tr.trial.into(),
            tr.s_min.into(),
            tr.s_max.into(),
            tr.within.into(),
            bound.into(),
        ])?;
    }
    report.push_row(vec![
        "summary".into(),
        Cell::Text(String::new()),
        s.mean_s_max_over_sqrt_d().into(),
        s.fraction_within().into(),
        bound.into(),
    ])?;
    report.note("d", d);
    report.note("t", t);
    report.note("trials", trials);
    report.note("seed", seed);
    report.note("interval", format!("[{}, {}]", s.lower(), s.upper()));
    report.note("violations", s.violations());
    report.note("fraction_within", s.fraction_within());
    report.note("bound", bound);
    report.note("mean_s_max_over_sqrt_d", s.mean_s_max_over_sqrt_d());
    Ok(report)
}
