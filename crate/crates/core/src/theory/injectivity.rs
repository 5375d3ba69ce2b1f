use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kronecker::{eigenvalue_norm, kron_singular_values, spectral_norm, KronMethod};
use super::witness::complete_adjacency;
use crate::error::{Error, Result};
use crate::io::{Cell, ExperimentReport};
use crate::seed::derive_seed;
use crate::tensor::Tensor;

/// `0.9 / (9 D^{3/2})`: strictly inside the variance bound under which the
/// residual map is invertible with high probability.
pub fn default_varsigma(d: usize) -> f64 {
    0.9 / (9.0 * (d as f64).powf(1.5))
}

/// Monte-Carlo trial of the invertibility of `I + Ã ⊗ W` on `K_n` with
/// `W_ij ~ N(0, ς²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectivityTrialConfig {
    pub n: usize,
    pub d: usize,
    pub varsigma: f64,
    pub trials: usize,
    pub seed: u64,
    /// Invertible means `s_min > singular_threshold · s_max`.
    pub singular_threshold: f64,
}

impl InjectivityTrialConfig {
    pub fn new(n: usize, d: usize, trials: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            varsigma: default_varsigma(d),
            trials,
            seed,
            singular_threshold: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.varsigma > 0.0 && self.varsigma.is_finite()) {
            return Err(Error::invalid(format!(
                "varsigma must be positive, got {}",
                self.varsigma
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.n == 0 || self.d == 0 {
            return Err(Error::invalid("n and d must be at least 1"));
        }
        if !(self.singular_threshold >= 0.0) {
            return Err(Error::invalid("singular_threshold must be non-negative"));
        }
        Ok(())
    }

    /// Probability lower bound `1 − e^{−D/2}`.
    pub fn bound(&self) -> f64 {
        1.0 - (-(self.d as f64) / 2.0).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectivityTrial {
    pub trial: usize,
    /// `(Σ_j |λ_j(W)|²)^{1/2}`.
    pub lambda_sum: f64,
    pub spectral_norm: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// `lambda_sum < 1`: the sufficient condition.
    pub condition_ok: bool,
    pub invertible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectivitySummary {
    pub config: InjectivityTrialConfig,
    pub trials: Vec<InjectivityTrial>,
    pub method: KronMethod,
}

impl InjectivitySummary {
    pub fn condition_fraction(&self) -> f64 {
        self.fraction(|t| t.condition_ok)
    }

    pub fn invertible_fraction(&self) -> f64 {
        self.fraction(|t| t.invertible)
    }

    /// Trials where the sufficient condition held but the map was singular.
    /// Only this direction is a claim; the converse is not.
    pub fn implication_violations(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.condition_ok && !t.invertible)
            .count()
    }

    fn fraction(&self, f: impl Fn(&InjectivityTrial) -> bool) -> f64 {
        self.trials.iter().filter(|t| f(t)).count() as f64 / self.trials.len() as f64
    }
}

/// Runs every trial. Trial `k` draws `W` from its own stream
/// `derive_seed(seed, [k])`, so results do not depend on scheduling.
pub fn run_injectivity(cfg: &InjectivityTrialConfig) -> Result<InjectivitySummary> {
    cfg.validate()?;
    let adj = complete_adjacency(cfg.n)?;
    let mut trials = Vec::with_capacity(cfg.trials);
    let mut method = KronMethod::Dense;
    for k in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[k as u64]));
        let w = Tensor::randn(cfg.d, cfg.d, cfg.varsigma, &mut rng);
        let lambda_sum = eigenvalue_norm(&w)?;
        let (s, m) = kron_singular_values(&adj, &w)?;
        method = m;
        let (s_max, s_min) = (s[0], *s.last().expect("nd >= 1"));
        trials.push(InjectivityTrial {
            trial: k,
            lambda_sum,
            spectral_norm: spectral_norm(&w)?,
            s_min,
            s_max,
            condition_ok: lambda_sum < 1.0,
            invertible: s_min > cfg.singular_threshold * s_max,
        });
    }
    Ok(InjectivitySummary {
        config: cfg.clone(),
        trials,
        method,
    })
}

/// One CSV row per trial and a final `summary` row whose `condition_ok` and
/// `invertible` cells hold the empirical fractions.
pub fn residual_injectivity_trial(cfg: &InjectivityTrialConfig) -> Result<ExperimentReport> {
    let summary = run_injectivity(cfg)?;
    let mut report = ExperimentReport::new(
        "residual_injectivity",
        &[
            "trial",
            "lambda_sum",
            "s_min",
            "s_max",
            "condition_ok",
            "invertible",
            "bound",
            "spectral_norm",
        ],
    );
    let bound = cfg.bound();
    for t in &summary.trials {
        report.push_row(vec![
            t.trial.into(),
            t.lambda_sum.into(),
            t.s_min.into(),
            t.s_max.into(),
            t.condition_ok.into(),
            t.invertible.into(),
            bound.into(),
            t.spectral_norm.into(),
        ])?;
    }
    let blank = || Cell::Text(String::new());
    report.push_row(vec![
        "summary".into(),
        blank(),
        summary
            .trials
            .iter()
            .map(|t| t.s_min)
            .fold(f64::INFINITY, f64::min)
            .into(),
        summary
            .trials
            .iter()
            .map(|t| t.s_max)
            .fold(0.0, f64::max)
            .into(),
        summary.condition_fraction().into(),
        summary.invertible_fraction().into(),
        bound.into(),
        blank(),
    ])?;
    report.note("n", cfg.n);
    report.note("d", cfg.d);
    report.note("varsigma", cfg.varsigma);
    report.note("trials", cfg.trials);
    report.note("seed", cfg.seed);
    report.note(
        "invertible_rule",
        format!("s_min > {:e} * s_max", cfg.singular_threshold),
    );
    report.note("condition_fraction", summary.condition_fraction());
    report.note("invertible_fraction", summary.invertible_fraction());
    report.note("bound", bound);
    report.note("bound_met", summary.invertible_fraction() >= bound);
    report.note("implication_violations", summary.implication_violations());
    report.note("method", summary.method.as_str());
    report.note(
        "lambda_sum_definition",
        "sqrt(sum_j |lambda_j(W)|^2), complex eigenvalues by modulus",
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_invertible() {
        let cfg = InjectivityTrialConfig::new(4, 4, 50, 0);
        let s = run_injectivity(&cfg).unwrap();
        assert_eq!(s.invertible_fraction(), 1.0);
        assert_eq!(s.condition_fraction(), 1.0);
        assert_eq!(s.implication_violations(), 0);
        assert_eq!(s.method, KronMethod::Dense);
    }

    #[test]
    fn reproducible_per_trial() {
        let a = run_injectivity(&InjectivityTrialConfig::new(3, 2, 5, 9)).unwrap();
        let b = run_injectivity(&InjectivityTrialConfig::new(3, 2, 8, 9)).unwrap();
        assert_eq!(a.trials[..], b.trials[..5]);
    }

    #[test]
    fn report_layout() {
        let r = residual_injectivity_trial(&InjectivityTrialConfig::new(2, 2, 3, 1)).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.cell(3, "trial").unwrap().as_str(), Some("summary"));
        assert_eq!(r.notes["implication_violations"], "0");
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = InjectivityTrialConfig::new(2, 2, 1, 0);
        c.varsigma = 0.0;
        assert!(run_injectivity(&c).is_err());
        let c = InjectivityTrialConfig::new(2, 2, 0, 0);
        assert!(run_injectivity(&c).is_err());
    }

    #[test]
    fn large_varsigma_breaks_condition() {
        let mut c = InjectivityTrialConfig::new(3, 4, 20, 2);
        c.varsigma = 2.0;
        let s = run_injectivity(&c).unwrap();
        assert!(s.condition_fraction() < 0.5);
        assert_eq!(s.implication_violations(), 0);
    }
}
