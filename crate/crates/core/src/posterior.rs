//! Diagonal Gaussian weight posterior read off the optimizer state.
//!
//! After training, each coordinate gets
//!
//! - `mean_i = N*s_i / (N*s_i + 1/sigma^2) * theta_i`
//! - `variance_i = 1 / (N*s_i + 1/sigma^2)`
//!
//! where `s_i = sqrt(v_hat_i)` is the curvature estimate from the
//! bias-corrected second moment, `N` the effective sample count and `sigma`
//! the prior standard deviation. Flat curvature (`s_i = 0`) recovers the prior
//! exactly; strong curvature collapses onto the point estimate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Network, ParamVector};
use crate::optim::{MomentState, OptimizerConfig};

/// Lower clamp on posterior variances; keeps samplers well-defined when
/// `N * s` grows without bound.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Zero-mean isotropic Gaussian prior `N(0, sigma^2 I)`.
///
/// `improper` drops the prior term entirely (prior precision zero), in which
/// case coordinates with zero curvature get infinite variance and are treated
/// as always-pruned by the signal-to-noise ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub sigma_prior: f64,
    pub improper: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma_prior: 0.1,
            improper: false,
        }
    }
}

impl PriorConfig {
    pub fn new(sigma_prior: f64) -> Result<Self> {
        let cfg = Self {
            sigma_prior,
            improper: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_prior > 0.0) {
            return Err(Error::Contract(format!(
                "sigma_prior must be > 0, got {}",
                self.sigma_prior
            )));
        }
        Ok(())
    }

    /// Prior precision `1/sigma^2`, or zero in improper mode.
    pub fn precision(&self) -> f64 {
        if self.improper {
            0.0
        } else {
            1.0 / (self.sigma_prior * self.sigma_prior)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveNMode {
    Fixed,
    TTimesBatch,
}

/// The effective sample count `N` in the likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveN {
    pub mode: EffectiveNMode,
    pub fixed_value: f64,
    /// The N actually used.
    pub resolved: f64,
}

impl EffectiveN {
    pub fn fixed(value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::Contract(format!(
                "effective N must be > 0, got {value}"
            )));
        }
        Ok(Self {
            mode: EffectiveNMode::Fixed,
            fixed_value: value,
            resolved: value,
        })
    }

    /// The `N = t * batch_size` heuristic.
    pub fn t_times_batch(t: u64, batch_size: usize) -> Result<Self> {
        if t == 0 || batch_size == 0 {
            return Err(Error::Contract(
                "t_times_batch requires t >= 1 and a positive batch size".into(),
            ));
        }
        Ok(Self {
            mode: EffectiveNMode::TTimesBatch,
            fixed_value: 0.0,
            resolved: t as f64 * batch_size as f64,
        })
    }

    pub fn resolve(
        mode: EffectiveNMode,
        fixed_value: f64,
        t: u64,
        batch_size: usize,
    ) -> Result<Self> {
        match mode {
            EffectiveNMode::Fixed => Self::fixed(fixed_value),
            EffectiveNMode::TTimesBatch => Self::t_times_batch(t, batch_size),
        }
    }
}

/// Diagonal Gaussian over the flat weight vector. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    mean: Vec<f64>,
    variance: Vec<f64>,
    shapes: Vec<(usize, usize)>,
}

impl GaussianPosterior {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>, shapes: Vec<(usize, usize)>) -> Result<Self> {
        let expected: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if mean.len() != expected || variance.len() != mean.len() {
            return Err(Error::Shape(format!(
                "posterior of {} means / {} variances does not match shapes ({expected})",
                mean.len(),
                variance.len()
            )));
        }
        if variance.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Contract("posterior variances must be positive".into()));
        }
        Ok(Self {
            mean,
            variance,
            shapes,
        })
    }

    /// The prior itself, as a posterior with no observed curvature.
    pub fn from_prior(prior: &PriorConfig, shapes: Vec<(usize, usize)>) -> Result<Self> {
        if prior.improper {
            return Err(Error::Contract(
                "an improper prior has no sampling distribution".into(),
            ));
        }
        let d: usize = shapes.iter().map(|(r, c)| r * c).sum();
        let sigma_sq = prior.sigma_prior * prior.sigma_prior;
        Self::new(vec![0.0; d], vec![sigma_sq; d], shapes)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    /// Posterior mean as a parameter vector (the point estimate used for
    /// pruning and greedy evaluation).
    pub fn mean_params(&self) -> ParamVector {
        ParamVector::new(self.mean.clone(), self.shapes.clone())
            .expect("posterior layout is validated at construction")
    }

    /// Draw `count` independent weight vectors.
    pub fn sample_weights<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<ParamVector> {
        assert!(count >= 1, "count must be >= 1");
        let normal = StandardNormal;
        (0..count)
            .map(|_| {
                let values: Vec<f64> = self
                    .mean
                    .iter()
                    .zip(&self.variance)
                    .map(|(&m, &v)| {
                        let z: f64 = normal.sample(rng);
                        m + v.sqrt() * z
                    })
                    .collect();
                ParamVector::new(values, self.shapes.clone())
                    .expect("posterior layout is validated at construction")
            })
            .collect()
    }

    /// Per-coordinate `|mean| / std`. Infinite-variance coordinates (improper
    /// prior, zero curvature) score zero and are therefore pruned first.
    pub fn signal_to_noise(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.variance)
            .map(|(&m, &v)| m.abs() / v.sqrt())
            .collect()
    }
}

/// Build the posterior from the post-update parameters and optimizer state.
///
/// `theta_next` must be the parameter vector AFTER the final step. The
/// bias-corrected second moment feeds the curvature estimate; epsilon is not
/// added here. Variances are clamped below at [`VARIANCE_FLOOR`].
pub fn extract_posterior(
    theta_next: &ParamVector,
    state: &MomentState,
    cfg: &OptimizerConfig,
    prior: &PriorConfig,
    n: &EffectiveN,
) -> Result<GaussianPosterior> {
    if theta_next.len() != state.dim() {
        return Err(Error::Shape(format!(
            "parameter dimension {} does not match state dimension {}",
            theta_next.len(),
            state.dim()
        )));
    }
    prior.validate()?;
    let (_, v_hat) = state.read_corrected(cfg)?;
    let precision = prior.precision();
    let n_eff = n.resolved;

    let mut mean = Vec::with_capacity(theta_next.len());
    let mut variance = Vec::with_capacity(theta_next.len());
    for (&theta, &v) in theta_next.values().iter().zip(&v_hat) {
        let ns = n_eff * v.sqrt();
        if ns == 0.0 {
            if prior.improper {
                // no curvature and no prior: unconstrained coordinate
                mean.push(theta);
                variance.push(f64::INFINITY);
            } else {
                mean.push(0.0);
                variance.push(prior.sigma_prior * prior.sigma_prior);
            }
        } else {
            let denom = ns + precision;
            mean.push(ns / denom * theta);
            variance.push((1.0 / denom).max(VARIANCE_FLOOR));
        }
    }
    Ok(GaussianPosterior {
        mean,
        variance,
        shapes: theta_next.shapes().to_vec(),
    })
}

/// Shrinkage coefficient `N*s_i / (N*s_i + 1/sigma^2)` multiplying the point
/// estimate in the posterior mean for coordinate `i`.
pub fn shrinkage(
    state: &MomentState,
    cfg: &OptimizerConfig,
    prior: &PriorConfig,
    n: &EffectiveN,
    i: usize,
) -> Result<f64> {
    if i >= state.dim() {
        return Err(Error::Contract(format!(
            "coordinate {i} out of range for dimension {}",
            state.dim()
        )));
    }
    let (_, v_hat) = state.read_corrected(cfg)?;
    let ns = n.resolved * v_hat[i].sqrt();
    let denom = ns + prior.precision();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(ns / denom)
}

/// Predictive mean and standard deviation from sampled-weight forward passes.
///
/// `pred_std = sqrt(sample variance + obs_noise^2)`; the sample variance is the
/// unbiased estimate over `samples` eval-mode passes.
pub fn predictive_sample<R: Rng>(
    net: &Network,
    post: &GaussianPosterior,
    inputs: ndarray::ArrayView2<'_, f64>,
    samples: usize,
    obs_noise: f64,
    rng: &mut R,
) -> Result<(ndarray::Array2<f64>, ndarray::Array2<f64>)> {
    if samples < 2 {
        return Err(Error::Contract("predictive sampling needs samples >= 2".into()));
    }
    if post.shapes() != net.params().shapes() {
        return Err(Error::Shape(
            "posterior layout does not match the network".into(),
        ));
    }
    let mut scratch = net.clone();
    let mut sum = ndarray::Array2::<f64>::zeros((inputs.nrows(), net.output_dim()));
    let mut sum_sq = sum.clone();
    for _ in 0..samples {
        let weights = post.sample_weights(rng, 1).pop().expect("count is 1");
        scratch.set_params(weights)?;
        let out = scratch.predict(inputs)?;
        sum += &out;
        sum_sq += &out.mapv(|v| v * v);
    }
    let s = samples as f64;
    let mean = sum / s;
    let var = (sum_sq / s - mean.mapv(|m| m * m)) * (s / (s - 1.0));
    let std = var.mapv(|v| (v.max(0.0) + obs_noise * obs_noise).sqrt());
    Ok((mean, std))
}

/// On-disk JSON form of a posterior. Field order is fixed for diffability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorExport {
    pub shapes: Vec<(usize, usize)>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub config: PosteriorExportConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorExportConfig {
    pub sigma_prior: f64,
    pub improper: bool,
    pub effective_n_mode: EffectiveNMode,
    pub effective_n: f64,
    pub optimizer_method: String,
    pub beta1: f64,
    pub beta2: f64,
    pub eta: f64,
    pub steps: u64,
}

impl PosteriorExport {
    pub fn build(
        post: &GaussianPosterior,
        cfg: &OptimizerConfig,
        prior: &PriorConfig,
        n: &EffectiveN,
        steps: u64,
    ) -> Self {
        let method = match cfg.method {
            crate::optim::Method::Ogd => "ogd",
            crate::optim::Method::Adagrad => "adagrad",
            crate::optim::Method::Adam => "adam",
        };
        Self {
            shapes: post.shapes().to_vec(),
            mean: post.mean().to_vec(),
            variance: post.variance().to_vec(),
            config: PosteriorExportConfig {
                sigma_prior: prior.sigma_prior,
                improper: prior.improper,
                effective_n_mode: n.mode,
                effective_n: n.resolved,
                optimizer_method: method.to_string(),
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                eta: cfg.eta,
                steps,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Gradient;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state_with_vhat(v_hat: &[f64], cfg: &OptimizerConfig) -> MomentState {
        // one adam step: v = (1 - beta2) * g^2, v_hat = g^2, so feed g = sqrt(v_hat)
        let g: Vec<f64> = v_hat.iter().map(|v| v.sqrt()).collect();
        let d = g.len();
        let mut state = MomentState::new(d);
        state
            .update_moments(&Gradient::new(g, vec![(1, d)]).unwrap(), cfg)
            .unwrap();
        state
    }

    fn theta(values: Vec<f64>) -> ParamVector {
        let d = values.len();
        ParamVector::new(values, vec![(1, d)]).unwrap()
    }

    #[test]
    fn flat_curvature_recovers_the_prior_exactly() {
        let cfg = OptimizerConfig::adam(0.1);
        let prior = PriorConfig::new(0.1).unwrap();
        let n = EffectiveN::fixed(1e6).unwrap();
        let state = state_with_vhat(&[0.0, 4.0], &cfg);
        let post =
            extract_posterior(&theta(vec![3.0, 2.0]), &state, &cfg, &prior, &n).unwrap();
        assert_eq!(post.mean()[0], 0.0);
        assert_eq!(post.variance()[0], 0.1 * 0.1);
    }

    #[test]
    fn strong_curvature_collapses_onto_point_estimate() {
        let cfg = OptimizerConfig::adam(0.1);
        let prior = PriorConfig::new(1.0).unwrap();
        let n = EffectiveN::fixed(1e12).unwrap();
        let state = state_with_vhat(&[1.0], &cfg);
        let post = extract_posterior(&theta(vec![2.0]), &state, &cfg, &prior, &n).unwrap();
        assert_relative_eq!(post.mean()[0], 2.0, max_relative = 1e-10);
        assert!(post.variance()[0] < 1e-11);
    }

    #[test]
    fn unit_case_matches_direct_substitution() {
        // theta = 2, s = 1, N = 1, sigma = 1: mean = 1/(1+1)*2 = 1, var = 1/2
        let cfg = OptimizerConfig::adam(0.1);
        let prior = PriorConfig::new(1.0).unwrap();
        let n = EffectiveN::fixed(1.0).unwrap();
        let state = state_with_vhat(&[1.0], &cfg);
        let post = extract_posterior(&theta(vec![2.0]), &state, &cfg, &prior, &n).unwrap();
        assert_relative_eq!(post.mean()[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(post.variance()[0], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn extract_requires_observed_gradients() {
        let cfg = OptimizerConfig::adam(0.1);
        let prior = PriorConfig::default();
        let n = EffectiveN::fixed(10.0).unwrap();
        let state = MomentState::new(1);
        assert!(matches!(
            extract_posterior(&theta(vec![1.0]), &state, &cfg, &prior, &n),
            Err(crate::error::Error::Contract(_))
        ));
    }

    #[test]
    fn shrinkage_examples() {
        let cfg = OptimizerConfig::adam(0.1);
        let n = EffectiveN::fixed(1.0).unwrap();

        // s = 0 -> 0
        let state = state_with_vhat(&[0.0], &cfg);
        let prior = PriorConfig::new(1.0).unwrap();
        assert_eq!(shrinkage(&state, &cfg, &prior, &n, 0).unwrap(), 0.0);

        // N*s = 1/sigma^2 -> 0.5
        let state = state_with_vhat(&[1.0], &cfg);
        assert_relative_eq!(
            shrinkage(&state, &cfg, &prior, &n, 0).unwrap(),
            0.5,
            max_relative = 1e-12
        );

        // N = 1e6, s = 1, sigma = 0.1 -> 1e6 / (1e6 + 100)
        let n = EffectiveN::fixed(1e6).unwrap();
        let prior = PriorConfig::new(0.1).unwrap();
        assert_relative_eq!(
            shrinkage(&state, &cfg, &prior, &n, 0).unwrap(),
            0.9999,
            max_relative = 1e-4
        );
    }

    #[test]
    fn sampling_moments_match_the_distribution() {
        let post = GaussianPosterior::new(vec![1.0], vec![0.25], vec![(1, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let draws = post.sample_weights(&mut rng, 100_000);
        let values: Vec<f64> = draws.iter().map(|p| p.values()[0]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (values.len() - 1) as f64;
        let se = 0.5 / (values.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "sample mean {mean}");
        assert!((var - 0.25).abs() < 0.25 * 0.05, "sample variance {var}");
    }

    #[test]
    fn single_sample_has_full_dimension() {
        let post =
            GaussianPosterior::new(vec![0.0; 6], vec![1.0; 6], vec![(2, 2), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = post.sample_weights(&mut rng, 1);
        assert_eq!(draws.len(), 1);
        assert_eq!(draws[0].len(), 6);
    }

    #[test]
    fn floor_variance_samples_concentrate_on_mean() {
        let post = GaussianPosterior::new(
            vec![0.7],
            vec![VARIANCE_FLOOR],
            vec![(1, 1)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for draw in post.sample_weights(&mut rng, 100) {
            assert!((draw.values()[0] - 0.7).abs() < 1e-4);
        }
    }

    #[test]
    fn signal_to_noise_examples() {
        let post = GaussianPosterior::new(
            vec![1.0, -2.0, 0.1],
            vec![1.0, 1.0, 0.0001],
            vec![(1, 3)],
        )
        .unwrap();
        let snr = post.signal_to_noise();
        assert_relative_eq!(snr[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(snr[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(snr[2], 10.0, max_relative = 1e-12);

        let zero_mean =
            GaussianPosterior::new(vec![0.0], vec![1.0], vec![(1, 1)]).unwrap();
        assert_eq!(zero_mean.signal_to_noise(), vec![0.0]);
    }

    #[test]
    fn snr_is_positively_homogeneous_in_the_mean() {
        let mean = vec![0.4, -1.2, 2.0, 0.01];
        let variance = vec![0.3, 0.5, 2.0, 0.1];
        let post =
            GaussianPosterior::new(mean.clone(), variance.clone(), vec![(1, 4)]).unwrap();
        let scaled = GaussianPosterior::new(
            mean.iter().map(|m| 3.0 * m).collect(),
            variance,
            vec![(1, 4)],
        )
        .unwrap();
        let a = post.signal_to_noise();
        let b = scaled.signal_to_noise();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(3.0 * x, *y, max_relative = 1e-12);
        }
        // ordering unchanged
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
            idx
        };
        assert_eq!(order(&a), order(&b));
    }

    #[test]
    fn improper_prior_flat_coordinates_are_always_pruned() {
        let cfg = OptimizerConfig::adam(0.1);
        let prior = PriorConfig {
            sigma_prior: 0.1,
            improper: true,
        };
        let n = EffectiveN::fixed(100.0).unwrap();
        let state = state_with_vhat(&[0.0, 1.0], &cfg);
        let post =
            extract_posterior(&theta(vec![5.0, 2.0]), &state, &cfg, &prior, &n).unwrap();
        // no prior: the curved coordinate keeps its raw point estimate
        assert_relative_eq!(post.mean()[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(post.variance()[1], 0.01, max_relative = 1e-12);
        // the flat coordinate has infinite variance and zero snr
        assert!(post.variance()[0].is_infinite());
        assert_eq!(post.signal_to_noise()[0], 0.0);
    }

    #[test]
    fn predictive_with_point_mass_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net =
            Network::new(vec![1, 4, 1], crate::nn::OutputHead::Linear, 0.0).unwrap();
        net.initialize(crate::nn::WeightInit::Uniform { limit: 0.5 }, &mut rng);
        let post = GaussianPosterior::new(
            net.params().values().to_vec(),
            vec![VARIANCE_FLOOR; net.params().len()],
            net.params().shapes().to_vec(),
        )
        .unwrap();
        let inputs = ndarray::array![[0.2], [0.8]];
        let expected = net.predict(inputs.view()).unwrap();

        let (mean, std) =
            predictive_sample(&net, &post, inputs.view(), 16, 0.0, &mut rng).unwrap();
        for (m, e) in mean.iter().zip(expected.iter()) {
            assert!((m - e).abs() < 1e-4);
        }
        assert!(std.iter().all(|&s| s < 1e-4));

        let (_, std) =
            predictive_sample(&net, &post, inputs.view(), 16, 0.02, &mut rng).unwrap();
        for &s in std.iter() {
            assert_relative_eq!(s, 0.02, max_relative = 1e-4);
        }
    }

    #[test]
    fn predictive_needs_two_samples() {
        let net = Network::new(vec![1, 1], crate::nn::OutputHead::Linear, 0.0).unwrap();
        let post = GaussianPosterior::from_prior(
            &PriorConfig::default(),
            net.params().shapes().to_vec(),
        )
        .unwrap();
        let inputs = ndarray::array![[0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(predictive_sample(&net, &post, inputs.view(), 1, 0.0, &mut rng).is_err());
    }

    #[test]
    fn export_field_order_is_stable() {
        let post = GaussianPosterior::new(vec![1.0], vec![0.5], vec![(1, 1)]).unwrap();
        let cfg = OptimizerConfig::adam(0.1);
        let prior = PriorConfig::default();
        let n = EffectiveN::fixed(10.0).unwrap();
        let export = PosteriorExport::build(&post, &cfg, &prior, &n, 3);
        let json = serde_json::to_string(&export).unwrap();
        let shapes_pos = json.find("\"shapes\"").unwrap();
        let mean_pos = json.find("\"mean\"").unwrap();
        let var_pos = json.find("\"variance\"").unwrap();
        let cfg_pos = json.find("\"config\"").unwrap();
        assert!(shapes_pos < mean_pos && mean_pos < var_pos && var_pos < cfg_pos);
    }
}
