//! Signal-to-noise weight pruning and the dual-phase training schedule.
//!
//! Weights are ranked per coordinate, the lowest fraction `p` is zeroed in the
//! posterior mean, and the pruned point estimate is evaluated directly (no
//! predictive sampling, no re-training). The baseline criterion ranks by
//! `|mean|` alone, which is what the signal-to-noise ratio degenerates to
//! under constant unit variances.

use rand::Rng;
use rayon::prelude::*;

use crate::data::{LabeledDataset, Labels};
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, Network, ParamVector, WeightInit};
use crate::optim::{train_network, MomentState, OptimizerConfig, TrainConfig};
use crate::posterior::{extract_posterior, EffectiveN, EffectiveNMode, GaussianPosterior, PriorConfig};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneCriterion {
    Snr,
    MagnitudeConstVar,
}

impl PruneCriterion {
    pub fn name(&self) -> &'static str {
        match self {
            PruneCriterion::Snr => "snr",
            PruneCriterion::MagnitudeConstVar => "magnitude_const_var",
        }
    }
}

/// What to prune and over which seeds.
#[derive(Debug, Clone)]
pub struct PruneSpec {
    /// Strictly ascending fractions in `[0, 1]`.
    pub fractions: Vec<f64>,
    pub criteria: Vec<PruneCriterion>,
    pub seeds: Vec<u64>,
}

impl PruneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::Contract("at least one pruning fraction required".into()));
        }
        for pair in self.fractions.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Contract(
                    "pruning fractions must be strictly ascending".into(),
                ));
            }
        }
        if self
            .fractions
            .iter()
            .any(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Contract("pruning fractions must lie in [0, 1]".into()));
        }
        if self.criteria.is_empty() {
            return Err(Error::Contract("at least one pruning criterion required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Contract("at least one seed required".into()));
        }
        Ok(())
    }
}

/// Number of coordinates pruned at fraction `p`: the mathematical
/// `floor(p * d)`, robust to the product landing a few ulps under an integer.
fn prune_count(p: f64, d: usize) -> usize {
    let t = p * d as f64;
    let rounded = t.round();
    if (t - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        t.floor() as usize
    }
}

/// Zero the `floor(p*d)` lowest-scoring coordinates of the posterior mean.
///
/// Ties break by ascending coordinate index, so prune sets are nested across
/// increasing `p`. The stored posterior is never mutated.
pub fn prune(post: &GaussianPosterior, p: f64, criterion: PruneCriterion) -> Result<ParamVector> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!("pruning fraction {p} outside [0, 1]")));
    }
    let scores = match criterion {
        PruneCriterion::Snr => post.signal_to_noise(),
        PruneCriterion::MagnitudeConstVar => post.mean().iter().map(|m| m.abs()).collect(),
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let mut pruned = post.mean_params();
    for &i in order.iter().take(prune_count(p, scores.len())) {
        pruned.values_mut()[i] = 0.0;
    }
    Ok(pruned)
}

/// Fraction of test rows whose argmax prediction matches the label.
pub fn classification_accuracy(net: &Network, data: &LabeledDataset) -> Result<f64> {
    let labels = match &data.labels {
        Labels::Classes(c) => c,
        Labels::Targets(_) => {
            return Err(Error::Contract("accuracy needs class labels".into()))
        }
    };
    let outputs = net.predict(data.features.view())?;
    let predicted = argmax_rows(outputs.view());
    let correct = predicted
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// One optimization phase of the dual schedule.
#[derive(Debug, Clone, Copy)]
pub struct Phase {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, Copy)]
pub struct DualPhaseSchedule {
    pub phase1: Phase,
    pub phase2: Phase,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
}

#[derive(Debug)]
pub struct DualPhaseResult {
    pub net: Network,
    /// Moment state of the curvature phase only (phase 2 restarts from zero).
    pub state: MomentState,
    pub phase1_losses: Vec<f64>,
    pub phase2_losses: Vec<f64>,
}

/// Train to a good optimum, then restart the moments and run a second pass to
/// pick up curvature around it. Phase 2 always runs with the learning-rate
/// bias correction removed; its step counter is what feeds the `N = t * batch`
/// heuristic afterwards.
pub fn dual_phase_train<R: Rng>(
    mut net: Network,
    train: &LabeledDataset,
    schedule: &DualPhaseSchedule,
    rng: &mut R,
) -> Result<DualPhaseResult> {
    let kind = match &train.labels {
        Labels::Classes(_) => crate::nn::LossKind::SoftmaxCrossEntropy,
        Labels::Targets(_) => crate::nn::LossKind::Mse,
    };
    let tc1 = TrainConfig {
        epochs: schedule.phase1.epochs,
        batch_size: schedule.batch_size,
        clip_norm: schedule.clip_norm,
    };
    let mut state = MomentState::new(net.params().len());
    let phase1_losses = train_network(
        &mut net,
        &mut state,
        &schedule.phase1.optimizer,
        &tc1,
        train.features.view(),
        train.targets_ref(),
        kind,
        rng,
    )?;

    let mut phase2_opt = schedule.phase2.optimizer;
    phase2_opt.bias_correct_lr = false;
    let tc2 = TrainConfig {
        epochs: schedule.phase2.epochs,
        batch_size: schedule.batch_size,
        clip_norm: schedule.clip_norm,
    };
    let mut state = MomentState::new(net.params().len());
    let phase2_losses = train_network(
        &mut net,
        &mut state,
        &phase2_opt,
        &tc2,
        train.features.view(),
        train.targets_ref(),
        kind,
        rng,
    )?;

    Ok(DualPhaseResult {
        net,
        state,
        phase1_losses,
        phase2_losses,
    })
}

/// Everything needed to train one pruning model per seed.
#[derive(Debug, Clone)]
pub struct PruneTask {
    pub layer_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub init: WeightInit,
    pub schedule: DualPhaseSchedule,
    pub prior: PriorConfig,
    pub n_mode: EffectiveNMode,
    pub n_fixed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneCurveRow {
    pub criterion: PruneCriterion,
    pub p: f64,
    pub acc_mean: f64,
    pub acc_stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSeedAccuracy {
    pub seed: u64,
    pub criterion: PruneCriterion,
    pub p: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct PruneCurve {
    /// One row per (criterion, p), aggregated over seeds.
    pub rows: Vec<PruneCurveRow>,
    pub per_seed: Vec<PruneSeedAccuracy>,
    /// Mean training loss per epoch, per seed (phase 1 then phase 2).
    pub losses: Vec<(u64, Vec<f64>)>,
}

/// Train per seed, extract the posterior, trace accuracy over the pruning
/// fractions under every criterion, and aggregate mean and standard error
/// across seeds.
pub fn prune_curve(
    task: &PruneTask,
    train: &LabeledDataset,
    test: &LabeledDataset,
    spec: &PruneSpec,
) -> Result<PruneCurve> {
    spec.validate()?;
    let per_seed_results: Vec<Result<(Vec<PruneSeedAccuracy>, Vec<f64>)>> = spec
        .seeds
        .par_iter()
        .map(|&seed| run_prune_seed(task, train, test, spec, seed))
        .collect();

    let mut per_seed = Vec::new();
    let mut losses = Vec::new();
    for (seed, result) in spec.seeds.iter().zip(per_seed_results) {
        let (accs, seed_losses) = result?;
        per_seed.extend(accs);
        losses.push((*seed, seed_losses));
    }

    let n = spec.seeds.len() as f64;
    let mut rows = Vec::new();
    for &criterion in &spec.criteria {
        for &p in &spec.fractions {
            let values: Vec<f64> = per_seed
                .iter()
                .filter(|r| r.criterion == criterion && r.p == p)
                .map(|r| r.accuracy)
                .collect();
            let mean = values.iter().sum::<f64>() / n;
            let stderr = if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            rows.push(PruneCurveRow {
                criterion,
                p,
                acc_mean: mean,
                acc_stderr: stderr,
            });
        }
    }
    Ok(PruneCurve {
        rows,
        per_seed,
        losses,
    })
}

fn run_prune_seed(
    task: &PruneTask,
    train: &LabeledDataset,
    test: &LabeledDataset,
    spec: &PruneSpec,
    seed: u64,
) -> Result<(Vec<PruneSeedAccuracy>, Vec<f64>)> {
    let mut init_rng = rng_for(seed, &["prune", "init"]);
    let mut net = Network::new(
        task.layer_sizes.clone(),
        crate::nn::OutputHead::Softmax,
        task.dropout_rate,
    )?;
    net.initialize(task.init, &mut init_rng);

    let mut train_rng = rng_for(seed, &["prune", "train"]);
    let result = dual_phase_train(net, train, &task.schedule, &mut train_rng)?;

    let n = EffectiveN::resolve(
        task.n_mode,
        task.n_fixed,
        result.state.t(),
        task.schedule.batch_size,
    )?;
    let post = extract_posterior(
        result.net.params(),
        &result.state,
        &{
            let mut opt = task.schedule.phase2.optimizer;
            opt.bias_correct_lr = false;
            opt
        },
        &task.prior,
        &n,
    )?;

    let mut eval_net = result.net.clone();
    let mut accs = Vec::new();
    for &criterion in &spec.criteria {
        for &p in &spec.fractions {
            let pruned = prune(&post, p, criterion)?;
            eval_net.set_params(pruned)?;
            let accuracy = classification_accuracy(&eval_net, test)?;
            accs.push(PruneSeedAccuracy {
                seed,
                criterion,
                p,
                accuracy,
            });
        }
    }
    let mut all_losses = result.phase1_losses;
    all_losses.extend(result.phase2_losses);
    Ok((accs, all_losses))
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        /// Smaller fractions prune a subset of what larger fractions prune.
        #[test]
        fn prune_sets_are_nested(
            mean in proptest::collection::vec(-3.0f64..3.0, 2..24),
            p1 in 0.0f64..1.0,
            p2 in 0.0f64..1.0,
        ) {
            let d = mean.len();
            let variance: Vec<f64> = (0..d).map(|i| 0.1 + 0.05 * i as f64).collect();
            let post = GaussianPosterior::new(mean, variance, vec![(1, d)]).unwrap();
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let a = prune(&post, lo, PruneCriterion::Snr).unwrap();
            let b = prune(&post, hi, PruneCriterion::Snr).unwrap();
            for i in 0..d {
                if a.values()[i] == 0.0 && post.mean()[i] != 0.0 {
                    prop_assert_eq!(b.values()[i], 0.0);
                }
            }
        }

        #[test]
        fn exactly_floor_p_d_coordinates_are_zeroed(
            mean in proptest::collection::vec(0.5f64..3.0, 1..32),
            p in 0.0f64..1.0,
        ) {
            let d = mean.len();
            let post = GaussianPosterior::new(mean, vec![1.0; d], vec![(1, d)]).unwrap();
            let pruned = prune(&post, p, PruneCriterion::Snr).unwrap();
            let zeros = pruned.values().iter().filter(|&&v| v == 0.0).count();
            prop_assert_eq!(zeros, super::prune_count(p, d));
        }

        /// Constant-variance pruning and an independent |mean| ranking select
        /// identical index sets.
        #[test]
        fn baseline_equals_absolute_mean_ranking(
            mean in proptest::collection::vec(-3.0f64..3.0, 2..24),
            p in 0.0f64..1.0,
        ) {
            let d = mean.len();
            let variance: Vec<f64> = (0..d).map(|i| 0.2 + 0.3 * i as f64).collect();
            let post = GaussianPosterior::new(mean.clone(), variance, vec![(1, d)]).unwrap();
            let pruned = prune(&post, p, PruneCriterion::MagnitudeConstVar).unwrap();

            let mut idx: Vec<usize> = (0..d).collect();
            idx.sort_by(|&a, &b| mean[a].abs().total_cmp(&mean[b].abs()).then(a.cmp(&b)));
            let expected: std::collections::HashSet<usize> =
                idx.into_iter().take(super::prune_count(p, d)).collect();
            for i in 0..d {
                if expected.contains(&i) {
                    prop_assert_eq!(pruned.values()[i], 0.0);
                } else {
                    prop_assert_eq!(pruned.values()[i], mean[i]);
                }
            }
        }
    }
}
