//! Mini-batch SGD with momentum, plateau learning-rate decay, a held-out
//! validation split and staged growth of the dict head.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{is_correct, Target};
use super::network::Network;
use super::spec::HeadSpec;
use super::tensor::Tensor;
use crate::corpus::GramWeights;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate multiplier applied on a validation-loss plateau.
    pub decay_factor: f64,
    /// Epochs without validation improvement before decaying.
    pub patience: usize,
    /// Overrides the rate of every dropout layer when set.
    pub dropout: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs per stage.
    pub epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// Class-count increments for dict training; empty means one stage.
    pub schedule: Vec<usize>,
    /// Standard deviation of head rows added at an expansion.
    pub new_class_init: f64,
    /// Evaluate loss and error on the stage training set after every epoch.
    pub track_fit: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 0.01,
            decay_factor: 0.1,
            patience: 3,
            dropout: None,
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 10,
            seed: 0,
            val_fraction: 0.1,
            schedule: Vec::new(),
            new_class_init: 1e-2,
            track_fit: false,
        }
    }
}

/// One training example: a flattened input item and its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Vec<f32>,
    pub target: Target,
}

/// Mean loss and error rate of a network over a sample set, inference mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub loss: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based, counted across stages.
    pub epoch: usize,
    pub stage_classes: usize,
    /// Mean training-mode loss over the epoch's batches.
    pub train_loss: f64,
    /// Running training-mode error over the epoch.
    pub train_error: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    /// Inference-mode fit on the stage training set, when tracked.
    pub fit: Option<Fit>,
}

/// Head growth between two stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    /// Epochs completed before the expansion.
    pub after_epoch: usize,
    pub from: usize,
    pub to: usize,
    /// Fit on the old stage's training samples just before growing.
    pub before: Fit,
    /// Fit on the new stage's training samples just after growing.
    pub after: Fit,
    /// Largest change of an old-class logit on the probe batch.
    pub max_old_logit_change: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub expansions: Vec<Expansion>,
}

impl TrainLog {
    /// `epoch stage-classes train-loss val-loss val-acc lr`, tab separated;
    /// expansions appear as `#` comment lines at their position.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let mut exp = self.expansions.iter().peekable();
        for r in &self.records {
            while let Some(e) = exp.next_if(|e| e.after_epoch < r.epoch) {
                write_expansion(&mut out, e);
            }
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:e}",
                r.epoch, r.stage_classes, r.train_loss, r.val_loss, r.val_acc, r.lr
            );
        }
        for e in exp {
            write_expansion(&mut out, e);
        }
        out
    }
}

fn write_expansion(out: &mut String, e: &Expansion) {
    let _ = writeln!(
        out,
        "# expand {} -> {}: train error {:.4} -> {:.4}, train loss {:.4} -> {:.4}, old logit change {:e}",
        e.from, e.to, e.before.error, e.after.error, e.before.loss, e.after.loss, e.max_old_logit_change
    );
}

/// Plain training: one stage over every sample.
pub fn sgd_train(
    net: &mut Network<f32>,
    data: &[Sample],
    config: &TrainConfig,
    gram_weights: Option<&GramWeights>,
) -> Result<TrainLog> {
    let classes = match net.head_spec() {
        HeadSpec::Dict { classes } => *classes,
        _ => 0,
    };
    let mut cfg = config.clone();
    cfg.schedule = if classes > 0 { vec![classes] } else { Vec::new() };
    run(net, data, &cfg, gram_weights)
}

/// Dict training in stages. The network's head must start at
/// `schedule[0]` classes; stage `k` trains on samples whose class is below
/// the cumulative sum of the first `k + 1` increments.
pub fn incremental_train(
    net: &mut Network<f32>,
    data: &[Sample],
    lexicon_size: usize,
    config: &TrainConfig,
) -> Result<TrainLog> {
    let total: usize = config.schedule.iter().sum();
    if config.schedule.is_empty() || config.schedule.contains(&0) {
        return Err(Error::Config("incremental schedule needs positive increments".into()));
    }
    if total != lexicon_size {
        return Err(Error::Config(format!(
            "schedule covers {total} classes, lexicon has {lexicon_size}"
        )));
    }
    match net.head_spec() {
        HeadSpec::Dict { classes } if *classes == config.schedule[0] => {}
        HeadSpec::Dict { classes } => {
            return Err(Error::Config(format!(
                "dict head has {classes} classes, schedule starts at {}",
                config.schedule[0]
            )))
        }
        other => {
            return Err(Error::HeadMismatch {
                model: other.name().into(),
                requested: "dict".into(),
            })
        }
    }
    run(net, data, config, None)
}

fn check_batch(head: &HeadSpec, classes: usize, batch: usize) -> Result<()> {
    if matches!(head, HeadSpec::Dict { .. }) && batch * 5 < classes {
        return Err(Error::Config(format!(
            "batch size {batch} is below a fifth of {classes} classes"
        )));
    }
    Ok(())
}

fn validate(config: &TrainConfig) -> Result<()> {
    let bad = |m: &str| Err(Error::Config(m.into()));
    if config.batch_size == 0 {
        return bad("batch size must be >= 1");
    }
    if !(config.learning_rate > 0.0) {
        return bad("learning rate must be > 0");
    }
    if !(0.0..1.0).contains(&config.momentum) {
        return bad("momentum must be in [0, 1)");
    }
    if !(0.0..1.0).contains(&config.val_fraction) {
        return bad("validation fraction must be in [0, 1)");
    }
    if let Some(r) = config.dropout {
        if !(0.0..1.0).contains(&r) {
            return bad("dropout must be in [0, 1)");
        }
    }
    Ok(())
}

fn class_of(t: &Target) -> usize {
    match t {
        Target::Dict(c) => *c,
        _ => 0,
    }
}

fn run(
    net: &mut Network<f32>,
    data: &[Sample],
    config: &TrainConfig,
    gram_weights: Option<&GramWeights>,
) -> Result<TrainLog> {
    validate(config)?;
    if data.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let item: usize = net.spec().input.iter().product();
    if let Some(s) = data.iter().find(|s| s.image.len() != item) {
        return Err(Error::Shape(format!(
            "sample has {} values, network input needs {item}",
            s.image.len()
        )));
    }
    let head = *net.head_spec();
    for s in data {
        let ok = match (&head, &s.target) {
            (HeadSpec::Dict { .. }, Target::Dict(c)) => *c < config.schedule.iter().sum::<usize>(),
            (HeadSpec::CharSeq, Target::CharSeq(_)) => true,
            (HeadSpec::NGram { grams }, Target::NGram(t)) => t.dim == *grams,
            _ => false,
        };
        if !ok {
            return Err(Error::Shape(format!(
                "sample target {:?} does not fit the {} head",
                s.target,
                head.name()
            )));
        }
    }
    let weights = gram_weights.map(|g| g.weights.as_slice());
    if let (HeadSpec::NGram { grams }, Some(w)) = (&head, weights) {
        if w.len() != *grams {
            return Err(Error::Shape(format!("{} gram weights for {grams} outputs", w.len())));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (data.len() as f64 * config.val_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();

    let stages: Vec<usize> = if config.schedule.is_empty() {
        vec![usize::MAX]
    } else {
        config
            .schedule
            .iter()
            .scan(0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    };

    let mut log = TrainLog::default();
    let mut epoch = 0;
    let mut prev_stage: Option<(usize, Vec<usize>)> = None;
    for &classes in &stages {
        let in_stage = |&i: &usize| class_of(&data[i].target) < classes;
        let stage_train: Vec<usize> = train_idx.iter().copied().filter(in_stage).collect();
        let stage_val: Vec<usize> = val_idx.iter().copied().filter(in_stage).collect();
        if stage_train.is_empty() {
            return Err(Error::Config(format!("no training samples below class {classes}")));
        }
        let shown = if classes == usize::MAX { head.outputs() } else { classes };
        check_batch(&head, shown, config.batch_size)?;

        if let Some((old, old_train)) = prev_stage.take() {
            let before = fit(net, data, &old_train, weights)?;
            let probe: Vec<usize> = stage_train.iter().copied().take(32).collect();
            let x = batch_input(net, data, &probe)?;
            let logits_before = net.logits(&x)?;
            net.expand_dict_head(classes, config.new_class_init, &mut rng)?;
            let logits_after = net.logits(&x)?;
            let mut change = 0.0f64;
            for b in 0..probe.len() {
                for (a, o) in logits_after.item(b)[..old].iter().zip(logits_before.item(b)) {
                    change = change.max((a - o).abs() as f64);
                }
            }
            let after = fit(net, data, &stage_train, weights)?;
            log.expansions.push(Expansion {
                after_epoch: epoch,
                from: old,
                to: classes,
                before,
                after,
                max_old_logit_change: change,
            });
        }

        let mut velocity: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        let mut lr = config.learning_rate;
        let mut best = f64::INFINITY;
        let mut stale = 0;
        let mut shuffled = stage_train.clone();
        for _ in 0..config.epochs {
            epoch += 1;
            shuffled.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut wrong = 0usize;
            for batch in shuffled.chunks(config.batch_size) {
                let x = batch_input(net, data, batch)?;
                let targets: Vec<Target> = batch.iter().map(|&i| data[i].target.clone()).collect();
                let (loss, grads, _, trace) =
                    net.loss_grads(&x, &targets, weights, config.dropout, &mut rng)?;
                if !loss.is_finite() {
                    log::error!("training diverged at epoch {epoch}");
                    return Err(Error::Diverged { epoch, loss });
                }
                loss_sum += loss * batch.len() as f64;
                wrong += (0..batch.len())
                    .filter(|&b| !is_correct(&head, trace.logits.item(b), &targets[b]))
                    .count();
                let (lr32, mu, wd) = (lr as f32, config.momentum as f32, config.weight_decay as f32);
                for ((p, g), v) in net.params_mut().into_iter().zip(&grads.0).zip(&mut velocity) {
                    for ((w, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *vi = mu * *vi - lr32 * (gi + wd * *w);
                        *w += *vi;
                    }
                }
            }
            let n = stage_train.len() as f64;
            let (train_loss, train_error) = (loss_sum / n, wrong as f64 / n);
            if !train_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: train_loss,
                });
            }
            let val = if stage_val.is_empty() {
                Fit {
                    loss: f64::NAN,
                    error: f64::NAN,
                }
            } else {
                fit(net, data, &stage_val, weights)?
            };
            let fit_now = if config.track_fit {
                Some(fit(net, data, &stage_train, weights)?)
            } else {
                None
            };
            log::info!(
                "epoch {epoch} classes {shown} train {train_loss:.4} val {:.4} acc {:.4} lr {lr:e}",
                val.loss,
                1.0 - val.error
            );
            log.records.push(EpochRecord {
                epoch,
                stage_classes: shown,
                train_loss,
                train_error,
                val_loss: val.loss,
                val_acc: 1.0 - val.error,
                lr,
                fit: fit_now,
            });
            if val.loss < best {
                best = val.loss;
                stale = 0;
            } else if val.loss.is_finite() {
                stale += 1;
                if stale >= config.patience {
                    lr *= config.decay_factor;
                    stale = 0;
                }
            }
        }
        prev_stage = Some((classes, stage_train));
    }
    Ok(log)
}

fn batch_input(net: &Network<f32>, data: &[Sample], idx: &[usize]) -> Result<Tensor<f32>> {
    let [c, h, w] = net.spec().input;
    let mut v = Vec::with_capacity(idx.len() * c * h * w);
    for &i in idx {
        v.extend_from_slice(&data[i].image);
    }
    Tensor::from_vec(&[idx.len(), c, h, w], v)
}

/// Inference-mode mean loss and error over the given samples.
pub fn fit(
    net: &Network<f32>,
    data: &[Sample],
    idx: &[usize],
    weights: Option<&[f32]>,
) -> Result<Fit> {
    let head = *net.head_spec();
    let mut loss = 0.0;
    let mut wrong = 0;
    for chunk in idx.chunks(128) {
        let x = batch_input(net, data, chunk)?;
        let logits = net.logits(&x)?;
        let targets: Vec<Target> = chunk.iter().map(|&i| data[i].target.clone()).collect();
        loss += net.head_loss(&logits, &targets, weights)?.0 * chunk.len() as f64;
        wrong += (0..chunk.len())
            .filter(|&b| !is_correct(&head, logits.item(b), &targets[b]))
            .count();
    }
    let n = idx.len().max(1) as f64;
    Ok(Fit {
        loss: loss / n,
        error: wrong as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::{LayerSpec, NetworkSpec};
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let c = i % 2;
                let centre = if c == 0 { -1.0 } else { 1.0 };
                let image = (0..8).map(|_| centre + rng.random_range(-0.5..0.5)).collect();
                Sample {
                    image,
                    target: Target::Dict(c),
                }
            })
            .collect()
    }

    fn fc_net(dropout: f64, classes: usize) -> NetworkSpec {
        let mut layers = vec![LayerSpec::Fc { units: 8 }, LayerSpec::Relu];
        if dropout > 0.0 {
            layers.push(LayerSpec::Dropout { rate: dropout });
        }
        NetworkSpec::custom([1, 1, 8], layers, HeadSpec::Dict { classes })
    }

    #[test]
    fn separable_two_class_reaches_full_accuracy() {
        let data = toy(200, 1);
        let mut net = Network::new(&fc_net(0.0, 2), 0).unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            epochs: 200,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        sgd_train(&mut net, &data, &cfg, None).unwrap();
        let all: Vec<usize> = (0..data.len()).collect();
        assert_eq!(fit(&net, &data, &all, None).unwrap().error, 0.0);
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let data = toy(100, 2);
        let cfg = TrainConfig {
            batch_size: 10,
            epochs: 5,
            ..TrainConfig::default()
        };
        let go = |dropout: f64| {
            let mut net = Network::new(&fc_net(dropout, 2), 4).unwrap();
            let log = sgd_train(&mut net, &data, &cfg, None).unwrap();
            (net, log)
        };
        let (a, la) = go(0.5);
        let (b, lb) = go(0.5);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (c, _) = go(0.0);
        let (d, _) = go(0.0);
        assert_eq!(c, d);
        assert_ne!(a, c);
    }

    #[test]
    fn batch_rule_is_enforced_for_dict() {
        let data: Vec<Sample> = (0..60)
            .map(|i| Sample {
                image: vec![i as f32 / 60.0; 8],
                target: Target::Dict(i % 30),
            })
            .collect();
        let mut net = Network::new(&fc_net(0.0, 30), 0).unwrap();
        let small = TrainConfig {
            batch_size: 5,
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(sgd_train(&mut net, &data, &small, None), Err(Error::Config(_))));
        let ok = TrainConfig {
            batch_size: 6,
            ..small
        };
        assert!(sgd_train(&mut net, &data, &ok, None).is_ok());
    }

    #[test]
    fn divergence_aborts() {
        let data = toy(40, 3);
        let mut net = Network::new(&fc_net(0.0, 2), 0).unwrap();
        let cfg = TrainConfig {
            batch_size: 4,
            learning_rate: 1e30,
            epochs: 3,
            ..TrainConfig::default()
        };
        let err = sgd_train(&mut net, &data, &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. } | Error::NonFinite(_)), "{err}");
    }

    #[test]
    fn single_stage_schedule_equals_plain_training() {
        let data = toy(80, 5);
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 4,
            schedule: vec![2],
            ..TrainConfig::default()
        };
        let mut a = Network::new(&fc_net(0.5, 2), 1).unwrap();
        let mut b = a.clone();
        let la = sgd_train(&mut a, &data, &cfg, None).unwrap();
        let lb = incremental_train(&mut b, &data, 2, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn schedule_must_cover_lexicon() {
        let data = toy(20, 6);
        let mut net = Network::new(&fc_net(0.0, 1), 0).unwrap();
        let cfg = TrainConfig {
            schedule: vec![1, 2],
            ..TrainConfig::default()
        };
        assert!(incremental_train(&mut net, &data, 2, &cfg).is_err());
    }

    #[test]
    fn log_tsv_has_six_columns_and_expansion_comments() {
        let data: Vec<Sample> = (0..120)
            .map(|i| {
                let c = i % 4;
                let mut image = vec![0.0; 8];
                image[c * 2] = 1.0;
                image[c * 2 + 1] = 0.5 + (i as f32) * 1e-3;
                Sample {
                    image,
                    target: Target::Dict(c),
                }
            })
            .collect();
        let mut net = Network::new(&fc_net(0.0, 2), 2).unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 3,
            schedule: vec![2, 2],
            track_fit: true,
            ..TrainConfig::default()
        };
        let log = incremental_train(&mut net, &data, 4, &cfg).unwrap();
        assert_eq!(log.records.len(), 6);
        assert_eq!(log.expansions.len(), 1);
        assert_eq!(log.expansions[0].max_old_logit_change, 0.0);
        let tsv = log.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert!(lines[3].starts_with("# expand 2 -> 4"));
        for l in lines.iter().filter(|l| !l.starts_with('#')) {
            assert_eq!(l.split('\t').count(), 6);
        }
    }
}
