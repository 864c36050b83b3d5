use std::collections::BTreeSet;

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::{Activation, DanConfig};
use super::model::{dan_backward, dan_loss, stack_trials, DanModel, Mode};
use super::pairs::{check_stimuli, make_pairs_tagged, TrainPair};
use crate::data::EpochSet;
use crate::error::{Error, Result};
use crate::rng;

/// How pairs are divided into training and validation sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// Whole source subjects are held out.
    SubjectWise,
    /// Individual pairs are held out.
    PairWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean training loss over the epoch; `None` for epoch 0 (before any
    /// update).
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct PhaseResult {
    /// Snapshot with the lowest validation loss, in inference mode.
    pub model: DanModel,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl PhaseResult {
    pub fn best_val_loss(&self) -> f64 {
        self.history[self.best_epoch].val_loss
    }
}

fn n_held_out(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Indices of the training and validation pairs.
pub fn split_pairs(
    pairs: &[TrainPair],
    split: Split,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let mut r = rng::stream(seed, &[rng::tag("val-split")]);
    match split {
        Split::SubjectWise => {
            let subjects: BTreeSet<usize> = pairs.iter().map(|p| p.source).collect();
            if subjects.len() < 2 {
                return Err(Error::config(
                    "split",
                    "a subject-wise split needs at least 2 source subjects",
                ));
            }
            let mut order: Vec<usize> = subjects.into_iter().collect();
            order.shuffle(&mut r);
            let held: BTreeSet<usize> = order[..n_held_out(order.len(), val_fraction)]
                .iter()
                .copied()
                .collect();
            let (val, train): (Vec<usize>, Vec<usize>) =
                (0..pairs.len()).partition(|&i| held.contains(&pairs[i].source));
            Ok((train, val))
        }
        Split::PairWise => {
            let all: Vec<usize> = (0..pairs.len()).collect();
            if pairs.len() < 2 {
                return Ok((all.clone(), all));
            }
            let mut order = all;
            order.shuffle(&mut r);
            let n_val = n_held_out(order.len(), val_fraction);
            let mut val = order[..n_val].to_vec();
            let mut train = order[n_val..].to_vec();
            val.sort_unstable();
            train.sort_unstable();
            Ok((train, val))
        }
    }
}

fn stack_batch(pairs: &[TrainPair], idx: &[usize]) -> Result<(Array2<f64>, Array2<f64>)> {
    let x = stack_trials(idx.iter().map(|&i| pairs[i].x.view()))?;
    let y = stack_trials(idx.iter().map(|&i| pairs[i].y.view()))?;
    Ok((x, y))
}

/// Mean per-pair loss of `model` (inference mode) over `idx`.
pub fn evaluate_loss(model: &DanModel, pairs: &[TrainPair], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let m = DanModel {
        mode: Mode::Infer,
        ..model.clone()
    };
    let mut total = 0.0;
    for chunk in idx.chunks(m.config.batch_size.max(1)) {
        let (x, y) = stack_batch(pairs, chunk)?;
        let out = m.forward_stacked(x, chunk.len())?;
        total += dan_loss(out.output(), &y, chunk.len())? * chunk.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

/// Mini-batch Adam training from `model` for `epochs` epochs. Returns the
/// snapshot with the lowest validation loss, where epoch 0 is the starting
/// model. Learning rate and batch size come from `model.config`.
pub fn train_phase(
    model: &DanModel,
    pairs: &[TrainPair],
    epochs: usize,
    split: Split,
    seed: u64,
) -> Result<PhaseResult> {
    let (train, val) = split_pairs(pairs, split, model.config.val_fraction, seed)?;
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let lr = model.config.learning_rate;
    let bs = model.config.batch_size;
    let mut current = model.clone().with_mode(Mode::Train);
    let mut adam = AdamState::new(&current.params);
    let first = evaluate_loss(&current, pairs, &val)?;
    let mut history = vec![EpochLoss {
        epoch: 0,
        train_loss: None,
        val_loss: first,
    }];
    let mut best = (0, first, current.clone());
    let mut order = train;
    for epoch in 1..=epochs {
        let mut r = rng::stream(seed, &[rng::tag("epoch"), epoch as u64]);
        order.shuffle(&mut r);
        let mut sum = 0.0;
        for chunk in order.chunks(bs) {
            let (x, y) = stack_batch(pairs, chunk)?;
            let cache = current.forward_stacked(x.clone(), chunk.len())?;
            let (grads, loss) = dan_backward(&current, &x, &y, &cache)?;
            adam_step(&mut current.params, &grads, &mut adam, lr)?;
            current.update_running_stats(&cache);
            sum += loss * chunk.len() as f64;
        }
        let val_loss = evaluate_loss(&current, pairs, &val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        history.push(EpochLoss {
            epoch,
            train_loss: Some(sum / order.len() as f64),
            val_loss,
        });
        if val_loss < best.1 {
            best = (epoch, val_loss, current.clone());
        }
    }
    log::debug!(
        "phase: {} epochs, best epoch {} (val {:.4e})",
        epochs,
        best.0,
        best.1
    );
    Ok(PhaseResult {
        model: best.2.with_mode(Mode::Infer),
        history,
        best_epoch: best.0,
    })
}

/// Result of two-phase training.
#[derive(Debug, Clone)]
pub struct DanFit {
    pub pretrained: DanModel,
    /// One fine-tuned model per source, in input order.
    pub per_source: Vec<DanModel>,
    pub pretrain: PhaseResult,
    pub finetune: Vec<PhaseResult>,
    /// Set when only one source was available: pre-training then used a
    /// pair-wise split on that source.
    pub single_source_fallback: bool,
}

fn resolve_config(sources: &[&EpochSet], target_calib: &EpochSet, config: &DanConfig) -> Result<DanConfig> {
    let first = sources.first().ok_or(Error::EmptyTrainSet)?;
    for s in sources {
        if s.n_channels() != first.n_channels() || s.n_samples() != first.n_samples() {
            return Err(Error::ShapeMismatch(format!(
                "source `{}` is {}x{}, `{}` is {}x{}",
                s.subject_id,
                s.n_channels(),
                s.n_samples(),
                first.subject_id,
                first.n_channels(),
                first.n_samples()
            )));
        }
    }
    let cfg = config
        .clone()
        .with_shape(first.n_channels(), target_calib.n_channels(), first.n_samples());
    cfg.validate()?;
    Ok(cfg)
}

fn collect_pairs(sources: &[&EpochSet], target_calib: &EpochSet) -> Result<Vec<Vec<TrainPair>>> {
    sources
        .iter()
        .enumerate()
        .map(|(k, s)| make_pairs_tagged(s, target_calib, k))
        .collect()
}

fn two_phase(per_source: Vec<Vec<TrainPair>>, cfg: &DanConfig, seed: u64) -> Result<DanFit> {
    let init = DanModel::init(cfg, rng::derive_seed(seed, &[rng::tag("init")]))?;
    let single = per_source.len() == 1;
    let pooled: Vec<TrainPair> = per_source.iter().flatten().cloned().collect();
    if pooled.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let split = if single { Split::PairWise } else { Split::SubjectWise };
    if single {
        log::warn!("single source subject: pre-training with a pair-wise split");
    }
    let pretrain = train_phase(
        &init,
        &pooled,
        cfg.pretrain_epochs,
        split,
        rng::derive_seed(seed, &[rng::tag("pretrain")]),
    )?;
    let mut finetune = Vec::with_capacity(per_source.len());
    for (k, pairs) in per_source.iter().enumerate() {
        let res = if pairs.is_empty() {
            PhaseResult {
                model: pretrain.model.clone(),
                history: Vec::new(),
                best_epoch: 0,
            }
        } else {
            train_phase(
                &pretrain.model,
                pairs,
                cfg.finetune_epochs,
                Split::PairWise,
                rng::derive_seed(seed, &[rng::tag("finetune"), k as u64]),
            )?
        };
        finetune.push(res);
    }
    Ok(DanFit {
        pretrained: pretrain.model.clone(),
        per_source: finetune.iter().map(|r| r.model.clone()).collect(),
        pretrain,
        finetune,
        single_source_fallback: single,
    })
}

/// Pre-trains one network on the pooled pairs of all sources (subject-wise
/// split), then fine-tunes a copy on each source's own pairs (pair-wise
/// split). Shapes are taken from the data; `config` supplies the rest.
pub fn pretrain_then_finetune(
    sources: &[&EpochSet],
    target_calib: &EpochSet,
    config: &DanConfig,
) -> Result<DanFit> {
    let cfg = resolve_config(sources, target_calib, config)?;
    let pairs = collect_pairs(sources, target_calib)?;
    two_phase(pairs, &cfg, config.seed)
}

/// Maps every trial through `model` in inference mode. Labels and stimulus
/// tables are kept; the subject id becomes `"{source}→{target}"`.
pub fn align_transform(model: &DanModel, source: &EpochSet, target_id: &str) -> Result<EpochSet> {
    let cfg = &model.config;
    if source.n_channels() != cfg.n_in_channels || source.n_samples() != cfg.n_samples {
        return Err(Error::ShapeMismatch(format!(
            "model expects {}x{} trials, `{}` has {}x{}",
            cfg.n_in_channels,
            cfg.n_samples,
            source.subject_id,
            source.n_channels(),
            source.n_samples()
        )));
    }
    let infer = model.clone().with_mode(Mode::Infer);
    let n = source.n_trials();
    let s = cfg.n_samples;
    let mut out = Array3::zeros((n, cfg.n_out_channels, s));
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(64) {
        let x = stack_trials(chunk.iter().map(|&i| source.trial(i)))?;
        let y = infer.forward_stacked(x, chunk.len())?;
        for (j, &i) in chunk.iter().enumerate() {
            out.index_axis_mut(Axis(0), i)
                .assign(&y.trial_output(j));
        }
    }
    let mut set = source.with_trials(out);
    set.subject_id = format!("{}→{}", source.subject_id, target_id);
    if set.channel_names.len() != cfg.n_out_channels {
        set.channel_names = (0..cfg.n_out_channels).map(|i| format!("Ch{i}")).collect();
    }
    Ok(set)
}

/// Full method and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DanVariant {
    Full,
    /// One network per stimulus instead of one shared across stimuli.
    NoStimIndep,
    /// Each source trained from scratch on its own pairs.
    NoPretrain,
    /// The pre-trained network is used for every source.
    NoFinetune,
    /// Identity in place of tanh.
    NoTanh,
}

#[derive(Debug, Clone)]
enum Routing {
    PerSource(Vec<DanModel>),
    /// `[source][stimulus]`
    PerSourceStimulus(Vec<Vec<Option<DanModel>>>),
}

/// Trained alignment networks for a list of sources.
#[derive(Debug, Clone)]
pub struct AlignmentModels {
    pub variant: DanVariant,
    routing: Routing,
    pub single_source_fallback: bool,
}

impl AlignmentModels {
    pub fn n_sources(&self) -> usize {
        match &self.routing {
            Routing::PerSource(m) => m.len(),
            Routing::PerSourceStimulus(m) => m.len(),
        }
    }

    /// The network for source `k`, when one network covers all stimuli.
    pub fn model(&self, k: usize) -> Option<&DanModel> {
        match &self.routing {
            Routing::PerSource(m) => m.get(k),
            Routing::PerSourceStimulus(_) => None,
        }
    }

    /// Transforms source `k` with the network(s) fitted for it.
    pub fn transform(&self, k: usize, source: &EpochSet, target_id: &str) -> Result<EpochSet> {
        match &self.routing {
            Routing::PerSource(models) => {
                let m = models.get(k).ok_or(Error::EmptyTrainSet)?;
                align_transform(m, source, target_id)
            }
            Routing::PerSourceStimulus(models) => {
                let per_stim = models.get(k).ok_or(Error::EmptyTrainSet)?;
                let mut parts: Vec<(Vec<usize>, EpochSet)> = Vec::new();
                for (stim, m) in per_stim.iter().enumerate() {
                    let idx = source.indices_of(stim);
                    if idx.is_empty() {
                        continue;
                    }
                    let m = m.as_ref().ok_or(Error::MissingStimulusTransform(stim))?;
                    parts.push((idx.clone(), align_transform(m, &source.subset(&idx), target_id)?));
                }
                let first = parts.first().ok_or(Error::Empty)?;
                let mut out = Array3::zeros((
                    source.n_trials(),
                    first.1.n_channels(),
                    source.n_samples(),
                ));
                for (idx, set) in &parts {
                    for (j, &i) in idx.iter().enumerate() {
                        out.index_axis_mut(Axis(0), i).assign(&set.trial(j));
                    }
                }
                let mut set = first.1.with_trials(out);
                set.labels = source.labels.clone();
                Ok(set)
            }
        }
    }
}

/// Trains the networks of `variant` for every source.
pub fn fit_alignment(
    sources: &[&EpochSet],
    target_calib: &EpochSet,
    config: &DanConfig,
    variant: DanVariant,
) -> Result<AlignmentModels> {
    let mut cfg = resolve_config(sources, target_calib, config)?;
    if variant == DanVariant::NoTanh {
        cfg.activation = Activation::Identity;
    }
    for s in sources {
        check_stimuli(s, target_calib)?;
    }
    let seed = config.seed;
    let (routing, fallback) = match variant {
        DanVariant::Full | DanVariant::NoTanh => {
            let fit = two_phase(collect_pairs(sources, target_calib)?, &cfg, seed)?;
            (Routing::PerSource(fit.per_source), fit.single_source_fallback)
        }
        DanVariant::NoFinetune => {
            let fit = two_phase(
                collect_pairs(sources, target_calib)?,
                &DanConfig {
                    finetune_epochs: 0,
                    ..cfg
                },
                seed,
            )?;
            (
                Routing::PerSource(vec![fit.pretrained; sources.len()]),
                fit.single_source_fallback,
            )
        }
        DanVariant::NoPretrain => {
            let pairs = collect_pairs(sources, target_calib)?;
            let mut models = Vec::with_capacity(pairs.len());
            for (k, p) in pairs.iter().enumerate() {
                let init = DanModel::init(&cfg, rng::derive_seed(seed, &[rng::tag("init"), k as u64]))?;
                let res = train_phase(
                    &init,
                    p,
                    cfg.pretrain_epochs,
                    Split::PairWise,
                    rng::derive_seed(seed, &[rng::tag("scratch"), k as u64]),
                )?;
                models.push(res.model);
            }
            (Routing::PerSource(models), false)
        }
        DanVariant::NoStimIndep => {
            let pairs = collect_pairs(sources, target_calib)?;
            let n_stim = target_calib.n_stimuli();
            let mut models = vec![vec![None; n_stim]; sources.len()];
            let mut fallback = false;
            for stim in 0..n_stim {
                let per_source: Vec<Vec<TrainPair>> = pairs
                    .iter()
                    .map(|p| p.iter().filter(|q| q.stimulus == stim).cloned().collect())
                    .collect();
                if per_source.iter().all(|p| p.is_empty()) {
                    continue;
                }
                let fit = two_phase(per_source, &cfg, rng::derive_seed(seed, &[rng::tag("stimulus"), stim as u64]))?;
                fallback |= fit.single_source_fallback;
                for (k, m) in fit.per_source.into_iter().enumerate() {
                    models[k][stim] = Some(m);
                }
            }
            (Routing::PerSourceStimulus(models), fallback)
        }
    };
    Ok(AlignmentModels {
        variant,
        routing,
        single_source_fallback: fallback,
    })
}
