use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Cell, EvaluationReport, FoldFailure};
use super::scheme::SchemeId;
use super::task::{Cohort, RunOptions, TaskSpec};
use crate::align::{fit_alignment, lst_fit, lst_transform, DanConfig};
use crate::data::{split_indices, EpochSet, SplitOrder};
use crate::decode::{accuracy, trca_fit, DecodeConfig};
use crate::dsp::FilterBank;
use crate::error::{Error, Result};
use crate::rng;

/// Identity of one recorded trial: (cohort, subject, trial index).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialId {
    pub cohort: String,
    pub subject: String,
    pub index: usize,
}

impl TrialId {
    pub fn for_set(cohort: &str, subject: &str, indices: &[usize]) -> Vec<TrialId> {
        indices
            .iter()
            .map(|&index| TrialId {
                cohort: cohort.to_string(),
                subject: subject.to_string(),
                index,
            })
            .collect()
    }
}

/// Epochs together with the identities of their trials, row for row.
#[derive(Debug, Clone)]
pub struct Tracked {
    pub set: EpochSet,
    pub ids: Vec<TrialId>,
}

impl Tracked {
    pub fn new(set: EpochSet, ids: Vec<TrialId>) -> Result<Self> {
        if ids.len() != set.n_trials() {
            return Err(Error::LengthMismatch(ids.len(), set.n_trials()));
        }
        Ok(Tracked { set, ids })
    }

    /// Every trial of `set` from `cohort`.
    pub fn whole(cohort: &str, set: &EpochSet) -> Self {
        let idx: Vec<usize> = (0..set.n_trials()).collect();
        Tracked {
            ids: TrialId::for_set(cohort, &set.subject_id, &idx),
            set: set.clone(),
        }
    }
}

/// Fails if any test trial appears among the trials used for fitting.
pub fn check_hygiene(test: &[TrialId], used: &[TrialId]) -> Result<()> {
    let test: HashSet<&TrialId> = test.iter().collect();
    if let Some(leak) = used.iter().find(|id| test.contains(id)) {
        return Err(Error::HygieneViolation(format!(
            "test trial {}/{}#{} entered the calibration pool",
            leak.cohort, leak.subject, leak.index
        )));
    }
    Ok(())
}

/// Calibration pool of `scheme`: the target calibration trials followed by
/// the (possibly transformed) source trials.
pub fn build_pool(
    scheme: SchemeId,
    calib: &Tracked,
    sources: &[Tracked],
    dan: &DanConfig,
) -> Result<Tracked> {
    let extra: Vec<EpochSet> = match scheme {
        SchemeId::Baseline => Vec::new(),
        SchemeId::Concat => sources.iter().map(|s| s.set.clone()).collect(),
        SchemeId::Lst => sources
            .iter()
            .map(|s| lst_fit(&s.set, &calib.set).and_then(|t| lst_transform(&t, &s.set)))
            .collect::<Result<_>>()?,
        _ => {
            let variant = scheme.dan_variant().expect("DAN family scheme");
            let refs: Vec<&EpochSet> = sources.iter().map(|s| &s.set).collect();
            let models = fit_alignment(&refs, &calib.set, dan, variant)?;
            refs.iter()
                .enumerate()
                .map(|(k, s)| models.transform(k, s, &calib.set.subject_id))
                .collect::<Result<_>>()?
        }
    };
    let mut ids = calib.ids.clone();
    if scheme.uses_sources() {
        for s in sources {
            ids.extend(s.ids.iter().cloned());
        }
    }
    let refs: Vec<&EpochSet> = extra.iter().collect();
    let set = calib.set.concat(&refs)?;
    Tracked::new(set, ids)
}

/// One (target, n_calib, source count, repeat) unit of work.
#[derive(Debug, Clone)]
struct Fold {
    target: usize,
    n_calib: usize,
    /// `None` uses every available source.
    n_sources: Option<usize>,
    repeat: usize,
}

struct FoldOutcome {
    cells: Vec<Cell>,
    failures: Vec<FoldFailure>,
}

struct Harness<'a> {
    task: &'a TaskSpec,
    source: &'a Cohort,
    target: &'a Cohort,
    schemes: &'a [SchemeId],
    dan: &'a DanConfig,
    decode: &'a DecodeConfig,
    opts: RunOptions,
}

fn fold_seed(task: &TaskSpec, subject: &str, repeat: usize) -> u64 {
    rng::derive_seed(task.seed, &[rng::tag(subject), repeat as u64])
}

impl Harness<'_> {
    /// Indices of usable source members for `target_id`.
    fn available_sources(&self, target_id: &str) -> Vec<usize> {
        self.source
            .members
            .iter()
            .enumerate()
            .filter(|(_, m)| m.subject_id != target_id && m.epochs.is_ok())
            .map(|(i, _)| i)
            .collect()
    }

    fn failure(&self, fold: &Fold, scheme: Option<SchemeId>, e: &Error) -> FoldFailure {
        let subject = &self.target.members[fold.target].subject_id;
        log::warn!("fold {subject} n_calib={} repeat={}: {e}", fold.n_calib, fold.repeat);
        FoldFailure {
            target_subject: subject.clone(),
            n_calib: fold.n_calib,
            repeat: fold.repeat,
            scheme,
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }

    fn run_fold(&self, fold: &Fold) -> Result<FoldOutcome> {
        let member = &self.target.members[fold.target];
        let subject = member.subject_id.as_str();
        let mut out = FoldOutcome {
            cells: Vec::new(),
            failures: Vec::new(),
        };
        let target = match &member.epochs {
            Ok(e) => e,
            Err(reason) => {
                let e = Error::SubjectLoadFailure {
                    subject: subject.to_string(),
                    reason: reason.clone(),
                };
                out.failures.push(self.failure(fold, None, &e));
                return Ok(out);
            }
        };
        let seed = fold_seed(self.task, subject, fold.repeat);

        let mut source_idx = self.available_sources(subject);
        if let Some(n) = fold.n_sources {
            if n > source_idx.len() {
                return Err(Error::CountExceedsSources {
                    requested: n,
                    available: source_idx.len(),
                });
            }
            source_idx.shuffle(&mut rng::stream(seed, &[rng::tag("sources"), n as u64]));
            source_idx.truncate(n);
            source_idx.sort_unstable();
        }
        let sources: Vec<Tracked> = source_idx
            .iter()
            .map(|&i| {
                let m = &self.source.members[i];
                Tracked::whole(&self.source.name, m.epochs.as_ref().expect("filtered"))
            })
            .collect();

        let order = if self.task.reshuffle_splits {
            SplitOrder::SeededShuffle
        } else {
            SplitOrder::FirstN
        };
        let prepared = split_indices(target, fold.n_calib, order, rng::derive_seed(seed, &[rng::tag("split")]))
            .and_then(|(c, t)| {
                let bank = self.decode.bank(target.fs, target.n_samples())?;
                Ok((c, t, bank))
            });
        let (calib_idx, test_idx, bank) = match prepared {
            Ok(p) => p,
            Err(e) => {
                out.failures.push(self.failure(fold, None, &e));
                return Ok(out);
            }
        };
        let calib = Tracked::new(
            target.subset(&calib_idx),
            TrialId::for_set(&self.target.name, subject, &calib_idx),
        )?;
        let test_ids = TrialId::for_set(&self.target.name, subject, &test_idx);
        let test = target.subset(&test_idx);

        let dan = DanConfig {
            seed: rng::derive_seed(seed, &[rng::tag("dan"), fold.n_calib as u64]),
            ..self.dan.clone()
        };
        for &scheme in self.schemes {
            let started = Instant::now();
            match self.score(scheme, &calib, &sources, &test, &test_ids, &dan, &bank) {
                Ok(acc) => out.cells.push(Cell {
                    task: self.task.name.to_string(),
                    scheme,
                    target_subject: subject.to_string(),
                    n_calib: fold.n_calib,
                    n_sources: sources.len(),
                    repeat: fold.repeat,
                    accuracy: acc,
                    seconds: if self.opts.record_timing {
                        started.elapsed().as_secs_f64()
                    } else {
                        0.0
                    },
                }),
                Err(e @ Error::HygieneViolation(_)) => return Err(e),
                Err(e) => out.failures.push(self.failure(fold, Some(scheme), &e)),
            }
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn score(
        &self,
        scheme: SchemeId,
        calib: &Tracked,
        sources: &[Tracked],
        test: &EpochSet,
        test_ids: &[TrialId],
        dan: &DanConfig,
        bank: &FilterBank,
    ) -> Result<f64> {
        // source subjects never contribute test trials, but check them anyway
        for s in sources {
            check_hygiene(test_ids, &s.ids)?;
        }
        check_hygiene(test_ids, &calib.ids)?;
        let pool = build_pool(scheme, calib, sources, dan)?;
        check_hygiene(test_ids, &pool.ids)?;
        let model = trca_fit(&pool.set, bank)?;
        let pred = model.predict(bank, test)?;
        accuracy(&pred, &test.labels)
    }
}

fn execute(h: &Harness<'_>, folds: Vec<Fold>) -> Result<EvaluationReport> {
    let run = || -> Vec<Result<FoldOutcome>> { folds.par_iter().map(|f| h.run_fold(f)).collect() };
    let results = if h.opts.jobs == 1 {
        folds.iter().map(|f| h.run_fold(f)).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(h.opts.jobs)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))?
            .install(run)
    };
    let mut report = EvaluationReport {
        task: h.task.clone(),
        schemes: h.schemes.to_vec(),
        dan: h.dan.clone(),
        decode: h.decode.clone(),
        cells: Vec::new(),
        failures: Vec::new(),
        aggregates: Vec::new(),
        significance: Vec::new(),
    };
    for r in results {
        let o = r?;
        report.cells.extend(o.cells);
        report.failures.extend(o.failures);
    }
    report.finalize();
    Ok(report)
}

fn check_inputs(task: &TaskSpec, target: &Cohort, schemes: &[SchemeId], decode: &DecodeConfig) -> Result<()> {
    task.validate()?;
    decode.validate()?;
    if target.len() < 2 {
        return Err(Error::config(
            "task.target",
            format!("leave-one-subject-out needs at least 2 subjects, got {}", target.len()),
        ));
    }
    if schemes.is_empty() {
        return Err(Error::config("schemes", "no scheme given"));
    }
    Ok(())
}

fn folds_for(task: &TaskSpec, target: &Cohort, n_calib: &[usize], counts: &[Option<usize>]) -> Vec<Fold> {
    let mut folds = Vec::new();
    for &n_sources in counts {
        for &n in n_calib {
            for t in 0..target.len() {
                for repeat in 0..task.repeats {
                    folds.push(Fold {
                        target: t,
                        n_calib: n,
                        n_sources,
                        repeat,
                    });
                }
            }
        }
    }
    folds
}

/// Leave-one-subject-out evaluation of `schemes` on every target subject,
/// for every value of `task.n_calib` and every repeat.
///
/// Sources are the members of `source` whose subject id differs from the
/// target's. Fold failures are recorded in the report; a fold-hygiene
/// violation aborts the run.
pub fn run_loso(
    task: &TaskSpec,
    source: &Cohort,
    target: &Cohort,
    schemes: &[SchemeId],
    dan: &DanConfig,
    decode: &DecodeConfig,
    opts: RunOptions,
) -> Result<EvaluationReport> {
    check_inputs(task, target, schemes, decode)?;
    let h = Harness {
        task,
        source,
        target,
        schemes,
        dan,
        decode,
        opts,
    };
    if let Some(n) = task.n_source_subjects {
        check_counts(&h, &[n])?;
    }
    execute(&h, folds_for(task, target, &task.n_calib, &[task.n_source_subjects]))
}

/// [`run_loso`] over several calibration sizes.
pub fn sweep_calibration(
    task: &TaskSpec,
    source: &Cohort,
    target: &Cohort,
    schemes: &[SchemeId],
    dan: &DanConfig,
    decode: &DecodeConfig,
    values: &[usize],
    opts: RunOptions,
) -> Result<EvaluationReport> {
    let task = TaskSpec {
        n_calib: values.to_vec(),
        ..task.clone()
    };
    run_loso(&task, source, target, schemes, dan, decode, opts)
}

fn check_counts(h: &Harness<'_>, counts: &[usize]) -> Result<()> {
    let max = counts.iter().copied().max().unwrap_or(0);
    for m in &h.target.members {
        let available = h.available_sources(&m.subject_id).len();
        if max > available {
            return Err(Error::CountExceedsSources {
                requested: max,
                available,
            });
        }
    }
    Ok(())
}

/// Evaluation with a random subset of `count` sources per fold and repeat,
/// for every count. The target calibration size is fixed at the minimum.
pub fn sweep_sources(
    task: &TaskSpec,
    source: &Cohort,
    target: &Cohort,
    schemes: &[SchemeId],
    dan: &DanConfig,
    decode: &DecodeConfig,
    counts: &[usize],
    opts: RunOptions,
) -> Result<EvaluationReport> {
    let task = TaskSpec {
        n_calib: vec![crate::data::MIN_CALIB_TRIALS],
        ..task.clone()
    };
    check_inputs(&task, target, schemes, decode)?;
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::config("sources", "counts must be >= 1"));
    }
    let h = Harness {
        task: &task,
        source,
        target,
        schemes,
        dan,
        decode,
        opts,
    };
    check_counts(&h, counts)?;
    let counts: Vec<Option<usize>> = counts.iter().map(|&c| Some(c)).collect();
    execute(&h, folds_for(&task, target, &task.n_calib, &counts))
}
