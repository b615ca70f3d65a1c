use serde::{Deserialize, Serialize};

use crate::data::Video;
use crate::error::{GcfError, Result};
use crate::head::gcf_forward;
use crate::inference::{dense_clips_predict, pad_clips, ClipClassifierParams};
use crate::numerics::{argmax, matmul, softmax, Matrix, Rng, Stream};
use crate::params::{GcfParams, ParamSet};

use super::backward::backward_from_trace;
use super::loss::{cross_entropy, total_loss, LossConfig};
use super::schedule::{PlateauAction, PlateauScheduler};
use super::sgd::{sgd_step, SgdConfig, SgdState};

/// Loss, gradient and correctness for one labelled video.
pub struct Sample<P> {
    pub loss: f64,
    pub grads: P,
    pub correct: bool,
}

/// A trainable model: how one video contributes loss and gradient.
pub trait Objective {
    type Params: ParamSet;

    fn sample(&self, params: &Self::Params, video: &Video) -> Result<Sample<Self::Params>>;

    /// Loss and correctness without gradients.
    fn evaluate(&self, params: &Self::Params, video: &Video) -> Result<(f64, bool)>;
}

/// The fusion head trained on the total loss.
#[derive(Debug, Clone, Copy)]
pub struct GcfObjective {
    pub loss: LossConfig,
}

fn padded(params: &GcfParams, video: &Video) -> Result<Option<crate::fusion::ClipDescriptorSet>> {
    if video.clips() == params.config.clips {
        Ok(None)
    } else {
        pad_clips(&video.descriptors, params.config.clips).map(Some)
    }
}

impl Objective for GcfObjective {
    type Params = GcfParams;

    fn sample(&self, params: &GcfParams, video: &Video) -> Result<Sample<GcfParams>> {
        let label = video.require_label()?;
        let pad = padded(params, video)?;
        let v = pad.as_ref().unwrap_or(&video.descriptors);
        let trace = gcf_forward(v, params, params.config.mode)?;
        let loss = total_loss(&trace, label, &self.loss)?;
        let grads = backward_from_trace(&trace, label, &self.loss)?;
        Ok(Sample {
            loss,
            grads,
            correct: trace.predicted_class() == label,
        })
    }

    fn evaluate(&self, params: &GcfParams, video: &Video) -> Result<(f64, bool)> {
        let label = video.require_label()?;
        let pad = padded(params, video)?;
        let v = pad.as_ref().unwrap_or(&video.descriptors);
        let trace = gcf_forward(v, params, params.config.mode)?;
        Ok((total_loss(&trace, label, &self.loss)?, trace.predicted_class() == label))
    }
}

/// Clip classifier trained with every clip inheriting its video's label.
///
/// A video's loss is the mean of its clips' cross-entropies; accuracy uses the
/// dense (averaged) prediction.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClipObjective;

impl Objective for ClipObjective {
    type Params = ClipClassifierParams;

    fn sample(&self, params: &ClipClassifierParams, video: &Video) -> Result<Sample<ClipClassifierParams>> {
        let label = video.require_label()?;
        let x = video.descriptors.matrix();
        // logits for all clips at once: (C x d) (d x K)
        let logits = matmul(x, &params.w.transpose())?;
        let c = x.rows() as f64;
        let mut grads = Matrix::zeros(params.classes(), params.dim());
        let mut loss = 0.0;
        let mut avg = vec![0.0; params.classes()];
        for t in 0..x.rows() {
            let y = softmax(logits.row(t));
            loss += cross_entropy(&y, label)?;
            for (k, &p) in y.iter().enumerate() {
                avg[k] += p;
                let d = (p - if k == label { 1.0 } else { 0.0 }) / c;
                for (g, &v) in grads.row_mut(k).iter_mut().zip(x.row(t)) {
                    *g += d * v;
                }
            }
        }
        Ok(Sample {
            loss: loss / c,
            grads: ClipClassifierParams { w: grads },
            correct: argmax(&avg) == label,
        })
    }

    fn evaluate(&self, params: &ClipClassifierParams, video: &Video) -> Result<(f64, bool)> {
        let label = video.require_label()?;
        let mut loss = 0.0;
        for t in 0..video.clips() {
            loss += cross_entropy(&params.clip_probs(&video.descriptors, t)?, label)?;
        }
        let y = dense_clips_predict(&video.descriptors, params)?;
        Ok((loss / video.clips() as f64, argmax(&y) == label))
    }
}

/// Mean loss and accuracy over a set of videos.
pub fn evaluate<O: Objective>(obj: &O, params: &O::Params, videos: &[Video]) -> Result<(f64, f64)> {
    if videos.is_empty() {
        return Err(GcfError::Empty("evaluation split"));
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    for v in videos {
        let (l, ok) = obj.evaluate(params, v)?;
        loss += l;
        hits += ok as usize;
    }
    let n = videos.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Running mean over the epoch's mini-batches, measured before each step.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

/// Everything needed to continue training bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer<P> {
    pub params: P,
    pub sgd: SgdConfig,
    pub optimizer: SgdState,
    pub scheduler: PlateauScheduler,
    pub shuffle: Rng,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    /// The plateau schedule asked to stop.
    pub finished: bool,
}

impl<P: ParamSet> Trainer<P> {
    pub fn new(params: P, sgd: SgdConfig, seed: u64) -> Result<Self> {
        sgd.validate()?;
        Ok(Self {
            params,
            sgd,
            optimizer: SgdState::new(),
            scheduler: PlateauScheduler::new(
                sgd.lr,
                sgd.lr_factor,
                sgd.plateau_patience,
                sgd.min_delta,
                sgd.lr_reductions,
            ),
            shuffle: Rng::stream(seed, Stream::Shuffle),
            epoch: 0,
            history: Vec::new(),
            finished: false,
        })
    }

    /// The schedule has ended or the epoch budget is spent.
    pub fn done(&self) -> bool {
        self.finished || self.epoch >= self.sgd.max_epochs
    }

    /// One pass over `train` in shuffled mini-batches, then validation and scheduling.
    pub fn run_epoch<O: Objective<Params = P>>(
        &mut self,
        obj: &O,
        train: &[Video],
        val: &[Video],
    ) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(GcfError::Empty("training split"));
        }
        if val.is_empty() {
            return Err(GcfError::Empty("validation split"));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.shuffle.shuffle(&mut order);
        let lr = self.scheduler.lr;
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in order.chunks(self.sgd.batch_size) {
            let mut acc: Option<P> = None;
            for &i in batch {
                let s = obj.sample(&self.params, &train[i])?;
                loss_sum += s.loss;
                hits += s.correct as usize;
                match &mut acc {
                    None => acc = Some(s.grads),
                    Some(a) => a.add_scaled(&s.grads, 1.0)?,
                }
            }
            let mut grads = acc.expect("chunks are non-empty");
            let inv = 1.0 / batch.len() as f64;
            for (_, t) in grads.tensors_mut() {
                t.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
            }
            sgd_step(&mut self.params, &grads, &mut self.optimizer, &self.sgd, lr)?;
        }
        let (val_loss, val_acc) = evaluate(obj, &self.params, val)?;
        if !val_loss.is_finite() {
            return Err(GcfError::NonFinite {
                context: format!("validation loss at epoch {}", self.epoch),
            });
        }
        let n = train.len() as f64;
        let record = EpochRecord {
            epoch: self.epoch,
            train_loss: loss_sum / n,
            train_acc: hits as f64 / n,
            val_loss,
            val_acc,
            lr,
        };
        self.epoch += 1;
        self.history.push(record.clone());
        if self.scheduler.observe(val_loss) == PlateauAction::Stop {
            self.finished = true;
        }
        Ok(record)
    }

    /// Trains until the schedule ends, `max_epochs` is hit, or `until_epoch` epochs have run.
    pub fn run<O: Objective<Params = P>>(
        &mut self,
        obj: &O,
        train: &[Video],
        val: &[Video],
        until_epoch: Option<usize>,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<()> {
        while !self.done() && until_epoch.is_none_or(|e| self.epoch < e) {
            let r = self.run_epoch(obj, train, val)?;
            on_epoch(&r);
        }
        Ok(())
    }
}

/// Trains from scratch and returns the final parameters and per-epoch history.
pub fn train<O: Objective>(
    obj: &O,
    params: O::Params,
    train_set: &[Video],
    val_set: &[Video],
    sgd: SgdConfig,
    seed: u64,
) -> Result<(O::Params, Vec<EpochRecord>)> {
    let mut t = Trainer::new(params, sgd, seed)?;
    t.run(obj, train_set, val_set, None, |_| {})?;
    Ok((t.params, t.history))
}
