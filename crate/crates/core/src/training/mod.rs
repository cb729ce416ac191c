//! Losses, optimizer, training loop and checkpoints.

mod checkpoint;
mod loss;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Manifest, ManifestParam, MANIFEST_FILE, PAYLOAD_FILE};
pub use loss::{
    answer_nll, binary_cross_entropy, classification_loss, decoder_loss, ranking_loss, smooth_label, total_loss,
    total_loss_var, LossTerms, LOG_FLOOR,
};
pub use optim::{load_ema, lr_at_step, optimizer_step, OptimizerState, StepStats};

use std::fmt::Write as _;

use crate::config::TrainConfig;
use crate::data::{make_batches, Batch, EncodedExample};
use crate::error::{ModelError, ModelResult};
use crate::model::{Masque, RankerSource};
use crate::scalar::Scalar;
use crate::tensor::{GradBuffer, Graph, ParamStore};

/// Builds all three losses for a batch inside `g`.
pub fn batch_loss<T: Scalar>(
    g: &mut Graph<T>,
    model: &Masque,
    ps: &ParamStore<T>,
    examples: &[EncodedExample],
    cfg: &TrainConfig,
) -> ModelResult<LossTerms> {
    let mut dec = Vec::with_capacity(examples.len());
    let mut rank = Vec::with_capacity(examples.len());
    let mut cls = Vec::with_capacity(examples.len());
    for ex in examples {
        let out = model.forward(g, ps, ex, RankerSource::Live)?;
        dec.push((out.mixture.p, ex));
        rank.push((out.beta, ex));
        cls.push((out.answer_prob, ex));
    }
    let l_dec = decoder_loss(g, &dec)?;
    if l_dec.is_none() {
        log::warn!("batch has no answerable example; decoder loss contributes 0");
    }
    let l_rank = ranking_loss(g, &rank, cfg.label_smooth_pos)?;
    let l_cls = classification_loss(g, &cls, cfg.label_smooth_pos)?;
    Ok(total_loss_var(g, l_dec, l_rank, l_cls, cfg.gamma_rank, cfg.gamma_cls)?)
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub lr: f64,
    pub l_dec: f64,
    pub l_rank: f64,
    pub l_cls: f64,
    pub total: f64,
    pub grad_norm: f64,
}

pub const METRICS_HEADER: &str = "step,lr,L_dec,L_rank,L_cls,L";

/// Renders rows as CSV with [`METRICS_HEADER`].
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{:e},{},{},{},{}", r.step, r.lr, r.l_dec, r.l_rank, r.l_cls, r.total);
    }
    out
}

/// Stateful training loop over a fixed instance list.
///
/// Every epoch reshuffles the instances with a seed derived from the epoch
/// number, so the batch sequence depends only on the step count.
pub struct Trainer<'a, T: Scalar> {
    pub model: &'a Masque,
    pub cfg: TrainConfig,
    pub params: ParamStore<T>,
    pub state: OptimizerState<T>,
    pub log: Vec<MetricsRow>,
    instances: Vec<EncodedExample>,
    batches: Vec<Batch>,
    epoch: Option<u64>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(model: &'a Masque, params: ParamStore<T>, instances: Vec<EncodedExample>, cfg: TrainConfig) -> ModelResult<Self> {
        cfg.validate().map_err(ModelError::Config)?;
        if instances.is_empty() {
            return Err(ModelError::Data(crate::data::DataError::EmptyCorpus));
        }
        let state = OptimizerState::new(&params);
        Ok(Self {
            model,
            cfg,
            params,
            state,
            log: Vec::new(),
            instances,
            batches: Vec::new(),
            epoch: None,
        })
    }

    /// Continues from saved optimizer state.
    pub fn resume(mut self, state: OptimizerState<T>) -> Self {
        self.state = state;
        self
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.instances.len().div_ceil(self.cfg.batch_size)
    }

    fn batch_for(&mut self, step: u64) -> &Batch {
        let per = self.batches_per_epoch() as u64;
        let epoch = step / per;
        if self.epoch != Some(epoch) {
            let seed = self.cfg.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            self.batches = make_batches(self.instances.clone(), self.cfg.batch_size, seed);
            self.epoch = Some(epoch);
        }
        &self.batches[(step % per) as usize]
    }

    /// Runs one optimizer update.
    pub fn step(&mut self) -> ModelResult<MetricsRow> {
        let step = self.state.step;
        let examples = self.batch_for(step).examples.clone();
        let mut g = Graph::training(self.cfg.seed, step);
        let terms = batch_loss(&mut g, self.model, &self.params, &examples, &self.cfg)?;
        g.backward(terms.total)?;
        let mut grads = GradBuffer::zeros_like(&self.params);
        g.accumulate_param_grads(&mut grads);
        let value = |v| g.value(v).data()[0].as_f64();
        let (l_dec, l_rank, l_cls, total) = (
            terms.decoder.map_or(0.0, value),
            value(terms.rank),
            value(terms.cls),
            value(terms.total),
        );
        let stats = optimizer_step(&mut self.params, &mut grads, &mut self.state, &self.cfg)?;
        let row = MetricsRow {
            step: self.state.step,
            lr: stats.lr,
            l_dec,
            l_rank,
            l_cls,
            total,
            grad_norm: stats.grad_norm,
        };
        self.log.push(row);
        Ok(row)
    }

    /// Steps until `total_steps`, calling `on_step` after each update.
    pub fn run<F>(&mut self, mut on_step: F) -> ModelResult<()>
    where
        F: FnMut(&Self, &MetricsRow) -> ModelResult<()>,
    {
        while self.state.step < self.cfg.total_steps {
            let row = self.step()?;
            on_step(self, &row)?;
        }
        Ok(())
    }

    /// Parameters used for evaluation: the shadow values.
    pub fn eval_params(&self) -> ParamStore<T> {
        self.state.ema_params(&self.params)
    }
}
