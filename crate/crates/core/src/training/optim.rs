use crate::config::TrainConfig;
use crate::error::{ModelError, ModelResult};
use crate::scalar::Scalar;
use crate::tensor::{GradBuffer, ParamStore};

/// Linear warmup from 0 to the peak, then cosine annealing to 0 at
/// `total_steps`.
pub fn lr_at_step(step: u64, cfg: &TrainConfig) -> ModelResult<f64> {
    if cfg.total_steps <= cfg.warmup_steps {
        return Err(ModelError::Config(format!(
            "train.total_steps ({}) must exceed train.warmup_steps ({})",
            cfg.total_steps, cfg.warmup_steps
        )));
    }
    let step = step.min(cfg.total_steps);
    if step <= cfg.warmup_steps && cfg.warmup_steps > 0 {
        return Ok(cfg.peak_lr * step as f64 / cfg.warmup_steps as f64);
    }
    let progress = (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
    Ok(cfg.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Adam moments and the averaged shadow of every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    /// Number of completed updates.
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub ema: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(ps: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = ps.entries().iter().map(|e| vec![T::zero(); e.tensor.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            ema: ps.entries().iter().map(|e| e.tensor.data().to_vec()).collect(),
        }
    }

    /// A copy of `ps` carrying the shadow values.
    pub fn ema_params(&self, ps: &ParamStore<T>) -> ParamStore<T> {
        let mut out = ps.clone();
        for (id, shadow) in ps.ids().zip(&self.ema) {
            out.get_mut(id).data_mut().copy_from_slice(shadow);
        }
        out
    }
}

/// Diagnostics of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub lr: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Clips, applies Adam with bias correction, decoupled weight decay on
/// weights and embeddings, and updates the shadow.
pub fn optimizer_step<T: Scalar>(
    ps: &mut ParamStore<T>,
    grads: &mut GradBuffer<T>,
    state: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> ModelResult<StepStats> {
    if let Some(id) = grads.first_non_finite() {
        return Err(ModelError::NonFiniteGradient {
            param: ps.entry(id).name.clone(),
            step: state.step,
        });
    }
    let norm = grads.global_norm().as_f64();
    if norm > cfg.clip_norm {
        grads.scale(T::lit(cfg.clip_norm / norm));
    }
    let t = state.step + 1;
    let lr = lr_at_step(t, cfg)?;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let decay = cfg.ema_decay;
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        let i = id.index();
        let decays = ps.entry(id).kind.decays();
        let g = grads.get(id);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let p = ps.get_mut(id).data_mut();
        for j in 0..p.len() {
            let gj = g[j].as_f64();
            let mj = b1 * m[j].as_f64() + (1.0 - b1) * gj;
            let vj = b2 * v[j].as_f64() + (1.0 - b2) * gj * gj;
            m[j] = T::lit(mj);
            v[j] = T::lit(vj);
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + cfg.adam_eps);
            let mut x = p[j].as_f64() - update;
            if decays {
                x -= lr * cfg.weight_decay * x;
            }
            p[j] = T::lit(x);
        }
        let shadow = &mut state.ema[i];
        for j in 0..p.len() {
            shadow[j] = T::lit(decay * shadow[j].as_f64() + (1.0 - decay) * p[j].as_f64());
        }
    }
    state.step = t;
    Ok(StepStats { lr, grad_norm: norm })
}

/// Copies shadow values into a store with the same layout.
pub fn load_ema<T: Scalar>(ps: &mut ParamStore<T>, state: &OptimizerState<T>) {
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        ps.get_mut(id).data_mut().copy_from_slice(&state.ema[id.index()]);
    }
}
