//! Mini-batch ADAM training with global-norm clipping, best-on-validation
//! checkpoint selection, and the pre-train/adapt driver.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::reader::{self, Checkpoint, ReaderParams};
use crate::rng;
use crate::tensor::Tensor;
use crate::vocab::MappedTriple;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_threshold: f64,
    pub max_epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub rng_seed: u64,
    /// Epochs without strict validation improvement before stopping.
    /// `None` trains for `max_epochs`.
    pub patience: Option<usize>,
    /// Written at every new best epoch.
    pub checkpoint_path: Option<PathBuf>,
    pub vocab_fingerprint: String,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            clip_threshold: 10.0,
            max_epochs: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            rng_seed: 0,
            patience: Some(3),
            checkpoint_path: None,
            vocab_fingerprint: String::new(),
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Invalid(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !positive(self.clip_threshold) {
            return Err(Error::Invalid(format!(
                "clip threshold must be > 0, got {}",
                self.clip_threshold
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !positive(self.adam_eps)
        {
            return Err(Error::Invalid(
                "ADAM betas must lie in [0, 1) and eps must be > 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Moments {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        let z: Vec<Tensor> = params.iter().map(|t| Tensor::zeros(t.shape())).collect();
        Moments { m: z.clone(), v: z }
    }
}

fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their joint L2 norm is at most `threshold`.
/// Returns the norms before and after.
pub fn clip_gradients(grads: &mut [Tensor], threshold: f64) -> Result<(f64, f64)> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::Invalid(format!(
            "clip threshold must be > 0, got {threshold}"
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let norm = global_norm(grads);
    if norm <= threshold {
        return Ok((norm, norm));
    }
    let mut scale = threshold / norm;
    let mut post = norm;
    // Rounding can leave the rescaled norm a few ulps above the threshold.
    while post > threshold {
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
        post = global_norm(grads);
        scale = 1.0 - f64::EPSILON;
    }
    Ok((norm, post))
}

/// One bias-corrected ADAM update at step `t` (1-based).
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    moments: &mut Moments,
    t: u64,
    cfg: &TrainConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Invalid("ADAM step index starts at 1".to_string()));
    }
    if params.len() != grads.len()
        || params.len() != moments.m.len()
        || params.len() != moments.v.len()
    {
        return Err(Error::Invalid(
            "parameter, gradient and moment counts differ".to_string(),
        ));
    }
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut moments.m)
        .zip(&mut moments.v)
    {
        if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
            return Err(Error::Shape {
                op: "adam",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        let (pd, gd) = (p.data_mut(), g.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
            vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
            let m_hat = md[i] / c1;
            let v_hat = vd[i] / c2;
            pd[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            if !pd[i].is_finite() {
                return Err(Error::NonFinite("adam update"));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    /// ADAM step index; restarts at 1 in each call to [`train`].
    pub t: u64,
    pub batch_loss: f64,
    pub pre_clip_norm: f64,
    pub post_clip_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean NLL over the epoch's samples, measured before each batch update.
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub steps: Vec<StepLog>,
    /// 1-based epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: Option<f64>,
    /// Set when validation data was empty and the final parameters were kept.
    pub no_validation: bool,
    pub stopped_early: bool,
    pub wall_seconds: f64,
}

impl TrainReport {
    /// Tab-separated epoch log plus a `#`-prefixed summary line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_accuracy\timproved\n");
        for e in &self.epochs {
            let acc = e.val_accuracy.map_or("-".to_string(), |a| format!("{a}"));
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                e.epoch, e.train_loss, acc, e.improved as u8
            );
        }
        let best = self.best_epoch.map_or("-".to_string(), |b| b.to_string());
        let acc = self
            .best_val_accuracy
            .map_or("-".to_string(), |a| format!("{a}"));
        let _ = writeln!(
            out,
            "# best_epoch={best} best_val_accuracy={acc} steps={} stopped_early={} no_validation={}",
            self.steps.len(),
            self.stopped_early,
            self.no_validation
        );
        out
    }

    /// Equality ignoring wall-clock time.
    pub fn same_run(&self, other: &TrainReport) -> bool {
        TrainReport {
            wall_seconds: 0.0,
            ..self.clone()
        } == TrainReport {
            wall_seconds: 0.0,
            ..other.clone()
        }
    }
}

/// Fraction of samples whose argmax over the full output layer is the answer.
pub fn accuracy(params: &ReaderParams, data: &[MappedTriple], exec: Exec) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Invalid("accuracy over an empty set".to_string()));
    }
    let hits = exec.try_map(data, |m| {
        let answer = m
            .answer_id
            .ok_or_else(|| Error::Invalid("evaluation sample without an answer".to_string()))?;
        let (pred, _) = reader::predict(params, m, false)?;
        Ok::<_, Error>(pred == answer)
    })?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

/// Batch-mean loss and gradients. Per-sample gradients are summed in sample
/// order whatever the execution mode.
pub fn batch_gradients(
    params: &ReaderParams,
    batch: &[&MappedTriple],
    exec: Exec,
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".to_string()));
    }
    let per_sample = exec.try_map(batch, |m| reader::loss_and_gradients(params, m))?;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut total) = iter.next().expect("non-empty batch");
    for (l, grads) in iter {
        loss += l;
        for (acc, g) in total.iter_mut().zip(grads) {
            acc.data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(a, b)| *a += b);
        }
    }
    let n = batch.len() as f64;
    for g in total.iter_mut() {
        g.data_mut().iter_mut().for_each(|x| *x /= n);
    }
    Ok((loss / n, total))
}

fn save_best(params: &ReaderParams, cfg: &TrainConfig) -> Result<()> {
    if let Some(path) = &cfg.checkpoint_path {
        Checkpoint::new(params.clone(), cfg.vocab_fingerprint.clone()).save(path)?;
    }
    Ok(())
}

/// Trains from `params` and returns the best parameters by validation
/// accuracy, or the final ones when `val` is empty.
pub fn train(
    params: ReaderParams,
    data: &[MappedTriple],
    val: &[MappedTriple],
    cfg: &TrainConfig,
) -> Result<(ReaderParams, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Invalid("no training data".to_string()));
    }
    let start = Instant::now();
    let mut params = params;
    let mut moments = Moments::zeros_like(params.tensors());
    let mut t = 0u64;
    let mut report = TrainReport {
        epochs: Vec::new(),
        steps: Vec::new(),
        best_epoch: None,
        best_val_accuracy: None,
        no_validation: val.is_empty(),
        stopped_early: false,
        wall_seconds: 0.0,
    };
    if val.is_empty() {
        log::warn!("no validation data; keeping final-epoch parameters");
    }
    let mut best: Option<ReaderParams> = None;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::indexed(cfg.rng_seed, epoch as u64));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&MappedTriple> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, mut grads) = batch_gradients(&params, &batch, cfg.exec)?;
            let (pre, post) = clip_gradients(&mut grads, cfg.clip_threshold)?;
            t += 1;
            adam_step(params.tensors_mut(), &grads, &mut moments, t, cfg)?;
            loss_sum += loss * batch.len() as f64;
            report.steps.push(StepLog {
                epoch,
                t,
                batch_loss: loss,
                pre_clip_norm: pre,
                post_clip_norm: post,
            });
        }
        let train_loss = loss_sum / data.len() as f64;

        let val_accuracy = if val.is_empty() {
            None
        } else {
            Some(accuracy(&params, val, cfg.exec)?)
        };
        let improved = match (val_accuracy, report.best_val_accuracy) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        log::info!(
            "epoch {epoch}: train_loss={train_loss:.6} val_accuracy={}",
            val_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"))
        );
        report.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_accuracy,
            improved,
        });
        if improved {
            report.best_epoch = Some(epoch);
            report.best_val_accuracy = val_accuracy;
            save_best(&params, cfg)?;
            best = Some(params.clone());
            stale = 0;
        } else if !val.is_empty() {
            stale += 1;
            if cfg.patience.is_some_and(|p| stale >= p) {
                report.stopped_early = true;
                break;
            }
        }
    }

    let out = match best {
        Some(b) => b,
        None => {
            if !report.epochs.is_empty() {
                report.best_epoch = Some(report.epochs.len());
            }
            save_best(&params, cfg)?;
            params
        }
    };
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((out, report))
}

/// Training and validation samples mapped with one vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub vocab_fingerprint: &'a str,
    pub train: &'a [MappedTriple],
    pub val: &'a [MappedTriple],
}

#[derive(Debug, Clone)]
pub struct TwoStepOutcome {
    pub pretrained: ReaderParams,
    pub adapted: ReaderParams,
    pub pretrain_report: TrainReport,
    pub adapt_report: TrainReport,
}

/// Pre-trains from `init` on pseudo data, then continues from the best
/// pre-trained parameters on task data with fresh optimizer state.
pub fn two_step_train(
    init: ReaderParams,
    pseudo: Dataset<'_>,
    task: Dataset<'_>,
    cfg_pre: &TrainConfig,
    cfg_adapt: &TrainConfig,
) -> Result<TwoStepOutcome> {
    if pseudo.vocab_fingerprint != task.vocab_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: pseudo.vocab_fingerprint.to_string(),
            found: task.vocab_fingerprint.to_string(),
        });
    }
    if task.train.is_empty() {
        return Err(Error::Invalid("no task data for adaptation".to_string()));
    }
    let (pretrained, pretrain_report) = train(init, pseudo.train, pseudo.val, cfg_pre)?;
    let (adapted, adapt_report) = train(pretrained.clone(), task.train, task.val, cfg_adapt)?;
    Ok(TwoStepOutcome {
        pretrained,
        adapted,
        pretrain_report,
        adapt_report,
    })
}
