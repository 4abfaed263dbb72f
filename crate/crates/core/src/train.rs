//! Minibatch Adam training shared by every model.
//!
//! All randomness of step `k` comes from streams derived from
//! `(seed, k)`, so a run resumed from a checkpoint taken after step `k`
//! replays step `k + 1` exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::models::Trainable;
use crate::netcore::{Adam, AdamConfig, AdamState};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Probability of replacing the class by the null token.
    pub cond_dropout: f64,
    pub lr_schedule: LrSchedule,
    /// Worker threads for the per-example losses of a batch; 0 picks the
    /// available parallelism. Results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 4,
            lr: 1e-4,
            seed: 7,
            cond_dropout: 0.1,
            lr_schedule: LrSchedule::Constant,
            threads: 0,
        }
    }
}

/// Learning rate over the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` at step 1 down to zero after `steps` steps.
    Cosine,
}

impl TrainConfig {
    /// Learning rate of step `k` (counting from 1).
    pub fn lr_at(&self, k: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let frac = (k.saturating_sub(1) as f64 / self.steps.max(1) as f64).min(1.0);
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) {
            return Err(Error::param(format!("cond_dropout {} outside [0, 1]", self.cond_dropout)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Batch-mean losses of one optimizer step (`step` counts from 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub audio_loss: Option<f64>,
    pub video_loss: Option<f64>,
}

const BATCH_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone)]
pub struct Trainer<M> {
    pub model: M,
    pub config: TrainConfig,
    adam: Adam,
}

impl<M: Trainable + Sync> Trainer<M> {
    pub fn new(model: M, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(config.adam(), model.param_count());
        Ok(Self { model, config, adam })
    }

    /// Continues from saved optimizer moments.
    pub fn resume(model: M, config: TrainConfig, adam_config: AdamConfig, state: AdamState) -> Result<Self> {
        config.validate()?;
        if state.m.len() != model.param_count() || state.v.len() != model.param_count() {
            return Err(Error::dim("optimizer state", model.param_count(), state.m.len()));
        }
        Ok(Self {
            model,
            config,
            adam: Adam {
                config: adam_config,
                state,
            },
        })
    }

    /// Completed optimizer steps.
    pub fn step_count(&self) -> usize {
        self.adam.state.step as usize
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    fn threads(&self) -> usize {
        let n = if self.config.threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.config.threads
        };
        n.clamp(1, self.config.batch_size)
    }

    /// One optimizer step over a minibatch drawn with replacement.
    pub fn step(&mut self, data: &[PairedSample]) -> Result<StepRecord> {
        if data.is_empty() {
            return Err(Error::InsufficientData { need: 1, got: 0 });
        }
        let k = self.step_count() as u64 + 1;
        let seed = self.config.seed;
        let mut pick = stream_rng(seed, BATCH_STREAM + k);
        let batch: Vec<(usize, bool)> = (0..self.config.batch_size)
            .map(|_| {
                let i = pick.random_range(0..data.len());
                (i, pick.random::<f64>() < self.config.cond_dropout)
            })
            .collect();

        let model = &self.model;
        let bs = self.config.batch_size as u64;
        let run = |b: usize| {
            let (i, drop) = batch[b];
            let mut rng = stream_rng(seed, k * bs + b as u64);
            model.example_loss(&data[i], drop, &mut rng)
        };
        let threads = self.threads();
        let losses: Vec<Result<_>> = if threads == 1 {
            (0..batch.len()).map(run).collect()
        } else {
            let mut out: Vec<Option<Result<_>>> = (0..batch.len()).map(|_| None).collect();
            std::thread::scope(|scope| {
                for (w, chunk) in out.chunks_mut(batch.len().div_ceil(threads)).enumerate() {
                    let run = &run;
                    let base = w * batch.len().div_ceil(threads);
                    scope.spawn(move || {
                        for (j, slot) in chunk.iter_mut().enumerate() {
                            *slot = Some(run(base + j));
                        }
                    });
                }
            });
            out.into_iter().map(|r| r.expect("every example evaluated")).collect()
        };

        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.model.param_count()];
        let (mut loss, mut audio, mut video) = (0.0, None::<f64>, None::<f64>);
        for l in losses {
            let l = l?;
            loss += l.loss / n;
            if let Some(a) = l.audio_loss {
                *audio.get_or_insert(0.0) += a / n;
            }
            if let Some(v) = l.video_loss {
                *video.get_or_insert(0.0) += v / n;
            }
            for (g, d) in grad.iter_mut().zip(&l.grad) {
                *g += d / n;
            }
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite loss or gradient at step {k} (loss {loss})")));
        }
        let mut params = self.model.params();
        let lr = self.config.lr_at(k as usize);
        self.adam.step_with_lr(&mut params, &grad, lr);
        self.model.set_params(&params)?;
        Ok(StepRecord {
            step: k as usize,
            loss,
            audio_loss: audio,
            video_loss: video,
        })
    }

    /// Runs until `config.steps` steps have completed in total, calling
    /// `on_step` after each.
    pub fn run(&mut self, data: &[PairedSample], mut on_step: impl FnMut(&StepRecord)) -> Result<Vec<StepRecord>> {
        let mut records = Vec::new();
        while self.step_count() < self.config.steps {
            let r = self.step(data)?;
            on_step(&r);
            records.push(r);
        }
        Ok(records)
    }
}

/// Mean loss over the last `window` records.
pub fn tail_mean(records: &[StepRecord], window: usize) -> f64 {
    let w = window.clamp(1, records.len().max(1));
    let tail = &records[records.len().saturating_sub(w)..];
    tail.iter().map(|r| r.loss).sum::<f64>() / tail.len().max(1) as f64
}
