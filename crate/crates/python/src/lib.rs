//! Python module `avgen`.
//!
//! Thin wrappers: schedules, the forward process, guidance combination,
//! Fréchet distance, sync scoring, and the command layer (data generation,
//! training, sampling, pipeline, evaluation). Structured results come back
//! as JSON strings; `json.loads` them on the Python side.

use std::path::PathBuf;

use avgen_core::commands::{self, PipelineRequest, SampleOptions};
use avgen_core::config::{RunConfig, TrainMode};
use avgen_core::data::PairedSample;
use avgen_core::diffusion;
use avgen_core::eval;
use avgen_core::pipeline::{self, Prompt};
use avgen_core::{ModalityTensor, ScheduleConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(avgen, AvgenError, PyException);

fn py_err(e: avgen_core::Error) -> PyErr {
    AvgenError::new_err(format!("{e} (exit code {})", e.exit_code()))
}

fn config(json: Option<&str>) -> PyResult<RunConfig> {
    match json {
        Some(s) => serde_json::from_str(s).map_err(|e| AvgenError::new_err(format!("config: {e}"))),
        None => Ok(RunConfig::default()),
    }
}

fn to_json(v: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| AvgenError::new_err(e.to_string()))
}

/// Linear noise schedule, timesteps 1..=T.
#[pyclass(name = "NoiseSchedule", frozen)]
struct PySchedule(avgen_core::NoiseSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (steps=200, beta_start=5e-4, beta_end=0.1))]
    fn new(steps: usize, beta_start: f64, beta_end: f64) -> PyResult<Self> {
        avgen_core::NoiseSchedule::linear(steps, beta_start, beta_end).map(Self).map_err(py_err)
    }

    /// 2000 steps from 1e-4 to 0.02.
    #[staticmethod]
    fn full_scale() -> PyResult<Self> {
        ScheduleConfig::full_scale().build().map(Self).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn beta(&self, t: usize) -> PyResult<f64> {
        self.0.beta(t).map_err(py_err)
    }

    /// ᾱ_t; `alpha_bar(0) == 1`.
    fn alpha_bar(&self, t: usize) -> PyResult<f64> {
        self.0.alpha_bar(t).map_err(py_err)
    }

    fn posterior_variance(&self, t: usize) -> PyResult<f64> {
        self.0.coeffs_at(t).map(|c| c.posterior_variance).map_err(py_err)
    }

    fn alpha_bars(&self) -> Vec<f64> {
        self.0.alpha_bars().to_vec()
    }
}

/// `√ᾱ_t x0 + √(1-ᾱ_t) eps`.
#[pyfunction]
fn q_sample(x0: Vec<f64>, t: usize, eps: Vec<f64>, schedule: &PySchedule) -> PyResult<Vec<f64>> {
    diffusion::q_sample_slice(&x0, t, &eps, &schedule.0).map_err(py_err)
}

/// `uncond + scale * (cond - uncond)`.
#[pyfunction]
fn cfg_combine(uncond: Vec<f64>, cond: Vec<f64>, scale: f64) -> PyResult<Vec<f64>> {
    if uncond.len() != cond.len() {
        return Err(AvgenError::new_err("branches differ in length"));
    }
    Ok(diffusion::cfg_combine(&uncond, &cond, scale))
}

/// Fréchet distance between Gaussians fitted to two sets of feature rows.
#[pyfunction]
fn frechet_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    let sa = eval::gaussian_stats(&a).map_err(py_err)?;
    let sb = eval::gaussian_stats(&b).map_err(py_err)?;
    eval::frechet_distance(&sa, &sb).map_err(py_err)
}

/// `(score, lag)` for a flat `[F, C, H, W]` video and its audio.
#[pyfunction]
fn sync_score(audio: Vec<f32>, video: Vec<f32>, shape: (usize, usize, usize, usize), samples_per_frame: usize) -> PyResult<(f64, i64)> {
    let (f, c, h, w) = shape;
    let v = ModalityTensor::video(video, f, c, h, w).map_err(py_err)?;
    let pair = PairedSample::new(ModalityTensor::audio(audio), v, None, samples_per_frame).map_err(py_err)?;
    let s = eval::sync_score(&pair).map_err(py_err)?;
    Ok((s.score, s.lag))
}

/// Class label for a prompt, or `None`.
#[pyfunction]
fn resolve_prompt(text: &str) -> Option<u32> {
    pipeline::resolve_keyword(text)
}

/// Writes the synthetic corpus; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, config_json=None))]
fn generate_data(out_dir: PathBuf, config_json: Option<&str>) -> PyResult<PathBuf> {
    commands::cmd_generate_data(&config(config_json)?, &out_dir).map_err(py_err)
}

/// Trains `mode` (ddpm, joint, flow, flow-v2a); returns the summary JSON.
#[pyfunction]
#[pyo3(signature = (manifest, mode, out, config_json=None, resume=None))]
fn train(manifest: PathBuf, mode: &str, out: PathBuf, config_json: Option<&str>, resume: Option<PathBuf>) -> PyResult<String> {
    let mode: TrainMode = mode.parse().map_err(py_err)?;
    let s = commands::cmd_train(&config(config_json)?, &manifest, mode, &out, resume.as_deref(), |_| {}).map_err(py_err)?;
    to_json(&s)
}

#[pyfunction]
#[pyo3(signature = (checkpoint, out_dir, count=20, seed=7, class_label=None, guidance=None, config_json=None))]
#[allow(clippy::too_many_arguments)]
fn sample(
    checkpoint: PathBuf,
    out_dir: PathBuf,
    count: usize,
    seed: u64,
    class_label: Option<u32>,
    guidance: Option<f64>,
    config_json: Option<&str>,
) -> PyResult<PathBuf> {
    let opts = SampleOptions {
        count,
        seed,
        class: class_label,
        guidance,
    };
    commands::cmd_sample(&config(config_json)?, &checkpoint, &opts, &out_dir).map_err(py_err)
}

/// Two-stage generation; returns the run records as a JSON list.
#[pyfunction]
#[pyo3(signature = (prompt, video_checkpoint, audio_checkpoint, out_dir, guidance=3.0, negative_prompt=None, seed=7, count=1, config_json=None))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    prompt: &str,
    video_checkpoint: PathBuf,
    audio_checkpoint: PathBuf,
    out_dir: PathBuf,
    guidance: f64,
    negative_prompt: Option<&str>,
    seed: u64,
    count: usize,
    config_json: Option<&str>,
) -> PyResult<String> {
    let mut p = Prompt::new(prompt, guidance);
    if let Some(n) = negative_prompt {
        p = p.with_negative(n);
    }
    let req = PipelineRequest {
        prompt: p,
        seed,
        count,
        video_checkpoint,
        audio_checkpoint,
    };
    let records = commands::cmd_pipeline(&config(config_json)?, &req, &out_dir).map_err(py_err)?;
    to_json(&records)
}

/// Report JSON with keys fad, fvd, sync_matched, sync_shuffled, n.
#[pyfunction]
fn evaluate(real_manifest: PathBuf, generated_manifest: PathBuf) -> PyResult<String> {
    to_json(&commands::cmd_eval(&real_manifest, &generated_manifest).map_err(py_err)?)
}

#[pymodule]
fn avgen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AvgenError", m.py().get_type::<AvgenError>())?;
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(q_sample, m)?)?;
    m.add_function(wrap_pyfunction!(cfg_combine, m)?)?;
    m.add_function(wrap_pyfunction!(frechet_distance, m)?)?;
    m.add_function(wrap_pyfunction!(sync_score, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(generate_data, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
