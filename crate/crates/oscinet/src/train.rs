//! Loss functions, Adam, and the training loop.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::OperatorDataset;
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_checkpoint};
use crate::nets::{
    deeponet_eval, deeponet_eval_complex, DeepOnetSpec, ModelNodes, ModelParams,
};
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Functions per optimizer step; every step sees all query points.
    pub batch_size: usize,
    pub seed: u64,
    /// Test metrics are refreshed every this many epochs (and at the first
    /// and last epoch).
    pub eval_every: usize,
    pub loss: LossKind,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 1500,
            batch_size: 100,
            seed: 0,
            eval_every: 10,
            loss: LossKind::Mse,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::validation(
                "learning_rate",
                format!("must be positive and finite, got {}", self.learning_rate),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::validation("eval_every", "must be >= 1"));
        }
        Ok(())
    }
}

/// Mean squared error; the complex case sums the real-part and
/// imaginary-part means.
pub fn mse_loss(
    pred_re: &Tensor,
    pred_im: Option<&Tensor>,
    true_re: &Tensor,
    true_im: Option<&Tensor>,
) -> Result<f64> {
    if pred_im.is_some() != true_im.is_some() {
        return Err(Error::Contract(
            "imaginary parts must be both present or both absent".into(),
        ));
    }
    let part = |p: &Tensor, t: &Tensor| -> Result<f64> {
        if p.shape() != t.shape() {
            return Err(Error::dim(format!(
                "mse: prediction {:?} vs target {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let n = p.len().max(1) as f64;
        Ok(p.data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    };
    let mut loss = part(pred_re, true_re)?;
    if let (Some(pi), Some(ti)) = (pred_im, true_im) {
        loss += part(pi, ti)?;
    }
    Ok(loss)
}

/// `||pred - true||_2 / ||true||_2`; complex inputs use the modulus.
pub fn relative_l2(
    pred_re: &Tensor,
    pred_im: Option<&Tensor>,
    true_re: &Tensor,
    true_im: Option<&Tensor>,
) -> Result<f64> {
    if pred_im.is_some() != true_im.is_some() {
        return Err(Error::Contract(
            "imaginary parts must be both present or both absent".into(),
        ));
    }
    if pred_re.shape() != true_re.shape() {
        return Err(Error::dim(format!(
            "relative_l2: prediction {:?} vs target {:?}",
            pred_re.shape(),
            true_re.shape()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&p, &t) in pred_re.data().iter().zip(true_re.data()) {
        num += (p - t) * (p - t);
        den += t * t;
    }
    if let (Some(pi), Some(ti)) = (pred_im, true_im) {
        for (&p, &t) in pi.data().iter().zip(ti.data()) {
            num += (p - t) * (p - t);
            den += t * t;
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric(
            "relative L2 against a zero-norm reference".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// First/second moment accumulators for Adam, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new()
    }
}

/// One bias-corrected Adam update over all tensors in canonical order.
///
/// `grads` must align with `params.tensors_mut()`. Rejects non-finite
/// gradients, naming the offending tensor.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    let names = params.tensor_names();
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() {
        return Err(Error::dim(format!(
            "{} gradient tensors for {} parameter tensors",
            grads.len(),
            tensors.len()
        )));
    }
    for (i, (t, g)) in tensors.iter().zip(grads).enumerate() {
        if t.len() != g.len() {
            return Err(Error::dim(format!(
                "gradient length {} != parameter length {} for {}",
                g.len(),
                t.len(),
                names[i]
            )));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "gradient of {} ({bad})",
                names[i]
            )));
        }
    }
    if state.first.is_empty() {
        state.first = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        state.second = state.first.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((tensor, grad), (m, v)) in tensors
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(&mut state.second))
    {
        for (i, value) in tensor.data_mut().iter_mut().enumerate() {
            let g = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *value -= learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// One row per completed epoch; test columns repeat the latest evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub rel_l2_re: f64,
    pub rel_l2_im: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub rows: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_test_loss: f64,
    pub final_test_loss: f64,
}

impl RunRecord {
    /// `loss.csv` content. No wall-clock column, so the bytes are
    /// reproducible across runs.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,test_loss,rel_l2_re,rel_l2_im\n");
        for row in &self.rows {
            let im = row.rel_l2_im.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.epoch, row.train_loss, row.test_loss, row.rel_l2_re, im
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestMetrics {
    pub loss: f64,
    pub rel_l2_re: f64,
    pub rel_l2_im: Option<f64>,
}

/// Test-set evaluation: full-batch forward, loss plus relative errors.
pub fn evaluate(
    spec: &DeepOnetSpec,
    params: &ModelParams,
    dataset: &OperatorDataset,
) -> Result<TestMetrics> {
    let queries = Tensor::from_parts(vec![dataset.queries.len(), 1], dataset.queries.clone());
    let mut tape = Tape::new();
    let model = ModelNodes::stage(&mut tape, params, false);
    let sensors = tape.leaf(dataset.test_in.clone());
    let xq = tape.leaf(queries);
    if spec.complex_output {
        let (re, im) = deeponet_eval_complex(&mut tape, spec, &model, sensors, xq)?;
        let t_im = dataset.test_out_im.as_ref().ok_or_else(|| {
            Error::Contract("complex model needs a dataset with imaginary parts".into())
        })?;
        let pred_re = tape.value(re);
        let pred_im = tape.value(im);
        let loss = mse_loss(pred_re, Some(pred_im), &dataset.test_out_re, Some(t_im))?;
        Ok(TestMetrics {
            loss,
            rel_l2_re: relative_l2(pred_re, None, &dataset.test_out_re, None)?,
            rel_l2_im: Some(relative_l2(pred_im, None, t_im, None)?),
        })
    } else {
        if dataset.test_out_im.is_some() {
            return Err(Error::Contract(
                "real model cannot evaluate complex outputs".into(),
            ));
        }
        let out = deeponet_eval(&mut tape, spec, &model, sensors, xq)?;
        let pred = tape.value(out);
        let loss = mse_loss(pred, None, &dataset.test_out_re, None)?;
        Ok(TestMetrics {
            loss,
            rel_l2_re: relative_l2(pred, None, &dataset.test_out_re, None)?,
            rel_l2_im: None,
        })
    }
}

fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let cols = t.cols();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * cols..(i + 1) * cols]);
    }
    Tensor::from_parts(vec![idx.len(), cols], data)
}

/// Train a model on a dataset.
///
/// Per epoch: shuffle function indices (seeded), iterate batches, forward on
/// (sensor rows, all query points), mean-squared-error loss, backward, Adam.
/// Test metrics refresh on the eval cadence; the best-test-loss checkpoint
/// and the final checkpoint (plus `loss.csv`) land in `out_dir` when given.
/// A non-finite loss or gradient aborts with the artifacts written so far,
/// so the best checkpoint survives a divergence.
pub fn train(
    spec: &DeepOnetSpec,
    params: &mut ModelParams,
    dataset: &OperatorDataset,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<RunRecord> {
    config.validate()?;
    spec.validate()?;
    params.matches(spec)?;
    if spec.complex_output != dataset.manifest.complex_outputs() {
        return Err(Error::Contract(format!(
            "model output mode ({}) does not match dataset kind ({})",
            if spec.complex_output { "complex" } else { "real" },
            dataset.manifest.kind
        )));
    }
    if spec.sensor_count() != dataset.manifest.n_sensors {
        return Err(Error::dim(format!(
            "branch expects {} sensors, dataset provides {}",
            spec.sensor_count(),
            dataset.manifest.n_sensors
        )));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let start = Instant::now();
    let queries = Tensor::from_parts(vec![dataset.queries.len(), 1], dataset.queries.clone());
    let n_train = dataset.manifest.n_train;
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new();
    let mut record = RunRecord::default();
    let mut best: Option<(usize, f64)> = None;

    let finish = |record: &mut RunRecord,
                  params: &ModelParams,
                  best: &Option<(usize, f64)>|
     -> Result<()> {
        if let Some(dir) = out_dir {
            write_checkpoint(spec, params, &dir.join("checkpoint_final.mson"))?;
            write_atomic(&dir.join("loss.csv"), record.loss_csv())?;
        }
        if let Some((epoch, loss)) = best {
            record.best_epoch = *epoch;
            record.best_test_loss = *loss;
        }
        record.final_test_loss = record.rows.last().map_or(f64::NAN, |r| r.test_loss);
        Ok(())
    };

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let sensors = gather_rows(&dataset.train_in, batch);
            let target_re = gather_rows(&dataset.train_out_re, batch);

            let mut tape = Tape::new();
            let model = ModelNodes::stage(&mut tape, params, true);
            let sensor_node = tape.leaf(sensors);
            let query_node = tape.leaf(queries.clone());
            let loss_node = if spec.complex_output {
                let (re, im) =
                    deeponet_eval_complex(&mut tape, spec, &model, sensor_node, query_node)?;
                let t_re = tape.leaf(target_re);
                let t_im = tape.leaf(gather_rows(
                    dataset.train_out_im.as_ref().unwrap(),
                    batch,
                ));
                let l_re = tape.mse(re, t_re)?;
                let l_im = tape.mse(im, t_im)?;
                tape.add_scalars(l_re, l_im)?
            } else {
                let out = deeponet_eval(&mut tape, spec, &model, sensor_node, query_node)?;
                let t_re = tape.leaf(target_re);
                tape.mse(out, t_re)?
            };
            let batch_loss = tape.value(loss_node).data()[0];
            if !batch_loss.is_finite() {
                finish(&mut record, params, &best)?;
                return Err(Error::Divergence(format!(
                    "training loss at epoch {epoch} ({batch_loss})"
                )));
            }
            epoch_loss += batch_loss * batch.len() as f64;

            tape.backward(loss_node)?;
            let grads: Vec<Vec<f64>> = model
                .ids()
                .iter()
                .map(|id| tape.adjoint(*id).expect("parameter adjoint").to_vec())
                .collect();
            drop(tape);
            if let Err(e) = adam_step(params, &grads, &mut adam, config.learning_rate) {
                finish(&mut record, params, &best)?;
                return Err(e);
            }
        }
        let train_loss = epoch_loss / n_train as f64;

        let due = epoch % config.eval_every == 0 || epoch == 1 || epoch == config.epochs;
        if due {
            let metrics = evaluate(spec, params, dataset)?;
            if best.is_none() || metrics.loss < best.unwrap().1 {
                best = Some((epoch, metrics.loss));
                if let Some(dir) = out_dir {
                    write_checkpoint(spec, params, &dir.join("checkpoint_best.mson"))?;
                }
            }
            record.rows.push(EpochRow {
                epoch,
                train_loss,
                test_loss: metrics.loss,
                rel_l2_re: metrics.rel_l2_re,
                rel_l2_im: metrics.rel_l2_im,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
        } else {
            let last = record.rows.last().expect("first epoch always evaluates");
            record.rows.push(EpochRow {
                epoch,
                train_loss,
                test_loss: last.test_loss,
                rel_l2_re: last.rel_l2_re,
                rel_l2_im: last.rel_l2_im,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    finish(&mut record, params, &best)?;
    Ok(record)
}
