//! Losses, the training loop, held-out evaluation and the end-to-end
//! text → image translation pipeline.

use serde::{Deserialize, Serialize};

use crate::c2s::C2SNetwork;
use crate::embedding::{cosine_similarity, dot, norm, Embedding, Modality, SeededRng, ZERO_NORM};
use crate::error::{Error, Result};
use crate::nn::{adam_step, cosine_lr, AdamState, Matrix, Mode, Schedule};
use crate::prompt::{project_text_to_image, PromptPair, DEFAULT_ALPHA};
use crate::world::{PairDataset, PairRecord, ToyWorld};

/// Stream indices carved out of the data seed.
const SPLIT_STREAM: u64 = 0;
const BATCH_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub sem_cons: f64,
    pub l1: f64,
    pub reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sem_cons: 1.0,
            l1: 0.3,
            reg: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub weights: LossWeights,
    /// Drives the holdout split, batch draws and dropout masks.
    pub data_seed: u64,
    /// Drives network initialization.
    pub init_seed: u64,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            batch_size: 16,
            lr_max: 1e-4,
            lr_min: 1e-7,
            weights: LossWeights::default(),
            data_seed: 1,
            init_seed: 2,
            holdout_fraction: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        let w = self.weights;
        if [w.sem_cons, w.l1, w.reg]
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return Err(Error::InvalidConfig(
                "loss weights must be finite and >= 0".into(),
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "holdout_fraction {} outside (0, 1)",
                self.holdout_fraction
            )));
        }
        self.schedule().map(|_| ())
    }

    /// The last iteration is step `T`, so it runs at exactly `lr_min`.
    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(
            self.lr_max,
            self.lr_min,
            self.iterations.saturating_sub(1).max(1),
        )
    }
}

/// A scalar loss with its gradient w.r.t. the predicted latents.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Matrix,
}

fn check_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::ShapeMismatch(format!("{what}: empty batch")));
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean cosine distance between each input CIE and the CIE re-extracted from
/// the image generated out of the predicted latent.
pub fn loss_sem_cons(cie_input: &Matrix, se_pred: &Matrix, world: &ToyWorld) -> Result<LossOutput> {
    let cfg = world.config();
    if cie_input.cols() != cfg.d_emb || se_pred.cols() != cfg.d_z {
        return Err(Error::ShapeMismatch(format!(
            "world expects CIE width {} and latent width {}, got {} and {}",
            cfg.d_emb,
            cfg.d_z,
            cie_input.cols(),
            se_pred.cols()
        )));
    }
    if cie_input.rows() != se_pred.rows() || se_pred.rows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "batch sizes {} and {}",
            cie_input.rows(),
            se_pred.rows()
        )));
    }
    let b = se_pred.rows() as f64;
    let mut grad = Matrix::zeros(se_pred.rows(), se_pred.cols());
    let mut total = 0.0;
    for i in 0..se_pred.rows() {
        let t = cie_input.row(i);
        let trace = world.trace(se_pred.row(i))?;
        let e = &trace.cie;
        let (nt, ne) = (norm(t), norm(e));
        if nt < ZERO_NORM || ne < ZERO_NORM {
            return Err(Error::ZeroVector);
        }
        let cos = dot(t, e) / (nt * ne);
        total += 1.0 - cos;
        let d_cie: Vec<f64> = t
            .iter()
            .zip(e)
            .map(|(tv, ev)| -(tv / (nt * ne) - cos * ev / (ne * ne)) / b)
            .collect();
        grad.row_mut(i)
            .copy_from_slice(&world.vjp_z(&trace, &d_cie));
    }
    Ok(LossOutput {
        value: total / b,
        grad,
    })
}

/// Sum of absolute component differences per sample, averaged over the batch.
pub fn loss_l1(se_pred: &Matrix, se_true: &Matrix) -> Result<LossOutput> {
    check_shape(se_pred, se_true, "l1")?;
    let b = se_pred.rows() as f64;
    let mut grad = Matrix::zeros(se_pred.rows(), se_pred.cols());
    let mut total = 0.0;
    for ((g, p), t) in grad
        .data_mut()
        .iter_mut()
        .zip(se_pred.data())
        .zip(se_true.data())
    {
        let diff = p - t;
        total += diff.abs();
        *g = sign(diff) / b;
    }
    Ok(LossOutput {
        value: total / b,
        grad,
    })
}

/// Per-sample `|mean| + |std − 1|` with the population standard deviation
/// taken across components, averaged over the batch.
pub fn loss_reg(se_pred: &Matrix) -> Result<LossOutput> {
    let d = se_pred.cols();
    if d < 2 || se_pred.rows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "regularizer needs a non-empty batch with d >= 2, got {:?}",
            se_pred.shape()
        )));
    }
    let b = se_pred.rows() as f64;
    let df = d as f64;
    let mut grad = Matrix::zeros(se_pred.rows(), d);
    let mut total = 0.0;
    for i in 0..se_pred.rows() {
        let x = se_pred.row(i);
        let (m, s) = mean_std(x);
        total += m.abs() + (s - 1.0).abs();
        let gm = sign(m) / df;
        let gs = if s > 0.0 {
            sign(s - 1.0) / (df * s)
        } else {
            0.0
        };
        for (g, xv) in grad.row_mut(i).iter_mut().zip(x) {
            *g = (gm + gs * (xv - m)) / b;
        }
    }
    Ok(LossOutput {
        value: total / b,
        grad,
    })
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub sem_cons: f64,
    pub l1: f64,
    pub reg: f64,
}

pub fn total_loss(c: LossComponents, w: &LossWeights) -> Result<f64> {
    if ![c.sem_cons, c.l1, c.reg].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(w.sem_cons * c.sem_cons + w.l1 * c.l1 + w.reg * c.reg)
}

/// Weighted sum of all three losses with the combined gradient.
pub fn combined_loss(
    cie_input: &Matrix,
    se_pred: &Matrix,
    se_true: &Matrix,
    world: &ToyWorld,
    weights: &LossWeights,
) -> Result<(LossComponents, f64, Matrix)> {
    let sem = loss_sem_cons(cie_input, se_pred, world)?;
    let l1 = loss_l1(se_pred, se_true)?;
    let reg = loss_reg(se_pred)?;
    let components = LossComponents {
        sem_cons: sem.value,
        l1: l1.value,
        reg: reg.value,
    };
    let total = total_loss(components, weights)?;
    let mut grad = sem.grad.map(|g| g * weights.sem_cons);
    grad.add_assign(&l1.grad.map(|g| g * weights.l1));
    grad.add_assign(&reg.grad.map(|g| g * weights.reg));
    Ok((components, total, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub total: f64,
    pub sem_cons: f64,
    pub l1: f64,
    pub reg: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_cie_cosine_distance: f64,
    pub mean_abs_mean_of_se_pred: f64,
    pub mean_abs_std_minus_one: f64,
    pub history: Vec<HistoryEntry>,
}

/// Everything a training run produces besides the updated network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Evaluated on the holdout, with the full per-iteration history.
    pub metrics: Metrics,
    pub train_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
    /// Dataset indices drawn at every iteration.
    pub batch_trace: Vec<Vec<usize>>,
    pub optimizer: AdamState,
}

/// Seeded permutation split; the first `⌈n · fraction⌉` shuffled indices
/// form the holdout.
pub fn split_holdout(n: usize, config: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_hold = (n as f64 * config.holdout_fraction).ceil() as usize;
    if n_hold == 0 || n < n_hold + config.batch_size {
        return Err(Error::InsufficientData(format!(
            "{n} records cannot supply a holdout of {n_hold} and batches of {}",
            config.batch_size
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    SeededRng::for_stream(config.data_seed, SPLIT_STREAM).shuffle(&mut perm);
    let train = perm.split_off(n_hold);
    Ok((train, perm))
}

fn gather(records: &[PairRecord], idx: &[usize]) -> Result<(Matrix, Matrix)> {
    let cie: Vec<&[f64]> = idx.iter().map(|&i| records[i].cie.as_slice()).collect();
    let se: Vec<&[f64]> = idx.iter().map(|&i| records[i].se.as_slice()).collect();
    Ok((Matrix::from_rows(&cie)?, Matrix::from_rows(&se)?))
}

fn check_dims(net: &C2SNetwork, world: &ToyWorld) -> Result<()> {
    let cfg = world.config();
    if net.width() != cfg.d_emb || net.width() != cfg.d_z {
        return Err(Error::ShapeMismatch(format!(
            "network width {} incompatible with world (d_emb {}, d_z {})",
            net.width(),
            cfg.d_emb,
            cfg.d_z
        )));
    }
    Ok(())
}

/// Runs the full optimization loop in place and evaluates on the holdout.
pub fn train(
    net: &mut C2SNetwork,
    dataset: &PairDataset,
    world: &ToyWorld,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    dataset.check_world(world)?;
    check_dims(net, world)?;
    let schedule = config.schedule()?;
    let (train_idx, holdout_idx) = split_holdout(dataset.len(), config)?;

    let mut batch_rng = SeededRng::for_stream(config.data_seed, BATCH_STREAM);
    let mut dropout_rng = SeededRng::for_stream(config.data_seed, DROPOUT_STREAM);
    let mut adam = AdamState::new(net.network().params());
    let mut history = Vec::with_capacity(config.iterations);
    let mut batch_trace = Vec::with_capacity(config.iterations);

    for step in 0..config.iterations {
        let batch: Vec<usize> = (0..config.batch_size)
            .map(|_| train_idx[batch_rng.index(train_idx.len())])
            .collect();
        let (cie, se_true) = gather(&dataset.records, &batch)?;
        let acts = net.forward(&cie, Mode::Train, &mut dropout_rng)?;
        let (c, total, grad) =
            combined_loss(&cie, acts.output(), &se_true, world, &config.weights)?;
        let grads = net.network().backward(&acts, &grad)?;
        let lr = cosine_lr(step.min(schedule.total_steps), &schedule)?;
        adam_step(net.network_mut().params_mut(), &grads, &mut adam, lr)?;
        history.push(HistoryEntry {
            total,
            sem_cons: c.sem_cons,
            l1: c.l1,
            reg: c.reg,
            lr,
        });
        batch_trace.push(batch);
    }

    let holdout: Vec<PairRecord> = holdout_idx
        .iter()
        .map(|&i| dataset.records[i].clone())
        .collect();
    let mut metrics = evaluate(net, world, &holdout)?;
    metrics.history = history;
    Ok(TrainReport {
        metrics,
        train_indices: train_idx,
        holdout_indices: holdout_idx,
        batch_trace,
        optimizer: adam,
    })
}

/// Eval-mode metrics over held-out records; the history is left empty.
pub fn evaluate(net: &C2SNetwork, world: &ToyWorld, holdout: &[PairRecord]) -> Result<Metrics> {
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    check_dims(net, world)?;
    let idx: Vec<usize> = (0..holdout.len()).collect();
    let (cie, _) = gather(holdout, &idx)?;
    let se = net.project(&cie)?;
    let n = holdout.len() as f64;
    let (mut dist, mut abs_mean, mut abs_std) = (0.0, 0.0, 0.0);
    for i in 0..holdout.len() {
        let z = se.row(i);
        let rebuilt = world.trace(z)?.cie;
        dist += 1.0 - crate::embedding::cosine(cie.row(i), &rebuilt)?;
        let (m, s) = mean_std(z);
        abs_mean += m.abs();
        abs_std += (s - 1.0).abs();
    }
    Ok(Metrics {
        mean_cie_cosine_distance: dist / n,
        mean_abs_mean_of_se_pred: abs_mean / n,
        mean_abs_std_minus_one: abs_std / n,
        history: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TranslateInput {
    Attributes(Vec<f64>),
    Cte(Embedding),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub cte_input: Embedding,
    pub cie_input: Embedding,
    pub se: Vec<f64>,
    pub image: Vec<f64>,
    pub cie_rebuilt: Embedding,
    pub similarity: f64,
}

/// Text → projected CIE → latent → image → re-encoded CIE.
pub fn translate(
    world: &ToyWorld,
    prompts: &PromptPair,
    net: &C2SNetwork,
    input: &TranslateInput,
    alpha: Option<f64>,
    renormalize: bool,
) -> Result<Translation> {
    check_dims(net, world)?;
    let cte_input = match input {
        TranslateInput::Attributes(a) => world.encode_text(a)?,
        TranslateInput::Cte(e) => {
            if e.modality() != Modality::Text {
                return Err(Error::InvalidConfig(
                    "translate expects a text embedding".into(),
                ));
            }
            e.clone()
        }
    };
    if cte_input.dim() != prompts.dim() {
        return Err(Error::DimensionMismatch {
            expected: prompts.dim(),
            actual: cte_input.dim(),
        });
    }
    let cie_input = project_text_to_image(
        &cte_input,
        prompts,
        alpha.unwrap_or(DEFAULT_ALPHA),
        renormalize,
    )?;
    let se = net
        .project(&Matrix::from_rows(&[cie_input.values()])?)?
        .into_data();
    let image = world.generate(&se)?;
    let cie_rebuilt = world.encode_image(&image)?;
    let similarity = cosine_similarity(&cie_input, &cie_rebuilt)?;
    Ok(Translation {
        cte_input,
        cie_input,
        se,
        image,
        cie_rebuilt,
        similarity,
    })
}
