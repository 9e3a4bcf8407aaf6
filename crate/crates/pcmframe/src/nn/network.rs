//! Layer graph, parameter storage and exact reverse-mode differentiation.
//!
//! Node 0 is the network input; layer `k` writes node `k + 1`. Every layer
//! except `Concat` reads the node directly before it. `Concat` reads only its
//! listed sources, `Add` sums the previous node with `source`.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::embedding::SeededRng;
use crate::error::{Error, Result};

pub type NodeId = usize;

pub const PRELU_INIT_SLOPE: f64 = 0.25;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    FullyConnected {
        input: usize,
        output: usize,
    },
    PRelu,
    BatchNorm {
        features: usize,
        momentum: f64,
        eps: f64,
    },
    Dropout {
        rate: f64,
    },
    Concat {
        sources: Vec<NodeId>,
    },
    Add {
        source: NodeId,
    },
}

impl LayerSpec {
    pub fn batch_norm(features: usize) -> Self {
        LayerSpec::BatchNorm {
            features,
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            LayerSpec::FullyConnected { .. } => "FC",
            LayerSpec::PRelu => "PReLU",
            LayerSpec::BatchNorm { .. } => "BN",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Concat { .. } => "Concat",
            LayerSpec::Add { .. } => "Add",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Running statistics are stored here too but never receive gradients.
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    fn push(&mut self, name: String, shape: Vec<usize>, data: Vec<f64>, trainable: bool) -> usize {
        self.tensors.push(Tensor {
            name,
            shape,
            data,
            trainable,
        });
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.data.len())
            .sum()
    }

    /// Flattens trainable values in storage order.
    pub fn flatten_trainable(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .filter(|t| t.trainable)
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    pub fn assign_trainable(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors.iter_mut().filter(|t| t.trainable) {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slots {
    None,
    Fc {
        weight: usize,
        bias: usize,
    },
    PRelu {
        slope: usize,
    },
    Bn {
        gamma: usize,
        beta: usize,
        mean: usize,
        var: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    slots: Vec<Slots>,
    widths: Vec<usize>,
    params: ParamStore,
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    Dropout(Vec<f64>),
    BatchNorm { xhat: Matrix, inv_std: Vec<f64> },
}

/// Everything `backward` needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    nodes: Vec<Matrix>,
    caches: Vec<Cache>,
    mode: Mode,
}

impl Activations {
    pub fn output(&self) -> &Matrix {
        self.nodes.last().expect("at least the input node")
    }

    pub fn node(&self, id: NodeId) -> &Matrix {
        &self.nodes[id]
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// One entry per ParamStore tensor; empty for non-trainable tensors.
    pub params: Vec<Vec<f64>>,
    pub input: Matrix,
}

impl Gradients {
    pub fn flatten_trainable(&self) -> Vec<f64> {
        self.params.iter().flat_map(|g| g.iter().copied()).collect()
    }
}

struct BnUpdate {
    layer: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl Network {
    /// Validates the graph and initializes parameters:
    /// FC weights ~ N(0, 2/(in+out)), zero biases, PReLU slope 0.25,
    /// BN scale 1 / shift 0 / running mean 0 / running variance 1.
    pub fn new(input_width: usize, layers: Vec<LayerSpec>, rng: &mut SeededRng) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let mut widths = vec![input_width];
        let mut slots = Vec::with_capacity(layers.len());
        let mut params = ParamStore::default();
        for (i, layer) in layers.iter().enumerate() {
            let prev = widths[i];
            let (width, slot) = match layer {
                LayerSpec::FullyConnected { input, output } => {
                    if *input != prev || *output == 0 {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: FC expects {input} inputs, previous node has {prev}"
                        )));
                    }
                    let std = (2.0 / (input + output) as f64).sqrt();
                    let w = (0..input * output).map(|_| rng.normal() * std).collect();
                    let weight =
                        params.push(format!("layer{i}.weight"), vec![*output, *input], w, true);
                    let bias = params.push(
                        format!("layer{i}.bias"),
                        vec![*output],
                        vec![0.0; *output],
                        true,
                    );
                    (*output, Slots::Fc { weight, bias })
                }
                LayerSpec::PRelu => {
                    let slope = params.push(
                        format!("layer{i}.slope"),
                        vec![1],
                        vec![PRELU_INIT_SLOPE],
                        true,
                    );
                    (prev, Slots::PRelu { slope })
                }
                LayerSpec::BatchNorm {
                    features,
                    momentum,
                    eps,
                } => {
                    if *features != prev {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: BatchNorm over {features} features, previous node has {prev}"
                        )));
                    }
                    if !(0.0..=1.0).contains(momentum) || *eps <= 0.0 {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: bad BatchNorm hyperparameters"
                        )));
                    }
                    let f = *features;
                    let gamma = params.push(format!("layer{i}.gamma"), vec![f], vec![1.0; f], true);
                    let beta = params.push(format!("layer{i}.beta"), vec![f], vec![0.0; f], true);
                    let mean = params.push(
                        format!("layer{i}.running_mean"),
                        vec![f],
                        vec![0.0; f],
                        false,
                    );
                    let var = params.push(
                        format!("layer{i}.running_var"),
                        vec![f],
                        vec![1.0; f],
                        false,
                    );
                    (
                        prev,
                        Slots::Bn {
                            gamma,
                            beta,
                            mean,
                            var,
                        },
                    )
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::InvalidConfig(format!(
                            "layer {i}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    (prev, Slots::None)
                }
                LayerSpec::Concat { sources } => {
                    if sources.is_empty() || sources.iter().any(|&s| s > i) {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: concat sources must be earlier nodes"
                        )));
                    }
                    (sources.iter().map(|&s| widths[s]).sum(), Slots::None)
                }
                LayerSpec::Add { source } => {
                    if *source > i || widths[*source] != prev {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {i}: add source must be an earlier node of width {prev}"
                        )));
                    }
                    (prev, Slots::None)
                }
            };
            widths.push(width);
            slots.push(slot);
        }
        Ok(Self {
            layers,
            slots,
            widths,
            params,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Width of node `id` (0 = input).
    pub fn node_width(&self, id: NodeId) -> usize {
        self.widths[id]
    }

    pub fn count_fc_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::FullyConnected { .. }))
            .count()
    }

    /// Parameter tensor indices owned by `layer`.
    pub fn layer_params(&self, layer: usize) -> Vec<usize> {
        match self.slots[layer] {
            Slots::None => vec![],
            Slots::Fc { weight, bias } => vec![weight, bias],
            Slots::PRelu { slope } => vec![slope],
            Slots::Bn {
                gamma,
                beta,
                mean,
                var,
            } => vec![gamma, beta, mean, var],
        }
    }

    /// Runs the graph. Train mode samples dropout masks from `rng`, uses batch
    /// statistics in BatchNorm and updates the running statistics.
    pub fn forward(
        &mut self,
        input: &Matrix,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<Activations> {
        let (acts, updates) = self.run(input, mode, Some(rng))?;
        for u in updates {
            let (momentum, mean_idx, var_idx) = match (&self.layers[u.layer], self.slots[u.layer]) {
                (LayerSpec::BatchNorm { momentum, .. }, Slots::Bn { mean, var, .. }) => {
                    (*momentum, mean, var)
                }
                _ => unreachable!("batch-norm update for a non-BN layer"),
            };
            for (r, m) in self.params.tensors[mean_idx].data.iter_mut().zip(&u.mean) {
                *r = (1.0 - momentum) * *r + momentum * m;
            }
            for (r, v) in self.params.tensors[var_idx].data.iter_mut().zip(&u.var) {
                *r = (1.0 - momentum) * *r + momentum * v;
            }
        }
        Ok(acts)
    }

    /// Eval-mode forward that leaves the network untouched.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        let (acts, _) = self.run(input, Mode::Eval, None)?;
        Ok(acts.nodes.into_iter().last().unwrap())
    }

    /// Eval-mode forward keeping every activation (for gradients in Eval mode).
    pub fn forward_eval(&self, input: &Matrix) -> Result<Activations> {
        Ok(self.run(input, Mode::Eval, None)?.0)
    }

    fn run(
        &self,
        input: &Matrix,
        mode: Mode,
        mut rng: Option<&mut SeededRng>,
    ) -> Result<(Activations, Vec<BnUpdate>)> {
        if input.cols() != self.widths[0] {
            return Err(Error::ShapeMismatch(format!(
                "input width {} does not match network input {}",
                input.cols(),
                self.widths[0]
            )));
        }
        if input.rows() == 0 {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        if !input.is_finite() {
            return Err(Error::NonFinite);
        }
        let batch = input.rows();
        let mut nodes = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut updates = Vec::new();
        nodes.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &nodes[i];
            let (y, cache) = match (layer, self.slots[i]) {
                (LayerSpec::FullyConnected { output, .. }, Slots::Fc { weight, bias }) => {
                    let w = &self.params.tensors[weight].data;
                    let b = &self.params.tensors[bias].data;
                    (x.affine(w, b, *output), Cache::None)
                }
                (LayerSpec::PRelu, Slots::PRelu { slope }) => {
                    let a = self.params.tensors[slope].data[0];
                    (x.map(|v| if v > 0.0 { v } else { a * v }), Cache::None)
                }
                (
                    LayerSpec::BatchNorm { features, eps, .. },
                    Slots::Bn {
                        gamma,
                        beta,
                        mean,
                        var,
                    },
                ) => {
                    let f = *features;
                    let (mu, sigma2) = match mode {
                        Mode::Train => {
                            if batch < 2 {
                                return Err(Error::BatchTooSmall(batch));
                            }
                            let (mu, var_biased) = column_moments(x);
                            let unbiased = var_biased
                                .iter()
                                .map(|v| v * batch as f64 / (batch - 1) as f64)
                                .collect();
                            updates.push(BnUpdate {
                                layer: i,
                                mean: mu.clone(),
                                var: unbiased,
                            });
                            (mu, var_biased)
                        }
                        Mode::Eval => (
                            self.params.tensors[mean].data.clone(),
                            self.params.tensors[var].data.clone(),
                        ),
                    };
                    let inv_std: Vec<f64> = sigma2.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                    let g = &self.params.tensors[gamma].data;
                    let b = &self.params.tensors[beta].data;
                    let mut xhat = Matrix::zeros(batch, f);
                    let mut y = Matrix::zeros(batch, f);
                    for r in 0..batch {
                        for c in 0..f {
                            let h = (x.get(r, c) - mu[c]) * inv_std[c];
                            xhat.row_mut(r)[c] = h;
                            y.row_mut(r)[c] = g[c] * h + b[c];
                        }
                    }
                    (y, Cache::BatchNorm { xhat, inv_std })
                }
                (LayerSpec::Dropout { rate }, _) => match mode {
                    Mode::Train if *rate > 0.0 => {
                        let rng = rng
                            .as_deref_mut()
                            .expect("train-mode forward always carries an rng");
                        let keep = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..x.data().len())
                            .map(|_| if rng.uniform() < *rate { 0.0 } else { keep })
                            .collect();
                        let mut y = x.clone();
                        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        (y, Cache::Dropout(mask))
                    }
                    _ => (x.clone(), Cache::None),
                },
                (LayerSpec::Concat { sources }, _) => {
                    let parts: Vec<&Matrix> = sources.iter().map(|&s| &nodes[s]).collect();
                    (Matrix::hconcat(&parts)?, Cache::None)
                }
                (LayerSpec::Add { source }, _) => {
                    let mut y = x.clone();
                    y.add_assign(&nodes[*source]);
                    (y, Cache::None)
                }
                _ => unreachable!("slot layout fixed at construction"),
            };
            nodes.push(y);
            caches.push(cache);
        }
        Ok((
            Activations {
                nodes,
                caches,
                mode,
            },
            updates,
        ))
    }

    /// Exact gradients of `Σ output ⊙ output_gradient` with respect to every
    /// trainable tensor and to the input, for the recorded forward pass.
    pub fn backward(&self, acts: &Activations, output_gradient: &Matrix) -> Result<Gradients> {
        if acts.nodes.len() != self.layers.len() + 1
            || acts.caches.len() != self.layers.len()
            || acts
                .nodes
                .iter()
                .zip(&self.widths)
                .any(|(n, &w)| n.cols() != w)
        {
            return Err(Error::StaleActivations);
        }
        if output_gradient.shape() != acts.output().shape() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                output_gradient.shape(),
                acts.output().shape()
            )));
        }
        let batch = acts.nodes[0].rows();
        let mut params: Vec<Vec<f64>> = self
            .params
            .tensors
            .iter()
            .map(|t| {
                if t.trainable {
                    vec![0.0; t.data.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        let mut node_grads: Vec<Option<Matrix>> = vec![None; acts.nodes.len()];
        node_grads[self.layers.len()] = Some(output_gradient.clone());

        for i in (0..self.layers.len()).rev() {
            let Some(dy) = node_grads[i + 1].take() else {
                continue;
            };
            let x = &acts.nodes[i];
            match (&self.layers[i], self.slots[i], &acts.caches[i]) {
                (LayerSpec::FullyConnected { input, output }, Slots::Fc { weight, bias }, _) => {
                    let w = &self.params.tensors[weight].data;
                    let (inp, out) = (*input, *output);
                    let mut dx = Matrix::zeros(batch, inp);
                    {
                        let dw = &mut params[weight];
                        for r in 0..batch {
                            let xr = x.row(r);
                            let dyr = dy.row(r);
                            for o in 0..out {
                                let g = dyr[o];
                                if g == 0.0 {
                                    continue;
                                }
                                let wrow = &w[o * inp..(o + 1) * inp];
                                let dwrow = &mut dw[o * inp..(o + 1) * inp];
                                for k in 0..inp {
                                    dwrow[k] += g * xr[k];
                                }
                                let dxr = dx.row_mut(r);
                                for k in 0..inp {
                                    dxr[k] += g * wrow[k];
                                }
                            }
                        }
                    }
                    let db = &mut params[bias];
                    for r in 0..batch {
                        for (b, g) in db.iter_mut().zip(dy.row(r)) {
                            *b += g;
                        }
                    }
                    accumulate(&mut node_grads[i], dx);
                }
                (LayerSpec::PRelu, Slots::PRelu { slope }, _) => {
                    let a = self.params.tensors[slope].data[0];
                    let mut dx = dy.clone();
                    let mut da = 0.0;
                    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
                        if v <= 0.0 {
                            da += *d * v;
                            *d *= a;
                        }
                    }
                    params[slope][0] += da;
                    accumulate(&mut node_grads[i], dx);
                }
                (
                    LayerSpec::BatchNorm { features, .. },
                    Slots::Bn { gamma, beta, .. },
                    Cache::BatchNorm { xhat, inv_std },
                ) => {
                    let f = *features;
                    let g = &self.params.tensors[gamma].data;
                    let mut sum_dy = vec![0.0; f];
                    let mut sum_dy_xhat = vec![0.0; f];
                    for r in 0..batch {
                        for c in 0..f {
                            let d = dy.get(r, c);
                            sum_dy[c] += d;
                            sum_dy_xhat[c] += d * xhat.get(r, c);
                        }
                    }
                    for c in 0..f {
                        params[gamma][c] += sum_dy_xhat[c];
                        params[beta][c] += sum_dy[c];
                    }
                    let mut dx = Matrix::zeros(batch, f);
                    match acts.mode {
                        Mode::Train => {
                            let n = batch as f64;
                            for r in 0..batch {
                                for c in 0..f {
                                    let dxhat_sum = g[c] * sum_dy[c];
                                    let dxhat_xhat_sum = g[c] * sum_dy_xhat[c];
                                    let dxhat = g[c] * dy.get(r, c);
                                    dx.row_mut(r)[c] = inv_std[c] / n
                                        * (n * dxhat - dxhat_sum - xhat.get(r, c) * dxhat_xhat_sum);
                                }
                            }
                        }
                        Mode::Eval => {
                            for r in 0..batch {
                                for c in 0..f {
                                    dx.row_mut(r)[c] = dy.get(r, c) * g[c] * inv_std[c];
                                }
                            }
                        }
                    }
                    accumulate(&mut node_grads[i], dx);
                }
                (LayerSpec::Dropout { .. }, _, cache) => {
                    let mut dx = dy;
                    if let Cache::Dropout(mask) = cache {
                        for (d, m) in dx.data_mut().iter_mut().zip(mask) {
                            *d *= m;
                        }
                    }
                    accumulate(&mut node_grads[i], dx);
                }
                (LayerSpec::Concat { sources }, _, _) => {
                    let mut offset = 0;
                    for &s in sources {
                        let w = self.widths[s];
                        accumulate(&mut node_grads[s], dy.columns(offset, w));
                        offset += w;
                    }
                }
                (LayerSpec::Add { source }, _, _) => {
                    accumulate(&mut node_grads[*source], dy.clone());
                    accumulate(&mut node_grads[i], dy);
                }
                _ => return Err(Error::StaleActivations),
            }
        }
        let input = node_grads[0]
            .take()
            .unwrap_or_else(|| Matrix::zeros(batch, self.widths[0]));
        Ok(Gradients { params, input })
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Per-column mean and biased variance.
fn column_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}
