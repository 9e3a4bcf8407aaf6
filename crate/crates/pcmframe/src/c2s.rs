//! The dense CLIP-to-latent projection network and its plain-MLP baseline.
//!
//! Default instance (width 512):
//!
//! ```text
//! head  1-0 FC+PReLU, 1-1 FC+PReLU
//! body  5 × [ dense block, add(block input), dropout 0.1 ]
//! tail  3-0 FC+PReLU, 3-1 FC
//! ```
//!
//! Each dense block has 10 FC+BN+PReLU rows; four concatenations widen the
//! running feature map to 2d, 3d, 4d and 5d before projecting back to d.
//! Total FC count is `2 + 10·n_blocks + 2` (54 at defaults).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::embedding::SeededRng;
use crate::error::{Error, Result};
use crate::nn::{Activations, LayerSpec, Matrix, Mode, Network, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C2SConfig {
    pub d: usize,
    pub n_blocks: usize,
    pub dropout_rate: f64,
}

impl Default for C2SConfig {
    fn default() -> Self {
        Self {
            d: 512,
            n_blocks: 5,
            dropout_rate: 0.1,
        }
    }
}

impl C2SConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidConfig(format!(
                "d must be >= 2, got {}",
                self.d
            )));
        }
        if self.n_blocks == 0 {
            return Err(Error::InvalidConfig("n_blocks must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Architecture {
    Dense(C2SConfig),
    PlainMlp { d: usize, n_fc: usize },
}

impl Architecture {
    pub fn width(&self) -> usize {
        match self {
            Architecture::Dense(c) => c.d,
            Architecture::PlainMlp { d, .. } => *d,
        }
    }

    pub fn build_layers(&self) -> Result<(Vec<LayerSpec>, Vec<RowSpan>)> {
        match *self {
            Architecture::Dense(config) => {
                config.validate()?;
                Ok(c2s_layers(&config))
            }
            Architecture::PlainMlp { d, n_fc } => {
                if d < 2 || n_fc == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "plain MLP needs d >= 2 and n_fc >= 1 (got {d}, {n_fc})"
                    )));
                }
                Ok(plain_mlp_layers(d, n_fc))
            }
        }
    }
}

/// One row of an architecture table: an id and the layers realizing it.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpan {
    pub id: String,
    pub layers: Range<usize>,
    pub dense_block: bool,
}

/// A row of the architecture table recovered by walking the built graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchRow {
    pub id: String,
    pub name: String,
    pub in_size: Option<usize>,
    pub out_size: Option<usize>,
}

/// Appends layers while tracking the current node id.
struct GraphBuilder {
    layers: Vec<LayerSpec>,
    rows: Vec<RowSpan>,
    /// node id of local node 0 (block input) when building nested blocks
    base: NodeId,
}

impl GraphBuilder {
    fn new(base: NodeId) -> Self {
        Self {
            layers: Vec::new(),
            rows: Vec::new(),
            base,
        }
    }

    fn current(&self) -> NodeId {
        self.base + self.layers.len()
    }

    fn row(&mut self, id: impl Into<String>, layers: Vec<LayerSpec>) -> NodeId {
        let start = self.layers.len();
        self.layers.extend(layers);
        self.rows.push(RowSpan {
            id: id.into(),
            layers: start..self.layers.len(),
            dense_block: false,
        });
        self.current()
    }
}

fn fc(input: usize, output: usize) -> LayerSpec {
    LayerSpec::FullyConnected { input, output }
}

fn fc_bn_prelu(input: usize, d: usize) -> Vec<LayerSpec> {
    vec![fc(input, d), LayerSpec::batch_norm(d), LayerSpec::PRelu]
}

/// Dense block layers with node ids relative to `input` (the block input).
fn dense_block_at(d: usize, input: NodeId) -> (Vec<LayerSpec>, Vec<RowSpan>) {
    let mut b = GraphBuilder::new(input);
    b.row("0", fc_bn_prelu(d, d));
    let mut prev = b.row("1", fc_bn_prelu(d, d));
    let mut concat_src = input;
    let mut width = d;
    let mut row = 2;
    for _ in 0..4 {
        let joined = b.row(
            row.to_string(),
            vec![LayerSpec::Concat {
                sources: vec![concat_src, prev],
            }],
        );
        width += d;
        b.row((row + 1).to_string(), fc_bn_prelu(width, d));
        prev = b.row((row + 2).to_string(), fc_bn_prelu(d, d));
        concat_src = joined;
        row += 3;
    }
    (b.layers, b.rows)
}

/// Standalone dense block: input `(batch, d)` → output `(batch, d)`.
pub fn build_dense_block(d: usize) -> (Vec<LayerSpec>, Vec<RowSpan>) {
    dense_block_at(d, 0)
}

fn c2s_layers(config: &C2SConfig) -> (Vec<LayerSpec>, Vec<RowSpan>) {
    let d = config.d;
    let mut b = GraphBuilder::new(0);
    b.row("1-0", vec![fc(d, d), LayerSpec::PRelu]);
    let mut trunk = b.row("1-1", vec![fc(d, d), LayerSpec::PRelu]);
    let mut row = 0;
    for _ in 0..config.n_blocks {
        let start = b.layers.len();
        let (block, _) = dense_block_at(d, trunk);
        b.layers.extend(block);
        b.rows.push(RowSpan {
            id: format!("2-{row}"),
            layers: start..b.layers.len(),
            dense_block: true,
        });
        b.row(
            format!("2-{}", row + 1),
            vec![LayerSpec::Add { source: trunk }],
        );
        trunk = b.row(
            format!("2-{}", row + 2),
            vec![LayerSpec::Dropout {
                rate: config.dropout_rate,
            }],
        );
        row += 3;
    }
    b.row("3-0", vec![fc(d, d), LayerSpec::PRelu]);
    b.row("3-1", vec![fc(d, d)]);
    (b.layers, b.rows)
}

fn plain_mlp_layers(d: usize, n_fc: usize) -> (Vec<LayerSpec>, Vec<RowSpan>) {
    let mut b = GraphBuilder::new(0);
    for i in 0..n_fc {
        let mut layers = vec![fc(d, d)];
        if i + 1 < n_fc {
            layers.push(LayerSpec::PRelu);
        }
        b.row(i.to_string(), layers);
    }
    (b.layers, b.rows)
}

/// The trained projection from image embeddings to generator latents.
#[derive(Debug, Clone, PartialEq)]
pub struct C2SNetwork {
    arch: Architecture,
    net: Network,
    rows: Vec<RowSpan>,
}

impl C2SNetwork {
    pub fn build(arch: Architecture, rng: &mut SeededRng) -> Result<Self> {
        let (layers, rows) = arch.build_layers()?;
        let net = Network::new(arch.width(), layers, rng)?;
        Ok(Self { arch, net, rows })
    }

    /// Wraps an existing graph, checking that it matches `arch`.
    pub fn from_parts(arch: Architecture, net: Network) -> Result<Self> {
        let (layers, rows) = arch.build_layers()?;
        if net.layers() != layers.as_slice() {
            return Err(Error::ShapeMismatch(
                "network graph does not match its architecture".into(),
            ));
        }
        Ok(Self { arch, net, rows })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn width(&self) -> usize {
        self.arch.width()
    }

    pub fn count_fc_layers(&self) -> usize {
        self.net.count_fc_layers()
    }

    pub fn rows(&self) -> &[RowSpan] {
        &self.rows
    }

    /// Layer ranges of every dense block, in order.
    pub fn dense_block_ranges(&self) -> Vec<Range<usize>> {
        self.rows
            .iter()
            .filter(|r| r.dense_block)
            .map(|r| r.layers.clone())
            .collect()
    }

    /// Eval-mode projection of a batch of image embeddings.
    pub fn project(&self, cie: &Matrix) -> Result<Matrix> {
        self.net.infer(cie)
    }

    /// Forward pass in either mode; Train mode updates BatchNorm statistics.
    pub fn forward(
        &mut self,
        cie: &Matrix,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<Activations> {
        match mode {
            Mode::Train => self.net.forward(cie, mode, rng),
            Mode::Eval => self.net.forward_eval(cie),
        }
    }

    /// Recovers the architecture table by walking the graph.
    pub fn architecture_rows(&self) -> Vec<ArchRow> {
        describe_rows(&self.net, &self.rows)
    }
}

/// Describes each row span of `net` from the layers it contains.
pub fn describe_rows(net: &Network, rows: &[RowSpan]) -> Vec<ArchRow> {
    let layers = net.layers();
    // maps a node id back to the id of the row that produced it
    let node_row = |node: NodeId| -> String {
        if node == 0 {
            return "input".into();
        }
        rows.iter()
            .find(|r| r.layers.end == node)
            .map_or_else(|| format!("node{node}"), |r| r.id.clone())
    };
    rows.iter()
        .map(|r| {
            let span = &layers[r.layers.clone()];
            let out = net.node_width(r.layers.end);
            if r.dense_block {
                return ArchRow {
                    id: r.id.clone(),
                    name: "Dense block".into(),
                    in_size: Some(net.node_width(r.layers.start)),
                    out_size: Some(out),
                };
            }
            match span {
                [LayerSpec::Concat { sources }] => ArchRow {
                    id: r.id.clone(),
                    name: format!(
                        "Concat({})",
                        sources
                            .iter()
                            .map(|&s| node_row(s))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                    in_size: None,
                    out_size: Some(out),
                },
                [LayerSpec::Add { source }] => ArchRow {
                    id: r.id.clone(),
                    name: format!("{} + {}", node_row(*source), node_row(r.layers.start)),
                    in_size: None,
                    out_size: None,
                },
                [LayerSpec::Dropout { .. }] => ArchRow {
                    id: r.id.clone(),
                    name: "Dropout".into(),
                    in_size: None,
                    out_size: None,
                },
                _ => {
                    let in_size = span.iter().find_map(|l| match l {
                        LayerSpec::FullyConnected { input, .. } => Some(*input),
                        _ => None,
                    });
                    ArchRow {
                        id: r.id.clone(),
                        name: span
                            .iter()
                            .map(LayerSpec::short_name)
                            .collect::<Vec<_>>()
                            .join("+"),
                        in_size,
                        out_size: Some(out),
                    }
                }
            }
        })
        .collect()
}

pub fn build_c2s(config: C2SConfig, rng: &mut SeededRng) -> Result<C2SNetwork> {
    C2SNetwork::build(Architecture::Dense(config), rng)
}

pub fn build_plain_mlp(d: usize, n_fc: usize, rng: &mut SeededRng) -> Result<C2SNetwork> {
    C2SNetwork::build(Architecture::PlainMlp { d, n_fc }, rng)
}
