//! Frozen, seeded, differentiable stand-ins for a pretrained generator and a
//! pair of text/image encoders that share an embedding space.
//!
//! ```text
//! generator:      x   = tanh(V2 · tanh(V1 · z))
//! semantics:      a   = tanh(U · x)
//! image encoder:  CIE = norm√d(P · a + γ·m_I)
//! text encoder:   CTE = norm√d(P · a + γ·m_T)
//! ```
//!
//! `γ` (gap scale) separates the text and image cones the way real
//! contrastive encoders do; at `γ = 0` the two encoders coincide on matched
//! semantics. `P` is scaled by `semantic_gain` so that, at the default gain,
//! matched text/image cosines sit well below 1 and the gap dominates.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{
    check_finite, dot, norm, sample_latent, Embedding, Modality, SeededRng, ZERO_NORM,
};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Upper bound on every world dimension, keeping generated parameters small.
pub const MAX_DIM: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyWorldConfig {
    pub seed: u64,
    pub d_z: usize,
    pub d_img: usize,
    pub d_sem: usize,
    pub d_emb: usize,
    pub hidden: usize,
    pub gap_scale: f64,
    pub semantic_gain: f64,
}

impl Default for ToyWorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            d_z: 16,
            d_img: 32,
            d_sem: 16,
            d_emb: 16,
            hidden: 32,
            gap_scale: 0.5,
            semantic_gain: 0.2,
        }
    }
}

impl ToyWorldConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_z", self.d_z),
            ("d_img", self.d_img),
            ("d_sem", self.d_sem),
            ("d_emb", self.d_emb),
            ("hidden", self.hidden),
        ] {
            if !(2..=MAX_DIM).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [2, {MAX_DIM}], got {v}"
                )));
            }
        }
        if !self.gap_scale.is_finite() || self.gap_scale < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gap_scale must be finite and >= 0, got {}",
                self.gap_scale
            )));
        }
        if !self.semantic_gain.is_finite() || self.semantic_gain <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "semantic_gain must be finite and > 0, got {}",
                self.semantic_gain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorld {
    config: ToyWorldConfig,
    v1: Matrix,
    v2: Matrix,
    u: Matrix,
    p: Matrix,
    m_text: Vec<f64>,
    m_image: Vec<f64>,
    fingerprint: u64,
}

/// Intermediates of `z → CIE`, kept for the vector–Jacobian products.
#[derive(Debug, Clone)]
pub struct WorldTrace {
    pub hidden: Vec<f64>,
    pub image: Vec<f64>,
    pub attributes: Vec<f64>,
    pub pre_norm: Vec<f64>,
    pub cie: Vec<f64>,
}

fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal() * std).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

fn tanh_vec(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(f64::tanh).collect()
}

fn check_len(v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

impl ToyWorld {
    /// Draws `V1, V2, U, P, m_T, m_I` in that order from the seeded stream.
    /// Matrices are `N(0, 1/fan_in)`; `P` is additionally scaled by the
    /// semantic gain; offsets are normalized to unit length.
    pub fn new(config: ToyWorldConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = SeededRng::new(c.seed);
        let v1 = gaussian_matrix(&mut rng, c.hidden, c.d_z, (1.0 / c.d_z as f64).sqrt());
        let v2 = gaussian_matrix(&mut rng, c.d_img, c.hidden, (1.0 / c.hidden as f64).sqrt());
        let u = gaussian_matrix(&mut rng, c.d_sem, c.d_img, (1.0 / c.d_img as f64).sqrt());
        let p = gaussian_matrix(
            &mut rng,
            c.d_emb,
            c.d_sem,
            c.semantic_gain * (1.0 / c.d_sem as f64).sqrt(),
        );
        let m_text = rng.unit_vector(c.d_emb);
        let m_image = rng.unit_vector(c.d_emb);
        let mut world = Self {
            config,
            v1,
            v2,
            u,
            p,
            m_text,
            m_image,
            fingerprint: 0,
        };
        world.fingerprint = world.compute_fingerprint();
        Ok(world)
    }

    pub fn config(&self) -> &ToyWorldConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn text_offset(&self) -> &[f64] {
        &self.m_text
    }

    pub fn image_offset(&self) -> &[f64] {
        &self.m_image
    }

    /// First 8 bytes (little-endian) of SHA-256 over the config and every
    /// parameter in fixed order.
    pub fn compute_fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        let c = &self.config;
        h.update(c.seed.to_le_bytes());
        for d in [c.d_z, c.d_img, c.d_sem, c.d_emb, c.hidden] {
            h.update((d as u64).to_le_bytes());
        }
        h.update(c.gap_scale.to_le_bytes());
        h.update(c.semantic_gain.to_le_bytes());
        for m in [&self.v1, &self.v2, &self.u, &self.p] {
            for x in m.data() {
                h.update(x.to_le_bytes());
            }
        }
        for x in self.m_text.iter().chain(&self.m_image) {
            h.update(x.to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }

    /// `x = tanh(V2 · tanh(V1 · z))`.
    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, self.config.d_z)?;
        check_finite(z)?;
        let h = tanh_vec(self.v1.mul_vec(z));
        Ok(tanh_vec(self.v2.mul_vec(&h)))
    }

    /// `a = tanh(U · x)`: the semantics of an image vector.
    pub fn semantics(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.config.d_img)?;
        check_finite(x)?;
        Ok(tanh_vec(self.u.mul_vec(x)))
    }

    /// Ground-truth attributes of the image generated from `z`.
    pub fn attributes_of(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.semantics(&self.generate(z)?)
    }

    fn embed(&self, a: &[f64], offset: &[f64]) -> Vec<f64> {
        let g = self.config.gap_scale;
        self.p
            .mul_vec(a)
            .into_iter()
            .zip(offset)
            .map(|(s, m)| s + g * m)
            .collect()
    }

    pub fn encode_image(&self, x: &[f64]) -> Result<Embedding> {
        let a = self.semantics(x)?;
        Embedding::normalized(&self.embed(&a, &self.m_image), Modality::Image)
    }

    pub fn encode_text(&self, attrs: &[f64]) -> Result<Embedding> {
        check_len(attrs, self.config.d_sem)?;
        check_finite(attrs)?;
        Embedding::normalized(&self.embed(attrs, &self.m_text), Modality::Text)
    }

    /// The neutral (all-zero) attribute vector.
    pub fn neutral_attributes(&self) -> Vec<f64> {
        vec![0.0; self.config.d_sem]
    }

    /// `z → CIE` keeping every intermediate.
    pub fn trace(&self, z: &[f64]) -> Result<WorldTrace> {
        check_len(z, self.config.d_z)?;
        check_finite(z)?;
        let hidden = tanh_vec(self.v1.mul_vec(z));
        let image = tanh_vec(self.v2.mul_vec(&hidden));
        let attributes = tanh_vec(self.u.mul_vec(&image));
        let pre_norm = self.embed(&attributes, &self.m_image);
        let n = norm(&pre_norm);
        if n < ZERO_NORM {
            return Err(Error::ZeroVector);
        }
        let scale = (pre_norm.len() as f64).sqrt() / n;
        let cie = pre_norm.iter().map(|v| v * scale).collect();
        Ok(WorldTrace {
            hidden,
            image,
            attributes,
            pre_norm,
            cie,
        })
    }

    /// Pulls `∂L/∂CIE` back to `∂L/∂x` (image vector) along a trace.
    pub fn encode_image_vjp(&self, trace: &WorldTrace, d_cie: &[f64]) -> Vec<f64> {
        // CIE = √d · e/‖e‖  ⇒  ∂CIE/∂e = (√d/‖e‖)(I − ê êᵀ)
        let e = &trace.pre_norm;
        let n = norm(e);
        let k = (e.len() as f64).sqrt() / n;
        let proj = dot(d_cie, e) / (n * n);
        let d_e: Vec<f64> = d_cie
            .iter()
            .zip(e)
            .map(|(g, ev)| k * (g - proj * ev))
            .collect();
        let d_a = self.p.mul_vec_transposed(&d_e);
        let d_u: Vec<f64> = d_a
            .iter()
            .zip(&trace.attributes)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        self.u.mul_vec_transposed(&d_u)
    }

    /// Pulls `∂L/∂x` back to `∂L/∂z` through the generator.
    pub fn generate_vjp(&self, trace: &WorldTrace, d_image: &[f64]) -> Vec<f64> {
        let d_u2: Vec<f64> = d_image
            .iter()
            .zip(&trace.image)
            .map(|(g, x)| g * (1.0 - x * x))
            .collect();
        let d_h = self.v2.mul_vec_transposed(&d_u2);
        let d_u1: Vec<f64> = d_h
            .iter()
            .zip(&trace.hidden)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        self.v1.mul_vec_transposed(&d_u1)
    }

    /// `∂L/∂z` for the composed `z → CIE` map.
    pub fn vjp_z(&self, trace: &WorldTrace, d_cie: &[f64]) -> Vec<f64> {
        let d_x = self.encode_image_vjp(trace, d_cie);
        self.generate_vjp(trace, &d_x)
    }

    /// Samples `n` latents (record `i` from stream `i` of `seed`) and encodes
    /// the generated images.
    pub fn generate_pairs(&self, n: usize, seed: u64) -> Result<PairDataset> {
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = SeededRng::for_stream(seed, i as u64);
            let se = sample_latent(&mut rng, self.config.d_z)?.into_values();
            let cie = self.encode_image(&self.generate(&se)?)?.into_values();
            records.push(PairRecord { se, cie });
        }
        Ok(PairDataset {
            d_z: self.config.d_z,
            d_emb: self.config.d_emb,
            generation_seed: seed,
            fingerprint: self.fingerprint,
            records,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub se: Vec<f64>,
    pub cie: Vec<f64>,
}

/// `(SE, CIE)` training pairs tied to the world that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub d_z: usize,
    pub d_emb: usize,
    pub generation_seed: u64,
    pub fingerprint: u64,
    pub records: Vec<PairRecord>,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn check_world(&self, world: &ToyWorld) -> Result<()> {
        if self.fingerprint != world.fingerprint()
            || self.d_z != world.config().d_z
            || self.d_emb != world.config().d_emb
        {
            return Err(Error::FingerprintMismatch {
                dataset: self.fingerprint,
                world: world.fingerprint(),
            });
        }
        Ok(())
    }

    pub fn cie_embeddings(&self) -> Result<Vec<Embedding>> {
        self.records
            .iter()
            .map(|r| Embedding::normalized(&r.cie, Modality::Image))
            .collect()
    }
}
