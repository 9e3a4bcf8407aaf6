//! Embedding vectors, the √d length convention, cosine measures and the
//! seeded random stream shared by every other module.
//!
//! Text and image embeddings always carry Euclidean length √d rather than 1,
//! so that they sit at the same scale as a standard-normal latent of the same
//! dimension (whose expected length is ≈ √d).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;
/// Relative tolerance of the √d length invariant.
pub const LENGTH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Text,
    Image,
    Latent,
}

impl Modality {
    pub fn is_normalized(self) -> bool {
        matches!(self, Modality::Text | Modality::Image)
    }
}

/// A finite real vector tagged with the space it lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
    modality: Modality,
}

impl Embedding {
    /// Validates finiteness and, for text/image, the √d length invariant.
    pub fn new(values: Vec<f64>, modality: Modality) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        check_finite(&values)?;
        if modality.is_normalized() {
            let target = (values.len() as f64).sqrt();
            let len = norm(&values);
            if ((len - target) / target).abs() > LENGTH_TOLERANCE {
                return Err(Error::ShapeMismatch(format!(
                    "{modality:?} embedding has length {len}, expected {target}"
                )));
            }
        }
        Ok(Self { values, modality })
    }

    pub fn latent(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Modality::Latent)
    }

    /// Rescales `values` to length √d and tags it with `modality`.
    pub fn normalized(values: &[f64], modality: Modality) -> Result<Self> {
        let values = normalize_to_sqrt_d(values)?;
        Ok(Self { values, modality })
    }

    /// Image-tagged vector exempt from the length check. Only projections run
    /// with renormalization disabled produce these.
    pub fn unnormalized_image(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        check_finite(&values)?;
        Ok(Self {
            values,
            modality: Modality::Image,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_same_dim(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Returns `v · (√d / ‖v‖)`.
pub fn normalize_to_sqrt_d(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidDimension(0));
    }
    check_finite(v)?;
    let n = norm(v);
    if n < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let scale = (v.len() as f64).sqrt() / n;
    Ok(v.iter().map(|x| x * scale).collect())
}

/// Cosine of the angle between two raw vectors, clamped to [−1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_same_dim(a, b)?;
    let na = norm(a);
    let nb = norm(b);
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    cosine(a.values(), b.values())
}

pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Draws a standard-normal latent of dimension `d`.
pub fn sample_latent(rng: &mut SeededRng, d: usize) -> Result<Embedding> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let values = (0..d).map(|_| rng.normal()).collect();
    Ok(Embedding {
        values,
        modality: Modality::Latent,
    })
}

/// Deterministic random stream: ChaCha8 keyed by a 64-bit seed, with
/// independent sub-streams addressable by index.
///
/// Normals come from the Box–Muller transform over consecutive uniforms, so
/// the output sequence is fixed by the seed alone.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Independent stream `stream` of `seed`; streams of one seed never overlap.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            inner,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be nonempty");
        self.inner.gen_range(0..n as u64) as usize
    }

    /// Fisher–Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// A random unit vector of dimension `d`.
    pub fn unit_vector(&mut self, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| self.normal()).collect();
            let n = norm(&v);
            if n > ZERO_NORM {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::latent(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_to_sqrt_d(&[1.0; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(
            normalize_to_sqrt_d(&[2.0, 0.0, 0.0, 0.0]).unwrap(),
            vec![2.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(normalize_to_sqrt_d(&[0.0; 4]), Err(Error::ZeroVector));
        assert_eq!(normalize_to_sqrt_d(&[1.0, f64::NAN]), Err(Error::NonFinite));
        assert_eq!(
            normalize_to_sqrt_d(&[1.0, f64::INFINITY]),
            Err(Error::NonFinite)
        );
    }

    #[test]
    fn cosine_examples() {
        let c = |a: &[f64], b: &[f64]| cosine_similarity(&emb(a), &emb(b)).unwrap();
        assert_eq!(c(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_abs_diff_eq!(c(&[1.0, 2.0], &[2.0, 4.0]), 1.0, epsilon = 1e-15);
        assert_eq!(c(&[1.0, 0.0], &[-1.0, 0.0]), -1.0);

        let dist = |a: &[f64], b: &[f64]| cosine_distance(&emb(a), &emb(b)).unwrap();
        assert_eq!(dist(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(dist(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(dist(&[1.0, 0.0], &[-1.0, 0.0]), 2.0);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&[1.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn normalized_modalities_enforce_length() {
        assert!(Embedding::new(vec![1.0, 0.0], Modality::Text).is_err());
        assert!(Embedding::new(vec![1.0, 1.0], Modality::Image).is_ok());
        assert!(Embedding::new(vec![5.0, 0.0], Modality::Latent).is_ok());
    }

    #[test]
    fn sample_latent_is_deterministic() {
        let a = sample_latent(&mut SeededRng::new(42), 4).unwrap();
        let b = sample_latent(&mut SeededRng::new(42), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.modality(), Modality::Latent);
        assert_eq!(
            sample_latent(&mut SeededRng::new(42), 0),
            Err(Error::InvalidDimension(0))
        );
    }

    #[test]
    fn sample_latent_moments() {
        let d = 16;
        let n = 100_000;
        let mut rng = SeededRng::new(7);
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for _ in 0..n {
            let z = sample_latent(&mut rng, d).unwrap();
            for (i, x) in z.values().iter().enumerate() {
                sum[i] += x;
                sum_sq[i] += x * x;
            }
        }
        for i in 0..d {
            let mean = sum[i] / n as f64;
            let std = (sum_sq[i] / n as f64 - mean * mean).sqrt();
            assert!(mean.abs() < 0.02, "component {i} mean {mean}");
            assert!((std - 1.0).abs() < 0.02, "component {i} std {std}");
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_streams() {
        for s in 0..100u64 {
            let a = sample_latent(&mut SeededRng::new(s), 8).unwrap();
            let b = sample_latent(&mut SeededRng::new(s + 1000), 8).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn streams_are_independent() {
        let a: Vec<u64> = {
            let mut r = SeededRng::for_stream(1, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SeededRng::for_stream(1, 1);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, b);
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0..10.0f64, d).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in vec_strategy(8)) {
            let once = normalize_to_sqrt_d(&v).unwrap();
            let twice = normalize_to_sqrt_d(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((norm(&once) - 8f64.sqrt()).abs() < 1e-12);
        }

        #[test]
        fn cosine_scale_invariant_and_symmetric(
            a in vec_strategy(6),
            b in vec_strategy(6),
            s in 0.01..100.0f64,
            t in 0.01..100.0f64,
        ) {
            let base = cosine(&a, &b).unwrap();
            let sa: Vec<f64> = a.iter().map(|x| x * s).collect();
            let tb: Vec<f64> = b.iter().map(|x| x * t).collect();
            prop_assert!((cosine(&sa, &tb).unwrap() - base).abs() < 1e-12);
            prop_assert!((cosine(&b, &a).unwrap() - base).abs() < 1e-15);
            prop_assert!((-1.0..=1.0).contains(&base));
        }

        #[test]
        fn collinear_pairs_have_unit_cosine(a in vec_strategy(5), s in 0.01..100.0f64) {
            let b: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
