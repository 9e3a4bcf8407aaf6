//! Prompt embeddings and the prompt-based linear projection between the
//! text and image embedding spaces.
//!
//! A prompt is the embedding that maximizes the average cosine similarity to
//! a set of embeddings. For equal-length members the maximizer is the
//! direction of their arithmetic mean, so no iterative solve is needed.
//!
//! Translating text to image then subtracts the text prompt and adds the
//! image prompt: `CIE = CIE_prompt + α · (CTE − CTE_prompt)`.

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, normalize_to_sqrt_d, Embedding, Modality};
use crate::error::{Error, Result};
use crate::world::ToyWorld;

/// Mean norms below this have no meaningful direction.
pub const DEGENERATE_MEAN_NORM: f64 = 1e-10;
pub const DEFAULT_ALPHA: f64 = 1.75;
pub const ALPHA_TRANSLATE_RANGE: (f64, f64) = (1.0, 2.0);
pub const ALPHA_MANIPULATE_RANGE: (f64, f64) = (0.05, 0.7);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptProvenance {
    /// A description of the text prompt, or "set-average".
    pub text_source: String,
    /// Number of image embeddings averaged into the image prompt.
    pub image_set_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPair {
    pub cte_prompt: Embedding,
    pub cie_prompt: Embedding,
    pub provenance: PromptProvenance,
}

impl PromptPair {
    pub fn new(
        cte_prompt: Embedding,
        cie_prompt: Embedding,
        provenance: PromptProvenance,
    ) -> Result<Self> {
        if cte_prompt.modality() != Modality::Text || cie_prompt.modality() != Modality::Image {
            return Err(Error::InvalidConfig(
                "prompt pair needs a text and an image embedding".into(),
            ));
        }
        if cte_prompt.dim() != cie_prompt.dim() {
            return Err(Error::DimensionMismatch {
                expected: cte_prompt.dim(),
                actual: cie_prompt.dim(),
            });
        }
        if provenance.image_set_size == 0 {
            return Err(Error::EmptySet);
        }
        // re-validate the length invariant (deserialized pairs bypass constructors)
        let cte_prompt = Embedding::new(cte_prompt.into_values(), Modality::Text)?;
        let cie_prompt = Embedding::new(cie_prompt.into_values(), Modality::Image)?;
        Ok(Self {
            cte_prompt,
            cie_prompt,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.cte_prompt.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub alpha_translate: f64,
    pub alpha_manipulate_range: (f64, f64),
    pub renormalize_output: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            alpha_translate: DEFAULT_ALPHA,
            alpha_manipulate_range: ALPHA_MANIPULATE_RANGE,
            renormalize_output: true,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = ALPHA_TRANSLATE_RANGE;
        if !(lo..=hi).contains(&self.alpha_translate) {
            return Err(Error::RangeError {
                key: "alpha".into(),
                message: format!("{} outside [{lo}, {hi}]", self.alpha_translate),
            });
        }
        Ok(())
    }
}

/// Mean cosine similarity between `candidate` and every member of `set`.
pub fn average_cosine_objective(candidate: &[f64], set: &[Embedding]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut total = 0.0;
    for e in set {
        total += cosine(candidate, e.values())?;
    }
    Ok(total / set.len() as f64)
}

/// The √d-length direction of the set's arithmetic mean.
pub fn compute_set_prompt(set: &[Embedding], modality: Modality) -> Result<Embedding> {
    let first = set.first().ok_or(Error::EmptySet)?;
    let d = first.dim();
    let mut mean = vec![0.0; d];
    for e in set {
        if e.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: e.dim(),
            });
        }
        for (m, v) in mean.iter_mut().zip(e.values()) {
            *m += v;
        }
    }
    let n = set.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mean_norm = crate::embedding::norm(&mean);
    if mean_norm < DEGENERATE_MEAN_NORM {
        return Err(Error::DegeneratePromptSet(mean_norm));
    }
    Embedding::normalized(&mean, modality)
}

/// Encodes an attribute vector as a text prompt.
pub fn text_prompt_from_attributes(world: &ToyWorld, attrs: &[f64]) -> Result<Embedding> {
    world.encode_text(attrs)
}

/// `base + α · (to − from)`, optionally rescaled to length √d.
fn shift(
    base: &[f64],
    from: &[f64],
    to: &[f64],
    alpha: f64,
    renormalize: bool,
) -> Result<Embedding> {
    let d = base.len();
    for v in [from, to] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
    }
    if !alpha.is_finite() {
        return Err(Error::NonFinite);
    }
    let raw: Vec<f64> = base
        .iter()
        .zip(from.iter().zip(to))
        .map(|(b, (f, t))| b + alpha * (t - f))
        .collect();
    // a zero shift leaves an already-normalized base bit-identical
    if renormalize && raw == base {
        if let Ok(same) = Embedding::new(raw.clone(), Modality::Image) {
            return Ok(same);
        }
    }
    if renormalize {
        let values = normalize_to_sqrt_d(&raw).map_err(|e| match e {
            Error::ZeroVector => Error::DegenerateProjection,
            other => other,
        })?;
        Embedding::new(values, Modality::Image)
    } else {
        Ok(Embedding::unnormalized_image(raw)?)
    }
}

/// `CIE = CIE_prompt + α · (CTE_input − CTE_prompt)`.
pub fn project_text_to_image(
    cte_input: &Embedding,
    prompts: &PromptPair,
    alpha: f64,
    renormalize: bool,
) -> Result<Embedding> {
    shift(
        prompts.cie_prompt.values(),
        prompts.cte_prompt.values(),
        cte_input.values(),
        alpha,
        renormalize,
    )
}

/// `CIE_target = CIE_origin + α · (CTE_target − CTE_origin)`.
pub fn manipulate(
    cie_origin: &Embedding,
    cte_origin: &Embedding,
    cte_target: &Embedding,
    alpha: f64,
    renormalize: bool,
) -> Result<Embedding> {
    if alpha < 0.0 {
        return Err(Error::RangeError {
            key: "alpha".into(),
            message: format!("manipulation strength must be >= 0, got {alpha}"),
        });
    }
    shift(
        cie_origin.values(),
        cte_origin.values(),
        cte_target.values(),
        alpha,
        renormalize,
    )
}
