//! Input payloads and mutation policies.
//!
//! The fuzzing loop is agnostic to what an input *is*; it only needs a way to
//! derive a changed copy. Two payload kinds are built in:
//!
//! * images — flat pixel vectors mutated by additive Gaussian noise, clipped
//!   back into the valid pixel range, optionally confined to an L-infinity
//!   ball around the original seed the element descends from;
//! * text — character sequences mutated by a uniformly chosen single-character
//!   delete, insert, or substitution.
//!
//! The ball constraint is always relative to the *seed ancestor*, not the
//! immediate parent; otherwise a long chain of mutations would drift
//! arbitrarily far while each step stays "close".

use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::tensor::{gaussian_noise, Vector};
use crate::Error;

/// A flat image: pixel values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInput {
    /// Pixel values; the valid range is a property of the mutator, not the
    /// input, so loaded data is taken as-is.
    pub pixels: Vector,
}

impl ImageInput {
    /// Wraps a pixel buffer.
    pub fn new(pixels: Vector) -> Self {
        ImageInput { pixels }
    }
}

/// A text input as a character sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TextInput {
    /// The characters, in order. Never empty for a valid fuzzing input.
    pub chars: Vec<char>,
}

impl TextInput {
    /// Builds a text input from a string slice.
    pub fn from_str(s: &str) -> Self {
        TextInput { chars: s.chars().collect() }
    }

    /// Renders the characters back into a string.
    pub fn to_string(&self) -> String {
        self.chars.iter().collect()
    }
}

/// One fuzzing input of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// An image payload.
    Image(ImageInput),
    /// A text payload.
    Text(TextInput),
}

impl Payload {
    /// The image inside, if this is an image payload.
    pub fn as_image(&self) -> Option<&ImageInput> {
        match self {
            Payload::Image(img) => Some(img),
            Payload::Text(_) => None,
        }
    }

    /// The text inside, if this is a text payload.
    pub fn as_text(&self) -> Option<&TextInput> {
        match self {
            Payload::Text(t) => Some(t),
            Payload::Image(_) => None,
        }
    }
}

/// Settings for image mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationConfig {
    /// Standard deviation of the additive Gaussian noise.
    pub sigma: f32,
    /// Valid pixel range; mutated pixels are clipped into `[range.0, range.1]`.
    pub range: (f32, f32),
    /// When set, every mutant is projected into the L-infinity ball of this
    /// radius around its seed ancestor before clipping. A radius of zero is
    /// the degenerate ball: mutants collapse back onto the ancestor.
    pub ball_radius: Option<f64>,
}

impl MutationConfig {
    /// Validates the settings.
    pub fn validate(&self) -> Result<(), Error> {
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::NegativeSigma { sigma: self.sigma });
        }
        if !(self.range.0 <= self.range.1) {
            return Err(Error::InvalidParameter { what: "pixel range lower bound above upper" });
        }
        if let Some(r) = self.ball_radius {
            if !(r >= 0.0) {
                return Err(Error::InvalidParameter { what: "ball radius must be non-negative" });
            }
        }
        Ok(())
    }
}

/// Derives a changed copy of a parent input.
///
/// `ancestor` is the original seed the parent descends from; unconstrained
/// mutators may ignore it.
pub trait Mutator {
    /// Produces one mutant. Draws from `rng` in a fixed order so campaigns
    /// replay deterministically.
    fn mutate(&self, parent: &Payload, ancestor: &Payload, rng: &mut Rng) -> Result<Payload, Error>;
}

/// Additive-Gaussian image mutator with clipping and an optional seed ball.
#[derive(Debug, Clone)]
pub struct ImageMutator {
    config: MutationConfig,
}

impl ImageMutator {
    /// Creates the mutator after validating the settings.
    pub fn new(config: MutationConfig) -> Result<Self, Error> {
        config.validate()?;
        Ok(ImageMutator { config })
    }

    /// The validated settings.
    pub fn config(&self) -> &MutationConfig {
        &self.config
    }
}

impl Mutator for ImageMutator {
    fn mutate(&self, parent: &Payload, ancestor: &Payload, rng: &mut Rng) -> Result<Payload, Error> {
        let parent = parent
            .as_image()
            .ok_or(Error::InvalidParameter { what: "image mutator applied to text input" })?;
        let ancestor = ancestor
            .as_image()
            .ok_or(Error::InvalidParameter { what: "image mutator applied to text input" })?;
        let img = mutate_image(parent, ancestor, &self.config, rng)?;
        Ok(Payload::Image(img))
    }
}

/// Adds Gaussian noise to an image, then applies the ball and range
/// constraints in that order.
///
/// Projection first and clipping second keeps *both* constraints satisfied:
/// as long as the ancestor itself lies in the pixel range, moving a projected
/// value toward the range never moves it out of the ball.
pub fn mutate_image(
    parent: &ImageInput,
    ancestor: &ImageInput,
    config: &MutationConfig,
    rng: &mut Rng,
) -> Result<ImageInput, Error> {
    config.validate()?;
    if parent.pixels.len() != ancestor.pixels.len() {
        return Err(Error::ShapeMismatch {
            expected: ancestor.pixels.len(),
            got: parent.pixels.len(),
        });
    }
    let noise = gaussian_noise(parent.pixels.len(), config.sigma, rng)?;
    let (lo, hi) = config.range;
    let mut out = Vec::with_capacity(parent.pixels.len());
    for i in 0..parent.pixels.len() {
        let mut x = parent.pixels[i] + noise[i];
        if let Some(r) = config.ball_radius {
            let center = ancestor.pixels[i] as f64;
            x = (x as f64).clamp(center - r, center + r) as f32;
        }
        out.push(x.clamp(lo, hi));
    }
    Ok(ImageInput::new(Vector::from_vec(out)))
}

/// Single-character text mutator over a fixed alphabet.
#[derive(Debug, Clone)]
pub struct TextMutator {
    alphabet: Vec<char>,
}

impl TextMutator {
    /// Creates the mutator; the alphabet supplies insert and substitute
    /// characters and must be non-empty.
    pub fn new(alphabet: Vec<char>) -> Result<Self, Error> {
        if alphabet.is_empty() {
            return Err(Error::InvalidParameter { what: "text mutation alphabet is empty" });
        }
        Ok(TextMutator { alphabet })
    }

    /// The characters available for insertion and substitution.
    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }
}

impl Mutator for TextMutator {
    fn mutate(&self, parent: &Payload, _ancestor: &Payload, rng: &mut Rng) -> Result<Payload, Error> {
        let parent = parent
            .as_text()
            .ok_or(Error::InvalidParameter { what: "text mutator applied to image input" })?;
        let t = mutate_text(parent, &self.alphabet, rng)?;
        Ok(Payload::Text(t))
    }
}

/// Applies one character edit: delete, insert, or substitute, chosen
/// uniformly.
///
/// Inputs never become empty: when a single-character input draws a delete,
/// the choice is re-rolled between the two remaining operations. Empty input
/// is rejected outright.
pub fn mutate_text(
    parent: &TextInput,
    alphabet: &[char],
    rng: &mut Rng,
) -> Result<TextInput, Error> {
    if parent.chars.is_empty() {
        return Err(Error::EmptyText);
    }
    if alphabet.is_empty() {
        return Err(Error::InvalidParameter { what: "text mutation alphabet is empty" });
    }
    let mut chars = parent.chars.clone();
    let mut op = rng.index(3);
    if op == 0 && chars.len() == 1 {
        // Deleting the last character would empty the input; pick between
        // insert and substitute instead.
        op = 1 + rng.index(2);
    }
    match op {
        0 => {
            let pos = rng.index(chars.len());
            chars.remove(pos);
        }
        1 => {
            let pos = rng.index(chars.len() + 1);
            let ch = alphabet[rng.index(alphabet.len())];
            chars.insert(pos, ch);
        }
        _ => {
            let pos = rng.index(chars.len());
            let ch = alphabet[rng.index(alphabet.len())];
            chars[pos] = ch;
        }
    }
    Ok(TextInput { chars })
}
