//! Objective predicates over a model evaluation's metadata.
//!
//! An objective decides whether an evaluated input should be surfaced as a
//! test case. Checks are pure functions of the metadata snapshot: they see
//! what the model reported, never the fuzzer's state, so re-checking a
//! stored test case always reproduces the verdict.

use alloc::string::String;
use alloc::vec::Vec;

use crate::models::Metadata;
use crate::tensor::argmax;

/// A predicate that flags evaluations worth keeping.
pub trait Objective {
    /// Stable identifier, used to label test cases.
    fn name(&self) -> &'static str;
    /// True when this evaluation should become a test case.
    fn check(&self, metadata: &Metadata) -> bool;
}

/// Flags evaluations whose reported numerics contain NaN or ±infinity.
///
/// Inspects the scalar loss and both logit vectors; absent fields are
/// ignored, so the objective composes with any model wrapper.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonFinite;

impl Objective for NonFinite {
    fn name(&self) -> &'static str {
        "non_finite"
    }

    fn check(&self, metadata: &Metadata) -> bool {
        if let Some(loss) = metadata.loss {
            if !loss.is_finite() {
                return true;
            }
        }
        for logits in [&metadata.logits_f32, &metadata.logits_f16] {
            if let Some(v) = logits {
                if !v.all_finite() {
                    return true;
                }
            }
        }
        false
    }
}

/// Flags inputs the full-precision and reduced-precision models classify
/// differently.
///
/// Both logit vectors must be present; otherwise there is nothing to
/// compare and the check is false. Argmax ties resolve to the lowest index
/// on both sides, so a disagreement is a genuine decision flip — the
/// predicate is symmetric in the two vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuantDisagreement;

impl Objective for QuantDisagreement {
    fn name(&self) -> &'static str {
        "quantization_disagreement"
    }

    fn check(&self, metadata: &Metadata) -> bool {
        match (&metadata.logits_f32, &metadata.logits_f16) {
            (Some(full), Some(reduced)) => {
                argmax(full.as_slice()) != argmax(reduced.as_slice())
            }
            _ => false,
        }
    }
}

/// Splits text into lower-cased alphabetic tokens.
///
/// Any non-alphabetic character is a separator, so punctuation and digits
/// never hide a word: `"Dog!"` tokenizes to `["dog"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphabetic() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Flags sampled text that uses a blacklisted word or stutters.
///
/// A hit is either a token on the blacklist (case-insensitive, punctuation
/// stripped by tokenization) or the same token repeated more than
/// `max_repeats` times consecutively. Evaluations without sampled text
/// never match.
#[derive(Debug, Clone)]
pub struct TextPolicy {
    blacklist: Vec<String>,
    max_repeats: usize,
}

impl TextPolicy {
    /// Builds a policy; words are case-folded on entry. `max_repeats` is
    /// the highest consecutive run still allowed (so 2 flags a third
    /// repetition) and must be at least 1.
    pub fn new(blacklist: &[&str], max_repeats: usize) -> Result<Self, crate::Error> {
        if max_repeats == 0 {
            return Err(crate::Error::InvalidParameter {
                what: "allowed repetition count must be at least 1",
            });
        }
        let mut folded: Vec<String> = blacklist.iter().map(|w| w.to_lowercase()).collect();
        folded.sort_unstable();
        folded.dedup();
        Ok(TextPolicy { blacklist: folded, max_repeats })
    }

    /// The default repetition allowance: a word may appear twice in a row.
    pub fn with_blacklist(blacklist: &[&str]) -> Result<Self, crate::Error> {
        Self::new(blacklist, 2)
    }

    /// The case-folded blacklist.
    pub fn blacklist(&self) -> &[String] {
        &self.blacklist
    }

    /// Distinct blacklisted words appearing in `text`, in blacklist order.
    pub fn hits(&self, text: &str) -> Vec<String> {
        let tokens = tokenize(text);
        self.blacklist
            .iter()
            .filter(|w| tokens.iter().any(|t| t == *w))
            .cloned()
            .collect()
    }

    /// True when some token repeats more than `max_repeats` times in a row.
    pub fn has_repetition(&self, text: &str) -> bool {
        let tokens = tokenize(text);
        let mut run = 0usize;
        let mut prev: Option<&String> = None;
        for token in &tokens {
            if prev == Some(token) {
                run += 1;
            } else {
                run = 1;
                prev = Some(token);
            }
            if run > self.max_repeats {
                return true;
            }
        }
        false
    }

    /// Full policy verdict on a text sample.
    pub fn violates(&self, text: &str) -> bool {
        !self.hits(text).is_empty() || self.has_repetition(text)
    }
}

impl Objective for TextPolicy {
    fn name(&self) -> &'static str {
        "text_policy"
    }

    fn check(&self, metadata: &Metadata) -> bool {
        match &metadata.sampled_text {
            Some(text) => self.violates(text),
            None => false,
        }
    }
}
