//! Per-group robustness metrics: performance drop rate (PDR) and Cohen's h.
//!
//! Both compare the original score `score_o` with the mean perturbed score
//! `score_p`. PDR is a fractional drop, `1 - score_p / score_o`; it is
//! asymmetric and undefined when `score_o = 0 < score_p`. Cohen's h is the
//! difference of arcsine-transformed proportions,
//! `h = psi(score_p) - psi(score_o)` with `psi(s) = 2 asin(sqrt(s))`. It is
//! defined everywhere on `[0, 1]^2`, antisymmetric, and bounded by `pi`.
//! `h > 0` means the perturbed variants scored better.

use core::f64::consts::PI;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::scoring::GroupScores;
use crate::{Error, Result};

/// Inputs this close outside `[0, 1]` are clamped; anything further is rejected.
pub const CLAMP_SLACK: f64 = 1e-12;

fn proportion(what: &'static str, value: f64) -> Result<f64> {
    if value.is_nan() || !(-CLAMP_SLACK..=1.0 + CLAMP_SLACK).contains(&value) {
        return Err(Error::OutOfRange { what, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Variance-stabilizing arcsine transform, `2 asin(sqrt(s))`, mapping `[0, 1]` onto `[0, pi]`.
pub fn psi(s: f64) -> f64 {
    2.0 * libm::asin(libm::sqrt(s))
}

/// A PDR value; `None` when the drop rate is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pdr(pub Option<f64>);

impl Pdr {
    pub fn value(self) -> Option<f64> {
        self.0
    }

    pub fn is_defined(self) -> bool {
        self.0.is_some()
    }
}

pub fn pdr(score_o: f64, score_p: f64) -> Result<Pdr> {
    let o = proportion("score_o", score_o)?;
    let p = proportion("score_p", score_p)?;
    Ok(Pdr(match (o == 0.0, p == 0.0) {
        (true, true) => Some(0.0),
        (true, false) => None,
        _ => Some(1.0 - p / o),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectCategory {
    EssentiallyZero,
    VerySmall,
    Small,
    Medium,
    Large,
    VeryLarge,
    Huge,
}

impl EffectCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectCategory::EssentiallyZero => "essentially_zero",
            EffectCategory::VerySmall => "very_small",
            EffectCategory::Small => "small",
            EffectCategory::Medium => "medium",
            EffectCategory::Large => "large",
            EffectCategory::VeryLarge => "very_large",
            EffectCategory::Huge => "huge",
        }
    }

    /// Anything from `small` up is a non-negligible change.
    pub fn is_negligible(self) -> bool {
        self < EffectCategory::Small
    }
}

impl fmt::Display for EffectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for EffectCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        THRESHOLDS
            .iter()
            .map(|t| t.category)
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("unknown effect category {s:?}")))
    }
}

/// One row of the threshold table: `lower <= |h| < upper` (the last row is closed at `pi`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub category: EffectCategory,
    pub lower: f64,
    pub upper: f64,
}

impl Threshold {
    /// The same interval on the normalized (`h / pi`) scale.
    pub fn normalized(self) -> (f64, f64) {
        (self.lower / PI, self.upper / PI)
    }
}

/// Rule-of-thumb effect-size ranges on `|h|`.
pub const THRESHOLDS: [Threshold; 7] = [
    Threshold { category: EffectCategory::EssentiallyZero, lower: 0.0, upper: 0.01 },
    Threshold { category: EffectCategory::VerySmall, lower: 0.01, upper: 0.2 },
    Threshold { category: EffectCategory::Small, lower: 0.2, upper: 0.5 },
    Threshold { category: EffectCategory::Medium, lower: 0.5, upper: 0.8 },
    Threshold { category: EffectCategory::Large, lower: 0.8, upper: 1.2 },
    Threshold { category: EffectCategory::VeryLarge, lower: 1.2, upper: 2.0 },
    Threshold { category: EffectCategory::Huge, lower: 2.0, upper: PI },
];

/// Category of an effect of size `h` (sign ignored).
pub fn classify_effect(h: f64) -> Result<EffectCategory> {
    let a = h.abs();
    if a.is_nan() || a > PI + CLAMP_SLACK {
        return Err(Error::OutOfRange { what: "|h|", value: h });
    }
    let a = a.min(PI);
    let t = THRESHOLDS
        .iter()
        .find(|t| a >= t.lower && (a < t.upper || t.category == EffectCategory::Huge))
        .expect("thresholds cover [0, pi]");
    Ok(t.category)
}

/// Cohen's h with its normalized (`nh = h / pi`) and absolute (`anh = |nh|`) forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub h: f64,
    pub nh: f64,
    pub anh: f64,
    pub category: EffectCategory,
}

impl EffectSize {
    pub fn from_h(h: f64) -> Result<Self> {
        let category = classify_effect(h)?;
        let h = h.clamp(-PI, PI);
        let nh = h / PI;
        Ok(Self { h, nh, anh: nh.abs(), category })
    }
}

/// Cohen's h from the original score to the mean perturbed score.
pub fn cohens_h(score_o: f64, score_p: f64) -> Result<EffectSize> {
    let o = proportion("score_o", score_o)?;
    let p = proportion("score_p", score_p)?;
    EffectSize::from_h(psi(p) - psi(o))
}

/// PDR and effect size of one group.
pub fn group_metrics(gs: &GroupScores) -> Result<(Pdr, EffectSize)> {
    let o = f64::from(gs.score_o());
    Ok((pdr(o, gs.score_p())?, cohens_h(o, gs.score_p())?))
}
