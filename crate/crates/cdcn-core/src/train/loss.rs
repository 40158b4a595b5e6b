//! The three-term restoration loss: unweighted L1 on structure, detail and
//! SR outputs, each against labels synthesized from the degradation model.

use std::fmt;

use crate::degradation::{blur, ComponentTriple};
use crate::error::TrainError;
use crate::image::Image;
use crate::kernel::Kernel;
use crate::model::ModelOutput;

/// Which terms of the total loss are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossToggles {
    pub structure: bool,
    pub detail: bool,
    pub sr: bool,
}

impl LossToggles {
    pub const ALL: Self = Self {
        structure: true,
        detail: true,
        sr: true,
    };

    pub fn sr_only() -> Self {
        Self {
            structure: false,
            detail: false,
            sr: true,
        }
    }

    pub fn any(&self) -> bool {
        self.structure || self.detail || self.sr
    }

    /// Parses a comma list of enabled terms, e.g. `structure,sr`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut toggles = Self {
            structure: false,
            detail: false,
            sr: false,
        };
        for part in s.split(',') {
            match part.trim() {
                "structure" => toggles.structure = true,
                "detail" => toggles.detail = true,
                "sr" => toggles.sr = true,
                "" => {}
                other => return Err(format!("unknown loss term {other:?}")),
            }
        }
        Ok(toggles)
    }
}

impl fmt::Display for LossToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.structure {
            parts.push("structure");
        }
        if self.detail {
            parts.push("detail");
        }
        if self.sr {
            parts.push("sr");
        }
        write!(f, "{}", parts.join(","))
    }
}

fn mean_abs(a: &Image, b: &Image) -> Result<f64, TrainError> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(TrainError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    let n = (a.height() * a.width() * a.channels()) as f64;
    Ok(a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n)
}

/// Mean absolute error between the predicted and label structure images.
pub fn loss_structure(structure_hat: &Image, structure_label: &Image) -> Result<f64, TrainError> {
    mean_abs(structure_hat, structure_label)
}

/// Detail term: the label is re-derived from the HR image and blur kernel
/// as `hr - hr (x) k_g`, reusing the degradation blur.
pub fn loss_detail(detail_hat: &Image, hr: &Image, k_g: &Kernel) -> Result<f64, TrainError> {
    let label = hr.sub(&blur(hr, k_g)?);
    mean_abs(detail_hat, &label)
}

/// SR reconstruction term against the HR label.
pub fn loss_sr(sr: &Image, hr: &Image) -> Result<f64, TrainError> {
    mean_abs(sr, hr)
}

/// Unweighted sum of the enabled terms, using the precomputed label triple.
pub fn total_loss(
    output: &ModelOutput,
    triple: &ComponentTriple,
    hr: &Image,
    toggles: LossToggles,
) -> Result<f64, TrainError> {
    if !toggles.any() {
        return Err(TrainError::NoLossTerms);
    }
    let mut total = 0.0;
    if toggles.structure {
        let pred = output.structure_hat.as_ref().ok_or_else(|| {
            TrainError::InvalidConfig("structure loss enabled but model has no structure head".into())
        })?;
        total += loss_structure(pred, &triple.structure)?;
    }
    if toggles.detail {
        let pred = output.detail_hat.as_ref().ok_or_else(|| {
            TrainError::InvalidConfig("detail loss enabled but model has no detail head".into())
        })?;
        total += mean_abs(pred, &triple.detail)?;
    }
    if toggles.sr {
        total += loss_sr(&output.sr, hr)?;
    }
    Ok(total)
}
