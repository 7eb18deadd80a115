//! Layer-shape plan of a decoded architecture.
//!
//! The mobile-convolution dimensions map onto a dense network as follows:
//!
//! | dimension  | dense analog                                              |
//! |------------|-----------------------------------------------------------|
//! | `kernel`   | hidden-width multiplier `(k - 1) / 2` of the block width  |
//! | `width`    | extra width multiplier                                    |
//! | `op_type`  | activation (relu, swish, tanh)                            |
//! | `se_ratio` | squeeze-excite gate with bottleneck `round(ratio * width)`|
//! | `skip_op`  | none / additive residual / projected residual / gated     |
//! | `layers`   | number of identical layers in the block (0 = identity)    |
//!
//! An additive residual needs matching widths and degrades to no skip when the
//! layer changes width. A gated residual projects its input when widths differ.

use serde::{Deserialize, Serialize};

use crate::space::{ArchitectureConfig, OpType, SearchSpaceDef, SkipOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Skip {
    None,
    Identity,
    Projection,
    GatedIdentity,
    GatedProjection,
}

impl Skip {
    fn resolve(op: SkipOp, input: usize, output: usize) -> Self {
        let same = input == output;
        match op {
            SkipOp::None => Skip::None,
            SkipOp::Residual if same => Skip::Identity,
            SkipOp::Residual => Skip::None,
            SkipOp::Projected => Skip::Projection,
            SkipOp::Gated if same => Skip::GatedIdentity,
            SkipOp::Gated => Skip::GatedProjection,
        }
    }

    pub fn has_projection(self) -> bool {
        matches!(self, Skip::Projection | Skip::GatedProjection)
    }

    pub fn is_gated(self) -> bool {
        matches!(self, Skip::GatedIdentity | Skip::GatedProjection)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub input: usize,
    pub output: usize,
    pub op: OpType,
    /// Bottleneck width of the squeeze-excite gate, if any.
    pub se_hidden: Option<usize>,
    pub skip: Skip,
}

impl LayerPlan {
    /// Multiply-accumulate FLOPs of one application (2 per MAC).
    pub fn flops(&self) -> u64 {
        let (i, o) = (self.input as u64, self.output as u64);
        let mut f = 2 * i * o;
        if let Some(r) = self.se_hidden {
            f += 4 * o * r as u64;
        }
        if self.skip.has_projection() {
            f += 2 * i * o;
        }
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub input_width: usize,
    pub layers: Vec<LayerPlan>,
}

impl NetworkPlan {
    pub fn from_arch(
        space: &SearchSpaceDef,
        arch: &ArchitectureConfig,
        input_width: usize,
    ) -> Self {
        let mut layers = Vec::new();
        let mut width = input_width;
        for (choice, block) in space.block_choices(arch).iter().zip(space.blocks()) {
            let hidden = choice.hidden_width(block.base_width);
            let se_hidden = (choice.se_ratio > 0.0)
                .then(|| ((hidden as f64 * choice.se_ratio).round() as usize).max(1));
            for _ in 0..choice.layers {
                layers.push(LayerPlan {
                    input: width,
                    output: hidden,
                    op: choice.op,
                    se_hidden,
                    skip: Skip::resolve(choice.skip, width, hidden),
                });
                width = hidden;
            }
        }
        Self {
            input_width,
            layers,
        }
    }

    /// Plain multilayer perceptron, used for teacher networks.
    pub fn mlp(input_width: usize, hidden: &[usize], op: OpType) -> Self {
        let mut width = input_width;
        let layers = hidden
            .iter()
            .map(|&h| {
                let l = LayerPlan {
                    input: width,
                    output: h,
                    op,
                    se_hidden: None,
                    skip: Skip::None,
                };
                width = h;
                l
            })
            .collect();
        Self {
            input_width,
            layers,
        }
    }

    /// Width of the penultimate (pre-classifier) representation.
    pub fn feature_width(&self) -> usize {
        self.layers.last().map_or(self.input_width, |l| l.output)
    }

    /// FLOPs of the body for one input position; the classifier is excluded.
    pub fn body_flops(&self) -> u64 {
        self.layers.iter().map(LayerPlan::flops).sum()
    }
}
