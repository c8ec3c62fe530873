//! Residual and densely connected building blocks.

use rand::Rng;

use super::layers::{Builder, Conv, Ctx, Norm};
use crate::error::{Error, Result};
use crate::tensor::Var;

/// Pre-activation residual block: `out = shortcut(h) + F(h)` with
/// `F = BN → ReLU → conv → BN → ReLU → conv`.
///
/// The shortcut is the identity unless the block changes width or stride,
/// in which case it is a strided 1×1 convolution.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub bn1: Norm,
    pub conv1: Conv,
    pub bn2: Norm,
    pub conv2: Conv,
    pub shortcut: Option<Conv>,
}

impl ResidualBlock {
    pub fn build<R: Rng>(
        b: &mut Builder<R>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let bn1 = b.norm(&format!("{name}.bn1"), c_in);
        let conv1 = b.conv(&format!("{name}.conv1"), c_in, c_out, kernel, stride);
        let bn2 = b.norm(&format!("{name}.bn2"), c_out);
        let conv2 = b.conv(&format!("{name}.conv2"), c_out, c_out, kernel, 1);
        let shortcut =
            (c_in != c_out || stride != 1).then(|| b.conv(&format!("{name}.shortcut"), c_in, c_out, 1, stride));
        Self {
            bn1,
            conv1,
            bn2,
            conv2,
            shortcut,
        }
    }

    /// The residual mapping `F(h)` alone.
    pub fn residual(&self, ctx: &mut Ctx, h: Var) -> Result<Var> {
        let a = self.bn1.forward_relu(ctx, h)?;
        let a = self.conv1.forward(ctx, a)?;
        let a = self.bn2.forward_relu(ctx, a)?;
        self.conv2.forward(ctx, a)
    }

    pub fn forward(&self, ctx: &mut Ctx, h: Var) -> Result<Var> {
        let f = self.residual(ctx, h)?;
        let skip = match &self.shortcut {
            Some(conv) => conv.forward(ctx, h)?,
            None => h,
        };
        ctx.tape.add(skip, f)
    }
}

/// One dense layer `H_k = BN → ReLU → conv`, producing `growth_rate`
/// channels from the concatenation of all earlier feature maps.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub bn: Norm,
    pub conv: Conv,
}

impl DenseLayer {
    pub fn build<R: Rng>(b: &mut Builder<R>, name: &str, c_in: usize, growth_rate: usize, kernel: usize) -> Self {
        Self {
            bn: b.norm(&format!("{name}.bn"), c_in),
            conv: b.conv(&format!("{name}.conv"), c_in, growth_rate, kernel, 1),
        }
    }

    /// `H_k([h_0, …, h_{k−1}])`, concatenating `history` along channels in order.
    pub fn forward(&self, ctx: &mut Ctx, history: &[Var]) -> Result<Var> {
        let (first, rest) = history
            .split_first()
            .ok_or_else(|| Error::Contract("dense layer needs at least one input".into()))?;
        let mut x = *first;
        for &h in rest {
            let (a, b) = (ctx.tape.value(x), ctx.tape.value(h));
            if a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) {
                return Err(Error::dim(
                    "dense_block",
                    format!("history entries {:?} and {:?} disagree on batch or time", a.shape(), b.shape()),
                ));
            }
            x = ctx.tape.concat(x, h, 1)?;
        }
        let a = self.bn.forward_relu(ctx, x)?;
        self.conv.forward(ctx, a)
    }
}

/// Dense block followed by a transition (BN → ReLU → 1×1 conv → average pool).
#[derive(Debug, Clone)]
pub struct DenseStage {
    pub layers: Vec<DenseLayer>,
    pub transition_bn: Norm,
    pub transition: Conv,
    pub pool: usize,
}

impl DenseStage {
    /// Returns the stage output and the channel count after each dense layer.
    pub fn forward(&self, ctx: &mut Ctx, h: Var) -> Result<(Var, Vec<usize>)> {
        let mut features = h;
        let mut widths = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let new = layer.forward(ctx, &[features])?;
            features = ctx.tape.concat(features, new, 1)?;
            widths.push(ctx.tape.value(features).dim(1));
        }
        let a = self.transition_bn.forward_relu(ctx, features)?;
        let mut out = self.transition.forward(ctx, a)?;
        if self.pool > 1 {
            out = ctx.tape.avg_pool1d(out, self.pool)?;
        }
        Ok((out, widths))
    }
}
