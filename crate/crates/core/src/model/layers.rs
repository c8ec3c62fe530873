use rand::Rng;

use crate::error::Result;
use crate::tensor::{Mode, ParamId, ParamStore, RunningStats, Tape, Tensor, Var};

/// Everything a layer needs during one forward pass.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    pub params: &'a ParamStore,
    pub stats: &'a mut [RunningStats],
    pub mode: Mode,
}

impl Ctx<'_> {
    fn p(&mut self, id: ParamId) -> Var {
        self.tape.param(self.params, id)
    }
}

/// Allocates parameters with He-uniform weights and zero biases.
pub struct Builder<'a, R: Rng> {
    pub params: &'a mut ParamStore,
    pub stats: &'a mut Vec<RunningStats>,
    pub rng: &'a mut R,
    pub groups: &'a mut Vec<ParamId>,
}

impl<R: Rng> Builder<'_, R> {
    fn he_uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = (6.0 / fan_in as f64).sqrt();
        let rng = &mut *self.rng;
        Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
    }

    fn add(&mut self, name: String, value: Tensor) -> ParamId {
        let id = self.params.add(name, value);
        self.groups.push(id);
        id
    }

    pub fn conv(&mut self, name: &str, c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Conv {
        let w = self.he_uniform(&[c_out, c_in, kernel], c_in * kernel);
        Conv {
            w: self.add(format!("{name}.w"), w),
            b: self.add(format!("{name}.b"), Tensor::zeros(&[c_out])),
            stride,
            padding: kernel / 2,
        }
    }

    pub fn norm(&mut self, name: &str, channels: usize) -> Norm {
        self.stats.push(RunningStats::new(channels));
        Norm {
            gamma: self.add(format!("{name}.gamma"), Tensor::ones(&[channels])),
            beta: self.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            stats: self.stats.len() - 1,
        }
    }

    pub fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Linear {
        let w = self.he_uniform(&[d_out, d_in], d_in);
        Linear {
            w: self.add(format!("{name}.w"), w),
            b: self.add(format!("{name}.b"), Tensor::zeros(&[d_out])),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let (w, b) = (ctx.p(self.w), ctx.p(self.b));
        ctx.tape.conv1d(x, w, b, self.stride, self.padding)
    }
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: usize,
}

impl Norm {
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let (g, b) = (ctx.p(self.gamma), ctx.p(self.beta));
        let mode = ctx.mode;
        ctx.tape.batchnorm1d(x, g, b, &mut ctx.stats[self.stats], mode)
    }

    /// BN followed by ReLU.
    pub fn forward_relu(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let y = self.forward(ctx, x)?;
        Ok(ctx.tape.relu(y))
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let (w, b) = (ctx.p(self.w), ctx.p(self.b));
        ctx.tape.linear(x, w, b)
    }
}
