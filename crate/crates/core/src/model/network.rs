use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::blocks::{DenseLayer, DenseStage, ResidualBlock};
use super::layers::{Builder, Conv, Ctx, Linear};
use super::partition::ChannelPartition;
use crate::error::{Error, Result};
use crate::tensor::{Mode, ParamId, ParamStore, RunningStats, Tape, Tensor, Var};

/// Number of backbone stages on each path; one contrastive pair per stage.
pub const STAGES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualPathConfig {
    pub blocks_per_stage: Vec<usize>,
    pub stem_width: usize,
    /// Output channels of each stage; the last one is `d_res`.
    pub widths: Vec<usize>,
    /// Temporal stride of the first block in each stage.
    pub strides: Vec<usize>,
    pub kernel_size: usize,
}

impl Default for ResidualPathConfig {
    fn default() -> Self {
        Self {
            blocks_per_stage: vec![1, 1, 1, 1],
            stem_width: 16,
            widths: vec![16, 16, 32, 32],
            strides: vec![1, 2, 2, 2],
            kernel_size: 3,
        }
    }
}

impl ResidualPathConfig {
    pub fn output_dim(&self) -> usize {
        self.widths[STAGES - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensePathConfig {
    pub layers_per_stage: Vec<usize>,
    pub growth_rate: usize,
    pub stem_width: usize,
    /// Output channels of each stage's transition; the last one is `d_dense`.
    pub transition_widths: Vec<usize>,
    /// Average-pool window after each transition (1 disables pooling).
    pub pool: Vec<usize>,
    pub kernel_size: usize,
}

impl Default for DensePathConfig {
    fn default() -> Self {
        Self {
            layers_per_stage: vec![2, 2, 2, 2],
            growth_rate: 8,
            stem_width: 16,
            transition_widths: vec![16, 16, 32, 32],
            pool: vec![2, 2, 2, 1],
            kernel_size: 3,
        }
    }
}

impl DensePathConfig {
    pub fn output_dim(&self) -> usize {
        self.transition_widths[STAGES - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub partition: ChannelPartition,
    pub residual: ResidualPathConfig,
    pub dense: DensePathConfig,
    pub d_proj: usize,
    pub classes: usize,
    /// When false the model is a single residual path over all channels
    /// with one classifier.
    pub dual_path: bool,
}

impl NetworkConfig {
    pub fn new(partition: ChannelPartition, classes: usize) -> Self {
        Self {
            partition,
            residual: ResidualPathConfig::default(),
            dense: DensePathConfig::default(),
            d_proj: 32,
            classes,
            dual_path: true,
        }
    }

    /// Smallest sensible network: one block or layer per stage, narrow widths.
    pub fn miniature(partition: ChannelPartition, classes: usize) -> Self {
        Self {
            partition,
            residual: ResidualPathConfig {
                blocks_per_stage: vec![1, 1, 1, 1],
                stem_width: 3,
                widths: vec![3, 4, 4, 4],
                strides: vec![1, 2, 1, 2],
                kernel_size: 3,
            },
            dense: DensePathConfig {
                layers_per_stage: vec![1, 1, 1, 1],
                growth_rate: 2,
                stem_width: 3,
                transition_widths: vec![3, 4, 4, 4],
                pool: vec![2, 1, 2, 1],
                kernel_size: 3,
            },
            d_proj: 3,
            classes,
            dual_path: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.residual;
        let d = &self.dense;
        let four = |name: &str, v: &[usize]| -> Result<()> {
            if v.len() != STAGES || v.contains(&0) {
                return Err(Error::Config(format!(
                    "{name} must list {STAGES} positive values, got {v:?}"
                )));
            }
            Ok(())
        };
        four("residual.blocks_per_stage", &r.blocks_per_stage)?;
        four("residual.widths", &r.widths)?;
        four("residual.strides", &r.strides)?;
        four("dense.layers_per_stage", &d.layers_per_stage)?;
        four("dense.transition_widths", &d.transition_widths)?;
        four("dense.pool", &d.pool)?;
        for (name, v) in [
            ("residual.stem_width", r.stem_width),
            ("dense.stem_width", d.stem_width),
            ("dense.growth_rate", d.growth_rate),
            ("d_proj", self.d_proj),
            ("classes", self.classes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, k) in [("residual", r.kernel_size), ("dense", d.kernel_size)] {
            if k % 2 == 0 {
                return Err(Error::Config(format!("{name}.kernel_size must be odd, got {k}")));
            }
        }
        Ok(())
    }
}

/// Parameter ids grouped by the part of the network that owns them.
#[derive(Debug, Clone, Default)]
pub struct ParamGroups {
    pub res_backbone: Vec<ParamId>,
    pub dense_backbone: Vec<ParamId>,
    pub res_projection: Vec<ParamId>,
    pub dense_projection: Vec<ParamId>,
    pub res_classifier: Vec<ParamId>,
    pub dense_classifier: Vec<ParamId>,
    pub fusion_classifier: Vec<ParamId>,
    pub align_adapter: Vec<ParamId>,
}

/// Two-layer projection head on GAP-pooled stage features.
#[derive(Debug, Clone)]
struct Head {
    fc1: Linear,
    fc2: Linear,
}

impl Head {
    fn forward(&self, ctx: &mut Ctx, pooled: Var) -> Result<Var> {
        let a = self.fc1.forward(ctx, pooled)?;
        let a = ctx.tape.relu(a);
        self.fc2.forward(ctx, a)
    }
}

#[derive(Debug, Clone)]
struct ResidualPath {
    stem: Conv,
    stages: Vec<Vec<ResidualBlock>>,
}

#[derive(Debug, Clone)]
struct DensePath {
    stem: Conv,
    stages: Vec<DenseStage>,
}

/// Symbolic outputs of one forward pass, recorded on the caller's tape.
#[derive(Debug, Clone)]
pub struct ForwardOutputs {
    pub res_stem: Var,
    /// Residual-path feature map after each stage.
    pub res_stages: Vec<Var>,
    /// Dense-path feature map after each stage (including its transition).
    pub dense_stages: Vec<Var>,
    /// Channel count after every dense layer, per stage.
    pub dense_widths: Vec<Vec<usize>>,
    /// `(z_res, z_dense)` per stage; empty unless projections were requested.
    pub stage_projections: Vec<(Var, Var)>,
    pub h_res: Var,
    pub h_dense: Option<Var>,
    /// `h_dense` mapped to the residual width when the two widths differ.
    pub h_dense_aligned: Option<Var>,
    pub logits_res: Var,
    pub logits_dense: Option<Var>,
    /// Test-time prediction head; equals `logits_res` for a single path.
    pub logits_fusion: Var,
}

/// Layer structure of the network; parameter values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Architecture {
    config: NetworkConfig,
    res: ResidualPath,
    dense: Option<DensePath>,
    heads_res: Vec<Head>,
    heads_dense: Vec<Head>,
    f_res: Linear,
    f_dense: Option<Linear>,
    fusion: Option<Linear>,
    adapter: Option<Linear>,
    groups: ParamGroups,
}

impl Architecture {
    fn build(config: &NetworkConfig, params: &mut ParamStore, stats: &mut Vec<RunningStats>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut groups = ParamGroups::default();
        let rc = &config.residual;
        let dc = &config.dense;
        let res_in = if config.dual_path {
            config.partition.first().len()
        } else {
            config.partition.total_channels()
        };

        let res = {
            let mut b = Builder {
                params: &mut *params,
                stats: &mut *stats,
                rng: &mut rng,
                groups: &mut groups.res_backbone,
            };
            let stem = b.conv("res.stem", res_in, rc.stem_width, rc.kernel_size, 1);
            let mut width = rc.stem_width;
            let mut stages = Vec::with_capacity(STAGES);
            for s in 0..STAGES {
                let mut blocks = Vec::with_capacity(rc.blocks_per_stage[s]);
                for k in 0..rc.blocks_per_stage[s] {
                    let stride = if k == 0 { rc.strides[s] } else { 1 };
                    let name = format!("res.s{}.b{}", s + 1, k + 1);
                    blocks.push(ResidualBlock::build(&mut b, &name, width, rc.widths[s], rc.kernel_size, stride));
                    width = rc.widths[s];
                }
                stages.push(blocks);
            }
            ResidualPath { stem, stages }
        };

        let dense = config.dual_path.then(|| {
            let mut b = Builder {
                params: &mut *params,
                stats: &mut *stats,
                rng: &mut rng,
                groups: &mut groups.dense_backbone,
            };
            let stem = b.conv("dense.stem", config.partition.second().len(), dc.stem_width, dc.kernel_size, 1);
            let mut width = dc.stem_width;
            let mut stages = Vec::with_capacity(STAGES);
            for s in 0..STAGES {
                let mut layers = Vec::with_capacity(dc.layers_per_stage[s]);
                for k in 0..dc.layers_per_stage[s] {
                    let name = format!("dense.s{}.l{}", s + 1, k + 1);
                    layers.push(DenseLayer::build(&mut b, &name, width, dc.growth_rate, dc.kernel_size));
                    width += dc.growth_rate;
                }
                let transition_bn = b.norm(&format!("dense.s{}.trans.bn", s + 1), width);
                let transition = b.conv(&format!("dense.s{}.trans", s + 1), width, dc.transition_widths[s], 1, 1);
                width = dc.transition_widths[s];
                stages.push(DenseStage {
                    layers,
                    transition_bn,
                    transition,
                    pool: dc.pool[s],
                });
            }
            DensePath { stem, stages }
        });

        let mut heads_res = Vec::new();
        let mut heads_dense = Vec::new();
        if config.dual_path {
            for (side, widths, out, group) in [
                ("res", &rc.widths, &mut heads_res, &mut groups.res_projection),
                ("dense", &dc.transition_widths, &mut heads_dense, &mut groups.dense_projection),
            ] {
                let mut b = Builder {
                    params: &mut *params,
                    stats: &mut *stats,
                    rng: &mut rng,
                    groups: group,
                };
                for (s, &w) in widths.iter().enumerate() {
                    out.push(Head {
                        fc1: b.linear(&format!("head.{side}.s{}.fc1", s + 1), w, config.d_proj),
                        fc2: b.linear(&format!("head.{side}.s{}.fc2", s + 1), config.d_proj, config.d_proj),
                    });
                }
            }
        }

        let d_res = rc.output_dim();
        let d_dense = dc.output_dim();
        let mut linear = |name: &str, d_in: usize, d_out: usize, group: &mut Vec<ParamId>| {
            Builder {
                params: &mut *params,
                stats: &mut *stats,
                rng: &mut rng,
                groups: group,
            }
            .linear(name, d_in, d_out)
        };
        let f_res = linear("cls.res", d_res, config.classes, &mut groups.res_classifier);
        let (f_dense, fusion, adapter) = if config.dual_path {
            let f_dense = linear("cls.dense", d_dense, config.classes, &mut groups.dense_classifier);
            let fusion = linear("cls.fusion", d_res + d_dense, config.classes, &mut groups.fusion_classifier);
            let adapter =
                (d_res != d_dense).then(|| linear("align.adapter", d_dense, d_res, &mut groups.align_adapter));
            (Some(f_dense), Some(fusion), adapter)
        } else {
            (None, None, None)
        };

        Self {
            config: config.clone(),
            res,
            dense,
            heads_res,
            heads_dense,
            f_res,
            f_dense,
            fusion,
            adapter,
            groups,
        }
    }

    pub fn groups(&self) -> &ParamGroups {
        &self.groups
    }

    /// Runs the network on `x: [N, T, F]`.
    ///
    /// Projection heads are evaluated only when `projections` is set, so a
    /// run without the contrastive objective never touches them.
    pub fn forward(
        &self,
        params: &ParamStore,
        stats: &mut [RunningStats],
        tape: &mut Tape,
        x: &Tensor,
        mode: Mode,
        projections: bool,
    ) -> Result<ForwardOutputs> {
        if x.ndim() != 3 || x.dim(2) != self.config.partition.total_channels() {
            return Err(Error::dim(
                "forward",
                format!(
                    "input {:?} is not [N, T, {}]",
                    x.shape(),
                    self.config.partition.total_channels()
                ),
            ));
        }
        let n = x.dim(0);
        if n == 0 {
            return Err(Error::dim("forward", "empty batch"));
        }
        if mode == Mode::Train && n < 2 {
            return Err(Error::DegenerateBatch {
                op: "forward",
                detail: "train mode needs at least 2 samples for batch normalization".into(),
            });
        }
        let mut ctx = Ctx {
            tape,
            params,
            stats,
            mode,
        };

        let (x_res, x_dense) = if self.config.dual_path {
            let (a, b) = self.config.partition.split(x)?;
            (a.swap_last_axes()?, Some(b.swap_last_axes()?))
        } else {
            (x.swap_last_axes()?, None)
        };

        let input = ctx.tape.constant(x_res);
        let res_stem = self.res.stem.forward(&mut ctx, input)?;
        let mut h = res_stem;
        let mut res_stages = Vec::with_capacity(STAGES);
        for blocks in &self.res.stages {
            for block in blocks {
                h = block.forward(&mut ctx, h)?;
            }
            res_stages.push(h);
        }

        let mut dense_stages = Vec::new();
        let mut dense_widths = Vec::new();
        if let (Some(path), Some(x2)) = (&self.dense, x_dense) {
            let input = ctx.tape.constant(x2);
            let mut h = path.stem.forward(&mut ctx, input)?;
            for stage in &path.stages {
                let (out, widths) = stage.forward(&mut ctx, h)?;
                h = out;
                dense_stages.push(h);
                dense_widths.push(widths);
            }
        }

        let mut pooled_res = Vec::with_capacity(STAGES);
        for &s in &res_stages {
            pooled_res.push(ctx.tape.global_avg_pool(s)?);
        }
        let mut pooled_dense = Vec::with_capacity(dense_stages.len());
        for &s in &dense_stages {
            pooled_dense.push(ctx.tape.global_avg_pool(s)?);
        }

        let mut stage_projections = Vec::new();
        if projections && self.config.dual_path {
            for l in 0..STAGES {
                let z_res = self.heads_res[l].forward(&mut ctx, pooled_res[l])?;
                let z_dense = self.heads_dense[l].forward(&mut ctx, pooled_dense[l])?;
                stage_projections.push((z_res, z_dense));
            }
        }

        let h_res = pooled_res[STAGES - 1];
        let logits_res = self.f_res.forward(&mut ctx, h_res)?;
        let (h_dense, h_dense_aligned, logits_dense, logits_fusion) = match (&self.f_dense, &self.fusion) {
            (Some(f_dense), Some(fusion)) => {
                let h_dense = pooled_dense[STAGES - 1];
                let logits_dense = f_dense.forward(&mut ctx, h_dense)?;
                let joint = ctx.tape.concat(h_res, h_dense, 1)?;
                let logits_fusion = fusion.forward(&mut ctx, joint)?;
                let aligned = match &self.adapter {
                    Some(a) => a.forward(&mut ctx, h_dense)?,
                    None => h_dense,
                };
                (Some(h_dense), Some(aligned), Some(logits_dense), logits_fusion)
            }
            _ => (None, None, None, logits_res),
        };

        Ok(ForwardOutputs {
            res_stem,
            res_stages,
            dense_stages,
            dense_widths,
            stage_projections,
            h_res,
            h_dense,
            h_dense_aligned,
            logits_res,
            logits_dense,
            logits_fusion,
        })
    }
}

/// The dual-path network together with its parameters and batch-norm state.
#[derive(Debug, Clone)]
pub struct DualPathNetwork {
    arch: Architecture,
    pub params: ParamStore,
    pub stats: Vec<RunningStats>,
}

impl DualPathNetwork {
    /// Builds and initializes a network; weights are He-uniform draws from
    /// a generator seeded with `seed`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut stats = Vec::new();
        let arch = Architecture::build(&config, &mut params, &mut stats, seed);
        Ok(Self { arch, params, stats })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.arch.config
    }

    pub fn groups(&self) -> &ParamGroups {
        &self.arch.groups
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Split borrow for callers that need to drive the architecture with a
    /// separately borrowed parameter store, e.g. finite-difference checks.
    pub fn parts_mut(&mut self) -> (&Architecture, &mut ParamStore, &mut Vec<RunningStats>) {
        (&self.arch, &mut self.params, &mut self.stats)
    }

    pub fn forward(&mut self, tape: &mut Tape, x: &Tensor, mode: Mode, projections: bool) -> Result<ForwardOutputs> {
        self.arch.forward(&self.params, &mut self.stats, tape, x, mode, projections)
    }

    /// Zeroes the last convolution of every residual mapping, turning each
    /// identity-shortcut block into an exact identity.
    pub fn zero_residual_branches(&mut self) {
        for blocks in &self.arch.res.stages {
            for block in blocks {
                for id in [block.conv2.w, block.conv2.b] {
                    self.params.get_mut(id).value.fill(0.0);
                }
            }
        }
    }

    /// Number of batch-norm layers, i.e. running-statistics entries.
    pub fn norm_count(&self) -> usize {
        self.stats.len()
    }
}

// Used by the checkpoint module to rebuild a network shell before loading values.
pub(crate) fn rebuild(config: NetworkConfig) -> Result<DualPathNetwork> {
    DualPathNetwork::new(config, 0)
}
