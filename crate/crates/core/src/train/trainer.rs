//! Training loop and evaluation.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::data_augment;
use super::config::{ModulationScope, TrainConfig};
use super::loss::{LossTerms, LossValues};
use super::metrics::{argmax_rows, ConfusionMatrix, MetricsReport};
use crate::cgm::{apply_modulation, ModulationState, Optimizer};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::{ChannelPartition, DualPathNetwork};
use crate::tensor::kernels::softmax_rows;
use crate::tensor::{Mode, ParamId, Tape, Tensor};

const SHUFFLE_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub step: u64,
    pub epoch: usize,
    pub batch: usize,
    pub batch_size: usize,
    /// Confidence accounting; absent for a single-path network.
    pub s_res: Option<f64>,
    pub s_dense: Option<f64>,
    pub r_res: Option<f64>,
    pub r_dense: Option<f64>,
    pub m_res: Option<f64>,
    pub m_dense: Option<f64>,
    /// Whether the coefficients above were applied to the gradients.
    pub cgm_applied: bool,
    #[serde(flatten)]
    pub losses: LossValues,
    /// Fusion-head accuracy on this (augmented) batch in train mode.
    pub batch_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub batches: usize,
    pub mean_total_loss: f64,
    pub batch_accuracy: f64,
}

/// Receiver for per-batch records.
pub trait BatchSink {
    fn record(&mut self, record: &BatchRecord) -> Result<()>;
}

/// Discards records.
pub struct NullSink;

impl BatchSink for NullSink {
    fn record(&mut self, _: &BatchRecord) -> Result<()> {
        Ok(())
    }
}

impl BatchSink for Vec<BatchRecord> {
    fn record(&mut self, record: &BatchRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct JsonLinesLog<W: Write> {
    out: W,
}

impl<W: Write> JsonLinesLog<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> BatchSink for JsonLinesLog<W> {
    fn record(&mut self, record: &BatchRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record).map_err(|e| Error::Format(e.to_string()))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

/// Network, optimizer state and random streams of one training run.
pub struct Trainer {
    config: TrainConfig,
    net: DualPathNetwork,
    optimizer: Optimizer,
    res_group: Vec<ParamId>,
    dense_group: Vec<ParamId>,
    shuffle_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
    step: u64,
    epoch: usize,
}

impl Trainer {
    /// Builds a fresh network for data with the given partition and classes.
    pub fn new(config: TrainConfig, partition: ChannelPartition, classes: usize) -> Result<Self> {
        config.validate()?;
        let net = DualPathNetwork::new(config.network(partition, classes), config.seed)?;
        Self::with_network(config, net)
    }

    /// Continues from an existing network; optimizer state starts empty.
    pub fn with_network(config: TrainConfig, net: DualPathNetwork) -> Result<Self> {
        config.validate()?;
        if net.config().dual_path != config.switches.dpfe {
            return Err(Error::Config(
                "network path layout does not match the DPFE switch".into(),
            ));
        }
        let g = net.groups();
        let (mut res_group, mut dense_group) = (g.res_classifier.clone(), g.dense_classifier.clone());
        if config.modulation_scope == ModulationScope::ClassifiersAndBackbones {
            res_group.extend(&g.res_backbone);
            dense_group.extend(&g.dense_backbone);
        }
        let stream = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(s);
            rng
        };
        Ok(Self {
            optimizer: config.optimizer.build()?,
            shuffle_rng: stream(SHUFFLE_STREAM),
            augment_rng: stream(AUGMENT_STREAM),
            res_group,
            dense_group,
            net,
            config,
            step: 0,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn network(&self) -> &DualPathNetwork {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut DualPathNetwork {
        &mut self.net
    }

    pub fn into_network(self) -> DualPathNetwork {
        self.net
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    fn check_data(&self, data: &WindowedDataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Contract("training set is empty".into()));
        }
        let cfg = self.net.config();
        if data.partition != cfg.partition || data.classes() != cfg.classes {
            return Err(Error::Contract(
                "dataset partition or class count does not match the network".into(),
            ));
        }
        if self.config.batch_size > data.len() {
            return Err(Error::Contract(format!(
                "batch size {} exceeds the {} available windows",
                self.config.batch_size,
                data.len()
            )));
        }
        Ok(())
    }

    /// One pass over `data` in a freshly shuffled order. A final batch with
    /// fewer than 2 windows is dropped.
    pub fn train_epoch(&mut self, data: &WindowedDataset, sink: &mut dyn BatchSink) -> Result<EpochLog> {
        self.check_data(data)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let (mut batches, mut loss_sum, mut correct, mut seen) = (0, 0.0, 0.0, 0usize);
        for (b, idx) in order.chunks(self.config.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let (x, y) = data.batch(idx);
            let record = self.train_step(x, &y, b)?;
            sink.record(&record)?;
            batches += 1;
            loss_sum += record.losses.total;
            correct += record.batch_accuracy * idx.len() as f64;
            seen += idx.len();
        }
        let log = EpochLog {
            epoch: self.epoch,
            batches,
            mean_total_loss: loss_sum / batches.max(1) as f64,
            batch_accuracy: correct / seen.max(1) as f64,
        };
        self.epoch += 1;
        Ok(log)
    }

    /// Forward, loss, backward, optional modulation and one optimizer step.
    pub fn train_step(&mut self, mut x: Tensor, labels: &[usize], batch: usize) -> Result<BatchRecord> {
        let switches = self.config.switches;
        if switches.da {
            data_augment(&mut x, &self.config.augment, &mut self.augment_rng)?;
        }
        let contrastive = switches.contrastive_active();
        let mut tape = Tape::new();
        let out = self.net.forward(&mut tape, &x, Mode::Train, contrastive)?;
        let terms = LossTerms::build(
            &mut tape,
            &out,
            labels,
            contrastive,
            self.config.temperature,
            self.config.align_weight,
        )?;
        let losses = terms.values(&tape);
        if !losses.all_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch,
                batch,
                components: losses.to_string(),
            });
        }

        let fusion = tape.value(out.logits_fusion);
        let predicted = argmax_rows(fusion.data(), fusion.dim(1));
        let hits = predicted.iter().zip(labels).filter(|(p, t)| p == t).count();

        let state = match out.logits_dense {
            Some(dense) => Some(ModulationState::from_probabilities(
                &softmax_rows(tape.value(out.logits_res)),
                &softmax_rows(tape.value(dense)),
                labels,
                self.config.alpha,
                self.config.epsilon,
            )?),
            None => None,
        };

        self.net.params.zero_grads();
        tape.backward(terms.total, &mut self.net.params)?;
        let cgm_applied = switches.modulation_active() && state.is_some();
        if let (true, Some(s)) = (cgm_applied, state) {
            apply_modulation(&mut self.net.params, &self.res_group, &self.dense_group, s.m_res, s.m_dense);
        }
        self.optimizer.step(&mut self.net.params);

        let record = BatchRecord {
            step: self.step,
            epoch: self.epoch,
            batch,
            batch_size: labels.len(),
            s_res: state.map(|s| s.s_res),
            s_dense: state.map(|s| s.s_dense),
            r_res: state.map(|s| s.r_res),
            r_dense: state.map(|s| s.r_dense),
            m_res: state.map(|s| s.m_res),
            m_dense: state.map(|s| s.m_dense),
            cgm_applied,
            losses,
            batch_accuracy: hits as f64 / labels.len() as f64,
        };
        self.step += 1;
        Ok(record)
    }

    /// Runs `config.epochs` epochs.
    pub fn fit(&mut self, data: &WindowedDataset, sink: &mut dyn BatchSink) -> Result<Vec<EpochLog>> {
        (0..self.config.epochs).map(|_| self.train_epoch(data, sink)).collect()
    }

    pub fn evaluate(&mut self, data: &WindowedDataset) -> Result<Evaluation> {
        let batch = self.config.eval_batch_size;
        evaluate(&mut self.net, data, batch)
    }
}

/// Test-time predictions and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
    /// Fusion-head predictions, one per window.
    pub predictions: Vec<usize>,
    /// Accuracy of the standalone residual-branch classifier.
    pub res_accuracy: f64,
    /// Accuracy of the standalone dense-branch classifier, for a dual-path network.
    pub dense_accuracy: Option<f64>,
}

/// Evaluates in inference mode; predictions are the fusion-logit argmax with
/// ties broken toward the lower class index.
pub fn evaluate(net: &mut DualPathNetwork, data: &WindowedDataset, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Contract("evaluation set is empty".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("evaluation batch size must be positive".into()));
    }
    let classes = net.config().classes;
    if data.classes() != classes {
        return Err(Error::Contract(format!(
            "dataset has {} classes, network predicts {classes}",
            data.classes()
        )));
    }
    let mut predictions = Vec::with_capacity(data.len());
    let (mut res_hits, mut dense_hits, mut dual) = (0usize, 0usize, false);
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(batch_size) {
        let (x, y) = data.batch(idx);
        let mut tape = Tape::new();
        let out = net.forward(&mut tape, &x, Mode::Eval, false)?;
        predictions.extend(argmax_rows(tape.value(out.logits_fusion).data(), classes));
        let hits = |logits| {
            argmax_rows(tape.value(logits).data(), classes)
                .iter()
                .zip(&y)
                .filter(|(p, t)| p == t)
                .count()
        };
        res_hits += hits(out.logits_res);
        if let Some(d) = out.logits_dense {
            dual = true;
            dense_hits += hits(d);
        }
    }
    let confusion = ConfusionMatrix::from_pairs(&data.labels, &predictions, classes)?;
    let report = MetricsReport::from_confusion(&confusion)?;
    let n = data.len() as f64;
    Ok(Evaluation {
        confusion,
        report,
        predictions,
        res_accuracy: res_hits as f64 / n,
        dense_accuracy: dual.then(|| dense_hits as f64 / n),
    })
}
