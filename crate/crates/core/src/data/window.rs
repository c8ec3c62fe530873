//! Sliding-window segmentation and the windowed dataset container.

use rayon::prelude::*;

use super::normalize::Normalizer;
use super::recording::SensorRecording;
use crate::error::{Error, Result};
use crate::model::ChannelPartition;
use crate::tensor::Tensor;

/// Fixed-length windows ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    /// `[M, W, F]`.
    pub windows: Tensor,
    pub labels: Vec<usize>,
    pub window_len: usize,
    pub stride: usize,
    pub class_names: Vec<String>,
    pub partition: ChannelPartition,
    /// Statistics applied to `windows`, if any; always fitted on a training split.
    pub normalization: Option<Normalizer>,
}

impl WindowedDataset {
    pub fn new(
        windows: Tensor,
        labels: Vec<usize>,
        stride: usize,
        class_names: Vec<String>,
        partition: ChannelPartition,
    ) -> Result<Self> {
        if windows.ndim() != 3 || windows.dim(0) != labels.len() {
            return Err(Error::dim(
                "windowed_dataset",
                format!("windows {:?} for {} labels", windows.shape(), labels.len()),
            ));
        }
        if windows.dim(2) != partition.total_channels() {
            return Err(Error::dim(
                "windowed_dataset",
                format!(
                    "windows have {} channels, partition covers {}",
                    windows.dim(2),
                    partition.total_channels()
                ),
            ));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_names.len()) {
            return Err(Error::Label {
                index,
                label,
                classes: class_names.len(),
            });
        }
        Ok(Self {
            window_len: windows.dim(1),
            windows,
            labels,
            stride,
            class_names,
            partition,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> usize {
        self.partition.total_channels()
    }

    /// Windows per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Inputs `[n, W, F]` and labels for the given window indices, in order.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let x = self.windows.select_rows(indices);
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let (windows, labels) = self.batch(indices);
        Self {
            windows,
            labels,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            windows: Tensor::zeros(&[0, self.window_len, self.channels()]),
            labels: Vec::new(),
            window_len: self.window_len,
            stride: self.stride,
            class_names: self.class_names.clone(),
            partition: self.partition.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Concatenates datasets that share window length, classes and partition.
    pub fn concat(parts: &[WindowedDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("cannot concatenate zero datasets".into()))?;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.window_len != first.window_len
                || p.class_names != first.class_names
                || p.partition != first.partition
                || p.normalization != first.normalization
            {
                return Err(Error::Contract(
                    "datasets differ in window length, classes, partition or normalization".into(),
                ));
            }
            data.extend_from_slice(p.windows.data());
            labels.extend_from_slice(&p.labels);
        }
        let windows = Tensor::new(vec![labels.len(), first.window_len, first.channels()], data)?;
        Ok(Self {
            windows,
            labels,
            ..first.clone_meta()
        })
    }
}

/// `floor((T − W) / stride) + 1` for `W ≤ T`, otherwise zero.
pub fn window_count(total: usize, window_len: usize, stride: usize) -> usize {
    if window_len == 0 || stride == 0 || window_len > total {
        0
    } else {
        (total - window_len) / stride + 1
    }
}

/// Majority label of `labels`.
///
/// Ties go to the tied label whose last occurrence is latest; in particular
/// the label at the final timestep wins whenever it is among the tied ones.
pub fn majority_label(labels: &[usize]) -> Option<usize> {
    let classes = labels.iter().max()? + 1;
    let mut counts = vec![0usize; classes];
    let mut last = vec![0usize; classes];
    for (t, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        last[l] = t;
    }
    (0..classes)
        .filter(|&c| counts[c] > 0)
        .max_by_key(|&c| (counts[c], last[c]))
}

/// Cuts `rec` into windows of `window_len` timesteps every `stride` steps.
///
/// A recording shorter than one window yields an empty dataset and a warning.
pub fn sliding_windows(
    rec: &SensorRecording,
    window_len: usize,
    stride: usize,
    partition: &ChannelPartition,
) -> Result<WindowedDataset> {
    if window_len == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "window length and stride must be positive, got {window_len} and {stride}"
        )));
    }
    if partition.total_channels() != rec.channels() {
        return Err(Error::dim(
            "sliding_windows",
            format!(
                "partition covers {} channels, recording has {}",
                partition.total_channels(),
                rec.channels()
            ),
        ));
    }
    let f = rec.channels();
    let m = window_count(rec.len(), window_len, stride);
    if m == 0 {
        log::warn!(
            "recording of {} timesteps is shorter than the window length {window_len}; no windows produced",
            rec.len()
        );
    }
    let mut data = Vec::with_capacity(m * window_len * f);
    let mut labels = Vec::with_capacity(m);
    for k in 0..m {
        let start = k * stride;
        data.extend_from_slice(&rec.samples.data()[start * f..(start + window_len) * f]);
        labels.push(majority_label(&rec.labels[start..start + window_len]).expect("window is non-empty"));
    }
    WindowedDataset::new(
        Tensor::new(vec![m, window_len, f], data)?,
        labels,
        stride,
        rec.class_names.clone(),
        partition.clone(),
    )
}

/// Windows several recordings in parallel and concatenates them in input order.
pub fn window_recordings(
    recs: &[SensorRecording],
    window_len: usize,
    stride: usize,
    partition: &ChannelPartition,
) -> Result<WindowedDataset> {
    let parts = recs
        .par_iter()
        .map(|r| sliding_windows(r, window_len, stride, partition))
        .collect::<Result<Vec<_>>>()?;
    WindowedDataset::concat(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording(t: usize, labels: Vec<usize>) -> SensorRecording {
        SensorRecording::new(
            Tensor::from_fn(&[t, 2], |i| i as f64),
            labels,
            vec!["acc".into(), "gyro".into()],
            vec!["a".into(), "b".into(), "c".into()],
            50.0,
        )
        .unwrap()
    }

    fn partition() -> ChannelPartition {
        ChannelPartition::contiguous(1, 2).unwrap()
    }

    #[test]
    fn count_examples() {
        assert_eq!(window_count(100, 50, 25), 3);
        assert_eq!(window_count(50, 50, 7), 1);
        assert_eq!(window_count(49, 50, 1), 0);
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_label(&[0, 0, 1]), Some(0));
        assert_eq!(majority_label(&[1, 0, 0, 1]), Some(1));
        assert_eq!(majority_label(&[0, 1, 1, 0]), Some(0));
        // 0 and 2 tie; the final label 1 is not among them, so the later-ending 2 wins.
        assert_eq!(majority_label(&[0, 2, 0, 2, 1]), Some(2));
        assert_eq!(majority_label(&[]), None);
    }

    #[test]
    fn windows_copy_the_right_rows() {
        let rec = recording(100, vec![0; 100]);
        let ds = sliding_windows(&rec, 50, 25, &partition()).unwrap();
        assert_eq!(ds.windows.shape(), &[3, 50, 2]);
        assert_eq!(ds.windows.at3(1, 0, 0), 50.0);
        assert_eq!(ds.windows.at3(2, 49, 1), 199.0);
    }

    #[test]
    fn short_recording_gives_empty_dataset() {
        let rec = recording(3, vec![0, 1, 2]);
        let ds = sliding_windows(&rec, 5, 1, &partition()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.windows.shape(), &[0, 5, 2]);
    }

    #[test]
    fn zero_stride_rejected() {
        let rec = recording(3, vec![0, 1, 2]);
        assert!(matches!(sliding_windows(&rec, 2, 0, &partition()), Err(Error::Config(_))));
    }

    #[test]
    fn recordings_concatenate_in_order() {
        let a = recording(10, vec![0; 10]);
        let b = recording(12, vec![2; 12]);
        let ds = window_recordings(&[a, b], 4, 4, &partition()).unwrap();
        assert_eq!(ds.labels, vec![0, 0, 2, 2, 2]);
    }

    #[test]
    fn subset_keeps_metadata() {
        let rec = recording(20, (0..20).map(|i| i % 3).collect());
        let ds = sliding_windows(&rec, 1, 1, &partition()).unwrap();
        let sub = ds.subset(&[4, 1]);
        assert_eq!(sub.labels, vec![1, 1]);
        assert_eq!(sub.windows.data(), &[8.0, 9.0, 2.0, 3.0]);
        assert_eq!(sub.partition, ds.partition);
    }
}
