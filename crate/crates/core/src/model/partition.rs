use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Split of the `F` input channels into two disjoint, non-empty index sets,
/// one per branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPartition {
    index_set_1: Vec<usize>,
    index_set_2: Vec<usize>,
    total_channels: usize,
}

impl ChannelPartition {
    pub fn new(mut first: Vec<usize>, mut second: Vec<usize>, total_channels: usize) -> Result<Self> {
        first.sort_unstable();
        second.sort_unstable();
        if first.is_empty() || second.is_empty() {
            return Err(Error::Config("both channel index sets must be non-empty".into()));
        }
        let mut seen = vec![false; total_channels];
        for &c in first.iter().chain(&second) {
            if c >= total_channels {
                return Err(Error::Config(format!(
                    "channel index {c} out of range for {total_channels} channels"
                )));
            }
            if seen[c] {
                return Err(Error::Config(format!("channel {c} assigned more than once")));
            }
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("channel {missing} is not assigned to a branch")));
        }
        Ok(Self {
            index_set_1: first,
            index_set_2: second,
            total_channels,
        })
    }

    /// Channels `0..first` to the first set, the rest to the second.
    pub fn contiguous(first: usize, total_channels: usize) -> Result<Self> {
        Self::new(
            (0..first).collect(),
            (first..total_channels).collect(),
            total_channels,
        )
    }

    /// Accelerometer channels (names containing `acc`, case-insensitive) go
    /// to the first set, everything else to the second.
    pub fn from_channel_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let (first, second): (Vec<usize>, Vec<usize>) = (0..names.len())
            .partition(|&i| names[i].as_ref().to_ascii_lowercase().contains("acc"));
        Self::new(first, second, names.len())
    }

    pub fn first(&self) -> &[usize] {
        &self.index_set_1
    }

    pub fn second(&self) -> &[usize] {
        &self.index_set_2
    }

    pub fn total_channels(&self) -> usize {
        self.total_channels
    }

    /// Gathers the two channel subsets of `[N, T, F]`, preserving index order.
    pub fn split(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.ndim() != 3 || x.dim(2) != self.total_channels {
            return Err(Error::dim(
                "partition_input",
                format!(
                    "input {:?} does not have {} channels on its last axis",
                    x.shape(),
                    self.total_channels
                ),
            ));
        }
        Ok((gather(x, &self.index_set_1), gather(x, &self.index_set_2)))
    }

    /// Inverse of [`split`](Self::split).
    pub fn scatter(&self, x1: &Tensor, x2: &Tensor) -> Result<Tensor> {
        let ok = x1.ndim() == 3
            && x2.ndim() == 3
            && x1.dim(0) == x2.dim(0)
            && x1.dim(1) == x2.dim(1)
            && x1.dim(2) == self.index_set_1.len()
            && x2.dim(2) == self.index_set_2.len();
        if !ok {
            return Err(Error::dim(
                "scatter",
                format!("parts {:?} and {:?} do not match the partition", x1.shape(), x2.shape()),
            ));
        }
        let (n, t, f) = (x1.dim(0), x1.dim(1), self.total_channels);
        let mut out = Tensor::zeros(&[n, t, f]);
        for (part, idx) in [(x1, &self.index_set_1), (x2, &self.index_set_2)] {
            let fp = idx.len();
            for row in 0..n * t {
                for (j, &c) in idx.iter().enumerate() {
                    out.data_mut()[row * f + c] = part.data()[row * fp + j];
                }
            }
        }
        Ok(out)
    }
}

fn gather(x: &Tensor, idx: &[usize]) -> Tensor {
    let (n, t, f) = (x.dim(0), x.dim(1), x.dim(2));
    let mut data = Vec::with_capacity(n * t * idx.len());
    for row in x.data().chunks(f) {
        data.extend(idx.iter().map(|&c| row[c]));
    }
    Tensor::new(vec![n, t, idx.len()], data).unwrap()
}
