//! CSV ingest.
//!
//! The canonical layout is one header row naming the `F` channel columns
//! followed by a single label column, then one row per timestep:
//!
//! ```text
//! acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z,label
//! 0.12,9.81,-0.30,0.01,0.02,0.00,walk
//! ```
//!
//! Cells are UTF-8, comma separated, with `.` as the decimal mark. Labels are
//! class names resolved against [`CsvSchema::class_names`].

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A continuous multichannel stream with per-timestep activity labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecording {
    /// `[T_total, F]`.
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub channel_names: Vec<String>,
    pub class_names: Vec<String>,
    pub sample_rate_hz: f64,
}

impl SensorRecording {
    pub fn new(
        samples: Tensor,
        labels: Vec<usize>,
        channel_names: Vec<String>,
        class_names: Vec<String>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if samples.ndim() != 2 || samples.dim(1) != channel_names.len() {
            return Err(Error::dim(
                "recording",
                format!("samples {:?} for {} channel names", samples.shape(), channel_names.len()),
            ));
        }
        if labels.len() != samples.dim(0) {
            return Err(Error::dim(
                "recording",
                format!("{} labels for {} timesteps", labels.len(), samples.dim(0)),
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
            samples,
            labels,
            channel_names,
            class_names,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Activity names; a label's class id is its position here.
    pub class_names: Vec<String>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Expected channel columns. When set, the header must match exactly.
    #[serde(default)]
    pub channels: Option<Vec<String>>,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
}

fn default_label_column() -> String {
    "label".into()
}

fn default_rate() -> f64 {
    50.0
}

impl CsvSchema {
    pub fn new<S: Into<String>>(class_names: impl IntoIterator<Item = S>) -> Self {
        Self {
            class_names: class_names.into_iter().map(Into::into).collect(),
            label_column: default_label_column(),
            channels: None,
            sample_rate_hz: default_rate(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SensorRecording> {
    let file = File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Parses CSV from any reader; line numbers in errors are 1-based file lines.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<SensorRecording> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let Some((label_name, channel_names)) = names.split_last() else {
        return Err(Error::Schema("missing header row".into()));
    };
    if *label_name != schema.label_column {
        return Err(Error::Schema(format!(
            "last column must be the label column {:?}, found {label_name:?}",
            schema.label_column
        )));
    }
    if channel_names.is_empty() {
        return Err(Error::Schema("no channel columns before the label column".into()));
    }
    if let Some(expected) = &schema.channels {
        if expected.as_slice() != channel_names {
            return Err(Error::Schema(format!(
                "channel columns {channel_names:?} do not match the expected {expected:?}"
            )));
        }
    }
    let f = channel_names.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_error(e, line)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != f + 1 {
            return Err(Error::Parse {
                line,
                detail: format!("expected {} cells, found {}", f + 1, record.len()),
            });
        }
        for (col, cell) in record.iter().take(f).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                detail: format!("non-numeric value {cell:?} in column {:?}", channel_names[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    detail: format!("non-finite value {cell:?} in column {:?}", channel_names[col]),
                });
            }
            values.push(v);
        }
        let label = record[f].trim();
        let class = schema.class_names.iter().position(|c| c == label).ok_or_else(|| {
            Error::Schema(format!("unknown label {label:?} at line {line}"))
        })?;
        labels.push(class);
    }
    let t = labels.len();
    SensorRecording::new(
        Tensor::new(vec![t, f], values)?,
        labels,
        channel_names.to_vec(),
        schema.class_names.clone(),
        schema.sample_rate_hz,
    )
}

fn csv_error(e: csv::Error, line: u64) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            detail: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema::new(["sit", "walk"])
    }

    #[test]
    fn three_row_fixture() {
        let text = "acc_x,gyro_x,label\n1.5,-2,sit\n0,3.25,walk\n4e-1,7,walk\n";
        let rec = read_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.samples.shape(), &[3, 2]);
        assert_eq!(rec.samples.data(), &[1.5, -2.0, 0.0, 3.25, 0.4, 7.0]);
        assert_eq!(rec.labels, vec![0, 1, 1]);
        assert_eq!(rec.channel_names, vec!["acc_x", "gyro_x"]);
    }

    #[test]
    fn non_numeric_cell_cites_file_line() {
        let mut text = String::from("a,b,label\n");
        for _ in 0..5 {
            text.push_str("1,2,sit\n");
        }
        text.push_str("1,oops,sit\n");
        match read_csv(text.as_bytes(), &schema()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_data_section() {
        let rec = read_csv("a,b,label\n".as_bytes(), &schema()).unwrap();
        assert_eq!(rec.len(), 0);
        assert_eq!(rec.samples.shape(), &[0, 2]);
    }

    #[test]
    fn unknown_label_is_schema_error() {
        let r = read_csv("a,label\n1,run\n".as_bytes(), &schema());
        assert!(matches!(r, Err(Error::Schema(_))));
    }

    #[test]
    fn wrong_label_column() {
        let r = read_csv("a,b\n1,2\n".as_bytes(), &schema());
        assert!(matches!(r, Err(Error::Schema(_))));
    }

    #[test]
    fn ragged_row() {
        let r = read_csv("a,b,label\n1,2,sit\n1,sit\n".as_bytes(), &schema());
        assert!(matches!(r, Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let r = load_csv("/nonexistent/definitely/missing.csv", &schema());
        assert!(matches!(r, Err(Error::Io(_))));
    }
}
