//! Seeded class-stratified train/test split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::window::WindowedDataset;
use crate::error::{Error, Result};

/// Train and test window indices, each sorted ascending.
///
/// Per class, `round(count · test_fraction)` windows go to the test side,
/// capped so at least one stays in training. Classes with no windows are
/// skipped.
pub fn split_indices(
    labels: &[usize],
    class_names: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let mut by_class = vec![Vec::new(); class_names.len()];
    for (i, &l) in labels.iter().enumerate() {
        let bucket = by_class.get_mut(l).ok_or(Error::Label {
            index: i,
            label: l,
            classes: class_names.len(),
        })?;
        bucket.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut members) in by_class.into_iter().enumerate() {
        match members.len() {
            0 => continue,
            1 => {
                return Err(Error::Contract(format!(
                    "class {:?} has a single window; stratified splitting needs at least 2",
                    class_names[class]
                )))
            }
            _ => {}
        }
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64 * test_fraction).round() as usize).min(members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(
    ds: &WindowedDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    let (train, test) = split_indices(&ds.labels, &ds.class_names, test_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("class{i}")).collect()
    }

    #[test]
    fn balanced_example() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let (train, test) = split_indices(&labels, &names(4), 0.2, 3).unwrap();
        assert_eq!(test.len(), 20);
        assert_eq!(train.len(), 80);
        for c in 0..4 {
            assert_eq!(test.iter().filter(|&&i| labels[i] == c).count(), 5);
        }
    }

    #[test]
    fn singleton_class_is_named() {
        let labels = vec![0, 0, 1];
        match split_indices(&labels, &names(2), 0.5, 0) {
            Err(Error::Contract(msg)) => assert!(msg.contains("class1")),
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn keeps_one_training_window() {
        let labels = vec![0, 0];
        let (train, test) = split_indices(&labels, &names(1), 0.9, 0).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
    }

    #[test]
    fn bad_fraction() {
        assert!(split_indices(&[0, 0], &names(1), 1.0, 0).is_err());
    }
}
