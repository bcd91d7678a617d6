//! Stratified train/validation/test assignment and class balancing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Manifest, Split};
use crate::error::{Error, Result};
use crate::labels::{ClassLabel, N_CLASSES};
use crate::signal::AugmentSpec;

/// Smallest class that can be split three ways.
pub const MIN_CLASS_SIZE: usize = 3;

/// `round(fraction · n)` with halves rounded away from zero. A small slack
/// absorbs the binary representation error of decimal fractions such as
/// 0.075, so exact decimal halves round up as in decimal arithmetic.
pub fn split_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 0.5 + 1e-9).floor() as usize
}

/// Per-class `(train, val, test)` sizes.
pub fn split_sizes(n: usize, val_fraction: f64, test_fraction: f64) -> (usize, usize, usize) {
    let test = split_count(test_fraction, n);
    let val = split_count(val_fraction, n);
    (n.saturating_sub(test + val), val, test)
}

fn check_fractions(val_fraction: f64, test_fraction: f64) -> Result<()> {
    if !(val_fraction > 0.0 && test_fraction > 0.0 && val_fraction + test_fraction < 1.0) {
        return Err(Error::config(format!(
            "split fractions must be positive with a sum below 1, got val {val_fraction} and test {test_fraction}"
        )));
    }
    Ok(())
}

/// Assign every entry to train, val or test, class by class.
///
/// Within a class, entries are ordered by path and shuffled with a generator
/// seeded from `seed` and the class index; the first `n_test` go to test, the
/// next `n_val` to validation, the rest to training. The result depends only
/// on the seed and the set of paths, never on previous assignments or row order.
pub fn stratified_split(manifest: &Manifest, val_fraction: f64, test_fraction: f64, seed: u64) -> Result<Manifest> {
    check_fractions(val_fraction, test_fraction)?;
    let mut out = manifest.clone();
    for class in ClassLabel::ALL {
        let mut members: Vec<usize> = (0..out.entries.len()).filter(|&i| out.entries[i].label == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < MIN_CLASS_SIZE {
            return Err(Error::Split {
                class: class.token().into(),
                msg: format!("{} recordings, need at least {MIN_CLASS_SIZE}", members.len()),
            });
        }
        members.sort_by(|&a, &b| out.entries[a].path.cmp(&out.entries[b].path));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class.index() as u64);
        members.shuffle(&mut rng);
        let (_, n_val, n_test) = split_sizes(members.len(), val_fraction, test_fraction);
        for (k, &i) in members.iter().enumerate() {
            out.entries[i].split = if k < n_test {
                Split::Test
            } else if k < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
        }
    }
    Ok(out)
}

/// Oversample the training split so every class present there has as many
/// entries as the largest one.
///
/// Each synthetic entry copies a source recording of its class (taken
/// round-robin in manifest order), keeps its label, and carries a random
/// [`AugmentSpec`] sized for clips of `clip_len` samples. Validation and
/// test entries are returned untouched; synthetic entries are appended.
pub fn balance_classes<R: Rng + ?Sized>(manifest: &Manifest, clip_len: usize, rng: &mut R) -> Result<Manifest> {
    let mut sources: [Vec<usize>; N_CLASSES] = Default::default();
    for (i, e) in manifest.entries.iter().enumerate() {
        if e.split == Split::Train && e.augmentation.is_none() {
            sources[e.label.index()].push(i);
        }
    }
    let train_counts = manifest.class_counts(Some(Split::Train));
    let target = train_counts.iter().copied().max().unwrap_or(0);
    if target == 0 {
        return Err(Error::Split { class: "(all)".into(), msg: "training split is empty".into() });
    }
    let mut out = manifest.clone();
    for class in ClassLabel::ALL {
        let present = manifest.entries.iter().any(|e| e.label == class);
        let src = &sources[class.index()];
        if !present {
            continue;
        }
        if src.is_empty() {
            return Err(Error::Split { class: class.token().into(), msg: "no training recordings to augment".into() });
        }
        let missing = target - train_counts[class.index()];
        for k in 0..missing {
            let mut copy = manifest.entries[src[k % src.len()]].clone();
            copy.augmentation = Some(AugmentSpec::random(rng, clip_len));
            out.entries.push(copy);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ManifestEntry;

    fn manifest(counts: &[(ClassLabel, usize)]) -> Manifest {
        Manifest::new(
            counts
                .iter()
                .flat_map(|&(c, n)| (0..n).map(move |i| ManifestEntry::new(format!("{c}/{i:04}.wav"), c)))
                .collect(),
        )
    }

    #[test]
    fn corpus_class_counts() {
        assert_eq!(split_sizes(200, 0.175, 0.075), (150, 35, 15));
        assert_eq!(split_sizes(793, 0.175, 0.075), (595, 139, 59));
        // 0.075·20 = 1.5 exactly in decimal: rounds up.
        assert_eq!(split_count(0.075, 20), 2);
    }

    #[test]
    fn deterministic_and_order_free() {
        let m = manifest(&[(ClassLabel::AS, 40), (ClassLabel::COPD, 30)]);
        let a = stratified_split(&m, 0.175, 0.075, 11).unwrap();
        assert_eq!(a, stratified_split(&m, 0.175, 0.075, 11).unwrap());
        assert_eq!(a, stratified_split(&a, 0.175, 0.075, 11).unwrap());
        let mut reversed = m.clone();
        reversed.entries.reverse();
        let mut b = stratified_split(&reversed, 0.175, 0.075, 11).unwrap();
        b.entries.reverse();
        assert_eq!(a, b);
        assert_ne!(a, stratified_split(&m, 0.175, 0.075, 12).unwrap());
    }

    #[test]
    fn tiny_class_is_an_error() {
        let m = manifest(&[(ClassLabel::AS, 10), (ClassLabel::BO, 2)]);
        match stratified_split(&m, 0.175, 0.075, 0) {
            Err(Error::Split { class, .. }) => assert_eq!(class, "BO"),
            other => panic!("{other:?}"),
        }
        assert!(stratified_split(&m, 0.6, 0.5, 0).is_err());
    }

    #[test]
    fn balancing_equalizes_train_only() {
        let m = stratified_split(&manifest(&[(ClassLabel::AS, 40), (ClassLabel::H, 12)]), 0.175, 0.075, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = balance_classes(&m, 2500, &mut rng).unwrap();
        let counts = b.class_counts(Some(Split::Train));
        assert_eq!(counts[ClassLabel::AS.index()], counts[ClassLabel::H.index()]);
        assert_eq!(b.class_counts(Some(Split::Val)), m.class_counts(Some(Split::Val)));
        assert!(b.entries.iter().filter(|e| e.augmentation.is_some()).all(|e| e.split == Split::Train && e.label == ClassLabel::H));
        b.validate().unwrap();
    }

    #[test]
    fn balanced_input_unchanged() {
        let m = manifest(&[(ClassLabel::AS, 5), (ClassLabel::MS, 5)]);
        let m = Manifest::new(m.entries.into_iter().map(|e| e.with_split(Split::Train)).collect());
        assert_eq!(balance_classes(&m, 2500, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), m);
    }
}
