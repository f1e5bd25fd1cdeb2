//! Datasets and the class-incremental streaming protocol.
//!
//! Synthetic Gaussian blobs stand in for the image benchmarks at desk
//! scale; an IDX reader covers MNIST-style files. A dataset is split
//! into class batches with pairwise-disjoint class ids, fed to the
//! trainer one batch at a time. The rehearsal pool caches a capped
//! number of samples per old class for the review loss.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::rng::{derive_seed, new_rng, unit_vector};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{num_classes} classes are not divisible into batches of {classes_per_batch}")]
    NotDivisible {
        num_classes: usize,
        classes_per_batch: usize,
    },
    #[error("class {0} was already added to the pool")]
    DuplicatePoolClass(usize),
    #[error("pool draw of {requested} exceeds pool size {available}")]
    DrawTooLarge { requested: usize, available: usize },
    #[error("pool is empty")]
    EmptyPool,
    #[error("idx parse error at byte {offset}: {message}")]
    IdxParse { offset: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Labeled feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Sorted unique class ids present in `labels`.
    pub class_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Self {
        assert_eq!(features.len(), labels.len(), "feature/label count mismatch");
        let mut class_ids: Vec<usize> = labels.clone();
        class_ids.sort_unstable();
        class_ids.dedup();
        Dataset {
            features,
            labels,
            class_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Samples whose label is in `classes`, as a new dataset.
    pub fn filter_classes(&self, classes: &[usize]) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (f, &l) in self.features.iter().zip(&self.labels) {
            if classes.contains(&l) {
                features.push(f.clone());
                labels.push(l);
            }
        }
        Dataset::new(features, labels)
    }

    /// CSV dump: header `label,f0,...,f{D-1}`, one row per sample.
    pub fn to_csv(&self) -> String {
        let dim = self.feature_dim();
        let mut out = String::from("label");
        for i in 0..dim {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for (f, l) in self.features.iter().zip(&self.labels) {
            let _ = write!(out, "{l}");
            for x in f {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Fixed 80/20 stratified split of a generated corpus.
#[derive(Clone, Debug)]
pub struct TrainTestSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// Ordered class batches with pairwise-disjoint class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassBatchStream {
    pub batches: Vec<Dataset>,
}

impl ClassBatchStream {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

/// Gaussian blobs around class centers drawn uniformly on the unit
/// sphere. `spread` is the expected Euclidean norm of a sample's noise
/// (per-coordinate std `spread / sqrt(feature_dim)`), so difficulty is
/// comparable across dimensions. Deterministic in `seed`; the
/// train/test split is stratified 80/20 with a fixed per-class shuffle.
pub fn gen_synthetic_blobs(
    num_classes: usize,
    per_class: usize,
    feature_dim: usize,
    spread: f64,
    seed: u64,
) -> TrainTestSplit {
    assert!(num_classes >= 1 && per_class >= 1 && feature_dim >= 1);
    assert!(spread >= 0.0, "spread must be non-negative");
    let mut rng = new_rng(derive_seed(seed, 0xDA7A));
    let sigma = spread / (feature_dim as f64).sqrt();
    let mut train_features = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_features = Vec::new();
    let mut test_labels = Vec::new();
    for class in 0..num_classes {
        let center = unit_vector(feature_dim, &mut rng);
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(per_class);
        for _ in 0..per_class {
            let mut noise = vec![0.0; feature_dim];
            crate::rng::fill_standard_normal(&mut rng, &mut noise);
            let sample = center
                .iter()
                .zip(&noise)
                .map(|(c, n)| c + sigma * n)
                .collect();
            samples.push(sample);
        }
        let mut order: Vec<usize> = (0..per_class).collect();
        order.shuffle(&mut rng);
        let n_train = if per_class == 1 {
            1
        } else {
            (((per_class as f64) * 0.8).round() as usize).clamp(1, per_class - 1)
        };
        for (pos, &idx) in order.iter().enumerate() {
            if pos < n_train {
                train_features.push(samples[idx].clone());
                train_labels.push(class);
            } else {
                test_features.push(samples[idx].clone());
                test_labels.push(class);
            }
        }
    }
    TrainTestSplit {
        train: Dataset::new(train_features, train_labels),
        test: Dataset::new(test_features, test_labels),
    }
}

/// Stratified 80/20 train/test split of an arbitrary dataset, with the
/// same per-class shuffle policy as the synthetic generator.
pub fn stratified_split(ds: &Dataset, seed: u64) -> Result<TrainTestSplit, DataError> {
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut rng = new_rng(derive_seed(seed, 0x5517));
    let mut train_features = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_features = Vec::new();
    let mut test_labels = Vec::new();
    for &class in &ds.class_ids {
        let mut indices: Vec<usize> = ds
            .labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect();
        indices.shuffle(&mut rng);
        let n = indices.len();
        let n_train = if n == 1 {
            1
        } else {
            (((n as f64) * 0.8).round() as usize).clamp(1, n - 1)
        };
        for (pos, &idx) in indices.iter().enumerate() {
            if pos < n_train {
                train_features.push(ds.features[idx].clone());
                train_labels.push(class);
            } else {
                test_features.push(ds.features[idx].clone());
                test_labels.push(class);
            }
        }
    }
    Ok(TrainTestSplit {
        train: Dataset::new(train_features, train_labels),
        test: Dataset::new(test_features, test_labels),
    })
}

/// Partition a dataset into consecutive groups of sorted class ids.
pub fn split_class_batches(
    ds: &Dataset,
    classes_per_batch: usize,
) -> Result<ClassBatchStream, DataError> {
    assert!(classes_per_batch >= 1);
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if ds.class_ids.len() % classes_per_batch != 0 {
        return Err(DataError::NotDivisible {
            num_classes: ds.class_ids.len(),
            classes_per_batch,
        });
    }
    let batches = ds
        .class_ids
        .chunks(classes_per_batch)
        .map(|group| ds.filter_classes(group))
        .collect();
    Ok(ClassBatchStream { batches })
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader {
    bytes: Vec<u8>,
    offset: usize,
}

impl IdxReader {
    fn read_u32(&mut self) -> Result<u32, DataError> {
        if self.offset + 4 > self.bytes.len() {
            return Err(DataError::IdxParse {
                offset: self.offset,
                message: format!(
                    "truncated: need 4 bytes, {} remain",
                    self.bytes.len() - self.offset
                ),
            });
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..self.offset + 4].try_into().unwrap());
        self.offset += 4;
        Ok(v)
    }

    fn read_bytes(&mut self, n: usize) -> Result<&[u8], DataError> {
        if self.offset + n > self.bytes.len() {
            return Err(DataError::IdxParse {
                offset: self.offset,
                message: format!(
                    "truncated: need {n} bytes, {} remain",
                    self.bytes.len() - self.offset
                ),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }
}

fn read_file(path: &std::path::Path) -> Result<Vec<u8>, DataError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    Ok(bytes)
}

/// Parse big-endian IDX image/label files into a dataset with pixel
/// features scaled to `[0, 1]`.
pub fn load_idx(
    images_path: &std::path::Path,
    labels_path: &std::path::Path,
) -> Result<Dataset, DataError> {
    let mut images = IdxReader {
        bytes: read_file(images_path)?,
        offset: 0,
    };
    let magic = images.read_u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::IdxParse {
            offset: 0,
            message: format!("bad image magic: expected {IDX_IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        });
    }
    let count = images.read_u32()? as usize;
    let rows = images.read_u32()? as usize;
    let cols = images.read_u32()? as usize;
    let pixels = images.read_bytes(count * rows * cols)?;
    let features: Vec<Vec<f64>> = pixels
        .chunks(rows * cols)
        .map(|img| img.iter().map(|&p| p as f64 / 255.0).collect())
        .collect();

    let mut labels_reader = IdxReader {
        bytes: read_file(labels_path)?,
        offset: 0,
    };
    let magic = labels_reader.read_u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::IdxParse {
            offset: 0,
            message: format!("bad label magic: expected {IDX_LABELS_MAGIC:#010x}, found {magic:#010x}"),
        });
    }
    let label_count = labels_reader.read_u32()? as usize;
    if label_count != count {
        return Err(DataError::IdxParse {
            offset: 4,
            message: format!("label count {label_count} does not match image count {count}"),
        });
    }
    let labels: Vec<usize> = labels_reader
        .read_bytes(label_count)?
        .iter()
        .map(|&b| b as usize)
        .collect();
    Ok(Dataset::new(features, labels))
}

/// Capped per-class cache of old-class samples for the review loss.
#[derive(Clone, Debug)]
pub struct RehearsalPool {
    per_class_cap: usize,
    seed: u64,
    rng: ChaCha12Rng,
    store: BTreeMap<usize, Vec<Vec<f64>>>,
}

impl RehearsalPool {
    pub fn new(per_class_cap: usize, seed: u64) -> Self {
        assert!(per_class_cap >= 1);
        RehearsalPool {
            per_class_cap,
            seed,
            rng: new_rng(seed),
            store: BTreeMap::new(),
        }
    }

    pub fn per_class_cap(&self) -> usize {
        self.per_class_cap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.store.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn classes(&self) -> Vec<usize> {
        self.store.keys().copied().collect()
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.store.get(&class).map_or(0, Vec::len)
    }

    /// Cache up to the per-class cap of uniformly chosen samples from
    /// each class of `batch`. Classes must not already be pooled.
    pub fn update(&mut self, batch: &Dataset) -> Result<(), DataError> {
        for &class in &batch.class_ids {
            if self.store.contains_key(&class) {
                return Err(DataError::DuplicatePoolClass(class));
            }
        }
        for &class in &batch.class_ids {
            let mut indices: Vec<usize> = batch
                .labels
                .iter()
                .enumerate()
                .filter_map(|(i, &l)| (l == class).then_some(i))
                .collect();
            indices.shuffle(&mut self.rng);
            indices.truncate(self.per_class_cap);
            indices.sort_unstable();
            let samples = indices
                .into_iter()
                .map(|i| batch.features[i].clone())
                .collect();
            self.store.insert(class, samples);
        }
        Ok(())
    }

    /// Draw `n` samples: round-robin over classes starting from an
    /// offset chosen by `rng`, uniform without replacement within each
    /// class. `n` must not exceed the pool size.
    pub fn draw(
        &self,
        n: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Vec<Vec<f64>>, Vec<usize>), DataError> {
        if self.store.is_empty() {
            return Err(DataError::EmptyPool);
        }
        let total = self.len();
        if n > total {
            return Err(DataError::DrawTooLarge {
                requested: n,
                available: total,
            });
        }
        let classes: Vec<usize> = self.store.keys().copied().collect();
        let mut queues: Vec<(usize, Vec<usize>)> = classes
            .iter()
            .map(|&c| {
                let mut order: Vec<usize> = (0..self.store[&c].len()).collect();
                order.shuffle(rng);
                (c, order)
            })
            .collect();
        let start = rng.gen_range(0..classes.len());
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let n_queues = queues.len();
        let mut cursor = start;
        while features.len() < n {
            let (class, queue) = &mut queues[cursor % n_queues];
            if let Some(idx) = queue.pop() {
                features.push(self.store[class][idx].clone());
                labels.push(*class);
            }
            cursor += 1;
        }
        Ok((features, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn blobs_single_class_all_labels_identical() {
        let split = gen_synthetic_blobs(1, 10, 4, 0.2, 1);
        assert!(split.train.labels.iter().all(|&l| l == 0));
        assert!(split.test.labels.iter().all(|&l| l == 0));
        assert_eq!(split.train.len() + split.test.len(), 10);
    }

    #[test]
    fn blobs_zero_spread_collapses_to_centers() {
        let split = gen_synthetic_blobs(3, 10, 5, 0.0, 2);
        // All samples of one class are identical.
        let mut by_class: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
        for (f, &l) in split.train.features.iter().zip(&split.train.labels) {
            by_class.entry(l).or_default().push(f);
        }
        for (_, samples) in by_class {
            for s in &samples {
                assert_eq!(*s, samples[0]);
            }
        }
    }

    // Nearest-centroid oracle calibrates the default task difficulty.
    #[test]
    fn blobs_default_config_nearest_centroid_accuracy() {
        let split = gen_synthetic_blobs(10, 200, 20, 0.3, 3);
        let mut centroids: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
        for (f, &l) in split.train.features.iter().zip(&split.train.labels) {
            let entry = centroids
                .entry(l)
                .or_insert_with(|| (vec![0.0; f.len()], 0));
            for (c, x) in entry.0.iter_mut().zip(f) {
                *c += x;
            }
            entry.1 += 1;
        }
        let centroids: Vec<(usize, Vec<f64>)> = centroids
            .into_iter()
            .map(|(l, (sum, n))| (l, sum.into_iter().map(|x| x / n as f64).collect()))
            .collect();
        let mut correct = 0;
        for (f, &l) in split.test.features.iter().zip(&split.test.labels) {
            let pred = centroids
                .iter()
                .min_by(|(_, a), (_, b)| {
                    let da: f64 = a.iter().zip(f).map(|(x, y)| (x - y) * (x - y)).sum();
                    let db: f64 = b.iter().zip(f).map(|(x, y)| (x - y) * (x - y)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap()
                .0;
            if pred == l {
                correct += 1;
            }
        }
        let acc = correct as f64 / split.test.len() as f64;
        assert!(acc >= 0.95, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn blobs_deterministic_in_seed() {
        let a = gen_synthetic_blobs(4, 20, 6, 0.3, 77);
        let b = gen_synthetic_blobs(4, 20, 6, 0.3, 77);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn split_batches_shapes_and_errors() {
        let split = gen_synthetic_blobs(10, 10, 3, 0.2, 4);
        let stream = split_class_batches(&split.train, 2).unwrap();
        assert_eq!(stream.len(), 5);
        for (i, batch) in stream.batches.iter().enumerate() {
            assert_eq!(batch.class_ids, vec![2 * i, 2 * i + 1]);
        }
        assert_eq!(
            split_class_batches(&split.train, 3),
            Err(DataError::NotDivisible {
                num_classes: 10,
                classes_per_batch: 3
            })
        );
    }

    // Multiset-equality oracle: batches reconstruct the source split.
    #[test]
    fn split_batches_reconstruct_source() {
        let split = gen_synthetic_blobs(6, 15, 4, 0.25, 5);
        let stream = split_class_batches(&split.train, 3).unwrap();
        let mut reconstructed: Vec<(usize, Vec<u64>)> = Vec::new();
        for batch in &stream.batches {
            for (f, &l) in batch.features.iter().zip(&batch.labels) {
                reconstructed.push((l, f.iter().map(|x| x.to_bits()).collect()));
            }
        }
        let mut original: Vec<(usize, Vec<u64>)> = split
            .train
            .features
            .iter()
            .zip(&split.train.labels)
            .map(|(f, &l)| (l, f.iter().map(|x| x.to_bits()).collect()))
            .collect();
        reconstructed.sort();
        original.sort();
        assert_eq!(reconstructed, original);
    }

    fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
        // 2 images of 2x2 pixels.
        let mut images = Vec::new();
        images.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend([0u8, 64, 128, 255, 10, 20, 30, 40]);
        let mut labels = Vec::new();
        labels.extend(IDX_LABELS_MAGIC.to_be_bytes());
        labels.extend(2u32.to_be_bytes());
        labels.extend([7u8, 3]);
        (images, labels)
    }

    #[test]
    fn idx_fixture_parses_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = idx_fixture();
        let ip = dir.path().join("images.idx");
        let lp = dir.path().join("labels.idx");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![7, 3]);
        assert_eq!(
            ds.features[0],
            vec![0.0, 64.0 / 255.0, 128.0 / 255.0, 1.0]
        );
        assert_eq!(ds.class_ids, vec![3, 7]);
    }

    #[test]
    fn idx_wrong_magic_names_expected_and_found() {
        let dir = tempfile::tempdir().unwrap();
        let (mut images, labels) = idx_fixture();
        images[3] = 0x99;
        let ip = dir.path().join("images.idx");
        let lp = dir.path().join("labels.idx");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        match load_idx(&ip, &lp) {
            Err(DataError::IdxParse { message, .. }) => {
                assert!(message.contains("0x00000803"), "{message}");
                assert!(message.contains("0x00000899"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn idx_count_mismatch_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let (images, mut labels) = idx_fixture();
        labels[7] = 3; // claim 3 labels, supply 2
        let ip = dir.path().join("images.idx");
        let lp = dir.path().join("labels.idx");
        std::fs::write(&ip, &images).unwrap();
        std::fs::write(&lp, &labels).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::IdxParse { .. })
        ));

        let truncated = &images[..images.len() - 3];
        std::fs::write(&ip, truncated).unwrap();
        match load_idx(&ip, &dir.path().join("labels.idx")) {
            Err(DataError::IdxParse { offset, message }) => {
                assert_eq!(offset, 16);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    fn tiny_batch(class: usize, n: usize) -> Dataset {
        let features = (0..n).map(|i| vec![class as f64, i as f64]).collect();
        let labels = vec![class; n];
        Dataset::new(features, labels)
    }

    #[test]
    fn pool_caps_and_caches() {
        let mut pool = RehearsalPool::new(20, 9);
        pool.update(&tiny_batch(0, 5)).unwrap();
        assert_eq!(pool.class_count(0), 5); // whole class cached

        pool.update(&tiny_batch(1, 100)).unwrap();
        assert_eq!(pool.class_count(1), 20); // capped

        // Independent caps across disjoint updates.
        pool.update(&tiny_batch(2, 30)).unwrap();
        assert_eq!(pool.class_count(0), 5);
        assert_eq!(pool.class_count(1), 20);
        assert_eq!(pool.class_count(2), 20);

        assert_eq!(
            pool.update(&tiny_batch(1, 4)),
            Err(DataError::DuplicatePoolClass(1))
        );
    }

    #[test]
    fn pool_draw_whole_pool_is_multiset_equal() {
        let mut pool = RehearsalPool::new(10, 10);
        pool.update(&tiny_batch(0, 4)).unwrap();
        pool.update(&tiny_batch(1, 3)).unwrap();
        let mut rng = new_rng(1);
        let (features, labels) = pool.draw(7, &mut rng).unwrap();
        let mut drawn: Vec<(usize, Vec<u64>)> = labels
            .iter()
            .zip(&features)
            .map(|(&l, f)| (l, f.iter().map(|x| x.to_bits()).collect()))
            .collect();
        drawn.sort();
        let mut expected = Vec::new();
        for class in pool.classes() {
            for i in 0..pool.class_count(class) {
                let f = &pool.store[&class][i];
                expected.push((class, f.iter().map(|x: &f64| x.to_bits()).collect()));
            }
        }
        expected.sort();
        assert_eq!(drawn, expected);
    }

    #[test]
    fn pool_draw_round_robin_fairness() {
        let mut pool = RehearsalPool::new(10, 11);
        pool.update(&tiny_batch(0, 5)).unwrap();
        pool.update(&tiny_batch(1, 5)).unwrap();
        let mut rng = new_rng(2);
        let (_, labels) = pool.draw(4, &mut rng).unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 2);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 2);
    }

    #[test]
    fn pool_draw_errors() {
        let pool = RehearsalPool::new(5, 12);
        let mut rng = new_rng(3);
        assert_eq!(pool.draw(1, &mut rng), Err(DataError::EmptyPool));
        let mut pool = pool;
        pool.update(&tiny_batch(0, 2)).unwrap();
        assert_eq!(
            pool.draw(3, &mut rng),
            Err(DataError::DrawTooLarge {
                requested: 3,
                available: 2
            })
        );
    }

    // Chi-square sanity: class choice over many single-sample draws and
    // sample choice within a class are both near-uniform.
    #[test]
    fn pool_draw_frequencies_are_uniform() {
        let mut pool = RehearsalPool::new(5, 13);
        pool.update(&tiny_batch(0, 5)).unwrap();
        pool.update(&tiny_batch(1, 5)).unwrap();
        pool.update(&tiny_batch(2, 5)).unwrap();
        pool.update(&tiny_batch(3, 5)).unwrap();
        let mut rng = new_rng(4);
        let draws = 2000;
        let mut class_counts = [0usize; 4];
        let mut sample_counts: BTreeMap<u64, usize> = BTreeMap::new();
        for _ in 0..draws {
            let (features, labels) = pool.draw(1, &mut rng).unwrap();
            class_counts[labels[0]] += 1;
            if labels[0] == 0 {
                *sample_counts.entry(features[0][1].to_bits()).or_default() += 1;
            }
        }
        // df = 3, critical value at p = 0.01 is 11.345.
        let expected = draws as f64 / 4.0;
        let chi2: f64 = class_counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 11.345, "class chi2 {chi2}");
        // df = 4, critical value at p = 0.01 is 13.277.
        let n0: usize = sample_counts.values().sum();
        let expected = n0 as f64 / 5.0;
        let chi2: f64 = sample_counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.277, "sample chi2 {chi2}");
    }

    #[test]
    fn csv_dump_shape() {
        let ds = tiny_batch(1, 2);
        let csv = ds.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "label,f0,f1");
        assert_eq!(lines[1], "1,1,0");
        assert_eq!(lines[2], "1,1,1");
    }
}
