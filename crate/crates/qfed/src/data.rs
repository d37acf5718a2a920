//! MNIST IDX ingestion: load, filter to a digit subset, reduce 28x28 pixels
//! to a handful of features in [0, 1], and shard deterministically across
//! participants.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const IMAGE_SIDE: usize = 28;
const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Raw 28x28 grayscale samples with byte labels.
#[derive(Clone, Debug)]
pub struct RawDataset {
    images: Vec<u8>,
    labels: Vec<u8>,
    num_classes: usize,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// First `n` samples in order.
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n * PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }
}

/// Feature rows in [0, 1] with class labels in `0..num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    num_features: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
}

impl EncodedDataset {
    pub fn new(num_features: usize, num_classes: usize, features: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if features.len() != num_features * labels.len() {
            return Err(Error::Argument(format!(
                "feature buffer holds {} values, expected {} rows x {} features",
                features.len(),
                labels.len(),
                num_features
            )));
        }
        Ok(Self { num_features, num_classes, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            num_features: self.num_features,
            num_classes: self.num_classes,
            features: self.features[..n * self.num_features].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    fn gather(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.num_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.feature_row(r));
            labels.push(self.labels[r]);
        }
        Self { num_features: self.num_features, num_classes: self.num_classes, features, labels }
    }
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(data: &[u8], offset: usize, what: &str) -> Result<u32> {
    let bytes: [u8; 4] = data
        .get(offset..offset + 4)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            message: format!("file truncated while reading {what}"),
        })?;
    Ok(u32::from_be_bytes(bytes))
}

/// Parse an IDX image/label pair. Gzipped files are decompressed
/// transparently. Pixel bytes are returned unmodified.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let image_data = read_maybe_gzip(images_path)?;
    let label_data = read_maybe_gzip(labels_path)?;

    let magic = be_u32(&image_data, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        });
    }
    let n = be_u32(&image_data, 4, "image count")? as usize;
    let rows = be_u32(&image_data, 8, "image rows")? as usize;
    let cols = be_u32(&image_data, 12, "image cols")? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::Format {
            offset: 8,
            message: format!("expected {IMAGE_SIDE}x{IMAGE_SIDE} images, got {rows}x{cols}"),
        });
    }
    let expect = 16 + n * rows * cols;
    if image_data.len() != expect {
        return Err(Error::Format {
            offset: image_data.len().min(expect) as u64,
            message: format!("image payload is {} bytes, expected {expect}", image_data.len()),
        });
    }

    let magic = be_u32(&label_data, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        });
    }
    let n_labels = be_u32(&label_data, 4, "label count")? as usize;
    if n_labels != n {
        return Err(Error::Format {
            offset: 4,
            message: format!("label count {n_labels} does not match image count {n}"),
        });
    }
    if label_data.len() != 8 + n {
        return Err(Error::Format {
            offset: label_data.len().min(8 + n) as u64,
            message: format!("label payload is {} bytes, expected {}", label_data.len(), 8 + n),
        });
    }
    let labels = label_data[8..].to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Format {
            offset: (8 + pos) as u64,
            message: format!("label {} at sample {pos} outside 0..=9", labels[pos]),
        });
    }
    Ok(RawDataset { images: image_data[16..].to_vec(), labels, num_classes: 10 })
}

/// Keep samples whose label is in `digits` (original order) and remap labels
/// to class indices by ascending digit value.
pub fn select_digits(raw: &RawDataset, digits: &[u8]) -> Result<RawDataset> {
    if !(2..=3).contains(&digits.len()) {
        return Err(Error::Config(format!(
            "digit subsets must have 2 or 3 entries, got {}",
            digits.len()
        )));
    }
    let mut sorted = digits.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != digits.len() {
        return Err(Error::Config("digit subset contains duplicates".into()));
    }
    if sorted.iter().any(|&d| d > 9) {
        return Err(Error::Config("digits must be in 0..=9".into()));
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..raw.len() {
        if let Some(class) = sorted.iter().position(|&d| d == raw.label(i)) {
            images.extend_from_slice(raw.image(i));
            labels.push(class as u8);
        }
    }
    if labels.is_empty() {
        return Err(Error::Config(format!("no samples carry labels {sorted:?}")));
    }
    Ok(RawDataset { images, labels, num_classes: sorted.len() })
}

/// Feature-reduction strategy for the 784-pixel images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMethod {
    #[default]
    Avgpool,
    Pca,
}

fn avgpool_grid(u: usize) -> Result<(usize, usize)> {
    // (grid_rows, grid_cols); block size is 28/rows x 28/cols
    match u {
        4 => Ok((2, 2)),
        8 => Ok((2, 4)),
        16 => Ok((4, 4)),
        other => Err(Error::Config(format!(
            "avgpool supports 4, 8, or 16 features, got {other}"
        ))),
    }
}

fn avgpool_features(image: &[u8], grid: (usize, usize)) -> Vec<f64> {
    let (grid_rows, grid_cols) = grid;
    let block_h = IMAGE_SIDE / grid_rows;
    let block_w = IMAGE_SIDE / grid_cols;
    let mut out = Vec::with_capacity(grid_rows * grid_cols);
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let mut sum = 0u32;
            for r in gr * block_h..(gr + 1) * block_h {
                for c in gc * block_w..(gc + 1) * block_w {
                    sum += image[r * IMAGE_SIDE + c] as u32;
                }
            }
            out.push(sum as f64 / (block_h * block_w) as f64 / 255.0);
        }
    }
    out
}

/// Reduce to `u` features in [0, 1]. For PCA this fits on the given dataset;
/// use [`PcaReducer`] to fit on a training split and transform a test split.
pub fn reduce_features(raw: &RawDataset, u: usize, method: FeatureMethod) -> Result<EncodedDataset> {
    match method {
        FeatureMethod::Avgpool => {
            let grid = avgpool_grid(u)?;
            let mut features = Vec::with_capacity(raw.len() * u);
            for i in 0..raw.len() {
                features.extend(avgpool_features(raw.image(i), grid));
            }
            EncodedDataset::new(u, raw.num_classes(), features, raw.labels.clone())
        }
        FeatureMethod::Pca => PcaReducer::fit(raw, u)?.transform(raw),
    }
}

/// PCA projection fit on a training split; per-component min-max rescaling
/// uses the training extrema and clamps transformed values into [0, 1].
#[derive(Clone, Debug)]
pub struct PcaReducer {
    mean: DVector<f64>,
    components: DMatrix<f64>, // u x 784
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl PcaReducer {
    pub fn fit(train: &RawDataset, u: usize) -> Result<Self> {
        if u == 0 || u > crate::state::MAX_QUBITS {
            return Err(Error::Config(format!(
                "pca feature count must be in 1..={}, got {u}",
                crate::state::MAX_QUBITS
            )));
        }
        if train.is_empty() {
            return Err(Error::Config("cannot fit PCA on an empty dataset".into()));
        }
        let n = train.len();
        let mut mean = DVector::zeros(PIXELS);
        for i in 0..n {
            for (j, &px) in train.image(i).iter().enumerate() {
                mean[j] += px as f64 / 255.0;
            }
        }
        mean /= n as f64;

        let mut cov = DMatrix::zeros(PIXELS, PIXELS);
        let mut centered = DVector::zeros(PIXELS);
        for i in 0..n {
            for (j, &px) in train.image(i).iter().enumerate() {
                centered[j] = px as f64 / 255.0 - mean[j];
            }
            cov.syger(1.0 / n as f64, &centered, &centered, 1.0);
        }
        // syger fills the lower triangle; mirror it.
        for r in 0..PIXELS {
            for c in r + 1..PIXELS {
                cov[(r, c)] = cov[(c, r)];
            }
        }

        let eigen = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..PIXELS).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[b]
                .partial_cmp(&eigen.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });

        let mut components = DMatrix::zeros(u, PIXELS);
        for (row, &col) in order[..u].iter().enumerate() {
            let mut v = eigen.eigenvectors.column(col).clone_owned();
            // Deterministic sign: largest-magnitude entry made positive.
            let pivot = (0..PIXELS)
                .max_by(|&a, &b| {
                    v[a].abs()
                        .partial_cmp(&v[b].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                })
                .unwrap();
            if v[pivot] < 0.0 {
                v = -v;
            }
            components.set_row(row, &v.transpose());
        }

        let mut reducer = Self {
            mean,
            components,
            mins: vec![0.0; u],
            maxs: vec![1.0; u],
        };
        let raw_scores = reducer.project(train);
        let mut mins = vec![f64::MAX; u];
        let mut maxs = vec![f64::MIN; u];
        for row in raw_scores.chunks(u) {
            for (k, &s) in row.iter().enumerate() {
                mins[k] = mins[k].min(s);
                maxs[k] = maxs[k].max(s);
            }
        }
        reducer.mins = mins;
        reducer.maxs = maxs;
        Ok(reducer)
    }

    fn project(&self, raw: &RawDataset) -> Vec<f64> {
        let u = self.components.nrows();
        let mut out = Vec::with_capacity(raw.len() * u);
        let mut centered = DVector::zeros(PIXELS);
        for i in 0..raw.len() {
            for (j, &px) in raw.image(i).iter().enumerate() {
                centered[j] = px as f64 / 255.0 - self.mean[j];
            }
            let scores = &self.components * &centered;
            out.extend(scores.iter());
        }
        out
    }

    pub fn transform(&self, raw: &RawDataset) -> Result<EncodedDataset> {
        let u = self.components.nrows();
        let scores = self.project(raw);
        let features = scores
            .chunks(u)
            .flat_map(|row| {
                row.iter().enumerate().map(|(k, &s)| {
                    let span = self.maxs[k] - self.mins[k];
                    if span <= 0.0 {
                        0.0
                    } else {
                        ((s - self.mins[k]) / span).clamp(0.0, 1.0)
                    }
                })
            })
            .collect();
        EncodedDataset::new(u, raw.num_classes(), features, raw.labels.clone())
    }
}

/// Deterministic shuffle then contiguous split into `k` near-equal shards
/// (sizes differ by at most one; the first `n % k` shards take the extra
/// sample). The shuffle uses xoshiro256++ seeded from `seed`, so shards are
/// identical across platforms.
pub fn shard(dataset: &EncodedDataset, k: usize, seed: u64) -> Result<Vec<EncodedDataset>> {
    let n = dataset.len();
    if k == 0 {
        return Err(Error::Config("participant count must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!(
            "cannot split {n} samples across {k} participants"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let base = n / k;
    let extra = n % k;
    let mut shards = Vec::with_capacity(k);
    let mut start = 0;
    for s in 0..k {
        let size = base + usize::from(s < extra);
        shards.push(dataset.gather(&indices[start..start + size]));
        start += size;
    }
    Ok(shards)
}

/// Binary cache of an encoded dataset. Layout, all little-endian:
/// `u32 num_features, u64 num_samples, u32 num_classes`, then row-major
/// `f64` features, then one `u8` label per sample.
pub fn save_encoded(path: &Path, data: &EncodedDataset) -> Result<()> {
    let mut out = Vec::with_capacity(16 + data.features.len() * 8 + data.len());
    out.extend_from_slice(&(data.num_features as u32).to_le_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    out.extend_from_slice(&(data.num_classes as u32).to_le_bytes());
    for f in &data.features {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out.extend_from_slice(&data.labels);
    fs::write(path, out)?;
    Ok(())
}

pub fn load_encoded(path: &Path) -> Result<EncodedDataset> {
    let data = fs::read(path)?;
    let header_err = |offset: usize, what: &str| Error::Format {
        offset: offset as u64,
        message: format!("cache truncated while reading {what}"),
    };
    let u = u32::from_le_bytes(
        data.get(0..4).and_then(|s| s.try_into().ok()).ok_or_else(|| header_err(0, "feature count"))?,
    ) as usize;
    let n = u64::from_le_bytes(
        data.get(4..12).and_then(|s| s.try_into().ok()).ok_or_else(|| header_err(4, "sample count"))?,
    ) as usize;
    let c = u32::from_le_bytes(
        data.get(12..16).and_then(|s| s.try_into().ok()).ok_or_else(|| header_err(12, "class count"))?,
    ) as usize;
    let expect = 16 + n * u * 8 + n;
    if data.len() != expect {
        return Err(Error::Format {
            offset: data.len().min(expect) as u64,
            message: format!("cache is {} bytes, expected {expect}", data.len()),
        });
    }
    let mut features = Vec::with_capacity(n * u);
    for chunk in data[16..16 + n * u * 8].chunks_exact(8) {
        features.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    EncodedDataset::new(u, c, features, data[16 + n * u * 8..].to_vec())
}

/// Standard MNIST file names resolved against a directory, allowing either
/// plain or gzipped copies.
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    pub fn locate(dir: &Path) -> Result<Self> {
        let find = |stem: &str| -> Result<PathBuf> {
            let plain = dir.join(stem);
            if plain.exists() {
                return Ok(plain);
            }
            let gz = dir.join(format!("{stem}.gz"));
            if gz.exists() {
                return Ok(gz);
            }
            Err(Error::Config(format!(
                "missing {stem}[.gz] under {}",
                dir.display()
            )))
        };
        Ok(Self {
            train_images: find("train-images-idx3-ubyte")?,
            train_labels: find("train-labels-idx1-ubyte")?,
            test_images: find("t10k-images-idx3-ubyte")?,
            test_labels: find("t10k-labels-idx1-ubyte")?,
        })
    }
}

#[cfg(test)]
pub(crate) fn synthetic_raw(labels: &[u8]) -> RawDataset {
    // Digit-dependent brightness pattern so digit classes stay separable.
    let mut images = Vec::with_capacity(labels.len() * PIXELS);
    for (i, &label) in labels.iter().enumerate() {
        for p in 0..PIXELS {
            let row = p / IMAGE_SIDE;
            let bright = (row * 10 / IMAGE_SIDE) as i32;
            let value = if bright == (label % 10) as i32 { 220 } else { 20 };
            images.push((value + (i as i32 % 7) - 3) as u8);
        }
    }
    RawDataset { images, labels: labels.to_vec(), num_classes: 10 }
}

#[cfg(test)]
pub(crate) fn write_idx_pair(
    dir: &Path,
    raw: &RawDataset,
    image_name: &str,
    label_name: &str,
) -> (PathBuf, PathBuf) {
    let mut img = Vec::new();
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(raw.len() as u32).to_be_bytes());
    img.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    img.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    img.extend_from_slice(&raw.images);
    let mut lbl = Vec::new();
    lbl.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(raw.len() as u32).to_be_bytes());
    lbl.extend_from_slice(&raw.labels);
    let ipath = dir.join(image_name);
    let lpath = dir.join(label_name);
    fs::write(&ipath, img).unwrap();
    fs::write(&lpath, lbl).unwrap();
    (ipath, lpath)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn idx_round_trip_via_synthetic_files() {
        let dir = tempfile::tempdir().unwrap();
        let raw = synthetic_raw(&[2, 5, 5, 2, 7, 1, 3]);
        let (ip, lp) = write_idx_pair(dir.path(), &raw, "imgs", "lbls");
        let loaded = load_idx(&ip, &lp).unwrap();
        assert_eq!(loaded.len(), 7);
        assert_eq!(loaded.label(4), 7);
        assert_eq!(loaded.image(1), raw.image(1));
    }

    #[test]
    fn idx_rejects_truncation_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let raw = synthetic_raw(&[1, 2, 3]);
        let (ip, lp) = write_idx_pair(dir.path(), &raw, "imgs", "lbls");

        let mut img = fs::read(&ip).unwrap();
        img.truncate(img.len() - 10);
        let trunc = dir.path().join("trunc");
        fs::write(&trunc, img).unwrap();
        assert!(matches!(load_idx(&trunc, &lp), Err(Error::Format { .. })));

        let other = synthetic_raw(&[1, 2]);
        let (_, lp2) = write_idx_pair(dir.path(), &other, "imgs2", "lbls2");
        assert!(matches!(load_idx(&ip, &lp2), Err(Error::Format { offset: 4, .. })));

        let bad_magic = dir.path().join("badmagic");
        let mut img = fs::read(&ip).unwrap();
        img[3] = 0x42;
        fs::write(&bad_magic, img).unwrap();
        assert!(matches!(load_idx(&bad_magic, &lp), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn gzip_files_load_transparently() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let raw = synthetic_raw(&[4, 4, 9]);
        let (ip, lp) = write_idx_pair(dir.path(), &raw, "imgs", "lbls");
        for path in [&ip, &lp] {
            let plain = fs::read(path).unwrap();
            let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
            enc.write_all(&plain).unwrap();
            fs::write(path.with_extension("gz"), enc.finish().unwrap()).unwrap();
        }
        let loaded = load_idx(&ip.with_extension("gz"), &lp.with_extension("gz")).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.label(2), 9);
    }

    #[test]
    fn select_digits_filters_and_remaps() {
        let raw = synthetic_raw(&[2, 5, 0, 5, 2, 9, 5]);
        let subset = select_digits(&raw, &[5, 2]).unwrap();
        assert_eq!(subset.len(), 5);
        // ascending digit order: 2 -> class 0, 5 -> class 1
        assert_eq!(subset.labels, vec![0, 1, 1, 0, 1]);
        assert_eq!(subset.num_classes(), 2);

        assert!(select_digits(&raw, &[5]).is_err());
        assert!(select_digits(&raw, &[5, 5]).is_err());
        assert!(select_digits(&raw, &[6, 8]).is_err()); // no matches
    }

    #[test]
    fn avgpool_grids_and_ranges() {
        let raw = synthetic_raw(&[2, 5]);
        for u in [4, 8, 16] {
            let enc = reduce_features(&raw, u, FeatureMethod::Avgpool).unwrap();
            assert_eq!(enc.num_features(), u);
            assert!(enc.features.iter().all(|&f| (0.0..=1.0).contains(&f)));
        }
        assert!(reduce_features(&raw, 5, FeatureMethod::Avgpool).is_err());
    }

    #[test]
    fn avgpool_extremes() {
        let zeros = RawDataset { images: vec![0; PIXELS], labels: vec![0], num_classes: 10 };
        let enc = reduce_features(&zeros, 8, FeatureMethod::Avgpool).unwrap();
        assert!(enc.feature_row(0).iter().all(|&f| f == 0.0));

        let ones = RawDataset { images: vec![255; PIXELS], labels: vec![0], num_classes: 10 };
        let enc = reduce_features(&ones, 8, FeatureMethod::Avgpool).unwrap();
        assert!(enc.feature_row(0).iter().all(|&f| f == 1.0));
    }

    #[test]
    fn avgpool_matches_hand_computed_block_means() {
        // Gradient image: pixel value = row index * 9.
        let mut images = vec![0u8; PIXELS];
        for r in 0..IMAGE_SIDE {
            for c in 0..IMAGE_SIDE {
                images[r * IMAGE_SIDE + c] = (r * 9) as u8;
            }
        }
        let raw = RawDataset { images, labels: vec![0], num_classes: 10 };
        let enc = reduce_features(&raw, 8, FeatureMethod::Avgpool).unwrap();
        // U=8: 2x4 grid of 14x7 blocks. Top blocks average rows 0..14,
        // bottom blocks rows 14..28; value is independent of column.
        let top: f64 = (0..14).map(|r| (r * 9) as f64).sum::<f64>() / 14.0 / 255.0;
        let bottom: f64 = (14..28).map(|r| (r * 9) as f64).sum::<f64>() / 14.0 / 255.0;
        for c in 0..4 {
            assert!((enc.feature_row(0)[c] - top).abs() < 1e-12);
            assert!((enc.feature_row(0)[4 + c] - bottom).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_fit_transform_stays_in_range() {
        let raw = synthetic_raw(&[2, 5, 2, 5, 2, 5, 2, 5, 3, 3]);
        let train = select_digits(&raw, &[2, 5]).unwrap();
        let reducer = PcaReducer::fit(&train, 4).unwrap();
        let enc = reducer.transform(&train).unwrap();
        assert_eq!(enc.num_features(), 4);
        assert!(enc.features.iter().all(|&f| (0.0..=1.0).contains(&f)));
        // Transforming an unseen split clamps into range too.
        let other = select_digits(&synthetic_raw(&[5, 2, 5]), &[2, 5]).unwrap();
        let enc = reducer.transform(&other).unwrap();
        assert!(enc.features.iter().all(|&f| (0.0..=1.0).contains(&f)));
    }

    #[test]
    fn shard_sizes_and_determinism() {
        let raw = synthetic_raw(&(0..13).map(|i| [2u8, 5][i % 2]).collect::<Vec<_>>());
        let enc = reduce_features(&select_digits(&raw, &[2, 5]).unwrap(), 4, FeatureMethod::Avgpool)
            .unwrap();
        let shards = shard(&enc, 6, 42).unwrap();
        let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2, 2]);

        let again = shard(&enc, 6, 42).unwrap();
        assert_eq!(shards.len(), again.len());
        for (a, b) in shards.iter().zip(&again) {
            assert_eq!(a, b);
        }

        let twelve = enc.take(12);
        let even = shard(&twelve, 6, 1).unwrap();
        assert!(even.iter().all(|s| s.len() == 2));

        assert!(shard(&enc, 0, 1).is_err());
        assert!(shard(&enc, 14, 1).is_err());
    }

    #[test]
    fn encoded_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raw = synthetic_raw(&[2, 5, 2]);
        let enc = reduce_features(&select_digits(&raw, &[2, 5]).unwrap(), 8, FeatureMethod::Avgpool)
            .unwrap();
        let path = dir.path().join("cache.bin");
        save_encoded(&path, &enc).unwrap();
        let back = load_encoded(&path).unwrap();
        assert_eq!(enc, back);
    }

    proptest! {
        #[test]
        fn shards_partition_the_dataset(seed in any::<u64>(), k in 1usize..7, n in 7usize..40) {
            let labels: Vec<u8> = (0..n).map(|i| [2u8, 5][i % 2]).collect();
            let raw = synthetic_raw(&labels);
            let enc = reduce_features(
                &select_digits(&raw, &[2, 5]).unwrap(), 4, FeatureMethod::Avgpool,
            ).unwrap();
            prop_assume!(k <= enc.len());
            let shards = shard(&enc, k, seed).unwrap();
            let total: usize = shards.iter().map(|s| s.len()).sum();
            prop_assert_eq!(total, enc.len());
            let max = shards.iter().map(|s| s.len()).max().unwrap();
            let min = shards.iter().map(|s| s.len()).min().unwrap();
            prop_assert!(max - min <= 1);

            // Multiset equality on rows: sort a stable fingerprint per row.
            let fingerprint = |d: &EncodedDataset| {
                let mut rows: Vec<String> = (0..d.len())
                    .map(|i| format!("{:?}|{}", d.feature_row(i), d.label(i)))
                    .collect();
                rows.sort();
                rows
            };
            let mut merged: Vec<String> = shards.iter().flat_map(|s| fingerprint(s)).collect();
            merged.sort();
            prop_assert_eq!(merged, fingerprint(&enc));
        }
    }
}
