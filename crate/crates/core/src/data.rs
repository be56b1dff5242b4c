//! Dataset loading, pixel permutation and train/validation splitting.
//!
//! Sequence files are CSV with a `label,v0,v1,...` header and one instance
//! per row. The label is an integer; the remaining `T * N_x` cells are the
//! features in time-major order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};

pub use crate::readout::one_hot;

/// Equal-length multivariate sequences with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    sequences: Vec<Matrix>,
    labels: Vec<usize>,
    n_classes: usize,
    /// Original label value of each class index.
    class_values: Vec<i64>,
}

impl Dataset {
    /// Validates shapes and labels. Class values default to `0..n_classes`.
    pub fn new(
        name: impl Into<String>,
        sequences: Vec<Matrix>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let class_values = (0..n_classes as i64).collect();
        Self::with_class_values(name, sequences, labels, class_values)
    }

    pub fn with_class_values(
        name: impl Into<String>,
        sequences: Vec<Matrix>,
        labels: Vec<usize>,
        class_values: Vec<i64>,
    ) -> Result<Self> {
        let name = name.into();
        if sequences.is_empty() {
            return Err(Error::Format {
                path: name.into(),
                row: 0,
                msg: "dataset has no sequences".into(),
            });
        }
        if sequences.len() != labels.len() {
            return Err(Error::Label(format!(
                "{}: {} sequences but {} labels",
                name,
                sequences.len(),
                labels.len()
            )));
        }
        let (t, n_x) = (sequences[0].rows(), sequences[0].cols());
        if let Some(i) = sequences
            .iter()
            .position(|s| s.rows() != t || s.cols() != n_x)
        {
            return Err(Error::Format {
                path: name.into(),
                row: i,
                msg: format!(
                    "sequence is {}x{}, expected {t}x{n_x}",
                    sequences[i].rows(),
                    sequences[i].cols()
                ),
            });
        }
        let n_classes = class_values.len();
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Label(format!(
                "{name}: label index {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            name,
            sequences,
            labels,
            n_classes,
            class_values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Sequence length `T`.
    pub fn seq_len(&self) -> usize {
        self.sequences[0].rows()
    }

    /// Features per time step `N_x`.
    pub fn n_features(&self) -> usize {
        self.sequences[0].cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn sequences(&self) -> &[Matrix] {
        &self.sequences
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_values(&self) -> &[i64] {
        &self.class_values
    }

    /// Items per class index.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// The items at `indices`, in that order. Class indexing is kept.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Split(format!(
                "index {bad} out of range for {} items",
                self.len()
            )));
        }
        Self::with_class_values(
            self.name.clone(),
            indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_values.clone(),
        )
    }

    /// `n` items drawn without replacement, kept in original order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::Split(format!(
                "cannot draw {n} items from {}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(RngStream::new(seed, "subsample").rng_mut());
        idx.truncate(n);
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// `train test T N_x classes`
    pub fn shape_line(train: &Dataset, test: &Dataset) -> String {
        format!(
            "{} {} {} {} {}",
            train.len(),
            test.len(),
            train.seq_len(),
            train.n_features(),
            train.n_classes()
        )
    }
}

struct RawRows {
    labels: Vec<i64>,
    sequences: Vec<Matrix>,
}

fn parse_label(cell: &str) -> Option<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = cell.parse().ok()?;
    (f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

fn read_rows(path: &Path, n_features: usize) -> Result<RawRows> {
    if n_features == 0 {
        return Err(Error::Param("n_features must be at least 1".into()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fmt = |row: usize, msg: String| Error::Format {
        path: path.into(),
        row,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        None => {
            return Err(fmt(
                1,
                "empty file, expected a `label,v0,...` header".into(),
            ))
        }
        Some(r) => r.map_err(|e| fmt(1, e.to_string()))?,
    };
    if header.get(0) != Some("label") {
        return Err(fmt(1, "header must start with `label`".into()));
    }
    let width = header.len();
    let cells = width - 1;
    if cells == 0 || cells % n_features != 0 {
        return Err(fmt(
            1,
            format!("{cells} value columns is not a multiple of {n_features} features"),
        ));
    }
    let t = cells / n_features;

    let mut labels = Vec::new();
    let mut sequences = Vec::new();
    for (k, rec) in records.enumerate() {
        let rec = rec.map_err(|e| fmt(k + 2, e.to_string()))?;
        let row = rec.position().map_or(k + 2, |p| p.line() as usize);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width {
            return Err(fmt(row, format!("{} cells, expected {width}", rec.len())));
        }
        let label_cell = rec.get(0).unwrap_or("");
        let label = parse_label(label_cell).ok_or_else(|| Error::Parse {
            path: path.into(),
            row,
            col: 1,
            msg: format!("label `{label_cell}` is not an integer"),
        })?;
        let mut values = Vec::with_capacity(cells);
        for (c, cell) in rec.iter().enumerate().skip(1) {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.into(),
                    row,
                    col: c + 1,
                    msg: format!("`{cell}` is not a finite number"),
                })?;
            values.push(v);
        }
        labels.push(label);
        sequences.push(Matrix::from_vec(t, n_features, values)?);
    }
    if sequences.is_empty() {
        return Err(fmt(2, "no data rows".into()));
    }
    Ok(RawRows { labels, sequences })
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn index_labels(path: &Path, raw: &[i64], class_values: &[i64]) -> Result<Vec<usize>> {
    raw.iter()
        .map(|v| {
            class_values.binary_search(v).map_err(|_| {
                Error::Label(format!(
                    "{}: label {v} does not occur in the training set",
                    path.display()
                ))
            })
        })
        .collect()
}

/// Loads one sequence CSV. Labels are mapped to `0..n_classes` in order of
/// their original value.
pub fn load_sequences_csv(path: impl AsRef<Path>, n_features: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = read_rows(path, n_features)?;
    let class_values: Vec<i64> = {
        let mut v = raw.labels.clone();
        v.sort_unstable();
        v.dedup();
        v
    };
    let labels = index_labels(path, &raw.labels, &class_values)?;
    Dataset::with_class_values(dataset_name(path), raw.sequences, labels, class_values)
}

/// Loads a train/test pair; the test file is indexed with the training
/// classes and must share its shape.
pub fn load_csv_pair(
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    n_features: usize,
) -> Result<(Dataset, Dataset)> {
    let train = load_sequences_csv(&train_path, n_features)?;
    let test_path = test_path.as_ref();
    let raw = read_rows(test_path, n_features)?;
    if raw.sequences[0].rows() != train.seq_len() {
        return Err(Error::Format {
            path: test_path.into(),
            row: 2,
            msg: format!(
                "test length {} differs from training length {}",
                raw.sequences[0].rows(),
                train.seq_len()
            ),
        });
    }
    let labels = index_labels(test_path, &raw.labels, train.class_values())?;
    let test = Dataset::with_class_values(
        dataset_name(test_path),
        raw.sequences,
        labels,
        train.class_values().to_vec(),
    )?;
    Ok((train, test))
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Reads an MNIST image/label pair. Each image becomes a sequence of its
/// pixels in row-major order, scaled to `[0, 1]`.
pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let img = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let lab = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let fmt = |p: &Path, msg: String| Error::Format {
        path: p.into(),
        row: 0,
        msg,
    };

    match be_u32(&img, 0) {
        Some(IDX_IMAGES) => {}
        Some(m) => {
            return Err(fmt(
                ip,
                format!("bad magic {m:#010x}, expected {IDX_IMAGES:#010x}"),
            ))
        }
        None => return Err(fmt(ip, "truncated header".into())),
    }
    match be_u32(&lab, 0) {
        Some(IDX_LABELS) => {}
        Some(m) => {
            return Err(fmt(
                lp,
                format!("bad magic {m:#010x}, expected {IDX_LABELS:#010x}"),
            ))
        }
        None => return Err(fmt(lp, "truncated header".into())),
    }
    let header = |bytes: &[u8], p: &Path, at: usize| {
        be_u32(bytes, at)
            .map(|v| v as usize)
            .ok_or_else(|| fmt(p, "truncated header".into()))
    };
    let n = header(&img, ip, 4)?;
    let rows = header(&img, ip, 8)?;
    let cols = header(&img, ip, 12)?;
    let n_labels = header(&lab, lp, 4)?;
    if n != n_labels {
        return Err(fmt(lp, format!("{n_labels} labels for {n} images")));
    }
    let t = rows * cols;
    if t == 0 || n == 0 {
        return Err(fmt(ip, "no pixels".into()));
    }
    let pixels = &img[16..];
    if pixels.len() < n * t {
        return Err(fmt(
            ip,
            format!(
                "truncated: {} pixel bytes, expected {}",
                pixels.len(),
                n * t
            ),
        ));
    }
    let raw_labels = &lab[8..];
    if raw_labels.len() < n {
        return Err(fmt(
            lp,
            format!("truncated: {} labels, expected {n}", raw_labels.len()),
        ));
    }
    let sequences = pixels
        .chunks_exact(t)
        .take(n)
        .map(|px| Matrix::from_raw(t, 1, px.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect();
    let labels: Vec<usize> = raw_labels[..n].iter().map(|&b| b as usize).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Dataset::new(dataset_name(ip), sequences, labels, n_classes)
}

/// A fixed reordering of time steps: `out[t] = in[order[t]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn identity(len: usize) -> Self {
        Self {
            order: (0..len).collect(),
        }
    }

    pub fn from_seed(len: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(RngStream::new(seed, "pixel_permutation").rng_mut());
        Self { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut order = vec![0; self.order.len()];
        for (t, &s) in self.order.iter().enumerate() {
            order[s] = t;
        }
        Self { order }
    }

    pub fn apply(&self, seq: &Matrix) -> Result<Matrix> {
        if seq.rows() != self.order.len() {
            return Err(Error::Dimension(format!(
                "permutation of length {} applied to a sequence of length {}",
                self.order.len(),
                seq.rows()
            )));
        }
        let mut data = Vec::with_capacity(seq.rows() * seq.cols());
        for &s in &self.order {
            data.extend_from_slice(seq.row(s));
        }
        Matrix::from_vec(seq.rows(), seq.cols(), data)
    }
}

/// Applies one permutation to every sequence.
pub fn permute_with(ds: &Dataset, perm: &Permutation) -> Result<Dataset> {
    let sequences = ds
        .sequences
        .iter()
        .map(|s| perm.apply(s))
        .collect::<Result<_>>()?;
    Dataset::with_class_values(
        ds.name.clone(),
        sequences,
        ds.labels.clone(),
        ds.class_values.clone(),
    )
}

/// Permutes time steps with the permutation drawn from `seed`. Use the same
/// seed for training and test data.
pub fn permute_pixels(ds: &Dataset, seed: u64) -> Result<Dataset> {
    permute_with(ds, &Permutation::from_seed(ds.seq_len(), seed))
}

/// Validation share and how to draw it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Param(format!(
                "split fraction must be in (0, 1), got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// Per-class validation counts by largest remainder, then clamped so each
/// class keeps at least one item on both sides.
fn stratified_counts(counts: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let total = (n as f64 * fraction).round() as usize;
    let quotas: Vec<f64> = counts.iter().map(|&c| c as f64 * fraction).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = alloc.iter().sum();
    for &c in order.iter().take(total.saturating_sub(assigned)) {
        alloc[c] += 1;
    }
    for (a, &c) in alloc.iter_mut().zip(counts) {
        if c >= 2 {
            *a = (*a).clamp(1, c - 1);
        }
    }
    alloc
}

/// Train and validation indices, each sorted ascending.
pub fn split_indices(
    labels: &[usize],
    n_classes: usize,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let n = labels.len();
    let mut rng = RngStream::new(spec.seed, "split");
    let mut val = Vec::new();
    if spec.stratified {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &y) in labels.iter().enumerate() {
            by_class.entry(y).or_default().push(i);
        }
        let mut counts = vec![0; n_classes];
        for (&y, idx) in &by_class {
            if idx.len() < 2 {
                return Err(Error::Split(format!(
                    "class {y} has a single item and cannot be stratified"
                )));
            }
            counts[y] = idx.len();
        }
        let alloc = stratified_counts(&counts, spec.fraction);
        for (y, mut idx) in by_class {
            idx.shuffle(rng.rng_mut());
            val.extend_from_slice(&idx[..alloc[y]]);
        }
    } else {
        let k = (n as f64 * spec.fraction).round() as usize;
        if k == 0 || k >= n {
            return Err(Error::Split(format!(
                "fraction {} of {n} items leaves an empty side",
                spec.fraction
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng.rng_mut());
        val.extend_from_slice(&idx[..k]);
    }
    val.sort_unstable();
    let mut is_val = vec![false; n];
    val.iter().for_each(|&i| is_val[i] = true);
    let train = (0..n).filter(|&i| !is_val[i]).collect();
    Ok((train, val))
}

/// Splits off a validation set.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(ds.labels(), ds.n_classes(), spec)?;
    Ok((ds.subset(&train)?, ds.subset(&val)?))
}
