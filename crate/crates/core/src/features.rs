//! Embedding datasets: ingestion, persistence, normalization and synthetic
//! generation.
//!
//! Binary feature file layout (little endian):
//!
//! ```text
//! "EMB1" | u32 version = 1 | u64 N | u64 d | u8 dtype | 7 zero bytes | N*d values, row-major
//! ```
//!
//! dtype 1 is binary32. dtype 2 (binary64) is written only when some value is
//! not exactly representable in binary32, so saving and loading is lossless.
//!
//! Label file layout: `"LBL1" | u32 version = 1 | u64 N | N x u32 class id`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{check_index, Error, Result};
use crate::kernels::sq_euclidean;
use crate::rng::seeded;

const FEATURE_MAGIC: &[u8; 4] = b"EMB1";
const LABEL_MAGIC: &[u8; 4] = b"LBL1";
const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;
const DTYPE_F64: u8 = 2;
const FEATURE_HEADER_LEN: usize = 32;
const LABEL_HEADER_LEN: usize = 16;

/// An `N x d` matrix of embeddings with optional dense class labels.
///
/// Immutable after construction; every transformation returns a new store.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    n_samples: usize,
    dim: usize,
    values: Vec<f64>,
    labels: Option<Labels>,
    normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Labels {
    ids: Vec<u32>,
    n_classes: usize,
    /// Original id of each dense class, present only when ids were remapped.
    original: Option<Vec<u32>>,
}

impl FeatureStore {
    pub fn new(n_samples: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("feature dimension must be positive".into()));
        }
        if values.len() != n_samples * dim {
            return Err(Error::Data(format!(
                "expected {} values for {n_samples}x{dim}, got {}",
                n_samples * dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(FeatureStore {
            n_samples,
            dim,
            values,
            labels: None,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Data(format!("row {i} has a different length")));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    /// Attaches labels, remapping them to dense ids `0..C` when the observed
    /// ids are not already exactly `0..C`.
    pub fn with_labels(self, ids: Vec<u32>) -> Result<Self> {
        let distinct: BTreeMap<u32, u32> = ids
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(dense, orig)| (orig, dense as u32))
            .collect();
        let dense = distinct.iter().all(|(orig, dense)| orig == dense);
        if dense {
            let n_classes = distinct.len();
            return self.attach(Labels {
                ids,
                n_classes,
                original: None,
            });
        }
        let original: Vec<u32> = distinct.keys().copied().collect();
        let remapped = ids.iter().map(|id| distinct[id]).collect();
        self.attach(Labels {
            ids: remapped,
            n_classes: original.len(),
            original: Some(original),
        })
    }

    /// Attaches labels that are already dense ids below `n_classes`.
    pub fn with_class_ids(self, ids: Vec<u32>, n_classes: usize) -> Result<Self> {
        if let Some(bad) = ids.iter().find(|&&c| c as usize >= n_classes) {
            return Err(Error::Data(format!(
                "class id {bad} not below class count {n_classes}"
            )));
        }
        self.attach(Labels {
            ids,
            n_classes,
            original: None,
        })
    }

    fn attach(mut self, labels: Labels) -> Result<Self> {
        if labels.ids.len() != self.n_samples {
            return Err(Error::Data(format!(
                "{} labels for {} samples",
                labels.ids.len(),
                self.n_samples
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_ref().map(|l| l.ids.as_slice())
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.n_classes)
    }

    /// Original class id per dense id, when loading had to remap sparse ids.
    pub fn label_map(&self) -> Option<&[u32]> {
        self.labels.as_ref().and_then(|l| l.original.as_deref())
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn require_labels(&self) -> Result<&[u32]> {
        self.labels()
            .ok_or_else(|| Error::Data("labels are required but absent".into()))
    }

    /// Copy of the store with labels stripped.
    pub fn without_labels(&self) -> FeatureStore {
        FeatureStore {
            labels: None,
            ..self.clone()
        }
    }

    /// Rows `indices` in the given order, labels carried along.
    pub fn subset(&self, indices: &[usize]) -> Result<FeatureStore> {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            check_index(i, self.n_samples)?;
            values.extend_from_slice(self.row(i));
        }
        let labels = self.labels.as_ref().map(|l| Labels {
            ids: indices.iter().map(|&i| l.ids[i]).collect(),
            n_classes: l.n_classes,
            original: l.original.clone(),
        });
        Ok(FeatureStore {
            n_samples: indices.len(),
            dim: self.dim,
            values,
            labels,
            normalized: self.normalized,
        })
    }

    #[inline]
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_euclidean(self.row(i), self.row(j))
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.sq_dist(i, j).sqrt()
    }
}

/// On-disk encoding accepted by [`load_features`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Binary,
    Csv,
}

impl std::str::FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" => Ok(FeatureFormat::Binary),
            "csv" => Ok(FeatureFormat::Csv),
            other => Err(Error::Config(format!("unknown feature format `{other}`"))),
        }
    }
}

impl FeatureFormat {
    /// Guesses the format from the file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> FeatureFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FeatureFormat::Csv,
            _ => FeatureFormat::Binary,
        }
    }
}

pub fn load_features(
    path: &Path,
    format: FeatureFormat,
    label_column: Option<usize>,
) -> Result<FeatureStore> {
    match format {
        FeatureFormat::Binary => {
            if label_column.is_some() {
                return Err(Error::Config(
                    "a label column only applies to csv input".into(),
                ));
            }
            decode_features(&fs::read(path)?)
        }
        FeatureFormat::Csv => parse_csv(&fs::read_to_string(path)?, label_column),
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureStore> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(Error::Format("feature file shorter than its header".into()));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::Format("bad magic, expected EMB1".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let dtype = bytes[24];
    if bytes[25..32].iter().any(|&b| b != 0) {
        return Err(Error::Format("non-zero header padding".into()));
    }
    let width = match dtype {
        DTYPE_F32 => 4,
        DTYPE_F64 => 8,
        other => return Err(Error::Format(format!("unknown dtype code {other}"))),
    };
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(width))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    let body = &bytes[FEATURE_HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::Format(format!(
            "header declares {n}x{d} but body holds {} bytes",
            body.len()
        )));
    }
    let values = match dtype {
        DTYPE_F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        _ => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    FeatureStore::new(n, d, values)
}

pub fn encode_features(store: &FeatureStore) -> Vec<u8> {
    let lossless_f32 = store.values.iter().all(|&v| (v as f32) as f64 == v);
    let (dtype, width) = if lossless_f32 {
        (DTYPE_F32, 4)
    } else {
        (DTYPE_F64, 8)
    };
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + store.values.len() * width);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.n_samples as u64).to_le_bytes());
    out.extend_from_slice(&(store.dim as u64).to_le_bytes());
    out.push(dtype);
    out.extend_from_slice(&[0u8; 7]);
    for &v in &store.values {
        if lossless_f32 {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        } else {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_features(store: &FeatureStore, path: &Path) -> Result<()> {
    write_atomic(path, &encode_features(store))
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    if bytes.len() < LABEL_HEADER_LEN {
        return Err(Error::Format("label file shorter than its header".into()));
    }
    if &bytes[0..4] != LABEL_MAGIC {
        return Err(Error::Format("bad magic, expected LBL1".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[LABEL_HEADER_LEN..];
    if Some(body.len()) != n.checked_mul(4) {
        return Err(Error::Format(format!(
            "header declares {n} labels but body holds {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_labels(labels: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(LABEL_HEADER_LEN + 4 * labels.len());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    for &l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn load_labels(path: &Path) -> Result<Vec<u32>> {
    decode_labels(&fs::read(path)?)
}

pub fn save_labels(labels: &[u32], path: &Path) -> Result<()> {
    write_atomic(path, &encode_labels(labels))
}

/// Writes `dense_id,original_id` rows for a remapped label set.
pub fn save_label_map(map: &[u32], path: &Path) -> Result<()> {
    let mut text = String::from("dense_id,original_id\n");
    for (dense, orig) in map.iter().enumerate() {
        text.push_str(&format!("{dense},{orig}\n"));
    }
    write_atomic(path, text.as_bytes())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Parses comma-separated rows. A first line that does not parse as numbers
/// is a header; a header column named `label` supplies labels when no label
/// column is given explicitly.
pub fn parse_csv(text: &str, label_column: Option<usize>) -> Result<FeatureStore> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let mut label_column = label_column;
    if let Some((_, first)) = lines.peek() {
        let fields: Vec<&str> = first.split(',').map(str::trim).collect();
        if fields.iter().any(|f| f.parse::<f64>().is_err()) {
            if label_column.is_none() {
                label_column = fields.iter().position(|f| f.eq_ignore_ascii_case("label"));
            }
            lines.next();
        }
    }

    let mut arity = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match arity {
            None => arity = Some(fields.len()),
            Some(a) if a != fields.len() => {
                return Err(Error::Data(format!(
                    "line {} has {} fields, expected {a}",
                    lineno + 1,
                    fields.len()
                )))
            }
            _ => {}
        }
        if let Some(c) = label_column {
            if c >= fields.len() {
                return Err(Error::Config(format!(
                    "label column {c} out of range for {} fields",
                    fields.len()
                )));
            }
        }
        for (col, field) in fields.iter().enumerate() {
            if Some(col) == label_column {
                let id = parse_label(field).ok_or_else(|| {
                    Error::Data(format!("bad label `{field}` on line {}", lineno + 1))
                })?;
                labels.push(id);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("bad number `{field}` on line {}", lineno + 1))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite value on line {}",
                        lineno + 1
                    )));
                }
                values.push(v);
            }
        }
        n += 1;
    }
    let arity = arity.ok_or_else(|| Error::Data("csv input has no rows".into()))?;
    let dim = arity - usize::from(label_column.is_some());
    let store = FeatureStore::new(n, dim, values)?;
    if label_column.is_some() {
        store.with_labels(labels)
    } else {
        Ok(store)
    }
}

fn parse_label(field: &str) -> Option<u32> {
    field.parse::<u32>().ok().or_else(|| {
        let v: f64 = field.parse().ok()?;
        (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as u32)
    })
}

/// Divides every row by its Euclidean norm.
pub fn normalize_rows(store: &FeatureStore) -> Result<FeatureStore> {
    let mut values = Vec::with_capacity(store.values.len());
    for (i, row) in store.rows().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Data(format!("row {i} has zero norm")));
        }
        values.extend(row.iter().map(|v| v / norm));
    }
    Ok(FeatureStore {
        values,
        normalized: true,
        ..store.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    pub stddev: f64,
    pub weight: f64,
}

/// Isotropic Gaussian mixture; samples are labeled with their component.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub components: Vec<MixtureComponent>,
    pub n_samples: usize,
    pub seed: u64,
}

impl MixtureSpec {
    fn validate(&self) -> Result<usize> {
        if self.n_samples == 0 {
            return Err(Error::Config("mixture needs at least one sample".into()));
        }
        let first = self
            .components
            .first()
            .ok_or_else(|| Error::Config("mixture has no components".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Config("component means must be non-empty".into()));
        }
        for (c, comp) in self.components.iter().enumerate() {
            if comp.mean.len() != dim {
                return Err(Error::Config(format!("component {c} has a different dimension")));
            }
            if !(comp.stddev > 0.0 && comp.stddev.is_finite()) {
                return Err(Error::Config(format!("component {c} stddev must be positive")));
            }
            if !(comp.weight >= 0.0) {
                return Err(Error::Config(format!("component {c} weight is negative")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("weights sum to {total}, not 1")));
        }
        Ok(dim)
    }
}

pub fn generate_mixture(spec: &MixtureSpec) -> Result<FeatureStore> {
    let dim = spec.validate()?;
    let mut rng = seeded(spec.seed);
    let mut cumulative = Vec::with_capacity(spec.components.len());
    let mut acc = 0.0;
    for c in &spec.components {
        acc += c.weight;
        cumulative.push(acc);
    }
    let last = spec.components.len() - 1;
    let mut values = Vec::with_capacity(spec.n_samples * dim);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let u: f64 = rng.random();
        let c = cumulative.iter().position(|&w| u < w).unwrap_or(last);
        let comp = &spec.components[c];
        for &m in &comp.mean {
            let z: f64 = rng.sample(StandardNormal);
            values.push(m + comp.stddev * z);
        }
        labels.push(c as u32);
    }
    FeatureStore::new(spec.n_samples, dim, values)?.with_class_ids(labels, spec.components.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceSpec {
    pub rho: f64,
    pub seed: u64,
}

/// Per-class sizes of the exponentially decaying long tail:
/// `round(n_max * rho^(c / (C - 1)))`.
pub fn longtail_counts(n_max: usize, n_classes: usize, rho: f64) -> Vec<usize> {
    (0..n_classes)
        .map(|c| {
            let exponent = c as f64 / (n_classes - 1) as f64;
            (n_max as f64 * rho.powf(exponent)).round() as usize
        })
        .collect()
}

/// Subsamples a roughly balanced labeled store into a long-tailed one.
pub fn make_longtail(store: &FeatureStore, spec: &ImbalanceSpec) -> Result<FeatureStore> {
    if !(spec.rho > 0.0 && spec.rho <= 1.0) {
        return Err(Error::Config(format!("rho {} outside (0, 1]", spec.rho)));
    }
    let labels = store.require_labels()?;
    let n_classes = store.n_classes().unwrap_or(0);
    if n_classes < 2 {
        return Err(Error::Config("long-tail generation needs at least 2 classes".into()));
    }
    let mut members = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c as usize].push(i);
    }
    let smallest = members.iter().map(Vec::len).min().unwrap_or(0);
    let largest = members.iter().map(Vec::len).max().unwrap_or(0);
    if smallest == 0 || largest > 2 * smallest {
        return Err(Error::Data(format!(
            "classes are not roughly balanced (sizes {smallest}..{largest})"
        )));
    }
    let counts = longtail_counts(smallest, n_classes, spec.rho);
    let mut rng = seeded(spec.seed);
    let mut keep = Vec::new();
    for (class, want) in members.iter().zip(&counts) {
        let mut picked: Vec<usize> = index::sample(&mut rng, class.len(), *want)
            .into_iter()
            .map(|k| class[k])
            .collect();
        picked.sort_unstable();
        keep.extend(picked);
    }
    keep.sort_unstable();
    store.subset(&keep)
}
