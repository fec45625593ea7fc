//! Hyperspectral sample matrices, their loaders, and stratified splits.
//!
//! A [`Dataset`] is an N×D row-major matrix of reflectance values (one row
//! per labeled pixel, one column per band) with a positive class id per row.
//! Label 0 marks unlabeled background and never enters a dataset.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<f64>,
    n_samples: usize,
    n_bands: usize,
    labels: Vec<u32>,
    class_ids: Vec<u32>,
    class_names: Vec<Option<String>>,
    // Row index in the dataset this one was carved out of.
    origin: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from row-major samples. Class ids are the distinct
    /// labels in ascending order.
    pub fn new(samples: Vec<f64>, n_bands: usize, labels: Vec<u32>) -> Result<Self> {
        if n_bands == 0 {
            return Err(Error::InvalidInput("dataset needs at least one band".into()));
        }
        if samples.len() != labels.len() * n_bands {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_bands,
                got: samples.len(),
            });
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at sample {}, band {}",
                pos / n_bands,
                pos % n_bands
            )));
        }
        if labels.contains(&0) {
            return Err(Error::InvalidInput(
                "label 0 is reserved for unlabeled pixels".into(),
            ));
        }
        let mut class_ids = labels.clone();
        class_ids.sort_unstable();
        class_ids.dedup();
        let n_samples = labels.len();
        Ok(Self {
            samples,
            n_samples,
            n_bands,
            class_names: vec![None; class_ids.len()],
            class_ids,
            labels,
            origin: (0..n_samples).collect(),
        })
    }

    /// Attaches display names, one per class id in ascending order.
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: self.class_ids.len(),
                got: names.len(),
            });
        }
        self.class_names = names.into_iter().map(Some).collect();
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_bands..(i + 1) * self.n_bands]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.n_bands)
    }

    pub fn value(&self, i: usize, band: usize) -> f64 {
        self.samples[i * self.n_bands + band]
    }

    pub fn band(&self, band: usize) -> Vec<f64> {
        self.rows().map(|r| r[band]).collect()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// All class ids of the scene, including any that have no rows in this
    /// particular subset.
    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn class_count(&self) -> usize {
        self.class_ids.len()
    }

    pub fn class_name(&self, class: u32) -> String {
        self.class_ids
            .iter()
            .position(|&c| c == class)
            .and_then(|p| self.class_names[p].clone())
            .unwrap_or_else(|| format!("class {class}"))
    }

    /// Row indices into the parent dataset this one was derived from.
    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    /// Sample count per class id, aligned with [`Dataset::class_ids`].
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_ids.len()];
        for &l in &self.labels {
            let p = self.class_position(l).expect("label outside class list");
            sizes[p] += 1;
        }
        sizes
    }

    pub fn class_position(&self, class: u32) -> Option<usize> {
        self.class_ids.binary_search(&class).ok()
    }

    /// Indices of this dataset's rows with the given label, ascending.
    pub fn indices_of(&self, class: u32) -> Vec<usize> {
        (0..self.n_samples)
            .filter(|&i| self.labels[i] == class)
            .collect()
    }

    /// Copies out the given rows, keeping the full class list. The subset's
    /// origin maps back to this dataset's origin.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut samples = Vec::with_capacity(indices.len() * self.n_bands);
        let mut labels = Vec::with_capacity(indices.len());
        let mut origin = Vec::with_capacity(indices.len());
        for &i in indices {
            samples.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            origin.push(self.origin[i]);
        }
        Dataset {
            samples,
            n_samples: indices.len(),
            n_bands: self.n_bands,
            labels,
            class_ids: self.class_ids.clone(),
            class_names: self.class_names.clone(),
            origin,
        }
    }

    /// Keeps only the given bands, in the given order.
    pub fn select_bands(&self, bands: &[usize]) -> Result<Dataset> {
        if bands.is_empty() {
            return Err(Error::InvalidInput("band subset is empty".into()));
        }
        if let Some(&b) = bands.iter().find(|&&b| b >= self.n_bands) {
            return Err(Error::InvalidInput(format!(
                "band {b} out of range for {} bands",
                self.n_bands
            )));
        }
        let mut samples = Vec::with_capacity(self.n_samples * bands.len());
        for r in self.rows() {
            samples.extend(bands.iter().map(|&b| r[b]));
        }
        Ok(Dataset {
            samples,
            n_bands: bands.len(),
            ..self.clone()
        })
    }

    /// Returns a copy whose origin is the identity, so it acts as a root
    /// dataset for later subsets.
    pub fn rebased(&self) -> Dataset {
        Dataset {
            origin: (0..self.n_samples).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: Dataset,
    /// Rows dropped because their label was 0.
    pub discarded: usize,
}

/// Reads `D` numeric columns followed by an integer label column. A single
/// header row is accepted when its first field is not numeric.
pub fn load_csv(path: impl AsRef<Path>) -> Result<CsvLoad> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut discarded = 0;
    let mut first = true;

    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if first {
            first = false;
            if record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                continue;
            }
        }
        if record.len() < 2 {
            return Err(parse_err(line, "need at least one band and a label".into()));
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_err(
                line,
                format!("expected {w} columns, found {}", record.len()),
            ));
        }
        let label_field = &record[w - 1];
        let label: u32 = label_field
            .parse()
            .map_err(|_| parse_err(line, format!("label {label_field:?} is not a non-negative integer")))?;
        let mut row = Vec::with_capacity(w - 1);
        for (col, field) in record.iter().take(w - 1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: {field:?} is not numeric", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: non-finite value", col + 1)));
            }
            row.push(v);
        }
        if label == 0 {
            discarded += 1;
            continue;
        }
        samples.extend(row);
        labels.push(label);
    }

    let Some(w) = width else {
        return Err(Error::EmptyFile(path.to_path_buf()));
    };
    if labels.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    if discarded > 0 {
        log::info!("{}: discarded {discarded} unlabeled row(s)", path.display());
    }
    Ok(CsvLoad {
        dataset: Dataset::new(samples, w - 1, labels)?,
        discarded,
    })
}

/// Writes the dataset in the format [`load_csv`] reads, with a header row.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dataset.n_bands()).map(|b| format!("b{b}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    let mut fields = Vec::with_capacity(dataset.n_bands() + 1);
    for (row, label) in dataset.rows().zip(dataset.labels()) {
        fields.clear();
        fields.extend(row.iter().map(|v| v.to_string()));
        fields.push(label.to_string());
        writer.write_record(&fields)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parsed `key=value` cube header.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeHeader {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    /// Label raster path, resolved against the header's directory.
    pub labels: PathBuf,
    pub class_names: Option<Vec<String>>,
}

impl CubeHeader {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut fields = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Header(format!("line {line:?} is not key=value")))?;
            fields.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
        let number = |key: &str| -> Result<usize> {
            let v = fields
                .get(key)
                .ok_or_else(|| Error::Header(format!("missing field `{key}`")))?;
            match v.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::Header(format!("field `{key}` must be a positive integer, got {v:?}"))),
            }
        };
        let labels = fields
            .get("labels")
            .ok_or_else(|| Error::Header("missing field `labels`".into()))?;
        let labels = path
            .parent()
            .map(|dir| dir.join(labels))
            .unwrap_or_else(|| PathBuf::from(labels));
        let class_names = fields
            .get("class_names")
            .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
        Ok(Self {
            rows: number("rows")?,
            cols: number("cols")?,
            bands: number("bands")?,
            labels,
            class_names,
        })
    }
}

/// Loads a band-interleaved-by-pixel little-endian `f32` cube together with
/// its `u16` label raster. Pixels with label 0 are dropped; the rest keep
/// row-major order.
pub fn load_raw_cube(data_path: impl AsRef<Path>, header_path: impl AsRef<Path>) -> Result<Dataset> {
    let data_path = data_path.as_ref();
    let header = CubeHeader::read(header_path)?;
    let pixels = header.rows * header.cols;

    let raw = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let expected = (pixels * header.bands * 4) as u64;
    if raw.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            what: format!("cube {}", data_path.display()),
            expected,
            actual: raw.len() as u64,
        });
    }
    let label_raw = fs::read(&header.labels).map_err(|e| Error::io(&header.labels, e))?;
    let expected = (pixels * 2) as u64;
    if label_raw.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            what: format!("label raster {}", header.labels.display()),
            expected,
            actual: label_raw.len() as u64,
        });
    }

    let pixel_bytes = header.bands * 4;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (px, label) in label_raw.chunks_exact(2).enumerate() {
        let label = u16::from_le_bytes([label[0], label[1]]);
        if label == 0 {
            continue;
        }
        let bytes = &raw[px * pixel_bytes..(px + 1) * pixel_bytes];
        samples.extend(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64),
        );
        labels.push(label as u32);
    }
    if labels.is_empty() {
        return Err(Error::EmptyFile(header.labels.clone()));
    }
    let dataset = Dataset::new(samples, header.bands, labels)?;
    match header.class_names {
        Some(names) if names.len() == dataset.class_count() => dataset.with_class_names(names),
        Some(names) => Err(Error::Header(format!(
            "{} class names for {} classes",
            names.len(),
            dataset.class_count()
        ))),
        None => Ok(dataset),
    }
}

/// Writes a cube and label raster in the layout [`load_raw_cube`] reads.
/// `values` is rows×cols×bands in pixel-major order.
pub fn write_raw_cube(
    dir: impl AsRef<Path>,
    stem: &str,
    (rows, cols, bands): (usize, usize, usize),
    values: &[f32],
    labels: &[u16],
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    if values.len() != rows * cols * bands || labels.len() != rows * cols {
        return Err(Error::InvalidInput("cube dimensions do not match buffers".into()));
    }
    let data = dir.join(format!("{stem}.bin"));
    let label_file = format!("{stem}_labels.bin");
    let header = dir.join(format!("{stem}.hdr"));
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&data, bytes).map_err(|e| Error::io(&data, e))?;
    let bytes: Vec<u8> = labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    let label_path = dir.join(&label_file);
    fs::write(&label_path, bytes).map_err(|e| Error::io(&label_path, e))?;
    let mut f = fs::File::create(&header).map_err(|e| Error::io(&header, e))?;
    writeln!(f, "rows={rows}\ncols={cols}\nbands={bands}\nlabels={label_file}")
        .map_err(|e| Error::io(&header, e))?;
    Ok((data, header))
}

/// Loads either format: paths ending in `.hdr` are cube headers whose data
/// file sits next to them with a `.bin` extension.
pub fn load_any(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "hdr") {
        load_raw_cube(path.with_extension("bin"), path)
    } else {
        load_csv(path).map(|l| l.dataset)
    }
}

/// Per-band min-max rescaling to `[0, 1]`. Constant bands become 0.
pub fn normalize(dataset: &Dataset) -> Dataset {
    let d = dataset.n_bands();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in dataset.rows() {
        for (b, &v) in row.iter().enumerate() {
            lo[b] = lo[b].min(v);
            hi[b] = hi[b].max(v);
        }
    }
    let mut out = dataset.clone();
    for row in out.samples.chunks_exact_mut(d) {
        for (b, v) in row.iter_mut().enumerate() {
            let range = hi[b] - lo[b];
            *v = if range > 0.0 { (*v - lo[b]) / range } else { 0.0 };
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Fraction of each class held out for testing.
    pub ratio: f64,
    pub seed: u64,
}

impl Split {
    pub fn train(&self, dataset: &Dataset) -> Dataset {
        dataset.subset(&self.train_indices)
    }

    pub fn test(&self, dataset: &Dataset) -> Dataset {
        dataset.subset(&self.test_indices)
    }
}

/// Training rows a class of `size` samples contributes at test fraction `ratio`.
pub fn train_count(size: usize, ratio: f64) -> usize {
    if size <= 1 {
        return size;
    }
    let n = ((1.0 - ratio) * size as f64).round() as usize;
    n.clamp(1, size - 1)
}

/// Per-class random split; see [`train_count`] for the sizes. Each class's
/// indices are sorted, then shuffled by one SplitMix64 stream seeded with
/// `seed`, classes visited in ascending id order.
pub fn stratified_split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("test ratio {ratio} outside (0, 1)")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &class in dataset.class_ids() {
        let mut idx = dataset.indices_of(class);
        if idx.is_empty() {
            continue;
        }
        if idx.len() == 1 {
            warn!("class {class} has a single sample; it goes to the training set");
        }
        rng.shuffle(&mut idx);
        let n_train = train_count(idx.len(), ratio);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train_indices: train,
        test_indices: test,
        ratio,
        seed,
    })
}
