//! Multi-view dataset loading, missing-view masks, and baseline imputation.
//!
//! # On-disk format
//!
//! A dataset is a directory holding a `manifest.json` plus one headerless CSV
//! per view and a label file:
//!
//! ```text
//! manifest.json     {"name", "views", "samples", "dims", "classes",
//!                    "view_files", "labels_file", "image_shapes"?}
//! view_<v>.csv      N rows, d_v comma-separated decimal columns
//! labels.csv        N integers in 0..classes
//! ```
//!
//! Features are min-max scaled to `[0, 1]` per column at load time; a
//! constant column maps to 0. Bounded inputs keep the sigmoid-valued
//! generators and the discriminators on the same scale as their targets.
//!
//! A mask file is JSON: `{"ratio", "seed", "paired_idx", "unpaired": {idx: view}}`.
//! Masks regenerate bit-identically from `(ratio, seed, N, V)`; see [`make_partial_split`]
//! for the exact draw order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// A fully observed multi-view dataset: `V` per-view feature matrices over
/// the same `N` samples, plus ground-truth labels used only for evaluation.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    pub name: String,
    /// One `N x d_v` matrix per view.
    pub views: Vec<Array2<f64>>,
    /// Ground-truth class per sample, values in `0..k`.
    pub labels: Vec<usize>,
    /// Number of classes.
    pub k: usize,
    /// Optional `(height, width)` per view for sample-grid rendering.
    pub image_shapes: Vec<Option<(usize, usize)>>,
}

impl MultiViewDataset {
    /// Validates shape and label invariants: every view has `N` rows, labels
    /// cover `0..k` with no empty class.
    pub fn new(
        name: impl Into<String>,
        views: Vec<Array2<f64>>,
        labels: Vec<usize>,
        k: usize,
        image_shapes: Option<Vec<Option<(usize, usize)>>>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::TooFewViews { required: 1, got: 0 });
        }
        let n = views[0].nrows();
        for (v, m) in views.iter().enumerate() {
            if m.nrows() != n {
                return Err(Error::ViewRowMismatch {
                    view: v,
                    expected: n,
                    got: m.nrows(),
                });
            }
        }
        if labels.len() != n {
            return Err(Error::LabelCountMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidConfig("classes must be >= 1".into()));
        }
        let mut counts = vec![0usize; k];
        for (row, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: y as i64,
                    classes: k,
                });
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(c));
        }
        let image_shapes = match image_shapes {
            Some(s) => {
                if s.len() != views.len() {
                    return Err(Error::InvalidConfig(
                        "image_shapes length must equal view count".into(),
                    ));
                }
                s
            }
            None => vec![None; views.len()],
        };
        for (v, shape) in image_shapes.iter().enumerate() {
            if let Some((h, w)) = shape {
                if h * w != views[v].ncols() {
                    return Err(Error::InvalidConfig(format!(
                        "view {v}: image shape {h}x{w} does not match {} columns",
                        views[v].ncols()
                    )));
                }
            }
        }
        Ok(MultiViewDataset {
            name: name.into(),
            views,
            labels,
            k,
            image_shapes,
        })
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn num_samples(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|m| m.ncols()).collect()
    }
}

/// Which samples are paired (all views observed) vs. unpaired (exactly one
/// retained view). Pure function of `(ratio, seed, N, V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSplit {
    pub impartial_ratio: f64,
    pub seed: u64,
    /// Paired sample indices, ascending.
    pub paired_idx: Vec<usize>,
    /// Unpaired sample index -> its single retained view.
    pub unpaired: BTreeMap<usize, usize>,
}

impl PartialSplit {
    pub fn num_samples(&self) -> usize {
        self.paired_idx.len() + self.unpaired.len()
    }

    /// Is `(sample, view)` observed under this split?
    pub fn observes(&self, sample: usize, view: usize) -> bool {
        match self.unpaired.get(&sample) {
            Some(&retained) => retained == view,
            None => true,
        }
    }

    /// Ascending indices of samples that observe `view`.
    pub fn observed_rows(&self, view: usize) -> Vec<usize> {
        (0..self.num_samples())
            .filter(|&i| self.observes(i, view))
            .collect()
    }

    /// Total missing `(sample, view)` entries: one per unpaired sample per
    /// non-retained view.
    pub fn missing_count(&self, views: usize) -> usize {
        self.unpaired.len() * views.saturating_sub(1)
    }
}

impl PartialSplit {
    pub fn to_json(&self) -> Vec<u8> {
        let file = MaskFile {
            ratio: self.impartial_ratio,
            seed: self.seed,
            paired_idx: self.paired_idx.clone(),
            unpaired: self.unpaired.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file).expect("mask serialization");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_mask(&bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct MaskFile {
    ratio: f64,
    seed: u64,
    paired_idx: Vec<usize>,
    unpaired: BTreeMap<usize, usize>,
}

/// Parse and validate a mask file from raw bytes.
pub fn parse_mask(bytes: &[u8]) -> Result<PartialSplit> {
    let file: MaskFile = serde_json::from_slice(bytes)?;
    if !(0.0..=1.0).contains(&file.ratio) {
        return Err(Error::RatioOutOfRange(file.ratio));
    }
    let split = PartialSplit {
        impartial_ratio: file.ratio,
        seed: file.seed,
        paired_idx: file.paired_idx,
        unpaired: file.unpaired,
    };
    // paired_idx and unpaired keys must partition 0..N.
    let n = split.num_samples();
    let mut seen = vec![false; n];
    for &i in split.paired_idx.iter().chain(split.unpaired.keys()) {
        if i >= n || seen[i] {
            return Err(Error::Invalid(format!(
                "mask does not partition 0..{n}: index {i} repeated or out of range"
            )));
        }
        seen[i] = true;
    }
    Ok(split)
}

/// Draw a reproducible paired/unpaired split.
///
/// `round(ratio * N)` samples (round half up) become paired, chosen by a
/// Fisher-Yates shuffle of all indices. Each remaining sample retains
/// exactly one view; retained views are balanced so every view is kept by
/// `floor(U/V)` or `ceil(U/V)` unpaired samples, with the `U mod V` views
/// receiving the extra slot picked by the same seeded stream. Draw order:
/// index shuffle, then extra-view shuffle, then slot shuffle — all from
/// `SeededRng::new(seed)` (see [`crate::rng`] for the primitive draws).
pub fn make_partial_split(
    dataset: &MultiViewDataset,
    ratio: f64,
    seed: u64,
) -> Result<PartialSplit> {
    if !(0.0..=1.0).contains(&ratio) || ratio.is_nan() {
        return Err(Error::RatioOutOfRange(ratio));
    }
    let v = dataset.num_views();
    if v < 2 {
        return Err(Error::TooFewViews { required: 2, got: v });
    }
    let n = dataset.num_samples();
    let paired_count = ((ratio * n as f64) + 0.5).floor() as usize;
    let paired_count = paired_count.min(n);

    let mut rng = SeededRng::new(seed);
    let perm = rng.permutation(n);
    let mut paired_idx: Vec<usize> = perm[..paired_count].to_vec();
    paired_idx.sort_unstable();
    let mut rest: Vec<usize> = perm[paired_count..].to_vec();
    rest.sort_unstable();

    let unpaired_count = n - paired_count;
    let base = unpaired_count / v;
    let extra = unpaired_count % v;
    let view_order = rng.permutation(v);
    let mut counts = vec![base; v];
    for &view in view_order.iter().take(extra) {
        counts[view] += 1;
    }
    let mut slots: Vec<usize> = (0..v).flat_map(|view| vec![view; counts[view]]).collect();
    rng.shuffle(&mut slots);

    let unpaired: BTreeMap<usize, usize> =
        rest.into_iter().zip(slots.into_iter()).collect();

    Ok(PartialSplit {
        impartial_ratio: ratio,
        seed,
        paired_idx,
        unpaired,
    })
}

/// Replace every missing `(sample, view)` row with the per-column mean of
/// that view's observed rows. Observed rows pass through unchanged.
pub fn mean_impute(dataset: &MultiViewDataset, split: &PartialSplit) -> Result<MultiViewDataset> {
    let mut views = dataset.views.clone();
    for (v, view) in views.iter_mut().enumerate() {
        let observed = split.observed_rows(v);
        if observed.is_empty() {
            return Err(Error::UnobservedView(v));
        }
        let mut mean = Array1::<f64>::zeros(view.ncols());
        for &i in &observed {
            mean += &view.row(i);
        }
        mean /= observed.len() as f64;
        for i in 0..view.nrows() {
            if !split.observes(i, v) {
                view.row_mut(i).assign(&mean);
            }
        }
    }
    MultiViewDataset::new(
        dataset.name.clone(),
        views,
        dataset.labels.clone(),
        dataset.k,
        Some(dataset.image_shapes.clone()),
    )
}

// ---------------------------------------------------------------------------
// Manifest and CSV parsing
// ---------------------------------------------------------------------------

/// Dataset directory manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub views: usize,
    pub samples: usize,
    pub dims: Vec<usize>,
    pub classes: usize,
    pub view_files: Vec<String>,
    pub labels_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_shapes: Option<Vec<Option<(usize, usize)>>>,
}

/// Parse and cross-validate a manifest from raw bytes.
pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    let m: Manifest = serde_json::from_slice(bytes)?;
    if m.views == 0 {
        return Err(Error::InvalidConfig("manifest: views must be >= 1".into()));
    }
    if m.samples == 0 {
        return Err(Error::InvalidConfig("manifest: samples must be >= 1".into()));
    }
    if m.classes == 0 {
        return Err(Error::InvalidConfig("manifest: classes must be >= 1".into()));
    }
    if m.dims.len() != m.views {
        return Err(Error::InvalidConfig(format!(
            "manifest: dims has {} entries for {} views",
            m.dims.len(),
            m.views
        )));
    }
    if m.view_files.len() != m.views {
        return Err(Error::InvalidConfig(format!(
            "manifest: view_files has {} entries for {} views",
            m.view_files.len(),
            m.views
        )));
    }
    if m.dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidConfig("manifest: zero-width view".into()));
    }
    if let Some(shapes) = &m.image_shapes {
        if shapes.len() != m.views {
            return Err(Error::InvalidConfig(
                "manifest: image_shapes length must equal views".into(),
            ));
        }
    }
    Ok(m)
}

/// Parse one headerless numeric CSV view from raw bytes.
///
/// Every row must have the same column count (and match `expected_cols` when
/// given); every cell must parse as a finite `f64`.
pub fn parse_view_csv(
    bytes: &[u8],
    view: usize,
    expected_cols: Option<usize>,
) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut data: Vec<f64> = Vec::new();
    let mut cols: Option<usize> = expected_cols;
    let mut rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let width = record.len();
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::ViewColMismatch {
                    view,
                    row,
                    expected: c,
                    got: width,
                });
            }
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                view,
                row,
                col,
                cell: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumericCell {
                    view,
                    row,
                    col,
                    cell: cell.to_string(),
                });
            }
            data.push(value);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid(format!("view {view}: empty csv")));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::ShapeMismatch(format!("view {view}: {e}")))
}

/// Parse a labels CSV (one integer per row) from raw bytes.
pub fn parse_labels_csv(bytes: &[u8]) -> Result<Vec<i64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(bytes);
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 1 {
            return Err(Error::Invalid(format!(
                "labels row {row}: expected one column, got {}",
                record.len()
            )));
        }
        let cell = record.get(0).unwrap_or("");
        let value: i64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
            view: usize::MAX,
            row,
            col: 0,
            cell: cell.to_string(),
        })?;
        labels.push(value);
    }
    Ok(labels)
}

/// Min-max scale each column to `[0, 1]` in place; constant columns map to 0.
pub fn min_max_scale(view: &mut Array2<f64>) {
    for mut col in view.columns_mut() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in col.iter() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let span = hi - lo;
        if span > 0.0 {
            col.mapv_inplace(|x| (x - lo) / span);
        } else {
            col.fill(0.0);
        }
    }
}

/// Load, validate, and scale a dataset from its manifest path.
pub fn load_dataset(manifest_path: &Path) -> Result<MultiViewDataset> {
    let bytes = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest = parse_manifest(&bytes)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let mut views = Vec::with_capacity(manifest.views);
    for (v, file) in manifest.view_files.iter().enumerate() {
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut view = parse_view_csv(&bytes, v, Some(manifest.dims[v]))?;
        if view.nrows() != manifest.samples {
            return Err(Error::ViewRowMismatch {
                view: v,
                expected: manifest.samples,
                got: view.nrows(),
            });
        }
        min_max_scale(&mut view);
        views.push(view);
    }

    let labels_path = dir.join(&manifest.labels_file);
    let bytes = fs::read(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let raw_labels = parse_labels_csv(&bytes)?;
    if raw_labels.len() != manifest.samples {
        return Err(Error::LabelCountMismatch {
            expected: manifest.samples,
            got: raw_labels.len(),
        });
    }
    let mut labels = Vec::with_capacity(raw_labels.len());
    for (row, &y) in raw_labels.iter().enumerate() {
        if y < 0 || y as usize >= manifest.classes {
            return Err(Error::LabelOutOfRange {
                row,
                label: y,
                classes: manifest.classes,
            });
        }
        labels.push(y as usize);
    }

    MultiViewDataset::new(
        manifest.name,
        views,
        labels,
        manifest.classes,
        manifest.image_shapes,
    )
}

/// Write a dataset directory (manifest + view CSVs + labels) for `raw`
/// feature matrices. Values are written with Rust's shortest-roundtrip float
/// formatting, so a write/load cycle is exact up to the load-time scaling.
pub fn write_dataset_dir(
    dir: &Path,
    name: &str,
    views: &[Array2<f64>],
    labels: &[usize],
    classes: usize,
    image_shapes: Option<Vec<Option<(usize, usize)>>>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let view_files: Vec<String> = (0..views.len()).map(|v| format!("view_{v}.csv")).collect();
    let manifest = Manifest {
        name: name.to_string(),
        views: views.len(),
        samples: views.first().map_or(0, |m| m.nrows()),
        dims: views.iter().map(|m| m.ncols()).collect(),
        classes,
        view_files: view_files.clone(),
        labels_file: "labels.csv".to_string(),
        image_shapes,
    };
    let path = dir.join("manifest.json");
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    manifest_bytes.push(b'\n');
    fs::write(&path, manifest_bytes).map_err(|e| Error::io(&path, e))?;

    for (view, file) in views.iter().zip(&view_files) {
        let path = dir.join(file);
        fs::write(&path, matrix_to_csv(view)).map_err(|e| Error::io(&path, e))?;
    }
    let labels_text: String = labels.iter().map(|y| format!("{y}\n")).collect();
    let path = dir.join("labels.csv");
    fs::write(&path, labels_text).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Render a matrix as headerless CSV with shortest-roundtrip floats.
pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 8);
    for row in m.rows() {
        let mut first = true;
        for &x in row.iter() {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{x}"));
            first = false;
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn toy_dataset(n: usize, v: usize, k: usize) -> MultiViewDataset {
        let views = (0..v)
            .map(|view| {
                Array2::from_shape_fn((n, 3 + view), |(i, j)| (i * 7 + j + view) as f64 / 10.0)
            })
            .collect();
        let labels = (0..n).map(|i| i % k).collect();
        MultiViewDataset::new("toy", views, labels, k, None).unwrap()
    }

    #[test]
    fn dataset_validation_catches_row_mismatch() {
        let views = vec![Array2::zeros((4, 2)), Array2::zeros((3, 2))];
        let err = MultiViewDataset::new("bad", views, vec![0, 1, 0, 1], 2, None).unwrap_err();
        assert!(matches!(err, Error::ViewRowMismatch { view: 1, .. }));
    }

    #[test]
    fn dataset_validation_catches_empty_class() {
        let views = vec![Array2::zeros((4, 2)), Array2::zeros((4, 2))];
        let err = MultiViewDataset::new("bad", views, vec![0, 0, 0, 2], 3, None).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(1)));
    }

    #[test]
    fn split_full_ratio_has_no_unpaired() {
        let ds = toy_dataset(10, 2, 2);
        let split = make_partial_split(&ds, 1.0, 7).unwrap();
        assert_eq!(split.paired_idx, (0..10).collect::<Vec<_>>());
        assert!(split.unpaired.is_empty());
    }

    #[test]
    fn split_counts_and_view_balance() {
        let ds = toy_dataset(10, 2, 2);
        let split = make_partial_split(&ds, 0.5, 3).unwrap();
        assert_eq!(split.paired_idx.len(), 5);
        assert_eq!(split.unpaired.len(), 5);
        let mut per_view = [0usize; 2];
        for &view in split.unpaired.values() {
            per_view[view] += 1;
        }
        let mut counts = per_view.to_vec();
        counts.sort_unstable();
        assert_eq!(counts, vec![2, 3]);
    }

    #[test]
    fn split_is_deterministic_and_bit_identical() {
        let ds = toy_dataset(37, 3, 4);
        let a = make_partial_split(&ds, 0.4, 99).unwrap();
        let b = make_partial_split(&ds, 0.4, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let c = make_partial_split(&ds, 0.4, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_bad_ratio_and_single_view() {
        let ds = toy_dataset(10, 2, 2);
        assert!(matches!(
            make_partial_split(&ds, 1.5, 0),
            Err(Error::RatioOutOfRange(_))
        ));
        assert!(matches!(
            make_partial_split(&ds, -0.1, 0),
            Err(Error::RatioOutOfRange(_))
        ));
        let single = toy_dataset(10, 1, 2);
        assert!(matches!(
            make_partial_split(&single, 0.5, 0),
            Err(Error::TooFewViews { .. })
        ));
    }

    #[test]
    fn mask_roundtrip() {
        let ds = toy_dataset(12, 3, 3);
        let split = make_partial_split(&ds, 0.25, 5).unwrap();
        let bytes = split.to_json();
        let back = parse_mask(&bytes).unwrap();
        assert_eq!(split, back);
    }

    #[test]
    fn mask_rejects_non_partition() {
        let bad = br#"{"ratio":0.5,"seed":1,"paired_idx":[0,1],"unpaired":{"1":0}}"#;
        assert!(parse_mask(bad).is_err());
    }

    #[test]
    fn mean_impute_fills_column_means() {
        // View 1 observed on rows {0, 2} with column values {1, 3}: row 1 gets 2.
        let views = vec![
            array![[0.0], [0.5], [1.0]],
            array![[1.0, 10.0], [7.0, 7.0], [3.0, 20.0]],
        ];
        let ds = MultiViewDataset::new("t", views, vec![0, 1, 0], 2, None).unwrap();
        let split = PartialSplit {
            impartial_ratio: 2.0 / 3.0,
            seed: 0,
            paired_idx: vec![0, 2],
            unpaired: BTreeMap::from([(1usize, 0usize)]),
        };
        let filled = mean_impute(&ds, &split).unwrap();
        assert_eq!(filled.views[1][[1, 0]], 2.0);
        assert_eq!(filled.views[1][[1, 1]], 15.0);
        // Observed rows untouched.
        assert_eq!(filled.views[1][[0, 0]], 1.0);
        assert_eq!(filled.views[0], ds.views[0]);
    }

    #[test]
    fn mean_impute_identity_when_nothing_missing() {
        let ds = toy_dataset(8, 2, 2);
        let split = make_partial_split(&ds, 1.0, 1).unwrap();
        let filled = mean_impute(&ds, &split).unwrap();
        for v in 0..2 {
            assert_eq!(filled.views[v], ds.views[v]);
        }
    }

    #[test]
    fn mean_impute_is_idempotent_and_preserves_observed_means() {
        let ds = toy_dataset(20, 3, 4);
        let split = make_partial_split(&ds, 0.3, 11).unwrap();
        let once = mean_impute(&ds, &split).unwrap();
        let twice = mean_impute(&once, &split).unwrap();
        for v in 0..3 {
            assert_eq!(once.views[v], twice.views[v]);
            // Per-column mean over observed rows is unchanged.
            let rows = split.observed_rows(v);
            for c in 0..ds.views[v].ncols() {
                let before: f64 = rows.iter().map(|&i| ds.views[v][[i, c]]).sum();
                let after: f64 = rows.iter().map(|&i| once.views[v][[i, c]]).sum();
                assert_eq!(before, after);
            }
        }
    }

    #[test]
    fn mean_impute_rejects_unobserved_view() {
        let ds = toy_dataset(4, 2, 2);
        // Nobody observes view 1.
        let split = PartialSplit {
            impartial_ratio: 0.0,
            seed: 0,
            paired_idx: vec![],
            unpaired: BTreeMap::from([(0, 0), (1, 0), (2, 0), (3, 0)]),
        };
        assert!(matches!(
            mean_impute(&ds, &split),
            Err(Error::UnobservedView(1))
        ));
    }

    #[test]
    fn view_csv_rejects_bad_cells_and_ragged_rows() {
        assert!(matches!(
            parse_view_csv(b"1,2\n3,oops\n", 0, None),
            Err(Error::NonNumericCell { row: 1, col: 1, .. })
        ));
        assert!(matches!(
            parse_view_csv(b"1,2\n3\n", 0, None),
            Err(Error::ViewColMismatch { row: 1, .. })
        ));
        assert!(matches!(
            parse_view_csv(b"1,inf\n", 0, None),
            Err(Error::NonNumericCell { .. })
        ));
    }

    #[test]
    fn load_dataset_roundtrip_with_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let views = vec![array![[0.0, 5.0], [2.0, 5.0], [4.0, 5.0]]];
        write_dataset_dir(dir.path(), "rt", &views, &[0, 1, 0], 2, None).unwrap();
        let ds = load_dataset(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(ds.num_samples(), 3);
        // Column 0 scaled to [0,1]; constant column 1 maps to 0.
        assert_eq!(ds.views[0].column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(ds.views[0].column(1).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn load_dataset_detects_row_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let views = vec![Array2::zeros((3, 2)), Array2::zeros((3, 2))];
        write_dataset_dir(dir.path(), "bad", &views, &[0, 1, 0], 2, None).unwrap();
        // Truncate the second view to 2 rows.
        std::fs::write(dir.path().join("view_1.csv"), "0,0\n0,0\n").unwrap();
        let err = load_dataset(&dir.path().join("manifest.json")).unwrap_err();
        assert!(matches!(err, Error::ViewRowMismatch { view: 1, .. }));
    }

    #[test]
    fn load_dataset_single_view_loads() {
        let dir = tempfile::tempdir().unwrap();
        let views = vec![array![[0.0], [1.0]]];
        write_dataset_dir(dir.path(), "one", &views, &[0, 1], 2, None).unwrap();
        let ds = load_dataset(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(ds.num_views(), 1);
        // Downstream ops that need V >= 2 reject it.
        assert!(make_partial_split(&ds, 0.5, 0).is_err());
    }

    #[test]
    fn load_dataset_missing_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(&dir.path().join("manifest.json")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn split_partitions_all_indices(n in 2usize..120, v in 2usize..5, seed in 0u64..500,
                                        ratio in 0.0f64..=1.0) {
            let ds = toy_dataset(n, v, 2);
            let split = make_partial_split(&ds, ratio, seed).unwrap();
            prop_assert_eq!(split.num_samples(), n);
            prop_assert_eq!(split.paired_idx.len(), ((ratio * n as f64) + 0.5).floor() as usize);
            let mut seen = vec![false; n];
            for &i in split.paired_idx.iter().chain(split.unpaired.keys()) {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
            prop_assert!(seen.iter().all(|&s| s));
            // Retained views balanced within one sample.
            let mut per_view = vec![0usize; v];
            for &view in split.unpaired.values() {
                prop_assert!(view < v);
                per_view[view] += 1;
            }
            let lo = per_view.iter().min().unwrap();
            let hi = per_view.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
        }
    }
}
