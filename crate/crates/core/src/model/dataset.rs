use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `(start, len)` of every group in stacked row order.
pub fn group_ranges(groups: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(groups.len());
    let mut start = 0;
    for &g in groups {
        out.push((start, g));
        start += g;
    }
    out
}

fn check_groups(groups: &[usize], n: usize) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("at least one group is required".into()));
    }
    if groups.iter().any(|&g| g == 0) {
        return Err(Error::InvalidInput("group sizes must be positive".into()));
    }
    let total: usize = groups.iter().sum();
    if total != n {
        return Err(Error::InvalidInput(format!(
            "group sizes sum to {total} but there are {n} observations"
        )));
    }
    Ok(())
}

/// Grouped longitudinal data split into the tested covariate `z` and the
/// nuisance design `x` (n x (p-1)). The random-effect design is stored
/// stacked (n x q); block `i` is the row range of group `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DVector<f64>,
    w: DMatrix<f64>,
    groups: Vec<usize>,
}

impl GroupedDataset {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DVector<f64>,
        w: DMatrix<f64>,
        groups: Vec<usize>,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z.len() != n || w.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "row mismatch: y {n}, X {}, Z {}, W {}",
                x.nrows(),
                z.len(),
                w.nrows()
            )));
        }
        if w.ncols() == 0 {
            return Err(Error::InvalidInput("random-effect design needs q >= 1".into()));
        }
        check_groups(&groups, n)?;
        let finite = y.iter().chain(x.iter()).chain(z.iter()).chain(w.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite entries in data".into()));
        }
        Ok(Self { y, x, z, w, groups })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn groups(&self) -> &[usize] {
        &self.groups
    }
    pub fn n(&self) -> usize {
        self.y.len()
    }
    /// Total number of fixed effects including the tested one.
    pub fn p(&self) -> usize {
        self.x.ncols() + 1
    }
    pub fn q(&self) -> usize {
        self.w.ncols()
    }
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Pseudo-response `y - z * beta0`.
    pub fn pseudo_response(&self, beta0: f64) -> DVector<f64> {
        &self.y - &self.z * beta0
    }

    pub fn with_y(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(y, self.x.clone(), self.z.clone(), self.w.clone(), self.groups.clone())
    }
}

/// Data with the full fixed-effect design (n x p) before a tested column is
/// chosen. Simulation output and CSV ingestion both produce this.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    pub y: DVector<f64>,
    pub features: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub groups: Vec<usize>,
    pub feature_names: Vec<String>,
}

impl PanelData {
    pub fn new(
        y: DVector<f64>,
        features: DMatrix<f64>,
        w: DMatrix<f64>,
        groups: Vec<usize>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = y.len();
        if features.nrows() != n || w.nrows() != n {
            return Err(Error::InvalidInput("row mismatch in panel data".into()));
        }
        check_groups(&groups, n)?;
        let feature_names = feature_names
            .unwrap_or_else(|| (1..=features.ncols()).map(|j| format!("x{j}")).collect());
        if feature_names.len() != features.ncols() {
            return Err(Error::InvalidInput("feature name count mismatch".into()));
        }
        Ok(Self { y, features, w, groups, feature_names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    /// Nuisance design with the given columns removed.
    pub fn design_without(&self, held_out: &[usize]) -> DMatrix<f64> {
        let keep: Vec<usize> = (0..self.p()).filter(|j| !held_out.contains(j)).collect();
        self.features.select_columns(keep.iter())
    }

    /// Split off column `j` as the tested covariate.
    pub fn hold_out(&self, j: usize) -> Result<GroupedDataset> {
        if j >= self.p() {
            return Err(Error::InvalidInput(format!("tested column {j} out of range")));
        }
        GroupedDataset::new(
            self.y.clone(),
            self.design_without(&[j]),
            self.features.column(j).into_owned(),
            self.w.clone(),
            self.groups.clone(),
        )
    }
}

/// Output of [`standardize_columns`]: the rescaled dataset together with the
/// per-column factors (`new_col = old_col * scale`).
#[derive(Debug, Clone)]
pub struct Standardized {
    pub dataset: GroupedDataset,
    pub scales: Vec<f64>,
}

/// Rescale every nuisance column to Euclidean norm `sqrt(n)`.
pub fn standardize_columns(dataset: &GroupedDataset) -> Result<Standardized> {
    let n = dataset.n() as f64;
    let target = n.sqrt();
    let mut x = dataset.x.clone();
    let mut scales = Vec::with_capacity(x.ncols());
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm < 1e-12 {
            return Err(Error::ZeroColumn(j));
        }
        let scale = if (norm - target).abs() <= 1e-14 * target { 1.0 } else { target / norm };
        if scale != 1.0 {
            col *= scale;
        }
        scales.push(scale);
    }
    let dataset = GroupedDataset { x, ..dataset.clone() };
    Ok(Standardized { dataset, scales })
}
