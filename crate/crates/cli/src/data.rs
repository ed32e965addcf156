//! CSV ingestion and emission of grouped panel data.
//!
//! Layout: a header row, a string `group` column, a numeric `y` column and
//! any number of numeric feature columns. Rows of one group need not be
//! adjacent; they are gathered in order of first appearance.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use lmminfer::model::PanelData;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

pub const RESPONSE_COL: &str = "y";

/// Random-effect columns of `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum RandomEffects {
    Intercept,
    /// Named feature columns, which also stay in the fixed-effect design.
    Columns(Vec<String>),
}

impl RandomEffects {
    pub fn from_list(cols: &[String]) -> Self {
        if cols.is_empty() {
            RandomEffects::Intercept
        } else {
            RandomEffects::Columns(cols.to_vec())
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RandomEffects::Intercept => "intercept".into(),
            RandomEffects::Columns(c) => c.join(","),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub panel: PanelData,
    /// Group label of each group, in panel order.
    pub group_labels: Vec<String>,
}

pub fn read_panel_file(path: &Path, group_col: &str, re: &RandomEffects) -> CliResult<LoadedData> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_panel(file, group_col, re)
}

pub fn read_panel<R: Read>(reader: R, group_col: &str, re: &RandomEffects) -> CliResult<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Schema(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let g_idx = find(group_col).ok_or_else(|| CliError::Schema(format!("missing group column `{group_col}`")))?;
    let y_idx = find(RESPONSE_COL).ok_or_else(|| CliError::Schema(format!("missing response column `{RESPONSE_COL}`")))?;
    let feature_idx: Vec<usize> = (0..header.len()).filter(|&k| k != g_idx && k != y_idx).collect();
    if feature_idx.is_empty() {
        return Err(CliError::Schema("no feature columns".into()));
    }
    let names: Vec<String> = feature_idx.iter().map(|&k| header[k].clone()).collect();

    let mut labels = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Schema(format!("row {}: {e}", row + 2)))?;
        let label = &rec[g_idx];
        if label.is_empty() {
            return Err(CliError::Schema(format!("row {}: empty group label", row + 2)));
        }
        labels.push(label.to_owned());
        let cell = |k: usize| -> CliResult<f64> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Schema(format!("row {}, column `{}`: not a finite number: `{}`", row + 2, header[k], &rec[k])))
        };
        y.push(cell(y_idx)?);
        for &k in &feature_idx {
            x.push(cell(k)?);
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(CliError::Schema("no data rows".into()));
    }

    let mut first: HashMap<&str, usize> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        first.entry(l.as_str()).or_insert(i);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| first[labels[i].as_str()]);
    let mut groups = Vec::new();
    let mut group_labels: Vec<String> = Vec::new();
    for &i in &order {
        if group_labels.last() == Some(&labels[i]) {
            *groups.last_mut().unwrap() += 1;
        } else {
            group_labels.push(labels[i].clone());
            groups.push(1);
        }
    }

    let p = names.len();
    let x_raw = DMatrix::from_row_slice(n, p, &x);
    let features = x_raw.select_rows(order.iter());
    let y = DVector::from_iterator(n, order.iter().map(|&i| y[i]));
    let w = match re {
        RandomEffects::Intercept => DMatrix::from_element(n, 1, 1.0),
        RandomEffects::Columns(cols) => {
            let idx = cols
                .iter()
                .map(|c| {
                    names
                        .iter()
                        .position(|nm| nm == c)
                        .ok_or_else(|| CliError::Schema(format!("random-effect column `{c}` not found")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            features.select_columns(idx.iter())
        }
    };
    let panel = PanelData::new(y, features, w, groups, Some(names))?;
    Ok(LoadedData { panel, group_labels })
}

/// Index of a named feature column.
pub fn feature_index(panel: &PanelData, name: &str) -> CliResult<usize> {
    panel
        .feature_names
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| CliError::Schema(format!("tested column `{name}` not found")))
}

/// Writes `group,y,<features>` with groups labelled `g1, g2, ...` and every
/// number in 17 significant digits.
pub fn write_panel<W: Write>(writer: W, panel: &PanelData) -> CliResult<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| CliError::Schema(format!("csv write failed: {e}"));
    let mut header = vec!["group".to_owned(), RESPONSE_COL.to_owned()];
    header.extend(panel.feature_names.iter().cloned());
    wtr.write_record(&header).map_err(to_err)?;
    let mut row = 0;
    for (g, &size) in panel.groups.iter().enumerate() {
        for _ in 0..size {
            let mut rec = vec![format!("g{}", g + 1), fmt_f64(panel.y[row])];
            rec.extend(panel.features.row(row).iter().map(|&v| fmt_f64(v)));
            wtr.write_record(&rec).map_err(to_err)?;
            row += 1;
        }
    }
    wtr.flush().map_err(|e| CliError::Schema(format!("csv write failed: {e}")))
}

/// 17 significant digits, locale independent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
