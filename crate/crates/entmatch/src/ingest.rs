//! Loading covariate tables: parsing, type classification, mean imputation
//! with missingness indicators, and one-hot expansion of nominal columns.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

/// How a covariate column behaves in distances and balance checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateKind {
    Binary,
    Ordinal,
    Continuous,
    Nominal,
}

/// Column roles for the input file.
#[derive(Debug, Clone, Default)]
pub struct Schema {
    pub treatment: String,
    /// Optional ID column; row numbers are used when absent.
    pub id: Option<String>,
    /// Covariate columns in input order; empty means every column that is
    /// not the treatment, the ID, the score column, or excluded.
    pub covariates: Vec<String>,
    /// Covariate columns holding nominal (possibly non-numeric) levels.
    pub nominal: Vec<String>,
    /// Columns to ignore entirely (e.g. outcomes).
    pub exclude: Vec<String>,
    /// Optional externally fitted propensity score column.
    pub scores: Option<String>,
    pub delimiter: u8,
}

impl Schema {
    pub fn new(treatment: impl Into<String>) -> Self {
        Schema {
            treatment: treatment.into(),
            delimiter: b',',
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    /// Treatment indicator: true when treated.
    pub z: bool,
    values: Vec<f64>,
    missing_mask: Vec<bool>,
}

impl Subject {
    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn is_missing(&self, j: usize) -> bool {
        self.missing_mask[j]
    }
}

/// An immutable table of subjects by covariates.
#[derive(Debug, Clone)]
pub struct CovariateTable {
    subjects: Vec<Subject>,
    covariate_names: Vec<String>,
    covariate_kinds: Vec<CovariateKind>,
    /// Input column each covariate came from (differs from the covariate
    /// name for one-hot expansions of nominal columns).
    source_columns: Vec<String>,
    external_scores: Option<Vec<f64>>,
    imputed: bool,
    id_index: HashMap<String, usize>,
}

impl CovariateTable {
    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn subject(&self, i: usize) -> &Subject {
        &self.subjects[i]
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_kinds(&self) -> &[CovariateKind] {
        &self.covariate_kinds
    }

    pub fn source_columns(&self) -> &[String] {
        &self.source_columns
    }

    pub fn is_imputed(&self) -> bool {
        self.imputed
    }

    pub fn external_scores(&self) -> Option<&[f64]> {
        self.external_scores.as_deref()
    }

    pub fn index_of_id(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn find_covariate(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    /// Indices of covariates derived from the given input column.
    pub fn covariates_from_source(&self, source: &str) -> Vec<usize> {
        self.source_columns
            .iter()
            .enumerate()
            .filter(|(_, s)| s.as_str() == source)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn column_values(&self, j: usize) -> Vec<f64> {
        self.subjects.iter().map(|s| s.values[j]).collect()
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.subjects[i].z).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.subjects[i].z).collect()
    }

    pub fn n_treated(&self) -> usize {
        self.subjects.iter().filter(|s| s.z).count()
    }

    pub fn n_controls(&self) -> usize {
        self.n() - self.n_treated()
    }
}

fn is_missing_token(raw: &str) -> bool {
    let t = raw.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na")
}

fn is_integral(v: f64) -> bool {
    (v - v.round()).abs() < 1e-9
}

fn classify(values: &[f64], missing: &[bool]) -> CovariateKind {
    let mut binary = true;
    let mut integral = true;
    for (v, &m) in values.iter().zip(missing) {
        if m {
            continue;
        }
        if *v != 0.0 && *v != 1.0 {
            binary = false;
        }
        if !is_integral(*v) {
            integral = false;
        }
    }
    if binary {
        CovariateKind::Binary
    } else if integral {
        CovariateKind::Ordinal
    } else {
        CovariateKind::Continuous
    }
}

/// Loads a delimiter-separated table and classifies covariate columns.
/// Raw values are kept as parsed; no imputation happens here.
pub fn load_table(path: &Path, schema: &Schema) -> Result<CovariateTable> {
    let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(&raw, schema, path)
}

fn parse_table(raw: &str, schema: &Schema, path: &Path) -> Result<CovariateTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(raw.as_bytes());

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::NoSubjects);
    }

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
    };

    let z_col = col(&schema.treatment)?;
    let id_col = schema.id.as_deref().map(col).transpose()?;
    let score_col = schema.scores.as_deref().map(col).transpose()?;

    let mut reserved: HashSet<&str> = HashSet::new();
    reserved.insert(schema.treatment.as_str());
    if let Some(id) = &schema.id {
        reserved.insert(id);
    }
    if let Some(s) = &schema.scores {
        reserved.insert(s);
    }
    for e in &schema.exclude {
        reserved.insert(e);
    }

    let sources: Vec<String> = if schema.covariates.is_empty() {
        headers
            .iter()
            .filter(|h| !reserved.contains(h.as_str()))
            .cloned()
            .collect()
    } else {
        for c in &schema.covariates {
            col(c)?;
        }
        schema.covariates.clone()
    };
    for nom in &schema.nominal {
        if !sources.contains(nom) {
            return Err(Error::Config(format!(
                "nominal column {nom:?} is not among the covariate columns"
            )));
        }
    }
    let nominal: HashSet<&str> = schema.nominal.iter().map(String::as_str).collect();
    let source_cols: Vec<usize> = sources.iter().map(|s| col(s)).collect::<Result<_>>()?;

    // raw cell text per source column, plus ids, z, and optional scores
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); sources.len()];
    let mut ids: Vec<String> = Vec::new();
    let mut zs: Vec<bool> = Vec::new();
    let mut ext_scores: Vec<f64> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let row = row_idx + 1;
        let z_raw = record.get(z_col).unwrap_or("").trim();
        let z = match z_raw.parse::<f64>() {
            Ok(v) if v == 0.0 => false,
            Ok(v) if v == 1.0 => true,
            _ => {
                return Err(Error::NonBinaryTreatment {
                    column: schema.treatment.clone(),
                    value: z_raw.to_string(),
                    row,
                })
            }
        };
        zs.push(z);
        let id = match id_col {
            Some(c) => {
                let v = record.get(c).unwrap_or("").trim().to_string();
                if v.is_empty() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        message: format!("empty id in row {row}"),
                    });
                }
                v
            }
            None => row.to_string(),
        };
        ids.push(id);
        if let Some(c) = score_col {
            let raw = record.get(c).unwrap_or("").trim();
            let v = raw.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                message: format!(
                    "score column {:?} has non-numeric value {raw:?} in row {row}",
                    schema.scores.as_deref().unwrap_or("")
                ),
            })?;
            ext_scores.push(v);
        }
        for (k, &c) in source_cols.iter().enumerate() {
            cells[k].push(record.get(c).unwrap_or("").trim().to_string());
        }
    }

    if ids.is_empty() {
        return Err(Error::NoSubjects);
    }
    let mut seen = HashSet::new();
    for id in &ids {
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id: id.clone() });
        }
    }
    if zs.iter().all(|&z| z) || zs.iter().all(|&z| !z) {
        return Err(Error::OneGroupEmpty);
    }

    let n = ids.len();
    let mut covariate_names = Vec::new();
    let mut covariate_kinds = Vec::new();
    let mut source_columns = Vec::new();
    let mut columns: Vec<(Vec<f64>, Vec<bool>)> = Vec::new();

    for (k, source) in sources.iter().enumerate() {
        let raw_col = &cells[k];
        if nominal.contains(source.as_str()) {
            let missing: Vec<bool> = raw_col.iter().map(|c| is_missing_token(c)).collect();
            let mut levels: Vec<&str> = raw_col
                .iter()
                .zip(&missing)
                .filter(|(_, &m)| !m)
                .map(|(c, _)| c.as_str())
                .collect();
            levels.sort_unstable();
            levels.dedup();
            if levels.len() <= 2 {
                // two observed levels fit one 0/1 column
                let values: Vec<f64> = raw_col
                    .iter()
                    .zip(&missing)
                    .map(|(c, &m)| {
                        if m {
                            0.0
                        } else {
                            levels.iter().position(|l| l == c).unwrap() as f64
                        }
                    })
                    .collect();
                covariate_names.push(source.clone());
                covariate_kinds.push(CovariateKind::Nominal);
                source_columns.push(source.clone());
                columns.push((values, missing));
            } else {
                for level in &levels {
                    let values: Vec<f64> = raw_col
                        .iter()
                        .zip(&missing)
                        .map(|(c, &m)| {
                            if m {
                                0.0
                            } else if c == level {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    covariate_names.push(format!("{source}={level}"));
                    covariate_kinds.push(CovariateKind::Binary);
                    source_columns.push(source.clone());
                    columns.push((values, missing.clone()));
                }
            }
        } else {
            let mut values = Vec::with_capacity(n);
            let mut missing = Vec::with_capacity(n);
            for (row_idx, cell) in raw_col.iter().enumerate() {
                if is_missing_token(cell) {
                    values.push(0.0);
                    missing.push(true);
                } else {
                    let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        message: format!(
                            "column {source:?} has non-numeric value {cell:?} in row {} \
                             (declare it nominal to one-hot encode)",
                            row_idx + 1
                        ),
                    })?;
                    values.push(v);
                    missing.push(false);
                }
            }
            covariate_names.push(source.clone());
            covariate_kinds.push(classify(&values, &missing));
            source_columns.push(source.clone());
            columns.push((values, missing));
        }
    }

    let subjects: Vec<Subject> = (0..n)
        .map(|i| Subject {
            id: ids[i].clone(),
            z: zs[i],
            values: columns.iter().map(|(v, _)| v[i]).collect(),
            missing_mask: columns.iter().map(|(_, m)| m[i]).collect(),
        })
        .collect();
    let id_index = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), i))
        .collect();

    Ok(CovariateTable {
        subjects,
        covariate_names,
        covariate_kinds,
        source_columns,
        external_scores: (score_col.is_some()).then_some(ext_scores),
        imputed: false,
        id_index,
    })
}

/// Replaces every missing cell with the pooled column mean and appends one
/// binary `<column>_missing` indicator per input column that had any
/// missing cells. Masks are preserved for audit.
pub fn impute_with_indicators(table: &CovariateTable) -> Result<CovariateTable> {
    let mut out = table.clone();
    let n = out.n();
    let p = out.n_covariates();

    for j in 0..p {
        let missing_count = out.subjects.iter().filter(|s| s.missing_mask[j]).count();
        if missing_count == 0 {
            continue;
        }
        if missing_count == n {
            return Err(Error::AllMissing {
                column: out.covariate_names[j].clone(),
            });
        }
        let (sum, cnt) = out
            .subjects
            .iter()
            .filter(|s| !s.missing_mask[j])
            .fold((0.0, 0usize), |(s, c), subj| (s + subj.values[j], c + 1));
        let mean = sum / cnt as f64;
        for subj in &mut out.subjects {
            if subj.missing_mask[j] {
                subj.values[j] = mean;
            }
        }
    }

    // indicators per original input column, in first-appearance order
    let mut source_masks: BTreeMap<usize, (String, Vec<bool>)> = BTreeMap::new();
    let mut first_index: HashMap<&str, usize> = HashMap::new();
    for j in 0..p {
        let src = table.source_columns[j].as_str();
        let order = *first_index.entry(src).or_insert(j);
        let mask: Vec<bool> = table.subjects.iter().map(|s| s.missing_mask[j]).collect();
        if mask.iter().any(|&m| m) {
            source_masks
                .entry(order)
                .or_insert_with(|| (src.to_string(), mask));
        }
    }
    for (_, (src, mask)) in source_masks {
        let name = format!("{src}_missing");
        out.covariate_names.push(name.clone());
        out.covariate_kinds.push(CovariateKind::Binary);
        out.source_columns.push(name);
        for (subj, &m) in out.subjects.iter_mut().zip(&mask) {
            subj.values.push(if m { 1.0 } else { 0.0 });
            subj.missing_mask.push(false);
        }
    }

    out.imputed = true;
    Ok(out)
}
