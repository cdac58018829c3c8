//! Tabular data: ingestion, confounder encoding, splitting and
//! joint-distribution-matched subsampling.
//!
//! A [`Dataset`] holds a dense feature matrix, a response vector (0/1 for
//! classification) and a single categorical confounder. Several confounders
//! are merged into one with [`combine_confounders`]; continuous ones are
//! binned with [`discretize`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::shuffle::RngStream;
use crate::stats::{quantile_sorted, sorted_copy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// A categorical vector stored as integer codes into a level list.
///
/// Codes are dense (`0..levels.len()`) and every level occurs at least once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Categorical {
    codes: Vec<u32>,
    levels: Vec<String>,
}

impl Categorical {
    /// Encodes string labels; levels are sorted so codes follow level order.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let levels: Vec<String> = labels
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = labels
            .iter()
            .map(|s| levels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap() as u32)
            .collect();
        Self { codes, levels }
    }

    /// Builds from raw codes and names, dropping unused levels.
    pub fn from_codes(codes: Vec<u32>, levels: Vec<String>) -> Result<Self> {
        if let Some(&bad) = codes.iter().find(|&&c| c as usize >= levels.len()) {
            return Err(Error::InvalidParameter(format!(
                "confounder code {bad} has no level name"
            )));
        }
        Ok(Self::compact(codes, levels))
    }

    fn compact(codes: Vec<u32>, levels: Vec<String>) -> Self {
        let mut used = vec![false; levels.len()];
        for &c in &codes {
            used[c as usize] = true;
        }
        let mut remap = vec![u32::MAX; levels.len()];
        let mut kept = Vec::new();
        for (i, name) in levels.into_iter().enumerate() {
            if used[i] {
                remap[i] = kept.len() as u32;
                kept.push(name);
            }
        }
        Self {
            codes: codes.into_iter().map(|c| remap[c as usize]).collect(),
            levels: kept,
        }
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.levels[self.codes[i] as usize]
    }

    /// Codes as reals, for numeric-coded formulas.
    pub fn as_f64(&self) -> Vec<f64> {
        self.codes.iter().map(|&c| c as f64).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self::compact(idx.iter().map(|&i| self.codes[i]).collect(), self.levels.clone())
    }
}

/// Binning rule for a continuous confounder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bins {
    /// Strictly increasing interior cut points.
    Cuts(Vec<f64>),
    /// Number of equal-occupancy bins from sample quantiles.
    Quantiles(usize),
}

fn fmt_edge(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x}")
    }
}

/// Maps each value to a half-open bin `[lo, hi)`, the last bin closed.
/// Empty bins are dropped from the level set.
pub fn discretize(values: &[f64], bins: &Bins) -> Result<Categorical> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Binning("values must be finite".into()));
    }
    let (lo, hi, cuts) = match bins {
        Bins::Cuts(cuts) => {
            if cuts.is_empty() {
                return Err(Error::Binning("at least one cut point (two bins) required".into()));
            }
            if cuts.windows(2).any(|w| w[0] >= w[1]) || cuts.iter().any(|c| !c.is_finite()) {
                return Err(Error::Binning("cut points must be finite and strictly increasing".into()));
            }
            (f64::NEG_INFINITY, f64::INFINITY, cuts.clone())
        }
        Bins::Quantiles(k) => {
            if *k < 2 {
                return Err(Error::Binning("at least two quantile bins required".into()));
            }
            let sorted = sorted_copy(values);
            let mut distinct = sorted.clone();
            distinct.dedup();
            if distinct.len() < *k {
                return Err(Error::Binning(format!(
                    "{} distinct values cannot fill {k} quantile bins",
                    distinct.len()
                )));
            }
            let mut cuts: Vec<f64> = (1..*k)
                .map(|j| quantile_sorted(&sorted, j as f64 / *k as f64))
                .collect();
            cuts.dedup();
            (sorted[0], sorted[sorted.len() - 1], cuts)
        }
    };
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lo);
    edges.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
    edges.push(hi);
    let n_bins = edges.len() - 1;
    let levels: Vec<String> = (0..n_bins)
        .map(|b| {
            let close = if b + 1 == n_bins { "]" } else { ")" };
            format!("[{},{}{close}", fmt_edge(edges[b]), fmt_edge(edges[b + 1]))
        })
        .collect();
    let inner = &edges[1..n_bins];
    let codes = values
        .iter()
        .map(|v| inner.partition_point(|&c| c <= *v) as u32)
        .collect();
    Ok(Categorical::compact(codes, levels))
}

fn escape_level(s: &str) -> String {
    s.replace('\\', "\\\\").replace('|', "\\|")
}

/// Combines several confounders into one whose levels are the `|`-joined
/// input levels (literal `|` and `\` escaped with `\`).
pub fn combine_confounders(vectors: &[Categorical]) -> Result<Categorical> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidParameter("no confounder vectors to combine".into()))?;
    if vectors.len() == 1 {
        return Ok(first.clone());
    }
    for v in &vectors[1..] {
        check_len(first.len(), v.len())?;
    }
    let labels: Vec<String> = (0..first.len())
        .map(|i| {
            vectors
                .iter()
                .map(|v| escape_level(v.label(i)))
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect();
    Ok(Categorical::from_labels(&labels))
}

/// Features, response and confounder for `n` rows.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: DMatrix<f64>,
    response: Vec<f64>,
    confounder: Categorical,
    task: Task,
    /// Classification label names `[negative, positive]`.
    labels: Option<[String; 2]>,
    ids: Option<Vec<String>>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Validates and assembles a dataset. Classification responses must be
    /// 0/1 coded.
    pub fn new(
        features: DMatrix<f64>,
        response: Vec<f64>,
        confounder: Categorical,
        task: Task,
    ) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("dataset needs at least 2 rows, got {n}")));
        }
        if features.ncols() < 1 {
            return Err(Error::InvalidParameter("dataset needs at least one feature".into()));
        }
        check_len(n, response.len())?;
        check_len(n, confounder.len())?;
        if features.iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("features and response must be finite".into()));
        }
        let labels = match task {
            Task::Classification => {
                if response.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Label("classification response must be coded 0/1".into()));
                }
                Some(["0".to_string(), "1".to_string()])
            }
            Task::Regression => None,
        };
        let p = features.ncols();
        Ok(Self {
            features,
            response,
            confounder,
            task,
            labels,
            ids: None,
            feature_names: (1..=p).map(|j| format!("x{j}")).collect(),
        })
    }

    pub fn with_labels(mut self, negative: &str, positive: &str) -> Self {
        if self.task == Task::Classification {
            self.labels = Some([negative.to_string(), positive.to_string()]);
        }
        self
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        check_len(self.p(), names.len())?;
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        check_len(self.n(), ids.len())?;
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn confounder(&self) -> &Categorical {
        &self.confounder
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> Option<&[String; 2]> {
        self.labels.as_ref()
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Response label name of row `i` (the number itself for regression).
    pub fn response_label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[self.response[i] as usize].clone(),
            None => format!("{}", self.response[i]),
        }
    }

    /// Rows `idx` in the given order; unused confounder levels are dropped.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            response: idx.iter().map(|&i| self.response[i]).collect(),
            confounder: self.confounder.subset(idx),
            task: self.task,
            labels: self.labels.clone(),
            ids: self.ids.as_ref().map(|ids| idx.iter().map(|&i| ids[i].clone()).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Replaces the confounder.
    pub fn with_confounder(mut self, confounder: Categorical) -> Result<Self> {
        check_len(self.n(), confounder.len())?;
        self.confounder = confounder;
        Ok(self)
    }

    /// Per-cell counts over (confounder level, response label).
    pub fn joint_table(&self) -> Result<JointTable> {
        if self.task != Task::Classification {
            return Err(Error::InvalidParameter("joint tables need a classification response".into()));
        }
        let mut counts: BTreeMap<(String, String), f64> = BTreeMap::new();
        for i in 0..self.n() {
            *counts
                .entry((self.confounder.label(i).to_string(), self.response_label(i)))
                .or_default() += 1.0;
        }
        JointTable::from_weights(
            counts
                .into_iter()
                .map(|((confounder, response), w)| JointCell { confounder, response, weight: w })
                .collect(),
        )
    }

    /// Writes the dataset as a delimited file with a header row.
    pub fn write_csv(&self, path: &Path, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_path(path)?;
        let mut header: Vec<String> = Vec::new();
        if self.ids.is_some() {
            header.push("id".into());
        }
        header.extend(self.feature_names.iter().cloned());
        header.push("y".into());
        header.push("c".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if let Some(ids) = &self.ids {
                rec.push(ids[i].clone());
            }
            rec.extend(self.features.row(i).iter().map(|v| format!("{v}")));
            rec.push(self.response_label(i));
            rec.push(self.confounder.label(i).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One cell of a joint (confounder, response) table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointCell {
    pub confounder: String,
    pub response: String,
    /// Proportion (after normalization) of the population in this cell.
    pub weight: f64,
}

/// Joint distribution of confounder level and response label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub cells: Vec<JointCell>,
}

impl JointTable {
    /// Normalizes nonnegative weights (counts or proportions) to sum to 1.
    pub fn from_weights(cells: Vec<JointCell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidParameter("joint table has no cells".into()));
        }
        if cells.iter().any(|c| !(c.weight >= 0.0) || !c.weight.is_finite()) {
            return Err(Error::InvalidParameter("joint table weights must be finite and nonnegative".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &cells {
            if !seen.insert((c.confounder.as_str(), c.response.as_str())) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate joint cell ({}, {})",
                    c.confounder, c.response
                )));
            }
        }
        let total: f64 = cells.iter().map(|c| c.weight).sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("joint table weights sum to zero".into()));
        }
        Ok(Self {
            cells: cells
                .into_iter()
                .map(|c| JointCell { weight: c.weight / total, ..c })
                .collect(),
        })
    }

    pub fn proportion(&self, confounder: &str, response: &str) -> f64 {
        self.cells
            .iter()
            .find(|c| c.confounder == confounder && c.response == response)
            .map_or(0.0, |c| c.weight)
    }

    /// The target used for a population in which the disease affects one
    /// third of people and is twice as common in men, with a 50/50 gender
    /// split: P(case|M) = 4/9 and P(case|F) = 2/9.
    pub fn two_to_one_prevalence(male: &str, female: &str, case: &str, control: &str) -> Self {
        let cell = |c: &str, r: &str, w: f64| JointCell {
            confounder: c.into(),
            response: r.into(),
            weight: w,
        };
        Self::from_weights(vec![
            cell(male, case, 2.0 / 9.0),
            cell(female, case, 1.0 / 9.0),
            cell(male, control, 5.0 / 18.0),
            cell(female, control, 7.0 / 18.0),
        ])
        .expect("valid fixed table")
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw: JointTable = serde_json::from_str(&text)?;
        Self::from_weights(raw.cells)
    }
}

/// Column roles and parsing options for [`load_table`].
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub feature_cols: Vec<String>,
    pub response_col: String,
    pub confounder_cols: Vec<String>,
    pub task: Task,
    pub positive_label: Option<String>,
    /// Binning applied to numeric confounder columns.
    pub bins: Option<Bins>,
    pub id_col: Option<String>,
    pub delimiter: u8,
}

impl Schema {
    pub fn new(feature_cols: Vec<String>, response_col: &str, confounder_cols: Vec<String>, task: Task) -> Self {
        Self {
            feature_cols,
            response_col: response_col.into(),
            confounder_cols,
            task,
            positive_label: None,
            bins: None,
            id_col: None,
            delimiter: b',',
        }
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na")
}

fn parse_real(cell: &str, column: &str, row: usize) -> Result<f64> {
    if is_missing(cell) {
        return Err(Error::MissingValue { column: column.into(), row });
    }
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("column `{column}` row {row}: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::MissingValue { column: column.into(), row });
    }
    Ok(v)
}

/// Reads a delimited text file with a header row into a [`Dataset`].
///
/// Confounder columns whose values are all numbers with a fractional part
/// are treated as continuous and need `schema.bins`; integer-coded columns
/// are categorical.
pub fn load_table(path: &Path, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Format("file is empty or has no header row".into()));
    }
    let find = |name: &str, role: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::schema(role, format!("column `{name}` not found in header")))
    };
    if schema.feature_cols.is_empty() {
        return Err(Error::schema("feature_cols", "at least one feature column required"));
    }
    if schema.confounder_cols.is_empty() {
        return Err(Error::schema("confounder_cols", "at least one confounder column required"));
    }
    let fcols: Vec<usize> = schema
        .feature_cols
        .iter()
        .map(|c| find(c, "feature_cols"))
        .collect::<Result<_>>()?;
    let ycol = find(&schema.response_col, "response_col")?;
    let ccols: Vec<usize> = schema
        .confounder_cols
        .iter()
        .map(|c| find(c, "confounder_cols"))
        .collect::<Result<_>>()?;
    let idcol = schema.id_col.as_deref().map(|c| find(c, "id_col")).transpose()?;

    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    let n = records.len();
    if n == 0 {
        return Err(Error::Format("file has a header but no data rows".into()));
    }
    let p = fcols.len();
    let mut feats = DMatrix::<f64>::zeros(n, p);
    let mut raw_y = Vec::with_capacity(n);
    let mut raw_c: Vec<Vec<String>> = vec![Vec::with_capacity(n); ccols.len()];
    let mut ids = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        let row = r + 1;
        let get = |j: usize| rec.get(j).unwrap_or("");
        for (k, &j) in fcols.iter().enumerate() {
            feats[(r, k)] = parse_real(get(j), &headers[j], row)?;
        }
        let y = get(ycol).trim();
        if is_missing(y) {
            return Err(Error::MissingValue { column: headers[ycol].clone(), row });
        }
        raw_y.push(y.to_string());
        for (k, &j) in ccols.iter().enumerate() {
            let v = get(j).trim();
            if v.is_empty() {
                return Err(Error::MissingValue { column: headers[j].clone(), row });
            }
            raw_c[k].push(v.to_string());
        }
        if let Some(j) = idcol {
            ids.push(get(j).trim().to_string());
        }
    }

    let mut encoded = Vec::with_capacity(ccols.len());
    for (k, values) in raw_c.iter().enumerate() {
        let name = &schema.confounder_cols[k];
        let numeric: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok()).collect();
        let continuous = numeric
            .as_ref()
            .is_some_and(|xs| xs.iter().any(|x| x.fract() != 0.0 || !x.is_finite()));
        encoded.push(match (&schema.bins, continuous) {
            (Some(bins), true) => discretize(numeric.as_ref().unwrap(), bins)?,
            (None, true) => {
                return Err(Error::schema(
                    "confounder_cols",
                    format!("confounder `{name}` is continuous; supply bins to discretize it"),
                ))
            }
            (_, false) => Categorical::from_labels(values),
        });
    }
    let confounder = combine_confounders(&encoded)?;

    let (response, labels) = match schema.task {
        Task::Regression => {
            let y = raw_y
                .iter()
                .enumerate()
                .map(|(r, v)| parse_real(v, &headers[ycol], r + 1))
                .collect::<Result<Vec<_>>>()?;
            (y, None)
        }
        Task::Classification => {
            let distinct: BTreeSet<&str> = raw_y.iter().map(String::as_str).collect();
            if distinct.len() != 2 {
                return Err(Error::Label(format!(
                    "classification response `{}` has {} distinct labels; exactly 2 required",
                    schema.response_col,
                    distinct.len()
                )));
            }
            let d: Vec<&str> = distinct.into_iter().collect();
            let positive = match &schema.positive_label {
                Some(pl) => {
                    if !d.contains(&pl.as_str()) {
                        return Err(Error::Label(format!("positive label `{pl}` does not occur in the response")));
                    }
                    pl.clone()
                }
                None => match (d[0].parse::<f64>(), d[1].parse::<f64>()) {
                    (Ok(a), Ok(b)) => (if a > b { d[0] } else { d[1] }).to_string(),
                    _ => d[1].to_string(),
                },
            };
            let negative = d.iter().find(|&&l| l != positive).unwrap().to_string();
            let y = raw_y.iter().map(|v| if *v == positive { 1.0 } else { 0.0 }).collect();
            (y, Some([negative, positive]))
        }
    };

    let mut ds = Dataset::new(feats, response, confounder, schema.task)?
        .with_feature_names(schema.feature_cols.clone())?;
    if let Some([neg, pos]) = &labels {
        ds = ds.with_labels(neg, pos);
    }
    if idcol.is_some() {
        ds = ds.with_ids(ids)?;
    }
    Ok(ds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    None,
    ByResponse,
    ByJoint,
}

/// Disjoint train and test row indexes, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndexes {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn cells(ds: &Dataset, stratify: Stratify) -> Vec<Vec<usize>> {
    let key = |i: usize| -> (u32, u64) {
        let c = ds.confounder().codes()[i];
        let y = match ds.task() {
            Task::Classification => ds.response()[i] as u64,
            Task::Regression => 0,
        };
        match stratify {
            Stratify::None => (0, 0),
            Stratify::ByResponse => (0, y),
            Stratify::ByJoint => (c, y),
        }
    };
    let mut groups: BTreeMap<(u32, u64), Vec<usize>> = BTreeMap::new();
    for i in 0..ds.n() {
        groups.entry(key(i)).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Largest-remainder allocation of `total` items proportional to `quotas`,
/// never exceeding `caps`.
fn largest_remainder(quotas: &[f64], caps: &[usize], total: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(caps)
        .map(|(&q, &cap)| (q.floor().max(0.0) as usize).min(cap))
        .collect();
    let mut rest = total.saturating_sub(alloc.iter().sum());
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in &order {
        if rest == 0 {
            break;
        }
        if alloc[k] < caps[k] {
            alloc[k] += 1;
            rest -= 1;
        }
    }
    alloc
}

/// Random stratified split with `round(test_fraction * n)` test rows.
pub fn split(ds: &Dataset, test_fraction: f64, stratify: Stratify, seed: u64) -> Result<SplitIndexes> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let size = (test_fraction * ds.n() as f64).round() as usize;
    split_with_test_size(ds, size, stratify, seed)
}

/// Random stratified split with exactly `test_size` test rows, each cell
/// contributing its proportional share to within one row.
pub fn split_with_test_size(ds: &Dataset, test_size: usize, stratify: Stratify, seed: u64) -> Result<SplitIndexes> {
    let n = ds.n();
    if test_size < 2 || test_size + 2 > n {
        return Err(Error::Split(format!(
            "test size {test_size} leaves fewer than 2 rows in a set (n = {n})"
        )));
    }
    let groups = cells(ds, stratify);
    let f = test_size as f64 / n as f64;
    let quotas: Vec<f64> = groups.iter().map(|g| g.len() as f64 * f).collect();
    let caps: Vec<usize> = groups.iter().map(Vec::len).collect();
    let alloc = largest_remainder(&quotas, &caps, test_size);
    let mut rng = RngStream::new(seed, 0).rng();
    let mut is_test = vec![false; n];
    for (group, &k) in groups.iter().zip(&alloc) {
        let mut g = group.clone();
        g.shuffle(&mut rng);
        for &i in &g[..k] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i]);
    if ds.task() == Task::Classification {
        for (name, set) in [("test", &test), ("train", &train)] {
            let pos = set.iter().filter(|&&i| ds.response()[i] == 1.0).count();
            if pos == 0 || pos == set.len() {
                return Err(Error::Split(format!(
                    "{name} set of {} rows would contain a single label",
                    set.len()
                )));
            }
        }
    }
    Ok(SplitIndexes { train, test })
}

/// Largest subsample whose (confounder, response) proportions match
/// `target` to within one row per cell. Rows are drawn uniformly within
/// cells and returned in their original order.
pub fn subsample_to_joint(ds: &Dataset, target: &JointTable, seed: u64) -> Result<Dataset> {
    let idx = subsample_indexes(ds, target, seed)?;
    Ok(ds.subset(&idx))
}

/// Row indexes chosen by [`subsample_to_joint`], ascending.
pub fn subsample_indexes(ds: &Dataset, target: &JointTable, seed: u64) -> Result<Vec<usize>> {
    if ds.task() != Task::Classification {
        return Err(Error::Subsample("joint matching needs a classification response".into()));
    }
    let mut by_cell: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for i in 0..ds.n() {
        by_cell
            .entry((ds.confounder().label(i).to_string(), ds.response_label(i)))
            .or_default()
            .push(i);
    }
    let positive: Vec<&JointCell> = target.cells.iter().filter(|c| c.weight > 0.0).collect();
    let mut sources = Vec::with_capacity(positive.len());
    for cell in &positive {
        let rows = by_cell
            .get(&(cell.confounder.clone(), cell.response.clone()))
            .filter(|r| !r.is_empty())
            .ok_or_else(|| {
                Error::Subsample(format!(
                    "target cell ({}, {}) has positive weight but no source rows",
                    cell.confounder, cell.response
                ))
            })?;
        sources.push(rows);
    }
    let n_max = positive
        .iter()
        .zip(&sources)
        .map(|(cell, rows)| (rows.len() as f64 / cell.weight + 1e-9).floor() as usize)
        .min()
        .unwrap_or(0);
    let quotas: Vec<f64> = positive.iter().map(|c| c.weight * n_max as f64).collect();
    let caps: Vec<usize> = sources.iter().map(|r| r.len()).collect();
    let alloc = largest_remainder(&quotas, &caps, n_max);
    let mut rng = RngStream::new(seed, 1).rng();
    let mut chosen = Vec::with_capacity(n_max);
    for (rows, &k) in sources.iter().zip(&alloc) {
        let mut r = (*rows).clone();
        r.shuffle(&mut rng);
        chosen.extend_from_slice(&r[..k]);
    }
    chosen.sort_unstable();
    if chosen.len() < 2 {
        return Err(Error::Subsample("matched subsample has fewer than 2 rows".into()));
    }
    Ok(chosen)
}
