//! Tabular dataset with a binary label, binary sensitive columns and row weights.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Records which pipeline stage read the labels of a dataset.
///
/// Attach one to a split with [`Dataset::with_audit`]; every call to
/// [`Dataset::labels`] on that split (or anything derived from it) is logged
/// against the stage most recently set with [`LabelAudit::enter`].
#[derive(Debug, Default)]
pub struct LabelAudit {
    stage: Mutex<String>,
    reads: Mutex<Vec<String>>,
}

impl LabelAudit {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn enter(&self, stage: &str) {
        *self.stage.lock().unwrap() = stage.to_string();
    }

    /// Stages in which labels were read, in order of access.
    pub fn reads(&self) -> Vec<String> {
        self.reads.lock().unwrap().clone()
    }

    fn record(&self) {
        let stage = self.stage.lock().unwrap().clone();
        self.reads.lock().unwrap().push(stage);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveColumn {
    pub name: String,
    pub values: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    n: usize,
    feature_names: Vec<String>,
    label: Vec<u8>,
    sensitive: Vec<SensitiveColumn>,
    weights: Vec<f64>,
    audit: Option<Arc<LabelAudit>>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.features == other.features
            && self.feature_names == other.feature_names
            && self.label == other.label
            && self.sensitive == other.sensitive
            && self.weights == other.weights
    }
}

fn check_binary(what: &str, values: &[u8]) -> Result<()> {
    match values.iter().position(|&v| v > 1) {
        Some(i) => Err(Error::InvalidDataset(format!(
            "{what} must be 0/1, found {} at row {i}",
            values[i]
        ))),
        None => Ok(()),
    }
}

impl Dataset {
    /// Builds a dataset from row-major features. Weights default to 1.
    pub fn new(
        rows: Vec<Vec<f64>>,
        feature_names: Vec<String>,
        label: Vec<u8>,
        sensitive: Vec<(String, Vec<u8>)>,
    ) -> Result<Self> {
        let d = feature_names.len();
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} features, expected {d}",
                rows[i].len()
            )));
        }
        let features = rows.into_iter().flatten().collect();
        Self::from_flat(features, feature_names, label, sensitive)
    }

    pub fn from_flat(
        features: Vec<f64>,
        feature_names: Vec<String>,
        label: Vec<u8>,
        sensitive: Vec<(String, Vec<u8>)>,
    ) -> Result<Self> {
        let n = label.len();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if features.len() != n * feature_names.len() {
            return Err(Error::InvalidDataset(format!(
                "feature matrix has {} entries, expected {n}x{}",
                features.len(),
                feature_names.len()
            )));
        }
        check_binary("label", &label)?;
        if sensitive.is_empty() {
            return Err(Error::InvalidDataset(
                "at least one sensitive column is required".into(),
            ));
        }
        let mut columns = Vec::with_capacity(sensitive.len());
        for (name, values) in sensitive {
            if values.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "sensitive column `{name}` has {} rows, expected {n}",
                    values.len()
                )));
            }
            check_binary(&format!("sensitive column `{name}`"), &values)?;
            if columns.iter().any(|c: &SensitiveColumn| c.name == name) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate sensitive column `{name}`"
                )));
            }
            columns.push(SensitiveColumn { name, values });
        }
        Ok(Self {
            features,
            n,
            feature_names,
            label,
            sensitive: columns,
            weights: vec![1.0; n],
            audit: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n {
            return Err(Error::InvalidDataset(format!(
                "{} weights for {} rows",
                weights.len(),
                self.n
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDataset(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidDataset("all weights are zero".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_audit(mut self, audit: Arc<LabelAudit>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn audit(&self) -> Option<&Arc<LabelAudit>> {
        self.audit.as_ref()
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Labels. Reads are logged when an audit is attached.
    pub fn labels(&self) -> &[u8] {
        if let Some(audit) = &self.audit {
            audit.record();
        }
        &self.label
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sensitive_columns(&self) -> &[SensitiveColumn] {
        &self.sensitive
    }

    pub fn sensitive_names(&self) -> Vec<&str> {
        self.sensitive.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn sensitive(&self, name: &str) -> Result<&[u8]> {
        self.sensitive
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Adds (or replaces) a sensitive column.
    pub fn with_sensitive(mut self, name: &str, values: Vec<u8>) -> Result<Self> {
        if values.len() != self.n {
            return Err(Error::InvalidDataset(format!(
                "sensitive column `{name}` has {} rows, expected {}",
                values.len(),
                self.n
            )));
        }
        check_binary(&format!("sensitive column `{name}`"), &values)?;
        match self.sensitive.iter_mut().find(|c| c.name == name) {
            Some(col) => col.values = values,
            None => self.sensitive.push(SensitiveColumn {
                name: name.to_string(),
                values,
            }),
        }
        Ok(self)
    }

    /// Replaces the feature matrix, keeping shape and every other column.
    pub fn with_features(mut self, features: Vec<f64>) -> Result<Self> {
        if features.len() != self.features.len() {
            return Err(Error::InvalidDataset("feature matrix shape changed".into()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        self.features = features;
        Ok(self)
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.n_features();
        let mut features = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            n: indices.len(),
            feature_names: self.feature_names.clone(),
            label: indices.iter().map(|&i| self.label[i]).collect(),
            sensitive: self
                .sensitive
                .iter()
                .map(|c| SensitiveColumn {
                    name: c.name.clone(),
                    values: indices.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            audit: self.audit.clone(),
        }
    }

    /// Writes the canonical CSV layout: features, `sens_<name>` columns,
    /// `label`, `weight`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.feature_names.clone();
        header.extend(self.sensitive.iter().map(|c| format!("sens_{}", c.name)));
        header.push("label".into());
        header.push("weight".into());
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut record: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            record.extend(self.sensitive.iter().map(|c| c.values[i].to_string()));
            record.push(self.label[i].to_string());
            record.push(self.weights[i].to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let mut feature_idx = Vec::new();
        let mut sens_idx = Vec::new();
        let (mut label_idx, mut weight_idx) = (None, None);
        for (j, h) in header.iter().enumerate() {
            match h {
                "label" => label_idx = Some(j),
                "weight" => weight_idx = Some(j),
                _ => match h.strip_prefix("sens_") {
                    Some(name) => sens_idx.push((name.to_string(), j)),
                    None => feature_idx.push(j),
                },
            }
        }
        let label_idx =
            label_idx.ok_or_else(|| Error::InvalidDataset("missing `label` column".into()))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut weights = Vec::new();
        let mut sens: Vec<Vec<u8>> = vec![Vec::new(); sens_idx.len()];
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let field = |j: usize| record.get(j).unwrap_or("");
            let bad = |j: usize| Error::Malformed {
                row: row + 1,
                message: format!("cannot parse `{}` in column `{}`", field(j), &header[j]),
            };
            for &j in &feature_idx {
                features.push(field(j).parse::<f64>().map_err(|_| bad(j))?);
            }
            for (k, (_, j)) in sens_idx.iter().enumerate() {
                sens[k].push(field(*j).parse::<u8>().map_err(|_| bad(*j))?);
            }
            labels.push(field(label_idx).parse::<u8>().map_err(|_| bad(label_idx))?);
            if let Some(j) = weight_idx {
                weights.push(field(j).parse::<f64>().map_err(|_| bad(j))?);
            }
        }
        let names = feature_idx.iter().map(|&j| header[j].to_string()).collect();
        let sensitive = sens_idx.into_iter().map(|(n, _)| n).zip(sens).collect();
        let data = Self::from_flat(features, names, labels, sensitive)?;
        if weight_idx.is_some() {
            data.with_weights(weights)
        } else {
            Ok(data)
        }
    }
}

/// Split sizes by largest remainder so that they sum to `n`.
fn part_sizes(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, r) in sizes.iter_mut().zip(&raw) {
        *s = r.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (raw[a] - raw[a].floor(), raw[b] - raw[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = n - sizes.iter().sum::<usize>();
    for &p in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[p] += 1;
        left -= 1;
    }
    sizes
}

/// Stratified train/validation/test split.
///
/// Strata are the distinct (label, sensitive columns...) combinations. Every
/// stratum with at least three rows contributes at least one row to train.
/// Output rows keep their original relative order.
pub fn split(
    data: &Dataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidParameter(
            "split fractions must be positive".into(),
        ));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions sum to {}, expected 1",
            fractions.iter().sum::<f64>()
        )));
    }
    let n = data.n_rows();
    let totals = part_sizes(n, &fractions);
    if n < 3 || totals.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "{n} rows cannot give every split at least one row"
        )));
    }

    let mut strata: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let mut key = vec![data.label[i]];
        key.extend(data.sensitive.iter().map(|c| c.values[i]));
        strata.entry(key).or_default().push(i);
    }

    // Floor allocation per stratum, then hand out the leftovers by largest
    // fractional remainder subject to the global part sizes.
    let strata: Vec<Vec<usize>> = strata.into_values().collect();
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(strata.len());
    let mut remainders = Vec::new();
    for (s, rows) in strata.iter().enumerate() {
        let c = rows.len();
        let mut a = [0usize; 3];
        for p in 0..3 {
            let exact = c as f64 * fractions[p];
            a[p] = exact.floor() as usize;
            remainders.push((exact - exact.floor(), s, p));
        }
        if c >= 3 && a[0] == 0 {
            a[0] = 1;
        }
        alloc.push(a);
    }
    let mut need: [isize; 3] = [0; 3];
    for p in 0..3 {
        need[p] = totals[p] as isize - alloc.iter().map(|a| a[p] as isize).sum::<isize>();
    }
    let mut left: Vec<usize> = strata
        .iter()
        .zip(&alloc)
        .map(|(rows, a)| rows.len() - a.iter().sum::<usize>())
        .collect();
    remainders.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then((a.1, a.2).cmp(&(b.1, b.2)))
    });
    for &(_, s, p) in &remainders {
        if left[s] > 0 && need[p] > 0 {
            alloc[s][p] += 1;
            left[s] -= 1;
            need[p] -= 1;
        }
    }
    for s in 0..strata.len() {
        while left[s] > 0 {
            let p = (0..3)
                .max_by_key(|&p| (need[p], std::cmp::Reverse(p)))
                .unwrap();
            alloc[s][p] += 1;
            left[s] -= 1;
            need[p] -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (rows, a) in strata.iter().zip(&alloc) {
        let mut rows = rows.clone();
        rows.shuffle(&mut rng);
        let mut it = rows.into_iter();
        for p in 0..3 {
            parts[p].extend(it.by_ref().take(a[p]));
        }
    }
    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    Ok((
        data.subset(&parts[0]),
        data.subset(&parts[1]),
        data.subset(&parts[2]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let rows = (0..n).map(|i| vec![i as f64]).collect();
        let label = (0..n).map(|i| (i % 2) as u8).collect();
        let a = (0..n).map(|i| ((i / 2) % 2) as u8).collect();
        Dataset::new(rows, vec!["x".into()], label, vec![("a".into(), a)]).unwrap()
    }

    #[test]
    fn rejects_non_binary_columns() {
        let err = Dataset::new(
            vec![vec![0.0]],
            vec!["x".into()],
            vec![2],
            vec![("a".into(), vec![0])],
        );
        assert!(err.is_err());
        let err = Dataset::new(
            vec![vec![0.0]],
            vec!["x".into()],
            vec![1],
            vec![("a".into(), vec![3])],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(toy(4).with_weights(vec![0.0; 4]).is_err());
        assert!(toy(4).with_weights(vec![1.0, -1.0, 1.0, 1.0]).is_err());
        assert!(toy(4).with_weights(vec![1.0, f64::NAN, 1.0, 1.0]).is_err());
    }

    #[test]
    fn split_sizes_are_proportional() {
        let (tr, va, te) = split(&toy(10), [0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!((tr.n_rows(), va.n_rows(), te.n_rows()), (6, 2, 2));
    }

    #[test]
    fn split_is_deterministic() {
        let a = split(&toy(50), [0.6, 0.2, 0.2], 7).unwrap();
        let b = split(&toy(50), [0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn split_stratifies_cells() {
        // 4 rows per (Y, A) cell.
        let data = toy(16);
        let (tr, va, te) = split(&data, [0.5, 0.25, 0.25], 3).unwrap();
        for (part, want) in [(&tr, 2), (&va, 1), (&te, 1)] {
            for y in 0..2u8 {
                for a in 0..2u8 {
                    let s = part.sensitive("a").unwrap();
                    let count = (0..part.n_rows())
                        .filter(|&i| part.label[i] == y && s[i] == a)
                        .count();
                    assert_eq!(count, want, "cell y={y} a={a}");
                }
            }
        }
    }

    #[test]
    fn split_errors() {
        assert!(split(&toy(10), [0.5, 0.2, 0.2], 0).is_err());
        assert!(split(&toy(2), [0.4, 0.3, 0.3], 0).is_err());
        assert!(split(&toy(10), [1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let data = toy(6)
            .with_weights(vec![0.5, 1.0, 2.0, 1.5, 0.25, 3.0])
            .unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,sens_a,label,weight\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }
}
