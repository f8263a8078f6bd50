use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::EvalError;
use crate::linalg::Matrix;

/// Feature rows with an optional target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Option<Vec<f64>>,
    pub names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Option<Vec<f64>>, names: Vec<String>) -> Result<Self, EvalError> {
        if names.len() != features.cols() {
            return Err(EvalError::Shape(format!("{} names for {} columns", names.len(), features.cols())));
        }
        if let Some(y) = &labels {
            if y.len() != features.rows() {
                return Err(EvalError::Shape(format!("{} labels for {} rows", y.len(), features.rows())));
            }
        }
        Ok(Self { features, labels, names })
    }

    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    pub fn cols(&self) -> usize {
        self.features.cols()
    }

    /// Labels are present and all in `{0, 1}`.
    pub fn is_binary(&self) -> bool {
        self.labels.as_ref().is_some_and(|y| y.iter().all(|&v| v == 0.0 || v == 1.0))
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset, EvalError> {
        Ok(Dataset {
            features: self.features.select_rows(idx)?,
            labels: self.labels.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect()),
            names: self.names.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: bool,
    /// Header name of the target column; without a header, `c<index>`.
    pub label: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { delimiter: b',', header: true, label: None }
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset, EvalError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, opts)
}

pub fn read_csv<R: std::io::Read>(input: R, opts: &CsvOptions) -> Result<Dataset, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut header: Option<Vec<String>> = if opts.header {
        Some(reader.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut width = header.as_ref().map(Vec::len);
    let mut cells = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        let row = rows + 1;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(EvalError::Ragged { row, expected: w, found: record.len() });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| EvalError::Parse { row, col: c + 1, cell: cell.to_string() })?;
            if !v.is_finite() {
                return Err(EvalError::Parse { row, col: c + 1, cell: cell.to_string() });
            }
            cells.push(v);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    if rows == 0 || width == 0 {
        return Err(EvalError::Empty);
    }
    let names = header.take().unwrap_or_else(|| (0..width).map(|c| format!("c{c}")).collect());
    let label_col = match &opts.label {
        Some(name) => Some(names.iter().position(|n| n == name).ok_or_else(|| EvalError::MissingLabel(name.clone()))?),
        None => None,
    };
    let keep: Vec<usize> = (0..width).filter(|&c| Some(c) != label_col).collect();
    if keep.is_empty() {
        return Err(EvalError::Empty);
    }
    let features = Matrix::from_fn(rows, keep.len(), |r, c| cells[r * width + keep[c]])?;
    let labels = label_col.map(|l| (0..rows).map(|r| cells[r * width + l]).collect());
    Dataset::new(features, labels, keep.iter().map(|&c| names[c].clone()).collect())
}

/// Shuffles `0..n` and cuts it into `parts` runs whose lengths differ by at
/// most one, longer runs first.
pub fn partition_indices(n: usize, parts: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if parts == 0 || n < parts {
        return Err(EvalError::Partition(format!("cannot split {n} rows into {parts} parts")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let (base, extra) = (n / parts, n % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

pub fn partition_horizontal(ds: &Dataset, parts: usize, seed: u64) -> Result<Vec<Dataset>, EvalError> {
    if parts < 2 {
        return Err(EvalError::Partition(format!("need at least 2 parts, got {parts}")));
    }
    partition_indices(ds.rows(), parts, seed)?.iter().map(|idx| ds.subset(idx)).collect()
}

pub fn write_matrix_csv<W: std::io::Write>(out: W, m: &Matrix, names: Option<&[String]>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(names) = names {
        w.write_record(names)?;
    }
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}
