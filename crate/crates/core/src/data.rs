//! Count dataset ingestion.
//!
//! Two plain-text layouts are accepted, detected from the column count of
//! the first data line:
//!
//! * one nonnegative integer per line;
//! * `value<TAB>count` frequency pairs (any whitespace separates columns).
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::SufficientStats;

/// Environment variable overriding the directory of bundled datasets.
pub const DATA_DIR_ENV: &str = "COMPRIOR_DATA_DIR";

/// Bundled illustration datasets: `(name, file name, expected n)`.
pub const BUNDLED: [(&str, &str, u64); 4] = [
    ("textile-faults", "textile-faults.txt", 32),
    ("crab-satellites", "crab-satellites.tsv", 173),
    ("slovak-poem", "slovak-poem.tsv", 117),
    ("hungarian-words", "hungarian-words.tsv", 57_459),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountData {
    Flat(Vec<u64>),
    /// `(value, count)` pairs with `count > 0`.
    Frequency(Vec<(u64, u64)>),
}

impl CountData {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            CountData::Flat(xs) => xs.clone(),
            CountData::Frequency(pairs) => pairs
                .iter()
                .flat_map(|&(v, c)| std::iter::repeat_n(v, c as usize))
                .collect(),
        }
    }

    pub fn len(&self) -> u64 {
        match self {
            CountData::Flat(xs) => xs.len() as u64,
            CountData::Frequency(pairs) => pairs.iter().map(|&(_, c)| c).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> Result<SufficientStats> {
        match self {
            CountData::Flat(xs) => SufficientStats::from_data(xs),
            CountData::Frequency(pairs) if !pairs.is_empty() => {
                Ok(SufficientStats::from_frequencies(pairs.iter().copied()))
            }
            CountData::Frequency(_) => Err(Error::EmptyData),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountDataset {
    pub name: String,
    pub data: CountData,
}

impl CountDataset {
    pub fn new(name: impl Into<String>, data: CountData) -> Self {
        Self {
            name: name.into(),
            data,
        }
    }

    pub fn stats(&self) -> Result<SufficientStats> {
        self.data.stats()
    }
}

fn parse_count(field: &str, what: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    match field.parse::<i128>() {
        Ok(v) if v < 0 => Err(format!("negative {what} '{field}'")),
        Ok(_) => Err(format!("{what} '{field}' is out of range")),
        Err(_) => Err(format!("{what} '{field}' is not a nonnegative integer")),
    }
}

/// Parses dataset text. `path` is only used in error messages.
pub fn parse_dataset(name: &str, text: &str, path: &Path) -> Result<CountDataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut flat = Vec::new();
    let mut pairs = Vec::new();
    let mut columns = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let expected = *columns.get_or_insert(fields.len());
        if fields.len() != expected || !(1..=2).contains(&fields.len()) {
            return Err(err(
                lineno,
                format!("expected {expected} column(s), found {}", fields.len()),
            ));
        }
        let value = parse_count(fields[0], "value").map_err(|m| err(lineno, m))?;
        if expected == 1 {
            flat.push(value);
        } else {
            let count = parse_count(fields[1], "count").map_err(|m| err(lineno, m))?;
            if count == 0 {
                return Err(err(lineno, "frequency count must be positive".into()));
            }
            pairs.push((value, count));
        }
    }

    let data = match columns {
        Some(2) => CountData::Frequency(pairs),
        _ => CountData::Flat(flat),
    };
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(CountDataset::new(name, data))
}

/// Loads a dataset file; its name is the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<CountDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_dataset(&name, &text, path)
}

/// Directory of bundled datasets: `$COMPRIOR_DATA_DIR` if set, otherwise the
/// repository's `data/` directory.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

/// Path of a bundled dataset by name, if the file is present.
pub fn bundled_path(name: &str) -> Option<PathBuf> {
    let (_, file, _) = BUNDLED.iter().find(|(n, _, _)| *n == name)?;
    let path = data_dir().join(file);
    path.is_file().then_some(path)
}

/// Resolves a CLI dataset argument: an existing file path, or the name of a
/// bundled dataset.
pub fn resolve_dataset(arg: &str) -> Result<CountDataset> {
    let path = Path::new(arg);
    if path.is_file() {
        return load_dataset(path);
    }
    match bundled_path(arg) {
        Some(p) => {
            let mut ds = load_dataset(p)?;
            ds.name = arg.to_string();
            Ok(ds)
        }
        None => Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "'{arg}' is neither a readable file nor a bundled dataset present in {}",
                data_dir().display()
            ),
        ))),
    }
}
