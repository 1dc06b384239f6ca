//! Reader for the published UCI HAR text layout.
//!
//! A split directory `<root>/<split>/` holds `X_<split>.txt` (one whitespace
//! separated row of features per record), `y_<split>.txt` (activity codes) and
//! `subject_<split>.txt` (volunteer ids). The feature names come from
//! `features.txt`, looked up first in the split directory and then in its parent.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{ActivityLabel, DataError, LabeledDataset, TestSplit, TrainSplit};

pub const HAR_FEATURES: usize = 561;

/// Load the train and test splits and validate both.
pub fn load_har_split(train_dir: &Path, test_dir: &Path) -> Result<(TrainSplit, TestSplit), DataError> {
    let train = load_split_dir(train_dir)?;
    let test = load_split_dir(test_dir)?;
    if train.n_features() != test.n_features() {
        return Err(DataError::DimensionMismatch {
            expected: train.n_features(),
            found: test.n_features(),
        });
    }
    Ok((TrainSplit::new(train), TestSplit::new(test)))
}

/// Load `<root>/train` and `<root>/test`.
pub fn load_har_root(root: &Path) -> Result<(TrainSplit, TestSplit), DataError> {
    load_har_split(&root.join("train"), &root.join("test"))
}

/// Files making up one split directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitFiles {
    pub features: PathBuf,
    pub labels: PathBuf,
    pub subjects: PathBuf,
    pub feature_names: PathBuf,
}

pub fn locate_split_files(dir: &Path) -> Result<SplitFiles, DataError> {
    let split = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let features = find_prefixed(dir, "X_", &split)?;
    let labels = find_prefixed(dir, "y_", &split)?;
    let subjects = find_prefixed(dir, "subject_", &split)?;
    let local = dir.join("features.txt");
    let feature_names = if local.is_file() {
        local
    } else {
        let parent = dir.parent().map(|p| p.join("features.txt"));
        match parent {
            Some(p) if p.is_file() => p,
            _ => return Err(DataError::MissingFile { path: local }),
        }
    };
    Ok(SplitFiles {
        features,
        labels,
        subjects,
        feature_names,
    })
}

fn find_prefixed(dir: &Path, prefix: &str, split: &str) -> Result<PathBuf, DataError> {
    let exact = dir.join(format!("{prefix}{split}.txt"));
    if exact.is_file() {
        return Ok(exact);
    }
    let entries = fs::read_dir(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut hits: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix) && n.ends_with(".txt"))
        })
        .collect();
    hits.sort();
    match hits.len() {
        1 => Ok(hits.remove(0)),
        _ => Err(DataError::MissingFile { path: exact }),
    }
}

pub fn load_split_dir(dir: &Path) -> Result<LabeledDataset, DataError> {
    let files = locate_split_files(dir)?;
    let names = parse_feature_names(&files.feature_names)?;
    let features = parse_feature_matrix(&files.features, names.len())?;
    let labels = parse_labels(&files.labels)?;
    let subjects = parse_subjects(&files.subjects)?;
    if labels.len() != features.nrows() {
        return Err(DataError::RowCountMismatch {
            what: "labels",
            expected: features.nrows(),
            found: labels.len(),
        });
    }
    LabeledDataset::new(features, labels, subjects, names)
}

fn read(path: &Path) -> Result<String, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile { path: path.to_path_buf() });
    }
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_feature_names(path: &Path) -> Result<Vec<String>, DataError> {
    let text = read(path)?;
    Ok(content_lines(&text)
        .map(|(_, line)| match line.split_once(char::is_whitespace) {
            Some((_, name)) => name.trim().to_string(),
            None => line.to_string(),
        })
        .collect())
}

/// Parse a feature matrix with exactly `width` values per line. Values must be
/// finite and lie in `[-1, 1]`, as in the published normalized features.
pub fn parse_feature_matrix(path: &Path, width: usize) -> Result<Array2<f64>, DataError> {
    let text = read(path)?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (line_no, line) in content_lines(&text) {
        let start = values.len();
        for token in line.split_ascii_whitespace() {
            let v: f64 = token.parse().map_err(|_| DataError::ParseNumber {
                path: path.to_path_buf(),
                line: line_no,
                token: token.to_string(),
            })?;
            let column = values.len() - start;
            if !v.is_finite() {
                return Err(DataError::NonFiniteInFile {
                    path: path.to_path_buf(),
                    line: line_no,
                    column,
                });
            }
            if !(-1.0..=1.0).contains(&v) {
                return Err(DataError::OutOfUnitRange {
                    path: path.to_path_buf(),
                    line: line_no,
                    column,
                    value: v,
                });
            }
            values.push(v);
        }
        let found = values.len() - start;
        if found != width {
            return Err(DataError::ColumnCount {
                path: path.to_path_buf(),
                line: line_no,
                expected: width,
                found,
            });
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, width), values).expect("row widths checked"))
}

fn parse_integers(path: &Path) -> Result<Vec<(usize, i64)>, DataError> {
    let text = read(path)?;
    content_lines(&text)
        .map(|(line_no, line)| {
            // Accept "5" as well as "5.0000000e+000".
            let parsed = line
                .parse::<i64>()
                .ok()
                .or_else(|| line.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64));
            parsed.map(|v| (line_no, v)).ok_or_else(|| DataError::ParseNumber {
                path: path.to_path_buf(),
                line: line_no,
                token: line.to_string(),
            })
        })
        .collect()
}

pub fn parse_labels(path: &Path) -> Result<Vec<ActivityLabel>, DataError> {
    parse_integers(path)?
        .into_iter()
        .map(|(line, value)| {
            ActivityLabel::from_code(value).ok_or(DataError::LabelOutOfRange {
                path: path.to_path_buf(),
                line,
                value,
            })
        })
        .collect()
}

pub fn parse_subjects(path: &Path) -> Result<Vec<u16>, DataError> {
    parse_integers(path)?
        .into_iter()
        .map(|(line, value)| {
            if (1..=i64::from(super::dataset::MAX_SUBJECT)).contains(&value) {
                Ok(value as u16)
            } else {
                Err(DataError::SubjectOutOfRange {
                    path: path.to_path_buf(),
                    line,
                    value,
                })
            }
        })
        .collect()
}

/// Write a dataset in the published layout under `dir/<split>/`, with
/// `features.txt` in `dir`. Values use the right-aligned scientific notation
/// of the original files.
pub fn write_har_layout(dir: &Path, split: &str, ds: &LabeledDataset) -> Result<(), DataError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DataError::Io { path, source }
    };
    let split_dir = dir.join(split);
    fs::create_dir_all(&split_dir).map_err(io(&split_dir))?;

    let names: String = ds
        .feature_names()
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{} {}\n", i + 1, n))
        .collect();
    let names_path = dir.join("features.txt");
    fs::write(&names_path, names).map_err(io(&names_path))?;

    let mut x = String::new();
    for row in ds.features().outer_iter() {
        for v in row {
            x.push_str(&format!(" {v:>15.7e}"));
        }
        x.push('\n');
    }
    let x_path = split_dir.join(format!("X_{split}.txt"));
    fs::write(&x_path, x).map_err(io(&x_path))?;

    let y: String = ds.labels().iter().map(|l| format!("{}\n", l.code())).collect();
    let y_path = split_dir.join(format!("y_{split}.txt"));
    fs::write(&y_path, y).map_err(io(&y_path))?;

    let s: String = ds.subjects().iter().map(|s| format!("{s}\n")).collect();
    let s_path = split_dir.join(format!("subject_{split}.txt"));
    fs::write(&s_path, s).map_err(io(&s_path))?;
    Ok(())
}
