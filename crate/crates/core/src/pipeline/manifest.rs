//! CSV dataset manifests: `path,label,dataset,split`.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "eval" => Ok(Split::Eval),
            _ => Err(Error::Unknown {
                kind: "split",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Path as written in the manifest.
    pub path: String,
    pub label: Label,
    pub dataset: String,
    pub split: Split,
    /// 1-based line number in the manifest file (the header is line 1).
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
struct Row {
    path: String,
    label: String,
    dataset: String,
    split: String,
}

const HEADER: [&str; 4] = ["path", "label", "dataset", "split"];

impl DatasetManifest {
    pub fn parse(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_str(&text, base)
    }

    pub fn parse_str(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        if header != HEADER {
            return Err(Error::Manifest {
                line: 1,
                msg: format!("header must be `{}`, got `{}`", HEADER.join(","), header.join(",")),
            });
        }
        let mut records = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Manifest { line, msg: e.to_string() })?;
            if row.path.is_empty() || row.dataset.is_empty() {
                return Err(Error::Manifest {
                    line,
                    msg: "empty path or dataset tag".into(),
                });
            }
            let label = row.label.parse::<Label>().map_err(|_| Error::Manifest {
                line,
                msg: format!("label `{}` is not REAL or FAKE", row.label),
            })?;
            let split = row.split.parse::<Split>().map_err(|_| Error::Manifest {
                line,
                msg: format!("split `{}` is not train, dev or eval", row.split),
            })?;
            if let Some(first) = seen.insert(row.path.clone(), line) {
                return Err(Error::Manifest {
                    line,
                    msg: format!("duplicate path `{}` (first listed on line {first})", row.path),
                });
            }
            records.push(SampleRecord {
                path: row.path,
                label,
                dataset: row.dataset,
                split,
                line,
            });
        }
        if records.is_empty() {
            return Err(Error::Manifest {
                line: 1,
                msg: "manifest has no rows".into(),
            });
        }
        Ok(Self { records, base_dir })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.records {
            w.write_record([r.path.as_str(), &r.label.to_string(), &r.dataset, r.split.name()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn resolve(&self, record: &SampleRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn split(&self, split: Split) -> Vec<&SampleRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    /// Keeps only rows tagged with `dataset`.
    pub fn filter_dataset(&self, dataset: &str) -> Result<Self> {
        let records: Vec<SampleRecord> = self.records.iter().filter(|r| r.dataset == dataset).cloned().collect();
        if records.is_empty() {
            return Err(Error::InvalidArgument(format!("no rows tagged `{dataset}`")));
        }
        Ok(Self {
            records,
            base_dir: self.base_dir.clone(),
        })
    }

    pub fn datasets(&self) -> Vec<String> {
        let mut d: Vec<String> = self.records.iter().map(|r| r.dataset.clone()).collect();
        d.sort();
        d.dedup();
        d
    }
}
