//! Generic evaluation manifests.
//!
//! Two CSV shapes are recognized by their header:
//!
//! * scores: `ref_path,test_path,subjective,polarity,group_id`
//! * votes: `group_id,test_path,votes` with an optional trailing `ref_path`
//!
//! Paths are resolved relative to the manifest's directory. Rows whose image
//! files do not exist are skipped and counted.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCORES_HEADER: [&str; 5] = ["ref_path", "test_path", "subjective", "polarity", "group_id"];
pub const VOTES_HEADER: [&str; 3] = ["group_id", "test_path", "votes"];

/// Direction of the subjective scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    /// MOS-like: larger is better quality.
    HigherBetter,
    /// DMOS-like: larger is worse quality.
    LowerBetter,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::HigherBetter => "higher",
            Polarity::LowerBetter => "lower",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "higher" | "higherbetter" | "higher_better" | "mos" => Some(Polarity::HigherBetter),
            "lower" | "lowerbetter" | "lower_better" | "dmos" => Some(Polarity::LowerBetter),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub ref_path: PathBuf,
    pub test_path: PathBuf,
    pub subjective: f64,
    pub polarity: Polarity,
    pub group_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub group_id: String,
    pub test_path: PathBuf,
    pub votes: u64,
    /// Source image of the group, when the manifest names it.
    pub ref_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Manifest {
    Scores(Vec<EvalRecord>),
    Votes(Vec<VoteRecord>),
}

impl Manifest {
    pub fn len(&self) -> usize {
        match self {
            Manifest::Scores(r) => r.len(),
            Manifest::Votes(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattens into evaluation records. Vote rows become `HigherBetter`
    /// records grouped by `group_id`; each needs a `ref_path`.
    pub fn into_eval_records(self) -> Result<Vec<EvalRecord>> {
        match self {
            Manifest::Scores(r) => Ok(r),
            Manifest::Votes(votes) => votes
                .into_iter()
                .map(|v| {
                    let ref_path = v.ref_path.ok_or_else(|| Error::Manifest {
                        path: v.test_path.clone(),
                        message: format!("vote row in group {} has no ref_path", v.group_id),
                    })?;
                    Ok(EvalRecord {
                        ref_path,
                        test_path: v.test_path,
                        subjective: v.votes as f64,
                        polarity: Polarity::HigherBetter,
                        group_id: Some(v.group_id),
                    })
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    /// Rows dropped because an image file was missing.
    pub skipped: usize,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let bad = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };

    let loaded = if header == SCORES_HEADER {
        let mut records = Vec::new();
        let mut skipped = 0;
        for (line, row) in reader.records().enumerate() {
            let row = row?;
            let at = |m: String| bad(format!("row {}: {m}", line + 2));
            let subjective: f64 = row[2].parse().map_err(|_| at(format!("bad subjective {:?}", &row[2])))?;
            if !subjective.is_finite() {
                return Err(at("subjective score not finite".into()));
            }
            let polarity = Polarity::parse(&row[3]).ok_or_else(|| at(format!("bad polarity {:?}", &row[3])))?;
            let ref_path = base.join(&row[0]);
            let test_path = base.join(&row[1]);
            if !present(&ref_path, &test_path) {
                skipped += 1;
                continue;
            }
            records.push(EvalRecord {
                ref_path,
                test_path,
                subjective,
                polarity,
                group_id: Some(row[4].to_string()).filter(|g| !g.is_empty()),
            });
        }
        LoadedManifest {
            manifest: Manifest::Scores(records),
            skipped,
        }
    } else if header[..] == VOTES_HEADER[..] || (header.len() == 4 && header[..3] == VOTES_HEADER && header[3] == "ref_path") {
        let mut records = Vec::new();
        let mut skipped = 0;
        for (line, row) in reader.records().enumerate() {
            let row = row?;
            let at = |m: String| bad(format!("row {}: {m}", line + 2));
            let votes: u64 = row[2].parse().map_err(|_| at(format!("bad vote count {:?}", &row[2])))?;
            let test_path = base.join(&row[1]);
            let ref_path = row.get(3).filter(|p| !p.is_empty()).map(|p| base.join(p));
            let ref_ok = ref_path.as_ref().is_none_or(|p| p.is_file());
            if !(test_path.is_file() && ref_ok) {
                log::warn!("skipping {}: image file missing", test_path.display());
                skipped += 1;
                continue;
            }
            records.push(VoteRecord {
                group_id: row[0].to_string(),
                test_path,
                votes,
                ref_path,
            });
        }
        let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &records {
            *sizes.entry(&r.group_id).or_default() += 1;
        }
        if let Some((g, _)) = sizes.iter().find(|(_, &n)| n < 2) {
            return Err(bad(format!("vote group {g} has fewer than 2 members")));
        }
        LoadedManifest {
            manifest: Manifest::Votes(records),
            skipped,
        }
    } else {
        return Err(bad(format!(
            "unrecognized header {header:?}; expected {SCORES_HEADER:?} or {VOTES_HEADER:?}"
        )));
    };

    if loaded.manifest.is_empty() {
        return Err(Error::NoRecords);
    }
    if loaded.skipped > 0 {
        log::warn!("{}: skipped {} rows with missing images", path.display(), loaded.skipped);
    }
    Ok(loaded)
}

fn present(ref_path: &Path, test_path: &Path) -> bool {
    let ok = ref_path.is_file() && test_path.is_file();
    if !ok {
        log::warn!(
            "skipping {} vs {}: image file missing",
            ref_path.display(),
            test_path.display()
        );
    }
    ok
}

/// Path as written into a manifest living in `base`.
fn relative_to(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned()
}

pub fn write_scores_manifest(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SCORES_HEADER)?;
    for r in records {
        w.write_record([
            relative_to(base, &r.ref_path),
            relative_to(base, &r.test_path),
            // `{:?}` keeps enough digits to round-trip exactly
            format!("{:?}", r.subjective),
            r.polarity.as_str().to_string(),
            r.group_id.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_votes_manifest(path: impl AsRef<Path>, records: &[VoteRecord]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let with_ref = records.iter().any(|r| r.ref_path.is_some());
    if with_ref {
        w.write_record(VOTES_HEADER.iter().chain(&["ref_path"]))?;
    } else {
        w.write_record(VOTES_HEADER)?;
    }
    for r in records {
        let mut row = vec![r.group_id.clone(), relative_to(base, &r.test_path), r.votes.to_string()];
        if with_ref {
            row.push(r.ref_path.as_deref().map(|p| relative_to(base, p)).unwrap_or_default());
        }
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
