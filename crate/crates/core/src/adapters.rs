//! Converters from published IQA dataset layouts to the generic manifest.
//!
//! Assumed layouts (paths relative to the dataset root):
//!
//! | dataset    | labels                                        | images |
//! |------------|-----------------------------------------------|--------|
//! | LIVE (r2)  | `dmos.txt`, `orgs.txt` (982 values each, jp2k/jpeg/wn/gblur/fastfading order), `<type>/info.txt` | `refimgs/`, `<type>/imgN.bmp` |
//! | CSIQ       | `csiq_dmos.csv` (`image,dst_type,dst_lev,dmos`, extra columns ignored) | `src_imgs/`, `dst_imgs/<type>/` |
//! | TID2013    | `mos_with_names.txt` (`<mos> <name>`) or `mos.txt` (3000 values, canonical order) | `reference_images/`, `distorted_images/` |
//! | KADID-10k  | `dmos.csv` (`dist_img,ref_img,dmos,var`)       | `images/` |
//! | PIPAL      | `Train_Label/*.txt` (`<dist>,<score>`)         | `Train_Ref/`, `Train_Dis/` |
//! | QADS, CVIU, SISAR, CUHK | `labels.csv` (`ref,test,score`, optional `ref_lr`) | as listed |
//! | RetargetMe, NRID | `votes.csv` (`group,ref,test,votes`)     | as listed |
//!
//! LIVE and CSIQ ship their scores as MATLAB/Excel files; the text files above
//! are plain exports of those tables. The datasets in the last two rows have
//! no single canonical text layout across mirrors, so they are read from a
//! flat label table.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::{write_scores_manifest, write_votes_manifest, EvalRecord, Polarity, VoteRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Live,
    Csiq,
    Tid2013,
    Kadid10k,
    Qads,
    Cviu,
    Sisar,
    Cuhk,
    RetargetMe,
    Nrid,
    Pipal,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 11] = [
        DatasetKind::Live,
        DatasetKind::Csiq,
        DatasetKind::Tid2013,
        DatasetKind::Kadid10k,
        DatasetKind::Qads,
        DatasetKind::Cviu,
        DatasetKind::Sisar,
        DatasetKind::Cuhk,
        DatasetKind::RetargetMe,
        DatasetKind::Nrid,
        DatasetKind::Pipal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Live => "LIVE",
            DatasetKind::Csiq => "CSIQ",
            DatasetKind::Tid2013 => "TID2013",
            DatasetKind::Kadid10k => "KADID10K",
            DatasetKind::Qads => "QADS",
            DatasetKind::Cviu => "CVIU",
            DatasetKind::Sisar => "SISAR",
            DatasetKind::Cuhk => "CUHK",
            DatasetKind::RetargetMe => "RETARGETME",
            DatasetKind::Nrid => "NRID",
            DatasetKind::Pipal => "PIPAL",
        }
    }

    /// `(reference images, test images)` in a complete copy of the dataset.
    pub fn published_counts(self) -> (usize, usize) {
        match self {
            DatasetKind::Live => (29, 779),
            DatasetKind::Csiq => (30, 866),
            DatasetKind::Tid2013 => (25, 3000),
            DatasetKind::Kadid10k => (81, 10125),
            DatasetKind::Cviu => (30, 1620),
            DatasetKind::Qads => (20, 980),
            DatasetKind::Sisar => (100, 12600),
            DatasetKind::Cuhk => (57, 171),
            DatasetKind::RetargetMe => (37, 296),
            DatasetKind::Nrid => (35, 175),
            DatasetKind::Pipal => (200, 23200),
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            DatasetKind::Live | DatasetKind::Csiq => Polarity::LowerBetter,
            // KADID-10k calls its column "dmos" but the values are 1..5 with 5 = best.
            _ => Polarity::HigherBetter,
        }
    }

    pub fn is_vote_based(self) -> bool {
        matches!(self, DatasetKind::RetargetMe | DatasetKind::Nrid)
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| format!("unknown dataset {s:?}"))
    }
}

/// Which reference a super-resolution dataset is scored against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferenceKind {
    /// high-resolution source image
    #[default]
    Hr,
    /// low-resolution input, from the `ref_lr` column
    Lr,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AdaptOptions {
    pub reference: ReferenceKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptSummary {
    pub kind: DatasetKind,
    pub rows: usize,
    /// Label rows dropped because an image was missing.
    pub skipped: usize,
    pub groups: usize,
}

impl AdaptSummary {
    pub fn matches_published(&self) -> bool {
        self.rows == self.kind.published_counts().1
    }
}

/// Reads a dataset in its published layout and writes the generic manifest to `out`.
pub fn adapt_dataset(kind: DatasetKind, root: &Path, out: &Path, opts: AdaptOptions) -> Result<AdaptSummary> {
    let root = root.canonicalize().map_err(|e| Error::io(root, e))?;
    let out = absolute_output(out)?;
    let mut skipped = 0;
    let mut keep = |r: &Path, t: &Path| {
        let ok = r.is_file() && t.is_file();
        if !ok {
            skipped += 1;
        }
        ok
    };

    let (rows, groups) = if kind.is_vote_based() {
        let votes = read_votes_table(kind, &root)?;
        let votes: Vec<VoteRecord> = votes
            .into_iter()
            .filter(|v| keep(v.ref_path.as_deref().expect("set by reader"), &v.test_path))
            .collect();
        let groups = count_groups(votes.iter().map(|v| v.group_id.as_str()));
        write_votes_manifest(&out, &votes)?;
        (votes.len(), groups)
    } else {
        let records = match kind {
            DatasetKind::Live => read_live(&root)?,
            DatasetKind::Csiq => read_csiq(&root)?,
            DatasetKind::Tid2013 => read_tid2013(&root)?,
            DatasetKind::Kadid10k => read_kadid(&root)?,
            DatasetKind::Pipal => read_pipal(&root)?,
            DatasetKind::Qads | DatasetKind::Cviu | DatasetKind::Sisar | DatasetKind::Cuhk => {
                read_label_table(kind, &root, opts.reference)?
            }
            DatasetKind::RetargetMe | DatasetKind::Nrid => unreachable!("vote datasets handled above"),
        };
        let records: Vec<EvalRecord> = records
            .into_iter()
            .filter(|r| keep(&r.ref_path, &r.test_path))
            .collect();
        let groups = count_groups(records.iter().filter_map(|r| r.group_id.as_deref()));
        write_scores_manifest(&out, &records)?;
        (records.len(), groups)
    };

    let summary = AdaptSummary {
        kind,
        rows,
        skipped,
        groups,
    };
    if !summary.matches_published() {
        log::warn!(
            "{kind}: {rows} rows, published dataset has {}",
            kind.published_counts().1
        );
    }
    Ok(summary)
}

/// Canonical form of `out` so manifest paths can be written relative to it.
fn absolute_output(out: &Path) -> Result<PathBuf> {
    let dir = match out.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => dir.canonicalize().map_err(|e| Error::io(dir, e))?,
        None => std::env::current_dir().map_err(|e| Error::io(".", e))?,
    };
    let name = out
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", out.display())))?;
    Ok(dir.join(name))
}

fn count_groups<'a>(ids: impl Iterator<Item = &'a str>) -> usize {
    let mut seen: Vec<&str> = ids.collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn layout_err(kind: DatasetKind, root: &Path, expected: impl Into<String>) -> Error {
    Error::Layout {
        dataset: kind.name(),
        root: root.to_path_buf(),
        expected: expected.into(),
    }
}

fn read_text(kind: DatasetKind, root: &Path, rel: &str) -> Result<String> {
    let path = root.join(rel);
    if !path.is_file() {
        return Err(layout_err(kind, root, rel));
    }
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

/// Case-insensitive file lookup within one directory.
struct DirIndex {
    dir: PathBuf,
    by_lower: HashMap<String, PathBuf>,
}

impl DirIndex {
    fn open(dir: PathBuf) -> Self {
        let by_lower = fs::read_dir(&dir)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| (e.file_name().to_string_lossy().to_lowercase(), e.path()))
            .collect();
        DirIndex { dir, by_lower }
    }

    /// Existing file matching `name` in any case, else the literal path.
    fn resolve(&self, name: &str) -> PathBuf {
        self.by_lower
            .get(&name.to_lowercase())
            .cloned()
            .unwrap_or_else(|| self.dir.join(name))
    }
}

fn parse_f64(kind: DatasetKind, root: &Path, file: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .ok()
        .filter(|x: &f64| x.is_finite())
        .ok_or_else(|| layout_err(kind, root, format!("numeric score in {file}, found {v:?}")))
}

const LIVE_TYPES: [(&str, usize); 5] = [
    ("jp2k", 227),
    ("jpeg", 233),
    ("wn", 174),
    ("gblur", 174),
    ("fastfading", 174),
];

fn read_live(root: &Path) -> Result<Vec<EvalRecord>> {
    let kind = DatasetKind::Live;
    let values = |file: &str| -> Result<Vec<f64>> {
        read_text(kind, root, file)?
            .split_whitespace()
            .map(|v| parse_f64(kind, root, file, v))
            .collect()
    };
    let dmos = values("dmos.txt")?;
    let orgs = values("orgs.txt")?;
    let total: usize = LIVE_TYPES.iter().map(|t| t.1).sum();
    if dmos.len() != total || orgs.len() != total {
        return Err(layout_err(
            kind,
            root,
            format!("{total} values in dmos.txt and orgs.txt (found {}, {})", dmos.len(), orgs.len()),
        ));
    }
    let refs = DirIndex::open(root.join("refimgs"));
    let mut records = Vec::new();
    let mut offset = 0;
    for (ty, count) in LIVE_TYPES {
        let info = read_text(kind, root, &format!("{ty}/info.txt"))?;
        let dir = DirIndex::open(root.join(ty));
        for line in info.lines() {
            let mut parts = line.split_whitespace();
            let (Some(ref_name), Some(dist_name)) = (parts.next(), parts.next()) else {
                continue;
            };
            let idx: usize = dist_name
                .trim_start_matches("img")
                .trim_end_matches(".bmp")
                .parse()
                .ok()
                .filter(|&i| (1..=count).contains(&i))
                .ok_or_else(|| layout_err(kind, root, format!("imgN.bmp entries in {ty}/info.txt, found {dist_name:?}")))?;
            let i = offset + idx - 1;
            if orgs[i] != 0.0 {
                continue;
            }
            records.push(EvalRecord {
                ref_path: refs.resolve(ref_name),
                test_path: dir.resolve(dist_name),
                subjective: dmos[i],
                polarity: kind.polarity(),
                group_id: Some(ref_name.to_string()),
            });
        }
        offset += count;
    }
    Ok(records)
}

fn csiq_type(dst_type: &str) -> Option<(&'static str, &'static str)> {
    match dst_type.trim().to_ascii_lowercase().as_str() {
        "noise" | "awgn" => Some(("awgn", "AWGN")),
        "jpeg" => Some(("jpeg", "JPEG")),
        "jpeg 2000" | "jpeg2000" => Some(("jpeg2000", "jpeg2000")),
        "fnoise" => Some(("fnoise", "fnoise")),
        "blur" => Some(("blur", "BLUR")),
        "contrast" => Some(("contrast", "contrast")),
        _ => None,
    }
}

fn read_csiq(root: &Path) -> Result<Vec<EvalRecord>> {
    let kind = DatasetKind::Csiq;
    let file = "csiq_dmos.csv";
    let text = read_text(kind, root, file)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| layout_err(kind, root, format!("column {name} in {file}")))
    };
    let (c_img, c_type, c_lev, c_dmos) = (col("image")?, col("dst_type")?, col("dst_lev")?, col("dmos")?);
    let src = DirIndex::open(root.join("src_imgs"));
    let mut dst_dirs: HashMap<&str, DirIndex> = HashMap::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let image = &row[c_img];
        let (dir, suffix) = csiq_type(&row[c_type])
            .ok_or_else(|| layout_err(kind, root, format!("known dst_type, found {:?}", &row[c_type])))?;
        let idx = dst_dirs
            .entry(dir)
            .or_insert_with(|| DirIndex::open(root.join("dst_imgs").join(dir)));
        records.push(EvalRecord {
            ref_path: src.resolve(&format!("{image}.png")),
            test_path: idx.resolve(&format!("{image}.{suffix}.{}.png", &row[c_lev])),
            subjective: parse_f64(kind, root, file, &row[c_dmos])?,
            polarity: kind.polarity(),
            group_id: Some(image.to_string()),
        });
    }
    Ok(records)
}

fn tid_reference_name(dist: &str) -> Option<String> {
    // i01_01_1.bmp -> I01.BMP
    let id = dist.get(1..3)?;
    id.chars().all(|c| c.is_ascii_digit()).then(|| format!("I{id}.BMP"))
}

fn read_tid2013(root: &Path) -> Result<Vec<EvalRecord>> {
    let kind = DatasetKind::Tid2013;
    let mut pairs: Vec<(String, f64)> = Vec::new();
    if root.join("mos_with_names.txt").is_file() {
        let file = "mos_with_names.txt";
        for line in read_text(kind, root, file)?.lines() {
            let mut parts = line.split_whitespace();
            let (Some(mos), Some(name)) = (parts.next(), parts.next()) else {
                continue;
            };
            pairs.push((name.to_string(), parse_f64(kind, root, file, mos)?));
        }
    } else if root.join("mos.txt").is_file() {
        let file = "mos.txt";
        let mos: Vec<f64> = read_text(kind, root, file)?
            .split_whitespace()
            .map(|v| parse_f64(kind, root, file, v))
            .collect::<Result<_>>()?;
        if mos.len() != 3000 {
            return Err(layout_err(kind, root, format!("3000 values in mos.txt, found {}", mos.len())));
        }
        let names = (1..=25).flat_map(|r| (1..=24).flat_map(move |d| (1..=5).map(move |l| format!("i{r:02}_{d:02}_{l}.bmp"))));
        pairs = names.zip(mos).collect();
    } else {
        return Err(layout_err(kind, root, "mos_with_names.txt or mos.txt"));
    }
    let refs = DirIndex::open(root.join("reference_images"));
    let dists = DirIndex::open(root.join("distorted_images"));
    pairs
        .into_iter()
        .map(|(name, mos)| {
            let ref_name = tid_reference_name(&name)
                .ok_or_else(|| layout_err(kind, root, format!("iXX_YY_Z.bmp names, found {name:?}")))?;
            Ok(EvalRecord {
                ref_path: refs.resolve(&ref_name),
                test_path: dists.resolve(&name),
                subjective: mos,
                polarity: kind.polarity(),
                group_id: Some(ref_name),
            })
        })
        .collect()
}

fn read_kadid(root: &Path) -> Result<Vec<EvalRecord>> {
    let kind = DatasetKind::Kadid10k;
    let file = "dmos.csv";
    let text = read_text(kind, root, file)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| layout_err(kind, root, format!("column {name} in {file}")))
    };
    let (c_dist, c_ref, c_dmos) = (col("dist_img")?, col("ref_img")?, col("dmos")?);
    let images = root.join("images");
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        records.push(EvalRecord {
            ref_path: images.join(&row[c_ref]),
            test_path: images.join(&row[c_dist]),
            subjective: parse_f64(kind, root, file, &row[c_dmos])?,
            polarity: kind.polarity(),
            group_id: Some(row[c_ref].to_string()),
        });
    }
    Ok(records)
}

fn read_pipal(root: &Path) -> Result<Vec<EvalRecord>> {
    let kind = DatasetKind::Pipal;
    let labels = root.join("Train_Label");
    let mut files: Vec<PathBuf> = fs::read_dir(&labels)
        .map_err(|_| layout_err(kind, root, "Train_Label/ with one .txt per reference"))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    if files.is_empty() {
        return Err(layout_err(kind, root, "Train_Label/*.txt"));
    }
    files.sort();
    let (refs, dists) = (root.join("Train_Ref"), root.join("Train_Dis"));
    let mut records = Vec::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (name, score) = line
                .split_once(',')
                .ok_or_else(|| layout_err(kind, root, format!("<dist>,<score> lines, found {line:?}")))?;
            let name = name.trim();
            let ref_id = name.split('_').next().unwrap_or(name);
            records.push(EvalRecord {
                ref_path: refs.join(format!("{ref_id}.bmp")),
                test_path: dists.join(name),
                subjective: parse_f64(kind, root, "Train_Label", score)?,
                polarity: kind.polarity(),
                group_id: Some(ref_id.to_string()),
            });
        }
    }
    Ok(records)
}

fn read_label_table(kind: DatasetKind, root: &Path, reference: ReferenceKind) -> Result<Vec<EvalRecord>> {
    let file = "labels.csv";
    let text = read_text(kind, root, file)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| layout_err(kind, root, format!("column {name} in {file}")));
    let (c_ref, c_test, c_score) = (need("ref")?, need("test")?, need("score")?);
    let c_ref = match reference {
        ReferenceKind::Hr => c_ref,
        ReferenceKind::Lr => need("ref_lr")?,
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        records.push(EvalRecord {
            ref_path: root.join(&row[c_ref]),
            test_path: root.join(&row[c_test]),
            subjective: parse_f64(kind, root, file, &row[c_score])?,
            polarity: kind.polarity(),
            group_id: Some(row[c_ref].to_string()),
        });
    }
    Ok(records)
}

fn read_votes_table(kind: DatasetKind, root: &Path) -> Result<Vec<VoteRecord>> {
    let file = "votes.csv";
    let text = read_text(kind, root, file)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["group", "ref", "test", "votes"] {
        return Err(layout_err(kind, root, format!("{file} with header group,ref,test,votes, found {header:?}")));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let votes = row[3]
            .parse()
            .map_err(|_| layout_err(kind, root, format!("integer vote count, found {:?}", &row[3])))?;
        out.push(VoteRecord {
            group_id: row[0].to_string(),
            test_path: root.join(&row[2]),
            votes,
            ref_path: Some(root.join(&row[1])),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_kind_names() {
        assert_eq!("kadid-10k".parse::<DatasetKind>().unwrap(), DatasetKind::Kadid10k);
        assert_eq!("RetargetMe".parse::<DatasetKind>().unwrap(), DatasetKind::RetargetMe);
        assert_eq!("tid2013".parse::<DatasetKind>().unwrap(), DatasetKind::Tid2013);
        assert!("imagenet".parse::<DatasetKind>().is_err());
    }

    #[test]
    fn tid_reference_names() {
        assert_eq!(tid_reference_name("i07_12_3.bmp").as_deref(), Some("I07.BMP"));
        assert_eq!(tid_reference_name("x.bmp"), None);
    }

    #[test]
    fn published_totals() {
        let live: usize = LIVE_TYPES.iter().map(|t| t.1).sum();
        assert_eq!(live, 982);
        assert_eq!(DatasetKind::RetargetMe.published_counts(), (37, 296));
        assert_eq!(DatasetKind::Live.polarity(), Polarity::LowerBetter);
    }
}
