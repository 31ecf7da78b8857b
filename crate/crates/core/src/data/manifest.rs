use crate::error::{Error, Result};
use crate::eval::{Label, LabelTable};
use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Spoof condition tags in class order 1..=9 (replay configurations).
pub const SPOOF_TAGS: [&str; 9] = ["AA", "AB", "AC", "BA", "BB", "BC", "CA", "CB", "CC"];

/// Class index of a label: bonafide is 0, spoof tags follow [`SPOOF_TAGS`].
pub fn class_index(label: &Label) -> Result<usize> {
    match label {
        Label::Bonafide => Ok(0),
        Label::Spoof(tag) => SPOOF_TAGS
            .iter()
            .position(|t| t == tag)
            .map(|i| i + 1)
            .ok_or_else(|| {
                Error::Data(format!(
                    "unknown label '{tag}' (expected bonafide or one of {})",
                    SPOOF_TAGS.join(", ")
                ))
            }),
    }
}

/// Label of a class index.
pub fn class_label(index: usize) -> Result<Label> {
    match index {
        0 => Ok(Label::Bonafide),
        i if i <= SPOOF_TAGS.len() => Ok(Label::Spoof(SPOOF_TAGS[i - 1].to_string())),
        i => Err(Error::Data(format!("class index {i} is out of range"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Dev,
    Eval,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Eval];
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Eval => "eval",
        })
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "eval" => Ok(Partition::Eval),
            other => Err(Error::Data(format!("unknown partition '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub utt_id: String,
    /// Resolved against the manifest's directory when relative.
    pub audio_path: PathBuf,
    pub label: Label,
    pub partition: Partition,
}

impl ManifestEntry {
    pub fn class_index(&self) -> Result<usize> {
        class_index(&self.label)
    }
}

/// Parse `utt_id<TAB>path<TAB>label[<TAB>partition]` lines.
///
/// Without a fourth column the partition is taken from the file stem
/// (`train.tsv`, `dev.tsv`, `eval.tsv`). Audio files are not opened here.
pub fn parse_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let stem_partition = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse::<Partition>().ok());
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |detail: String| Error::format(path, format!("line {line_no}: {detail}"));
        let cols: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&cols.len()) || cols[..3].iter().any(|c| c.is_empty()) {
            return Err(bad(format!(
                "expected utt_id, path, label and optional partition separated by tabs, found {} fields",
                cols.len()
            )));
        }
        let label: Label = cols[2].parse().map_err(|e| bad(format!("{e}")))?;
        class_index(&label).map_err(|e| bad(format!("{e}")))?;
        let partition = match cols.get(3) {
            Some(p) => p.parse().map_err(|e| bad(format!("{e}")))?,
            None => stem_partition.ok_or_else(|| {
                bad("no partition column and the file name is not train/dev/eval".into())
            })?,
        };
        if !seen.insert((cols[0], partition)) {
            return Err(bad(format!("duplicate utterance id {} in {partition}", cols[0])));
        }
        let audio = Path::new(cols[1]);
        entries.push(ManifestEntry {
            utt_id: cols[0].to_string(),
            audio_path: if audio.is_absolute() {
                audio.to_path_buf()
            } else {
                base.join(audio)
            },
            label,
            partition,
        });
    }
    Ok(entries)
}

/// Write four-column lines; audio paths under the manifest's directory are
/// stored relative to it.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = String::new();
    for e in entries {
        let audio = e.audio_path.strip_prefix(base).unwrap_or(&e.audio_path);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            e.utt_id,
            audio.display(),
            e.label,
            e.partition
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn labels_of(entries: &[ManifestEntry]) -> Result<LabelTable> {
    let mut t = LabelTable::new();
    for e in entries {
        t.insert(e.utt_id.clone(), e.label.clone())?;
    }
    Ok(t)
}
