use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::MetricValues;
use crate::genre::{GenreMatrix, GENRE_NAMES};
use crate::recurrent::CellKind;
use crate::transition::FeatureMode;

pub const REPORT_HEADER: &str = "cell,mode,stage,cluster,recall,precision,accuracy,f1";
pub const CLUSTERS_HEADER: &str =
    "cell,mode,phase,cluster,users,test_samples,recall,precision,accuracy,f1,p_min,trimmed,zeroed_genres";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "BC")]
    BeforeClustering,
    #[serde(rename = "AC-best")]
    AcBest,
    #[serde(rename = "AC-worst")]
    AcWorst,
    #[serde(rename = "AC-mean")]
    AcMean,
    #[serde(rename = "BT-mean")]
    BtMean,
    #[serde(rename = "BT-worst")]
    BtWorst,
    #[serde(rename = "AT-worst")]
    AtWorst,
    #[serde(rename = "AT-mean")]
    AtMean,
}

impl Stage {
    /// Report order within one (cell, mode) block.
    pub const ALL: [Stage; 8] = [
        Stage::BeforeClustering,
        Stage::AcBest,
        Stage::AcWorst,
        Stage::AcMean,
        Stage::BtMean,
        Stage::BtWorst,
        Stage::AtWorst,
        Stage::AtMean,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::BeforeClustering => "BC",
            Stage::AcBest => "AC-best",
            Stage::AcWorst => "AC-worst",
            Stage::AcMean => "AC-mean",
            Stage::BtMean => "BT-mean",
            Stage::BtWorst => "BT-worst",
            Stage::AtWorst => "AT-worst",
            Stage::AtMean => "AT-mean",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.label() == s)
            .ok_or_else(|| Error::Report(format!("unknown stage {s:?}")))
    }
}

/// The cluster a report row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ClusterRef {
    All,
    Mean,
    Index(usize),
}

impl fmt::Display for ClusterRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterRef::All => f.write_str("all"),
            ClusterRef::Mean => f.write_str("mean"),
            ClusterRef::Index(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for ClusterRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ClusterRef::All),
            "mean" => Ok(ClusterRef::Mean),
            _ => s
                .parse()
                .map(ClusterRef::Index)
                .map_err(|_| Error::Report(format!("bad cluster reference {s:?}"))),
        }
    }
}

impl From<ClusterRef> for String {
    fn from(c: ClusterRef) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for ClusterRef {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub cell: CellKind,
    pub mode: FeatureMode,
    pub stage: Stage,
    pub cluster: ClusterRef,
    pub recall: f64,
    pub precision: f64,
    pub accuracy: f64,
    pub f1: f64,
}

impl ReportRow {
    pub fn new(cell: CellKind, mode: FeatureMode, stage: Stage, cluster: ClusterRef, v: MetricValues) -> Self {
        ReportRow {
            cell,
            mode,
            stage,
            cluster,
            recall: v.recall,
            precision: v.precision,
            accuracy: v.accuracy,
            f1: v.f1,
        }
    }

    pub fn values(&self) -> MetricValues {
        MetricValues {
            recall: self.recall,
            precision: self.precision,
            accuracy: self.accuracy,
            f1: self.f1,
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
            self.cell, self.mode, self.stage, self.cluster, self.recall, self.precision, self.accuracy, self.f1
        )
    }

    /// The row as it reads back from the CSV file.
    pub fn rounded(&self) -> Self {
        let r = |v: f64| format!("{v:.4}").parse::<f64>().expect("formatted float");
        ReportRow {
            recall: r(self.recall),
            precision: r(self.precision),
            accuracy: r(self.accuracy),
            f1: r(self.f1),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "AC")]
    AfterClustering,
    #[serde(rename = "AT")]
    AfterTrimming,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::AfterClustering => "AC",
            Phase::AfterTrimming => "AT",
        })
    }
}

/// Per-cluster detail behind the aggregate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub cell: CellKind,
    pub mode: FeatureMode,
    pub phase: Phase,
    pub cluster: usize,
    pub users: usize,
    pub test_samples: usize,
    pub values: MetricValues,
    pub p_min: f64,
    pub trimmed: bool,
    pub zeroed: Vec<usize>,
}

impl ClusterRow {
    pub fn to_csv_line(&self) -> String {
        let zeroed: Vec<&str> = self.zeroed.iter().map(|&j| GENRE_NAMES[j]).collect();
        let v = &self.values;
        format!(
            "{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{},{}",
            self.cell,
            self.mode,
            self.phase,
            self.cluster,
            self.users,
            self.test_samples,
            v.recall,
            v.precision,
            v.accuracy,
            v.f1,
            self.p_min,
            u8::from(self.trimmed),
            zeroed.join("|")
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub clusters: Vec<ClusterRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }

    pub fn clusters_csv(&self) -> String {
        let mut out = String::from(CLUSTERS_HEADER);
        out.push('\n');
        for r in &self.clusters {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }

    pub fn find(&self, cell: CellKind, mode: FeatureMode, stage: Stage) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.cell == cell && r.mode == mode && r.stage == stage)
    }
}

fn field<'a>(it: &mut impl Iterator<Item = &'a str>, line: usize, name: &str) -> Result<&'a str> {
    it.next()
        .ok_or_else(|| Error::Report(format!("line {line}: missing {name}")))
}

fn number(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Report(format!("line {line}: bad number {s:?}")))
}

/// Parse `report.csv` back into rows (values carry four decimals).
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::Report("missing or unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let mut it = line.split(',');
        let cell = field(&mut it, n, "cell")?.parse()?;
        let mode = field(&mut it, n, "mode")?.parse()?;
        let stage = field(&mut it, n, "stage")?.parse()?;
        let cluster = field(&mut it, n, "cluster")?.parse()?;
        let recall = number(field(&mut it, n, "recall")?, n)?;
        let precision = number(field(&mut it, n, "precision")?, n)?;
        let accuracy = number(field(&mut it, n, "accuracy")?, n)?;
        let f1 = number(field(&mut it, n, "f1")?, n)?;
        if it.next().is_some() {
            return Err(Error::Report(format!("line {n}: too many fields")));
        }
        rows.push(ReportRow {
            cell,
            mode,
            stage,
            cluster,
            recall,
            precision,
            accuracy,
            f1,
        });
    }
    Ok(rows)
}

fn temp_sibling(path: &Path) -> Result<PathBuf> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Report(format!("not a file path: {}", path.display())))?;
    Ok(path.with_file_name(format!(".{}.tmp", name.to_string_lossy())))
}

fn write_synced(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(contents)?;
    f.sync_all()?;
    Ok(())
}

/// Stage every file under a temporary name, then rename them all into place.
fn write_all_atomic(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, contents) in files {
        let tmp = temp_sibling(path)?;
        if let Err(e) = write_synced(&tmp, contents) {
            let _ = fs::remove_file(&tmp);
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(e);
        }
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        fs::rename(tmp, path)?;
    }
    Ok(())
}

/// Write `report.csv`, `report.json` and `clusters.csv` under `out_dir`.
pub fn emit_report(report: &EvalReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_vec_pretty(&report.rows)?;
    json.push(b'\n');
    let files = vec![
        (dir.join("report.csv"), report.to_csv().into_bytes()),
        (dir.join("report.json"), json),
        (dir.join("clusters.csv"), report.clusters_csv().into_bytes()),
    ];
    write_all_atomic(&files)?;
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Dump one transition matrix as `transitions_<label>.csv`.
pub fn write_transitions(out_dir: impl AsRef<Path>, label: &str, matrix: &GenreMatrix) -> Result<PathBuf> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("transitions_{label}.csv"));
    write_all_atomic(&[(path.clone(), matrix.to_csv().into_bytes())])?;
    Ok(path)
}
