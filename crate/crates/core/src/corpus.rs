//! OLID-format dataset handling: parsing, the three-level label hierarchy,
//! per-level projections, train/test splits, stratified validation holdout and
//! random over/under-sampling.
//!
//! Files are tab-separated with the header `id tweet subtask_a subtask_b subtask_c`
//! and the literal `NULL` marking an absent label.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const HEADER: [&str; 5] = ["id", "tweet", "subtask_a", "subtask_b", "subtask_c"];
pub const NULL: &str = "NULL";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected {expected} tab-separated columns, found {found}")]
    Malformed { line: usize, expected: usize, found: usize },
    #[error("line {line}: header must be `id\\ttweet\\tsubtask_a\\tsubtask_b\\tsubtask_c`")]
    BadHeader { line: usize },
    #[error("line {line}: unknown label `{token}` in column {column}")]
    UnknownLabel { line: usize, column: &'static str, token: String },
    #[error("line {line}: hierarchy violation: {detail}")]
    HierarchyViolation { line: usize, detail: String },
    #[error("line {line}: tweet text is empty")]
    EmptyText { line: usize },
    #[error("record `{id}`: {detail}")]
    InvalidRecord { id: String, detail: String },
    #[error("record `{id}` has no label at level {level}")]
    Unprojected { id: String, level: Level },
    #[error("level {level}: class {class} has no records")]
    EmptyClass { level: Level, class: &'static str },
    #[error("resampling needs at least two classes at level {level}, found {found}")]
    SingleClass { level: Level, found: usize },
    #[error("ratio split needs at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("no records at level {0}")]
    EmptyProjection(Level),
    #[error("split mode `file` requires a test file")]
    MissingTestFile,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Level A: offensive language identification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelA {
    #[serde(rename = "NOT")]
    Not,
    #[serde(rename = "OFF")]
    Off,
}

/// Level B: offense type. Class order UNT < TIN is the cascade tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelB {
    #[serde(rename = "UNT")]
    Unt,
    #[serde(rename = "TIN")]
    Tin,
}

/// Level C: offense target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelC {
    #[serde(rename = "IND")]
    Ind,
    #[serde(rename = "GRP")]
    Grp,
    #[serde(rename = "OTH")]
    Oth,
}

macro_rules! label_impls {
    ($ty:ident, $( $variant:ident => $name:literal ),+) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(other.to_string()),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

label_impls!(LabelA, Not => "NOT", Off => "OFF");
label_impls!(LabelB, Unt => "UNT", Tin => "TIN");
label_impls!(LabelC, Ind => "IND", Grp => "GRP", Oth => "OTH");

/// Annotation level of the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    A,
    B,
    C,
}

impl Level {
    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Level::A => &["NOT", "OFF"],
            Level::B => &["UNT", "TIN"],
            Level::C => &["IND", "GRP", "OTH"],
        }
    }

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn class_index(self, name: &str) -> Option<usize> {
        self.class_names().iter().position(|n| *n == name)
    }
}

impl FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "A" | "a" => Ok(Level::A),
            "B" | "b" => Ok(Level::B),
            "C" | "c" => Ok(Level::C),
            other => Err(format!("unknown level `{other}` (expected A, B or C)")),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::A => "A",
            Level::B => "B",
            Level::C => "C",
        })
    }
}

/// One annotated tweet. `b` is present iff `a = OFF`; `c` is present iff `b = TIN`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TweetRecord {
    pub id: String,
    pub text: String,
    pub a: LabelA,
    pub b: Option<LabelB>,
    pub c: Option<LabelC>,
}

fn hierarchy_violation(a: LabelA, b: Option<LabelB>, c: Option<LabelC>) -> Option<String> {
    match (a, b) {
        (LabelA::Off, None) => return Some("subtask_b is required when subtask_a is OFF".into()),
        (LabelA::Not, Some(b)) => {
            return Some(format!("subtask_b is {b} but subtask_a is NOT"));
        }
        _ => {}
    }
    match (b, c) {
        (Some(LabelB::Tin), None) => Some("subtask_c is required when subtask_b is TIN".into()),
        (Some(LabelB::Unt), Some(c)) => Some(format!("subtask_c is {c} but subtask_b is UNT")),
        (None, Some(c)) => Some(format!("subtask_c is {c} but subtask_b is absent")),
        _ => None,
    }
}

impl TweetRecord {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        a: LabelA,
        b: Option<LabelB>,
        c: Option<LabelC>,
    ) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        if let Some(detail) = hierarchy_violation(a, b, c) {
            return Err(CorpusError::InvalidRecord { id, detail });
        }
        if text.trim().is_empty() {
            return Err(CorpusError::InvalidRecord { id, detail: "tweet text is empty".into() });
        }
        Ok(TweetRecord { id, text, a, b, c })
    }

    /// Class index of this record at `level`, or `None` when the record is not
    /// part of that level's projection (B only covers OFF, C only covers TIN).
    pub fn label_at(&self, level: Level) -> Option<usize> {
        match level {
            Level::A => Some(self.a.index()),
            Level::B => self.b.map(LabelB::index),
            Level::C => self.c.map(LabelC::index),
        }
    }
}

fn parse_label<T: FromStr>(token: &str, line: usize, column: &'static str) -> Result<Option<T>> {
    if token == NULL {
        return Ok(None);
    }
    token.parse::<T>().map(Some).map_err(|_| CorpusError::UnknownLabel { line, column, token: token.to_string() })
}

/// Parses an OLID TSV stream. Row order is preserved; errors carry 1-based line numbers.
pub fn parse_olid<R: BufRead>(reader: R) -> Result<Vec<TweetRecord>> {
    let mut records = Vec::new();
    let mut lines = reader.lines();
    match lines.next() {
        Some(header) => {
            let header = header?;
            let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
            if cols != HEADER {
                return Err(CorpusError::BadHeader { line: 1 });
            }
        }
        None => return Err(CorpusError::BadHeader { line: 1 }),
    }
    for (i, raw) in lines.enumerate() {
        let line = i + 2;
        let raw = raw?;
        let raw = raw.trim_end_matches('\r');
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != HEADER.len() {
            return Err(CorpusError::Malformed { line, expected: HEADER.len(), found: cols.len() });
        }
        let a = parse_label::<LabelA>(cols[2], line, "subtask_a")?.ok_or_else(|| CorpusError::UnknownLabel {
            line,
            column: "subtask_a",
            token: NULL.to_string(),
        })?;
        let b = parse_label::<LabelB>(cols[3], line, "subtask_b")?;
        let c = parse_label::<LabelC>(cols[4], line, "subtask_c")?;
        if let Some(detail) = hierarchy_violation(a, b, c) {
            return Err(CorpusError::HierarchyViolation { line, detail });
        }
        if cols[1].trim().is_empty() {
            return Err(CorpusError::EmptyText { line });
        }
        records.push(TweetRecord { id: cols[0].to_string(), text: cols[1].to_string(), a, b, c });
    }
    Ok(records)
}

pub fn read_olid_file(path: &std::path::Path) -> Result<Vec<TweetRecord>> {
    let file = std::fs::File::open(path)?;
    parse_olid(std::io::BufReader::new(file))
}

/// Writes records in the same TSV dialect `parse_olid` reads.
pub fn write_olid<W: Write>(mut w: W, records: &[TweetRecord]) -> Result<()> {
    writeln!(w, "{}", HEADER.join("\t"))?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.id,
            r.text,
            r.a,
            r.b.map_or(NULL, LabelB::as_str),
            r.c.map_or(NULL, LabelC::as_str)
        )?;
    }
    Ok(())
}

/// Per-class record counts at one level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDistribution {
    pub level: Level,
    pub counts: Vec<usize>,
}

impl ClassDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn get(&self, class: &str) -> usize {
        self.level.class_index(class).map_or(0, |i| self.counts[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, usize)> + '_ {
        self.level.class_names().iter().copied().zip(self.counts.iter().copied())
    }
}

impl fmt::Display for ClassDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(n, c)| format!("{n}: {c}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

pub fn class_counts(records: &[TweetRecord], level: Level) -> ClassDistribution {
    let mut counts = vec![0; level.num_classes()];
    for r in records {
        if let Some(k) = r.label_at(level) {
            counts[k] += 1;
        }
    }
    ClassDistribution { level, counts }
}

/// Records that carry a label at `level`, in input order.
pub fn project(records: &[TweetRecord], level: Level) -> Vec<TweetRecord> {
    records.iter().filter(|r| r.label_at(level).is_some()).cloned().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Use the dataset's own train and test files.
    File,
    /// Pool all records and split them by `ratio`.
    Ratio,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { mode: SplitMode::File, ratio: 0.8, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mode == SplitMode::Ratio && !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(CorpusError::BadFraction(self.ratio));
        }
        Ok(())
    }
}

/// Splits a dataset. In `File` mode the provided train/test files pass through
/// untouched; in `Ratio` mode train and test are pooled, shuffled with the seed
/// and cut at `round(ratio * N)`.
pub fn split(
    train: &[TweetRecord],
    test: Option<&[TweetRecord]>,
    spec: &SplitSpec,
) -> Result<(Vec<TweetRecord>, Vec<TweetRecord>)> {
    spec.validate()?;
    match spec.mode {
        SplitMode::File => {
            let test = test.ok_or(CorpusError::MissingTestFile)?;
            Ok((train.to_vec(), test.to_vec()))
        }
        SplitMode::Ratio => {
            let mut pool: Vec<TweetRecord> = train.to_vec();
            if let Some(t) = test {
                pool.extend_from_slice(t);
            }
            let n = pool.len();
            if n < 2 {
                return Err(CorpusError::TooFewRecords(n));
            }
            let mut rng = seed::rng(seed::mix(spec.seed, seed::stream::SPLIT));
            pool.shuffle(&mut rng);
            let cut = ((spec.ratio * n as f64).round() as usize).clamp(1, n - 1);
            let test = pool.split_off(cut);
            Ok((pool, test))
        }
    }
}

fn class_members(records: &[TweetRecord], level: Level) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); level.num_classes()];
    for (i, r) in records.iter().enumerate() {
        let k = r.label_at(level).ok_or_else(|| CorpusError::Unprojected { id: r.id.clone(), level })?;
        members[k].push(i);
    }
    Ok(members)
}

/// Number of validation records drawn from each class: largest-remainder
/// apportionment of `round(frac * N)`, remainder ties going to the smaller class.
fn stratified_quota(sizes: &[usize], frac: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (frac * total as f64).round() as usize;
    let mut quota: Vec<usize> = sizes.iter().map(|&c| (frac * c as f64).floor() as usize).collect();
    let mut assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = frac * sizes[i] as f64 - quota[i] as f64;
        let rj = frac * sizes[j] as f64 - quota[j] as f64;
        rj.partial_cmp(&ri).unwrap_or(std::cmp::Ordering::Equal).then(sizes[i].cmp(&sizes[j])).then(i.cmp(&j))
    });
    for &k in &order {
        if assigned >= target {
            break;
        }
        if quota[k] < sizes[k] && frac * sizes[k] as f64 > quota[k] as f64 {
            quota[k] += 1;
            assigned += 1;
        }
    }
    quota
}

/// Carves a stratified validation set out of projected training records.
/// Returns `(fit_set, valid_set)`, both in input order.
pub fn holdout_validation(
    train: &[TweetRecord],
    level: Level,
    frac: f64,
    seed: u64,
) -> Result<(Vec<TweetRecord>, Vec<TweetRecord>)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(CorpusError::BadFraction(frac));
    }
    let members = class_members(train, level)?;
    for (k, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(CorpusError::EmptyClass { level, class: level.class_names()[k] });
        }
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let quota = stratified_quota(&sizes, frac);
    let mut rng = seed::rng(seed::mix(seed, seed::stream::HOLDOUT));
    let mut in_valid = vec![false; train.len()];
    for (m, &q) in members.iter().zip(&quota) {
        for &i in m.choose_multiple(&mut rng, q) {
            in_valid[i] = true;
        }
    }
    let (mut fit, mut valid) = (Vec::new(), Vec::new());
    for (r, v) in train.iter().zip(in_valid) {
        if v {
            valid.push(r.clone());
        } else {
            fit.push(r.clone());
        }
    }
    Ok((fit, valid))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    /// Duplicate minority records (with replacement) up to the largest class.
    Over,
    /// Drop majority records (without replacement) down to the smallest class.
    Under,
    None,
}

impl FromStr for ResampleMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "over" => Ok(ResampleMode::Over),
            "under" => Ok(ResampleMode::Under),
            "none" => Ok(ResampleMode::None),
            other => Err(format!("unknown resample mode `{other}` (expected over, under or none)")),
        }
    }
}

/// Balances every class at `level` to the largest (over) or smallest (under)
/// class count. Output order is a seeded shuffle.
pub fn resample(records: &[TweetRecord], level: Level, mode: ResampleMode, seed: u64) -> Result<Vec<TweetRecord>> {
    let members = class_members(records, level)?;
    let present = members.iter().filter(|m| !m.is_empty()).count();
    if present < 2 {
        return Err(CorpusError::SingleClass { level, found: present });
    }
    if let Some(k) = members.iter().position(Vec::is_empty) {
        return Err(CorpusError::EmptyClass { level, class: level.class_names()[k] });
    }
    let mut rng = seed::rng(seed::mix(seed, seed::stream::RESAMPLE));
    let mut picked: Vec<usize> = Vec::with_capacity(records.len());
    match mode {
        ResampleMode::None => picked.extend(0..records.len()),
        ResampleMode::Over => {
            let pivot = members.iter().map(Vec::len).max().unwrap_or(0);
            for m in &members {
                picked.extend_from_slice(m);
                for _ in m.len()..pivot {
                    picked.push(m[rng.gen_range(0..m.len())]);
                }
            }
        }
        ResampleMode::Under => {
            let pivot = members.iter().map(Vec::len).min().unwrap_or(0);
            for m in &members {
                picked.extend(m.choose_multiple(&mut rng, pivot).copied());
            }
        }
    }
    picked.shuffle(&mut rng);
    Ok(picked.into_iter().map(|i| records[i].clone()).collect())
}

/// Ids shared by both sets; empty for a proper split.
pub fn overlapping_ids(a: &[TweetRecord], b: &[TweetRecord]) -> Vec<String> {
    let ids: HashSet<&str> = a.iter().map(|r| r.id.as_str()).collect();
    b.iter().filter(|r| ids.contains(r.id.as_str())).map(|r| r.id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tsv(rows: &[&str]) -> String {
        let mut s = HEADER.join("\t");
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn rec(id: usize, a: LabelA, b: Option<LabelB>, c: Option<LabelC>) -> TweetRecord {
        TweetRecord::new(id.to_string(), format!("tweet {id}"), a, b, c).unwrap()
    }

    fn binary(not: usize, off: usize) -> Vec<TweetRecord> {
        let mut v = Vec::new();
        for i in 0..not {
            v.push(rec(i, LabelA::Not, None, None));
        }
        for i in 0..off {
            v.push(rec(not + i, LabelA::Off, Some(LabelB::Unt), None));
        }
        v
    }

    #[test]
    fn parses_offensive_untargeted_row() {
        let data =
            tsv(&["86426\t@USER She should ask a few native Americans what their take on this is.\tOFF\tUNT\tNULL"]);
        let recs = parse_olid(data.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "86426");
        assert_eq!(recs[0].a, LabelA::Off);
        assert_eq!(recs[0].b, Some(LabelB::Unt));
        assert_eq!(recs[0].c, None);
    }

    #[test]
    fn parses_not_row_with_absent_labels() {
        let recs = parse_olid(tsv(&["1\thello there\tNOT\tNULL\tNULL"]).as_bytes()).unwrap();
        assert_eq!((recs[0].a, recs[0].b, recs[0].c), (LabelA::Not, None, None));
    }

    #[test]
    fn rejects_hierarchy_violation_with_line() {
        let data = tsv(&["1\tfine\tNOT\tNULL\tNULL", "2\tbad\tNOT\tTIN\tNULL"]);
        match parse_olid(data.as_bytes()) {
            Err(CorpusError::HierarchyViolation { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_and_unknown_tokens() {
        assert!(matches!(
            parse_olid(tsv(&["1\tonly three\tNOT"]).as_bytes()),
            Err(CorpusError::Malformed { line: 2, found: 3, .. })
        ));
        assert!(matches!(
            parse_olid(tsv(&["1\tx\tMEH\tNULL\tNULL"]).as_bytes()),
            Err(CorpusError::UnknownLabel { line: 2, .. })
        ));
        assert!(matches!(
            parse_olid(tsv(&["1\t   \tNOT\tNULL\tNULL"]).as_bytes()),
            Err(CorpusError::EmptyText { line: 2 })
        ));
        assert!(matches!(
            parse_olid(tsv(&["1\tx\tOFF\tTIN\tNULL"]).as_bytes()),
            Err(CorpusError::HierarchyViolation { line: 2, .. })
        ));
        assert!(matches!(parse_olid("id\ttext\n".as_bytes()), Err(CorpusError::BadHeader { line: 1 })));
    }

    #[test]
    fn write_then_parse_preserves_records() {
        let recs = vec![rec(1, LabelA::Off, Some(LabelB::Tin), Some(LabelC::Grp)), rec(2, LabelA::Not, None, None)];
        let mut buf = Vec::new();
        write_olid(&mut buf, &recs).unwrap();
        assert_eq!(parse_olid(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn class_counts_project_levels() {
        let recs = vec![
            rec(1, LabelA::Off, Some(LabelB::Tin), Some(LabelC::Grp)),
            rec(2, LabelA::Off, Some(LabelB::Unt), None),
            rec(3, LabelA::Not, None, None),
        ];
        assert_eq!(class_counts(&recs, Level::A).counts, vec![1, 2]);
        assert_eq!(class_counts(&recs, Level::B).counts, vec![1, 1]);
        assert_eq!(class_counts(&recs, Level::C).counts, vec![0, 1, 0]);
        assert_eq!(class_counts(&[], Level::C).counts, vec![0, 0, 0]);
    }

    #[test]
    fn ratio_split_sizes_and_determinism() {
        let recs = binary(70, 30);
        let spec = SplitSpec { mode: SplitMode::Ratio, ratio: 0.8, seed: 9 };
        let (tr, te) = split(&recs, None, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        assert!(overlapping_ids(&tr, &te).is_empty());
        assert_eq!(split(&recs, None, &spec).unwrap(), (tr, te));
        assert!(matches!(split(&recs[..1], None, &spec), Err(CorpusError::TooFewRecords(1))));
        let bad = SplitSpec { ratio: 1.0, ..spec };
        assert!(split(&recs, None, &bad).is_err());
    }

    #[test]
    fn holdout_is_stratified() {
        let recs = binary(80, 20);
        let (fit, valid) = holdout_validation(&recs, Level::A, 0.1, 3).unwrap();
        assert_eq!(class_counts(&valid, Level::A).counts, vec![8, 2]);
        assert_eq!(fit.len(), 90);
        assert_eq!(holdout_validation(&recs, Level::A, 0.1, 3).unwrap().1, valid);
    }

    #[test]
    fn holdout_two_singletons_puts_one_on_each_side() {
        let recs = binary(1, 1);
        let (fit, valid) = holdout_validation(&recs, Level::A, 0.5, 0).unwrap();
        assert_eq!((fit.len(), valid.len()), (1, 1));
    }

    #[test]
    fn holdout_minority_rounds_up() {
        // 0.25 * 10 = 2.5 and 0.25 * 2 = 0.5; total round(3.0) = 3 -> remainders tie, minority wins.
        let recs = binary(10, 2);
        let (_, valid) = holdout_validation(&recs, Level::A, 0.25, 1).unwrap();
        assert_eq!(class_counts(&valid, Level::A).counts, vec![2, 1]);
    }

    #[test]
    fn holdout_requires_projection_and_nonempty_classes() {
        assert!(matches!(holdout_validation(&binary(5, 0), Level::A, 0.2, 0), Err(CorpusError::EmptyClass { .. })));
        assert!(matches!(holdout_validation(&binary(5, 5), Level::B, 0.2, 0), Err(CorpusError::Unprojected { .. })));
    }

    #[test]
    fn resample_balances_binary() {
        let recs = binary(30, 10);
        let over = resample(&recs, Level::A, ResampleMode::Over, 1).unwrap();
        assert_eq!(class_counts(&over, Level::A).counts, vec![30, 30]);
        let under = resample(&recs, Level::A, ResampleMode::Under, 1).unwrap();
        assert_eq!(class_counts(&under, Level::A).counts, vec![10, 10]);
        assert!(matches!(
            resample(&binary(4, 0), Level::A, ResampleMode::Over, 1),
            Err(CorpusError::SingleClass { found: 1, .. })
        ));
    }

    #[test]
    fn resample_balanced_is_permutation() {
        let recs = binary(6, 6);
        for mode in [ResampleMode::Over, ResampleMode::Under] {
            let mut out = resample(&recs, Level::A, mode, 4).unwrap();
            let mut expect = recs.clone();
            out.sort_by(|a, b| a.id.cmp(&b.id));
            expect.sort_by(|a, b| a.id.cmp(&b.id));
            assert_eq!(out, expect);
        }
    }
}
