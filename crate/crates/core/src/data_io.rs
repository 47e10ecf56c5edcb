//! Cascade files and corpora.
//!
//! A cascade file has one `time_seconds,followers` record per line. The
//! first record is the original post and must have time 0; an optional
//! `time,magnitude` header line is skipped.
//!
//! A corpus is a directory of `<id>.csv` cascade files, optionally with an
//! `index.csv` manifest (`id,path,n_events`) listing them.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cascade, Event, MarkDistribution};
use crate::scalar::Scalar;

pub const HEADER: [&str; 2] = ["time", "magnitude"];
pub const INDEX_FILE: &str = "index.csv";
/// Seconds in the seven-day popularity window.
pub const SEVEN_DAYS: f64 = 7.0 * 86_400.0;
/// Minimum number of retweets within seven days for a corpus cascade.
pub const MIN_RETWEETS: usize = 49;

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        msg: msg.into(),
    }
}

fn parse_time<T: Scalar>(s: &str, line: u64) -> Result<T> {
    let t = T::from_str_radix(s, 10).map_err(|_| parse_err(line, format!("bad time {s:?}")))?;
    if !t.is_finite() || t < T::zero() {
        return Err(parse_err(line, format!("time must be finite and >= 0, got {s}")));
    }
    Ok(t)
}

fn parse_mark(s: &str, line: u64) -> Result<u64> {
    if let Ok(m) = s.parse::<u64>() {
        return Ok(m);
    }
    match s.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(parse_err(line, format!("follower count must be >= 0, got {s}"))),
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(parse_err(line, format!("bad follower count {s:?}"))),
    }
}

/// Parses a cascade file. Out-of-order records are sorted (stably) with a
/// warning.
pub fn parse_cascade<T: Scalar, R: Read>(reader: R) -> Result<Cascade<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(None)
        .from_reader(reader);
    let mut origin: Option<u64> = None;
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        if origin.is_none() && events.is_empty() && rec[0].eq_ignore_ascii_case(HEADER[0]) {
            continue;
        }
        let time: T = parse_time(&rec[0], line)?;
        let mark = parse_mark(&rec[1], line)?;
        match origin {
            None if time == T::zero() => origin = Some(mark),
            None => return Err(parse_err(line, format!("first record must be the origin at time 0, got {time}"))),
            Some(_) => events.push(Event::new(time, mark)),
        }
    }
    let origin = origin.ok_or_else(|| parse_err(0, "missing origin record"))?;
    if events.windows(2).any(|w: &[Event<T>]| w[1].time < w[0].time) {
        log::warn!("cascade records are not in time order; sorting");
    }
    Cascade::new(origin, events)
}

pub fn parse_cascade_str<T: Scalar>(text: &str) -> Result<Cascade<T>> {
    parse_cascade(text.as_bytes())
}

/// Writes the cascade with a header line; times use the shortest
/// representation that parses back to the same value.
pub fn serialize_cascade<T: Scalar, W: Write>(cascade: &Cascade<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    w.write_record(["0".to_string(), cascade.origin_mark().to_string()])?;
    for e in cascade.events() {
        w.write_record([e.time.to_string(), e.mark.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cascade_to_string<T: Scalar>(cascade: &Cascade<T>) -> Result<String> {
    let mut buf = Vec::new();
    serialize_cascade(cascade, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Keeps the events with `τᵢ ≤ T`.
pub fn censor<T: Scalar>(cascade: &Cascade<T>, censor_time: T) -> Result<Cascade<T>> {
    if !(censor_time >= T::zero()) {
        return Err(Error::Domain(format!("censoring time must be >= 0, got {censor_time}")));
    }
    Ok(cascade.truncated(cascade.count_until(censor_time)))
}

/// Retweet marks observed up to `T`; the origin mark is excluded.
pub fn empirical_marks<T: Scalar>(cascade: &Cascade<T>, censor_time: T) -> MarkDistribution {
    let n = cascade.count_until(censor_time);
    MarkDistribution::new(cascade.events()[..n].iter().map(|e| e.mark).collect())
}

/// Errors unless the cascade has at least `min` retweets by `horizon`.
pub fn check_min_retweets<T: Scalar>(cascade: &Cascade<T>, horizon: T, min: usize) -> Result<()> {
    let n = cascade.count_until(horizon);
    if n < min {
        return Err(Error::Domain(format!("cascade has {n} retweets by {horizon} s, fewer than {min}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeFile<T> {
    pub id: String,
    pub path: PathBuf,
    pub cascade: Cascade<T>,
}

impl<T: Scalar> CascadeFile<T> {
    /// Reads a file; the id is the file stem.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("cannot derive an id from {}", path.display())))?
            .to_string();
        let cascade = parse_cascade(fs::File::open(path)?)?;
        Ok(Self {
            id,
            path: path.to_path_buf(),
            cascade,
        })
    }

    pub fn write(&self) -> Result<()> {
        serialize_cascade(&self.cascade, fs::File::create(&self.path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
    pub event_count: usize,
    /// Retweets within seven days.
    pub final_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusIndex {
    root: PathBuf,
    entries: Vec<CorpusEntry>,
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    id: String,
    path: PathBuf,
    n_events: usize,
}

impl CorpusIndex {
    /// Indexes `dir`, reading every cascade once. Uses `index.csv` when
    /// present (in manifest order), otherwise all `*.csv` files sorted by
    /// id.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let manifest = root.join(INDEX_FILE);
        let listed: Vec<(String, PathBuf, Option<usize>)> = if manifest.is_file() {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&manifest)?;
            rdr.deserialize::<IndexRow>()
                .map(|r| r.map(|r| (r.id, r.path, Some(r.n_events))).map_err(Error::from))
                .collect::<Result<_>>()?
        } else {
            let mut files = Vec::new();
            for entry in fs::read_dir(&root)? {
                let path = entry?.path();
                let is_csv = path.extension().is_some_and(|e| e == "csv");
                if !is_csv || path.file_name().is_some_and(|n| n == INDEX_FILE) {
                    continue;
                }
                let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                let rel = PathBuf::from(path.file_name().expect("file"));
                files.push((id, rel, None));
            }
            files.sort_by(|a, b| a.0.cmp(&b.0));
            files
        };

        let mut seen = std::collections::HashSet::new();
        let mut entries = Vec::with_capacity(listed.len());
        for (id, rel, declared) in listed {
            if !seen.insert(id.clone()) {
                return Err(Error::Config(format!("duplicate cascade id {id:?}")));
            }
            let file = CascadeFile::<f64>::read(root.join(&rel))?;
            if let Some(n) = declared {
                if n != file.cascade.len() {
                    return Err(Error::Config(format!(
                        "{id}: manifest lists {n} events, file has {}",
                        file.cascade.len()
                    )));
                }
            }
            entries.push(CorpusEntry {
                id,
                path: rel,
                event_count: file.cascade.len(),
                final_count: file.cascade.count_until(SEVEN_DAYS),
            });
        }
        Ok(Self { root, entries })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn read<T: Scalar>(&self, entry: &CorpusEntry) -> Result<CascadeFile<T>> {
        let mut f = CascadeFile::read(self.root.join(&entry.path))?;
        f.id = entry.id.clone();
        Ok(f)
    }
}

/// Writes `<id>.csv` for each cascade plus `index.csv` into `dir`.
pub fn write_corpus<T: Scalar>(dir: impl AsRef<Path>, cascades: &[(String, Cascade<T>)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut index = csv::Writer::from_path(dir.join(INDEX_FILE))?;
    index.write_record(["id", "path", "n_events"])?;
    for (id, cascade) in cascades {
        let name = format!("{id}.csv");
        serialize_cascade(cascade, fs::File::create(dir.join(&name))?)?;
        index.write_record([id.as_str(), name.as_str(), &cascade.len().to_string()])?;
    }
    index.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_file() {
        let c: Cascade<f64> = parse_cascade_str("0,3618\n12,42").unwrap();
        assert_eq!(c.origin_mark(), 3618);
        assert_eq!(c.events(), &[Event::new(12.0, 42)]);
    }

    #[test]
    fn header_and_origin_only() {
        let c: Cascade<f64> = parse_cascade_str("time,magnitude\n0,10\n").unwrap();
        assert_eq!(c.origin_mark(), 10);
        assert!(c.is_empty());
        let c: Cascade<f64> = parse_cascade_str("time,magnitude\n0.0,10\n1.5,7.0\n").unwrap();
        assert_eq!(c.events(), &[Event::new(1.5, 7)]);
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse_cascade_str::<f64>("0,5\n3,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse_cascade_str::<f64>("0,5\n-1,3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_cascade_str::<f64>("0,5\n1,-3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_cascade_str::<f64>("0,5\n1,3,4\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_cascade_str::<f64>("5,5\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_cascade_str::<f64>(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_cascade_str::<f64>("time,magnitude\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unsorted_records_are_sorted() {
        let c: Cascade<f64> = parse_cascade_str("0,1\n9,2\n3,3\n9,4\n").unwrap();
        let got: Vec<_> = c.events().iter().map(|e| (e.time, e.mark)).collect();
        assert_eq!(got, vec![(3.0, 3), (9.0, 2), (9.0, 4)]);
    }

    #[test]
    fn censoring_boundaries() {
        let c: Cascade<f64> = parse_cascade_str("0,1\n1,2\n2,3\n3,4\n").unwrap();
        assert_eq!(censor(&c, 10.0).unwrap(), c);
        assert!(censor(&c, 0.0).unwrap().is_empty());
        assert_eq!(censor(&c, 2.0).unwrap().len(), 2);
        assert!(censor(&c, -1.0).is_err());
    }

    #[test]
    fn marks_exclude_origin() {
        let c: Cascade<f64> = parse_cascade_str("0,100\n1,5\n2,5\n3,7\n").unwrap();
        assert_eq!(empirical_marks(&c, 10.0).marks(), &[5, 5, 7]);
        assert!(empirical_marks(&Cascade::<f64>::origin_only(3), 10.0).is_empty());
    }

    #[test]
    fn min_retweets_rule() {
        let events = (1..=49).map(|i| Event::new(i as f64, 1)).collect();
        let c = Cascade::new(0, events).unwrap();
        assert!(check_min_retweets(&c, SEVEN_DAYS, MIN_RETWEETS).is_ok());
        assert!(check_min_retweets(&c, 48.5, MIN_RETWEETS).is_err());
    }
}
