use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use super::schema::ColumnIndex;
use super::{DatasetSchema, Sample};
use crate::context::{assign_hour_group, HolidayCalendar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(DataFormat::Csv),
            Some("jsonl") => Ok(DataFormat::Jsonl),
            _ => Err(Error::data(path.display().to_string(), "expected a .csv or .jsonl file")),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub schema: DatasetSchema,
    pub calendar: HolidayCalendar,
    /// Rejected rows tolerated before loading fails.
    pub max_rejected: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            schema: DatasetSchema::default(),
            calendar: HolidayCalendar::default(),
            max_rejected: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub path: PathBuf,
    pub rows: usize,
    pub rejected: Vec<RowError>,
}

enum Source {
    Csv {
        reader: csv::Reader<BufReader<File>>,
        cols: ColumnIndex,
        record: csv::StringRecord,
    },
    Jsonl {
        lines: Lines<BufReader<File>>,
        line: u64,
    },
}

/// Streaming reader over a CSV or JSONL file. Malformed rows come out as
/// [`Error::Data`] items whose location carries the line number; header
/// problems fail [`SampleReader::open`].
pub struct SampleReader {
    path: PathBuf,
    source: Source,
    schema: DatasetSchema,
    calendar: HolidayCalendar,
}

impl SampleReader {
    pub fn open(path: &Path, opts: &LoadOptions) -> Result<Self> {
        let format = DataFormat::from_path(path)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let source = match format {
            DataFormat::Csv => {
                let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(BufReader::new(file));
                let header = reader.headers()?.clone();
                let cols = opts
                    .schema
                    .index(&header)
                    .map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
                Source::Csv {
                    reader,
                    cols,
                    record: csv::StringRecord::new(),
                }
            }
            DataFormat::Jsonl => Source::Jsonl {
                lines: BufReader::new(file).lines(),
                line: 0,
            },
        };
        Ok(Self {
            path: path.to_path_buf(),
            source,
            schema: opts.schema.clone(),
            calendar: opts.calendar.clone(),
        })
    }

    fn row_error(&self, line: u64, message: impl Into<String>) -> Error {
        Error::data(format!("{}:{line}", self.path.display()), message)
    }
}

fn check_sample(mut s: Sample, calendar: &HolidayCalendar) -> std::result::Result<Sample, String> {
    assign_hour_group(s.request.hour_of_day).map_err(|e| e.to_string())?;
    for e in &s.history {
        assign_hour_group(e.hour_of_day).map_err(|e| e.to_string())?;
    }
    if s.request.is_holiday > 1 {
        return Err(format!("is_holiday {} is not 0/1", s.request.is_holiday));
    }
    s.request.is_holiday |= calendar.is_holiday_at(s.request.timestamp);
    s.history.sort_by_key(|e| e.timestamp);
    Ok(s)
}

impl Iterator for SampleReader {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.source {
            Source::Csv { reader, cols, record } => match reader.read_record(record) {
                Ok(false) => None,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    Some(Err(self.row_error(line, e.to_string())))
                }
                Ok(true) => {
                    let line = record.position().map_or(0, |p| p.line());
                    let cal = &self.calendar;
                    let parsed = self.schema.parse_record(cols, record, &|ts| cal.is_holiday_at(ts));
                    Some(parsed.map_err(|m| self.row_error(line, m)))
                }
            },
            Source::Jsonl { lines, line } => loop {
                let next = lines.next()?;
                *line += 1;
                let ln = *line;
                match next {
                    Err(e) => return Some(Err(Error::io(&self.path, e))),
                    Ok(text) if text.trim().is_empty() => continue,
                    Ok(text) => {
                        let parsed = serde_json::from_str::<Sample>(&text)
                            .map_err(|e| e.to_string())
                            .and_then(|s| check_sample(s, &self.calendar));
                        return Some(parsed.map_err(|m| self.row_error(ln, m)));
                    }
                }
            },
        }
    }
}

/// Reads a whole file, collecting row-level errors. Fails when more than
/// `max_rejected` rows are malformed.
pub fn load_dataset(path: &Path, opts: &LoadOptions) -> Result<(Vec<Sample>, LoadReport)> {
    let reader = SampleReader::open(path, opts)?;
    let mut rows = Vec::new();
    let mut report = LoadReport {
        path: path.to_path_buf(),
        ..Default::default()
    };
    for item in reader {
        match item {
            Ok(s) => rows.push(s),
            Err(Error::Data { location, message }) => {
                let line = location.rsplit(':').next().and_then(|l| l.parse().ok()).unwrap_or(0);
                report.rejected.push(RowError { line, message });
                if report.rejected.len() > opts.max_rejected {
                    let first = &report.rejected[0];
                    return Err(Error::data(
                        path.display().to_string(),
                        format!(
                            "more than {} malformed rows; first at line {}: {}",
                            opts.max_rejected, first.line, first.message
                        ),
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    }
    report.rows = rows.len();
    Ok((rows, report))
}

fn split_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for ext in ["csv", "jsonl"] {
        let p = dir.join(format!("{stem}.{ext}"));
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::data(dir.display().to_string(), format!("no {stem}.csv or {stem}.jsonl")))
}

/// Loads `train` and `test` from a data directory, merging `holidays.txt`
/// into the calendar when present. CSV is preferred over JSONL.
pub fn load_split_dir(dir: &Path, opts: &LoadOptions) -> Result<(Vec<Sample>, Vec<Sample>, Vec<LoadReport>)> {
    let mut opts = opts.clone();
    let hol = dir.join("holidays.txt");
    if hol.exists() {
        let extra = HolidayCalendar::load(&hol)?;
        opts.calendar = HolidayCalendar::new(opts.calendar.dates().chain(extra.dates()).copied());
    }
    let (train, r1) = load_dataset(&split_file(dir, "train")?, &opts)?;
    let (test, r2) = load_dataset(&split_file(dir, "test")?, &opts)?;
    Ok((train, test, vec![r1, r2]))
}

pub fn write_csv(path: &Path, rows: &[Sample], schema: &DatasetSchema) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(schema.header())?;
    for s in rows {
        w.write_record(schema.to_record(s))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jsonl(path: &Path, rows: &[Sample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in rows {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
