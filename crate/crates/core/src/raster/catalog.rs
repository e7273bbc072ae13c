use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::RasterError;

/// Fires below this burn area are left out of the study set.
pub const MIN_ACRES: f64 = 3000.0;

pub const HEADER: [&str; 6] = ["id", "name", "lon", "lat", "containment_month", "acres"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    /// Zero-based calendar month.
    pub fn month_index(&self) -> usize {
        (self.month - 1) as usize
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s.split_once('-').ok_or_else(|| format!("{s:?} is not YYYY-MM"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month {month} out of range"));
        }
        Ok(Self { year, month })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireRecord {
    pub id: String,
    pub name: String,
    pub lon: f64,
    pub lat: f64,
    pub containment_month: YearMonth,
    pub acres: f64,
}

impl FireRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(format!("lon {} outside [-180, 180]", self.lon));
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(format!("lat {} outside [-90, 90]", self.lat));
        }
        if !self.acres.is_finite() || self.acres < 0.0 {
            return Err(format!("acres {} invalid", self.acres));
        }
        Ok(())
    }

    pub fn is_included(&self) -> bool {
        self.acres >= MIN_ACRES
    }
}

fn parse_row(rec: &csv::StringRecord) -> Result<FireRecord, String> {
    if rec.len() != HEADER.len() {
        return Err(format!("expected {} fields, got {}", HEADER.len(), rec.len()));
    }
    let num = |i: usize| -> Result<f64, String> {
        rec[i].trim().parse::<f64>().map_err(|_| format!("{} {:?} is not a number", HEADER[i], &rec[i]))
    };
    let r = FireRecord {
        id: rec[0].trim().to_string(),
        name: rec[1].trim().to_string(),
        lon: num(2)?,
        lat: num(3)?,
        containment_month: rec[4].trim().parse()?,
        acres: num(5)?,
    };
    r.validate()?;
    Ok(r)
}

pub fn parse_catalog(text: &str) -> Result<Vec<FireRecord>, RasterError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| RasterError::Catalog { line: 1, message: e.to_string() })?.clone();
    if headers.iter().map(str::trim).ne(HEADER.iter().copied()) {
        return Err(RasterError::Catalog { line: 1, message: format!("header must be {}", HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| RasterError::Catalog { line, message: e.to_string() })?;
        out.push(parse_row(&rec).map_err(|message| RasterError::Catalog { line, message })?);
    }
    Ok(out)
}

pub fn read_catalog(path: &Path) -> Result<Vec<FireRecord>, RasterError> {
    let text = std::fs::read_to_string(path).map_err(|e| RasterError::io(path, e))?;
    parse_catalog(&text)
}

pub fn write_catalog(records: &[FireRecord], path: &Path) -> Result<(), RasterError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| RasterError::Format(e.to_string());
    wtr.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        wtr.write_record([
            r.id.clone(),
            r.name.clone(),
            format!("{}", r.lon),
            format!("{}", r.lat),
            r.containment_month.to_string(),
            format!("{}", r.acres),
        ])
        .map_err(csv_err)?;
    }
    let bytes = wtr.into_inner().map_err(|e| RasterError::Format(e.to_string()))?;
    let mut f = std::fs::File::create(path).map_err(|e| RasterError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| RasterError::io(path, e))
}
