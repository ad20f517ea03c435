use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Hourly univariate power series.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    timestamps: Vec<NaiveDateTime>,
    values: Vec<f64>,
    /// Indices i where timestamps[i] − timestamps[i−1] is not one hour.
    gaps: Vec<usize>,
}

impl TimeSeries {
    /// Builds a series, rejecting non-increasing timestamps and recording
    /// any spacing other than one hour as a gap.
    pub fn new(timestamps: Vec<NaiveDateTime>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::data("timestamp and value counts differ"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite value at index {i}")));
        }
        let mut gaps = Vec::new();
        for i in 1..timestamps.len() {
            let step = timestamps[i] - timestamps[i - 1];
            if step <= Duration::zero() {
                return Err(Error::data(format!("timestamps not strictly increasing at index {i}")));
            }
            if step != Duration::hours(1) {
                gaps.push(i);
            }
        }
        Ok(TimeSeries {
            timestamps,
            values,
            gaps,
        })
    }

    /// Hourly series starting at `start`.
    pub fn hourly(start: NaiveDateTime, values: Vec<f64>) -> Result<Self> {
        let timestamps = (0..values.len()).map(|i| start + Duration::hours(i as i64)).collect();
        Self::new(timestamps, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn gaps(&self) -> &[usize] {
        &self.gaps
    }

    /// Points `range` as a new series.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        let gaps = self
            .gaps
            .iter()
            .filter(|&&g| g > range.start && g < range.end)
            .map(|g| g - range.start)
            .collect();
        TimeSeries {
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
            gaps,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "timestamp,power")?;
        for (t, v) in self.timestamps.iter().zip(&self.values) {
            writeln!(out, "{},{}", t.format(TIMESTAMP_FORMAT), v)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

/// Reads a `timestamp,power` CSV with ISO-8601 timestamps.
pub fn load_csv(path: &Path) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "power" {
        return Err(parse_err(
            1,
            format!(
                "expected header `timestamp,power`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(timestamps.len() + 2, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let ts =
            parse_timestamp(&record[0]).ok_or_else(|| parse_err(line, format!("bad timestamp `{}`", &record[0])))?;
        let v: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad power value `{}`", &record[1])))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite power value `{}`", &record[1])));
        }
        if let Some(prev) = timestamps.last() {
            if ts <= *prev {
                let what = if ts == *prev { "duplicate" } else { "non-monotone" };
                return Err(parse_err(line, format!("{what} timestamp {}", &record[0])));
            }
        }
        timestamps.push(ts);
        values.push(v);
    }
    if values.is_empty() {
        return Err(parse_err(1, "file contains no data rows".into()));
    }
    TimeSeries::new(timestamps, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("series.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_valid_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "timestamp,power\n2020-01-01T00:00:00,1.5\n2020-01-01T01:00:00,2\n2020-01-01T02:00:00,0\n",
        );
        let ts = load_csv(&p).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.values(), &[1.5, 2.0, 0.0]);
        assert!(ts.gaps().is_empty());
    }

    #[test]
    fn duplicate_timestamp_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "timestamp,power\n2020-01-01T00:00:00,1\n2020-01-01T01:00:00,2\n2020-01-01T01:00:00,3\n",
        );
        let err = load_csv(&p).unwrap_err().to_string();
        assert!(err.contains(":4:") && err.contains("duplicate"), "{err}");
    }

    #[test]
    fn rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "timestamp,power\n2020-01-01T02:00:00,1\n2020-01-01T01:00:00,2\n");
        assert!(load_csv(&p).unwrap_err().to_string().contains("non-monotone"));
        let p = write(&dir, "timestamp,power\n2020-01-01T00:00:00,abc\n");
        assert!(load_csv(&p).unwrap_err().to_string().contains(":2:"));
        let p = write(&dir, "timestamp,power\n");
        assert!(load_csv(&p).is_err());
        let p = write(&dir, "");
        assert!(load_csv(&p).is_err());
        let p = write(&dir, "time,value\n2020-01-01T00:00:00,1\n");
        assert!(load_csv(&p).unwrap_err().to_string().contains("header"));
    }

    #[test]
    fn gaps_are_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "timestamp,power\n2020-01-01T00:00:00,1\n2020-01-01T01:00:00,2\n2020-01-01T05:00:00,3\n",
        );
        assert_eq!(load_csv(&p).unwrap().gaps(), &[2]);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let start = NaiveDateTime::parse_from_str("2021-03-01T00:00:00", TIMESTAMP_FORMAT).unwrap();
        let ts = TimeSeries::hourly(start, vec![0.1, 1234.5678, 0.0, 1e-7]).unwrap();
        let p = dir.path().join("x.csv");
        ts.write_csv(&p).unwrap();
        assert_eq!(load_csv(&p).unwrap(), ts);
    }
}
