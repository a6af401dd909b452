use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DataError;

pub const CSV_HEADER: &str = "Date,Open,High,Low,Close,Volume";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvRow {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
}

impl OhlcvRow {
    fn prices_positive(&self) -> bool {
        [self.open, self.high, self.low, self.close]
            .iter()
            .all(|p| p.is_finite() && *p > 0.0)
    }
}

/// Daily bars for one ticker, dates strictly increasing, prices positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcvSeries {
    ticker: String,
    rows: Vec<OhlcvRow>,
}

impl OhlcvSeries {
    /// Sorts `rows` by date and validates the series invariants.
    pub fn new(ticker: impl Into<String>, mut rows: Vec<OhlcvRow>) -> Result<Self, DataError> {
        rows.sort_by_key(|r| r.date);
        if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(DataError::Validation {
                line: None,
                message: format!("duplicate date {}", w[0].date),
            });
        }
        if let Some(r) = rows.iter().find(|r| !r.prices_positive()) {
            return Err(DataError::Validation {
                line: None,
                message: format!("nonpositive price on {}", r.date),
            });
        }
        Ok(Self { ticker: ticker.into(), rows })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn rows(&self) -> &[OhlcvRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.close).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.rows.first().map(|r| r.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.rows.last().map(|r| r.date)
    }

    /// Rows with `start <= date <= end`.
    pub fn restrict(&self, start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            ticker: self.ticker.clone(),
            rows: self.rows.iter().filter(|r| r.date >= start && r.date <= end).copied().collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 64);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.date.format("%Y-%m-%d"),
                r.open,
                r.high,
                r.low,
                r.close,
                r.volume
            );
        }
        out
    }
}

/// Parses `Date,Open,High,Low,Close,Volume` CSV. Line numbers in errors
/// are 1-based and count the header.
pub fn parse_ohlcv_csv(ticker: &str, text: &str) -> Result<OhlcvSeries, DataError> {
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header != CSV_HEADER {
        return Err(DataError::Format {
            offset: 0,
            message: format!("expected header `{CSV_HEADER}`, found `{header}`"),
        });
    }
    let mut rows = Vec::new();
    let mut offset = header.len() + 1;
    for (i, raw) in lines.enumerate() {
        let line_no = i + 2;
        let line = raw.trim_end_matches('\r');
        let line_offset = offset;
        offset += raw.len() + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(DataError::Format {
                offset: line_offset,
                message: format!("line {line_no}: expected 6 fields, found {}", fields.len()),
            });
        }
        let bad = |what: &str| DataError::Format {
            offset: line_offset,
            message: format!("line {line_no}: cannot parse {what}"),
        };
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d").map_err(|_| bad("date"))?;
        let price = |k: usize, name: &str| -> Result<f64, DataError> {
            let v: f64 = fields[k].trim().parse().map_err(|_| bad(name))?;
            if !v.is_finite() || v <= 0.0 {
                return Err(DataError::Validation {
                    line: Some(line_no),
                    message: format!("{name} must be positive, got {}", fields[k]),
                });
            }
            Ok(v)
        };
        let row = OhlcvRow {
            date,
            open: price(1, "Open")?,
            high: price(2, "High")?,
            low: price(3, "Low")?,
            close: price(4, "Close")?,
            volume: parse_volume(fields[5]).ok_or_else(|| bad("Volume"))?,
        };
        rows.push(row);
    }
    OhlcvSeries::new(ticker, rows)
}

fn parse_volume(field: &str) -> Option<u64> {
    let f = field.trim();
    f.parse::<u64>().ok().or_else(|| {
        // some sources print integral volumes as floats
        let v: f64 = f.parse().ok()?;
        (v.is_finite() && v >= 0.0 && v.fract() == 0.0).then_some(v as u64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_LINES: &str = "Date,Open,High,Low,Close,Volume\n\
        2020-01-02,74.06,75.15,73.79,75.09,135480400\n\
        2020-01-03,74.28,75.14,74.12,74.35,146322800\n";

    #[test]
    fn parses_two_lines() {
        let s = parse_ohlcv_csv("AAPL", TWO_LINES).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.rows()[1].close, 74.35);
        assert_eq!(s.rows()[0].volume, 135_480_400);
    }

    #[test]
    fn zero_close_names_the_line() {
        let text = TWO_LINES.replace("74.35", "0");
        match parse_ohlcv_csv("AAPL", &text) {
            Err(DataError::Validation { line: Some(3), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_must_match_exactly() {
        let text = TWO_LINES.replace("Date,Open,High,Low,Close,Volume", "Date,High,Open,Low,Close,Volume");
        assert!(matches!(parse_ohlcv_csv("AAPL", &text), Err(DataError::Format { offset: 0, .. })));
        let text = TWO_LINES.replace("Date,", "date,");
        assert!(parse_ohlcv_csv("AAPL", &text).is_err());
        assert!(parse_ohlcv_csv("AAPL", "").is_err());
    }

    #[test]
    fn unsorted_input_is_sorted_and_duplicates_rejected() {
        let text = "Date,Open,High,Low,Close,Volume\n\
            2020-01-03,1,1,1,1,1\n2020-01-02,1,1,1,2,1\n";
        let s = parse_ohlcv_csv("X", text).unwrap();
        assert!(s.rows()[0].date < s.rows()[1].date);
        let dup = "Date,Open,High,Low,Close,Volume\n2020-01-03,1,1,1,1,1\n2020-01-03,1,1,1,2,1\n";
        assert!(parse_ohlcv_csv("X", dup).is_err());
    }

    fn arb_series() -> impl Strategy<Value = OhlcvSeries> {
        prop::collection::vec(
            (0u32..5, 1e-3f64..1e4, 1e-3f64..1e4, 1e-3f64..1e4, 1e-3f64..1e4, 0u64..10_000_000_000),
            1..40,
        )
        .prop_map(|raw| {
            let mut date = NaiveDate::from_ymd_opt(2010, 1, 4).unwrap();
            let rows = raw
                .into_iter()
                .map(|(gap, open, high, low, close, volume)| {
                    date = date + chrono::Days::new(u64::from(gap) + 1);
                    OhlcvRow { date, open, high, low, close, volume }
                })
                .collect();
            OhlcvSeries::new("T", rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(series in arb_series()) {
            let text = series.to_csv();
            let back = parse_ohlcv_csv("T", &text).unwrap();
            prop_assert_eq!(&back, &series);
            prop_assert_eq!(back.to_csv(), text);
        }
    }
}
