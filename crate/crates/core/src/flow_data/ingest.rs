use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use super::FlowSeries;
use crate::error::{Error, Result};

/// Column names and time-grid settings for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub station_id: String,
    pub line_id: String,
    pub line_order: String,
    pub day: String,
    pub slot: String,
    pub count: String,
    pub timestamp: String,
    pub interval_minutes: u32,
    /// Fixes the day length; inferred from the data when absent.
    pub slots_per_day: Option<usize>,
    /// `HH:MM` start of service. Required for timestamp input.
    pub service_start: Option<String>,
    pub service_hours: Option<f64>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            station_id: "station_id".into(),
            line_id: "line_id".into(),
            line_order: "line_order".into(),
            day: "day".into(),
            slot: "slot".into(),
            count: "count".into(),
            timestamp: "timestamp".into(),
            interval_minutes: 15,
            slots_per_day: None,
            service_start: None,
            service_hours: None,
        }
    }
}

/// Summary of what [`ingest_csv`] read, filled or discarded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    pub stations: usize,
    pub days: usize,
    pub slots_per_day: usize,
    pub filled_slots: usize,
    pub dropped_out_of_service: usize,
    pub dropped_non_workday: usize,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows read:              {}", self.rows)?;
        writeln!(f, "stations:               {}", self.stations)?;
        writeln!(f, "workdays:               {}", self.days)?;
        writeln!(f, "slots per day:          {}", self.slots_per_day)?;
        writeln!(f, "missing slots filled:   {}", self.filled_slots)?;
        writeln!(f, "dropped (out of hours): {}", self.dropped_out_of_service)?;
        write!(f, "dropped (non-workday):  {}", self.dropped_non_workday)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum DayKey {
    Index(i64),
    Date(NaiveDate),
}

struct StationRows {
    line_id: String,
    line_order: u32,
    counts: BTreeMap<(DayKey, usize), f64>,
}

struct Columns {
    station: usize,
    line: usize,
    order: usize,
    count: usize,
    time: TimeColumns,
}

enum TimeColumns {
    DaySlot { day: usize, slot: usize },
    Timestamp { ts: usize, start: NaiveTime, slots: usize },
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn required(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    column(headers, name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, schema: &CsvSchema) -> Result<Self> {
        let time = match (column(headers, &schema.day), column(headers, &schema.timestamp)) {
            (Some(day), _) => TimeColumns::DaySlot {
                day,
                slot: required(headers, &schema.slot)?,
            },
            (None, Some(ts)) => {
                let start = schema.service_start.as_deref().ok_or_else(|| {
                    Error::Schema("timestamp input requires `service_start`".into())
                })?;
                let start = NaiveTime::parse_from_str(start, "%H:%M")
                    .map_err(|e| Error::Schema(format!("bad service_start `{start}`: {e}")))?;
                let hours = schema.service_hours.ok_or_else(|| {
                    Error::Schema("timestamp input requires `service_hours`".into())
                })?;
                let slots = (hours * 60.0 / f64::from(schema.interval_minutes)).floor() as usize;
                TimeColumns::Timestamp { ts, start, slots }
            }
            (None, None) => {
                return Err(Error::Schema(format!(
                    "need either `{}` and `{}` or `{}` columns",
                    schema.day, schema.slot, schema.timestamp
                )))
            }
        };
        Ok(Self {
            station: required(headers, &schema.station_id)?,
            line: required(headers, &schema.line_id)?,
            order: required(headers, &schema.line_order)?,
            count: required(headers, &schema.count)?,
            time,
        })
    }
}

fn parse_day(raw: &str) -> Option<DayKey> {
    let raw = raw.trim();
    raw.parse::<i64>()
        .ok()
        .map(DayKey::Index)
        .or_else(|| NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok().map(DayKey::Date))
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
}

fn is_workday(date: NaiveDate) -> bool {
    !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Reads passenger-flow records into one dense [`FlowSeries`] per station.
///
/// Days are renumbered `0..n` in chronological order; weekend dates are
/// dropped. Slots missing for a station are filled with zero.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<(Vec<FlowSeries>, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path, schema)
}

pub(crate) fn ingest_reader(
    reader: impl std::io::Read,
    path: &Path,
    schema: &CsvSchema,
) -> Result<(Vec<FlowSeries>, LoadReport)> {
    if schema.interval_minutes == 0 {
        return Err(Error::Schema("interval_minutes must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(&headers, schema)?;

    let mut report = LoadReport::default();
    let mut stations: BTreeMap<String, StationRows> = BTreeMap::new();
    let mut day_kinds = BTreeSet::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        report.rows += 1;

        let count: f64 = field(cols.count)
            .parse()
            .map_err(|_| parse_err(format!("invalid count `{}`", field(cols.count))))?;
        if !count.is_finite() || count < 0.0 {
            return Err(parse_err(format!("count must be non-negative, got `{}`", field(cols.count))));
        }
        let line_order: u32 = field(cols.order)
            .parse()
            .map_err(|_| parse_err(format!("invalid line_order `{}`", field(cols.order))))?;

        let (day, slot) = match &cols.time {
            TimeColumns::DaySlot { day, slot } => {
                let d = parse_day(field(*day))
                    .ok_or_else(|| parse_err(format!("invalid day `{}`", field(*day))))?;
                let s: usize = field(*slot)
                    .parse()
                    .map_err(|_| parse_err(format!("invalid slot `{}`", field(*slot))))?;
                (d, s)
            }
            TimeColumns::Timestamp { ts, start, slots } => {
                let t = parse_timestamp(field(*ts))
                    .ok_or_else(|| parse_err(format!("invalid timestamp `{}`", field(*ts))))?;
                let minutes = (t.time() - *start).num_minutes();
                let slot = minutes.div_euclid(i64::from(schema.interval_minutes));
                if minutes < 0 || slot as usize >= *slots {
                    report.dropped_out_of_service += 1;
                    continue;
                }
                (DayKey::Date(t.date()), slot as usize)
            }
        };
        if let DayKey::Date(date) = day {
            if !is_workday(date) {
                report.dropped_non_workday += 1;
                continue;
            }
        }
        day_kinds.insert(matches!(day, DayKey::Date(_)));

        let station_id = field(cols.station).to_string();
        let entry = stations.entry(station_id.clone()).or_insert_with(|| StationRows {
            line_id: field(cols.line).to_string(),
            line_order,
            counts: BTreeMap::new(),
        });
        if entry.line_id != field(cols.line) || entry.line_order != line_order {
            return Err(parse_err(format!(
                "station {station_id} changes line position within the file"
            )));
        }
        if entry.counts.insert((day, slot), count).is_some() {
            return Err(parse_err(format!(
                "duplicate record for station {station_id} at slot {slot}"
            )));
        }
    }
    if day_kinds.len() > 1 {
        return Err(Error::Schema("day column mixes dates and integer indices".into()));
    }

    let all_days: BTreeSet<DayKey> = stations
        .values()
        .flat_map(|s| s.counts.keys().map(|(d, _)| *d))
        .collect();
    let day_index: BTreeMap<DayKey, usize> =
        all_days.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let slots = match (&cols.time, schema.slots_per_day) {
        (_, Some(s)) => s,
        (TimeColumns::Timestamp { slots, .. }, None) => *slots,
        (TimeColumns::DaySlot { .. }, None) => infer_slots(&stations, &day_index)?,
    };
    if slots == 0 {
        return Err(Error::Schema("zero slots per day".into()));
    }

    let mut series = Vec::with_capacity(stations.len());
    for (station_id, rows) in stations {
        let mut counts = vec![vec![f64::NAN; slots]; day_index.len()];
        for ((day, slot), v) in rows.counts {
            if slot >= slots {
                return Err(Error::Schema(format!(
                    "station {station_id}: slot {slot} outside the {slots}-slot day"
                )));
            }
            counts[day_index[&day]][slot] = v;
        }
        for v in counts.iter_mut().flatten().filter(|v| v.is_nan()) {
            *v = 0.0;
            report.filled_slots += 1;
        }
        series.push(FlowSeries::new(
            station_id,
            rows.line_id,
            rows.line_order,
            schema.interval_minutes,
            counts,
        )?);
    }
    report.stations = series.len();
    report.days = day_index.len();
    report.slots_per_day = slots;
    Ok((series, report))
}

/// Every day must reach the same highest slot index.
fn infer_slots(
    stations: &BTreeMap<String, StationRows>,
    day_index: &BTreeMap<DayKey, usize>,
) -> Result<usize> {
    let mut per_day = vec![0usize; day_index.len()];
    for rows in stations.values() {
        for (day, slot) in rows.counts.keys() {
            let d = &mut per_day[day_index[day]];
            *d = (*d).max(slot + 1);
        }
    }
    let expected = per_day.first().copied().unwrap_or(0);
    if let Some(day) = per_day.iter().position(|&n| n != expected) {
        return Err(Error::Schema(format!(
            "inconsistent slot count: day {day} has {} slots, day 0 has {expected}",
            per_day[day]
        )));
    }
    Ok(expected)
}

/// Writes series in the ingestion format with integer day indices.
pub fn write_csv(path: &Path, series: &[FlowSeries]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["station_id", "line_id", "line_order", "day", "slot", "count"])?;
    for s in series {
        let order = s.line_order.to_string();
        for (day, row) in s.days().enumerate() {
            let day = day.to_string();
            for (slot, v) in row.iter().enumerate() {
                w.write_record([
                    s.station_id.as_str(),
                    s.line_id.as_str(),
                    order.as_str(),
                    day.as_str(),
                    &slot.to_string(),
                    &v.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<(Vec<FlowSeries>, LoadReport)> {
        ingest_reader(text.as_bytes(), Path::new("mem.csv"), &CsvSchema::default())
    }

    fn complete_grid(skip: Option<(&str, usize, usize)>) -> String {
        let mut text = String::from("station_id,line_id,line_order,day,slot,count\n");
        for (sid, order) in [("A", 1), ("B", 2)] {
            for day in 0..2 {
                for slot in 0..4 {
                    if skip == Some((sid, day, slot)) {
                        continue;
                    }
                    text += &format!("{sid},L1,{order},{day},{slot},{}\n", 10 * day + slot);
                }
            }
        }
        text
    }

    #[test]
    fn complete_input() {
        let (series, report) = load(&complete_grid(None)).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(report.filled_slots, 0);
        assert_eq!(series[0].num_days(), 2);
        assert_eq!(series[0].slots_per_day(), 4);
        assert_eq!(series[1].value(1, 3), 13.0);
    }

    #[test]
    fn missing_slot_is_filled() {
        let (series, report) = load(&complete_grid(Some(("B", 1, 2)))).unwrap();
        assert_eq!(report.filled_slots, 1);
        assert_eq!(series[1].value(1, 2), 0.0);
    }

    #[test]
    fn negative_count_names_row() {
        let text = "station_id,line_id,line_order,day,slot,count\nA,L,1,0,0,5\nA,L,1,0,1,-3\n";
        match load(text).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("-3"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn inconsistent_slot_counts() {
        let text = "station_id,line_id,line_order,day,slot,count\nA,L,1,0,0,1\nA,L,1,0,1,1\nA,L,1,1,0,1\n";
        assert!(matches!(load(text).unwrap_err(), Error::Schema(_)));
    }

    #[test]
    fn iso_dates_skip_weekends() {
        // 2016-03-04 is a Friday, 03-05 a Saturday, 03-07 a Monday
        let text = "station_id,line_id,line_order,day,slot,count\n\
                    A,L,1,2016-03-07,0,3\nA,L,1,2016-03-05,0,2\nA,L,1,2016-03-04,0,1\n";
        let (series, report) = load(text).unwrap();
        assert_eq!(report.dropped_non_workday, 1);
        assert_eq!(series[0].day(0), &[1.0]);
        assert_eq!(series[0].day(1), &[3.0]);
    }

    #[test]
    fn timestamps_map_to_slots() {
        let schema = CsvSchema {
            service_start: Some("06:00".into()),
            service_hours: Some(1.0),
            ..CsvSchema::default()
        };
        let text = "station_id,line_id,line_order,timestamp,count\n\
                    A,L,1,2019-01-02 06:00,4\nA,L,1,2019-01-02 06:44,5\n\
                    A,L,1,2019-01-02 05:59,9\nA,L,1,2019-01-02 07:00,9\n";
        let (series, report) = ingest_reader(text.as_bytes(), Path::new("t"), &schema).unwrap();
        assert_eq!(report.dropped_out_of_service, 2);
        assert_eq!(series[0].day(0), &[4.0, 0.0, 5.0, 0.0]);
        assert_eq!(report.filled_slots, 2);
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.csv");
        let (series, _) = load(&complete_grid(None)).unwrap();
        let series: Vec<_> = series.iter().map(|s| s.map_values(|v| v / 3.0)).collect();
        write_csv(&path, &series).unwrap();
        let (back, _) = ingest_csv(&path, &CsvSchema::default()).unwrap();
        assert_eq!(back, series);
    }
}
