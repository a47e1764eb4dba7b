//! Outcome panels: ingestion, export, and the series transforms applied
//! before analysis.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::stats::{mean, sample_sd};

/// A finite, unit-step series. `start` is the integer time index of the
/// first value.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    start: usize,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_start(0, values)
    }

    pub fn with_start(start: usize, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("time series must have at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite value at position {i}")));
        }
        Ok(Self { start, values })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn times(&self) -> Range<usize> {
        self.start..self.start + self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Applies `f` pointwise, keeping the time grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::with_start(self.start, self.values.iter().map(|&v| f(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: String,
    pub series: TimeSeries,
}

/// Rectangular unit-by-time panel with one treated unit.
///
/// `t0` is the grid index of the last pre-intervention period, so the
/// pre-period is `0..=t0` and the post-period `t0+1..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    units: Vec<Unit>,
    treated: usize,
    t0: usize,
    time_labels: Vec<String>,
}

impl PanelData {
    pub fn new(units: Vec<Unit>, treated_id: &str, t0: usize, time_labels: Vec<String>) -> Result<Self> {
        let t = units.first().map(|u| u.series.len()).ok_or_else(|| Error::data("panel has no units"))?;
        if units.iter().any(|u| u.series.len() != t || u.series.start() != 0) {
            return Err(Error::data("ragged panel: units do not share a time grid"));
        }
        if time_labels.len() != t {
            return Err(Error::data(format!("{} time labels for a grid of length {t}", time_labels.len())));
        }
        let mut seen = HashMap::new();
        for (i, u) in units.iter().enumerate() {
            if seen.insert(u.id.as_str(), i).is_some() {
                return Err(Error::data(format!("duplicate unit id {:?}", u.id)));
            }
        }
        let treated =
            *seen.get(treated_id).ok_or_else(|| Error::data(format!("unknown treated unit {treated_id:?}")))?;
        if t0 == 0 || t0 + 1 >= t {
            return Err(Error::data(format!("intervention index {t0} leaves an empty pre- or post-period (T = {t})")));
        }
        Ok(Self { units, treated, t0, time_labels })
    }

    /// Builds a panel on the default grid `0..T` with labels `"0".."T-1"`.
    pub fn from_series(series: Vec<(String, Vec<f64>)>, treated_id: &str, t0: usize) -> Result<Self> {
        let t = series.first().map(|(_, v)| v.len()).unwrap_or(0);
        let units = series
            .into_iter()
            .map(|(id, v)| Ok(Unit { id, series: TimeSeries::new(v)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(units, treated_id, t0, (0..t).map(|i| i.to_string()).collect())
    }

    pub fn len_time(&self) -> usize {
        self.time_labels.len()
    }

    pub fn t0(&self) -> usize {
        self.t0
    }

    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn treated_id(&self) -> &str {
        &self.units[self.treated].id
    }

    pub fn treated(&self) -> &TimeSeries {
        &self.units[self.treated].series
    }

    pub fn controls(&self) -> impl Iterator<Item = &Unit> + '_ {
        let treated = self.treated;
        self.units.iter().enumerate().filter(move |(i, _)| *i != treated).map(|(_, u)| u)
    }

    pub fn control_ids(&self) -> Vec<String> {
        self.controls().map(|u| u.id.clone()).collect()
    }

    pub fn series(&self, id: &str) -> Option<&TimeSeries> {
        self.units.iter().find(|u| u.id == id).map(|u| &u.series)
    }

    /// Keeps the treated unit and the listed controls, in panel order.
    pub fn restrict_controls(&self, keep: &[String]) -> Result<Self> {
        for id in keep {
            if self.series(id).is_none() || id == self.treated_id() {
                return Err(Error::usage(format!("{id:?} is not a control of this panel")));
            }
        }
        let units = self
            .units
            .iter()
            .enumerate()
            .filter(|(i, u)| *i == self.treated || keep.contains(&u.id))
            .map(|(_, u)| u.clone())
            .collect();
        Self::new(units, self.treated_id(), self.t0, self.time_labels.clone())
    }

    /// Replaces the treated unit's series.
    pub fn with_treated_series(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len_time() {
            return Err(Error::data("treated series length does not match the panel grid"));
        }
        let mut units = self.units.clone();
        units[self.treated].series = TimeSeries::new(values)?;
        Self::new(units, self.treated_id(), self.t0, self.time_labels.clone())
    }

    /// Appends controls at the end of the unit list.
    pub fn with_extra_controls(&self, extra: Vec<Unit>) -> Result<Self> {
        let mut units = self.units.clone();
        units.extend(extra);
        Self::new(units, self.treated_id(), self.t0, self.time_labels.clone())
    }

    pub fn pre(&self) -> PanelWindow<'_> {
        PanelWindow { panel: self, range: 0..self.t0 + 1 }
    }

    pub fn post(&self) -> PanelWindow<'_> {
        PanelWindow { panel: self, range: self.t0 + 1..self.len_time() }
    }
}

/// A contiguous time window over a panel, borrowed.
#[derive(Debug, Clone)]
pub struct PanelWindow<'a> {
    panel: &'a PanelData,
    range: Range<usize>,
}

impl<'a> PanelWindow<'a> {
    pub fn panel(&self) -> &'a PanelData {
        self.panel
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn treated(&self) -> &'a [f64] {
        &self.panel.treated().values()[self.range.clone()]
    }

    pub fn series(&self, id: &str) -> Option<&'a [f64]> {
        let range = self.range.clone();
        self.panel.series(id).map(move |s| &s.values()[range])
    }

    pub fn controls(&self) -> impl Iterator<Item = (&'a str, &'a [f64])> + '_ {
        self.panel.controls().map(|u| (u.id.as_str(), &u.series.values()[self.range.clone()]))
    }
}

/// Splits a panel into its pre-period `[0, t0]` and post-period `(t0, T)`.
pub fn split_pre_post(panel: &PanelData) -> (PanelWindow<'_>, PanelWindow<'_>) {
    (panel.pre(), panel.post())
}

fn sort_labels(labels: &mut [String]) {
    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i64>().unwrap());
    } else {
        labels.sort();
    }
}

/// Units and sorted time labels of a long-format file.
fn read_long<R: Read>(reader: R) -> Result<(Vec<Unit>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Csv { context: "reading header".into(), source: e })?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols != ["unit", "time", "value"] {
        return Err(Error::data(format!("expected header `unit,time,value`, found `{}`", cols.join(","))));
    }

    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, HashMap<String, f64>> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut label_seen: HashMap<String, ()> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv { context: format!("record {}", line + 2), source: e })?;
        if rec.len() != 3 {
            return Err(Error::data(format!("record {} has {} fields", line + 2, rec.len())));
        }
        let unit = rec[0].trim().to_string();
        let time = rec[1].trim().to_string();
        let value: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("non-numeric value {:?} on line {}", &rec[2], line + 2)))?;
        if !value.is_finite() {
            return Err(Error::data(format!("non-finite value on line {}", line + 2)));
        }
        if !cells.contains_key(&unit) {
            order.push(unit.clone());
        }
        if label_seen.insert(time.clone(), ()).is_none() {
            labels.push(time.clone());
        }
        if cells.entry(unit.clone()).or_default().insert(time.clone(), value).is_some() {
            return Err(Error::data(format!("duplicate observation for unit {unit:?} at time {time:?}")));
        }
    }
    if order.is_empty() {
        return Err(Error::data("panel file has no observations"));
    }
    sort_labels(&mut labels);

    let mut units = Vec::with_capacity(order.len());
    for id in order {
        let obs = &cells[&id];
        if obs.len() != labels.len() {
            return Err(Error::data(format!(
                "ragged panel: unit {id:?} has {} of {} periods",
                obs.len(),
                labels.len()
            )));
        }
        let values = labels.iter().map(|l| obs[l]).collect();
        units.push(Unit { id, series: TimeSeries::new(values)? });
    }
    Ok((units, labels))
}

/// Reads a long-format `unit,time,value` panel.
///
/// Time labels are sorted numerically when every label parses as an
/// integer, lexically otherwise, then re-indexed to `0..T`. `t0_label` names
/// the last pre-intervention period.
pub fn read_panel<R: Read>(reader: R, treated_id: &str, t0_label: &str) -> Result<PanelData> {
    let (units, labels) = read_long(reader)?;
    let t0 = labels
        .iter()
        .position(|l| l == t0_label.trim())
        .ok_or_else(|| Error::data(format!("intervention time {t0_label:?} is not on the panel grid")))?;
    PanelData::new(units, treated_id, t0, labels)
}

pub fn load_panel(path: impl AsRef<Path>, treated_id: &str, t0_label: &str) -> Result<PanelData> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io { context: format!("opening {}", path.display()), source: e })?;
    read_panel(file, treated_id, t0_label)
}

/// Reads one unit's series from a long-format file, on the file's sorted
/// time grid.
pub fn read_unit_series<R: Read>(reader: R, unit_id: &str) -> Result<TimeSeries> {
    let (units, _) = read_long(reader)?;
    units
        .into_iter()
        .find(|u| u.id == unit_id)
        .map(|u| u.series)
        .ok_or_else(|| Error::data(format!("unit {unit_id:?} not found")))
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io { context: "writing csv".into(), source: e }
}

/// Writes the panel back in long format, units in panel order.
pub fn write_long_csv<W: Write>(panel: &PanelData, mut out: W) -> Result<()> {
    writeln!(out, "unit,time,value").map_err(io_err)?;
    for u in panel.units() {
        for (label, v) in panel.time_labels().iter().zip(u.series.values()) {
            writeln!(out, "{},{},{}", u.id, label, fmt_num(*v)).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Writes `time,<unit1>,<unit2>,...` for plotting.
pub fn write_wide_csv<W: Write>(panel: &PanelData, mut out: W) -> Result<()> {
    let ids: Vec<&str> = panel.units().iter().map(|u| u.id.as_str()).collect();
    writeln!(out, "time,{}", ids.join(",")).map_err(io_err)?;
    for (t, label) in panel.time_labels().iter().enumerate() {
        let row: Vec<String> = panel.units().iter().map(|u| fmt_num(u.series.values()[t])).collect();
        writeln!(out, "{label},{}", row.join(",")).map_err(io_err)?;
    }
    Ok(())
}

pub(crate) fn zscore_values(values: &[f64]) -> Result<Vec<f64>> {
    let sd = sample_sd(values);
    if values.len() < 2 || sd == 0.0 || !sd.is_finite() {
        return Err(Error::numerical("zero variance"));
    }
    let m = mean(values);
    Ok(values.iter().map(|v| (v - m) / sd).collect())
}

/// Standardizes to sample mean 0 and sample sd 1.
pub fn normalize_zscore(s: &TimeSeries) -> Result<TimeSeries> {
    TimeSeries::with_start(s.start(), zscore_values(s.values())?)
}

/// `log(s_t / mean(s over base_range))`; `base_range` indexes into the
/// series values.
pub fn normalize_base_log(s: &TimeSeries, base_range: Range<usize>) -> Result<TimeSeries> {
    if base_range.is_empty() || base_range.end > s.len() {
        return Err(Error::usage(format!("base range {base_range:?} outside series of length {}", s.len())));
    }
    if let Some(v) = s.values().iter().find(|v| **v <= 0.0) {
        return Err(Error::numerical(format!("log normalization needs positive values, found {v}")));
    }
    let base = mean(&s.values()[base_range]);
    s.map(|v| (v / base).ln())
}

/// Centered moving average of half-width `half_width`; the window shrinks
/// at the boundaries so the output keeps the input length.
pub fn smooth_window(s: &TimeSeries, half_width: usize) -> Result<TimeSeries> {
    let n = s.len();
    if n <= 2 * half_width {
        return Err(Error::usage(format!("series of length {n} is too short for half-width {half_width}")));
    }
    let v = s.values();
    let out = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half_width);
            let hi = (t + half_width).min(n - 1);
            mean(&v[lo..=hi])
        })
        .collect();
    TimeSeries::with_start(s.start(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec()).unwrap()
    }

    #[test]
    fn parses_small_panel() {
        let csv = "unit,time,value\nA,2000,1\nA,2001,2\nA,2002,3\nB,2000,4\nB,2001,5\nB,2002,6\n";
        let p = read_panel(csv.as_bytes(), "A", "2001").unwrap();
        assert_eq!(p.len_time(), 3);
        assert_eq!(p.t0(), 1);
        assert_eq!(p.treated().values(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.control_ids(), vec!["B".to_string()]);
    }

    #[test]
    fn reads_single_unit() {
        let csv = "unit,time,value\nU,3,30\nU,1,10\nU,2,20\nV,1,0\nV,2,0\nV,3,0\n";
        assert_eq!(read_unit_series(csv.as_bytes(), "U").unwrap().values(), &[10.0, 20.0, 30.0]);
        assert!(matches!(read_unit_series(csv.as_bytes(), "W"), Err(Error::Data(_))));
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let csv = "unit,time,value\nA,10,3\nA,9,2\nA,8,1\nB,8,0\nB,9,0\nB,10,0\n";
        let p = read_panel(csv.as_bytes(), "A", "9").unwrap();
        assert_eq!(p.time_labels(), &["8", "9", "10"]);
        assert_eq!(p.treated().values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn quarter_labels_sort_lexically() {
        let csv = "unit,time,value\nA,1995Q2,2\nA,1995Q1,1\nA,1995Q3,3\nB,1995Q1,0\nB,1995Q2,0\nB,1995Q3,0\n";
        let p = read_panel(csv.as_bytes(), "A", "1995Q2").unwrap();
        assert_eq!(p.treated().values(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.t0(), 1);
    }

    #[test]
    fn ragged_panel_rejected() {
        let csv = "unit,time,value\nA,1,1\nA,2,2\nA,3,3\nB,1,4\nB,3,6\n";
        let err = read_panel(csv.as_bytes(), "A", "2").unwrap_err();
        assert!(err.to_string().contains("ragged panel"), "{err}");
    }

    #[test]
    fn bad_values_and_ids_rejected() {
        let csv = "unit,time,value\nA,1,x\nA,2,2\nB,1,1\nB,2,2\n";
        assert!(read_panel(csv.as_bytes(), "A", "1").unwrap_err().to_string().contains("non-numeric"));
        let csv = "unit,time,value\nA,1,1\nA,2,2\nA,3,2\nB,1,1\nB,2,2\nB,3,2\n";
        assert!(read_panel(csv.as_bytes(), "Z", "1").unwrap_err().to_string().contains("unknown treated"));
        assert!(read_panel("u,t,v\n".as_bytes(), "A", "1").is_err());
    }

    #[test]
    fn t0_must_leave_both_periods() {
        let csv = "unit,time,value\nA,1,1\nA,2,2\nB,1,1\nB,2,2\n";
        assert!(read_panel(csv.as_bytes(), "A", "2").is_err());
    }

    #[test]
    fn prop99_shaped_panel() {
        let mut csv = String::from("unit,time,value\n");
        for u in 0..40 {
            for y in 1970..=2000 {
                csv.push_str(&format!("S{u},{y},{}\n", 100.0 + u as f64 - (y - 1970) as f64));
            }
        }
        let p = read_panel(csv.as_bytes(), "S0", "1988").unwrap();
        assert_eq!(p.len_time(), 31);
        assert_eq!(p.t0(), 18);
        assert_eq!(p.controls().count(), 39);
        let (pre, post) = split_pre_post(&p);
        assert_eq!((pre.len(), post.len()), (19, 12));
    }

    #[test]
    fn split_boundary_and_partition() {
        let p = PanelData::from_series(
            vec![("A".into(), vec![1.0, 2.0, 3.0, 4.0]), ("B".into(), vec![5.0, 6.0, 7.0, 8.0])],
            "A",
            2,
        )
        .unwrap();
        let (pre, post) = split_pre_post(&p);
        assert_eq!(post.len(), 1);
        let mut joined = pre.treated().to_vec();
        joined.extend_from_slice(post.treated());
        assert_eq!(joined, p.treated().values());
        assert_eq!(pre.len() + post.len(), p.len_time());
    }

    #[test]
    fn csv_round_trip() {
        let csv = "unit,time,value\nA,1990,1.5\nA,1991,2.25\nA,1992,-3\nB,1990,4\nB,1991,5\nB,1992,6\n";
        let p = read_panel(csv.as_bytes(), "A", "1991").unwrap();
        let mut buf = Vec::new();
        write_long_csv(&p, &mut buf).unwrap();
        let q = read_panel(buf.as_slice(), "A", "1991").unwrap();
        assert_eq!(p, q);
        let mut wide = Vec::new();
        write_wide_csv(&p, &mut wide).unwrap();
        assert_eq!(String::from_utf8(wide).unwrap(), "time,A,B\n1990,1.5,4\n1991,2.25,5\n1992,-3,6\n");
    }

    #[test]
    fn zscore_examples() {
        let z = normalize_zscore(&ts(&[1.0, 2.0, 3.0])).unwrap();
        assert!((mean(z.values())).abs() < 1e-12);
        assert!((sample_sd(z.values()) - 1.0).abs() < 1e-12);
        let zz = normalize_zscore(&z).unwrap();
        for (a, b) in z.values().iter().zip(zz.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(normalize_zscore(&ts(&[5.0, 5.0, 5.0])).unwrap_err().to_string().contains("zero variance"));
    }

    #[test]
    fn base_log_examples() {
        let out = normalize_base_log(&ts(&[1.0, 2.0, 4.0]), 0..1).unwrap();
        assert_eq!(out.values(), &[0.0, 2f64.ln(), 4f64.ln()]);
        let flat = normalize_base_log(&ts(&[3.0; 5]), 0..5).unwrap();
        assert!(flat.values().iter().all(|v| *v == 0.0));
        assert!(normalize_base_log(&ts(&[1.0, 0.0]), 0..1).is_err());
    }

    #[test]
    fn smoothing_examples() {
        let s = ts(&[0.0, 3.0, 0.0]);
        assert_eq!(smooth_window(&s, 0).unwrap(), s);
        assert_eq!(smooth_window(&s, 1).unwrap().values(), &[1.5, 1.0, 1.5]);
        let ramp: Vec<f64> = (0..20).map(|i| 2.0 * i as f64 + 1.0).collect();
        let sm = smooth_window(&ts(&ramp), 3).unwrap();
        for (a, b) in sm.values()[3..17].iter().zip(&ramp[3..17]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(smooth_window(&ts(&[1.0, 2.0]), 1).is_err());
    }

    proptest! {
        #[test]
        fn zscore_affine_invariant(v in prop::collection::vec(-100.0..100.0f64, 3..40), a in 0.01..50.0f64, b in -1e3..1e3f64) {
            prop_assume!(sample_sd(&v) > 1e-3);
            let s = ts(&v);
            let z1 = normalize_zscore(&s).unwrap();
            let z2 = normalize_zscore(&s.map(|x| a * x + b).unwrap()).unwrap();
            for (x, y) in z1.values().iter().zip(z2.values()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn smoothing_commutes_with_constant(v in prop::collection::vec(-100.0..100.0f64, 7..40), c in -1e3..1e3f64, h in 0usize..3) {
            let s = ts(&v);
            let a = smooth_window(&s.map(|x| x + c).unwrap(), h).unwrap();
            let b = smooth_window(&s, h).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - (y + c)).abs() < 1e-9);
            }
        }
    }
}
