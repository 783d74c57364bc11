use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::clock::Timestamp;
use crate::ids::LibraryId;
use crate::money::div_half_up;
use crate::request::{Change, RSRequest, RequestStatus};
use crate::routing::RotaEntry;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub filled: u64,
    pub unfilled: u64,
    pub cancelled: u64,
    pub expired: u64,
    pub total_requests: u64,
    pub turnaround_hours: Vec<f64>,
}

impl Counters {
    pub fn is_consistent(&self) -> bool {
        self.filled + self.unfilled + self.cancelled + self.expired <= self.total_requests
    }
}

/// Outcome counters for a period, overall and per partner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsWindow {
    pub start: Timestamp,
    pub end: Timestamp,
    pub aggregate: Counters,
    pub partners: BTreeMap<LibraryId, Counters>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FillRateMode {
    /// Filled over all requests, open ones included.
    OfTotal,
    /// Filled over filled plus unfilled.
    OfDecided,
}

/// A percentage held as a scaled integer so rounding is exact. Serializes
/// as its display form, e.g. `"81.0%"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Percent {
    scaled: u64,
    decimals: u32,
}

impl Percent {
    /// `num / den` as a percentage with `decimals` places, rounded half-up.
    pub fn of(num: u64, den: u64, decimals: u32) -> Option<Percent> {
        if den == 0 {
            return None;
        }
        let scale = 10u128.pow(decimals);
        let scaled = div_half_up(i128::from(num) * 100 * scale as i128, i128::from(den)) as u64;
        Some(Percent { scaled, decimals })
    }

    pub fn value(self) -> f64 {
        self.scaled as f64 / 10f64.powi(self.decimals as i32)
    }

    pub fn scaled(self) -> u64 {
        self.scaled
    }
}

impl From<Percent> for String {
    fn from(p: Percent) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Percent {
    type Error = String;

    fn try_from(text: String) -> Result<Self, Self::Error> {
        let bad = || format!("not a percentage: {text:?}");
        let digits = text.strip_suffix('%').ok_or_else(bad)?;
        let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
        if int.is_empty() || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let scaled = format!("{int}{frac}").parse().map_err(|_| bad())?;
        Ok(Percent { scaled, decimals: frac.len() as u32 })
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.*}%", self.decimals as usize, self.value())
    }
}

impl StatsWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        StatsWindow { start, end, aggregate: Counters::default(), partners: BTreeMap::new() }
    }

    /// Borrowing-side window for `library`: its requests created in
    /// `[start, end)`, with per-lender counters taken from each request's
    /// history.
    pub fn from_requests<'a>(
        library: &LibraryId,
        requests: impl IntoIterator<Item = &'a RSRequest>,
        start: Timestamp,
        end: Timestamp,
    ) -> Self {
        let mut w = StatsWindow::new(start, end);
        for req in requests {
            if &req.requester_library != library || req.created_at < start || req.created_at >= end {
                continue;
            }
            w.add_request(req);
        }
        w
    }

    pub fn add_request(&mut self, req: &RSRequest) {
        let agg = &mut self.aggregate;
        agg.total_requests += 1;
        let shipped = req.history.iter().any(|e| matches!(e.change, Change::Shipped { .. }));
        if shipped {
            agg.filled += 1;
            agg.turnaround_hours.extend(req.turnaround_hours());
        } else {
            match req.status {
                RequestStatus::ArchivedUnfulfilled | RequestStatus::Unfulfilled(_) => agg.unfilled += 1,
                RequestStatus::Cancelled => agg.cancelled += 1,
                RequestStatus::Expired => agg.expired += 1,
                _ => {}
            }
        }

        let mut lender: Option<LibraryId> = None;
        let mut sent_at = None;
        for e in &req.history {
            match &e.change {
                Change::Sent { lender: l, .. } | Change::Reiterated { next: Some(RotaEntry::Partner(l)), .. } => {
                    lender = Some(l.clone());
                    sent_at = Some(e.at);
                    self.partners.entry(l.clone()).or_default().total_requests += 1;
                }
                Change::Broadcast { .. } | Change::Reiterated { next: Some(RotaEntry::AllLibraries), .. } => {
                    lender = None;
                    sent_at = Some(e.at);
                }
                Change::Accepted { lender: l } if lender.is_none() => {
                    lender = Some(l.clone());
                    self.partners.entry(l.clone()).or_default().total_requests += 1;
                }
                Change::Unfulfilled { .. } => {
                    if let Some(l) = lender.take() {
                        self.partners.entry(l).or_default().unfilled += 1;
                    }
                }
                Change::Shipped { .. } => {
                    if let Some(l) = &lender {
                        let c = self.partners.entry(l.clone()).or_default();
                        c.filled += 1;
                        if let Some(s) = sent_at {
                            c.turnaround_hours.push((e.at - s).num_seconds() as f64 / 3600.0);
                        }
                    }
                }
                Change::Expired => {
                    if let Some(l) = lender.take() {
                        self.partners.entry(l).or_default().expired += 1;
                    }
                }
                Change::CancelDecided { approved: true } => {
                    if let Some(l) = lender.take() {
                        self.partners.entry(l).or_default().cancelled += 1;
                    }
                }
                _ => {}
            }
        }
    }

    /// CSV `partner,filled,unfilled,cancelled,expired,total,avg_turnaround_days`
    /// with a final `ALL` row for the aggregate.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["partner", "filled", "unfilled", "cancelled", "expired", "total", "avg_turnaround_days"])?;
        let rows = self.partners.iter().map(|(p, c)| (p.to_string(), c)).chain([("ALL".to_string(), &self.aggregate)]);
        for (name, c) in rows {
            let avg = turnaround_days(&c.turnaround_hours).map(|d| format!("{d:.2}")).unwrap_or_default();
            w.write_record([
                name,
                c.filled.to_string(),
                c.unfilled.to_string(),
                c.cancelled.to_string(),
                c.expired.to_string(),
                c.total_requests.to_string(),
                avg,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

pub fn fill_rate(counters: &Counters, mode: FillRateMode, decimals: u32) -> Result<Percent, LedgerError> {
    let den = match mode {
        FillRateMode::OfTotal => counters.total_requests,
        FillRateMode::OfDecided => counters.filled + counters.unfilled,
    };
    Percent::of(counters.filled, den, decimals).ok_or(LedgerError::EmptyWindow)
}

fn turnaround_days(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mean_hours = samples.iter().sum::<f64>() / samples.len() as f64;
    // Round the hundredths of a day half-up; the tiny bias absorbs binary
    // representation error in values like 0.785.
    Some(((mean_hours / 24.0) * 100.0 + 1e-9).round() / 100.0)
}

/// Mean turnaround in days, two decimals.
pub fn avg_turnaround(counters: &Counters) -> Result<f64, LedgerError> {
    turnaround_days(&counters.turnaround_hours).ok_or(LedgerError::EmptyWindow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counters(filled: u64, unfilled: u64, total: u64) -> Counters {
        Counters { filled, unfilled, total_requests: total, ..Counters::default() }
    }

    #[test]
    fn rates() {
        assert_eq!(fill_rate(&counters(2009, 0, 2267), FillRateMode::OfTotal, 0).unwrap().to_string(), "89%");
        assert_eq!(fill_rate(&counters(2650, 622, 3400), FillRateMode::OfDecided, 0).unwrap().to_string(), "81%");
        assert_eq!(fill_rate(&counters(2831, 488, 3319), FillRateMode::OfDecided, 1).unwrap().to_string(), "85.3%");
        assert_eq!(fill_rate(&counters(0, 0, 0), FillRateMode::OfTotal, 0), Err(LedgerError::EmptyWindow));
    }

    #[test]
    fn percent_round_trips_as_text() {
        let p = fill_rate(&counters(2831, 488, 3319), FillRateMode::OfDecided, 1).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), r#""85.3%""#);
        assert_eq!(serde_json::from_str::<Percent>(r#""85.3%""#).unwrap(), p);
        assert!(serde_json::from_str::<Percent>(r#""85.3""#).is_err());
        assert!(serde_json::from_str::<Percent>(r#""-1%""#).is_err());
    }

    #[test]
    fn turnaround() {
        let mut c = Counters::default();
        assert_eq!(avg_turnaround(&c), Err(LedgerError::EmptyWindow));
        c.turnaround_hours = vec![12.0, 24.0];
        assert_eq!(avg_turnaround(&c).unwrap(), 0.75);
        c.turnaround_hours = vec![18.96];
        assert_eq!(avg_turnaround(&c).unwrap(), 0.79);
    }
}
