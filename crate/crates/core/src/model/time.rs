//! The 30-minute settlement grid.
//!
//! Slot boundaries are local-time based: a timestamp is aligned when its
//! wall-clock minute is a multiple of 30 in its own UTC offset.

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Start of a settlement slot, carrying its UTC offset.
pub type SlotStart = DateTime<FixedOffset>;

pub const SLOT_MINUTES: i64 = 30;
pub const DAY_SLOTS: u32 = 48;

pub fn slot_duration() -> Duration {
    Duration::minutes(SLOT_MINUTES)
}

pub fn is_aligned(ts: &SlotStart) -> bool {
    ts.second() == 0 && ts.nanosecond() == 0 && i64::from(ts.minute()) % SLOT_MINUTES == 0
}

/// Zero-based position of the slot within its local day (0..48).
pub fn slot_index(ts: &SlotStart) -> u32 {
    ts.hour() * 2 + ts.minute() / 30
}

/// The slot containing `ts`.
pub fn slot_floor(ts: &SlotStart) -> SlotStart {
    let minute = ts.minute() - ts.minute() % 30;
    ts.with_minute(minute)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
        .expect("flooring to a half hour stays within the same day")
}

/// Canonical text form used in CSV outputs and the audit ledger.
pub fn format_slot(ts: &SlotStart) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S%:z").to_string()
}

pub fn parse_timestamp(s: &str) -> Result<SlotStart, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s)
}

/// Inclusive range of local calendar dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub first: NaiveDate,
    pub last: NaiveDate,
}

impl DateWindow {
    pub fn new(first: NaiveDate, last: NaiveDate) -> Option<Self> {
        (first <= last).then_some(Self { first, last })
    }

    pub fn single_day(day: NaiveDate) -> Self {
        Self {
            first: day,
            last: day,
        }
    }

    pub fn contains(&self, ts: &SlotStart) -> bool {
        let day = ts.date_naive();
        self.first <= day && day <= self.last
    }

    /// Smallest window holding every timestamp, or `None` for an empty input.
    pub fn covering<'a>(slots: impl IntoIterator<Item = &'a SlotStart>) -> Option<Self> {
        let mut days = slots.into_iter().map(|ts| ts.date_naive());
        let first = days.next()?;
        let (lo, hi) = days.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
        Some(Self { first: lo, last: hi })
    }
}

impl fmt::Display for DateWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.first, self.last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> SlotStart {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn alignment_is_local() {
        assert!(is_aligned(&ts("2022-05-04T10:30:00+02:00")));
        assert!(!is_aligned(&ts("2022-05-04T10:10:00+02:00")));
        assert!(!is_aligned(&ts("2022-05-04T10:30:01+02:00")));
        // Aligned in UTC but not in a +05:45 local clock.
        assert!(!is_aligned(&ts("2022-05-04T10:45:00+05:45")));
    }

    #[test]
    fn index_and_floor() {
        assert_eq!(slot_index(&ts("2022-05-04T00:00:00+02:00")), 0);
        assert_eq!(slot_index(&ts("2022-05-04T23:30:00+02:00")), DAY_SLOTS - 1);
        assert_eq!(
            slot_floor(&ts("2022-05-04T12:50:00+02:00")),
            ts("2022-05-04T12:30:00+02:00")
        );
        assert_eq!(
            format_slot(&ts("2022-05-04T12:00:00+02:00")),
            "2022-05-04T12:00:00+02:00"
        );
    }

    #[test]
    fn window_uses_local_date() {
        let w = DateWindow::single_day(NaiveDate::from_ymd_opt(2022, 5, 4).unwrap());
        // 00:30 local is still the previous day in UTC.
        assert!(w.contains(&ts("2022-05-04T00:30:00+02:00")));
        assert!(!w.contains(&ts("2022-05-05T00:00:00+02:00")));
        assert!(DateWindow::new(w.last.succ_opt().unwrap(), w.first).is_none());
    }
}
