//! Seeded demo data: one settlement day of PV production and three
//! building loads, plus a year of consumption history for key derivation.
//!
//! Shapes only. The high-radiation day peaks at the 4.65 kW pilot rating
//! (before the PV gain) and exceeds the combined midday load once scaled;
//! the low-radiation day stays below it. With a 100 kW data centre the
//! loads exceed production in every slot, and estia1 and estia2 each stay
//! above a third of production, so even equal keys are fully absorbed.

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, TimeZone, Timelike, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::RunError;
use crate::ingestion::CSV_HEADER;
use crate::model::time::format_slot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RadiationProfile {
    Low,
    High,
}

impl RadiationProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            RadiationProfile::Low => "low",
            RadiationProfile::High => "high",
        }
    }

    pub fn day(self) -> NaiveDate {
        match self {
            RadiationProfile::Low => NaiveDate::from_ymd_opt(2022, 5, 4),
            RadiationProfile::High => NaiveDate::from_ymd_opt(2022, 5, 9),
        }
        .expect("valid date")
    }
}

impl FromStr for RadiationProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "low" | "low_radiation" | "low-radiation" => Ok(RadiationProfile::Low),
            "high" | "high_radiation" | "high-radiation" => Ok(RadiationProfile::High),
            _ => Err(format!("unknown profile {s:?} (expected low or high)")),
        }
    }
}

impl fmt::Display for RadiationProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoData {
    pub meters_csv: String,
    pub history_csv: String,
    pub config_toml: String,
}

impl DemoData {
    pub const METERS_FILE: &'static str = "meters.csv";
    pub const HISTORY_FILE: &'static str = "history.csv";
    pub const CONFIG_FILE: &'static str = "config.toml";

    /// Writes the three files into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<(), RunError> {
        std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
        for (name, contents) in [
            (Self::METERS_FILE, &self.meters_csv),
            (Self::HISTORY_FILE, &self.history_csv),
            (Self::CONFIG_FILE, &self.config_toml),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| RunError::io(&path, e))?;
        }
        Ok(())
    }
}

const PILOT_PEAK_KW: f64 = 4.65;
const LOW_PEAK_KW: f64 = 1.6;

struct Building {
    meter: &'static str,
    base_kw: f64,
    occupied_kw: f64,
}

const BUILDINGS: [Building; 3] = [
    Building {
        meter: "estia1",
        base_kw: 12.0,
        occupied_kw: 33.0,
    },
    Building {
        meter: "estia2",
        base_kw: 14.0,
        occupied_kw: 36.0,
    },
    Building {
        meter: "estia4",
        base_kw: 1.5,
        occupied_kw: 3.5,
    },
];

fn paris_offset(utc: DateTime<Utc>) -> FixedOffset {
    // Summer time from the last Sunday of March to the last Sunday of
    // October, switching at 01:00 UTC.
    let last_sunday = |month: u32| {
        let mut d = NaiveDate::from_ymd_opt(utc.year(), month, 31).expect("March and October have 31 days");
        while d.weekday() != Weekday::Sun {
            d = d.pred_opt().expect("in range");
        }
        Utc.from_utc_datetime(&d.and_hms_opt(1, 0, 0).expect("valid time"))
    };
    let hours = if utc >= last_sunday(3) && utc < last_sunday(10) { 2 } else { 1 };
    FixedOffset::east_opt(hours * 3600).expect("valid offset")
}

/// Local 30-minute slots covering `first..=last`.
fn local_slots(first: NaiveDate, last: NaiveDate) -> Vec<DateTime<FixedOffset>> {
    let start_local = first.and_hms_opt(0, 0, 0).expect("midnight");
    let end_local = last.succ_opt().expect("in range").and_hms_opt(0, 0, 0).expect("midnight");
    // Midnight is outside the summer-time switch hour, so the winter or
    // summer offset of the surrounding day applies.
    let to_utc = |local: chrono::NaiveDateTime| {
        let guess = Utc.from_utc_datetime(&(local - Duration::hours(1)));
        let off = paris_offset(guess);
        Utc.from_utc_datetime(&(local - Duration::seconds(off.local_minus_utc().into())))
    };
    let (mut t, end) = (to_utc(start_local), to_utc(end_local));
    let mut out = Vec::new();
    while t < end {
        out.push(t.with_timezone(&paris_offset(t)));
        t += Duration::minutes(30);
    }
    out
}

fn hour_of(ts: &DateTime<FixedOffset>) -> f64 {
    f64::from(ts.hour()) + f64::from(ts.minute()) / 60.0
}

/// 1 from 08:00 to 19:00, ramping up from 07:00 and down until 20:30;
/// weekends at 20 %.
fn occupancy(ts: &DateTime<FixedOffset>, minutes_in: f64) -> f64 {
    let h = hour_of(ts) + minutes_in / 60.0;
    let level = if (8.0..19.0).contains(&h) {
        1.0
    } else if (7.0..8.0).contains(&h) {
        h - 7.0
    } else if (19.0..20.5).contains(&h) {
        (20.5 - h) / 1.5
    } else {
        0.0
    };
    match ts.weekday() {
        Weekday::Sat | Weekday::Sun => level * 0.2,
        _ => level,
    }
}

fn load_kw(b: &Building, ts: &DateTime<FixedOffset>, minutes_in: f64, rng: &mut ChaCha8Rng) -> f64 {
    (b.base_kw + b.occupied_kw * occupancy(ts, minutes_in)) * rng.random_range(0.95..1.05)
}

fn pv_kw(profile: RadiationProfile, ts: &DateTime<FixedOffset>, rng: &mut ChaCha8Rng) -> f64 {
    let x = (hour_of(ts) + 0.25 - 13.75) / 7.25;
    let shape = (1.0 - x * x).max(0.0);
    let factor = match profile {
        RadiationProfile::High => PILOT_PEAK_KW * rng.random_range(0.97..1.0),
        RadiationProfile::Low => LOW_PEAK_KW * rng.random_range(0.4..1.0),
    };
    (shape * factor).min(PILOT_PEAK_KW)
}

fn row(out: &mut String, meter: &str, class: &str, ts: &DateTime<FixedOffset>, kind: &str, value: impl fmt::Display) {
    let _ = writeln!(out, "{meter},{class},{},{kind},{value}", format_slot(ts));
}

/// Rows for the three buildings over `slots`: estia1 as 10-minute SME
/// power, estia2 as a whole-kWh SME index, estia4 as Linky Wh.
fn building_rows(out: &mut String, slots: &[DateTime<FixedOffset>], rng: &mut ChaCha8Rng, index_start: f64) {
    let mut index = index_start;
    for ts in slots {
        for k in 0..3 {
            let at = *ts + Duration::minutes(10 * k);
            let kw = load_kw(&BUILDINGS[0], ts, 10.0 * k as f64, rng);
            row(out, BUILDINGS[0].meter, "sme_smi", &at, "power_kw_10min", format!("{kw:.1}"));
        }
        row(out, BUILDINGS[1].meter, "sme_smi", ts, "energy_kwh_index", index.floor());
        index += load_kw(&BUILDINGS[1], ts, 15.0, rng) * 0.5;
        let wh = (load_kw(&BUILDINGS[2], ts, 15.0, rng) * 500.0).round();
        row(out, BUILDINGS[2].meter, "linky", ts, "energy_wh", wh);
    }
    if let Some(last) = slots.last() {
        row(out, BUILDINGS[1].meter, "sme_smi", &(*last + Duration::minutes(30)), "energy_kwh_index", index.floor());
    }
}

/// Deterministic demo inputs for `profile`; the same seed always yields
/// byte-identical files.
pub fn synthesize_demo_data(profile: RadiationProfile, seed: u64) -> DemoData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let day = profile.day();
    let slots = local_slots(day, day);

    let mut meters = CSV_HEADER.join(",") + "\n";
    for ts in &slots {
        let wh = (pv_kw(profile, ts, &mut rng) * 500.0).round();
        row(&mut meters, "pv01", "linky", ts, "energy_wh", wh);
    }
    building_rows(&mut meters, &slots, &mut rng, 48_213.0);

    let mut history_rng = ChaCha8Rng::seed_from_u64(seed);
    history_rng.set_stream(1);
    let year = (
        NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
        NaiveDate::from_ymd_opt(2021, 12, 31).expect("valid date"),
    );
    let mut history = CSV_HEADER.join(",") + "\n";
    building_rows(&mut history, &local_slots(year.0, year.1), &mut history_rng, 31_870.0);

    DemoData {
        meters_csv: meters,
        history_csv: history,
        config_toml: demo_config(profile, seed, year),
    }
}

fn demo_config(profile: RadiationProfile, seed: u64, year: (NaiveDate, NaiveDate)) -> String {
    format!(
        r#"# Demo community, {profile}-radiation day, seed {seed}.
meter_data = "{meters}"
output_dir = "out"
policies = ["static", "static33", "default-dynamic", "custom-dynamic"]
custom_order = "economic"

[scenario]
pv_gain = 25.48
datacentre_load_kw = 100
include_datacentre = false
datacentre_participant = "ESTIA4"

[kor_history]
path = "{history}"
first = "{first}"
last = "{last}"

[community]
production_meter = "pv01"
feed_in_eur_per_kwh = 0.06

[[community.participants]]
id = "ESTIA1"
meter_id = "estia1"
tariff_eur_per_kwh = 0.13
grid_uplift_pct = 28
tax_uplift_pct = 38
priority_rank = 1

[[community.participants]]
id = "ESTIA2"
meter_id = "estia2"
tariff_eur_per_kwh = 0.13
grid_uplift_pct = 0
tax_uplift_pct = 38
priority_rank = 2

[[community.participants]]
id = "ESTIA4"
meter_id = "estia4"
tariff_eur_per_kwh = 0.11
priority_rank = 3
"#,
        meters = DemoData::METERS_FILE,
        history = DemoData::HISTORY_FILE,
        first = year.0,
        last = year.1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_local_day_has_48_slots_and_the_switch_days_differ() {
        let d = |m, day| NaiveDate::from_ymd_opt(2021, m, day).unwrap();
        let may = local_slots(d(5, 4), d(5, 4));
        assert_eq!(may.len(), 48);
        assert_eq!(format_slot(&may[0]), "2021-05-04T00:00:00+02:00");
        assert_eq!(local_slots(d(3, 28), d(3, 28)).len(), 46);
        assert_eq!(local_slots(d(10, 31), d(10, 31)).len(), 50);
        assert_eq!(local_slots(d(1, 1), d(12, 31)).len(), 17_520);
        assert_eq!(format_slot(&local_slots(d(1, 1), d(1, 1))[0]), "2021-01-01T00:00:00+01:00");
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synthesize_demo_data(RadiationProfile::Low, 7);
        let b = synthesize_demo_data(RadiationProfile::Low, 7);
        assert_eq!(a, b);
        assert_ne!(a.meters_csv, synthesize_demo_data(RadiationProfile::Low, 8).meters_csv);
    }

    #[test]
    fn generated_config_parses() {
        let d = synthesize_demo_data(RadiationProfile::High, 1);
        let cfg = super::super::RunConfig::from_toml(&d.config_toml).unwrap();
        assert_eq!(cfg.community.participants.len(), 3);
    }
}
