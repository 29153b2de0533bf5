use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use super::IngestError;
use crate::model::time::parse_timestamp;
use crate::model::{MeterId, SlotStart};

pub const CSV_HEADER: [&str; 5] = ["meter_id", "meter_class", "timestamp", "quantity_kind", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeterClass {
    /// Low-power meter, Wh energy.
    Linky,
    /// High-power meter, kWh index and 10-minute average kW.
    SmeSmi,
}

impl MeterClass {
    pub fn as_str(self) -> &'static str {
        match self {
            MeterClass::Linky => "linky",
            MeterClass::SmeSmi => "sme_smi",
        }
    }

    pub fn supports(self, kind: QuantityKind) -> bool {
        match self {
            MeterClass::Linky => kind == QuantityKind::EnergyWh,
            MeterClass::SmeSmi => kind != QuantityKind::EnergyWh,
        }
    }
}

impl FromStr for MeterClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linky" => Ok(MeterClass::Linky),
            "sme_smi" => Ok(MeterClass::SmeSmi),
            _ => Err(format!("unknown meter class {s:?}")),
        }
    }
}

impl fmt::Display for MeterClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    EnergyWh,
    EnergyKwhIndex,
    PowerKw10min,
}

impl QuantityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QuantityKind::EnergyWh => "energy_wh",
            QuantityKind::EnergyKwhIndex => "energy_kwh_index",
            QuantityKind::PowerKw10min => "power_kw_10min",
        }
    }
}

impl FromStr for QuantityKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "energy_wh" => Ok(QuantityKind::EnergyWh),
            "energy_kwh_index" => Ok(QuantityKind::EnergyKwhIndex),
            "power_kw_10min" => Ok(QuantityKind::PowerKw10min),
            _ => Err(format!("unknown quantity kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Quantity {
    /// Energy over the interval starting at the timestamp.
    EnergyWh(u64),
    /// Cumulative extraction index at the timestamp.
    EnergyKwhIndex(Decimal),
    /// Average power over the 10 minutes starting at the timestamp.
    PowerKw10min(Decimal),
}

impl Quantity {
    pub fn kind(&self) -> QuantityKind {
        match self {
            Quantity::EnergyWh(_) => QuantityKind::EnergyWh,
            Quantity::EnergyKwhIndex(_) => QuantityKind::EnergyKwhIndex,
            Quantity::PowerKw10min(_) => QuantityKind::PowerKw10min,
        }
    }

    fn value_string(&self) -> String {
        match self {
            Quantity::EnergyWh(v) => v.to_string(),
            Quantity::EnergyKwhIndex(v) | Quantity::PowerKw10min(v) => v.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMeterRecord {
    pub meter_id: MeterId,
    pub meter_class: MeterClass,
    pub timestamp: SlotStart,
    pub quantity: Quantity,
}

impl RawMeterRecord {
    /// The record as a CSV data row (no trailing newline).
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.meter_id,
            self.meter_class,
            crate::model::time::format_slot(&self.timestamp),
            self.quantity.kind().as_str(),
            self.quantity.value_string()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestOutcome {
    pub records: Vec<RawMeterRecord>,
    pub row_errors: Vec<RowError>,
}

fn parse_row(fields: &csv::StringRecord) -> Result<RawMeterRecord, String> {
    if fields.len() != CSV_HEADER.len() {
        return Err(format!("expected {} fields, found {}", CSV_HEADER.len(), fields.len()));
    }
    let meter_id = MeterId::new(&fields[0]).map_err(|e| e.to_string())?;
    let meter_class: MeterClass = fields[1].parse()?;
    let timestamp =
        parse_timestamp(&fields[2]).map_err(|e| format!("bad timestamp {:?}: {e}", &fields[2]))?;
    let kind: QuantityKind = fields[3].parse()?;
    let value = Decimal::from_str(&fields[4]).map_err(|e| format!("bad value {:?}: {e}", &fields[4]))?;
    if value.is_sign_negative() && !value.is_zero() {
        return Err(match kind {
            QuantityKind::PowerKw10min => "negative power".into(),
            _ => "negative energy".into(),
        });
    }
    if !meter_class.supports(kind) {
        return Err(format!("{meter_class} meters do not report {}", kind.as_str()));
    }
    let quantity = match kind {
        QuantityKind::EnergyWh => {
            if !value.fract().is_zero() {
                return Err(format!("energy_wh must be a whole number, got {value}"));
            }
            Quantity::EnergyWh(
                u64::try_from(value.trunc().mantissa() / 10i128.pow(value.scale()))
                    .map_err(|_| format!("energy {value} out of range"))?,
            )
        }
        QuantityKind::EnergyKwhIndex => Quantity::EnergyKwhIndex(value),
        QuantityKind::PowerKw10min => Quantity::PowerKw10min(value),
    };
    Ok(RawMeterRecord {
        meter_id,
        meter_class,
        timestamp,
        quantity,
    })
}

/// Reads a meter CSV. A wrong header aborts; bad rows are skipped and
/// reported with their line numbers.
pub fn ingest_csv<R: Read>(input: R) -> Result<IngestOutcome, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers().map_err(|e| IngestError::Header(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(IngestError::Header(format!(
            "expected `{}`, found `{}`",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut outcome = IngestOutcome::default();
    for row in reader.records() {
        match row {
            Ok(fields) => {
                let line = fields.position().map_or(0, |p| p.line());
                match parse_row(&fields) {
                    Ok(r) => outcome.records.push(r),
                    Err(message) => outcome.row_errors.push(RowError { line, message }),
                }
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(IngestError::Csv(e.to_string()));
                }
                outcome.row_errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

pub fn ingest_path(path: &std::path::Path) -> Result<IngestOutcome, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ingest_csv(std::io::BufReader::new(file))
}
