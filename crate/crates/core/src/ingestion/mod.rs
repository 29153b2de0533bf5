//! Meter data in, 30-minute Wh series out.
//!
//! Also holds the scenario transforms (PV gain, flat data-centre load) and
//! the derivation of static keys from consumption history.

mod csv;
mod kors;
mod normalize;
mod scenario;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::model::{DateWindow, MeterId, ModelError, ParticipantId, SeriesKind};

pub use self::csv::{
    ingest_csv, ingest_path, IngestOutcome, MeterClass, Quantity, QuantityKind, RawMeterRecord, RowError,
    CSV_HEADER,
};
pub use kors::derive_static_kors;
pub use normalize::{group_by_meter, normalize_to_slots};
pub use scenario::{add_constant_load, apply_pv_gain, ScenarioConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("no records to normalize")]
    NoRecords,
    #[error("records from more than one meter ({0}, {1})")]
    MixedMeters(MeterId, MeterId),
    #[error("meter {0}: mixed meter classes")]
    MixedClasses(MeterId),
    #[error("meter {0}: mixed quantity kinds")]
    MixedQuantities(MeterId),
    #[error("meter {meter}: {class} meters do not report {quantity}")]
    ClassMismatch {
        meter: MeterId,
        class: MeterClass,
        quantity: &'static str,
    },
    #[error("meter {meter}: duplicate reading at {timestamp}")]
    DuplicateTimestamp { meter: MeterId, timestamp: String },
    #[error("meter {meter}: sample at {timestamp} is off the expected grid")]
    MisalignedSample { meter: MeterId, timestamp: String },
    #[error("meter {meter}: gap at {slot} ({detail})")]
    Gap {
        meter: MeterId,
        slot: String,
        detail: String,
    },
    #[error("meter {meter}: index decreases at {timestamp}")]
    IndexDecrease { meter: MeterId, timestamp: String },
    #[error("meter {meter}: slot {slot} energy is not a whole number of Wh")]
    FractionalWh { meter: MeterId, slot: String },
    #[error("PV gain must be positive, got {0}")]
    NonPositiveGain(Decimal),
    #[error("constant load must be non-negative, got {0} kW")]
    NegativeLoad(Decimal),
    #[error("meter {meter}: expected a {expected} series")]
    WrongKind { meter: MeterId, expected: SeriesKind },
    #[error("meter {0}: energy overflow")]
    Overflow(MeterId),
    #[error("no consumption in window {0}")]
    NoConsumption(DateWindow),
    #[error("participant {participant} has no data in window {window}")]
    NoHistory {
        participant: ParticipantId,
        window: DateWindow,
    },
    #[error("scenario config: {0}")]
    Scenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
