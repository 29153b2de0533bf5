//! Domain types shared across the engine: the 30-minute grid, meters and
//! participants, repartition keys, tariffs and per-slot allocation results.
//!
//! Every type here is an immutable value once built.

mod community;
mod ids;
mod record;
mod series;
pub mod time;
mod units;
mod validate;

use rust_decimal::Decimal;
use thiserror::Error;

pub use community::{
    kor_sum_tolerance, AllocationPolicy, Community, KorVector, Participant, PriorityOrder, Tariff,
    TariffBook, KOR_DERIVED_DECIMALS, KOR_MAX_DECIMALS,
};
pub use ids::{MeterId, ParticipantId};
pub use record::SlotAllocation;
pub use series::{SeriesKind, SlotSeries};
pub use time::{DateWindow, SlotStart};
pub use units::{EnergyWh, Eur, EUR_INTERNAL_DECIMALS};
pub use validate::{validate_community, Finding, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid identifier {0:?}: use ASCII letters, digits, '_', '-' or '.'")]
    InvalidIdentifier(String),
    #[error("meter {meter}: slot {slot} is not on a 30-minute boundary")]
    MisalignedSlot { meter: MeterId, slot: String },
    #[error("meter {meter}: slot {slot} is not after the previous slot")]
    UnorderedSlot { meter: MeterId, slot: String },
    #[error("KoR coefficient for {id} outside [0, 1]: {value}")]
    KorOutOfRange { id: ParticipantId, value: Decimal },
    #[error("KoR coefficients sum to {0}, not 1")]
    KorSum(Decimal),
    #[error("KoR vector is empty")]
    EmptyKor,
    #[error("all KoR weights are zero")]
    ZeroWeights,
    #[error("participant {0} appears more than once")]
    DuplicateParticipant(ParticipantId),
    #[error("negative rate for {0}")]
    NegativeRate(String),
    #[error("slot {slot}: self-consumption and consumption cover different participants")]
    AllocationKeys { slot: String },
    #[error("slot {slot}: {participant} self-consumes more than it consumed")]
    OverAllocated { slot: String, participant: ParticipantId },
    #[error("slot {slot}: self-consumption plus surplus differs from production")]
    NotConserved { slot: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_send_sync<T: Send + Sync>() {}

    #[test]
    fn values_are_shareable_across_threads() {
        assert_send_sync::<SlotSeries>();
        assert_send_sync::<Community>();
        assert_send_sync::<KorVector>();
        assert_send_sync::<AllocationPolicy>();
        assert_send_sync::<SlotAllocation>();
        assert_send_sync::<TariffBook>();
    }
}
