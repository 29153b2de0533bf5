use serde::{Deserialize, Serialize};
use std::fmt;

use super::time::{format_slot, is_aligned, SlotStart};
use super::{EnergyWh, MeterId, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Consumption,
    Production,
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesKind::Consumption => "consumption",
            SeriesKind::Production => "production",
        })
    }
}

/// Energy per 30-minute slot for one meter.
///
/// Slots are aligned and strictly increasing; gaps between slots are
/// allowed here and reported by validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct SlotSeries {
    meter_id: MeterId,
    kind: SeriesKind,
    slots: Vec<(SlotStart, EnergyWh)>,
}

#[derive(Deserialize)]
struct RawSeries {
    meter_id: MeterId,
    kind: SeriesKind,
    slots: Vec<(SlotStart, EnergyWh)>,
}

impl TryFrom<RawSeries> for SlotSeries {
    type Error = ModelError;
    fn try_from(raw: RawSeries) -> Result<Self, ModelError> {
        SlotSeries::new(raw.meter_id, raw.kind, raw.slots)
    }
}

impl SlotSeries {
    pub fn new(
        meter_id: MeterId,
        kind: SeriesKind,
        slots: Vec<(SlotStart, EnergyWh)>,
    ) -> Result<Self, ModelError> {
        for (i, (ts, _)) in slots.iter().enumerate() {
            if !is_aligned(ts) {
                return Err(ModelError::MisalignedSlot {
                    meter: meter_id,
                    slot: format_slot(ts),
                });
            }
            if i > 0 && slots[i - 1].0 >= *ts {
                return Err(ModelError::UnorderedSlot {
                    meter: meter_id,
                    slot: format_slot(ts),
                });
            }
        }
        Ok(Self {
            meter_id,
            kind,
            slots,
        })
    }

    pub fn meter_id(&self) -> &MeterId {
        &self.meter_id
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn slots(&self) -> &[(SlotStart, EnergyWh)] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot_starts(&self) -> impl Iterator<Item = &SlotStart> + '_ {
        self.slots.iter().map(|(ts, _)| ts)
    }

    /// Energy at the slot starting at `ts` (instant comparison).
    pub fn get(&self, ts: &SlotStart) -> Option<EnergyWh> {
        self.slots
            .binary_search_by(|(s, _)| s.cmp(ts))
            .ok()
            .map(|i| self.slots[i].1)
    }

    pub fn total(&self) -> EnergyWh {
        self.slots.iter().map(|(_, e)| *e).sum()
    }

    /// Same slots, each energy replaced by `f(energy)`.
    pub fn map_energy(&self, mut f: impl FnMut(EnergyWh) -> EnergyWh) -> SlotSeries {
        SlotSeries {
            meter_id: self.meter_id.clone(),
            kind: self.kind,
            slots: self.slots.iter().map(|(ts, e)| (*ts, f(*e))).collect(),
        }
    }

    pub fn with_meter_id(mut self, meter_id: MeterId) -> SlotSeries {
        self.meter_id = meter_id;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::time::parse_timestamp;

    fn ts(s: &str) -> SlotStart {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn rejects_duplicates_and_misalignment() {
        let m = MeterId::new("m").unwrap();
        let a = ts("2022-05-04T10:00:00+02:00");
        let b = ts("2022-05-04T10:30:00+02:00");
        assert!(SlotSeries::new(m.clone(), SeriesKind::Consumption, vec![(a, EnergyWh(1)), (b, EnergyWh(2))]).is_ok());
        assert!(matches!(
            SlotSeries::new(m.clone(), SeriesKind::Consumption, vec![(a, EnergyWh(1)), (a, EnergyWh(2))]),
            Err(ModelError::UnorderedSlot { .. })
        ));
        assert!(matches!(
            SlotSeries::new(m.clone(), SeriesKind::Consumption, vec![(b, EnergyWh(1)), (a, EnergyWh(2))]),
            Err(ModelError::UnorderedSlot { .. })
        ));
        assert!(matches!(
            SlotSeries::new(m, SeriesKind::Consumption, vec![(ts("2022-05-04T10:20:00+02:00"), EnergyWh(1))]),
            Err(ModelError::MisalignedSlot { .. })
        ));
    }

    #[test]
    fn lookup_by_instant() {
        let m = MeterId::new("m").unwrap();
        let s = SlotSeries::new(
            m,
            SeriesKind::Production,
            vec![(ts("2022-05-04T10:00:00+02:00"), EnergyWh(7))],
        )
        .unwrap();
        assert_eq!(s.get(&ts("2022-05-04T08:00:00+00:00")), Some(EnergyWh(7)));
        assert_eq!(s.get(&ts("2022-05-04T10:30:00+02:00")), None);
        assert_eq!(s.total(), EnergyWh(7));
    }
}
