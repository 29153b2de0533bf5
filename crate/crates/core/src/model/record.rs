use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::time::{format_slot, SlotStart};
use super::{EnergyWh, ModelError, ParticipantId};

/// Outcome of sharing one slot's production.
///
/// Construction checks that self-consumption plus surplus equals
/// production exactly and that nobody self-consumes more than they drew.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAllocation")]
pub struct SlotAllocation {
    slot_start: SlotStart,
    production: EnergyWh,
    consumption: BTreeMap<ParticipantId, EnergyWh>,
    self_consumed: BTreeMap<ParticipantId, EnergyWh>,
    surplus_to_grid: EnergyWh,
}

#[derive(Deserialize)]
struct RawAllocation {
    slot_start: SlotStart,
    production: EnergyWh,
    consumption: BTreeMap<ParticipantId, EnergyWh>,
    self_consumed: BTreeMap<ParticipantId, EnergyWh>,
    surplus_to_grid: EnergyWh,
}

impl TryFrom<RawAllocation> for SlotAllocation {
    type Error = ModelError;
    fn try_from(r: RawAllocation) -> Result<Self, ModelError> {
        SlotAllocation::new(r.slot_start, r.production, r.consumption, r.self_consumed, r.surplus_to_grid)
    }
}

impl SlotAllocation {
    pub fn new(
        slot_start: SlotStart,
        production: EnergyWh,
        consumption: BTreeMap<ParticipantId, EnergyWh>,
        self_consumed: BTreeMap<ParticipantId, EnergyWh>,
        surplus_to_grid: EnergyWh,
    ) -> Result<Self, ModelError> {
        let slot = format_slot(&slot_start);
        if !consumption.keys().eq(self_consumed.keys()) {
            return Err(ModelError::AllocationKeys { slot });
        }
        for (id, sc) in &self_consumed {
            if *sc > consumption[id] {
                return Err(ModelError::OverAllocated {
                    slot,
                    participant: id.clone(),
                });
            }
        }
        let shared: u128 = self_consumed.values().map(|e| u128::from(e.0)).sum();
        if shared + u128::from(surplus_to_grid.0) != u128::from(production.0) {
            return Err(ModelError::NotConserved { slot });
        }
        Ok(Self {
            slot_start,
            production,
            consumption,
            self_consumed,
            surplus_to_grid,
        })
    }

    pub fn slot_start(&self) -> &SlotStart {
        &self.slot_start
    }

    pub fn production(&self) -> EnergyWh {
        self.production
    }

    pub fn consumption(&self) -> &BTreeMap<ParticipantId, EnergyWh> {
        &self.consumption
    }

    pub fn self_consumed(&self) -> &BTreeMap<ParticipantId, EnergyWh> {
        &self.self_consumed
    }

    pub fn surplus_to_grid(&self) -> EnergyWh {
        self.surplus_to_grid
    }

    pub fn self_consumed_total(&self) -> EnergyWh {
        self.self_consumed.values().sum()
    }

    pub fn consumption_total(&self) -> EnergyWh {
        self.consumption.values().sum()
    }
}
