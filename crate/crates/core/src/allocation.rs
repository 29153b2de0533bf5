//! Per-slot repartition of production among participants.
//!
//! Three policies are supported:
//!
//! * **static**: fixed coefficients. Each participant's share of the slot
//!   is capped at what it consumed and whatever is cut off goes to the grid;
//!   it is never handed to another participant.
//! * **default dynamic**: if the community consumes less than is produced
//!   everybody is fully served, otherwise production is split in
//!   proportion to consumption.
//! * **custom dynamic**: a priority waterfall, each participant served up
//!   to its consumption before the next one gets anything.
//!
//! All results are integer watt-hours. Proportional splits use
//! largest-remainder rounding (see [`crate::apportion`]) with ties going to
//! the participant whose id sorts first, so shares add up to production
//! exactly.

use std::collections::BTreeMap;
use thiserror::Error;

use crate::apportion::apportion;
use crate::model::time::format_slot;
use crate::model::{
    AllocationPolicy, EnergyWh, KorVector, Participant, ParticipantId, PriorityOrder,
    SlotAllocation, SlotSeries, SlotStart, TariffBook,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AllocationError {
    #[error("KoR vector does not cover exactly the consuming participants")]
    KorCoverage,
    #[error("priority order is not a permutation of the consuming participants")]
    OrderNotPermutation,
    #[error("no tariff for participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("meter {meter}: slot sets differ at {slot}")]
    SlotMismatch { meter: String, slot: String },
}

pub type Consumption = BTreeMap<ParticipantId, EnergyWh>;

fn finish(
    slot: SlotStart,
    production: EnergyWh,
    consumption: &Consumption,
    self_consumed: Consumption,
) -> SlotAllocation {
    let shared: EnergyWh = self_consumed.values().sum();
    let surplus = production
        .checked_sub(shared)
        .expect("policies never hand out more than was produced");
    SlotAllocation::new(slot, production, consumption.clone(), self_consumed, surplus)
        .expect("policies conserve energy and respect consumption caps")
}

/// Fixed-key allocation: share_i = KoR_i × production, then truncated at
/// consumption_i with no redistribution of the cut-off part.
pub fn allocate_static(
    slot: SlotStart,
    production: EnergyWh,
    consumption: &Consumption,
    kors: &KorVector,
) -> Result<SlotAllocation, AllocationError> {
    if !kors.ids().eq(consumption.keys()) {
        return Err(AllocationError::KorCoverage);
    }
    let weights: Vec<u64> = consumption
        .keys()
        .map(|id| kors.integer_weight(id).expect("coverage checked above"))
        .collect();
    let shares = apportion(production.wh(), &weights);
    let self_consumed = consumption
        .iter()
        .zip(shares)
        .map(|((id, c), share)| (id.clone(), EnergyWh(share.min(c.wh()))))
        .collect();
    Ok(finish(slot, production, consumption, self_consumed))
}

/// Consumption-proportional allocation.
///
/// With zero total consumption nothing can be self-consumed and the whole
/// production is surplus.
pub fn allocate_default_dynamic(
    slot: SlotStart,
    production: EnergyWh,
    consumption: &Consumption,
) -> SlotAllocation {
    let total: EnergyWh = consumption.values().sum();
    let self_consumed = if total <= production {
        consumption.clone()
    } else {
        let weights: Vec<u64> = consumption.values().map(|c| c.wh()).collect();
        // Each part is at most ceil(production × c_i / total) <= c_i.
        consumption
            .keys()
            .cloned()
            .zip(apportion(production.wh(), &weights).into_iter().map(EnergyWh))
            .collect()
    };
    finish(slot, production, consumption, self_consumed)
}

/// Priority waterfall: each participant in `order` takes
/// min(remaining, consumption) and the rest goes to the grid.
pub fn allocate_custom_dynamic(
    slot: SlotStart,
    production: EnergyWh,
    consumption: &Consumption,
    order: &PriorityOrder,
) -> Result<SlotAllocation, AllocationError> {
    if !order.is_permutation_of(consumption.keys()) {
        return Err(AllocationError::OrderNotPermutation);
    }
    let mut remaining = production.wh();
    let mut self_consumed = Consumption::new();
    for id in order.iter() {
        let take = remaining.min(consumption[id].wh());
        remaining -= take;
        self_consumed.insert(id.clone(), EnergyWh(take));
    }
    Ok(finish(slot, production, consumption, self_consumed))
}

/// Orders participants by the value of one self-consumed kWh, highest first;
/// equal values fall back to id order.
pub fn derive_priority_order(
    participants: &[Participant],
    book: &TariffBook,
) -> Result<PriorityOrder, AllocationError> {
    let mut valued = participants
        .iter()
        .map(|p| {
            book.tariff(&p.id)
                .map(|t| (t.effective_value(), p.id.clone()))
                .ok_or_else(|| AllocationError::UnknownParticipant(p.id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    valued.sort_by(|(va, ia), (vb, ib)| vb.cmp(va).then_with(|| ia.cmp(ib)));
    Ok(PriorityOrder(valued.into_iter().map(|(_, id)| id).collect()))
}

/// Applies `policy` slot by slot. Every consumption series must cover
/// exactly the production series' slots; output follows slot order.
pub fn allocate_series(
    policy: &AllocationPolicy,
    production: &SlotSeries,
    consumptions: &BTreeMap<ParticipantId, SlotSeries>,
) -> Result<Vec<SlotAllocation>, AllocationError> {
    match policy {
        AllocationPolicy::Static(kors) if !kors.ids().eq(consumptions.keys()) => {
            return Err(AllocationError::KorCoverage)
        }
        AllocationPolicy::CustomDynamic(order) if !order.is_permutation_of(consumptions.keys()) => {
            return Err(AllocationError::OrderNotPermutation)
        }
        _ => {}
    }
    check_slot_sets(production, consumptions)?;

    production
        .slots()
        .iter()
        .enumerate()
        .map(|(i, (slot, produced))| {
            let consumption: Consumption = consumptions
                .iter()
                .map(|(id, s)| (id.clone(), s.slots()[i].1))
                .collect();
            match policy {
                AllocationPolicy::Static(kors) => allocate_static(*slot, *produced, &consumption, kors),
                AllocationPolicy::DefaultDynamic => {
                    Ok(allocate_default_dynamic(*slot, *produced, &consumption))
                }
                AllocationPolicy::CustomDynamic(order) => {
                    allocate_custom_dynamic(*slot, *produced, &consumption, order)
                }
            }
        })
        .collect()
}

fn check_slot_sets(
    production: &SlotSeries,
    consumptions: &BTreeMap<ParticipantId, SlotSeries>,
) -> Result<(), AllocationError> {
    let expected = production.slots();
    // Earliest slot at which any series diverges from production.
    let mut first: Option<(SlotStart, String)> = None;
    for series in consumptions.values() {
        let got = series.slots();
        let divergence = expected
            .iter()
            .zip(got)
            .find(|((a, _), (b, _))| a != b)
            .map(|((a, _), (b, _))| *a.min(b))
            .or_else(|| match expected.len().cmp(&got.len()) {
                std::cmp::Ordering::Greater => Some(expected[got.len()].0),
                std::cmp::Ordering::Less => Some(got[expected.len()].0),
                std::cmp::Ordering::Equal => None,
            });
        if let Some(slot) = divergence {
            if first.as_ref().is_none_or(|(s, _)| slot < *s) {
                first = Some((slot, series.meter_id().to_string()));
            }
        }
    }
    match first {
        Some((slot, meter)) => Err(AllocationError::SlotMismatch {
            meter,
            slot: format_slot(&slot),
        }),
        None => Ok(()),
    }
}
