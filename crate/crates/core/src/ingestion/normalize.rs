use chrono::{Duration, Timelike};
use rust_decimal::{Decimal, RoundingStrategy};
use std::collections::BTreeMap;

use super::csv::{MeterClass, Quantity, QuantityKind, RawMeterRecord};
use super::IngestError;
use crate::model::time::{format_slot, is_aligned, slot_duration, slot_floor};
use crate::model::{EnergyWh, MeterId, SeriesKind, SlotSeries, SlotStart};

const SAMPLES_PER_SLOT: usize = 3;

/// Converts one meter's raw records to the 30-minute Wh grid.
///
/// - Linky Wh energies are summed per slot.
/// - SME/SMI 10-minute powers need exactly the samples at +0, +10 and +20
///   minutes; slot energy is their mean × 0.5 h.
/// - SME/SMI kWh indexes must sit on slot boundaries; each slot gets the
///   delta to the next reading × 1000.
///
/// Any slot missing between the first and last one is a gap error.
pub fn normalize_to_slots(records: &[RawMeterRecord], kind: SeriesKind) -> Result<SlotSeries, IngestError> {
    let first = records.first().ok_or(IngestError::NoRecords)?;
    let meter = &first.meter_id;
    let class = first.meter_class;
    let quantity = first.quantity.kind();
    for r in records {
        if &r.meter_id != meter {
            return Err(IngestError::MixedMeters(meter.clone(), r.meter_id.clone()));
        }
        if r.meter_class != class {
            return Err(IngestError::MixedClasses(meter.clone()));
        }
        if r.quantity.kind() != quantity {
            return Err(IngestError::MixedQuantities(meter.clone()));
        }
    }
    if !class.supports(quantity) {
        return Err(IngestError::ClassMismatch {
            meter: meter.clone(),
            class,
            quantity: quantity.as_str(),
        });
    }

    let mut sorted: Vec<&RawMeterRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.timestamp);
    if let Some(w) = sorted.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
        return Err(IngestError::DuplicateTimestamp {
            meter: meter.clone(),
            timestamp: format_slot(&w[1].timestamp),
        });
    }

    let slots = match quantity {
        QuantityKind::EnergyWh => linky_slots(&sorted),
        QuantityKind::PowerKw10min => power_slots(meter, &sorted)?,
        QuantityKind::EnergyKwhIndex => index_slots(meter, &sorted)?,
    };
    check_contiguous(meter, &slots)?;
    SlotSeries::new(meter.clone(), kind, slots).map_err(IngestError::Model)
}

fn linky_slots(sorted: &[&RawMeterRecord]) -> Vec<(SlotStart, EnergyWh)> {
    let mut slots: Vec<(SlotStart, EnergyWh)> = Vec::new();
    for r in sorted {
        let Quantity::EnergyWh(wh) = r.quantity else {
            unreachable!("quantity kinds checked by caller")
        };
        let slot = slot_floor(&r.timestamp);
        match slots.last_mut() {
            Some((s, e)) if *s == slot => *e += EnergyWh(wh),
            _ => slots.push((slot, EnergyWh(wh))),
        }
    }
    slots
}

fn power_slots(meter: &MeterId, sorted: &[&RawMeterRecord]) -> Result<Vec<(SlotStart, EnergyWh)>, IngestError> {
    let mut grouped: BTreeMap<SlotStart, Vec<(SlotStart, Decimal)>> = BTreeMap::new();
    for r in sorted {
        let Quantity::PowerKw10min(kw) = r.quantity else {
            unreachable!("quantity kinds checked by caller")
        };
        let ts = r.timestamp;
        if ts.second() != 0 || ts.nanosecond() != 0 || ts.minute() % 10 != 0 {
            return Err(IngestError::MisalignedSample {
                meter: meter.clone(),
                timestamp: format_slot(&ts),
            });
        }
        grouped.entry(slot_floor(&ts)).or_default().push((ts, kw));
    }
    let mut slots = Vec::with_capacity(grouped.len());
    for (slot, samples) in grouped {
        if samples.len() != SAMPLES_PER_SLOT {
            return Err(IngestError::Gap {
                meter: meter.clone(),
                slot: format_slot(&slot),
                detail: format!("{} of {SAMPLES_PER_SLOT} power samples", samples.len()),
            });
        }
        let sum: Decimal = samples.iter().map(|(_, kw)| *kw).sum();
        // mean kW × 0.5 h × 1000 Wh/kWh
        let wh = (sum * Decimal::from(500) / Decimal::from(SAMPLES_PER_SLOT as u64))
            .round_dp_with_strategy(0, RoundingStrategy::MidpointNearestEven);
        slots.push((slot, to_wh(meter, &slot, wh)?));
    }
    Ok(slots)
}

fn index_slots(meter: &MeterId, sorted: &[&RawMeterRecord]) -> Result<Vec<(SlotStart, EnergyWh)>, IngestError> {
    let mut slots = Vec::with_capacity(sorted.len().saturating_sub(1));
    for r in sorted {
        if !is_aligned(&r.timestamp) {
            return Err(IngestError::MisalignedSample {
                meter: meter.clone(),
                timestamp: format_slot(&r.timestamp),
            });
        }
    }
    for w in sorted.windows(2) {
        let (Quantity::EnergyKwhIndex(a), Quantity::EnergyKwhIndex(b)) = (w[0].quantity, w[1].quantity) else {
            unreachable!("quantity kinds checked by caller")
        };
        let slot = w[0].timestamp;
        if w[1].timestamp - slot != slot_duration() {
            return Err(IngestError::Gap {
                meter: meter.clone(),
                slot: format_slot(&(slot + slot_duration())),
                detail: "missing index reading".into(),
            });
        }
        if b < a {
            return Err(IngestError::IndexDecrease {
                meter: meter.clone(),
                timestamp: format_slot(&w[1].timestamp),
            });
        }
        slots.push((slot, to_wh(meter, &slot, (b - a) * Decimal::from(1000))?));
    }
    Ok(slots)
}

fn to_wh(meter: &MeterId, slot: &SlotStart, wh: Decimal) -> Result<EnergyWh, IngestError> {
    use rust_decimal::prelude::ToPrimitive;
    if !wh.fract().is_zero() {
        return Err(IngestError::FractionalWh {
            meter: meter.clone(),
            slot: format_slot(slot),
        });
    }
    wh.to_u64().map(EnergyWh).ok_or_else(|| IngestError::FractionalWh {
        meter: meter.clone(),
        slot: format_slot(slot),
    })
}

fn check_contiguous(meter: &MeterId, slots: &[(SlotStart, EnergyWh)]) -> Result<(), IngestError> {
    let step: Duration = slot_duration();
    for w in slots.windows(2) {
        if w[1].0 - w[0].0 != step {
            return Err(IngestError::Gap {
                meter: meter.clone(),
                slot: format_slot(&(w[0].0 + step)),
                detail: "no data".into(),
            });
        }
    }
    Ok(())
}

/// Groups records by meter id, preserving the class of each meter.
pub fn group_by_meter(records: &[RawMeterRecord]) -> BTreeMap<MeterId, (MeterClass, Vec<RawMeterRecord>)> {
    let mut out: BTreeMap<MeterId, (MeterClass, Vec<RawMeterRecord>)> = BTreeMap::new();
    for r in records {
        out.entry(r.meter_id.clone())
            .or_insert_with(|| (r.meter_class, Vec::new()))
            .1
            .push(r.clone());
    }
    out
}
