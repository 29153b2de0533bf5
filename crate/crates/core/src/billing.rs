//! Self-consumption rate and savings over a window of settled slots.
//!
//! Savings value each participant's self-consumed kWh at its tariff raised
//! by the avoided grid-fee and tax percentages, and value surplus at the
//! feed-in rate. Investment cost is not part of the figure.

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

use crate::model::{DateWindow, EnergyWh, Eur, ParticipantId, SlotAllocation, TariffBook};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BillingError {
    #[error("no tariff for participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("policy {policy}: report window {got} differs from {expected}")]
    WindowMismatch {
        policy: String,
        expected: DateWindow,
        got: DateWindow,
    },
    #[error("nothing to compare")]
    NoReports,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrReport {
    /// Self-consumed over produced energy; `None` when nothing was produced.
    pub scr: Option<Decimal>,
    pub self_consumed_total: EnergyWh,
    pub production_total: EnergyWh,
    pub window: DateWindow,
}

impl ScrReport {
    /// True when every produced Wh was self-consumed.
    pub fn is_full(&self) -> bool {
        self.production_total.wh() > 0 && self.self_consumed_total == self.production_total
    }
}

/// Slots whose local date falls inside `window` are aggregated; others are
/// ignored.
pub fn compute_scr(allocations: &[SlotAllocation], window: DateWindow) -> ScrReport {
    let (self_consumed_total, production_total) = allocations
        .iter()
        .filter(|a| window.contains(a.slot_start()))
        .fold((EnergyWh::ZERO, EnergyWh::ZERO), |(sc, p), a| {
            (sc + a.self_consumed_total(), p + a.production())
        });
    let scr = (production_total.wh() > 0)
        .then(|| Decimal::from(self_consumed_total.wh()) / Decimal::from(production_total.wh()));
    ScrReport {
        scr,
        self_consumed_total,
        production_total,
        window,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub per_participant: BTreeMap<ParticipantId, Eur>,
    pub feed_in: Eur,
    pub total: Eur,
    pub window: DateWindow,
}

pub fn compute_savings(
    allocations: &[SlotAllocation],
    book: &TariffBook,
    window: DateWindow,
) -> Result<SavingsReport, BillingError> {
    let mut energy: BTreeMap<ParticipantId, EnergyWh> = BTreeMap::new();
    let mut surplus = EnergyWh::ZERO;
    for a in allocations.iter().filter(|a| window.contains(a.slot_start())) {
        for (id, e) in a.self_consumed() {
            *energy.entry(id.clone()).or_default() += *e;
        }
        surplus += a.surplus_to_grid();
    }

    let per_participant = energy
        .into_iter()
        .map(|(id, e)| {
            let tariff = book
                .tariff(&id)
                .ok_or_else(|| BillingError::UnknownParticipant(id.clone()))?;
            Ok((id, Eur::new(e.kwh() * tariff.effective_value())))
        })
        .collect::<Result<BTreeMap<_, _>, BillingError>>()?;
    let feed_in = Eur::new(surplus.kwh() * book.feed_in_eur_per_kwh());
    let total = per_participant.values().copied().sum::<Eur>() + feed_in;
    Ok(SavingsReport {
        per_participant,
        feed_in,
        total,
        window,
    })
}

/// (a − b) / b × 100, or `None` when b is zero.
pub fn relative_difference_pct(a: Decimal, b: Decimal) -> Option<Decimal> {
    (!b.is_zero()).then(|| (a - b) / b * Decimal::ONE_HUNDRED)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub scr: Option<Decimal>,
    pub savings_total: Eur,
    pub per_participant: BTreeMap<ParticipantId, Eur>,
    pub feed_in: Eur,
}

/// How `policy` compares with `base`, in percent of `base`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelativeDifference {
    pub policy: String,
    pub base: String,
    pub scr_pct: Option<Decimal>,
    pub savings_pct: Option<Decimal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub window: DateWindow,
    pub rows: Vec<ComparisonRow>,
    pub differences: Vec<RelativeDifference>,
}

pub fn compare_policies(
    reports: &BTreeMap<String, (ScrReport, SavingsReport)>,
) -> Result<ComparisonTable, BillingError> {
    let window = reports
        .values()
        .next()
        .map(|(scr, _)| scr.window)
        .ok_or(BillingError::NoReports)?;
    for (policy, (scr, savings)) in reports {
        for got in [scr.window, savings.window] {
            if got != window {
                return Err(BillingError::WindowMismatch {
                    policy: policy.clone(),
                    expected: window,
                    got,
                });
            }
        }
    }

    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|(policy, (scr, savings))| ComparisonRow {
            policy: policy.clone(),
            scr: scr.scr,
            savings_total: savings.total,
            per_participant: savings.per_participant.clone(),
            feed_in: savings.feed_in,
        })
        .collect();

    let mut differences = Vec::new();
    for a in &rows {
        for b in rows.iter().filter(|b| b.policy != a.policy) {
            differences.push(RelativeDifference {
                policy: a.policy.clone(),
                base: b.policy.clone(),
                scr_pct: a.scr.zip(b.scr).and_then(|(x, y)| relative_difference_pct(x, y)),
                savings_pct: relative_difference_pct(a.savings_total.value(), b.savings_total.value()),
            });
        }
    }
    Ok(ComparisonTable {
        window,
        rows,
        differences,
    })
}

fn fixed(value: Decimal, dp: u32) -> String {
    let mut v = value.round_dp_with_strategy(dp, RoundingStrategy::MidpointNearestEven);
    v.rescale(dp);
    v.to_string()
}

impl ComparisonTable {
    /// One line per policy: `policy,scr,savings_total_eur,savings_<id>...,feed_in_eur`.
    /// Currency is rounded to cents, SCR to six digits.
    pub fn to_csv(&self) -> String {
        let ids: BTreeSet<&ParticipantId> =
            self.rows.iter().flat_map(|r| r.per_participant.keys()).collect();
        let mut out = String::from("policy,scr,savings_total_eur");
        for id in &ids {
            let _ = write!(out, ",savings_{id}_eur");
        }
        out.push_str(",feed_in_eur\n");
        for row in &self.rows {
            let scr = row.scr.map_or_else(|| "undefined".to_string(), |s| fixed(s, 6));
            let _ = write!(out, "{},{},{}", row.policy, scr, row.savings_total.cents());
            for id in &ids {
                let v = row.per_participant.get(*id).copied().unwrap_or(Eur::ZERO);
                let _ = write!(out, ",{}", v.cents());
            }
            let _ = writeln!(out, ",{}", row.feed_in.cents());
        }
        out
    }
}
