use rust_decimal::prelude::ToPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{EnergyWh, ParticipantId, SeriesKind, SlotSeries};

/// Scales every production slot by `gain`, rounding half-even to whole Wh.
pub fn apply_pv_gain(series: &SlotSeries, gain: Decimal) -> Result<SlotSeries, IngestError> {
    if gain <= Decimal::ZERO {
        return Err(IngestError::NonPositiveGain(gain));
    }
    if series.kind() != SeriesKind::Production {
        return Err(IngestError::WrongKind {
            meter: series.meter_id().clone(),
            expected: SeriesKind::Production,
        });
    }
    let mut overflow = false;
    let scaled = series.map_energy(|e| {
        let v = Decimal::from(e.wh())
            .checked_mul(gain)
            .map(|v| v.round_dp_with_strategy(0, RoundingStrategy::MidpointNearestEven))
            .and_then(|v| v.to_u64());
        v.map(EnergyWh).unwrap_or_else(|| {
            overflow = true;
            EnergyWh::ZERO
        })
    });
    if overflow {
        return Err(IngestError::Overflow(series.meter_id().clone()));
    }
    Ok(scaled)
}

/// Adds a flat load of `power_kw` to every consumption slot (kW × 0.5 h).
pub fn add_constant_load(series: &SlotSeries, power_kw: Decimal) -> Result<SlotSeries, IngestError> {
    if power_kw < Decimal::ZERO {
        return Err(IngestError::NegativeLoad(power_kw));
    }
    if series.kind() != SeriesKind::Consumption {
        return Err(IngestError::WrongKind {
            meter: series.meter_id().clone(),
            expected: SeriesKind::Consumption,
        });
    }
    let extra = (power_kw * Decimal::from(500))
        .round_dp_with_strategy(0, RoundingStrategy::MidpointNearestEven)
        .to_u64()
        .ok_or_else(|| IngestError::Overflow(series.meter_id().clone()))?;
    let mut overflow = false;
    let out = series.map_energy(|e| match e.wh().checked_add(extra) {
        Some(v) => EnergyWh(v),
        None => {
            overflow = true;
            e
        }
    });
    if overflow {
        return Err(IngestError::Overflow(series.meter_id().clone()));
    }
    Ok(out)
}

fn default_gain() -> Decimal {
    Decimal::ONE
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_gain")]
    pub pv_gain: Decimal,
    #[serde(default)]
    pub datacentre_load_kw: Decimal,
    #[serde(default)]
    pub include_datacentre: bool,
    /// Participant whose meter receives the data-centre load.
    #[serde(default)]
    pub datacentre_participant: Option<ParticipantId>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            pv_gain: Decimal::ONE,
            datacentre_load_kw: Decimal::ZERO,
            include_datacentre: false,
            datacentre_participant: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.pv_gain <= Decimal::ZERO {
            return Err(IngestError::NonPositiveGain(self.pv_gain));
        }
        if self.datacentre_load_kw < Decimal::ZERO {
            return Err(IngestError::NegativeLoad(self.datacentre_load_kw));
        }
        if self.include_datacentre && self.datacentre_participant.is_none() {
            return Err(IngestError::Scenario(
                "include_datacentre is set but datacentre_participant is missing".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| IngestError::Scenario(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
