use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{MeterId, ModelError, ParticipantId};
use crate::apportion::apportion;

/// A consuming building.
///
/// `grid_uplift_pct` and `tax_uplift_pct` are the percentage points by which
/// a self-consumed kWh is worth more than the bare energy rate because the
/// grid fee or the electricity tax is avoided.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: ParticipantId,
    pub meter_id: MeterId,
    pub tariff_eur_per_kwh: Decimal,
    #[serde(default)]
    pub grid_uplift_pct: Decimal,
    #[serde(default)]
    pub tax_uplift_pct: Decimal,
    pub priority_rank: u32,
}

impl Participant {
    pub fn tariff(&self) -> Tariff {
        Tariff {
            rate_eur_per_kwh: self.tariff_eur_per_kwh,
            grid_uplift_pct: self.grid_uplift_pct,
            tax_uplift_pct: self.tax_uplift_pct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Community {
    pub participants: Vec<Participant>,
    pub production_meter: MeterId,
    pub feed_in_eur_per_kwh: Decimal,
}

impl Community {
    pub fn participant(&self, id: &ParticipantId) -> Option<&Participant> {
        self.participants.iter().find(|p| &p.id == id)
    }

    pub fn participant_ids(&self) -> BTreeSet<ParticipantId> {
        self.participants.iter().map(|p| p.id.clone()).collect()
    }

    /// Participants ordered by their configured `priority_rank`.
    pub fn order_by_rank(&self) -> PriorityOrder {
        let mut ps: Vec<&Participant> = self.participants.iter().collect();
        ps.sort_by(|a, b| a.priority_rank.cmp(&b.priority_rank).then(a.id.cmp(&b.id)));
        PriorityOrder(ps.into_iter().map(|p| p.id.clone()).collect())
    }

    pub fn tariff_book(&self) -> Result<TariffBook, ModelError> {
        TariffBook::new(
            self.participants.iter().map(|p| (p.id.clone(), p.tariff())),
            self.feed_in_eur_per_kwh,
        )
    }
}

/// Value terms for one participant's self-consumed energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tariff {
    pub rate_eur_per_kwh: Decimal,
    pub grid_uplift_pct: Decimal,
    pub tax_uplift_pct: Decimal,
}

impl Tariff {
    /// rate × (1 + (grid + tax) / 100), in EUR per self-consumed kWh.
    pub fn effective_value(&self) -> Decimal {
        self.rate_eur_per_kwh
            * (Decimal::ONE + (self.grid_uplift_pct + self.tax_uplift_pct) / Decimal::ONE_HUNDRED)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TariffBook {
    tariffs: BTreeMap<ParticipantId, Tariff>,
    feed_in_eur_per_kwh: Decimal,
}

impl TariffBook {
    pub fn new(
        tariffs: impl IntoIterator<Item = (ParticipantId, Tariff)>,
        feed_in_eur_per_kwh: Decimal,
    ) -> Result<Self, ModelError> {
        if feed_in_eur_per_kwh.is_sign_negative() && !feed_in_eur_per_kwh.is_zero() {
            return Err(ModelError::NegativeRate("feed-in".into()));
        }
        let mut map = BTreeMap::new();
        for (id, t) in tariffs {
            if t.rate_eur_per_kwh < Decimal::ZERO
                || t.grid_uplift_pct < Decimal::ZERO
                || t.tax_uplift_pct < Decimal::ZERO
            {
                return Err(ModelError::NegativeRate(id.to_string()));
            }
            if map.insert(id.clone(), t).is_some() {
                return Err(ModelError::DuplicateParticipant(id));
            }
        }
        Ok(Self {
            tariffs: map,
            feed_in_eur_per_kwh,
        })
    }

    pub fn tariff(&self, id: &ParticipantId) -> Option<&Tariff> {
        self.tariffs.get(id)
    }

    pub fn feed_in_eur_per_kwh(&self) -> Decimal {
        self.feed_in_eur_per_kwh
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParticipantId, &Tariff)> {
        self.tariffs.iter()
    }

    /// Every rate multiplied by `factor`; uplift percentages are unchanged.
    pub fn scaled(&self, factor: Decimal) -> Result<Self, ModelError> {
        Self::new(
            self.tariffs.iter().map(|(id, t)| {
                (
                    id.clone(),
                    Tariff {
                        rate_eur_per_kwh: t.rate_eur_per_kwh * factor,
                        ..*t
                    },
                )
            }),
            self.feed_in_eur_per_kwh * factor,
        )
    }
}

/// Upper bound on the fractional digits a repartition coefficient carries.
pub const KOR_MAX_DECIMALS: u32 = 12;
/// Fractional digits of keys derived from consumption history or equal shares.
pub const KOR_DERIVED_DECIMALS: u32 = 6;

pub fn kor_sum_tolerance() -> Decimal {
    Decimal::new(1, 9)
}

/// Fixed repartition coefficients, one per participant, summing to 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<ParticipantId, Decimal>", into = "BTreeMap<ParticipantId, Decimal>")]
pub struct KorVector {
    entries: BTreeMap<ParticipantId, Decimal>,
}

impl KorVector {
    pub fn new(entries: impl IntoIterator<Item = (ParticipantId, Decimal)>) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (id, c) in entries {
            if c < Decimal::ZERO || c > Decimal::ONE {
                return Err(ModelError::KorOutOfRange { id, value: c });
            }
            let c = c.round_dp(KOR_MAX_DECIMALS);
            if map.insert(id.clone(), c).is_some() {
                return Err(ModelError::DuplicateParticipant(id));
            }
        }
        if map.is_empty() {
            return Err(ModelError::EmptyKor);
        }
        let sum: Decimal = map.values().sum();
        if (sum - Decimal::ONE).abs() > kor_sum_tolerance() {
            return Err(ModelError::KorSum(sum));
        }
        Ok(Self { entries: map })
    }

    /// Coefficients proportional to integer `weights`, apportioned at
    /// [`KOR_DERIVED_DECIMALS`] so they sum to exactly 1.
    pub fn from_weights(
        weights: impl IntoIterator<Item = (ParticipantId, u64)>,
    ) -> Result<Self, ModelError> {
        let (ids, ws): (Vec<_>, Vec<_>) = weights.into_iter().unzip();
        if ws.iter().all(|&w| w == 0) {
            return Err(ModelError::ZeroWeights);
        }
        let units = 10u64.pow(KOR_DERIVED_DECIMALS);
        let parts = apportion(units, &ws);
        Self::new(ids.into_iter().zip(parts).map(|(id, p)| {
            (id, Decimal::from_i128_with_scale(i128::from(p), KOR_DERIVED_DECIMALS))
        }))
    }

    /// Equal shares, the investment-based split where every owner funds the
    /// same amount.
    pub fn equal(ids: impl IntoIterator<Item = ParticipantId>) -> Result<Self, ModelError> {
        Self::from_weights(ids.into_iter().map(|id| (id, 1)))
    }

    pub fn coefficient(&self, id: &ParticipantId) -> Option<Decimal> {
        self.entries.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParticipantId, &Decimal)> {
        self.entries.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ParticipantId> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sum(&self) -> Decimal {
        self.entries.values().sum()
    }

    /// Coefficient as an integer count of 10^-12 units.
    pub(crate) fn integer_weight(&self, id: &ParticipantId) -> Option<u64> {
        self.entries.get(id).map(|c| {
            let mut c = *c;
            c.rescale(KOR_MAX_DECIMALS);
            // c is in [0, 1] so the mantissa is at most 10^12.
            c.mantissa() as u64
        })
    }
}

impl TryFrom<BTreeMap<ParticipantId, Decimal>> for KorVector {
    type Error = ModelError;
    fn try_from(map: BTreeMap<ParticipantId, Decimal>) -> Result<Self, ModelError> {
        Self::new(map)
    }
}

impl From<KorVector> for BTreeMap<ParticipantId, Decimal> {
    fn from(k: KorVector) -> Self {
        k.entries
    }
}

/// Service order for the priority waterfall, first served first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorityOrder(pub Vec<ParticipantId>);

impl PriorityOrder {
    pub fn is_permutation_of<'a>(&self, ids: impl IntoIterator<Item = &'a ParticipantId>) -> bool {
        let mut mine: Vec<&ParticipantId> = self.0.iter().collect();
        let mut theirs: Vec<&ParticipantId> = ids.into_iter().collect();
        mine.sort();
        theirs.sort();
        mine == theirs
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParticipantId> {
        self.0.iter()
    }
}

/// How each slot's production is shared out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPolicy {
    /// Fixed coefficients, each share capped at the participant's consumption.
    Static(KorVector),
    /// Shares proportional to each participant's consumption in the slot.
    DefaultDynamic,
    /// Waterfall in the given order.
    CustomDynamic(PriorityOrder),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rust_decimal_macros::dec;

    fn pid(s: &str) -> ParticipantId {
        ParticipantId::new(s).unwrap()
    }

    #[test]
    fn kor_sum_is_enforced() {
        let ok = KorVector::new([(pid("a"), dec!(0.4245)), (pid("b"), dec!(0.5039)), (pid("c"), dec!(0.0716))]);
        assert!(ok.is_ok());
        let short = KorVector::new([(pid("a"), dec!(0.49)), (pid("b"), dec!(0.50))]);
        assert!(matches!(short, Err(ModelError::KorSum(_))));
        let in_tol = KorVector::new([(pid("a"), dec!(0.5000000005)), (pid("b"), dec!(0.5))]);
        assert!(in_tol.is_ok());
        let out_tol = KorVector::new([(pid("a"), dec!(0.500000002)), (pid("b"), dec!(0.5))]);
        assert!(out_tol.is_err());
        assert!(matches!(
            KorVector::new([(pid("a"), dec!(1.5)), (pid("b"), dec!(-0.5))]),
            Err(ModelError::KorOutOfRange { .. })
        ));
        assert!(matches!(
            KorVector::new([(pid("a"), dec!(0.5)), (pid("a"), dec!(0.5))]),
            Err(ModelError::DuplicateParticipant(_))
        ));
    }

    #[test]
    fn equal_shares_sum_to_one() {
        let k = KorVector::equal([pid("a"), pid("b"), pid("c")]).unwrap();
        assert_eq!(k.sum(), Decimal::ONE);
        assert_eq!(k.coefficient(&pid("a")), Some(dec!(0.333334)));
        assert_eq!(k.coefficient(&pid("c")), Some(dec!(0.333333)));
        assert_eq!(k.integer_weight(&pid("a")), Some(333_334_000_000));
    }

    #[test]
    fn effective_values() {
        let t = |r, g, x| Tariff { rate_eur_per_kwh: r, grid_uplift_pct: g, tax_uplift_pct: x };
        assert_eq!(t(dec!(0.13), dec!(28), dec!(38)).effective_value(), dec!(0.2158));
        assert_eq!(t(dec!(0.13), dec!(0), dec!(38)).effective_value(), dec!(0.1794));
        assert_eq!(t(dec!(0.11), dec!(0), dec!(0)).effective_value(), dec!(0.11));
    }

    #[test]
    fn kor_deserializes_through_validation() {
        let good: KorVector = serde_json::from_str(r#"{"a":"0.25","b":"0.75"}"#).unwrap();
        assert_eq!(good.len(), 2);
        assert!(serde_json::from_str::<KorVector>(r#"{"a":"0.25","b":"0.74"}"#).is_err());
    }
}
