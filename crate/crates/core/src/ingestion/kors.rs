use std::collections::BTreeMap;

use super::IngestError;
use crate::model::{DateWindow, KorVector, ModelError, ParticipantId, SlotSeries};

/// Static keys proportional to each participant's consumption over `window`.
///
/// Coefficients are apportioned by largest remainder at six decimals, so
/// they always sum to exactly 1.
pub fn derive_static_kors(
    history: &BTreeMap<ParticipantId, SlotSeries>,
    window: DateWindow,
) -> Result<KorVector, IngestError> {
    let mut totals = Vec::with_capacity(history.len());
    for (id, series) in history {
        let mut seen = false;
        let mut total: u64 = 0;
        for (ts, e) in series.slots() {
            if window.contains(ts) {
                seen = true;
                total = total
                    .checked_add(e.wh())
                    .ok_or_else(|| IngestError::Overflow(series.meter_id().clone()))?;
            }
        }
        if !seen {
            return Err(IngestError::NoHistory {
                participant: id.clone(),
                window,
            });
        }
        totals.push((id.clone(), total));
    }
    if totals.is_empty() {
        return Err(IngestError::NoConsumption(window));
    }
    KorVector::from_weights(totals).map_err(|e| match e {
        ModelError::ZeroWeights => IngestError::NoConsumption(window),
        other => IngestError::Model(other),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::time::parse_timestamp;
    use crate::model::{EnergyWh, MeterId, SeriesKind};
    use chrono::{Duration, NaiveDate};
    use proptest::prelude::*;
    use rust_decimal::Decimal;
    use rust_decimal_macros::dec;

    fn pid(s: &str) -> ParticipantId {
        ParticipantId::new(s).unwrap()
    }

    fn history(totals: &[(&str, u64)]) -> BTreeMap<ParticipantId, SlotSeries> {
        let t = parse_timestamp("2021-06-01T12:00:00+02:00").unwrap();
        totals
            .iter()
            .map(|(id, v)| {
                let s = SlotSeries::new(
                    MeterId::new(format!("m{id}")).unwrap(),
                    SeriesKind::Consumption,
                    vec![(t, EnergyWh(v / 2)), (t + Duration::minutes(30), EnergyWh(v - v / 2))],
                )
                .unwrap();
                (pid(id), s)
            })
            .collect()
    }

    fn june() -> DateWindow {
        DateWindow::new(
            NaiveDate::from_ymd_opt(2021, 6, 1).unwrap(),
            NaiveDate::from_ymd_opt(2021, 6, 30).unwrap(),
        )
        .unwrap()
    }

    fn coeffs(k: &KorVector) -> Vec<Decimal> {
        k.iter().map(|(_, c)| *c).collect()
    }

    #[test]
    fn table_proportions_are_reproduced() {
        let k = derive_static_kors(&history(&[("ESTIA1", 424_500), ("ESTIA2", 503_900), ("ESTIA4", 71_600)]), june()).unwrap();
        assert_eq!(coeffs(&k), vec![dec!(0.4245), dec!(0.5039), dec!(0.0716)]);
        let k = derive_static_kors(&history(&[("ESTIA1", 94_400), ("ESTIA2", 112_000), ("ESTIA4", 793_600)]), june()).unwrap();
        assert_eq!(coeffs(&k), vec![dec!(0.0944), dec!(0.1120), dec!(0.7936)]);
    }

    #[test]
    fn equal_totals_give_thirds() {
        let k = derive_static_kors(&history(&[("a", 900), ("b", 900), ("c", 900)]), june()).unwrap();
        assert_eq!(coeffs(&k), vec![dec!(0.333334), dec!(0.333333), dec!(0.333333)]);
        assert_eq!(k.sum(), Decimal::ONE);
    }

    #[test]
    fn zero_consumption_is_an_error() {
        let err = derive_static_kors(&history(&[("a", 0), ("b", 0)]), june()).unwrap_err();
        assert_eq!(err.to_string(), "no consumption in window 2021-06-01..=2021-06-30");
    }

    #[test]
    fn participant_without_data_in_window_is_an_error() {
        let july = DateWindow::single_day(NaiveDate::from_ymd_opt(2021, 7, 1).unwrap());
        assert!(matches!(
            derive_static_kors(&history(&[("a", 10)]), july),
            Err(IngestError::NoHistory { .. })
        ));
    }

    proptest! {
        #[test]
        fn derived_keys_always_sum_to_one(totals in proptest::collection::vec(0u64..u64::MAX / 64, 1..8)) {
            prop_assume!(totals.iter().any(|&t| t > 0));
            let named: Vec<(String, u64)> = totals.iter().enumerate().map(|(i, &t)| (format!("p{i}"), t)).collect();
            let refs: Vec<(&str, u64)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
            let k = derive_static_kors(&history(&refs), june()).unwrap();
            prop_assert_eq!(k.sum(), Decimal::ONE);
        }
    }
}
