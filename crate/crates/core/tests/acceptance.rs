//! Acceptance gate. One line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test --test acceptance`.

use chrono::{Duration, NaiveDate};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use rust_decimal_macros::dec;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration as StdDuration, Instant};

use pvshare::allocation::{
    allocate_custom_dynamic, allocate_default_dynamic, allocate_series, allocate_static, derive_priority_order,
};
use pvshare::audit::{verify_bytes, verify_bytes_from, ChainStatus, Ledger, Payload};
use pvshare::billing::{compute_savings, compute_scr};
use pvshare::ingestion::derive_static_kors;
use pvshare::model::time::parse_timestamp;
use pvshare::model::{
    AllocationPolicy, DateWindow, EnergyWh, Eur, KorVector, MeterId, Participant, ParticipantId, PriorityOrder,
    SeriesKind, SlotAllocation, SlotSeries, SlotStart, Tariff, TariffBook,
};
use pvshare::runner::{prepare, render_outputs, settle, synthesize_demo_data, write_tree, RadiationProfile, RunConfig};

// Pinned limits.
const KOR_TOLERANCE: Decimal = dec!(0.0001); // 0.01 percentage points
const CONSTANTS_BUDGET: StdDuration = StdDuration::from_secs(1);
const CONSERVATION_BUDGET: StdDuration = StdDuration::from_secs(10);
const CONSERVATION_SLOTS: usize = 10_000;
const DOMINANCE_DAYS: usize = 1_000;
const SWEEP_MAX_WH: u64 = 20;
const LEDGER_RECORDS: usize = 1_000;
const BILLING_FUZZ_CASES: usize = 1_000;
const SCENARIO_SEEDS: [u64; 3] = [1, 2, 3];

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Option<StdDuration>);

fn pid(s: &str) -> ParticipantId {
    ParticipantId::new(s).unwrap()
}

fn slot0() -> SlotStart {
    parse_timestamp("2022-05-09T00:00:00+02:00").unwrap()
}

fn day_window() -> DateWindow {
    DateWindow::single_day(NaiveDate::from_ymd_opt(2022, 5, 9).unwrap())
}

fn estia_participants() -> Vec<Participant> {
    let p = |id: &str, rate: Decimal, grid: Decimal, tax: Decimal, rank| Participant {
        id: pid(id),
        meter_id: MeterId::new(id.to_lowercase()).unwrap(),
        tariff_eur_per_kwh: rate,
        grid_uplift_pct: grid,
        tax_uplift_pct: tax,
        priority_rank: rank,
    };
    vec![
        p("ESTIA1", dec!(0.13), dec!(28), dec!(38), 1),
        p("ESTIA2", dec!(0.13), dec!(0), dec!(38), 2),
        p("ESTIA4", dec!(0.11), dec!(0), dec!(0), 3),
    ]
}

fn estia_book() -> TariffBook {
    TariffBook::new(estia_participants().iter().map(|p| (p.id.clone(), p.tariff())), dec!(0.06)).unwrap()
}

// 1 ------------------------------------------------------------------------

fn annual_series(rng: &mut ChaCha8Rng, meter: &str, total: u64) -> SlotSeries {
    let start = parse_timestamp("2021-01-01T00:00:00+01:00").unwrap();
    let n = 17_520usize;
    let raw: Vec<u64> = (0..n).map(|_| rng.random_range(1..1_000)).collect();
    let raw_total: u64 = raw.iter().sum();
    // Scale to the exact annual total, remainder on the last slot.
    let mut values: Vec<u64> = raw.iter().map(|v| v * total / raw_total).collect();
    let assigned: u64 = values.iter().sum();
    values[n - 1] += total - assigned;
    SlotSeries::new(
        MeterId::new(meter).unwrap(),
        SeriesKind::Consumption,
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (start + Duration::minutes(30 * i as i64), EnergyWh(v)))
            .collect(),
    )
    .unwrap()
}

fn criterion_constants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let year = DateWindow::new(
        NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2021, 12, 31).unwrap(),
    )
    .unwrap();
    let ids = ["ESTIA1", "ESTIA2", "ESTIA4"];
    let tables: [[Decimal; 3]; 2] = [
        [dec!(0.4245), dec!(0.5039), dec!(0.0716)],
        [dec!(0.0944), dec!(0.1120), dec!(0.7936)],
    ];
    let mut worst = Decimal::ZERO;
    for table in tables {
        // Annual totals of 10^4 kWh scaled by the published percentages.
        let history: BTreeMap<ParticipantId, SlotSeries> = ids
            .iter()
            .zip(table)
            .map(|(id, share)| {
                let total = (share * dec!(10_000_000_000)).try_into().unwrap();
                (pid(id), annual_series(&mut rng, &id.to_lowercase(), total))
            })
            .collect();
        let kors = derive_static_kors(&history, year).map_err(|e| e.to_string())?;
        if kors.sum() != Decimal::ONE {
            return Err(format!("keys sum to {}", kors.sum()));
        }
        for (id, expected) in ids.iter().zip(table) {
            let got = kors.coefficient(&pid(id)).unwrap();
            let diff = (got - expected).abs();
            worst = worst.max(diff);
            if diff > KOR_TOLERANCE {
                return Err(format!("{id}: {got} vs {expected}"));
            }
        }
    }

    // Effective values from rate, grid and tax uplift, computed as exact
    // fractions: 13/100 × 166/100, 13/100 × 138/100, 11/100.
    let oracle = [
        ("ESTIA1", Ratio::new(13i64 * 166, 10_000)),
        ("ESTIA2", Ratio::new(13i64 * 138, 10_000)),
        ("ESTIA4", Ratio::new(11i64, 100)),
    ];
    let book = estia_book();
    for (id, value) in oracle {
        let got = book.tariff(&pid(id)).unwrap().effective_value();
        let expected = Decimal::from(*value.numer()) / Decimal::from(*value.denom());
        if got != expected {
            return Err(format!("{id} value {got} vs {expected}"));
        }
    }
    let published = [dec!(0.2158), dec!(0.1794), dec!(0.11)];
    for ((id, _), v) in oracle.iter().zip(published) {
        if book.tariff(&pid(id)).unwrap().effective_value() != v {
            return Err(format!("{id} value differs from {v}"));
        }
    }
    let order = derive_priority_order(&estia_participants(), &book).map_err(|e| e.to_string())?;
    if order != PriorityOrder(ids.iter().map(|s| pid(s)).collect()) {
        return Err(format!("priority order {:?}", order.0));
    }
    Ok(format!("worst KoR deviation {worst}, values 0.2158/0.1794/0.11, order ESTIA1>ESTIA2>ESTIA4"))
}

// 2 ------------------------------------------------------------------------

fn random_ids(rng: &mut ChaCha8Rng) -> Vec<ParticipantId> {
    let n = rng.random_range(1..=6);
    (0..n).map(|i| pid(&format!("p{i}"))).collect()
}

fn random_consumption(rng: &mut ChaCha8Rng, ids: &[ParticipantId], max: u64) -> BTreeMap<ParticipantId, EnergyWh> {
    ids.iter()
        .map(|id| {
            let wh = if rng.random_bool(0.15) { 0 } else { rng.random_range(0..=max) };
            (id.clone(), EnergyWh(wh))
        })
        .collect()
}

fn random_kors(rng: &mut ChaCha8Rng, ids: &[ParticipantId]) -> KorVector {
    loop {
        let weights: Vec<(ParticipantId, u64)> =
            ids.iter().map(|id| (id.clone(), rng.random_range(0..1_000_000))).collect();
        if let Ok(k) = KorVector::from_weights(weights) {
            return k;
        }
    }
}

fn random_order(rng: &mut ChaCha8Rng, ids: &[ParticipantId]) -> PriorityOrder {
    let mut v = ids.to_vec();
    v.shuffle(rng);
    PriorityOrder(v)
}

fn conserved(a: &SlotAllocation, production: EnergyWh, consumption: &BTreeMap<ParticipantId, EnergyWh>) -> bool {
    let sc: u64 = a.self_consumed().values().map(|e| e.wh()).sum();
    sc + a.surplus_to_grid().wh() == production.wh()
        && a.self_consumed().keys().eq(consumption.keys())
        && a.self_consumed().iter().all(|(id, e)| *e <= consumption[id])
}

fn criterion_conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0usize;
    for _ in 0..CONSERVATION_SLOTS {
        let ids = random_ids(&mut rng);
        let production = EnergyWh(if rng.random_bool(0.1) { 0 } else { rng.random_range(0..=200_000) });
        let consumption = random_consumption(&mut rng, &ids, 100_000);
        let kors = random_kors(&mut rng, &ids);
        let order = random_order(&mut rng, &ids);
        let allocations = [
            allocate_static(slot0(), production, &consumption, &kors).map_err(|e| e.to_string())?,
            allocate_default_dynamic(slot0(), production, &consumption),
            allocate_custom_dynamic(slot0(), production, &consumption, &order).map_err(|e| e.to_string())?,
        ];
        violations += allocations.iter().filter(|a| !conserved(a, production, &consumption)).count();
    }
    if violations > 0 {
        return Err(format!("{violations} violations"));
    }
    Ok(format!("{CONSERVATION_SLOTS} slots x 3 policies, 0 violations"))
}

// 3 ------------------------------------------------------------------------

fn day_series(meter: &str, kind: SeriesKind, values: &[u64]) -> SlotSeries {
    SlotSeries::new(
        MeterId::new(meter).unwrap(),
        kind,
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (slot0() + Duration::minutes(30 * i as i64), EnergyWh(v)))
            .collect(),
    )
    .unwrap()
}

/// Three participants whose effective values differ pairwise by at least
/// 0.01 EUR/kWh.
fn random_tariffs(rng: &mut ChaCha8Rng) -> Vec<Participant> {
    loop {
        let ps: Vec<Participant> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, id)| Participant {
                id: pid(id),
                meter_id: MeterId::new(format!("m{id}")).unwrap(),
                tariff_eur_per_kwh: Decimal::new(rng.random_range(8..=20), 2),
                grid_uplift_pct: Decimal::from(rng.random_range(0..=40)),
                tax_uplift_pct: Decimal::from(rng.random_range(0..=40)),
                priority_rank: i as u32 + 1,
            })
            .collect();
        let values: Vec<Decimal> = ps.iter().map(|p| p.tariff().effective_value()).collect();
        let separated = (0..3).all(|i| (0..i).all(|j| (values[i] - values[j]).abs() >= dec!(0.01)));
        if separated {
            return ps;
        }
    }
}

fn criterion_dominance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let window = day_window();
    let (mut strict, mut equal) = (0usize, 0usize);
    for day in 0..DOMINANCE_DAYS {
        let participants = random_tariffs(&mut rng);
        let book = TariffBook::new(participants.iter().map(|p| (p.id.clone(), p.tariff())), dec!(0.06)).unwrap();
        let peak = rng.random_range(0..=60_000u64);
        let production: Vec<u64> = (0..48u64)
            .map(|k| {
                let shape = if (12..=40).contains(&k) { 14 * 14 - (k as i64 - 26).pow(2) } else { 0 };
                peak * shape.max(0) as u64 / 196 * rng.random_range(80..=100) / 100
            })
            .collect();
        let consumptions: BTreeMap<ParticipantId, SlotSeries> = participants
            .iter()
            .map(|p| {
                let level = rng.random_range(0..=30_000u64);
                let values: Vec<u64> = (0..48).map(|_| rng.random_range(0..=level)).collect();
                (p.id.clone(), day_series(p.meter_id.as_str(), SeriesKind::Consumption, &values))
            })
            .collect();
        let production = day_series("pv", SeriesKind::Production, &production);
        let totals: Vec<(ParticipantId, u64)> = consumptions.iter().map(|(id, s)| (id.clone(), s.total().wh())).collect();
        let kors = KorVector::from_weights(totals).unwrap_or_else(|_| KorVector::equal(consumptions.keys().cloned()).unwrap());
        let order = derive_priority_order(&participants, &book).map_err(|e| e.to_string())?;

        let run = |policy: AllocationPolicy| allocate_series(&policy, &production, &consumptions).map_err(|e| e.to_string());
        let stat = run(AllocationPolicy::Static(kors))?;
        let dflt = run(AllocationPolicy::DefaultDynamic)?;
        let cust = run(AllocationPolicy::CustomDynamic(order))?;
        let (s, d, c) = (compute_scr(&stat, window), compute_scr(&dflt, window), compute_scr(&cust, window));
        if !(s.self_consumed_total <= d.self_consumed_total && d.scr == c.scr && s.scr <= d.scr) {
            return Err(format!("day {day}: SCR static {:?} default {:?} custom {:?}", s.scr, d.scr, c.scr));
        }
        let sd = compute_savings(&dflt, &book, window).map_err(|e| e.to_string())?.total;
        let sc = compute_savings(&cust, &book, window).map_err(|e| e.to_string())?.total;
        let same = dflt == cust;
        match (same, sc.value().cmp(&sd.value())) {
            (true, std::cmp::Ordering::Equal) => equal += 1,
            (false, std::cmp::Ordering::Greater) => strict += 1,
            _ => return Err(format!("day {day}: custom {sc} vs default {sd}, identical allocations: {same}")),
        }
    }
    Ok(format!("{DOMINANCE_DAYS} days, 0 violations ({strict} with a strict savings gain, {equal} identical)"))
}

// 4 ------------------------------------------------------------------------

/// Integer allocation maximizing Σ value × x under caps and Σ x ≤ P.
fn brute_force(production: u64, caps: [u64; 3], values: [i64; 3]) -> [u64; 3] {
    let mut best = (i64::MIN, [0; 3]);
    for x0 in 0..=caps[0].min(production) {
        for x1 in 0..=caps[1].min(production - x0) {
            for x2 in 0..=caps[2].min(production - x0 - x1) {
                let v = values[0] * x0 as i64 + values[1] * x1 as i64 + values[2] * x2 as i64;
                if v > best.0 {
                    best = (v, [x0, x1, x2]);
                }
            }
        }
    }
    best.1
}

/// Consumption-proportional split in exact fractions, floors topped up by
/// largest fractional part (lower index first on ties).
fn rational_default(production: u64, caps: [u64; 3]) -> [u64; 3] {
    let total: u64 = caps.iter().sum();
    if total <= production {
        return caps;
    }
    let exact: Vec<Ratio<u64>> = caps.iter().map(|&c| Ratio::new(c * production, total)).collect();
    let mut out: Vec<u64> = exact.iter().map(|r| r.to_integer()).collect();
    let mut left = production - out.iter().sum::<u64>();
    let mut by_fraction: Vec<usize> = (0..3).collect();
    by_fraction.sort_by(|&i, &j| exact[j].fract().cmp(&exact[i].fract()).then(i.cmp(&j)));
    for i in by_fraction {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    [out[0], out[1], out[2]]
}

fn criterion_oracles() -> Check {
    // Ids whose alphabetical order differs from the value order.
    let ids = [pid("a"), pid("b"), pid("c")];
    let values = [1100i64, 2158, 1794];
    let book = TariffBook::new(
        ids.iter().zip(values).map(|(id, v)| {
            (
                id.clone(),
                Tariff {
                    rate_eur_per_kwh: Decimal::new(v, 4),
                    grid_uplift_pct: Decimal::ZERO,
                    tax_uplift_pct: Decimal::ZERO,
                },
            )
        }),
        dec!(0.06),
    )
    .unwrap();
    let participants: Vec<Participant> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| Participant {
            id: id.clone(),
            meter_id: MeterId::new(format!("m{id}")).unwrap(),
            tariff_eur_per_kwh: book.tariff(id).unwrap().rate_eur_per_kwh,
            grid_uplift_pct: Decimal::ZERO,
            tax_uplift_pct: Decimal::ZERO,
            priority_rank: i as u32 + 1,
        })
        .collect();
    let order = derive_priority_order(&participants, &book).map_err(|e| e.to_string())?;

    let mut cases = 0u64;
    for p in 0..=SWEEP_MAX_WH {
        for c0 in 0..=SWEEP_MAX_WH {
            for c1 in 0..=SWEEP_MAX_WH {
                for c2 in 0..=SWEEP_MAX_WH {
                    let caps = [c0, c1, c2];
                    let consumption: BTreeMap<ParticipantId, EnergyWh> =
                        ids.iter().cloned().zip(caps.map(EnergyWh)).collect();
                    let get = |a: &SlotAllocation| -> [u64; 3] { [0, 1, 2].map(|i| a.self_consumed()[&ids[i]].wh()) };

                    let custom = allocate_custom_dynamic(slot0(), EnergyWh(p), &consumption, &order)
                        .map_err(|e| e.to_string())?;
                    let expected = brute_force(p, caps, values);
                    if get(&custom) != expected {
                        return Err(format!("custom P={p} c={caps:?}: {:?} vs {expected:?}", get(&custom)));
                    }
                    let default = allocate_default_dynamic(slot0(), EnergyWh(p), &consumption);
                    let expected = rational_default(p, caps);
                    if get(&default) != expected {
                        return Err(format!("default P={p} c={caps:?}: {:?} vs {expected:?}", get(&default)));
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} instances, 0 mismatches"))
}

// 5 ------------------------------------------------------------------------

fn demo_config(dir: &Path, profile: RadiationProfile, seed: u64, datacentre: bool) -> Result<RunConfig, String> {
    synthesize_demo_data(profile, seed).write_to(dir).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::load(&dir.join("config.toml")).map_err(|e| e.to_string())?;
    cfg.scenario.include_datacentre = datacentre;
    Ok(cfg)
}

fn criterion_scenarios() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = 0;
    for seed in SCENARIO_SEEDS {
        for profile in [RadiationProfile::Low, RadiationProfile::High] {
            let dir = tmp.path().join(format!("{profile}-{seed}"));
            let cfg = demo_config(&dir, profile, seed, true)?;
            let prepared = prepare(&cfg).map_err(|e| e.to_string())?;
            for (i, (ts, p)) in prepared.production.slots().iter().enumerate() {
                let demand: EnergyWh = prepared.consumptions.values().map(|s| s.slots()[i].1).sum();
                if demand <= *p {
                    return Err(format!("{profile}/{seed}: demand {demand:?} <= production {p:?} at {ts}"));
                }
            }
            let settlement = settle(&prepared).map_err(|e| e.to_string())?;
            for o in &settlement.outcomes {
                if o.scr.scr != Some(Decimal::ONE) {
                    return Err(format!("{profile}/{seed} with data centre: {} SCR {:?}", o.name, o.scr.scr));
                }
            }
            runs += 1;
        }
        let dir = tmp.path().join(format!("high-plain-{seed}"));
        let cfg = demo_config(&dir, RadiationProfile::High, seed, false)?;
        let settlement = settle(&prepare(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        for o in &settlement.outcomes {
            if o.allocations.iter().all(|a| a.surplus_to_grid() == EnergyWh::ZERO) {
                return Err(format!("high/{seed} without data centre: {} has no surplus", o.name));
            }
        }
        runs += 1;
    }
    Ok(format!("{runs} scenario runs: SCR 100 % for all 4 policies with the data centre, surplus on the plain high day"))
}

// 6 ------------------------------------------------------------------------

fn single_slot(participant: Option<&str>, surplus: u64) -> SlotAllocation {
    let ids = ["ESTIA1", "ESTIA2", "ESTIA4"];
    let consumption: BTreeMap<ParticipantId, EnergyWh> = ids.iter().map(|id| (pid(id), EnergyWh(1000))).collect();
    let self_consumed: BTreeMap<ParticipantId, EnergyWh> = ids
        .iter()
        .map(|id| (pid(id), EnergyWh(if Some(*id) == participant { 1000 } else { 0 })))
        .collect();
    let production = self_consumed.values().map(|e| e.wh()).sum::<u64>() + surplus;
    SlotAllocation::new(slot0(), EnergyWh(production), consumption, self_consumed, EnergyWh(surplus)).unwrap()
}

fn criterion_billing() -> Check {
    let book = estia_book();
    let window = day_window();
    for (id, expected) in [("ESTIA1", dec!(0.2158)), ("ESTIA2", dec!(0.1794)), ("ESTIA4", dec!(0.11))] {
        let r = compute_savings(&[single_slot(Some(id), 0)], &book, window).map_err(|e| e.to_string())?;
        if r.total.value() != expected || r.per_participant[&pid(id)].value() != expected {
            return Err(format!("1 kWh at {id}: {}", r.total));
        }
    }
    let r = compute_savings(&[single_slot(None, 1000)], &book, window).map_err(|e| e.to_string())?;
    if r.feed_in.value() != dec!(0.06) || r.total.value() != dec!(0.06) {
        return Err(format!("1 kWh surplus: {}", r.total));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ids: Vec<ParticipantId> = ["ESTIA1", "ESTIA2", "ESTIA4"].iter().map(|s| pid(s)).collect();
    for case in 0..BILLING_FUZZ_CASES {
        let n = rng.random_range(1..=48);
        let mut allocations = Vec::with_capacity(n);
        for k in 0..n {
            let consumption = random_consumption(&mut rng, &ids, 60_000);
            let production = EnergyWh(rng.random_range(0..=150_000));
            allocations.push(allocate_default_dynamic(
                slot0() + Duration::minutes(30 * k as i64),
                production,
                &consumption,
            ));
        }
        let r = compute_savings(&allocations, &book, window).map_err(|e| e.to_string())?;
        let parts = r.per_participant.values().copied().sum::<Eur>() + r.feed_in;
        if parts != r.total {
            return Err(format!("case {case}: total {} vs parts {parts}", r.total));
        }
    }
    Ok(format!("unit values exact, {BILLING_FUZZ_CASES} fuzzed reports sum to their parts"))
}

// 7 ------------------------------------------------------------------------

fn criterion_ledger() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ledger = Ledger::new();
    let ids: Vec<ParticipantId> = ["ESTIA1", "ESTIA2", "ESTIA4"].iter().map(|s| pid(s)).collect();
    let kor_key = MeterId::new("KOR").unwrap();
    let mut slot = 0i64;
    while ledger.len() < LEDGER_RECORDS {
        let ts = slot0() + Duration::minutes(30 * slot);
        let production = EnergyWh(rng.random_range(0..=120_000));
        let consumption = random_consumption(&mut rng, &ids, 60_000);
        let append = |ledger: &mut Ledger, p: Payload, key: MeterId| ledger.append(p, key, ts).map(|_| ()).map_err(|e| e.to_string());
        append(&mut ledger, Payload::Energy { kind: SeriesKind::Production, energy: production }, MeterId::new("pv01").unwrap())?;
        for (id, e) in &consumption {
            if ledger.len() < LEDGER_RECORDS {
                append(&mut ledger, Payload::Energy { kind: SeriesKind::Consumption, energy: *e }, MeterId::new(id.as_str().to_lowercase()).unwrap())?;
            }
        }
        if ledger.len() < LEDGER_RECORDS {
            let a = allocate_default_dynamic(ts, production, &consumption);
            append(&mut ledger, Payload::kor_from_allocation("default-dynamic", &a).map_err(|e| e.to_string())?, kor_key.clone())?;
        }
        slot += 1;
    }
    if !matches!(ledger.verify_chain(), ChainStatus::Intact { records } if records == LEDGER_RECORDS) {
        return Err(format!("fresh ledger: {:?}", ledger.verify_chain()));
    }

    let text = ledger.to_text();
    let bytes = text.as_bytes();
    if verify_bytes(bytes) != (ChainStatus::Intact { records: LEDGER_RECORDS }) {
        return Err("file form does not verify".into());
    }
    let reparsed = Ledger::from_text(&text).map_err(|e| e.to_string())?;
    if reparsed.to_text() != text || reparsed.records() != ledger.records() {
        return Err("re-serialization differs".into());
    }

    // Every bit of every record, each checked from its predecessor's hash.
    let mut start = 0usize;
    let mut mutations = 0u64;
    for (index, record) in ledger.records().iter().enumerate() {
        let end = start + record.to_line().len() + 1;
        let mut segment = bytes[start..end].to_vec();
        for byte in 0..segment.len() {
            for bit in 0..8 {
                segment[byte] ^= 1 << bit;
                if verify_bytes_from(record.prev_hash, &segment).is_intact() {
                    return Err(format!("record {index}: flip of bit {bit} in byte {byte} undetected"));
                }
                segment[byte] ^= 1 << bit;
                mutations += 1;
            }
        }
        start = end;
    }
    // And a sample against the whole file, located at or before the record.
    let line_starts: Vec<usize> =
        std::iter::once(0).chain(bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1)).collect();
    let mut file = bytes.to_vec();
    for _ in 0..200 {
        let pos = rng.random_range(0..file.len());
        let bit = rng.random_range(0..8);
        let record = line_starts.partition_point(|&s| s <= pos) - 1;
        file[pos] ^= 1 << bit;
        match verify_bytes(&file) {
            ChainStatus::Broken { index, .. } if index <= record => {}
            other => return Err(format!("whole-file flip at byte {pos} (record {record}): {other:?}")),
        }
        file[pos] ^= 1 << bit;
    }
    Ok(format!("{LEDGER_RECORDS} records intact, {mutations} single-bit mutations detected, round trip identical"))
}

// 8 ------------------------------------------------------------------------

fn read_tree(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

fn criterion_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = demo_config(&tmp.path().join(format!("in-{run}")), RadiationProfile::High, 42, false)?;
        cfg.output_dir = tmp.path().join(format!("out-{run}"));
        let settlement = settle(&prepare(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        write_tree(&cfg.output_dir, &render_outputs(&settlement)).map_err(|e| e.to_string())?;
        trees.push(read_tree(&cfg.output_dir)?);
    }
    if trees[0] != trees[1] {
        let differing: Vec<&String> = trees[0].keys().filter(|k| trees[0].get(*k) != trees[1].get(*k)).collect();
        return Err(format!("trees differ: {differing:?}"));
    }
    let bytes: usize = trees[0].values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes, identical", trees[0].len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("constants reproduction", criterion_constants, Some(CONSTANTS_BUDGET)),
        ("conservation suite", criterion_conservation, Some(CONSERVATION_BUDGET)),
        ("dominance suite", criterion_dominance, None),
        ("oracle equivalence", criterion_oracles, None),
        ("scenario properties", criterion_scenarios, None),
        ("billing identities", criterion_billing, None),
        ("audit ledger", criterion_ledger, None),
        ("determinism", criterion_determinism, None),
    ];
    let mut failed = 0;
    for (n, (name, check, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let mut result = check();
        let elapsed = started.elapsed();
        if let (Ok(detail), Some(limit)) = (&result, budget) {
            if elapsed > *limit {
                result = Err(format!("{detail}, but took {elapsed:.2?} (limit {limit:?})"));
            }
        }
        match result {
            Ok(detail) => println!("PASS  {}. {name}: {detail} [{elapsed:.2?}]", n + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {}. {name}: {reason} [{elapsed:.2?}]", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
