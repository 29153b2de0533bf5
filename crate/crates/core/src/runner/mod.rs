//! Batch runs: load meter data and a community, apply the scenario, settle
//! every selected policy, and write reports, per-slot allocations, a
//! comparison table and the audit ledger.
//!
//! Output tree of a run:
//!
//! ```text
//! <out>/run.json
//! <out>/comparison.json
//! <out>/comparison.csv
//! <out>/ledger.txt
//! <out>/<policy>/allocations.csv
//! <out>/<policy>/scr.json
//! <out>/<policy>/savings.json
//! ```
//!
//! Outputs are staged in a sibling directory and moved into place only when
//! everything has been written.

mod config;
mod synth;

use rust_decimal::Decimal;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::allocation::{allocate_series, derive_priority_order};
use crate::audit::{Ledger, Payload, KOR_COUNTING_POINT};
use crate::billing::{compare_policies, compute_savings, compute_scr, ComparisonTable, SavingsReport, ScrReport};
use crate::ingestion::{
    add_constant_load, apply_pv_gain, derive_static_kors, group_by_meter, ingest_path, normalize_to_slots,
    IngestError, MeterClass, RawMeterRecord,
};
use crate::model::time::format_slot;
use crate::model::{
    validate_community, AllocationPolicy, Community, DateWindow, KorVector, MeterId, ParticipantId,
    PriorityOrder, SeriesKind, SlotAllocation, SlotSeries, TariffBook,
};

pub use config::{CustomOrder, KorHistory, PolicyName, RunConfig};
pub use synth::{synthesize_demo_data, DemoData, RadiationProfile};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("validation failed:\n{}", .0.iter().map(|f| format!("  - {f}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("output directory {0} exists and is not empty")]
    OutputExists(PathBuf),
}

impl RunError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// 1 for bad configuration or data, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Validation(_) => 1,
            RunError::Io { .. } | RunError::OutputExists(_) => 2,
        }
    }
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Validation(vec![msg.into()])
}

/// Inputs ready for settlement: scenario applied, series trimmed to the
/// window, and one allocation policy per selected name.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub community: Community,
    pub book: TariffBook,
    pub window: DateWindow,
    pub production: SlotSeries,
    pub consumptions: BTreeMap<ParticipantId, SlotSeries>,
    /// In policy-name order.
    pub policies: Vec<(PolicyName, AllocationPolicy)>,
}

#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub name: PolicyName,
    pub policy: AllocationPolicy,
    pub allocations: Vec<SlotAllocation>,
    pub scr: ScrReport,
    pub savings: SavingsReport,
}

#[derive(Debug, Clone)]
pub struct Settlement {
    pub window: DateWindow,
    pub outcomes: Vec<PolicyOutcome>,
    pub comparison: ComparisonTable,
    pub ledger: Ledger,
}

impl Settlement {
    pub fn outcome(&self, name: PolicyName) -> Option<&PolicyOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

fn load_records(path: &Path) -> Result<Vec<RawMeterRecord>, RunError> {
    let outcome = ingest_path(path).map_err(|e| match e {
        IngestError::Io { message, .. } => RunError::io(path, message),
        other => invalid(format!("{}: {other}", path.display())),
    })?;
    if !outcome.row_errors.is_empty() {
        return Err(RunError::Validation(
            outcome
                .row_errors
                .iter()
                .map(|e| format!("{}: {e}", path.display()))
                .collect(),
        ));
    }
    Ok(outcome.records)
}

/// Normalizes the series of the given meters. Meters without records are
/// skipped; validation reports them.
fn normalize_meters(
    records: &[RawMeterRecord],
    wanted: &[(MeterId, SeriesKind)],
    findings: &mut Vec<String>,
) -> BTreeMap<MeterId, SlotSeries> {
    let grouped: BTreeMap<MeterId, (MeterClass, Vec<RawMeterRecord>)> = group_by_meter(records);
    let mut out = BTreeMap::new();
    for (meter, kind) in wanted {
        if let Some((_, recs)) = grouped.get(meter) {
            match normalize_to_slots(recs, *kind) {
                Ok(s) => {
                    out.insert(meter.clone(), s);
                }
                Err(e) => findings.push(e.to_string()),
            }
        }
    }
    out
}

fn restrict(series: &SlotSeries, window: DateWindow) -> SlotSeries {
    let slots = series.slots().iter().filter(|(ts, _)| window.contains(ts)).copied().collect();
    SlotSeries::new(series.meter_id().clone(), series.kind(), slots).expect("a subsequence stays ordered")
}

fn datacentre_target(cfg: &RunConfig) -> Option<&ParticipantId> {
    cfg.scenario
        .include_datacentre
        .then_some(cfg.scenario.datacentre_participant.as_ref())
        .flatten()
}

/// Static keys from the configured consumption history. The data-centre
/// load, when the scenario includes it, is part of that history.
pub fn history_kors(cfg: &RunConfig) -> Result<KorVector, RunError> {
    let history = cfg
        .kor_history
        .as_ref()
        .ok_or_else(|| RunError::Config("no [kor_history] section".into()))?;
    let records = load_records(&history.path)?;
    let wanted: Vec<(MeterId, SeriesKind)> = cfg
        .community
        .participants
        .iter()
        .map(|p| (p.meter_id.clone(), SeriesKind::Consumption))
        .collect();
    let mut findings = Vec::new();
    let series = normalize_meters(&records, &wanted, &mut findings);
    let mut per_participant = BTreeMap::new();
    for p in &cfg.community.participants {
        match series.get(&p.meter_id) {
            Some(s) => {
                let s = match datacentre_target(cfg) {
                    Some(id) if id == &p.id => add_constant_load(s, cfg.scenario.datacentre_load_kw)
                        .map_err(|e| invalid(e.to_string()))?,
                    _ => s.clone(),
                };
                per_participant.insert(p.id.clone(), s);
            }
            None if findings.is_empty() => {
                findings.push(format!("{}: no history for meter {}", history.path.display(), p.meter_id))
            }
            None => {}
        }
    }
    if !findings.is_empty() {
        return Err(RunError::Validation(findings));
    }
    derive_static_kors(&per_participant, history.window()?).map_err(|e| invalid(e.to_string()))
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, RunError> {
    cfg.check()?;
    let community = &cfg.community;
    let records = load_records(&cfg.meter_data)?;

    let mut wanted = vec![(community.production_meter.clone(), SeriesKind::Production)];
    wanted.extend(
        community
            .participants
            .iter()
            .map(|p| (p.meter_id.clone(), SeriesKind::Consumption)),
    );
    let mut findings = Vec::new();
    let series = normalize_meters(&records, &wanted, &mut findings);
    let list: Vec<SlotSeries> = series.values().cloned().collect();
    let report = validate_community(community, &list, cfg.static_kors.as_ref());
    findings.extend(report.findings.iter().map(|f| f.to_string()));
    if !findings.is_empty() {
        return Err(RunError::Validation(findings));
    }

    let production = apply_pv_gain(&series[&community.production_meter], cfg.scenario.pv_gain)
        .map_err(|e| invalid(e.to_string()))?;
    let window = match cfg.window {
        Some(w) => w,
        None => DateWindow::covering(production.slot_starts()).ok_or_else(|| invalid("no production data"))?,
    };
    let production = restrict(&production, window);
    if production.is_empty() {
        return Err(invalid(format!("no production data in window {window}")));
    }

    let mut consumptions = BTreeMap::new();
    for p in &community.participants {
        let mut s = restrict(&series[&p.meter_id], window);
        if datacentre_target(cfg) == Some(&p.id) {
            s = add_constant_load(&s, cfg.scenario.datacentre_load_kw).map_err(|e| invalid(e.to_string()))?;
        }
        consumptions.insert(p.id.clone(), s);
    }

    let book = community.tariff_book().map_err(|e| invalid(e.to_string()))?;
    let mut policies = Vec::new();
    for name in cfg.sorted_policies() {
        let policy = match name {
            PolicyName::Static => match &cfg.static_kors {
                Some(map) => AllocationPolicy::Static(
                    KorVector::new(map.iter().map(|(k, v)| (k.clone(), *v))).map_err(|e| invalid(e.to_string()))?,
                ),
                None => AllocationPolicy::Static(history_kors(cfg)?),
            },
            PolicyName::Static33 => AllocationPolicy::Static(
                KorVector::equal(community.participant_ids()).map_err(|e| invalid(e.to_string()))?,
            ),
            PolicyName::DefaultDynamic => AllocationPolicy::DefaultDynamic,
            PolicyName::CustomDynamic => AllocationPolicy::CustomDynamic(match cfg.custom_order {
                CustomOrder::Economic => {
                    derive_priority_order(&community.participants, &book).map_err(|e| invalid(e.to_string()))?
                }
                CustomOrder::Rank => community.order_by_rank(),
            }),
        };
        policies.push((name, policy));
    }

    Ok(Prepared {
        community: community.clone(),
        book,
        window,
        production,
        consumptions,
        policies,
    })
}

/// Allocates every policy, computes the reports and builds the ledger.
///
/// Ledger order, per slot: the production meter, each participant meter
/// in participant-id order, then one KoR record per policy in name order.
pub fn settle(prepared: &Prepared) -> Result<Settlement, RunError> {
    let mut outcomes = Vec::with_capacity(prepared.policies.len());
    for (name, policy) in &prepared.policies {
        let allocations = allocate_series(policy, &prepared.production, &prepared.consumptions)
            .map_err(|e| invalid(format!("{name}: {e}")))?;
        let scr = compute_scr(&allocations, prepared.window);
        let savings = compute_savings(&allocations, &prepared.book, prepared.window)
            .map_err(|e| invalid(format!("{name}: {e}")))?;
        outcomes.push(PolicyOutcome {
            name: *name,
            policy: policy.clone(),
            allocations,
            scr,
            savings,
        });
    }

    let reports: BTreeMap<String, (ScrReport, SavingsReport)> = outcomes
        .iter()
        .map(|o| (o.name.as_str().to_string(), (o.scr.clone(), o.savings.clone())))
        .collect();
    let comparison = compare_policies(&reports).map_err(|e| invalid(e.to_string()))?;

    let kor_key = MeterId::new(KOR_COUNTING_POINT).expect("reserved key is a valid identifier");
    let meters: Vec<(&ParticipantId, &SlotSeries)> = prepared.consumptions.iter().collect();
    let mut ledger = Ledger::new();
    let audit_err = |e: crate::audit::AuditError| invalid(format!("audit ledger: {e}"));
    for (i, (slot, produced)) in prepared.production.slots().iter().enumerate() {
        ledger
            .append(
                Payload::Energy {
                    kind: SeriesKind::Production,
                    energy: *produced,
                },
                prepared.production.meter_id().clone(),
                *slot,
            )
            .map_err(audit_err)?;
        for (_, s) in &meters {
            ledger
                .append(
                    Payload::Energy {
                        kind: SeriesKind::Consumption,
                        energy: s.slots()[i].1,
                    },
                    s.meter_id().clone(),
                    *slot,
                )
                .map_err(audit_err)?;
        }
        for o in &outcomes {
            let payload = Payload::kor_from_allocation(o.name.as_str(), &o.allocations[i]).map_err(audit_err)?;
            ledger.append(payload, kor_key.clone(), *slot).map_err(audit_err)?;
        }
    }

    Ok(Settlement {
        window: prepared.window,
        outcomes,
        comparison,
        ledger,
    })
}

/// Per-slot series for one policy: production, each participant's
/// consumption and self-consumption, and surplus, all in Wh.
pub fn allocations_csv(allocations: &[SlotAllocation]) -> String {
    let ids: Vec<&ParticipantId> = allocations
        .first()
        .map(|a| a.consumption().keys().collect())
        .unwrap_or_default();
    let mut out = String::from("slot,production_wh");
    for id in &ids {
        let _ = write!(out, ",consumption_{id}_wh");
    }
    for id in &ids {
        let _ = write!(out, ",self_consumed_{id}_wh");
    }
    out.push_str(",surplus_wh\n");
    for a in allocations {
        let _ = write!(out, "{},{}", format_slot(a.slot_start()), a.production().wh());
        for e in a.consumption().values() {
            let _ = write!(out, ",{}", e.wh());
        }
        for e in a.self_consumed().values() {
            let _ = write!(out, ",{}", e.wh());
        }
        let _ = writeln!(out, ",{}", a.surplus_to_grid().wh());
    }
    out
}

#[derive(Serialize)]
struct RunManifest<'a> {
    window: DateWindow,
    slots: usize,
    policies: Vec<PolicySummary<'a>>,
    ledger_records: usize,
    ledger_head: String,
}

#[derive(Serialize)]
struct PolicySummary<'a> {
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    kors: Option<BTreeMap<&'a ParticipantId, Decimal>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    priority_order: Option<&'a [ParticipantId]>,
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Every output file as (relative path, contents), in a fixed order.
pub fn render_outputs(settlement: &Settlement) -> Vec<(PathBuf, String)> {
    let mut files = Vec::new();
    for o in &settlement.outcomes {
        let dir = PathBuf::from(o.name.as_str());
        files.push((dir.join("allocations.csv"), allocations_csv(&o.allocations)));
        files.push((dir.join("scr.json"), json(&o.scr)));
        files.push((dir.join("savings.json"), json(&o.savings)));
    }
    files.push(("comparison.json".into(), json(&settlement.comparison)));
    files.push(("comparison.csv".into(), settlement.comparison.to_csv()));
    files.push(("ledger.txt".into(), settlement.ledger.to_text()));
    let manifest = RunManifest {
        window: settlement.window,
        slots: settlement.outcomes.first().map_or(0, |o| o.allocations.len()),
        policies: settlement
            .outcomes
            .iter()
            .map(|o| PolicySummary {
                name: o.name.as_str(),
                kors: match &o.policy {
                    AllocationPolicy::Static(k) => Some(k.iter().map(|(id, c)| (id, *c)).collect()),
                    _ => None,
                },
                priority_order: match &o.policy {
                    AllocationPolicy::CustomDynamic(PriorityOrder(order)) => Some(order.as_slice()),
                    _ => None,
                },
            })
            .collect(),
        ledger_records: settlement.ledger.len(),
        ledger_head: settlement.ledger.head().to_string(),
    };
    files.push(("run.json".into(), json(&manifest)));
    files
}

/// Writes `files` under `out` atomically: either the whole tree appears or
/// nothing does. `out` must not exist or be an empty directory.
pub fn write_tree(out: &Path, files: &[(PathBuf, String)]) -> Result<(), RunError> {
    if out.exists() {
        let mut entries = std::fs::read_dir(out).map_err(|e| RunError::io(out, e))?;
        if entries.next().is_some() {
            return Err(RunError::OutputExists(out.to_path_buf()));
        }
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| RunError::io(&parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".pvshare-staging-")
        .tempdir_in(&parent)
        .map_err(|e| RunError::io(&parent, e))?;
    for (rel, contents) in files {
        let path = staging.path().join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| RunError::io(&out.join(rel), e))?;
    }
    let perms = std::fs::metadata(&parent).map_err(|e| RunError::io(&parent, e))?.permissions();
    std::fs::set_permissions(staging.path(), perms).map_err(|e| RunError::io(staging.path(), e))?;
    if out.exists() {
        std::fs::remove_dir(out).map_err(|e| RunError::io(out, e))?;
    }
    std::fs::rename(staging.path(), out).map_err(|e| RunError::io(out, e))?;
    let _ = staging.keep();
    Ok(())
}

/// Full run: prepare, settle, and write the output tree to `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<Settlement, RunError> {
    let prepared = prepare(cfg)?;
    let settlement = settle(&prepared)?;
    write_tree(&cfg.output_dir, &render_outputs(&settlement))?;
    Ok(settlement)
}
