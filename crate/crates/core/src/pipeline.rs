//! Config-driven runs: schedule → build → divisibility → gluing/transition →
//! twist ledger → smoothness → base locus → crosscheck, with the census as an
//! independent stage. Reports are canonical JSON; every failing unit carries a
//! witness that `replay` reproduces on its own.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::finite_geometry::{
    base_locus_scan, base_locus_scan_mcm, characterization_crosscheck, core_lemma_census, find_smooth_family, membership_agreement, BaseLocusReport, CensusMode,
};
use crate::identity_verifier::{verify_divisibility, verify_gluing, verify_transition, CheckMode, CheckRecord, Verdict, VerificationReport};
use crate::product_coup::effective_bound_nn2;
use crate::schedule::{build_schedule, effective_bound_report, subsets, twist_ledger, validate_schedule, ExponentSchedule, FormFamily, ProblemShape};
use crate::section_builder::{
    build_sections, build_selected, extract_form, CoeffSource, FamilySpec, FormalMatrixBundle, HiddenConvention, SectionFamily, SectionMode, Selection,
};

pub const CONFIG_SCHEMA: &str = "mcm-run/1";
pub const REPORT_SCHEMA: &str = "mcm-report/1";
pub const WITNESS_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Schedule,
    Build,
    Divisibility,
    Gluing,
    Transition,
    TwistLedger,
    Smoothness,
    BaseLocus,
    Crosscheck,
    Census,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Schedule,
        Stage::Build,
        Stage::Divisibility,
        Stage::Gluing,
        Stage::Transition,
        Stage::TwistLedger,
        Stage::Smoothness,
        Stage::BaseLocus,
        Stage::Crosscheck,
        Stage::Census,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Schedule => "schedule",
            Stage::Build => "build",
            Stage::Divisibility => "divisibility",
            Stage::Gluing => "gluing",
            Stage::Transition => "transition",
            Stage::TwistLedger => "twist_ledger",
            Stage::Smoothness => "smoothness",
            Stage::BaseLocus => "base_locus",
            Stage::Crosscheck => "crosscheck",
            Stage::Census => "census",
        }
    }

    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Schedule | Stage::Census => &[],
            Stage::Build | Stage::TwistLedger => &[Stage::Schedule],
            Stage::Divisibility | Stage::Gluing | Stage::Transition | Stage::Smoothness => &[Stage::Build],
            Stage::BaseLocus | Stage::Crosscheck => &[Stage::Smoothness],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FamilyKind {
    Mcm,
    GeneralFermat { lambda: Vec<u32>, degrees: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Expanded-term threshold below which identities are checked exactly.
    pub max_terms: u64,
    /// Largest |ℙ^N(𝔽_p)| the geometry stages enumerate.
    pub max_points: u64,
    /// Largest exhaustive census q^{2b(a+1)}.
    pub max_census: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { max_terms: 100_000, max_points: 10_000_000, max_census: crate::finite_geometry::CENSUS_BUDGET }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub trials: u32,
    /// Force exact checks regardless of the term budget.
    pub exact: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { trials: 20, exact: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub reseeds: u32,
    pub crosscheck_samples: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { reseeds: 8, crosscheck_samples: 10_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusShape {
    pub a: usize,
    pub b: usize,
    pub q: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusConfig {
    pub shapes: Vec<CensusShape>,
    pub agreement_samples: u64,
}

impl Default for CensusConfig {
    fn default() -> Self {
        let shapes = [(2, 2, 2), (2, 2, 3), (2, 3, 2), (3, 3, 2)].into_iter().map(|(a, b, q)| CensusShape { a, b, q }).collect();
        CensusConfig { shapes, agreement_samples: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub shape: ProblemShape,
    #[serde(default = "default_heart")]
    pub heart: u64,
    /// ε_i; all 1 when absent.
    #[serde(default)]
    pub eps: Option<Vec<u64>>,
    /// a_i; all 0 when absent.
    #[serde(default)]
    pub twists: Option<Vec<i64>>,
    #[serde(default = "default_family")]
    pub family: FamilyKind,
    /// Field of the geometry stages.
    pub field: Field,
    pub seed: u64,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub census: CensusConfig,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
}

fn default_schema() -> String {
    CONFIG_SCHEMA.into()
}
fn default_heart() -> u64 {
    2
}
fn default_family() -> FamilyKind {
    FamilyKind::Mcm
}
fn default_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: default_schema(),
            shape: ProblemShape { dim: 4, c: 3, r: 0 },
            heart: 2,
            eps: None,
            twists: None,
            family: FamilyKind::Mcm,
            field: Field::Prime(5),
            seed: 1,
            budgets: Budgets::default(),
            verify: VerifyConfig::default(),
            scan: ScanConfig::default(),
            census: CensusConfig::default(),
            stages: default_stages(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!("schema {:?}, expected {CONFIG_SCHEMA:?}", self.schema)));
        }
        self.shape.validate()?;
        let b = &self.budgets;
        if b.max_terms == 0 || b.max_points == 0 || b.max_census == 0 {
            return Err(Error::Config("budgets must be positive".into()));
        }
        if self.verify.trials == 0 {
            return Err(Error::Config("verify.trials must be positive".into()));
        }
        for w in self.stages.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(format!("stage {} listed after {}", w[1].name(), w[0].name())));
            }
        }
        for s in &self.stages {
            for dep in s.dependencies() {
                if !self.stages.contains(dep) {
                    return Err(Error::Config(format!("stage {} needs {}", s.name(), dep.name())));
                }
            }
        }
        Ok(())
    }

    fn eps(&self) -> Vec<u64> {
        self.eps.clone().unwrap_or_else(|| vec![1; self.shape.equations()])
    }

    fn twists(&self) -> Vec<i64> {
        self.twists.clone().unwrap_or_else(|| vec![0; self.shape.equations()])
    }
}

/// splitmix64 finalizer.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Seed of unit `unit` of `stage` under `master`.
pub fn derive_seed(master: u64, stage: Stage, unit: u64) -> u64 {
    mix(mix(mix(master) ^ stage as u64) ^ unit)
}

/// A single replayable unit of work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Unit {
    Schedule,
    Divisibility { family: Option<FormFamily>, vanishing: Vec<usize> },
    Gluing { family: Option<FormFamily>, vanishing: Vec<usize>, selection: Vec<usize>, j1: usize, j2: usize },
    Transition { family: Option<FormFamily>, vanishing: Vec<usize>, selection: Vec<usize>, omit: usize, l1: usize, l2: usize },
    TwistLedger,
    Smoothness { seed: u64 },
    Census { a: usize, b: usize, q: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub version: u32,
    pub config: RunConfig,
    pub stage: Stage,
    pub unit: Unit,
}

impl Witness {
    /// Parses a witness, rejecting anything without the current version first.
    pub fn parse(text: &str) -> Result<Witness> {
        let mismatch = |found: String| Error::WitnessVersion { expected: WITNESS_VERSION.to_string(), found };
        let value: Value = serde_json::from_str(text).map_err(|e| mismatch(format!("unreadable ({e})")))?;
        match value.get("version").and_then(Value::as_u64) {
            Some(v) if v == WITNESS_VERSION as u64 => {}
            Some(v) => return Err(mismatch(v.to_string())),
            None => return Err(mismatch("none".into())),
        }
        serde_json::from_value(value).map_err(|e| mismatch(format!("{WITNESS_VERSION} with a malformed body ({e})")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub verdict: Verdict,
    pub reason: Option<String>,
    pub notes: Vec<String>,
    pub summary: Value,
    pub failures: Vec<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config: RunConfig,
    pub stages: Vec<StageReport>,
    pub pass: bool,
    /// Wall-clock milliseconds per stage; excluded from the canonical form.
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    /// Sorted-key JSON without timings, the form compared across runs.
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(m) = &mut v {
            m.remove("timings_ms");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// Sorted-key JSON including timings.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::to_value(self)?)?)
    }

    pub fn stage(&self, s: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|r| r.stage == s)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// A formal matrix with the form family and vanishing set it was built for.
pub type LabeledBundle = (Option<FormFamily>, Vec<usize>, FormalMatrixBundle);

struct Context {
    cfg: RunConfig,
    schedule: Option<ExponentSchedule>,
    /// Family over ℚ used for the identity stages.
    identity: Option<SectionFamily>,
    /// Family over the configured field used for geometry.
    geometry: Option<FamilySpec>,
    smooth: Option<SectionFamily>,
}

fn stage_report(stage: Stage, verdict: Verdict, reason: Option<String>, summary: Value) -> StageReport {
    StageReport { stage, verdict, reason, notes: vec![], summary, failures: vec![] }
}

fn skip(stage: Stage, reason: impl Into<String>) -> StageReport {
    stage_report(stage, Verdict::Skip, Some(reason.into()), Value::Null)
}

fn errored(stage: Stage, e: Error) -> StageReport {
    stage_report(stage, Verdict::Fail, Some(e.to_string()), Value::Null)
}

impl Context {
    fn new(cfg: &RunConfig) -> Context {
        Context { cfg: cfg.clone(), schedule: None, identity: None, geometry: None, smooth: None }
    }

    fn mode(&self) -> Result<SectionMode> {
        Ok(match &self.cfg.family {
            FamilyKind::Mcm => SectionMode::Mcm { schedule: self.schedule()?.clone() },
            FamilyKind::GeneralFermat { lambda, degrees } => SectionMode::GeneralFermat { lambda: lambda.clone(), degrees: degrees.clone() },
        })
    }

    fn schedule(&self) -> Result<&ExponentSchedule> {
        self.schedule.as_ref().ok_or_else(|| Error::Config("schedule not built".into()))
    }

    fn ensure_schedule(&mut self) -> Result<()> {
        if self.schedule.is_none() {
            self.schedule = Some(build_schedule(self.cfg.shape, self.cfg.heart, &self.cfg.eps())?);
        }
        Ok(())
    }

    fn ensure_build(&mut self) -> Result<()> {
        self.ensure_schedule()?;
        if self.identity.is_none() {
            let mode = self.mode()?;
            let spec = |field: Field, seed| FamilySpec {
                shape: self.cfg.shape,
                mode: mode.clone(),
                field,
                twists: self.cfg.twists(),
                source: CoeffSource::Random { seed },
            };
            let id = build_sections(&spec(Field::Rational, derive_seed(self.cfg.seed, Stage::Build, 1)))?;
            self.geometry = Some(spec(self.cfg.field, derive_seed(self.cfg.seed, Stage::Build, 0)));
            self.identity = Some(id);
        }
        Ok(())
    }

    fn check_mode(&self, stage: Stage) -> CheckMode {
        let seed = derive_seed(self.cfg.seed, stage, 0);
        if self.cfg.verify.exact {
            CheckMode::Exact
        } else {
            CheckMode::Auto { threshold: self.cfg.budgets.max_terms, trials: self.cfg.verify.trials, seed }
        }
    }

    fn bundles(&self) -> Result<Vec<LabeledBundle>> {
        family_bundles(self.identity.as_ref().unwrap())
    }

    fn bundle_for(&self, family: Option<FormFamily>, vanishing: &[usize]) -> Result<FormalMatrixBundle> {
        self.bundles()?
            .into_iter()
            .find(|(f, v, _)| *f == family && v == vanishing)
            .map(|(_, _, b)| b)
            .ok_or_else(|| Error::InvalidSelection(format!("no bundle for {family:?} on {vanishing:?}")))
    }

    fn witness(&self, stage: Stage, unit: Unit) -> Witness {
        Witness { version: WITNESS_VERSION, config: self.cfg.clone(), stage, unit }
    }

    fn geometry_blocker(&self) -> Option<String> {
        let Field::Prime(p) = self.cfg.field else {
            return Some("geometry stages need a prime field".into());
        };
        let p = p as u128;
        let points = (p.pow(self.cfg.shape.dim as u32 + 1) - 1) / (p - 1);
        (points > self.cfg.budgets.max_points as u128).then(|| format!("budget exceeded: {points} points > max_points"))
    }

    /// Characteristic guard: Some(note) when p divides an exponent that multiplies dz terms.
    fn characteristic_note(&self) -> Option<(bool, String)> {
        let p = self.cfg.field.characteristic() as u64;
        if p == 0 {
            return None;
        }
        match &self.cfg.family {
            FamilyKind::GeneralFermat { lambda, .. } => {
                lambda.iter().find(|&&l| l as u64 % p == 0).map(|l| (true, format!("p = {p} divides lambda = {l}: differential stages skipped")))
            }
            FamilyKind::Mcm => {
                let d = self.schedule.as_ref()?.d.clone();
                (&d % p == num_bigint::BigUint::from(0u32)).then(|| (false, format!("p = {p} divides d: the z^d terms carry no dz part in characteristic p")))
            }
        }
    }

    fn run_stage(&mut self, stage: Stage) -> StageReport {
        match self.stage_inner(stage) {
            Ok(r) => r,
            Err(e) => errored(stage, e),
        }
    }

    fn stage_inner(&mut self, stage: Stage) -> Result<StageReport> {
        match stage {
            Stage::Schedule => self.stage_schedule(),
            Stage::Build => self.stage_build(),
            Stage::Divisibility => self.stage_divisibility(None),
            Stage::Gluing => self.stage_gluing(None),
            Stage::Transition => self.stage_transition(None),
            Stage::TwistLedger => self.stage_twist(),
            Stage::Smoothness => self.stage_smoothness(None),
            Stage::BaseLocus => self.stage_base_locus(),
            Stage::Crosscheck => self.stage_crosscheck(),
            Stage::Census => self.stage_census(None),
        }
    }

    fn stage_schedule(&mut self) -> Result<StageReport> {
        self.ensure_schedule()?;
        let s = self.schedule()?;
        let v = validate_schedule(s)?;
        let eb = effective_bound_report(s);
        let nn2 = effective_bound_nn2(s.shape.dim)?;
        let summary = json!({
            "schedule": s,
            "checks": v.checks.len(),
            "failing": v.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect::<Vec<_>>(),
            "effective_bound": eb,
            "nn2": nn2,
        });
        let mut r = stage_report(Stage::Schedule, if v.all_pass { Verdict::Pass } else { Verdict::Fail }, None, summary);
        if !eb.pass {
            r.notes.push("(N+1) mu_{N,N} does not stay below N^{N^2/2} - 1 for this shape".into());
        }
        if !v.all_pass {
            r.failures.push(self.witness(Stage::Schedule, Unit::Schedule));
        }
        Ok(r)
    }

    fn stage_build(&mut self) -> Result<StageReport> {
        self.ensure_build()?;
        let id = self.identity.as_ref().unwrap();
        let geo = build_sections(self.geometry.as_ref().unwrap())?;
        let terms = |f: &SectionFamily| f.sections().iter().map(|s| s.len()).collect::<Vec<_>>();
        let summary = json!({
            "identity_family": { "field": id.field, "seed": id.seed, "terms": terms(id), "z_degrees": (0..id.shape.equations()).map(|i| id.z_degree(i)).collect::<Vec<_>>() },
            "geometry_family": { "field": geo.field, "seed": geo.seed, "terms": terms(&geo) },
        });
        Ok(stage_report(Stage::Build, Verdict::Pass, None, summary))
    }

    fn collect(&self, stage: Stage, report: VerificationReport, units: Vec<Unit>) -> StageReport {
        let mut failures: Vec<Witness> =
            report.checks.iter().zip(&units).filter(|(c, _)| c.verdict == Verdict::Fail).map(|(_, u)| self.witness(stage, u.clone())).collect();
        failures.sort_by_key(|w| serde_json::to_string(&w.unit).unwrap_or_default());
        let verdict = if !failures.is_empty() || report.checks.iter().any(|c| c.verdict == Verdict::Fail) { Verdict::Fail } else { Verdict::Pass };
        let summary = summarize(&report.checks);
        StageReport { stage, verdict, reason: None, notes: report.notes, summary, failures }
    }

    fn stage_divisibility(&mut self, only: Option<&Unit>) -> Result<StageReport> {
        self.ensure_build()?;
        let mut rep = VerificationReport::default();
        let mut units = Vec::new();
        for (f, v, b) in self.bundles()? {
            let unit = Unit::Divisibility { family: f, vanishing: v };
            if only.is_some_and(|u| *u != unit) {
                continue;
            }
            rep.extend(verify_divisibility(&b)?);
            units.push(unit);
        }
        Ok(self.collect(Stage::Divisibility, rep, units))
    }

    fn stage_gluing(&mut self, only: Option<&Unit>) -> Result<StageReport> {
        self.ensure_build()?;
        let mode = self.check_mode(Stage::Gluing);
        let fam = self.identity.clone().unwrap();
        let mut rep = VerificationReport::default();
        let mut units = Vec::new();
        for (f, v, b) in self.bundles()? {
            for sel in subsets(fam.shape.c, fam.shape.n() - v.len()) {
                for j1 in 0..b.ncols() {
                    for j2 in j1 + 1..b.ncols() {
                        let unit = Unit::Gluing { family: f, vanishing: v.clone(), selection: sel.clone(), j1, j2 };
                        if only.is_some_and(|u| *u != unit) {
                            continue;
                        }
                        rep.extend(verify_gluing(&fam, &b, &sel, j1, j2, mode)?);
                        units.push(unit);
                    }
                }
            }
        }
        Ok(self.collect(Stage::Gluing, rep, units))
    }

    fn stage_transition(&mut self, only: Option<&Unit>) -> Result<StageReport> {
        self.ensure_build()?;
        let mode = self.check_mode(Stage::Transition);
        let fam = self.identity.clone().unwrap();
        let mut rep = VerificationReport::default();
        let mut units = Vec::new();
        for (f, v, b) in self.bundles()? {
            let charts = b.retained.clone();
            for sel in subsets(fam.shape.c, fam.shape.n() - v.len()) {
                for omit in 0..b.ncols() {
                    for (x, &l1) in charts.iter().enumerate() {
                        for &l2 in &charts[x + 1..] {
                            let unit = Unit::Transition { family: f, vanishing: v.clone(), selection: sel.clone(), omit, l1, l2 };
                            if only.is_some_and(|u| *u != unit) {
                                continue;
                            }
                            rep.extend(verify_transition(&fam, &b, &sel, omit, l1, l2, mode)?);
                            units.push(unit);
                        }
                    }
                }
            }
        }
        Ok(self.collect(Stage::Transition, rep, units))
    }

    fn stage_twist(&mut self) -> Result<StageReport> {
        self.ensure_build()?;
        let fam = self.identity.clone().unwrap();
        let mut r = stage_report(Stage::TwistLedger, Verdict::Pass, None, Value::Null);
        let mut ledger_json = Value::Null;
        let mut all_negative = true;
        if let FamilyKind::Mcm = self.cfg.family {
            let ledger = twist_ledger(self.schedule()?)?;
            all_negative = ledger.all_negative;
            ledger_json = json!({
                "entries": ledger.entries.len(),
                "all_negative": ledger.all_negative,
                "max_value": ledger.entries.iter().map(|e| e.value.clone()).max().map(|v| v.to_string()),
            });
        }
        let a_sum = |sel: &[usize]| fam.twists.iter().sum::<i64>() + sel.iter().map(|&j| fam.twists[j]).sum::<i64>();
        let mut mismatches = Vec::new();
        let mut compared = 0;
        for (f, v, b) in self.bundles()? {
            for sel in subsets(fam.shape.c, fam.shape.n() - v.len()) {
                compared += 1;
                let formula = b.formula_twist(&sel)?;
                let ambient = b.ambient_twist(&sel)?;
                if ambient != formula + a_sum(&sel) {
                    mismatches.push(json!({ "family": f, "vanishing": v, "selection": sel, "formula": formula, "ambient": ambient }));
                }
            }
        }
        if !all_negative || !mismatches.is_empty() {
            r.verdict = Verdict::Fail;
            r.failures.push(self.witness(Stage::TwistLedger, Unit::TwistLedger));
        }
        r.summary = json!({ "ledger": ledger_json, "compared": compared, "mismatches": mismatches });
        Ok(r)
    }

    fn stage_smoothness(&mut self, seed: Option<u64>) -> Result<StageReport> {
        if let Some(reason) = self.geometry_blocker() {
            return Ok(skip(Stage::Smoothness, reason));
        }
        self.ensure_build()?;
        let spec = self.geometry.clone().unwrap();
        let p = self.cfg.field.characteristic() as u64;
        let start = seed.unwrap_or_else(|| derive_seed(self.cfg.seed, Stage::Build, 0));
        let attempts = if seed.is_some() { 1 } else { self.cfg.scan.reseeds };
        let (fam, log) = find_smooth_family(&spec, start, p, attempts)?;
        let mut r = stage_report(Stage::Smoothness, if fam.is_some() { Verdict::Pass } else { Verdict::Fail }, None, json!({ "attempts": log }));
        if let Some((_, note)) = self.characteristic_note() {
            r.notes.push(note);
        }
        if fam.is_none() {
            r.failures = log.iter().map(|a| self.witness(Stage::Smoothness, Unit::Smoothness { seed: a.seed })).collect();
        }
        self.smooth = fam;
        Ok(r)
    }

    fn stage_base_locus(&mut self) -> Result<StageReport> {
        if let Some((true, note)) = self.characteristic_note() {
            let mut r = skip(Stage::BaseLocus, "characteristic guard");
            r.notes.push(note);
            return Ok(r);
        }
        let fam = self.smooth.clone().ok_or_else(|| Error::Config("no smooth family".into()))?;
        let p = self.cfg.field.characteristic() as u64;
        let scans = base_locus_all(&fam, p)?;
        let ok = scans.iter().all(|s| s.tangent_dim_ok);
        let summary: Vec<Value> = scans
            .iter()
            .map(|s| {
                json!({
                    "vanishing_set": s.vanishing_set,
                    "forms": s.forms,
                    "points": s.points,
                    "pairs": s.pairs,
                    "base_pairs": s.base_pairs,
                    "singular_points": s.singular_points,
                    "vanishing_histogram": s.vanishing_histogram.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
                    "fibers": s.fibers,
                    "tangent_dim_ok": s.tangent_dim_ok,
                })
            })
            .collect();
        let mut r = stage_report(Stage::BaseLocus, if ok { Verdict::Pass } else { Verdict::Fail }, None, json!({ "seed": fam.seed, "scans": summary }));
        if let Some((_, note)) = self.characteristic_note() {
            r.notes.push(note);
        }
        Ok(r)
    }

    fn stage_crosscheck(&mut self) -> Result<StageReport> {
        let fam = self.smooth.clone().ok_or_else(|| Error::Config("no smooth family".into()))?;
        if !matches!(fam.mode, SectionMode::Mcm { .. }) {
            return Ok(skip(Stage::Crosscheck, "the rank characterization applies to MCM families"));
        }
        let p = self.cfg.field.characteristic() as u64;
        let cc = characterization_crosscheck(&fam, p, self.cfg.scan.crosscheck_samples, derive_seed(self.cfg.seed, Stage::Crosscheck, 0))?;
        let verdict = if cc.forward_exceptions == 0 { Verdict::Pass } else { Verdict::Fail };
        Ok(stage_report(Stage::Crosscheck, verdict, None, serde_json::to_value(&cc)?))
    }

    fn stage_census(&mut self, only: Option<&Unit>) -> Result<StageReport> {
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (k, sh) in self.cfg.census.shapes.iter().enumerate() {
            let unit = Unit::Census { a: sh.a, b: sh.b, q: sh.q };
            if only.is_some_and(|u| *u != unit) {
                continue;
            }
            let census = core_lemma_census(sh.a, sh.b, sh.q, CensusMode::Exhaustive, self.cfg.budgets.max_census)?;
            let agree = membership_agreement(sh.a, sh.b, sh.q, self.cfg.census.agreement_samples, derive_seed(self.cfg.seed, Stage::Census, k as u64))?;
            if !census.verdict || census.alt_disagreements > 0 || agree.disagreements > 0 {
                failures.push(self.witness(Stage::Census, unit));
            }
            rows.push(json!({ "census": census, "agreement": agree }));
        }
        let verdict = if failures.is_empty() { Verdict::Pass } else { Verdict::Fail };
        let mut r = stage_report(Stage::Census, verdict, None, Value::Array(rows));
        r.failures = failures;
        Ok(r)
    }
}

/// Every (family, vanishing set) bundle of a family with its combined matrix:
/// each η < n and, for MCM, each ν / (τ, ρ) at level N − η.
pub fn family_bundles(fam: &SectionFamily) -> Result<Vec<LabeledBundle>> {
    let shape = fam.shape;
    let n = shape.dim;
    let mut out = Vec::new();
    for eta in 0..shape.n() {
        for v in subsets(n + 1, eta) {
            match fam.mode {
                SectionMode::Mcm { .. } => {
                    let grouped = fam.hidden_matrix(&v, HiddenConvention::ZeroDz)?;
                    for f in FormFamily::all(n - eta) {
                        out.push((Some(f), v.clone(), grouped.combine(f)?));
                    }
                }
                SectionMode::GeneralFermat { ref lambda, .. } => {
                    if eta > 0 && lambda.iter().any(|&l| l < 2) {
                        continue;
                    }
                    let full = fam.formal_matrix(HiddenConvention::ZeroDz)?;
                    let b = if eta == 0 { full } else { build_selected(&full, &Selection::Hidden { vanishing: v.clone() })? };
                    out.push((None, v.clone(), b));
                }
            }
        }
    }
    Ok(out)
}

/// Base-locus scans of every form of a family over 𝔽_p: the numeric MCM scan on the
/// all-nonzero stratum, or each coordinate stratum of a Fermat-type family.
pub fn base_locus_all(fam: &SectionFamily, p: u64) -> Result<Vec<BaseLocusReport>> {
    let mut scans = Vec::new();
    match fam.mode {
        SectionMode::Mcm { .. } => scans.push(base_locus_scan_mcm(fam, p)?),
        SectionMode::GeneralFermat { .. } => {
            let full = fam.formal_matrix(HiddenConvention::ZeroDz)?;
            let n = fam.shape.dim;
            for eta in 0..fam.shape.n() {
                for v in subsets(n + 1, eta) {
                    let b = if eta == 0 { full.clone() } else { build_selected(&full, &Selection::Hidden { vanishing: v.clone() })? };
                    let mut forms = Vec::new();
                    for sel in subsets(fam.shape.c, fam.shape.n() - eta) {
                        for omit in 0..b.ncols() {
                            forms.push(extract_form(&b, &sel, omit, None)?);
                        }
                    }
                    scans.push(base_locus_scan(fam, &forms, p, &v)?);
                }
            }
        }
    }
    Ok(scans)
}

fn summarize(checks: &[CheckRecord]) -> Value {
    let mut by_mode: BTreeMap<String, usize> = BTreeMap::new();
    for c in checks {
        *by_mode.entry(c.mode.clone()).or_insert(0) += 1;
    }
    let worst = checks.iter().filter_map(|c| c.error_log2).fold(f64::NEG_INFINITY, f64::max);
    let failed: Vec<&CheckRecord> = checks.iter().filter(|c| c.verdict == Verdict::Fail).collect();
    json!({
        "checks": checks.len(),
        "pass": checks.iter().filter(|c| c.verdict == Verdict::Pass).count(),
        "fail": failed.len(),
        "by_mode": by_mode,
        "worst_error_log2": worst.is_finite().then_some(worst),
        "failed": failed,
    })
}

/// Runs the configured stages in order; a stage whose dependency did not pass is skipped.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let main_stages: Vec<Stage> = cfg.stages.iter().copied().filter(|&s| s != Stage::Census).collect();
    let run_main = || {
        let mut ctx = Context::new(cfg);
        let mut out: Vec<(StageReport, f64)> = Vec::new();
        for &stage in &main_stages {
            let blocked = stage.dependencies().iter().find(|d| out.iter().any(|(r, _)| r.stage == **d && r.verdict != Verdict::Pass));
            let t = Instant::now();
            let rep = match blocked {
                Some(d) => skip(stage, format!("dependency {} did not pass", d.name())),
                None => ctx.run_stage(stage),
            };
            out.push((rep, t.elapsed().as_secs_f64() * 1e3));
        }
        out
    };
    let run_census = || {
        cfg.stages.contains(&Stage::Census).then(|| {
            let t = Instant::now();
            let rep = Context::new(cfg).run_stage(Stage::Census);
            (rep, t.elapsed().as_secs_f64() * 1e3)
        })
    };
    #[cfg(feature = "parallel")]
    let (mut done, census) = rayon::join(run_main, run_census);
    #[cfg(not(feature = "parallel"))]
    let (mut done, census) = (run_main(), run_census());
    done.extend(census);
    let timings_ms = done.iter().map(|(r, t)| (r.stage.name().to_string(), *t)).collect();
    let stages: Vec<StageReport> = done.into_iter().map(|(r, _)| r).collect();
    let pass = stages.iter().all(|s| s.verdict != Verdict::Fail);
    Ok(RunReport { schema: REPORT_SCHEMA.into(), config: cfg.clone(), stages, pass, timings_ms })
}

/// Re-executes the unit named by a witness, and nothing else.
pub fn replay(w: &Witness) -> Result<RunReport> {
    if w.version != WITNESS_VERSION {
        return Err(Error::WitnessVersion { expected: WITNESS_VERSION.to_string(), found: w.version.to_string() });
    }
    w.config.validate()?;
    let mut ctx = Context::new(&w.config);
    let t = Instant::now();
    let rep = match &w.unit {
        Unit::Schedule => ctx.stage_schedule(),
        Unit::Divisibility { .. } => ctx.stage_divisibility(Some(&w.unit)),
        Unit::Gluing { .. } => ctx.stage_gluing(Some(&w.unit)),
        Unit::Transition { .. } => ctx.stage_transition(Some(&w.unit)),
        Unit::TwistLedger => ctx.stage_twist(),
        Unit::Smoothness { seed } => ctx.stage_smoothness(Some(*seed)),
        Unit::Census { .. } => ctx.stage_census(Some(&w.unit)),
    };
    let rep = rep.unwrap_or_else(|e| errored(w.stage, e));
    let timings_ms = BTreeMap::from([(w.stage.name().to_string(), t.elapsed().as_secs_f64() * 1e3)]);
    let pass = rep.verdict != Verdict::Fail;
    Ok(RunReport { schema: REPORT_SCHEMA.into(), config: w.config.clone(), stages: vec![rep], pass, timings_ms })
}

/// Witness for a unit under a config, for tools that build their own.
pub fn make_witness(cfg: &RunConfig, stage: Stage, unit: Unit) -> Witness {
    Witness { version: WITNESS_VERSION, config: cfg.clone(), stage, unit }
}

/// Re-derives the unit-level bundle of a gluing/transition witness.
pub fn witness_bundle(w: &Witness) -> Result<(SectionFamily, FormalMatrixBundle)> {
    let mut ctx = Context::new(&w.config);
    ctx.ensure_build()?;
    let (family, vanishing) = match &w.unit {
        Unit::Gluing { family, vanishing, .. } | Unit::Transition { family, vanishing, .. } | Unit::Divisibility { family, vanishing } => {
            (*family, vanishing.clone())
        }
        _ => return Err(Error::InvalidSelection("unit has no bundle".into())),
    };
    let b = ctx.bundle_for(family, &vanishing)?;
    Ok((ctx.identity.unwrap(), b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        let minimal = "seed = 3\nfield = { kind = \"prime\", p = 7 }\n[shape]\nN = 2\nc = 1\nr = 0\n";
        let c = RunConfig::from_toml(minimal).unwrap();
        assert_eq!(c.stages.len(), 10);
        let bad = format!("stages = [\"gluing\"]\n{minimal}");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let unordered = format!("stages = [\"build\", \"schedule\"]\n{minimal}");
        assert!(RunConfig::from_toml(&format!("{minimal}stray = 1\n")).is_err());
        assert!(RunConfig::from_toml(&unordered).is_err());
    }

    #[test]
    fn seeds_are_isolated() {
        assert_ne!(derive_seed(1, Stage::Build, 0), derive_seed(1, Stage::Build, 1));
        assert_ne!(derive_seed(1, Stage::Build, 0), derive_seed(1, Stage::Gluing, 0));
        assert_eq!(derive_seed(9, Stage::Census, 2), derive_seed(9, Stage::Census, 2));
    }

    #[test]
    fn schedule_only() {
        let cfg = RunConfig { stages: vec![Stage::Schedule], ..RunConfig::default() };
        let r = run_pipeline(&cfg).unwrap();
        assert_eq!(r.stages.len(), 1);
        assert!(r.pass);
    }

    #[test]
    fn stale_witness() {
        let w = make_witness(&RunConfig::default(), Stage::Census, Unit::Census { a: 2, b: 2, q: 2 });
        let mut v = serde_json::to_value(&w).unwrap();
        v["version"] = json!(0);
        assert!(matches!(Witness::parse(&v.to_string()), Err(Error::WitnessVersion { .. })));
        assert!(matches!(Witness::parse("{not json"), Err(Error::WitnessVersion { .. })));
        assert_eq!(Witness::parse(&serde_json::to_string(&w).unwrap()).unwrap(), w);
    }
}
