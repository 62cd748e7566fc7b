//! Scenario files: workcell setup plus a timed list of operator and planner
//! events.
//!
//! Validation never stops at the first problem; every issue carries a JSON
//! pointer into the document.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::admittance::{AdmittanceParams, Integrator, ParamBounds};
use crate::arbitration::{AuthoritySource, AutoTunePolicy, ModeThresholds};
use crate::knowledge::{CompletionRule, KnowledgeTriple, RuleSet};
use crate::language::VocabularyBank;
use crate::robot::{RobotConfig, Vec2, WorldObject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Free-form remark, e.g. that timings are illustrative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// s
    pub duration: f64,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub robot: RobotConfig,
    #[serde(default = "default_initial_q")]
    pub initial_q: Vec2,
    #[serde(default)]
    pub objects: Vec<WorldObject>,
    #[serde(default)]
    pub admittance: AdmittanceConfig,
    #[serde(default)]
    pub vocabulary: VocabularyBank,
    #[serde(default)]
    pub knowledge: KnowledgeConfig,
    #[serde(default)]
    pub arbitration: ArbitrationConfig,
    #[serde(default)]
    pub timeline: Vec<TimelineEvent>,
}

fn default_initial_q() -> Vec2 {
    [0.0, std::f64::consts::FRAC_PI_2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub sim_hz: u32,
    pub broadcast_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            sim_hz: 100,
            broadcast_hz: 20,
        }
    }
}

impl Rates {
    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.sim_hz)
    }

    /// Ticks between telemetry broadcasts.
    pub fn broadcast_every(&self) -> u64 {
        (f64::from(self.sim_hz) / f64::from(self.broadcast_hz.max(1)))
            .round()
            .max(1.0) as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmittanceConfig {
    pub params: AdmittanceParams,
    pub bounds: ParamBounds,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    /// Entity whose intent feeds shared autonomy.
    pub worker: String,
    pub triples: Vec<KnowledgeTriple>,
    pub rules: Vec<CompletionRule>,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        Self {
            worker: "operator".to_owned(),
            triples: vec![],
            rules: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArbitrationConfig {
    pub source: AuthoritySource,
    pub initial_lambda: f64,
    pub thresholds: ModeThresholds,
    pub policy: AutoTunePolicy,
}

impl Default for ArbitrationConfig {
    fn default() -> Self {
        Self {
            source: AuthoritySource::SharedControl,
            initial_lambda: 0.0,
            thresholds: ModeThresholds::default(),
            policy: AutoTunePolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimelineEvent {
    SetLambda { at: f64, lambda: f64 },
    SetMode { at: f64, source: AuthoritySource },
    NlCommand { at: f64, text: String },
    /// Operator guidance force; a zero vector stops guiding.
    Wrench { at: f64, force: Vec<f64> },
    Grasp {
        at: f64,
        #[serde(default)]
        object: Option<String>,
    },
    Release { at: f64 },
    /// New planner waypoint reached over `duration` seconds.
    Goal { at: f64, waypoint: Vec2, duration: f64 },
    AssertTriple {
        at: f64,
        head: String,
        relation: String,
        tail: String,
        confidence: f64,
    },
}

impl TimelineEvent {
    pub fn at(&self) -> f64 {
        match self {
            TimelineEvent::SetLambda { at, .. }
            | TimelineEvent::SetMode { at, .. }
            | TimelineEvent::NlCommand { at, .. }
            | TimelineEvent::Wrench { at, .. }
            | TimelineEvent::Grasp { at, .. }
            | TimelineEvent::Release { at }
            | TimelineEvent::Goal { at, .. }
            | TimelineEvent::AssertTriple { at, .. } => *at,
        }
    }

    /// Wire message type and payload carrying this event.
    pub fn to_message(&self) -> (&'static str, Value) {
        match self {
            TimelineEvent::SetLambda { lambda, .. } => ("set_lambda", json!({ "lambda": lambda })),
            TimelineEvent::SetMode { source, .. } => ("set_mode", json!({ "source": source })),
            TimelineEvent::NlCommand { text, .. } => ("nl_command", json!({ "text": text })),
            TimelineEvent::Wrench { force, .. } => ("wrench", json!({ "force": force })),
            TimelineEvent::Grasp { object, .. } => ("grasp", json!({ "object": object })),
            TimelineEvent::Release { .. } => ("release", json!({})),
            TimelineEvent::Goal {
                waypoint, duration, ..
            } => ("goal", json!({ "waypoint": waypoint, "duration": duration })),
            TimelineEvent::AssertTriple {
                head,
                relation,
                tail,
                confidence,
                ..
            } => (
                "assert_triple",
                json!({ "head": head, "relation": relation, "tail": tail, "confidence": confidence }),
            ),
        }
    }

    /// Tick at which a scenario driver submits the event.
    pub fn tick(&self, rates: &Rates) -> u64 {
        (self.at() * f64::from(rates.sim_hz)).round().max(0.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    /// JSON pointer into the scenario document.
    pub path: String,
    pub message: String,
}

impl ValidationIssue {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "/" } else { &self.path };
        write!(f, "{path}: {}", self.message)
    }
}

/// Parses and checks a scenario document.
pub fn validate(text: &str) -> Result<Scenario, Vec<ValidationIssue>> {
    let scenario = parse(text).map_err(|issue| vec![issue])?;
    let issues = scenario.check();
    if issues.is_empty() {
        Ok(scenario)
    } else {
        Err(issues)
    }
}

/// Structural parse; the error names the offending path.
pub fn parse(text: &str) -> Result<Scenario, ValidationIssue> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        use serde_path_to_error::Segment;
        let pointer: String = err
            .path()
            .iter()
            .filter_map(|seg| match seg {
                Segment::Seq { index } => Some(format!("/{index}")),
                Segment::Map { key } => Some(format!("/{key}")),
                Segment::Enum { .. } | Segment::Unknown => None,
            })
            .collect();
        ValidationIssue::new(pointer, err.into_inner().to_string())
    })
}

fn finite_vec(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl Scenario {
    /// Every semantic problem in the scenario.
    pub fn check(&self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        let mut push = |path: String, msg: String| issues.push(ValidationIssue::new(path, msg));

        if !(self.duration > 0.0 && self.duration.is_finite()) {
            push("/duration".into(), "must be positive".into());
        }
        if self.rates.sim_hz == 0 {
            push("/rates/sim_hz".into(), "must be positive".into());
        }
        if self.rates.broadcast_hz == 0 || self.rates.broadcast_hz > self.rates.sim_hz {
            push(
                "/rates/broadcast_hz".into(),
                "must be positive and not exceed sim_hz".into(),
            );
        }
        let dt = if self.rates.sim_hz > 0 { self.rates.dt() } else { 0.01 };

        if let Err(e) = self.robot.validate() {
            push("/robot".into(), e.to_string());
        }
        if !finite_vec(&self.initial_q) {
            push("/initial_q".into(), "joint angles must be finite".into());
        }

        let mut ids = BTreeSet::new();
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.id.is_empty() || !ids.insert(obj.id.as_str()) {
                push(format!("/objects/{i}/id"), "object ids must be unique and non-empty".into());
            }
            if !finite_vec(&obj.position) {
                push(format!("/objects/{i}/position"), "must be finite".into());
            }
            if !(obj.radius > 0.0 && obj.radius.is_finite()) {
                push(format!("/objects/{i}/radius"), "must be positive".into());
            }
            if !(obj.mass >= 0.0 && obj.mass.is_finite()) {
                push(format!("/objects/{i}/mass"), "must be non-negative".into());
            }
        }
        if self.objects.iter().filter(|o| o.grasped).count() > 0 {
            push("/objects".into(), "objects cannot start grasped".into());
        }

        let adm = &self.admittance;
        let bounds_ok = match adm.bounds.validate(dt, adm.integrator) {
            Ok(()) => true,
            Err(e) => {
                push("/admittance/bounds".into(), e.to_string());
                false
            }
        };
        if adm.params.dim() != 2 || !adm.params.is_positive() {
            push(
                "/admittance/params".into(),
                "need two strictly positive entries per parameter".into(),
            );
        } else if bounds_ok && adm.bounds.min.dim() == 2 {
            let inside = |v: &[f64], lo: &[f64], hi: &[f64]| {
                v.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| x >= l && x <= h)
            };
            let (lo, hi, p) = (&adm.bounds.min, &adm.bounds.max, &adm.params);
            if !(inside(&p.mass, &lo.mass, &hi.mass)
                && inside(&p.damping, &lo.damping, &hi.damping)
                && inside(&p.stiffness, &lo.stiffness, &hi.stiffness))
            {
                push("/admittance/params".into(), "initial parameters lie outside the bounds".into());
            }
        } else if adm.bounds.min.dim() != 2 {
            push("/admittance/bounds".into(), "bounds must have two axes".into());
        }

        if let Err(e) = self.vocabulary.validate() {
            push("/vocabulary".into(), e.to_string());
        }

        if self.knowledge.worker.is_empty() {
            push("/knowledge/worker".into(), "must not be empty".into());
        }
        for (i, t) in self.knowledge.triples.iter().enumerate() {
            if !(t.confidence > 0.0 && t.confidence <= 1.0) {
                push(format!("/knowledge/triples/{i}/confidence"), "must lie in (0, 1]".into());
            }
            if t.head.is_empty() || t.relation.is_empty() || t.tail.is_empty() {
                push(format!("/knowledge/triples/{i}"), "identifiers must not be empty".into());
            }
        }
        if let Err(e) = RuleSet::new(self.knowledge.rules.clone()) {
            push("/knowledge/rules".into(), e.to_string());
        }

        let arb = &self.arbitration;
        if !(0.0..=1.0).contains(&arb.initial_lambda) {
            push("/arbitration/initial_lambda".into(), "must lie in [0, 1]".into());
        }
        let th = arb.thresholds;
        if !(0.0 <= th.autonomy_below && th.autonomy_below <= th.manual_above && th.manual_above <= 1.0) {
            push(
                "/arbitration/thresholds".into(),
                "need 0 <= autonomy_below <= manual_above <= 1".into(),
            );
        }
        if let Err(e) = arb.policy.validate() {
            push("/arbitration/policy".into(), e.to_string());
        }

        let mut previous = 0.0f64;
        let mut source = arb.source;
        for (i, event) in self.timeline.iter().enumerate() {
            let base = format!("/timeline/{i}");
            let at = event.at();
            if !(at >= 0.0 && at.is_finite()) {
                push(format!("{base}/at"), "must be a non-negative time".into());
            } else {
                if at < previous {
                    push(format!("{base}/at"), format!("timeline is not sorted ({at} after {previous})"));
                }
                if self.rates.sim_hz > 0 && event.tick(&self.rates) >= self.total_ticks() {
                    push(format!("{base}/at"), "event lies beyond the last tick of the scenario".into());
                }
                previous = previous.max(at);
            }
            match event {
                TimelineEvent::SetLambda { lambda, .. } => {
                    if !lambda.is_finite() {
                        push(format!("{base}/lambda"), "must be finite".into());
                    }
                    if source != AuthoritySource::SharedControl {
                        push(base.clone(), "set_lambda requires shared control".into());
                    }
                }
                TimelineEvent::SetMode { source: s, .. } => source = *s,
                TimelineEvent::NlCommand { text, .. } => {
                    if text.trim().is_empty() {
                        push(format!("{base}/text"), "must not be empty".into());
                    }
                }
                TimelineEvent::Wrench { force, .. } => {
                    if force.len() != 2 || !finite_vec(force) {
                        push(format!("{base}/force"), "need two finite components".into());
                    }
                }
                TimelineEvent::Grasp {
                    object: Some(id), ..
                } => {
                    if !self.objects.iter().any(|o| &o.id == id) {
                        push(format!("{base}/object"), format!("unknown object `{id}`"));
                    }
                }
                TimelineEvent::Grasp { object: None, .. } | TimelineEvent::Release { .. } => {}
                TimelineEvent::Goal {
                    waypoint, duration, ..
                } => {
                    if !self.robot.is_reachable(*waypoint) {
                        push(
                            format!("{base}/waypoint"),
                            format!("event {i}: waypoint ({}, {}) is unreachable", waypoint[0], waypoint[1]),
                        );
                    }
                    if !(*duration > 0.0 && duration.is_finite()) {
                        push(format!("{base}/duration"), "must be positive".into());
                    }
                }
                TimelineEvent::AssertTriple {
                    head,
                    relation,
                    tail,
                    confidence,
                    ..
                } => {
                    if !(*confidence > 0.0 && *confidence <= 1.0) {
                        push(format!("{base}/confidence"), "must lie in (0, 1]".into());
                    }
                    if head.is_empty() || relation.is_empty() || tail.is_empty() {
                        push(base.clone(), "identifiers must not be empty".into());
                    }
                }
            }
        }
        issues
    }

    /// Ticks executed for the full duration.
    pub fn total_ticks(&self) -> u64 {
        (self.duration * f64::from(self.rates.sim_hz)).round().max(0.0) as u64
    }

    /// Smallest valid scenario: default workcell, nothing scheduled.
    pub fn minimal(duration: f64) -> Self {
        Self {
            name: "minimal".to_owned(),
            note: None,
            seed: 0,
            duration,
            rates: Rates::default(),
            robot: RobotConfig::default(),
            initial_q: default_initial_q(),
            objects: vec![],
            admittance: AdmittanceConfig::default(),
            vocabulary: VocabularyBank::default(),
            knowledge: KnowledgeConfig::default(),
            arbitration: ArbitrationConfig::default(),
            timeline: vec![],
        }
    }
}
