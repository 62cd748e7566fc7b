//! One authoritative collaboration space: world, controllers, inbound queue
//! and log. A session is a pure function of its scenario and the ordered
//! messages it applies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::warn;

use crate::admittance::{AdmittanceParams, ComplianceState, Integrator, ParamBounds};
use crate::arbitration::{
    auto_tune_lambda, blend, set_lambda, ArbitrationState, AuthoritySource, AutoTunePolicy,
    ControlInput, Mode,
};
use crate::knowledge::{infer_intent, IntentEstimate, KnowledgeGraph, RuleSet};
use crate::language::{apply_command, interpret, Effect, Interpretation, VocabularyBank};
use crate::report::{CommandEntry, CommandStatus, MetricsRecorder, MetricsReport, TickSample};
use crate::robot::{
    end_effector_force_for_torque, forward_kinematics, gravity_compensation, plan_min_jerk,
    simulate_tick, DesiredTrajectory, GripAction, RobotConfig, TickInputs, Vec2, WorldEvent,
    WorldObject, WorldState,
};
use crate::scenario::{Scenario, ValidationIssue};

use super::latency::{delay_ticks, LatencySampler};
use super::log::{fnv1a, hash_hex, AppliedMessage, LogRecord, SessionLog};
use super::protocol::{
    Command, Envelope, ErrorCode, Outbound, ProtocolError, Recipient, Request, Role,
};

/// Bounds on the `ScaleSpeed` multiplier of the joint velocity limit.
pub const SPEED_SCALE_RANGE: (f64, f64) = (0.05, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<ValidationIssue>),
    #[error("session frozen: {0}")]
    Frozen(String),
    #[error("log record {index} is for tick {found}, expected {expected}")]
    LogOrder { index: usize, expected: u64, found: u64 },
    #[error("log record for tick {tick} holds an unusable message: {reason}")]
    LogMessage { tick: u64, reason: String },
}

/// Part of the state covered by the snapshot hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotState {
    pub q: Vec2,
    pub q_dot: Vec2,
    pub end_effector: Vec2,
    pub objects: Vec<WorldObject>,
    pub compliance: ComplianceState,
    pub params: AdmittanceParams,
    pub arbitration: ArbitrationState,
    pub intent: IntentEstimate,
    pub trajectory: DesiredTrajectory,
    pub speed_scale: f64,
    pub human_wrench: Vec2,
    /// Force the operator actually exerts, including any unsupported load.
    pub operator_force: Vec2,
    /// Motor torque spent on gravity compensation.
    pub gravity_torque: Vec2,
    pub contact_force: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub time: f64,
    pub hash: String,
    pub frozen: bool,
    #[serde(flatten)]
    pub state: SnapshotState,
}

impl SnapshotState {
    /// FNV-1a over the canonical JSON form (field order is fixed by the
    /// struct definitions).
    pub fn hash(&self) -> u64 {
        fnv1a(&serde_json::to_vec(self).expect("snapshot serializes"))
    }
}

#[derive(Debug, Default)]
struct ClientState {
    last_seq: Option<u64>,
    role: Option<Role>,
    latency: Option<LatencySampler>,
    last_due: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Telemetry {
    operator_force: Vec2,
    gravity_torque: Vec2,
    contact_force: Vec2,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    scenario: Scenario,
    config: RobotConfig,
    dt: f64,
    broadcast_every: u64,
    tick: u64,

    world: WorldState,
    compliance: ComplianceState,
    params: AdmittanceParams,
    bounds: ParamBounds,
    integrator: Integrator,
    trajectory: DesiredTrajectory,
    speed_scale: f64,
    arbitration: ArbitrationState,
    policy: AutoTunePolicy,
    graph: KnowledgeGraph,
    rules: RuleSet,
    worker: String,
    intent: IntentEstimate,
    intent_stale: bool,
    bank: VocabularyBank,
    human_wrench: Vec2,
    grip: Option<GripAction>,
    telemetry: Telemetry,

    queue: BTreeMap<(u64, String, u64), Envelope>,
    clients: BTreeMap<String, ClientState>,
    operator: Option<String>,
    log: SessionLog,
    dropped: Vec<AppliedMessage>,
    frozen: Option<String>,
    metrics: MetricsRecorder,
    recent_events: Vec<WorldEvent>,
}

impl Session {
    pub fn new(id: &str, scenario: &Scenario) -> Result<Self, SessionError> {
        let issues = scenario.check();
        if !issues.is_empty() {
            return Err(SessionError::InvalidScenario(issues));
        }
        let config = scenario.robot.clone();
        let world = WorldState::new(&config, scenario.initial_q, scenario.objects.clone());
        let ee = world.end_effector;
        let mut graph = KnowledgeGraph::new();
        for t in &scenario.knowledge.triples {
            graph
                .assert_triple(t.clone())
                .map_err(|e| SessionError::InvalidScenario(vec![issue("/knowledge/triples", e)]))?;
        }
        let rules = RuleSet::new(scenario.knowledge.rules.clone())
            .map_err(|e| SessionError::InvalidScenario(vec![issue("/knowledge/rules", e)]))?;
        let arb = &scenario.arbitration;
        let mut session = Self {
            id: id.to_owned(),
            config,
            dt: scenario.rates.dt(),
            broadcast_every: scenario.rates.broadcast_every(),
            tick: 0,
            compliance: ComplianceState::at_rest(ee.to_vec()),
            world,
            params: scenario.admittance.params.clone(),
            bounds: scenario.admittance.bounds.clone(),
            integrator: scenario.admittance.integrator,
            trajectory: DesiredTrajectory::hold(ee, 0.0),
            speed_scale: 1.0,
            arbitration: ArbitrationState::new(arb.source, arb.initial_lambda, arb.thresholds),
            policy: arb.policy.clone(),
            graph,
            rules,
            worker: scenario.knowledge.worker.clone(),
            intent: IntentEstimate::unknown(),
            intent_stale: true,
            bank: scenario.vocabulary.clone(),
            human_wrench: [0.0; 2],
            grip: None,
            telemetry: Telemetry::default(),
            queue: BTreeMap::new(),
            clients: BTreeMap::new(),
            operator: None,
            log: SessionLog::new(),
            dropped: Vec::new(),
            frozen: None,
            metrics: MetricsRecorder::default(),
            recent_events: Vec::new(),
            scenario: scenario.clone(),
        };
        session.refresh_intent();
        session.refresh_telemetry();
        session
            .metrics
            .record_mode(0, 0.0, session.arbitration.mode, session.arbitration.lambda);
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Ticks executed so far.
    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.world.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn frozen(&self) -> Option<&str> {
        self.frozen.as_deref()
    }

    pub fn arbitration(&self) -> &ArbitrationState {
        &self.arbitration
    }

    pub fn params(&self) -> &AdmittanceParams {
        &self.params
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn operator(&self) -> Option<&str> {
        self.operator.as_deref()
    }

    pub fn members(&self) -> impl Iterator<Item = &str> {
        self.clients
            .iter()
            .filter(|(_, c)| c.role.is_some())
            .map(|(id, _)| id.as_str())
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn time_ms(&self) -> i64 {
        (self.world.time * 1000.0).round() as i64
    }

    pub fn snapshot_state(&self) -> SnapshotState {
        SnapshotState {
            q: self.world.q,
            q_dot: self.world.q_dot,
            end_effector: self.world.end_effector,
            objects: self.world.objects.clone(),
            compliance: self.compliance.clone(),
            params: self.params.clone(),
            arbitration: self.arbitration,
            intent: self.intent.clone(),
            trajectory: self.trajectory.clone(),
            speed_scale: self.speed_scale,
            human_wrench: self.human_wrench,
            operator_force: self.telemetry.operator_force,
            gravity_torque: self.telemetry.gravity_torque,
            contact_force: self.telemetry.contact_force,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let state = self.snapshot_state();
        Snapshot {
            tick: self.tick,
            time: self.world.time,
            hash: hash_hex(state.hash()),
            frozen: self.frozen.is_some(),
            state,
        }
    }

    pub fn report(&self) -> MetricsReport {
        let hash = hash_hex(self.snapshot_state().hash());
        self.metrics
            .report(&self.scenario, self.tick, self.world.time, hash)
    }

    /// Drops a client's membership; an operator leaving frees the role and
    /// stops its guidance force at the next tick boundary.
    pub fn disconnect(&mut self, client: &str) {
        self.clients.remove(client);
        if self.operator.as_deref() == Some(client) {
            self.operator = None;
        }
    }

    /// Handles one decoded envelope from `client`.
    pub fn handle(&mut self, client: &str, env: Envelope) -> Vec<Outbound> {
        let t = self.time_ms();
        let sid = self.id.clone();
        let fail = |err: ProtocolError| vec![Outbound::error(client, &sid, t, err)];

        let state = self.clients.entry(client.to_owned()).or_default();
        if env.kind == "hello" {
            // a new hello restarts the client's sequence numbering
            if let Err(e) = Request::parse(&env) {
                return fail(e);
            }
            state.last_seq = Some(env.seq);
            let role = state.role;
            return vec![Outbound::ack(
                client,
                &sid,
                t,
                &env,
                "ok",
                json!({ "session": sid, "tick": self.tick, "role": role }),
            )];
        }
        if let Some(last) = state.last_seq {
            if env.seq <= last {
                return fail(
                    ProtocolError::new(
                        ErrorCode::StaleSeq,
                        format!("seq {} not above last seen {last}", env.seq),
                    )
                    .referring(&env),
                );
            }
        }
        state.last_seq = Some(env.seq);

        let request = match Request::parse(&env) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        match request {
            Request::Hello(_) => unreachable!("handled above"),
            Request::Join(join) => self.join(client, &env, join.role),
            Request::State(req) => {
                if self.role(client).is_none() {
                    return fail(not_joined(&env));
                }
                let mut payload = json!({ "snapshot": self.snapshot() });
                if req.log {
                    payload["log"] = serde_json::to_value(self.log.records()).expect("log serializes");
                }
                if req.report {
                    payload["report"] = serde_json::to_value(self.report()).expect("report serializes");
                }
                vec![Outbound {
                    to: Recipient::Client(client.to_owned()),
                    sid,
                    kind: "state",
                    t,
                    payload,
                }]
            }
            Request::InjectLatency(req) => {
                if let Err(e) = self.require_operator(client, &env) {
                    return fail(e);
                }
                let target = req.client.clone().unwrap_or_else(|| client.to_owned());
                let model = req.model();
                let sampler = match model.sampler() {
                    Ok(s) => s,
                    Err(e) => return fail(ProtocolError::new(ErrorCode::InvalidPayload, e.to_string()).referring(&env)),
                };
                match self.clients.get_mut(&target) {
                    Some(c) if c.role.is_some() => c.latency = Some(sampler),
                    _ => {
                        return fail(
                            ProtocolError::new(ErrorCode::Rejected, format!("`{target}` is not a member"))
                                .referring(&env),
                        )
                    }
                }
                let detail = json!({ "client": target, "model": model });
                self.record_command(client, &env, CommandStatus::Applied, detail.clone());
                vec![Outbound::ack(client, &sid, t, &env, "ok", detail)]
            }
            Request::Command(cmd) => {
                if let Err(e) = self.require_operator(client, &env) {
                    return fail(e);
                }
                if let Some(reason) = &self.frozen {
                    return fail(ProtocolError::new(ErrorCode::Frozen, reason.clone()).referring(&env));
                }
                if let Command::Goal { waypoint, .. } = cmd {
                    if !self.config.is_reachable(waypoint) {
                        return fail(
                            ProtocolError::new(
                                ErrorCode::InvalidPayload,
                                format!("waypoint ({}, {}) is unreachable", waypoint[0], waypoint[1]),
                            )
                            .referring(&env),
                        );
                    }
                }
                self.enqueue(client, env)
            }
        }
    }

    fn role(&self, client: &str) -> Option<Role> {
        self.clients.get(client).and_then(|c| c.role)
    }

    fn require_operator(&self, client: &str, env: &Envelope) -> Result<(), ProtocolError> {
        match self.role(client) {
            None => Err(not_joined(env)),
            Some(Role::Observer) => Err(ProtocolError::new(
                ErrorCode::NotOperator,
                "only the operator may actuate the session",
            )
            .referring(env)),
            Some(Role::Operator) => Ok(()),
        }
    }

    fn join(&mut self, client: &str, env: &Envelope, role: Role) -> Vec<Outbound> {
        let t = self.time_ms();
        if role == Role::Operator {
            if let Some(current) = self.operator.as_deref().filter(|op| *op != client) {
                let err = ProtocolError::new(
                    ErrorCode::OperatorTaken,
                    format!("`{current}` already operates this session"),
                )
                .referring(env);
                return vec![Outbound::error(client, &self.id, t, err)];
            }
            self.operator = Some(client.to_owned());
        } else if self.operator.as_deref() == Some(client) {
            self.operator = None;
        }
        self.clients.entry(client.to_owned()).or_default().role = Some(role);
        vec![Outbound::ack(
            client,
            &self.id,
            t,
            env,
            "ok",
            json!({ "session": self.id, "role": role, "snapshot": self.snapshot() }),
        )]
    }

    fn enqueue(&mut self, client: &str, env: Envelope) -> Vec<Outbound> {
        let t = self.time_ms();
        let hz = self.scenario.rates.sim_hz;
        let tick = self.tick;
        let state = self.clients.get_mut(client).expect("member checked");
        let delay = match state.latency.as_mut() {
            None => Some(0.0),
            Some(sampler) => sampler.sample(),
        };
        let Some(delay_ms) = delay else {
            self.record_command(client, &env, CommandStatus::Dropped, Value::Null);
            self.dropped.push(AppliedMessage {
                client: client.to_owned(),
                msg: env,
            });
            return vec![];
        };
        // never let a later message overtake an earlier one from the same client
        let due = (tick + delay_ticks(delay_ms, hz)).max(state.last_due);
        state.last_due = due;
        let ack = Outbound::ack(
            client,
            &self.id,
            t,
            &env,
            "queued",
            json!({ "due_tick": due, "delay_ms": delay_ms }),
        );
        self.queue.insert((due, client.to_owned(), env.seq), env);
        vec![ack]
    }

    /// Runs one tick with every queued message that is due.
    pub fn tick(&mut self) -> Vec<Outbound> {
        if self.frozen.is_some() {
            return vec![];
        }
        let mut due = Vec::new();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > self.tick {
                break;
            }
            let ((_, client, _), msg) = entry.remove_entry();
            due.push(AppliedMessage { client, msg });
        }
        match self.advance(due) {
            Ok(out) => out,
            Err(e) => {
                warn!(session = %self.id, error = %e, "session frozen");
                vec![Outbound {
                    to: Recipient::Session,
                    sid: self.id.clone(),
                    kind: "error",
                    t: self.time_ms(),
                    payload: serde_json::to_value(ProtocolError::new(ErrorCode::Frozen, e.to_string()))
                        .expect("error serializes"),
                }]
            }
        }
    }

    /// Applies `applied` in order, then steps the world. This is the only
    /// path that changes simulation state, live or in replay.
    pub fn advance(&mut self, applied: Vec<AppliedMessage>) -> Result<Vec<Outbound>, SessionError> {
        if let Some(reason) = &self.frozen {
            return Err(SessionError::Frozen(reason.clone()));
        }
        let mut out = Vec::new();
        for m in &applied {
            let t = self.time_ms();
            match self.apply(&m.msg) {
                Ok(detail) => {
                    self.record_command(&m.client, &m.msg, CommandStatus::Applied, detail.clone());
                    out.push(Outbound::ack(&m.client, &self.id, t, &m.msg, "applied", detail));
                }
                Err(err) => {
                    let detail = json!({ "reason": err.reason });
                    self.record_command(&m.client, &m.msg, CommandStatus::Rejected, detail);
                    out.push(Outbound::error(&m.client, &self.id, t, err));
                }
            }
        }
        if let Err(reason) = self.step() {
            self.frozen = Some(reason.clone());
            return Err(SessionError::Frozen(reason));
        }
        let state = self.snapshot_state();
        let hash = hash_hex(state.hash());
        self.log.append(LogRecord {
            tick: self.tick - 1,
            applied,
            dropped: std::mem::take(&mut self.dropped),
            hash: hash.clone(),
        });
        if self.tick % self.broadcast_every == 0 {
            let events = std::mem::take(&mut self.recent_events);
            let snapshot = Snapshot {
                tick: self.tick,
                time: self.world.time,
                hash,
                frozen: false,
                state,
            };
            out.push(Outbound {
                to: Recipient::Session,
                sid: self.id.clone(),
                kind: "snapshot",
                t: self.time_ms(),
                payload: json!({ "snapshot": snapshot, "events": events }),
            });
        }
        Ok(out)
    }

    fn apply(&mut self, env: &Envelope) -> Result<Value, ProtocolError> {
        let reject = |reason: String| ProtocolError::new(ErrorCode::Rejected, reason).referring(env);
        let cmd = match Request::parse(env)? {
            Request::Command(cmd) => cmd,
            _ => return Err(reject(format!("`{}` is not a queued command", env.kind))),
        };
        match cmd {
            Command::SetLambda { lambda } => {
                self.arbitration = set_lambda(self.arbitration, lambda).map_err(|e| reject(e.to_string()))?;
                Ok(json!({ "arbitration": self.arbitration }))
            }
            Command::SetMode { source } => {
                self.arbitration = self.arbitration.with_source(source);
                Ok(json!({ "arbitration": self.arbitration }))
            }
            Command::NlCommand { text } => {
                let ids: Vec<&str> = self.world.objects.iter().map(|o| o.id.as_str()).collect();
                let interpretation = interpret(&text, ids, &self.bank);
                if let Interpretation::Command(c) = &interpretation {
                    if c.effect == Effect::ScaleSpeed {
                        let (lo, hi) = SPEED_SCALE_RANGE;
                        self.speed_scale = (self.speed_scale * c.factor).clamp(lo, hi);
                    } else {
                        self.params = apply_command(c, &self.params, &self.bounds, self.integrator, self.dt)
                            .map_err(|e| reject(e.to_string()))?;
                    }
                }
                Ok(json!({
                    "interpretation": interpretation,
                    "params": self.params,
                    "speed_scale": self.speed_scale,
                }))
            }
            Command::Wrench { force } => {
                self.human_wrench = force;
                Ok(json!({ "force": force }))
            }
            Command::Grasp { object } => self.set_grip(GripAction::Grasp { object }, env),
            Command::Release => self.set_grip(GripAction::Release, env),
            Command::AssertTriple(triple) => {
                self.graph
                    .assert_triple(triple.clone())
                    .map_err(|e| reject(e.to_string()))?;
                self.intent_stale = true;
                Ok(json!({ "triple": triple }))
            }
            Command::Goal { waypoint, duration } => {
                if !self.config.is_reachable(waypoint) {
                    return Err(reject("waypoint is unreachable".into()));
                }
                let start = [self.compliance.x_d[0], self.compliance.x_d[1]];
                self.trajectory = plan_min_jerk(start, waypoint, duration)
                    .map_err(|e| reject(e.to_string()))?
                    .starting_at(self.world.time);
                Ok(json!({ "trajectory": self.trajectory }))
            }
        }
    }

    fn set_grip(&mut self, action: GripAction, env: &Envelope) -> Result<Value, ProtocolError> {
        if self.grip.is_some() {
            return Err(ProtocolError::new(ErrorCode::Rejected, "one grip action per tick").referring(env));
        }
        self.grip = Some(action.clone());
        Ok(json!({ "grip": action }))
    }

    fn refresh_intent(&mut self) {
        if self.intent_stale {
            self.intent = infer_intent(&self.graph, &self.rules, &self.worker);
            self.intent_stale = false;
        }
    }

    /// Gravity torque and the force the operator exerts for the current pose.
    fn refresh_telemetry(&mut self) {
        let payload = self.world.payload_mass(&self.config);
        let tau = gravity_compensation(&self.config, self.world.q, payload);
        let guiding = self.human_wrench != [0.0, 0.0];
        let (gravity_torque, support) = if self.config.gravity_compensation {
            (tau, [0.0; 2])
        } else if guiding {
            // hands on the arm: the operator holds up what the motors do not
            ([0.0; 2], end_effector_force_for_torque(&self.config, self.world.q, tau))
        } else {
            ([0.0; 2], [0.0; 2])
        };
        self.telemetry.gravity_torque = gravity_torque;
        self.telemetry.operator_force = [
            self.human_wrench[0] + support[0],
            self.human_wrench[1] + support[1],
        ];
    }

    fn step(&mut self) -> Result<(), String> {
        self.refresh_intent();
        let u_h = ControlInput::new(self.human_wrench.to_vec()).map_err(|e| e.to_string())?;
        if self.arbitration.source == AuthoritySource::SharedAutonomy {
            self.arbitration = auto_tune_lambda(&self.policy, u_h.norm(), &self.intent, self.dt, self.arbitration)
                .map_err(|e| e.to_string())?;
        }
        // The planner acts through x_d, so its force-level command is zero.
        let u_a = ControlInput::zeros(2);
        let h = blend(self.arbitration.lambda, &u_h, &u_a).map_err(|e| e.to_string())?;

        let before = self.world.end_effector;
        let outcome = simulate_tick(
            &self.config,
            &self.world,
            &self.compliance,
            TickInputs {
                command: &h,
                params: &self.params,
                integrator: self.integrator,
                trajectory: &self.trajectory,
                action: self.grip.take(),
                speed_scale: self.speed_scale,
            },
            self.dt,
        )
        .map_err(|e| e.to_string())?;
        self.world = outcome.world;
        // pin the clock to the tick grid instead of accumulating dt
        self.world.time = (self.tick + 1) as f64 * self.dt;
        self.compliance = outcome.compliance;
        self.telemetry.contact_force = outcome.contact_force;

        if self.arbitration.mode == Mode::Manual {
            // full human authority: the robot stays wherever it is guided
            let x_c = [self.compliance.x_c[0], self.compliance.x_c[1]];
            self.trajectory = DesiredTrajectory::hold(x_c, 0.0);
            self.compliance.x_d = x_c.to_vec();
            self.compliance.v_d = vec![0.0; 2];
        }
        self.refresh_telemetry();
        self.check_invariants()?;

        let tick = self.tick;
        self.tick += 1;
        let time = self.world.time;
        for event in outcome.events {
            self.metrics.record_event(tick, time, event.clone());
            self.recent_events.push(event);
        }
        let ee = self.world.end_effector;
        let x_d = &self.compliance.x_d;
        self.metrics.record_tick(&TickSample {
            tick: self.tick,
            t: time,
            dt: self.dt,
            tracking_error: (ee[0] - x_d[0]).hypot(ee[1] - x_d[1]),
            operator_force: self.telemetry.operator_force,
            gravity_torque: self.telemetry.gravity_torque,
            guiding_payload: self.human_wrench != [0.0, 0.0] && self.world.grasped().is_some(),
            travelled: (ee[0] - before[0]).hypot(ee[1] - before[1]),
            mode: self.arbitration.mode,
            lambda: self.arbitration.lambda,
        });
        Ok(())
    }

    fn check_invariants(&self) -> Result<(), String> {
        let lambda = self.arbitration.lambda;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(format!("λ = {lambda} left [0, 1]"));
        }
        let c = &self.compliance;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.world.q)
            && finite(&self.world.q_dot)
            && finite(&c.x_c)
            && finite(&c.v_c)
            && finite(&c.x_d)
            && finite(&self.telemetry.operator_force))
        {
            return Err("non-finite state".into());
        }
        let fk = forward_kinematics(&self.config, self.world.q);
        let ee = self.world.end_effector;
        if (fk[0] - ee[0]).abs() > 1e-9 || (fk[1] - ee[1]).abs() > 1e-9 {
            return Err("end effector disagrees with joint state".into());
        }
        Ok(())
    }

    fn record_command(&mut self, client: &str, env: &Envelope, status: CommandStatus, detail: Value) {
        self.metrics.record_command(CommandEntry {
            tick: self.tick,
            t: self.world.time,
            client: client.to_owned(),
            kind: env.kind.clone(),
            status,
            detail,
        });
    }

    /// Re-executes a log against a fresh session built from `scenario` and
    /// returns the hash after every tick.
    pub fn replay_hashes(scenario: &Scenario, log: &SessionLog) -> Result<Vec<String>, SessionError> {
        let mut session = Session::new("replay", scenario)?;
        let mut hashes = Vec::with_capacity(log.len());
        for (index, record) in log.records().iter().enumerate() {
            if record.tick != session.tick {
                return Err(SessionError::LogOrder {
                    index,
                    expected: session.tick,
                    found: record.tick,
                });
            }
            for m in &record.applied {
                if let Err(e) = Request::parse(&m.msg) {
                    return Err(SessionError::LogMessage {
                        tick: record.tick,
                        reason: e.reason,
                    });
                }
            }
            session.advance(record.applied.clone())?;
            hashes.push(hash_hex(session.snapshot_state().hash()));
        }
        Ok(hashes)
    }
}

fn issue(path: &str, e: impl ToString) -> ValidationIssue {
    ValidationIssue {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

fn not_joined(env: &Envelope) -> ProtocolError {
    ProtocolError::new(ErrorCode::NotJoined, "join the session first").referring(env)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("snapshot hash diverged at tick {tick}: logged {expected}, replayed {actual}")]
    Divergence {
        tick: u64,
        expected: String,
        actual: String,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Replays `log` and checks every hash against the logged one.
pub fn replay(log: &SessionLog, scenario: &Scenario) -> Result<Vec<String>, ReplayError> {
    let hashes = Session::replay_hashes(scenario, log)?;
    for (record, actual) in log.records().iter().zip(&hashes) {
        if &record.hash != actual {
            return Err(ReplayError::Divergence {
                tick: record.tick,
                expected: record.hash.clone(),
                actual: actual.clone(),
            });
        }
    }
    Ok(hashes)
}
