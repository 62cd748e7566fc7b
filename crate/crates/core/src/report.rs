//! Session metrics and headless scenario runs.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::arbitration::Mode;
use crate::robot::{Vec2, WorldEvent};
use crate::scenario::{Scenario, ValidationIssue};
use crate::vcs::{ErrorCode, Hub, Outbound, SessionLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub tick: u64,
    pub t: f64,
    pub mode: Mode,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandStatus {
    Applied,
    Rejected,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub tick: u64,
    pub t: f64,
    pub client: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub status: CommandStatus,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEntry {
    pub tick: u64,
    pub t: f64,
    pub event: WorldEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub ticks: u64,
    /// s
    pub duration: f64,
    /// RMS of ‖end effector − x_d‖, m
    pub tracking_rms: f64,
    /// ∫‖F_operator‖ dt, N·s
    pub human_effort: f64,
    /// ∫‖τ_gravity‖ dt supplied by the motors, N·m·s
    pub gravity_torque_integral: f64,
    /// Effort while guiding with a grasped payload, N·s
    pub guided_payload_effort: f64,
    /// End-effector path length while guiding with a payload, m
    pub guided_payload_distance: f64,
    /// N·s/m; absent when no payload was guided
    pub effort_per_meter: Option<f64>,
    pub mode_timeline: Vec<ModeEntry>,
    pub commands: Vec<CommandEntry>,
    pub events: Vec<EventEntry>,
    pub final_hash: String,
}

impl MetricsReport {
    pub fn is_finite(&self) -> bool {
        [
            self.tracking_rms,
            self.human_effort,
            self.gravity_torque_integral,
            self.guided_payload_effort,
            self.guided_payload_distance,
            self.effort_per_meter.unwrap_or(0.0),
        ]
        .iter()
        .all(|x| x.is_finite())
            && self.mode_timeline.iter().all(|m| m.lambda.is_finite())
    }

    /// Distinct modes in the order they were entered.
    pub fn mode_sequence(&self) -> Vec<Mode> {
        let mut seq: Vec<Mode> = Vec::new();
        for entry in &self.mode_timeline {
            if seq.last() != Some(&entry.mode) {
                seq.push(entry.mode);
            }
        }
        seq
    }
}

/// Running sums kept by a session.
#[derive(Debug, Clone, Default)]
pub struct MetricsRecorder {
    tracking_sq_sum: f64,
    samples: u64,
    human_effort: f64,
    gravity_torque_integral: f64,
    guided_payload_effort: f64,
    guided_payload_distance: f64,
    mode_timeline: Vec<ModeEntry>,
    commands: Vec<CommandEntry>,
    events: Vec<EventEntry>,
}

/// Everything a single tick contributes to the metrics.
pub struct TickSample {
    pub tick: u64,
    pub t: f64,
    pub dt: f64,
    pub tracking_error: f64,
    pub operator_force: Vec2,
    pub gravity_torque: Vec2,
    pub guiding_payload: bool,
    pub travelled: f64,
    pub mode: Mode,
    pub lambda: f64,
}

fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

impl MetricsRecorder {
    pub fn record_mode(&mut self, tick: u64, t: f64, mode: Mode, lambda: f64) {
        if self.mode_timeline.last().map(|m| m.mode) != Some(mode) {
            self.mode_timeline.push(ModeEntry { tick, t, mode, lambda });
        }
    }

    pub fn record_tick(&mut self, s: &TickSample) {
        self.tracking_sq_sum += s.tracking_error * s.tracking_error;
        self.samples += 1;
        let effort = norm(s.operator_force) * s.dt;
        self.human_effort += effort;
        self.gravity_torque_integral += norm(s.gravity_torque) * s.dt;
        if s.guiding_payload {
            self.guided_payload_effort += effort;
            self.guided_payload_distance += s.travelled;
        }
        self.record_mode(s.tick, s.t, s.mode, s.lambda);
    }

    pub fn record_command(&mut self, entry: CommandEntry) {
        self.commands.push(entry);
    }

    pub fn record_event(&mut self, tick: u64, t: f64, event: WorldEvent) {
        self.events.push(EventEntry { tick, t, event });
    }

    pub fn report(&self, scenario: &Scenario, ticks: u64, duration: f64, final_hash: String) -> MetricsReport {
        let tracking_rms = if self.samples == 0 {
            0.0
        } else {
            (self.tracking_sq_sum / self.samples as f64).sqrt()
        };
        let effort_per_meter = (self.guided_payload_distance > 0.0)
            .then(|| self.guided_payload_effort / self.guided_payload_distance);
        MetricsReport {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            ticks,
            duration,
            tracking_rms,
            human_effort: self.human_effort,
            gravity_torque_integral: self.gravity_torque_integral,
            guided_payload_effort: self.guided_payload_effort,
            guided_payload_distance: self.guided_payload_distance,
            effort_per_meter,
            mode_timeline: self.mode_timeline.clone(),
            commands: self.commands.clone(),
            events: self.events.clone(),
            final_hash,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
        }
    }
}

/// Writes the report; CSV holds one row per mode-timeline entry.
pub fn export<W: Write>(report: &MetricsReport, format: ExportFormat, out: W) -> std::io::Result<()> {
    match format {
        ExportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n")
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["t", "tick", "mode", "lambda"])?;
            for e in &report.mode_timeline {
                let mode = serde_json::to_value(e.mode).expect("mode serializes");
                w.write_record([
                    e.t.to_string(),
                    e.tick.to_string(),
                    mode.as_str().unwrap_or_default().to_owned(),
                    e.lambda.to_string(),
                ])?;
            }
            w.flush()
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid scenario: {}", issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid { issues: Vec<ValidationIssue> },
    #[error("session froze at tick {tick}: {reason}")]
    Frozen { tick: u64, reason: String },
    #[error("server refused `{kind}` at tick {tick}: {reason}")]
    Refused { tick: u64, kind: String, reason: String },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub log: SessionLog,
}

/// Client id the scenario driver uses.
pub const SCENARIO_CLIENT: &str = "scenario";

/// Runs a scenario against an in-process server with no modeled latency.
pub fn run_headless(scenario: &Scenario) -> Result<RunOutput, RunError> {
    let issues = scenario.check();
    if !issues.is_empty() {
        return Err(RunError::Invalid { issues });
    }
    let mut hub = Hub::new();
    let mut seq = 0u64;
    let mut send = |hub: &mut Hub, kind: &str, sid: &str, payload: Value| -> Vec<Outbound> {
        seq += 1;
        let frame = json!({"v": 1, "type": kind, "seq": seq, "sid": sid, "t": 0, "payload": payload});
        hub.handle_frame(SCENARIO_CLIENT, &frame.to_string())
    };
    let replies = send(&mut hub, "join", "", json!({"role": "operator", "scenario": scenario}));
    let sid = match replies.iter().find(|o| o.kind == "ack") {
        Some(ack) => ack.sid.clone(),
        None => {
            let reason = replies
                .first()
                .and_then(|o| o.payload.get("reason"))
                .and_then(Value::as_str)
                .unwrap_or("no reply")
                .to_owned();
            return Err(RunError::Refused {
                tick: 0,
                kind: "join".into(),
                reason,
            });
        }
    };

    let total = scenario.total_ticks();
    let mut events = scenario.timeline.iter().peekable();
    for tick in 0..total {
        while let Some(event) = events.next_if(|e| e.tick(&scenario.rates) <= tick) {
            let (kind, payload) = event.to_message();
            for reply in send(&mut hub, kind, &sid, payload) {
                // validated scenarios never trip protocol checks
                if let Some(code) = reply.error_code() {
                    if code != ErrorCode::Rejected {
                        return Err(refused(tick, kind, &reply));
                    }
                }
            }
        }
        hub.tick(&sid);
        if let Some(session) = hub.session(&sid) {
            if let Some(reason) = session.frozen() {
                return Err(RunError::Frozen {
                    tick,
                    reason: reason.to_owned(),
                });
            }
        }
    }
    let session = hub.session(&sid).expect("session exists");
    Ok(RunOutput {
        report: session.report(),
        log: session.log().clone(),
    })
}

fn refused(tick: u64, kind: &str, reply: &Outbound) -> RunError {
    RunError::Refused {
        tick,
        kind: kind.to_owned(),
        reason: reply
            .payload
            .get("reason")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> MetricsReport {
        MetricsReport {
            scenario: "x".into(),
            seed: 3,
            ticks: 10,
            duration: 0.1,
            tracking_rms: 0.1 + 0.2,
            human_effort: 1.0 / 3.0,
            gravity_torque_integral: 2.5,
            guided_payload_effort: 0.0,
            guided_payload_distance: 0.0,
            effort_per_meter: None,
            mode_timeline: vec![
                ModeEntry {
                    tick: 0,
                    t: 0.0,
                    mode: Mode::Autonomy,
                    lambda: 0.0,
                },
                ModeEntry {
                    tick: 4,
                    t: 0.04,
                    mode: Mode::Blended,
                    lambda: 0.5,
                },
            ],
            commands: vec![],
            events: vec![],
            final_hash: "00".into(),
        }
    }

    #[test]
    fn json_export_round_trips() {
        let r = sample_report();
        let mut buf = Vec::new();
        export(&r, ExportFormat::Json, &mut buf).unwrap();
        let back: MetricsReport = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_has_header_plus_timeline_rows() {
        let r = sample_report();
        let mut buf = Vec::new();
        export(&r, ExportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), r.mode_timeline.len() + 1);
        assert_eq!(text.lines().nth(2), Some("0.04,4,blended,0.5"));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("csv".parse::<ExportFormat>(), Ok(ExportFormat::Csv));
        assert!("xml".parse::<ExportFormat>().is_err());
    }

    #[test]
    fn mode_timeline_only_records_changes() {
        let mut m = MetricsRecorder::default();
        m.record_mode(0, 0.0, Mode::Autonomy, 0.0);
        m.record_mode(1, 0.01, Mode::Autonomy, 0.01);
        m.record_mode(2, 0.02, Mode::Manual, 1.0);
        let r = m.report(&Scenario::minimal(1.0), 3, 0.03, String::new());
        assert_eq!(r.mode_sequence(), vec![Mode::Autonomy, Mode::Manual]);
        assert_eq!(r.mode_timeline.len(), 2);
    }
}
