//! Acceptance criteria, one line each. Runs as a plain binary so that every
//! criterion is evaluated and reported even when an earlier one fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use workcell_core::admittance::{
    clamp_to_stable_with, stability_check, step_toward, AdmittanceParams, ComplianceState, Integrator,
    ParamBounds,
};
use workcell_core::arbitration::{blend, ControlInput, Mode};
use workcell_core::knowledge::{CompletionRule, KnowledgeGraph, KnowledgeTriple, RuleSet};
use workcell_core::language::{apply_command, ComplianceCommand, Effect};
use workcell_core::report::run_headless;
use workcell_core::scenario::{validate, Scenario};
use workcell_core::vcs::{replay, ErrorCode, Hub};

const CARPENTER: &str = include_str!("../../cli/examples/carpenter.json");
const STABILITY_MARGIN: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("arbitration", arbitration),
        ("free-space convergence", free_space_convergence),
        ("static compliance", static_compliance),
        ("stability clamp", stability_clamp),
        ("integration accuracy", integration_accuracy),
        ("knowledge oracle", knowledge_oracle),
        ("replay determinism", replay_determinism),
        ("carpenter end-to-end", carpenter),
        ("protocol robustness", protocol_robustness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Random single-axis parameters, log-uniform inside the default bounds and
/// stable at `dt`.
fn random_stable(rng: &mut impl Rng, dt: f64) -> AdmittanceParams {
    let b = ParamBounds::default();
    loop {
        let p = AdmittanceParams::uniform(
            1,
            log_uniform(rng, b.min.mass[0], b.max.mass[0]),
            log_uniform(rng, b.min.damping[0], b.max.damping[0]),
            log_uniform(rng, b.min.stiffness[0], b.max.stiffness[0]),
        );
        if stability_check(&p, dt).stable {
            return p;
        }
    }
}

/// Steps a single axis with a fixed desired position at the origin.
fn simulate(p: &AdmittanceParams, mut s: ComplianceState, dt: f64, steps: usize) -> ComplianceState {
    for _ in 0..steps {
        s = step_toward(p, Integrator::default(), &s, vec![0.0], vec![0.0], dt).expect("stable step");
    }
    s
}

fn arbitration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let mut bad = Vec::new();
    for case in 0..1000 {
        let dim = rng.gen_range(1..=6);
        let vec = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen_range(-100.0..100.0)).collect::<Vec<f64>>();
        let (h, a) = (vec(&mut rng), vec(&mut rng));
        let lambda: f64 = rng.gen();
        let s: f64 = rng.gen_range(-10.0..10.0);
        let u_h = ControlInput::new(h.clone()).unwrap();
        let u_a = ControlInput::new(a.clone()).unwrap();
        let out = blend(lambda, &u_h, &u_a).unwrap();

        let envelope = out.values().iter().zip(h.iter().zip(&a)).all(|(o, (h, a))| {
            let tol = f64::EPSILON * h.abs().max(a.abs());
            *o >= h.min(*a) - tol && *o <= h.max(*a) + tol
        });
        let limits = blend(0.0, &u_h, &u_a).unwrap().values() == a.as_slice()
            && blend(1.0, &u_h, &u_a).unwrap().values() == h.as_slice();
        let scaled = blend(
            lambda,
            &ControlInput::new(h.iter().map(|v| s * v).collect()).unwrap(),
            &ControlInput::new(a.iter().map(|v| s * v).collect()).unwrap(),
        )
        .unwrap();
        let linear = scaled.values().iter().zip(out.values()).zip(h.iter().zip(&a)).all(|((y, o), (h, a))| {
            let scale = s.abs() * (h.abs() + a.abs());
            (y - s * o).abs() <= 4.0 * f64::EPSILON * scale
        });
        if !(envelope && limits && linear) {
            bad.push(case);
        }
    }
    let elapsed = started.elapsed();
    Outcome::new(
        bad.is_empty() && elapsed < Duration::from_secs(1),
        format!("1000 cases, {} violations, {elapsed:.2?} (limit 1 s)", bad.len()),
    )
}

fn free_space_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dt = 1e-3;
    let threshold = 1e-6 * 0.1;
    let started = Instant::now();
    let mut converged = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_stable(&mut rng, dt);
        let (m, d, k) = (p.mass[0], p.damping[0], p.stiffness[0]);
        let horizon = 10.0 * 2.0 * m / d;
        let mut s = ComplianceState::at_rest(vec![0.0]);
        s.x_c = vec![0.1];
        let s = simulate(&p, s, dt, (horizon / dt).ceil() as usize);
        // energy norm bounds every later |e|, so a zero crossing cannot pass
        let e = (s.x_c[0].powi(2) + m / k * s.v_c[0].powi(2)).sqrt();
        worst = worst.max(e);
        if e < threshold {
            converged += 1;
        }
    }
    let elapsed = started.elapsed();
    Outcome::new(
        converged == 100 && elapsed < Duration::from_secs(10),
        format!(
            "{converged}/100 below {threshold:.0e} m at 10·2M/D, worst {worst:.2e} m, {elapsed:.2?} (limit 10 s)"
        ),
    )
}

fn static_compliance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dt = 1e-2;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_stable(&mut rng, dt);
        let (m, d, k) = (p.mass[0], p.damping[0], p.stiffness[0]);
        let f = rng.gen_range(1.0..20.0) * if rng.gen() { 1.0 } else { -1.0 };
        // slowest pole of m·s² + d·s + k
        let disc = d * d - 4.0 * m * k;
        let rate = if disc > 0.0 { (d - disc.sqrt()) / (2.0 * m) } else { d / (2.0 * m) };
        let mut s = ComplianceState::at_rest(vec![0.0]);
        s.f_ext = vec![f];
        let s = simulate(&p, s, dt, (20.0 / rate / dt).ceil() as usize);
        let expected = f / k;
        worst = worst.max(((s.x_c[0] - expected) / expected).abs());
    }
    Outcome::new(worst < 1e-4, format!("100 configurations, worst relative error {worst:.2e} (limit 1e-4)"))
}

/// One RK4 step of `ẍ = -(d ẋ + k x)/m`, written as the truncated exponential.
fn rk4_transition(m: f64, d: f64, k: f64, dt: f64) -> Matrix2<f64> {
    let ha = Matrix2::new(0.0, 1.0, -k / m, -d / m) * dt;
    let mut term = Matrix2::identity();
    let mut sum = Matrix2::identity();
    for n in 1..=4 {
        term = term * ha / n as f64;
        sum += term;
    }
    sum
}

fn spectral_radius(m: &Matrix2<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn stability_clamp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dt = 1e-2;
    let bounds = ParamBounds::default();
    let effects = [Effect::ScaleStiffness, Effect::ScaleDamping, Effect::ScaleMass, Effect::ScaleSpeed];
    let (mut unstable, mut not_idempotent, mut errors) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let start = AdmittanceParams {
            mass: (0..2).map(|_| log_uniform(&mut rng, 0.05, 50.0)).collect(),
            damping: (0..2).map(|_| log_uniform(&mut rng, 0.5, 1000.0)).collect(),
            stiffness: (0..2).map(|_| log_uniform(&mut rng, 1.0, 10000.0)).collect(),
        };
        let factor = match rng.gen_range(0..20) {
            0 => f64::NAN,
            1 => f64::INFINITY,
            2 => 0.0,
            3 => -rng.gen_range(0.1..10.0),
            _ => log_uniform(&mut rng, 1e-3, 1e3),
        };
        let cmd = ComplianceCommand {
            matched_token: "fuzz".into(),
            effect: effects[rng.gen_range(0..effects.len())],
            factor,
            target_object: None,
            confidence: 1.0,
        };
        let Ok(out) = apply_command(&cmd, &start, &bounds, Integrator::Rk4, dt) else {
            errors += 1;
            continue;
        };
        for axis in 0..2 {
            let (m, d, k) = (out.mass[axis], out.damping[axis], out.stiffness[axis]);
            let rho = spectral_radius(&rk4_transition(m, d, k, dt));
            worst = worst.max(rho);
            if !(m > 0.0 && d > 0.0 && k > 0.0 && rho < 1.0 - STABILITY_MARGIN) {
                unstable += 1;
            }
        }
        if clamp_to_stable_with(&out, &bounds, Integrator::Rk4, dt).ok().as_ref() != Some(&out) {
            not_idempotent += 1;
        }
    }
    Outcome::new(
        unstable == 0 && not_idempotent == 0 && errors == 0,
        format!(
            "1000 commands, {unstable} unstable axes, {not_idempotent} non-idempotent, {errors} errors, max radius {worst:.6}"
        ),
    )
}

fn integration_accuracy() -> Outcome {
    let (m, d, k, f, t_end): (f64, f64, f64, f64, f64) = (1.0, 20.0, 100.0, 10.0, 0.1);
    let p = AdmittanceParams::uniform(1, m, d, k);
    let mut s = ComplianceState::at_rest(vec![0.0]);
    s.f_ext = vec![f];
    let coarse = simulate(&p, s, 1e-3, 100).x_c[0];

    // independent fine reference: explicit midpoint at 1 µs
    let h: f64 = 1e-6;
    let accel = |x: f64, v: f64| (f - d * v - k * x) / m;
    let (mut x, mut v) = (0.0f64, 0.0f64);
    for _ in 0..(t_end / h).round() as usize {
        let (xm, vm) = (x + 0.5 * h * v, v + 0.5 * h * accel(x, v));
        x += h * vm;
        v += h * accel(xm, vm);
    }
    let analytic = f / k * (1.0 - (1.0 + 10.0 * t_end) * (-10.0 * t_end).exp());
    let rel = ((coarse - x) / x).abs();
    Outcome::new(
        rel < 1e-4,
        format!(
            "x(0.1) = {coarse:.9} vs fine {x:.9} (analytic {analytic:.9}), relative error {rel:.2e} (limit 1e-4)"
        ),
    )
}

/// Best left-folded product over simple paths from `from` to `to`.
fn best_path(edges: &BTreeMap<(usize, usize), f64>, n: usize, from: usize, to: usize) -> Option<f64> {
    fn walk(
        edges: &BTreeMap<(usize, usize), f64>,
        n: usize,
        at: usize,
        to: usize,
        acc: Option<f64>,
        seen: &mut Vec<bool>,
        best: &mut Option<f64>,
    ) {
        for next in 0..n {
            let Some(c) = edges.get(&(at, next)) else { continue };
            let product = acc.map_or(*c, |a| a * c);
            if next == to && best.is_none_or(|b| product > b) {
                *best = Some(product);
            }
            if !seen[next] && next != to {
                seen[next] = true;
                walk(edges, n, next, to, Some(product), seen, best);
                seen[next] = false;
            }
        }
    }
    let mut seen = vec![false; n];
    seen[from] = true;
    let mut best = None;
    walk(edges, n, from, to, None, &mut seen, &mut best);
    best
}

fn knowledge_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rules = RuleSet::new(vec![CompletionRule::transitive("r")]).unwrap();
    let graphs = 500;
    let mut mismatched = 0;
    for _ in 0..graphs {
        let n = rng.gen_range(1..=8);
        let density: f64 = rng.gen_range(0.1..0.6);
        let mut edges = BTreeMap::new();
        let mut graph = KnowledgeGraph::new();
        for a in 0..n {
            for b in 0..n {
                if rng.gen_bool(density) {
                    // coarse grid makes ties between paths common
                    let c = if rng.gen_bool(0.5) { rng.gen_range(1..=10) as f64 / 10.0 } else { rng.gen_range(0.01..=1.0) };
                    edges.insert((a, b), c);
                    graph.assert_triple(KnowledgeTriple::new(&format!("n{a}"), "r", &format!("n{b}"), c)).unwrap();
                }
                if rng.gen_bool(0.1) {
                    graph.assert_triple(KnowledgeTriple::new(&format!("n{a}"), "other", &format!("n{b}"), 0.5)).unwrap();
                }
            }
        }
        let mut expected = BTreeMap::new();
        for a in 0..n {
            for b in 0..n {
                if let Some(c) = best_path(&edges, n, a, b) {
                    expected.insert((format!("n{a}"), format!("n{b}")), c);
                }
            }
        }
        let actual: BTreeMap<(String, String), f64> = graph
            .closure(&rules)
            .into_iter()
            .filter(|((_, r, _), _)| r == "r")
            .map(|((h, _, t), c)| ((h, t), c))
            .collect();
        let others: BTreeSet<_> = graph.closure(&rules).into_keys().filter(|(_, r, _)| r == "other").collect();
        let asserted_others: BTreeSet<_> = graph
            .triples()
            .filter(|t| t.relation == "other")
            .map(|t| (t.head, t.relation, t.tail))
            .collect();
        // exact equality, bit for bit
        let same = actual.len() == expected.len()
            && actual.iter().zip(&expected).all(|((ka, va), (ke, ve))| ka == ke && va.to_bits() == ve.to_bits());
        if !same || others != asserted_others {
            mismatched += 1;
        }
    }

    let mut g = KnowledgeGraph::new();
    g.assert_triple(KnowledgeTriple::new("carpenter", "assigned_to", "beam_order", 0.9)).unwrap();
    g.assert_triple(KnowledgeTriple::new("beam_order", "needs", "guidance", 0.8)).unwrap();
    let composed = RuleSet::new(vec![CompletionRule::composed(&["assigned_to", "needs"], "requests")]).unwrap();
    let derived = g
        .closure(&composed)
        .get(&("carpenter".to_owned(), "requests".to_owned(), "guidance".to_owned()))
        .copied();
    let worked = derived.is_some_and(|c| (c - 0.72).abs() < 1e-12);
    Outcome::new(
        mismatched == 0 && worked,
        format!(
            "{graphs} graphs (≤ 8 nodes), {mismatched} mismatches; 0.9 × 0.8 → {}",
            derived.map_or("missing".to_owned(), |c| format!("{c}"))
        ),
    )
}

fn frame(kind: &str, seq: u64, sid: &str, payload: Value) -> String {
    json!({"v": 1, "type": kind, "seq": seq, "sid": sid, "t": 0, "payload": payload}).to_string()
}

fn replay_determinism() -> Outcome {
    let started = Instant::now();
    let mut scenario = validate(CARPENTER).unwrap();
    scenario.duration = 30.0;
    let mut hub = Hub::new();
    let sid = hub.create_session(&scenario).unwrap();
    hub.handle_frame("op", &frame("join", 1, &sid, json!({"role": "operator"})));
    hub.handle_frame(
        "op",
        &frame("inject_latency", 2, &sid, json!({"base_ms": 50.0, "jitter_ms": 10.0, "seed": 2024})),
    );
    let mut seq = 2;
    let mut events = scenario.timeline.iter().peekable();
    let total = scenario.total_ticks();
    for tick in 0..total {
        while let Some(e) = events.next_if(|e| e.tick(&scenario.rates) <= tick) {
            let (kind, payload) = e.to_message();
            seq += 1;
            hub.handle_frame("op", &frame(kind, seq, &sid, payload));
        }
        // keep the operator busy after the scripted part
        if tick >= 1000 && tick % 50 == 0 {
            let i = tick / 50;
            let (kind, payload) = match i % 4 {
                0 => ("wrench", json!({"force": [(i % 7) as f64 - 3.0, (i % 5) as f64 - 2.0]})),
                1 => ("set_lambda", json!({"lambda": (i % 11) as f64 / 10.0})),
                2 => ("nl_command", json!({"text": if i % 8 == 2 { "softly" } else { "stiffer" }})),
                _ => ("wrench", json!({"force": [0.0, 0.0]})),
            };
            seq += 1;
            hub.handle_frame("op", &frame(kind, seq, &sid, payload));
        }
        hub.tick(&sid);
    }
    let session = hub.session(&sid).unwrap();
    let recorded = session.log().hashes();
    let replayed = replay(session.log(), session.scenario());
    let elapsed = started.elapsed();
    let applied: usize = session.log().records().iter().map(|r| r.applied.len()).sum();
    let (pass, detail) = match replayed {
        Ok(hashes) => (
            hashes == recorded && recorded.len() as u64 == total && session.frozen().is_none(),
            format!("{} ticks, {applied} delayed messages, hash sequences identical", recorded.len()),
        ),
        Err(e) => (false, format!("replay failed: {e}")),
    };
    Outcome::new(
        pass && elapsed < Duration::from_secs(5),
        format!("{detail}, {elapsed:.2?} record + replay (limit 5 s)"),
    )
}

fn carpenter() -> Outcome {
    let scenario = validate(CARPENTER).unwrap();
    let on = run_headless(&scenario).unwrap().report;
    let mut off_scenario: Scenario = scenario.clone();
    off_scenario.robot.gravity_compensation = false;
    let off = run_headless(&off_scenario).unwrap().report;

    let sequence = on.mode_sequence();
    let lambdas: Vec<f64> = on.mode_timeline.iter().map(|m| m.lambda).collect();
    let order = sequence == [Mode::Autonomy, Mode::Blended, Mode::Manual];
    let values = order && lambdas[0] == 0.0 && (lambdas[1] - 0.5).abs() <= 0.05 && lambdas[2] >= 0.95;
    let effort = matches!((on.effort_per_meter, off.effort_per_meter), (Some(a), Some(b)) if a < b);
    Outcome::new(
        values && effort,
        format!(
            "modes {sequence:?} at λ {lambdas:?}; effort per meter {} with compensation vs {} without",
            fmt_opt(on.effort_per_meter),
            fmt_opt(off.effort_per_meter)
        ),
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_owned(), |v| format!("{v:.2}"))
}

fn protocol_robustness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut hub = Hub::new();
    let sid = hub.create_session(&Scenario::minimal(120.0)).unwrap();
    hub.handle_frame("op", &frame("join", 1, &sid, json!({"role": "operator"})));
    let mut seq = 1;

    let invalid_payloads = [
        ("set_lambda", json!({"lambda": "high"})),
        ("set_lambda", json!({"lambda": 0.5, "extra": 1})),
        ("set_mode", json!({"mode": "telepathy"})),
        ("wrench", json!({"force": [1.0]})),
        ("wrench", json!({"force": [1.0, "x"]})),
        ("nl_command", json!({"text": "   "})),
        ("nl_command", json!({"text": "a".repeat(2000)})),
        ("goal", json!({"waypoint": [0.5, 0.5], "duration": 0})),
        ("goal", json!({"waypoint": [5.0, 5.0], "duration": 1.0})),
        ("inject_latency", json!({"base_ms": 0, "loss": 1.0})),
        ("assert_triple", json!({"head": "a", "relation": "r", "tail": "b", "confidence": 1.5})),
    ];
    let (mut faults, mut untyped, mut wrong) = (0, 0, BTreeMap::<&str, usize>::new());
    let cases = 10_000;
    for _ in 0..cases {
        seq += 1;
        let (label, text, expected) = match rng.gen_range(0..10) {
            0 => {
                let bytes: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
                ("random bytes", String::from_utf8_lossy(&bytes).into_owned(), ErrorCode::Malformed)
            }
            1 => {
                let good = frame("set_lambda", seq, &sid, json!({"lambda": 0.5}));
                let cut = rng.gen_range(0..good.len());
                ("truncated", good[..cut].to_owned(), ErrorCode::Malformed)
            }
            2 => {
                let mut v: Value = serde_json::from_str(&frame("wrench", seq, &sid, json!({"force": [0, 0]}))).unwrap();
                let field = ["v", "type", "seq", "sid", "t"][rng.gen_range(0..5)];
                v.as_object_mut().unwrap().remove(field);
                ("missing field", v.to_string(), ErrorCode::Malformed)
            }
            3 => {
                let v = json!({"v": rng.gen_range(2..100), "type": "set_lambda", "seq": seq, "sid": sid, "t": 0, "payload": {"lambda": 0.1}});
                ("wrong version", v.to_string(), ErrorCode::UnsupportedVersion)
            }
            4 => {
                let kind: String = (0..rng.gen_range(1..12)).map(|_| rng.gen_range('a'..='z')).collect();
                ("unknown type", frame(&format!("x_{kind}"), seq, &sid, json!({})), ErrorCode::UnknownType)
            }
            5 => {
                let kind = ["snapshot", "ack", "error"][rng.gen_range(0..3)];
                ("server-only type", frame(kind, seq, &sid, json!({})), ErrorCode::WrongDirection)
            }
            6 => ("stale seq", frame("set_lambda", rng.gen_range(0..=1), &sid, json!({"lambda": 0.3})), ErrorCode::StaleSeq),
            7 => {
                let (kind, payload) = invalid_payloads[rng.gen_range(0..invalid_payloads.len())].clone();
                ("invalid payload", frame(kind, seq, &sid, payload), ErrorCode::InvalidPayload)
            }
            8 => ("unknown session", frame("wrench", seq, &format!("z{}", rng.gen::<u32>()), json!({"force": [0, 0]})), ErrorCode::UnknownSession),
            _ => {
                let pad = "x".repeat(256 * 1024 + rng.gen_range(1..1024));
                ("oversized", frame("nl_command", seq, &sid, json!({"text": pad})), ErrorCode::Malformed)
            }
        };
        match catch_unwind(AssertUnwindSafe(|| hub.handle_frame("op", &text))) {
            Err(_) => faults += 1,
            Ok(out) => {
                if out.len() != 1 || !out[0].is_error() || out[0].error_code().is_none() {
                    untyped += 1;
                } else if out[0].error_code() != Some(expected) {
                    *wrong.entry(label).or_default() += 1;
                }
            }
        }
        if catch_unwind(AssertUnwindSafe(|| hub.tick(&sid))).is_err() {
            faults += 1;
        }
    }

    // the session is still alive and steerable
    seq += 1;
    let ack = hub.handle_frame("op", &frame("set_lambda", seq, &sid, json!({"lambda": 1.0})));
    hub.tick(&sid);
    let session = hub.session(&sid).unwrap();
    let alive = ack.first().is_some_and(|a| a.kind == "ack")
        && session.frozen().is_none()
        && session.arbitration().lambda == 1.0;
    let mistyped: usize = wrong.values().sum();
    Outcome::new(
        faults == 0 && untyped == 0 && mistyped == 0 && alive,
        format!(
            "{cases} frames, {faults} faults, {untyped} untyped replies, {mistyped} unexpected codes {wrong:?}, session alive: {alive}"
        ),
    )
}
