use std::collections::BTreeMap;

use serde_json::json;

use crate::scenario::Scenario;

use super::protocol::{decode, ErrorCode, Outbound, ProtocolError, Request};
use super::session::{Session, SessionError};

/// Routes frames to isolated sessions by `sid`.
#[derive(Debug, Default)]
pub struct Hub {
    sessions: BTreeMap<String, Session>,
    created: u64,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_session(&mut self, scenario: &Scenario) -> Result<String, SessionError> {
        let id = format!("s{}", self.created + 1);
        let session = Session::new(&id, scenario)?;
        self.created += 1;
        self.sessions.insert(id.clone(), session);
        Ok(id)
    }

    pub fn session(&self, sid: &str) -> Option<&Session> {
        self.sessions.get(sid)
    }

    pub fn session_mut(&mut self, sid: &str) -> Option<&mut Session> {
        self.sessions.get_mut(sid)
    }

    pub fn session_ids(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }

    pub fn remove_session(&mut self, sid: &str) -> Option<Session> {
        self.sessions.remove(sid)
    }

    /// Decodes and dispatches one text frame. Every failure becomes an error
    /// reply to the sender.
    pub fn handle_frame(&mut self, client: &str, frame: &str) -> Vec<Outbound> {
        match decode(frame) {
            Ok(env) => self.handle(client, env),
            Err(err) => vec![Outbound::error(client, "", 0, err)],
        }
    }

    pub fn handle(&mut self, client: &str, mut env: super::Envelope) -> Vec<Outbound> {
        let fail = |sid: &str, err: ProtocolError| vec![Outbound::error(client, sid, 0, err)];
        if env.kind == "join" {
            let join = match Request::parse(&env) {
                Ok(Request::Join(join)) => join,
                Ok(_) => unreachable!("join parses as join"),
                Err(e) => return fail(&env.sid, e),
            };
            if let Some(scenario) = join.scenario {
                match self.create_session(&scenario) {
                    Ok(sid) => {
                        env.sid = sid;
                        env.payload = json!({ "role": join.role });
                    }
                    Err(SessionError::InvalidScenario(issues)) => {
                        let err = ProtocolError::new(ErrorCode::InvalidPayload, "scenario failed validation")
                            .referring(&env)
                            .with_details(json!({ "issues": issues }));
                        return fail(&env.sid, err);
                    }
                    Err(e) => {
                        return fail(&env.sid, ProtocolError::new(ErrorCode::Rejected, e.to_string()).referring(&env))
                    }
                }
            }
        }
        if env.kind == "hello" && !self.sessions.contains_key(&env.sid) {
            if let Err(e) = Request::parse(&env) {
                return fail(&env.sid, e);
            }
            let sessions: Vec<&str> = self.session_ids().collect();
            return vec![Outbound::ack(client, &env.sid, 0, &env, "ok", json!({ "session": null, "sessions": sessions }))];
        }
        if let Err(e) = Request::parse(&env) {
            if matches!(e.code, ErrorCode::UnknownType | ErrorCode::WrongDirection) {
                return fail(&env.sid, e);
            }
        }
        match self.sessions.get_mut(&env.sid) {
            Some(session) => session.handle(client, env),
            None => {
                let err = ProtocolError::new(ErrorCode::UnknownSession, format!("no session `{}`", env.sid))
                    .referring(&env);
                fail(&env.sid, err)
            }
        }
    }

    pub fn tick(&mut self, sid: &str) -> Vec<Outbound> {
        self.sessions.get_mut(sid).map(Session::tick).unwrap_or_default()
    }

    pub fn disconnect(&mut self, client: &str) {
        for s in self.sessions.values_mut() {
            s.disconnect(client);
        }
    }
}
