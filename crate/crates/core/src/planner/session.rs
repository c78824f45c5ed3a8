//! Append-only editing sessions.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{converse, BackendError, ChatBackend, ChatMessage, Role};
use super::edit::{apply_edit, parse_edit_command, EditCommand, EditError, EditParse};
use super::prompt::{build_edit_prompt, SYSTEM_PROMPT};
use super::PromptSpec;
use crate::codec::FailureReason;
use crate::geometry::{validate, Layout, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    DeterministicEdit,
    Backend,
}

/// How a message was handled.
pub type Route = Origin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub index: usize,
    pub layout: Layout,
    /// The message that produced this revision; `None` for the initial one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<EditCommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied_magnitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub spec: PromptSpec,
    revisions: Vec<Revision>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid layout: {0:?}")]
    InvalidLayout(Vec<Violation>),
    #[error("invalid prompt spec: canvas must be positive")]
    InvalidSpec,
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("message needs a chat backend and none is configured")]
    NoBackend,
    #[error("backend reply could not be parsed: {0}")]
    Unparsable(FailureReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub tau_o: f64,
    pub retries: u32,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            tau_o: 0.01,
            retries: 1,
        }
    }
}

impl Session {
    /// Opens a session whose revision 0 is `initial`.
    pub fn new(id: impl Into<String>, spec: PromptSpec, initial: Layout) -> Result<Self, SessionError> {
        if !spec.canvas_ok() {
            return Err(SessionError::InvalidSpec);
        }
        let v = validate(&initial);
        if !v.is_empty() {
            return Err(SessionError::InvalidLayout(v));
        }
        Ok(Self {
            id: id.into(),
            spec,
            revisions: vec![Revision {
                index: 0,
                layout: initial,
                message: None,
                origin: Origin::Initial,
                command: None,
                applied_magnitude: None,
                raw_reply: None,
            }],
        })
    }

    /// Rebuilds a session from stored revisions.
    pub fn from_revisions(id: impl Into<String>, spec: PromptSpec, revisions: Vec<Revision>) -> Result<Self, SessionError> {
        if revisions.is_empty() || revisions.iter().enumerate().any(|(i, r)| r.index != i) {
            return Err(SessionError::InvalidLayout(Vec::new()));
        }
        for r in &revisions {
            let v = validate(&r.layout);
            if !v.is_empty() {
                return Err(SessionError::InvalidLayout(v));
            }
        }
        Ok(Self {
            id: id.into(),
            spec,
            revisions,
        })
    }

    pub fn revisions(&self) -> &[Revision] {
        &self.revisions
    }

    pub fn latest(&self) -> &Revision {
        self.revisions.last().expect("sessions always hold revision 0")
    }
}

/// Handles one user message. Messages in the edit grammar are applied
/// without the backend; others go to `backend` with the current layout.
/// On any error the session is left unchanged.
pub fn step_session<'s>(
    session: &'s mut Session,
    message: &str,
    backend: Option<&dyn ChatBackend>,
    cfg: &StepConfig,
) -> Result<&'s Revision, SessionError> {
    let current = &session.latest().layout;
    let index = session.revisions.len();
    let revision = match parse_edit_command(message, current)? {
        EditParse::Command(cmd) => {
            let out = apply_edit(current, &cmd, cfg.tau_o)?;
            Revision {
                index,
                layout: out.layout,
                message: Some(message.into()),
                origin: Origin::DeterministicEdit,
                command: Some(cmd),
                applied_magnitude: out.applied_magnitude,
                raw_reply: None,
            }
        }
        EditParse::NotDeterministic => {
            let backend = backend.ok_or(SessionError::NoBackend)?;
            let messages = vec![
                ChatMessage::new(Role::System, SYSTEM_PROMPT),
                ChatMessage::new(Role::User, build_edit_prompt(&session.spec, current, message)),
            ];
            let result = converse(messages, &session.spec, backend, cfg.retries)?;
            let raw = String::from(result.outcome.raw_text());
            match result.outcome.layout() {
                Some(l) => Revision {
                    index,
                    layout: l.clone(),
                    message: Some(message.into()),
                    origin: Origin::Backend,
                    command: None,
                    applied_magnitude: None,
                    raw_reply: Some(raw),
                },
                None => {
                    return Err(SessionError::Unparsable(
                        result.outcome.failure_reason().unwrap_or(FailureReason::SyntaxError),
                    ))
                }
            }
        }
    };
    let v = validate(&revision.layout);
    if !v.is_empty() {
        return Err(SessionError::InvalidLayout(v));
    }
    session.revisions.push(revision);
    Ok(session.latest())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{serialize, LayoutFormat};
    use crate::geometry::{BBox, Element};
    use crate::planner::{PlanMode, ScriptedBackend};

    fn session() -> Session {
        let l = Layout::with_elements(128., 128., vec![Element::object("e0", "dog", BBox::new(50., 10., 70., 30.))]);
        Session::new("s1", PromptSpec::new("A dog.", LayoutFormat::IntList128, PlanMode::Closed), l).unwrap()
    }

    #[test]
    fn deterministic_route_without_backend() {
        let mut s = session();
        let r = step_session(&mut s, "move the dog left by 10", None, &StepConfig::default()).unwrap();
        assert_eq!(r.origin, Origin::DeterministicEdit);
        assert_eq!(r.index, 1);
        assert_eq!(r.layout.elements[0].bbox.left, 40.0);
        assert_eq!(s.revisions().len(), 2);
        assert_eq!(s.revisions()[0].layout.elements[0].bbox.left, 50.0);
    }

    #[test]
    fn backend_route() {
        let mut s = session();
        let target = Layout::with_elements(128., 128., vec![Element::object("e0", "dog", BBox::new(0., 0., 64., 64.))]);
        let b = ScriptedBackend::always(serialize(&target, LayoutFormat::IntList128));
        let r = step_session(&mut s, "make it feel calmer", Some(&b), &StepConfig::default()).unwrap();
        assert_eq!(r.origin, Origin::Backend);
        assert_eq!(r.layout, target);
    }

    #[test]
    fn errors_leave_session_unchanged() {
        let mut s = session();
        let before = s.clone();
        let b = ScriptedBackend::new(vec![Err(BackendError::Timeout(100))]);
        assert_eq!(
            step_session(&mut s, "make it feel calmer", Some(&b), &StepConfig::default()),
            Err(SessionError::Backend(BackendError::Timeout(100)))
        );
        assert_eq!(step_session(&mut s, "make it feel calmer", None, &StepConfig::default()), Err(SessionError::NoBackend));
        let garbage = ScriptedBackend::always("no idea");
        assert_eq!(
            step_session(&mut s, "make it feel calmer", Some(&garbage), &StepConfig::default()),
            Err(SessionError::Unparsable(FailureReason::SyntaxError))
        );
        assert!(step_session(&mut s, "move the cat up", None, &StepConfig::default()).is_err());
        assert_eq!(s, before);
    }
}
