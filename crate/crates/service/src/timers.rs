//! Countdown timers. All transitions take an explicit `now` so they can be
//! driven by a test clock; remaining time is tracked in milliseconds and
//! reported in whole seconds, rounded up.

use chrono::{DateTime, Utc};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use souschef_core::{SessionId, TimerId};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TimerState {
    Running,
    Paused,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimerError {
    #[error("timer label is blank")]
    BlankLabel,
    #[error("timer duration must be positive")]
    ZeroDuration,
    #[error("cannot {action} a {state:?} timer")]
    InvalidState { action: &'static str, state: TimerState },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Timer {
    pub id: TimerId,
    pub session_id: SessionId,
    pub label: String,
    pub duration_s: u64,
    pub started_at: DateTime<Utc>,
    pub state: TimerState,
    pub remaining_s: u64,
    /// When the current running stretch began (creation or last resume).
    pub resumed_at: DateTime<Utc>,
    /// Remaining time at `resumed_at`, or frozen remaining while paused.
    pub remaining_at_resume_ms: u64,
}

impl Timer {
    pub fn new(
        id: TimerId,
        session_id: SessionId,
        label: &str,
        duration_s: u64,
        now: DateTime<Utc>,
    ) -> Result<Self, TimerError> {
        let label = label.trim();
        if label.is_empty() {
            return Err(TimerError::BlankLabel);
        }
        if duration_s == 0 {
            return Err(TimerError::ZeroDuration);
        }
        Ok(Self {
            id,
            session_id,
            label: label.to_string(),
            duration_s,
            started_at: now,
            state: TimerState::Running,
            remaining_s: duration_s,
            resumed_at: now,
            remaining_at_resume_ms: duration_s.saturating_mul(1000),
        })
    }

    fn remaining_ms_at(&self, now: DateTime<Utc>) -> u64 {
        let elapsed = (now - self.resumed_at).num_milliseconds().max(0) as u64;
        self.remaining_at_resume_ms.saturating_sub(elapsed)
    }

    /// Brings a running timer up to `now`. Returns true on the single
    /// transition to expired.
    pub fn poll(&mut self, now: DateTime<Utc>) -> bool {
        if self.state != TimerState::Running {
            return false;
        }
        let ms = self.remaining_ms_at(now);
        if ms == 0 {
            self.state = TimerState::Expired;
            self.remaining_s = 0;
            self.remaining_at_resume_ms = 0;
            return true;
        }
        // min() keeps the countdown monotone if the wall clock steps back.
        self.remaining_s = self.remaining_s.min(ms.div_ceil(1000));
        false
    }

    pub fn pause(&mut self, now: DateTime<Utc>) -> Result<(), TimerError> {
        self.poll(now);
        if self.state != TimerState::Running {
            return Err(TimerError::InvalidState {
                action: "pause",
                state: self.state,
            });
        }
        self.remaining_at_resume_ms = self.remaining_ms_at(now).min(self.remaining_s * 1000);
        self.state = TimerState::Paused;
        Ok(())
    }

    pub fn resume(&mut self, now: DateTime<Utc>) -> Result<(), TimerError> {
        if self.state != TimerState::Paused {
            return Err(TimerError::InvalidState {
                action: "resume",
                state: self.state,
            });
        }
        self.state = TimerState::Running;
        self.resumed_at = now;
        Ok(())
    }
}
