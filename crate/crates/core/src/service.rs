//! In-memory typing sessions. Every keystroke re-decodes the whole sequence,
//! so earlier characters may change as context arrives.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{SessionMeta, TouchPoint};
use crate::error::{Error, Result};
use crate::metrics::{wpm, WpmInput};
use crate::model::{pixel_prediction_map, DecodedText, Decoder, PredictionGrid, Provenance};

pub const SESSION_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResponse {
    pub text: String,
    pub provenance: Vec<Provenance>,
    /// Null until two keystrokes with distinct timestamps exist.
    pub wpm: Option<f64>,
    pub latency_ms: f64,
}

#[derive(Debug)]
struct Session {
    meta: SessionMeta,
    points: Vec<TouchPoint>,
    last: DecodedText,
    created_at: Instant,
    last_active: Instant,
}

impl Session {
    fn first_last_ms(&self) -> Option<(i64, i64)> {
        Some((self.points.first()?.t_ms, self.points.last()?.t_ms))
    }
}

/// Concurrent sessions over one shared read-only decoder. Operations on a
/// single session are serialized by its own lock.
pub struct SessionRegistry {
    decoder: Arc<dyn Decoder>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    idle_timeout: Duration,
}

impl SessionRegistry {
    pub fn new(decoder: Arc<dyn Decoder>) -> Self {
        Self::with_idle_timeout(decoder, SESSION_IDLE_TIMEOUT)
    }

    pub fn with_idle_timeout(decoder: Arc<dyn Decoder>, idle_timeout: Duration) -> Self {
        Self {
            decoder,
            sessions: RwLock::new(HashMap::new()),
            idle_timeout,
        }
    }

    pub fn decoder(&self) -> &dyn Decoder {
        self.decoder.as_ref()
    }

    /// Points a session may hold.
    pub fn capacity(&self) -> usize {
        self.decoder.max_len()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create_session(&self, screen_w: u32, screen_h: u32) -> Result<String> {
        if screen_w == 0 || screen_h == 0 {
            return Err(Error::InvalidArgument(format!(
                "screen dimensions must be positive, got {screen_w}x{screen_h}"
            )));
        }
        let now = Instant::now();
        self.expire_idle(now);
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session {
            meta: SessionMeta::new(id.clone(), screen_w, screen_h),
            points: Vec::new(),
            last: DecodedText::default(),
            created_at: now,
            last_active: now,
        };
        self.sessions
            .write()
            .expect("registry lock")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    /// Drops sessions idle for longer than the timeout as of `now`; returns
    /// how many were removed.
    pub fn expire_idle(&self, now: Instant) -> usize {
        let mut map = self.sessions.write().expect("registry lock");
        let before = map.len();
        map.retain(|_, s| {
            let s = s.lock().expect("session lock");
            now.saturating_duration_since(s.last_active) <= self.idle_timeout
        });
        before - map.len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(id.to_string()))
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let handle = self.session(id)?;
        let mut s = handle.lock().expect("session lock");
        let now = Instant::now();
        if now.saturating_duration_since(s.last_active) > self.idle_timeout {
            drop(s);
            self.sessions.write().expect("registry lock").remove(id);
            return Err(Error::SessionNotFound(id.to_string()));
        }
        s.last_active = now;
        f(&mut s)
    }

    fn redecode(&self, s: &mut Session, started: Instant) -> Result<DecodeResponse> {
        s.last = if s.points.is_empty() {
            DecodedText::default()
        } else {
            self.decoder.decode(&s.points, &s.meta)?
        };
        Ok(self.response(s, started))
    }

    fn response(&self, s: &Session, started: Instant) -> DecodeResponse {
        let text = s.last.text(self.decoder.vocab());
        let wpm = s.first_last_ms().and_then(|(first, last)| {
            let minutes = (last - first) as f64 / 60_000.0;
            wpm(&WpmInput::new(&text, minutes)).ok()
        });
        DecodeResponse {
            text,
            provenance: s.last.provenance.clone(),
            wpm,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }

    pub fn push_point(&self, id: &str, x: f64, y: f64, t_ms: i64) -> Result<DecodeResponse> {
        let started = Instant::now();
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidArgument("coordinates must be finite".into()));
        }
        self.with_session(id, |s| {
            if let Some(prev) = s.points.last() {
                if t_ms < prev.t_ms {
                    return Err(Error::Ordering {
                        t_ms,
                        prev_ms: prev.t_ms,
                    });
                }
            }
            let max = self.capacity();
            if s.points.len() >= max {
                return Err(Error::Capacity { max });
            }
            s.points.push(TouchPoint::new(x, y, t_ms));
            let out = self.redecode(s, started);
            if out.is_err() {
                s.points.pop();
            }
            out
        })
    }

    pub fn pop_point(&self, id: &str) -> Result<DecodeResponse> {
        let started = Instant::now();
        self.with_session(id, |s| {
            let removed = s.points.pop().ok_or(Error::EmptySession)?;
            let out = self.redecode(s, started);
            if out.is_err() {
                s.points.push(removed);
            }
            out
        })
    }

    /// Current state without modifying the session.
    pub fn current(&self, id: &str) -> Result<DecodeResponse> {
        let started = Instant::now();
        self.with_session(id, |s| Ok(self.response(s, started)))
    }

    /// Next-character prediction over the screen given the session's points.
    pub fn heatmap(&self, id: &str, step: u32) -> Result<PredictionGrid> {
        self.with_session(id, |s| pixel_prediction_map(self.decoder.as_ref(), &s.points, &s.meta, step))
    }

    pub fn session_age(&self, id: &str) -> Result<Duration> {
        let handle = self.session(id)?;
        let s = handle.lock().expect("session lock");
        Ok(s.created_at.elapsed())
    }
}
