use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex as StdMutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use souschef_core::recipes::StaplesPolicy;
use souschef_core::{Gateway, PantrySession, ProfileId, SessionId, TimerId, UserProfile};
use tokio::sync::{Mutex, RwLock};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::store::{Loaded, RecordError, Store, StoreError};
use crate::timers::Timer;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
pub struct ManualClock(StdMutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(StdMutex::new(start))
    }

    pub fn advance(&self, by: chrono::Duration) {
        *self.0.lock().expect("clock poisoned") += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock poisoned")
    }
}

/// How new ids are minted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdStyle {
    Uuid,
    /// `p1`, `s1`, `t1`, ...; reproducible transcripts.
    Sequential,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub staples: StaplesPolicy,
    pub history_budget: usize,
    pub llm_timeout: Duration,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            staples: StaplesPolicy::default(),
            history_budget: souschef_core::assistant::DEFAULT_HISTORY_BUDGET,
            llm_timeout: Duration::from_secs(60),
        }
    }
}

impl From<&ServiceConfig> for Settings {
    fn from(c: &ServiceConfig) -> Self {
        Self {
            staples: c.staples.clone(),
            history_budget: c.history_budget,
            llm_timeout: c.llm_timeout(),
        }
    }
}

pub type SessionHandle = Arc<Mutex<PantrySession>>;

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    gateway: Gateway,
    settings: Settings,
    clock: Arc<dyn Clock>,
    ids: IdStyle,
    next_id: AtomicU64,
    store: Store,
    profiles: RwLock<HashMap<ProfileId, UserProfile>>,
    sessions: RwLock<HashMap<SessionId, SessionHandle>>,
    timers: Mutex<BTreeMap<TimerId, Timer>>,
}

pub struct StateBuilder {
    gateway: Gateway,
    settings: Settings,
    clock: Arc<dyn Clock>,
    ids: IdStyle,
}

impl StateBuilder {
    pub fn settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn id_style(mut self, ids: IdStyle) -> Self {
        self.ids = ids;
        self
    }

    /// Opens the store and restores its records. Corrupt records are
    /// skipped and returned.
    pub fn open(self, store_path: impl Into<std::path::PathBuf>) -> Result<(AppState, Vec<RecordError>), StoreError> {
        let (store, loaded) = Store::open(store_path)?;
        let Loaded {
            profiles,
            sessions,
            timers,
            errors,
        } = loaded;
        // Sequential ids continue after the largest restored numeric suffix.
        let restored = profiles
            .keys()
            .map(|id| id.as_str())
            .chain(sessions.keys().map(|id| id.as_str()))
            .chain(timers.keys().map(|id| id.as_str()))
            .filter_map(|id| {
                let digits = id.trim_start_matches(|c: char| !c.is_ascii_digit());
                digits.parse::<u64>().ok()
            })
            .max()
            .unwrap_or(0);
        let state = AppState {
            inner: Arc::new(Inner {
                gateway: self.gateway,
                settings: self.settings,
                clock: self.clock,
                ids: self.ids,
                next_id: AtomicU64::new(restored + 1),
                store,
                profiles: RwLock::new(profiles.into_iter().collect()),
                sessions: RwLock::new(
                    sessions
                        .into_iter()
                        .map(|(id, s)| (id, Arc::new(Mutex::new(s))))
                        .collect(),
                ),
                timers: Mutex::new(timers),
            }),
        };
        Ok((state, errors))
    }
}

impl AppState {
    pub fn builder(gateway: Gateway) -> StateBuilder {
        StateBuilder {
            gateway,
            settings: Settings::default(),
            clock: Arc::new(SystemClock),
            ids: IdStyle::Uuid,
        }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.inner.gateway
    }

    /// The gateway, stamped with a mock fixture tag when one is given.
    pub fn gateway_for(&self, fixture: Option<&str>) -> Gateway {
        match fixture {
            Some(tag) => self.inner.gateway.with_fixture(tag),
            None => self.inner.gateway.clone(),
        }
    }

    pub fn settings(&self) -> &Settings {
        &self.inner.settings
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.inner.clock.now()
    }

    pub fn mint_id(&self, prefix: &str) -> String {
        match self.inner.ids {
            IdStyle::Uuid => format!("{prefix}-{}", uuid::Uuid::new_v4().simple()),
            IdStyle::Sequential => {
                format!("{prefix}{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed))
            }
        }
    }

    /// Runs `fut` under the configured model deadline.
    pub async fn with_llm_deadline<T, E>(&self, fut: impl Future<Output = Result<T, E>>) -> Result<T, ApiError>
    where
        ApiError: From<E>,
    {
        let limit = self.inner.settings.llm_timeout;
        match tokio::time::timeout(limit, fut).await {
            Ok(result) => result.map_err(ApiError::from),
            Err(_) => Err(ApiError::llm_deadline(limit.as_secs())),
        }
    }

    pub async fn profile(&self, id: &ProfileId) -> Result<UserProfile, ApiError> {
        self.inner
            .profiles
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("profile", id))
    }

    pub async fn put_profile(&self, id: ProfileId, profile: UserProfile) -> Result<(), ApiError> {
        let mut profiles = self.inner.profiles.write().await;
        self.inner.store.put_profile(&id, &profile)?;
        profiles.insert(id, profile);
        Ok(())
    }

    pub async fn insert_session(&self, session: PantrySession) -> Result<(), ApiError> {
        let mut sessions = self.inner.sessions.write().await;
        self.inner.store.put_session(&session)?;
        sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(())
    }

    pub async fn session(&self, id: &SessionId) -> Result<SessionHandle, ApiError> {
        self.inner
            .sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    pub fn persist_session(&self, session: &PantrySession) -> Result<(), ApiError> {
        Ok(self.inner.store.put_session(session)?)
    }

    pub async fn insert_timer(&self, timer: Timer) -> Result<Timer, ApiError> {
        let mut timers = self.inner.timers.lock().await;
        self.inner.store.put_timer(&timer)?;
        timers.insert(timer.id.clone(), timer.clone());
        Ok(timer)
    }

    /// Applies `f` to a timer after bringing it up to date, persisting any
    /// change.
    pub async fn update_timer<E>(
        &self,
        id: &TimerId,
        f: impl FnOnce(&mut Timer, DateTime<Utc>) -> Result<(), E>,
    ) -> Result<Timer, ApiError>
    where
        ApiError: From<E>,
    {
        let now = self.now();
        let mut timers = self.inner.timers.lock().await;
        let timer = timers.get_mut(id).ok_or_else(|| ApiError::not_found("timer", id))?;
        let before = timer.clone();
        timer.poll(now);
        let outcome = f(timer, now);
        if *timer != before {
            self.inner.store.put_timer(timer)?;
        }
        outcome?;
        Ok(timer.clone())
    }

    /// Advances every running timer; returns the ones that just expired.
    pub async fn tick(&self) -> Vec<Timer> {
        let now = self.now();
        let mut expired = Vec::new();
        let mut timers = self.inner.timers.lock().await;
        for timer in timers.values_mut() {
            if timer.poll(now) {
                if let Err(e) = self.inner.store.put_timer(timer) {
                    tracing::error!(error = %e, timer = %timer.id, "cannot persist expired timer");
                }
                tracing::info!(timer = %timer.id, label = %timer.label, "timer expired");
                expired.push(timer.clone());
            }
        }
        expired
    }

    /// Ticks timers every `period` until the task is dropped.
    pub fn spawn_scheduler(&self, period: Duration) -> tokio::task::JoinHandle<()> {
        let state = self.clone();
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            loop {
                interval.tick().await;
                state.tick().await;
            }
        })
    }
}
