use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use dashmap::DashMap;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::prompt::{ChatTurn, ContextPack, FeatureDigest, Role};
use crate::repo::RepoRef;

pub const SESSION_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub last_feature: Option<FeatureDigest>,
    pub turns: Vec<ChatTurn>,
    pub repo: RepoRef,
    #[serde(default)]
    pub pack: Option<ContextPack>,
}

impl ChatSession {
    /// Appends one exchange, evicting the oldest exchanges beyond `max_turns`.
    pub fn push_exchange(&mut self, user: ChatTurn, assistant: ChatTurn, max_turns: usize) {
        debug_assert!(user.role == Role::User && assistant.role == Role::Assistant);
        self.turns.push(user);
        self.turns.push(assistant);
        let max_turns = max_turns - max_turns % 2;
        if self.turns.len() > max_turns {
            let excess = self.turns.len() - max_turns;
            self.turns.drain(..excess);
        }
    }
}

/// A stored session. The idle clock lives outside the lock so a sweep
/// never waits on a chat turn in progress.
pub struct SessionEntry {
    last_active_ms: AtomicI64,
    session: Mutex<ChatSession>,
}

impl SessionEntry {
    pub fn touch(&self, now: DateTime<Utc>) {
        self.last_active_ms.fetch_max(now.timestamp_millis(), Ordering::Relaxed);
    }

    pub fn last_active(&self) -> DateTime<Utc> {
        Utc.timestamp_millis_opt(self.last_active_ms.load(Ordering::Relaxed)).single().unwrap_or_default()
    }

    pub fn lock(&self) -> impl std::future::Future<Output = tokio::sync::MutexGuard<'_, ChatSession>> {
        self.session.lock()
    }
}

pub struct SessionStore {
    sessions: DashMap<String, Arc<SessionEntry>>,
    ttl: Duration,
}

/// 256 random bits, hex encoded.
pub fn new_session_id() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self { sessions: DashMap::new(), ttl }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn create(&self, repo: RepoRef, now: DateTime<Utc>) -> (String, Arc<SessionEntry>) {
        let session_id = new_session_id();
        let entry = Arc::new(SessionEntry {
            last_active_ms: AtomicI64::new(now.timestamp_millis()),
            session: Mutex::new(ChatSession {
                session_id: session_id.clone(),
                created_at: now,
                last_feature: None,
                turns: Vec::new(),
                repo,
                pack: None,
            }),
        });
        self.sessions.insert(session_id.clone(), entry.clone());
        (session_id, entry)
    }

    pub fn get(&self, session_id: &str) -> Option<Arc<SessionEntry>> {
        self.sessions.get(session_id).map(|e| e.value().clone())
    }

    pub async fn snapshot(&self, session_id: &str) -> Option<ChatSession> {
        let entry = self.get(session_id)?;
        let session = entry.lock().await;
        Some(session.clone())
    }

    /// Removes sessions idle for longer than the TTL at `now`.
    pub fn gc(&self, now: DateTime<Utc>) -> usize {
        let ttl = chrono::Duration::from_std(self.ttl).unwrap_or(chrono::Duration::MAX);
        let before = self.sessions.len();
        self.sessions.retain(|_, entry| now.signed_duration_since(entry.last_active()) <= ttl);
        before.saturating_sub(self.sessions.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(minute: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + minute * 60, 0).unwrap()
    }

    fn repo() -> RepoRef {
        RepoRef::new("acme", "widget", None).unwrap()
    }

    fn turn(role: Role, text: &str) -> ChatTurn {
        ChatTurn { role, text: text.into(), at: at(0) }
    }

    #[test]
    fn ids_are_unique_and_long() {
        let a = new_session_id();
        assert_eq!(a.len(), 64);
        assert_ne!(a, new_session_id());
    }

    #[test]
    fn gc_evicts_only_idle() {
        let store = SessionStore::new(SESSION_TTL);
        assert_eq!(store.gc(at(0)), 0);
        for _ in 0..3 {
            store.create(repo(), at(0));
        }
        let (active, entry) = store.create(repo(), at(0));
        let (other, _) = store.create(repo(), at(20));
        entry.touch(at(25));
        assert_eq!(store.gc(at(45)), 3);
        assert!(store.get(&active).is_some() && store.get(&other).is_some());
        assert_eq!(store.gc(at(45)), 0);
    }

    #[test]
    fn exchanges_evict_in_pairs() {
        let mut s = ChatSession {
            session_id: "x".into(),
            created_at: at(0),
            last_feature: None,
            turns: vec![],
            repo: repo(),
            pack: None,
        };
        for i in 0..30 {
            s.push_exchange(turn(Role::User, &format!("q{i}")), turn(Role::Assistant, &format!("a{i}")), 40);
        }
        assert_eq!(s.turns.len(), 40);
        assert_eq!(s.turns[0].text, "q10");
        assert_eq!(s.turns[39].text, "a29");
    }
}
