//! Event-sourced annotation session.
//!
//! A [`Session`] owns every piece of mutable state for one annotator and
//! records each transition as an [`Event`]. The log is append-only and the
//! only inputs it needs from outside are the human judgments; replaying
//! those against the original items, similarities and config rebuilds the
//! exact same state, ratings included.
//!
//! The session always sits either on a pending human request or on
//! completion: creation and every accepted judgment advance through any
//! auto-resolved comparisons straight away.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preorder::{run_preorder, EloInitConfig, ItemRecord, PreorderResult, SimilarityTable};
use crate::rating::{
    current_threshold, EloState, Outcome, PriorityWeights, ThresholdConfig, ThresholdState,
    DEFAULT_K_FACTOR,
};
use crate::sorter::{ComparisonRequest, Route, SortContext, SortEvent, SorterState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub elo_init: EloInitConfig,
    #[serde(default = "default_k")]
    pub k_factor: f64,
    #[serde(default)]
    pub threshold: ThresholdConfig,
    #[serde(default)]
    pub weights: PriorityWeights,
}

fn default_k() -> f64 {
    DEFAULT_K_FACTOR
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            elo_init: EloInitConfig::default(),
            k_factor: DEFAULT_K_FACTOR,
            threshold: ThresholdConfig::default(),
            weights: PriorityWeights::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.elo_init.validate()?;
        self.threshold.validate()?;
        if !(self.k_factor > 0.0) || !self.k_factor.is_finite() {
            return Err(Error::Input("k_factor must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// A comparison as it appears in the log and on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: u64,
    pub left: String,
    pub right: String,
    pub route: Route,
    pub theta: f64,
    pub uncertainty: f64,
    pub priority: f64,
    pub p_left: f64,
    pub cross_bucket: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated {
        items: u64,
        comparisons_budget: u64,
    },
    RequestIssued {
        request: RequestRecord,
    },
    JudgmentReceived {
        request_id: u64,
        outcome: Outcome,
        source: Route,
        #[serde(default)]
        agreed: Option<bool>,
        #[serde(default)]
        timestamp_ms: Option<u64>,
    },
    ThresholdCycled {
        cycle: u64,
        accuracy: f64,
        theta: f64,
    },
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub status: SessionStatus,
    pub items: u64,
    pub human: u64,
    pub auto: u64,
    pub comparisons_done: u64,
    pub comparisons_budget: u64,
    pub progress: f64,
    pub theta: f64,
    pub accuracy: f64,
    pub cycle: u64,
    pub pending_request_id: Option<u64>,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub rank: u64,
    pub item_id: String,
    pub display_ref: String,
    pub rating: f64,
    pub bucket: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub config: SessionConfig,
    /// Items in ascending id order; every index in the engine refers here.
    pub items: Vec<ItemRecord>,
    pub preorder: Vec<PreorderResult>,
    pub elo: EloState,
    pub threshold: ThresholdState,
    pub sorter: SorterState,
    pub events: Vec<Event>,
}

impl Session {
    pub fn create(items: &[ItemRecord], sims: &SimilarityTable, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        if items.is_empty() {
            return Err(Error::Input("a session needs at least one item".into()));
        }
        let preorder = run_preorder(items, sims, &config.elo_init)?;
        let mut sorted: Vec<ItemRecord> = items.to_vec();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let elo = EloState::from_preorder(&preorder, config.k_factor);
        let threshold = ThresholdState::for_items(config.threshold.clone(), sorted.len());
        let sorter = SorterState::start(&preorder)?;
        let mut session = Self {
            config,
            items: sorted,
            preorder,
            elo,
            threshold,
            sorter,
            events: Vec::new(),
        };
        session.push(EventKind::SessionCreated {
            items: session.items.len() as u64,
            comparisons_budget: session.threshold.comparisons_total_estimate,
        });
        session.advance()?;
        Ok(session)
    }

    /// Rebuilds a session from its inputs and a previously recorded log.
    /// The recorded log must be a prefix of the regenerated one.
    pub fn replay(
        items: &[ItemRecord],
        sims: &SimilarityTable,
        config: SessionConfig,
        log: &[Event],
    ) -> Result<Self> {
        let mut session = Self::create(items, sims, config)?;
        for ev in log {
            if let EventKind::JudgmentReceived {
                request_id,
                outcome,
                source: Route::Human,
                timestamp_ms,
                ..
            } = ev.kind
            {
                session.submit(request_id, outcome, timestamp_ms).map_err(|e| Error::ReplayDivergence {
                    seq: ev.seq,
                    detail: format!("{e}"),
                })?;
            }
        }
        if log.len() > session.events.len() {
            return Err(Error::ReplayDivergence {
                seq: session.events.len() as u64,
                detail: format!(
                    "log has {} events but replay produced {}",
                    log.len(),
                    session.events.len()
                ),
            });
        }
        if let Some((recorded, _)) = log.iter().zip(&session.events).find(|(a, b)| a != b) {
            return Err(Error::ReplayDivergence {
                seq: recorded.seq,
                detail: "recorded event differs from regenerated event".into(),
            });
        }
        Ok(session)
    }

    fn push(&mut self, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(Event { seq, kind });
    }

    fn request_record(&self, req: &ComparisonRequest) -> RequestRecord {
        RequestRecord {
            request_id: req.request_id,
            left: self.items[req.left].id.clone(),
            right: self.items[req.right].id.clone(),
            route: req.route,
            theta: req.theta,
            uncertainty: req.assessment.uncertainty,
            priority: req.assessment.priority,
            p_left: req.assessment.p_left,
            cross_bucket: req.assessment.cross_bucket,
        }
    }

    fn record(&mut self, sort_events: Vec<SortEvent>, timestamp_ms: Option<u64>) {
        for ev in sort_events {
            let kind = match ev {
                SortEvent::Issued(req) => EventKind::RequestIssued {
                    request: self.request_record(&req),
                },
                SortEvent::Resolved {
                    request_id,
                    outcome,
                    route,
                    agreed,
                } => EventKind::JudgmentReceived {
                    request_id,
                    outcome,
                    source: route,
                    agreed,
                    timestamp_ms: if route == Route::Human { timestamp_ms } else { None },
                },
                SortEvent::ThresholdCycled { cycle, accuracy, theta } => {
                    EventKind::ThresholdCycled { cycle, accuracy, theta }
                }
                SortEvent::Completed => EventKind::Completed,
            };
            self.push(kind);
        }
    }

    fn advance(&mut self) -> Result<()> {
        if self.sorter.pending.is_some() {
            return Ok(());
        }
        let mut out = Vec::new();
        let mut ctx = SortContext {
            elo: &mut self.elo,
            pre: &self.preorder,
            threshold: &mut self.threshold,
            weights: &self.config.weights,
        };
        let res = self.sorter.next(&mut ctx, &mut out);
        self.record(out, None);
        res.map(|_| ())
    }

    pub fn status(&self) -> SessionStatus {
        if self.sorter.completed {
            SessionStatus::Completed
        } else {
            SessionStatus::Active
        }
    }

    pub fn pending(&self) -> Option<&ComparisonRequest> {
        self.sorter.pending()
    }

    pub fn pending_record(&self) -> Option<RequestRecord> {
        self.pending().map(|r| self.request_record(r))
    }

    /// The event a judgment would append, without applying it. Lets a
    /// store persist the judgment before the state changes.
    pub fn preview_judgment(&self, request_id: u64, outcome: Outcome, timestamp_ms: Option<u64>) -> Result<Event> {
        match self.pending() {
            Some(p) if p.request_id == request_id => Ok(Event {
                seq: self.events.len() as u64,
                kind: EventKind::JudgmentReceived {
                    request_id,
                    outcome,
                    source: Route::Human,
                    agreed: Some(crate::sorter::agrees(p.assessment.p_left, outcome)),
                    timestamp_ms,
                },
            }),
            other => Err(Error::StaleRequest {
                expected: other.map(|p| p.request_id),
                got: request_id,
            }),
        }
    }

    /// Applies a human judgment to the pending request and advances to the
    /// next human request or completion.
    pub fn submit(&mut self, request_id: u64, outcome: Outcome, timestamp_ms: Option<u64>) -> Result<()> {
        let mut out = Vec::new();
        let mut ctx = SortContext {
            elo: &mut self.elo,
            pre: &self.preorder,
            threshold: &mut self.threshold,
            weights: &self.config.weights,
        };
        self.sorter.submit(request_id, outcome, &mut ctx, &mut out)?;
        self.record(out, timestamp_ms);
        self.advance()
    }

    pub fn stats(&self) -> SessionStats {
        let done = self.threshold.comparisons_done;
        let budget = self.threshold.comparisons_total_estimate;
        SessionStats {
            status: self.status(),
            items: self.items.len() as u64,
            human: self.sorter.stats.human,
            auto: self.sorter.stats.auto,
            comparisons_done: done,
            comparisons_budget: budget,
            progress: if self.status() == SessionStatus::Completed || budget == 0 {
                1.0
            } else {
                (done as f64 / budget as f64).min(1.0)
            },
            theta: current_threshold(&self.threshold),
            accuracy: self.threshold.accuracy,
            cycle: self.threshold.cycle,
            pending_request_id: self.pending().map(|p| p.request_id),
            events: self.events.len() as u64,
        }
    }

    /// Final ranking, best first.
    pub fn ranking(&self) -> Result<Vec<RankedItem>> {
        let order = self.sorter.ranking()?;
        Ok(order
            .iter()
            .enumerate()
            .map(|(pos, &i)| RankedItem {
                rank: pos as u64 + 1,
                item_id: self.items[i].id.clone(),
                display_ref: self.items[i].display_ref.clone(),
                rating: self.elo.ratings[i],
                bucket: self.preorder[i].bucket,
            })
            .collect())
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.binary_search_by(|it| it.id.as_str().cmp(id)).ok()
    }
}
