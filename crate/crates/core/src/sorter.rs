//! Resumable MergeSort whose comparisons are routed either to a human or
//! resolved automatically from the live Elo ratings.
//!
//! [`MergeSchedule`] is the bare top-down merge machine. It knows nothing
//! about ratings: callers ask for the current pair and feed back which side
//! goes first. The merge plan depends only on `n`, so the machine is fully
//! described by the plan index, the two run cursors and the partial output
//! and can be paused between any two comparisons.
//!
//! [`SorterState`] drives the machine with the uncertainty routing rule.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preorder::PreorderResult;
use crate::rating::{
    assess_pair, current_threshold, elo_update, EloState, Outcome, PairAssessment, PriorityWeights,
    ThresholdState,
};

/// One merge of `seq[lo..mid]` with `seq[mid..hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeFrame {
    pub lo: usize,
    pub mid: usize,
    pub hi: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeSchedule {
    seq: Vec<usize>,
    plan: Vec<MergeFrame>,
    frame: usize,
    left: usize,
    right: usize,
    out: Vec<usize>,
    comparisons: u64,
}

fn build_plan(lo: usize, hi: usize, plan: &mut Vec<MergeFrame>) {
    if hi - lo < 2 {
        return;
    }
    let mid = lo + (hi - lo) / 2;
    build_plan(lo, mid, plan);
    build_plan(mid, hi, plan);
    plan.push(MergeFrame { lo, mid, hi });
}

impl MergeSchedule {
    pub fn new(initial: Vec<usize>) -> Self {
        let mut plan = Vec::new();
        build_plan(0, initial.len(), &mut plan);
        let (left, right) = plan.first().map_or((0, 0), |f| (f.lo, f.mid));
        Self {
            seq: initial,
            plan,
            frame: 0,
            left,
            right,
            out: Vec::new(),
            comparisons: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.frame >= self.plan.len()
    }

    /// Items to compare next, as `(left, right)`.
    pub fn current_pair(&self) -> Option<(usize, usize)> {
        if self.is_done() {
            return None;
        }
        Some((self.seq[self.left], self.seq[self.right]))
    }

    /// Feeds back the current comparison. Returns `true` when this answer
    /// completed a merge.
    pub fn resolve(&mut self, take_left: bool) -> Result<bool> {
        let Some(&MergeFrame { lo, mid, hi }) = self.plan.get(self.frame) else {
            return Err(Error::State("merge schedule is already exhausted".into()));
        };
        self.comparisons += 1;
        if take_left {
            self.out.push(self.seq[self.left]);
            self.left += 1;
        } else {
            self.out.push(self.seq[self.right]);
            self.right += 1;
        }
        if self.left < mid && self.right < hi {
            return Ok(false);
        }
        self.out.extend_from_slice(&self.seq[self.left..mid]);
        self.out.extend_from_slice(&self.seq[self.right..hi]);
        self.seq[lo..hi].copy_from_slice(&self.out);
        self.out.clear();
        self.frame += 1;
        if let Some(next) = self.plan.get(self.frame) {
            self.left = next.lo;
            self.right = next.mid;
        }
        Ok(true)
    }

    /// Working array; the final ranking once the schedule is exhausted.
    pub fn sequence(&self) -> &[usize] {
        &self.seq
    }

    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    pub fn plan(&self) -> &[MergeFrame] {
        &self.plan
    }
}

/// Worst-case comparison count of top-down MergeSort:
/// `n ceil(log2 n) - 2^ceil(log2 n) + 1`.
pub fn mergesort_worst_case(n: usize) -> u64 {
    if n < 2 {
        return 0;
    }
    let levels = usize::BITS - (n - 1).leading_zeros();
    n as u64 * levels as u64 - (1u64 << levels) + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Human,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRequest {
    pub request_id: u64,
    pub left: usize,
    pub right: usize,
    pub assessment: PairAssessment,
    pub route: Route,
    pub theta: f64,
}

/// Routing rule: ties go to the human.
pub fn route_for(uncertainty: f64, theta: f64) -> Route {
    if uncertainty >= theta {
        Route::Human
    } else {
        Route::Auto
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortStats {
    pub human: u64,
    pub auto: u64,
}

impl SortStats {
    pub fn total(&self) -> u64 {
        self.human + self.auto
    }
}

/// Things that happened while driving the sorter, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SortEvent {
    Issued(ComparisonRequest),
    Resolved {
        request_id: u64,
        outcome: Outcome,
        route: Route,
        /// Whether a human answer matched the Elo favourite at query time.
        agreed: Option<bool>,
    },
    ThresholdCycled {
        cycle: u64,
        accuracy: f64,
        theta: f64,
    },
    Completed,
}

/// Everything a routing decision reads or mutates besides the sorter
/// itself.
pub struct SortContext<'a> {
    pub elo: &'a mut EloState,
    pub pre: &'a [PreorderResult],
    pub threshold: &'a mut ThresholdState,
    pub weights: &'a PriorityWeights,
}

pub enum Step {
    Human(ComparisonRequest),
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SorterState {
    pub schedule: MergeSchedule,
    pub pending: Option<ComparisonRequest>,
    pub next_request_id: u64,
    pub stats: SortStats,
    pub completed: bool,
}

/// Items ordered by initial rating, highest first; ties by id.
pub fn initial_order(pre: &[PreorderResult]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pre.len()).collect();
    order.sort_by(|&a, &b| {
        pre[b]
            .initial_rating
            .total_cmp(&pre[a].initial_rating)
            .then_with(|| pre[a].item_id.cmp(&pre[b].item_id))
    });
    order
}

/// Whether `outcome` matches the favourite implied by `p_left`.
pub fn agrees(p_left: f64, outcome: Outcome) -> bool {
    predicted(p_left) == outcome
}

/// Prediction the ratings make for `left` vs `right`.
fn predicted(p_left: f64) -> Outcome {
    if p_left > 0.5 {
        Outcome::LeftFirst
    } else if p_left < 0.5 {
        Outcome::RightFirst
    } else {
        Outcome::Equal
    }
}

impl SorterState {
    pub fn start(pre: &[PreorderResult]) -> Result<Self> {
        if pre.is_empty() {
            return Err(Error::Input("cannot sort an empty item set".into()));
        }
        Ok(Self {
            schedule: MergeSchedule::new(initial_order(pre)),
            pending: None,
            next_request_id: 1,
            stats: SortStats::default(),
            completed: false,
        })
    }

    pub fn is_done(&self) -> bool {
        self.schedule.is_done()
    }

    pub fn pending(&self) -> Option<&ComparisonRequest> {
        self.pending.as_ref()
    }

    /// Advances through auto-resolved comparisons until a comparison needs
    /// a human or the schedule is exhausted.
    pub fn next(&mut self, ctx: &mut SortContext<'_>, events: &mut Vec<SortEvent>) -> Result<Step> {
        if let Some(p) = &self.pending {
            return Err(Error::State(format!("request {} is still pending", p.request_id)));
        }
        while let Some((left, right)) = self.schedule.current_pair() {
            let assessment = assess_pair(left, right, ctx.elo, ctx.pre, ctx.weights)?;
            let theta = current_threshold(ctx.threshold);
            let route = route_for(assessment.uncertainty, theta);
            let req = ComparisonRequest {
                request_id: self.next_request_id,
                left,
                right,
                assessment,
                route,
                theta,
            };
            self.next_request_id += 1;
            events.push(SortEvent::Issued(req.clone()));
            match route {
                Route::Human => {
                    self.pending = Some(req.clone());
                    return Ok(Step::Human(req));
                }
                Route::Auto => {
                    let (r_l, r_r) = (ctx.elo.ratings[left], ctx.elo.ratings[right]);
                    let outcome = if r_l >= r_r { Outcome::LeftFirst } else { Outcome::RightFirst };
                    self.apply(&req, outcome, ctx, events)?;
                }
            }
        }
        self.mark_completed(events);
        Ok(Step::Done)
    }

    /// Emits the completion event once, when the schedule is exhausted.
    pub fn mark_completed(&mut self, events: &mut Vec<SortEvent>) {
        if self.is_done() && !self.completed {
            self.completed = true;
            events.push(SortEvent::Completed);
        }
    }

    /// Applies a human answer to the pending request.
    pub fn submit(
        &mut self,
        request_id: u64,
        outcome: Outcome,
        ctx: &mut SortContext<'_>,
        events: &mut Vec<SortEvent>,
    ) -> Result<()> {
        let req = match &self.pending {
            Some(p) if p.request_id == request_id => p.clone(),
            other => {
                return Err(Error::StaleRequest {
                    expected: other.as_ref().map(|p| p.request_id),
                    got: request_id,
                })
            }
        };
        self.apply(&req, outcome, ctx, events)?;
        self.pending = None;
        Ok(())
    }

    fn apply(
        &mut self,
        req: &ComparisonRequest,
        outcome: Outcome,
        ctx: &mut SortContext<'_>,
        events: &mut Vec<SortEvent>,
    ) -> Result<()> {
        let agreed = match req.route {
            Route::Human => {
                let agreed = agrees(req.assessment.p_left, outcome);
                elo_update(ctx.elo, req.left, req.right, outcome)?;
                ctx.threshold.record_human(agreed);
                self.stats.human += 1;
                Some(agreed)
            }
            Route::Auto => {
                self.stats.auto += 1;
                None
            }
        };
        let merged = self.schedule.resolve(outcome.takes_left())?;
        ctx.threshold.comparisons_done += 1;
        events.push(SortEvent::Resolved {
            request_id: req.request_id,
            outcome,
            route: req.route,
            agreed,
        });
        if merged {
            ctx.threshold.record_merge();
        }
        if ctx.threshold.maybe_cycle() {
            events.push(SortEvent::ThresholdCycled {
                cycle: ctx.threshold.cycle,
                accuracy: ctx.threshold.accuracy,
                theta: current_threshold(ctx.threshold),
            });
        }
        Ok(())
    }

    /// Final order, best first.
    pub fn ranking(&self) -> Result<&[usize]> {
        if !self.is_done() {
            return Err(Error::State("sorting is not finished".into()));
        }
        Ok(self.schedule.sequence())
    }
}
