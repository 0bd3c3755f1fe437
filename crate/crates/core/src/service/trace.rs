//! Per-request traces kept in a bounded in-memory ring buffer.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::intent::{IntentClass, PredictionMethod};
use crate::lang::LanguageTag;
use crate::providers::CallCounts;
use crate::retrieval::{CascadeTrace, Stage, ThresholdOn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSummary {
    pub label: IntentClass,
    pub method: PredictionMethod,
    pub confidence: f64,
    pub top_score: Option<f64>,
    pub candidate_classes: Vec<IntentClass>,
}

/// Parameters in force for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedParams {
    pub k: usize,
    pub k_vote: usize,
    pub intent_gate: f64,
    pub top_n: usize,
    pub threshold: f64,
    pub threshold_on: ThresholdOn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub name: String,
    pub elapsed_us: u64,
}

/// What `GET /v1/trace/{id}` returns: the cascade trace plus the request
/// context around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestTrace {
    #[serde(flatten)]
    pub cascade: CascadeTrace,
    pub received_at: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub language: LanguageTag,
    pub query_pivot: String,
    pub stage: Stage,
    pub intent: IntentSummary,
    pub params: ObservedParams,
    /// Preliminary, retrieval and post-processing, in execution order.
    pub phases: Vec<PhaseRecord>,
    /// Every capability call of the request, including those outside the cascade.
    pub request_call_counts: CallCounts,
    pub fallbacks: Vec<String>,
}

#[derive(Debug)]
pub struct TraceStore {
    capacity: usize,
    order: VecDeque<String>,
    by_id: HashMap<String, Arc<RequestTrace>>,
}

impl TraceStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            order: VecDeque::with_capacity(capacity.min(4096)),
            by_id: HashMap::new(),
        }
    }

    pub fn insert(&mut self, trace: RequestTrace) {
        if self.capacity == 0 {
            return;
        }
        let id = trace.cascade.trace_id.clone();
        if self.by_id.insert(id.clone(), Arc::new(trace)).is_none() {
            self.order.push_back(id);
        }
        while self.order.len() > self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.by_id.remove(&old);
            }
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<RequestTrace>> {
        self.by_id.get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}
