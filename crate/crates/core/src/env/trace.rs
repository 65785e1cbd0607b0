//! Trace-driven demand: every logged request becomes its own user.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Environment, SlotDraw};
use crate::context::ContextVector;
use crate::error::Result;
use crate::seed::unit_hash;
use crate::types::{FileId, Request, ServiceType, SlotContext, UserContext};

pub const MAX_TRACE_RATING: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRequest {
    pub user_id: u32,
    pub context: ContextVector,
    pub file: FileId,
    pub rating: u8,
    /// Position within the slot, in `[0, 1)`.
    pub arrival: f64,
}

/// Requests grouped into consecutive slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceModel {
    pub library_size: usize,
    pub slots: Vec<Vec<TraceRequest>>,
}

impl TraceModel {
    pub fn horizon(&self) -> u64 {
        self.slots.len() as u64
    }

    pub fn total_requests(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }
}

/// Maps user ids to service types: a seeded-hash fraction of the users is
/// prioritized (type 1), the rest are type 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceAssignment {
    pub priority_fraction: f64,
    pub seed: u64,
}

impl ServiceAssignment {
    pub const NONE: ServiceAssignment = ServiceAssignment {
        priority_fraction: 0.0,
        seed: 0,
    };

    pub fn service(&self, user_id: u32) -> ServiceType {
        if unit_hash(self.seed, user_id as u64) < self.priority_fraction {
            ServiceType(1)
        } else {
            ServiceType(2)
        }
    }
}

pub struct TraceEnv {
    trace: Arc<TraceModel>,
    services: ServiceAssignment,
    /// Learn from rating-weighted demand instead of request counts.
    rated: bool,
}

impl TraceEnv {
    pub fn new(trace: Arc<TraceModel>, services: ServiceAssignment, rated: bool) -> Self {
        Self {
            trace,
            services,
            rated,
        }
    }

    pub fn trace(&self) -> &Arc<TraceModel> {
        &self.trace
    }

    pub fn user(&self, r: &TraceRequest) -> UserContext {
        UserContext {
            context: r.context.clone(),
            service: self.services.service(r.user_id),
        }
    }

    pub fn request(&self, r: &TraceRequest) -> Request {
        Request {
            file: r.file,
            count: 1.0,
            value: if self.rated { r.rating as f64 } else { 1.0 },
            arrival: r.arrival,
        }
    }
}

impl Environment for TraceEnv {
    fn library_size(&self) -> usize {
        self.trace.library_size
    }

    fn horizon(&self) -> u64 {
        self.trace.horizon()
    }

    fn value_bound(&self) -> f64 {
        if self.rated {
            MAX_TRACE_RATING
        } else {
            1.0
        }
    }

    fn draw(&mut self, t: u64) -> Result<SlotDraw> {
        let slot = &self.trace.slots[(t - 1) as usize];
        let users = slot.iter().map(|r| self.user(r)).collect();
        let requests = slot.iter().map(|r| vec![self.request(r)]).collect();
        Ok(SlotDraw::new(SlotContext::new(users), requests))
    }
}
