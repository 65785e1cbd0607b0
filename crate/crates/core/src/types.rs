//! Identifiers and per-slot user descriptions shared by every policy.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::context::ContextVector;

/// Index of a file in the library, `0..|F|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileId(pub u32);

impl FileId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// Service type of a user; each type carries a hit weight `v_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServiceType(pub u16);

/// One connected user as seen by a policy at placement time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub context: ContextVector,
    pub service: ServiceType,
}

/// Contexts and service types of all users connected at the start of a slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotContext {
    pub users: Vec<UserContext>,
}

impl SlotContext {
    pub fn new(users: Vec<UserContext>) -> Self {
        Self { users }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// A user's realized demand for one file within a slot.
///
/// `count` is the number of requests, which hit/miss accounting uses.
/// `value` is the learning signal; it equals `count` unless demands are
/// rating-weighted. `arrival` is the position of the first request within
/// the slot, as a fraction in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub file: FileId,
    pub count: f64,
    pub value: f64,
    pub arrival: f64,
}

impl Request {
    pub fn plain(file: FileId, count: f64) -> Self {
        Self {
            file,
            count,
            value: count,
            arrival: 0.0,
        }
    }
}
