//! Aggregating cache hits of one slot into multicast transmissions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FileId, ServiceType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticastConfig {
    /// Number of equal intervals a slot is divided into.
    pub intervals: u32,
    /// Files whose estimated demand for the slot is below this are unicast.
    pub unicast_threshold: f64,
    /// Service types always served by unicast.
    pub priority_services: BTreeSet<ServiceType>,
}

impl Default for MulticastConfig {
    fn default() -> Self {
        Self {
            intervals: 6,
            unicast_threshold: 0.5,
            priority_services: BTreeSet::new(),
        }
    }
}

/// A request served from the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedRequest {
    pub file: FileId,
    /// Position within the slot, in `[0, 1)`.
    pub arrival: f64,
    pub service: ServiceType,
    pub count: u64,
    /// Estimated number of requests for `file` in this slot.
    pub estimated_demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransmissionKind {
    Unicast,
    Multicast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub interval: u32,
    pub file: FileId,
    pub kind: TransmissionKind,
    /// Requests served by this transmission.
    pub served: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticastOutcome {
    pub schedule: Vec<Transmission>,
    /// Transmissions needed if every request were served by unicast.
    pub unicast_equivalent: u64,
    pub transmissions: u64,
    pub savings: u64,
}

pub fn multicast_aggregate(
    requests: &[CachedRequest],
    cfg: &MulticastConfig,
) -> Result<MulticastOutcome> {
    if cfg.intervals == 0 {
        return Err(Error::Config(
            "multicast needs at least one interval".into(),
        ));
    }
    let mut schedule = Vec::new();
    let mut pooled: BTreeMap<(u32, FileId), u64> = BTreeMap::new();
    let mut unicast_equivalent = 0;
    for r in requests {
        if r.count == 0 {
            continue;
        }
        unicast_equivalent += r.count;
        let interval = ((r.arrival * cfg.intervals as f64).floor() as u32).min(cfg.intervals - 1);
        if cfg.priority_services.contains(&r.service) || r.estimated_demand < cfg.unicast_threshold
        {
            for _ in 0..r.count {
                schedule.push(Transmission {
                    interval,
                    file: r.file,
                    kind: TransmissionKind::Unicast,
                    served: 1,
                });
            }
        } else {
            *pooled.entry((interval, r.file)).or_default() += r.count;
        }
    }
    for ((interval, file), served) in pooled {
        schedule.push(Transmission {
            interval,
            file,
            kind: TransmissionKind::Multicast,
            served,
        });
    }
    schedule.sort_by_key(|t| (t.interval, t.file, t.kind == TransmissionKind::Multicast));
    let transmissions = schedule.len() as u64;
    Ok(MulticastOutcome {
        schedule,
        unicast_equivalent,
        transmissions,
        savings: unicast_equivalent - transmissions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(file: u32, arrival: f64, service: u16) -> CachedRequest {
        CachedRequest {
            file: FileId(file),
            arrival,
            service: ServiceType(service),
            count: 1,
            estimated_demand: 10.0,
        }
    }

    fn cfg(intervals: u32, threshold: f64) -> MulticastConfig {
        MulticastConfig {
            intervals,
            unicast_threshold: threshold,
            priority_services: [ServiceType(1)].into_iter().collect(),
        }
    }

    #[test]
    fn single_interval_collapses_same_file() {
        let reqs: Vec<_> = (0..5).map(|i| req(3, i as f64 / 5.0, 2)).collect();
        let out = multicast_aggregate(&reqs, &cfg(1, 0.0)).unwrap();
        assert_eq!(out.transmissions, 1);
        assert_eq!(out.savings, 4);
    }

    #[test]
    fn priority_requests_are_unicast() {
        let reqs: Vec<_> = (0..5).map(|i| req(3, i as f64 / 5.0, 1)).collect();
        let out = multicast_aggregate(&reqs, &cfg(1, 0.0)).unwrap();
        assert_eq!(out.savings, 0);
        assert!(out
            .schedule
            .iter()
            .all(|t| t.kind == TransmissionKind::Unicast));
    }

    #[test]
    fn two_intervals_split_three_and_two() {
        let arrivals = [0.1, 0.2, 0.3, 0.6, 0.9];
        let reqs: Vec<_> = arrivals.iter().map(|&a| req(7, a, 2)).collect();
        let out = multicast_aggregate(&reqs, &cfg(2, 0.0)).unwrap();
        // Brute-force grouping by (interval, file).
        let groups: BTreeSet<(u32, u32)> = arrivals
            .iter()
            .map(|a| ((a * 2.0f64).floor() as u32, 7))
            .collect();
        assert_eq!(out.transmissions, groups.len() as u64);
        assert_eq!(out.transmissions, 2);
        assert_eq!(out.savings, 3);
    }

    #[test]
    fn low_estimated_demand_is_unicast() {
        let mut reqs: Vec<_> = (0..3).map(|_| req(1, 0.1, 2)).collect();
        for r in &mut reqs {
            r.estimated_demand = 0.1;
        }
        let out = multicast_aggregate(&reqs, &cfg(1, 0.5)).unwrap();
        assert_eq!(out.transmissions, 3);
        assert!(multicast_aggregate(&reqs, &cfg(0, 0.5)).is_err());
    }
}
