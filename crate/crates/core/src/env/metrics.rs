use serde::{Deserialize, Serialize};

/// Per-slot outcomes of one simulated run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub requests: Vec<f64>,
    pub hits: Vec<f64>,
    pub weighted_hits: Vec<f64>,
    pub misses: Vec<f64>,
    /// Expected regret per slot, when the true demand functions are known.
    pub regret: Option<Vec<f64>>,
    /// Regret on the realized demands of the slot.
    pub realized_regret: Option<Vec<f64>>,
    /// Transmissions saved by multicast aggregation, when enabled.
    pub multicast_saved: Option<Vec<f64>>,
    /// Number of files cached for exploration per slot.
    pub explored: Vec<u32>,
}

impl MetricsSeries {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn total_hits(&self) -> f64 {
        self.hits.iter().sum()
    }

    pub fn total_weighted_hits(&self) -> f64 {
        self.weighted_hits.iter().sum()
    }

    pub fn total_requests(&self) -> f64 {
        self.requests.iter().sum()
    }

    pub fn total_misses(&self) -> f64 {
        self.misses.iter().sum()
    }

    /// `hits / (hits + misses)`, or 0 when nothing was requested.
    pub fn cache_efficiency(&self) -> f64 {
        efficiency(self.total_hits(), self.total_misses())
    }

    pub fn cumulative_hits(&self) -> Vec<f64> {
        cumulative(&self.hits)
    }

    pub fn cumulative_weighted_hits(&self) -> Vec<f64> {
        cumulative(&self.weighted_hits)
    }

    pub fn cumulative_regret(&self) -> Option<Vec<f64>> {
        self.regret.as_deref().map(cumulative)
    }

    pub fn cumulative_realized_regret(&self) -> Option<Vec<f64>> {
        self.realized_regret.as_deref().map(cumulative)
    }

    /// Adds `other` slot by slot; both series must cover the same slots.
    pub fn add(&mut self, other: &MetricsSeries) {
        fn add_vec(a: &mut Vec<f64>, b: &[f64]) {
            if a.is_empty() {
                a.extend_from_slice(b);
            } else {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
        fn add_opt(a: &mut Option<Vec<f64>>, b: &Option<Vec<f64>>) {
            if let Some(b) = b {
                add_vec(a.get_or_insert_with(Vec::new), b);
            }
        }
        add_vec(&mut self.requests, &other.requests);
        add_vec(&mut self.hits, &other.hits);
        add_vec(&mut self.weighted_hits, &other.weighted_hits);
        add_vec(&mut self.misses, &other.misses);
        add_opt(&mut self.regret, &other.regret);
        add_opt(&mut self.realized_regret, &other.realized_regret);
        add_opt(&mut self.multicast_saved, &other.multicast_saved);
        if self.explored.is_empty() {
            self.explored = other.explored.clone();
        } else {
            for (x, y) in self.explored.iter_mut().zip(&other.explored) {
                *x += y;
            }
        }
    }
}

pub fn efficiency(hits: f64, misses: f64) -> f64 {
    let total = hits + misses;
    if total > 0.0 {
        hits / total
    } else {
        0.0
    }
}

pub fn cumulative(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn efficiency_formula() {
        assert_eq!(efficiency(3.0, 1.0), 0.75);
        assert_eq!(efficiency(0.0, 0.0), 0.0);
    }

    #[test]
    fn cumulative_is_running_sum() {
        assert_eq!(cumulative(&[1.0, 0.0, 2.5]), vec![1.0, 1.0, 3.5]);
    }
}
