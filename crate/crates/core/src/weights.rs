//! Service and file weights used for service differentiation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FileId, ServiceType};

/// Hit weights `v_s` per service type and priorities `w_f` per file.
///
/// Absent entries weigh 1, so the default value is the no-differentiation case.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    service_weights: BTreeMap<ServiceType, f64>,
    file_weights: BTreeMap<FileId, f64>,
}

impl WeightConfig {
    pub fn uniform() -> Self {
        Self::default()
    }

    pub fn new(
        service_weights: BTreeMap<ServiceType, f64>,
        file_weights: BTreeMap<FileId, f64>,
    ) -> Result<Self> {
        for (s, &v) in &service_weights {
            check_weight(v, || format!("service type {}", s.0))?;
        }
        for (f, &w) in &file_weights {
            check_weight(w, || format!("file {f}"))?;
        }
        Ok(Self {
            service_weights,
            file_weights,
        })
    }

    pub fn with_service(mut self, s: ServiceType, v: f64) -> Result<Self> {
        check_weight(v, || format!("service type {}", s.0))?;
        self.service_weights.insert(s, v);
        Ok(self)
    }

    pub fn with_file(mut self, f: FileId, w: f64) -> Result<Self> {
        check_weight(w, || format!("file {f}"))?;
        self.file_weights.insert(f, w);
        Ok(self)
    }

    #[inline]
    pub fn service(&self, s: ServiceType) -> f64 {
        self.service_weights.get(&s).copied().unwrap_or(1.0)
    }

    #[inline]
    pub fn file(&self, f: FileId) -> f64 {
        self.file_weights.get(&f).copied().unwrap_or(1.0)
    }

    pub fn has_file_weights(&self) -> bool {
        !self.file_weights.is_empty()
    }
}

fn check_weight(v: f64, what: impl FnOnce() -> String) -> Result<()> {
    if v.is_finite() && v >= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "weight {v} for {} must be >= 1",
            what()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_weights_default_to_one() {
        let w = WeightConfig::uniform();
        assert_eq!(w.service(ServiceType(3)), 1.0);
        assert_eq!(w.file(FileId(9)), 1.0);
    }

    #[test]
    fn weights_below_one_are_rejected() {
        assert!(WeightConfig::uniform()
            .with_service(ServiceType(1), 0.5)
            .is_err());
        assert!(WeightConfig::uniform()
            .with_file(FileId(1), f64::NAN)
            .is_err());
        let w = WeightConfig::uniform()
            .with_service(ServiceType(1), 5.0)
            .unwrap();
        assert_eq!(w.service(ServiceType(1)), 5.0);
    }
}
