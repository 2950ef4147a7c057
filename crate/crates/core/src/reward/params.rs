use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full domain `[min, max]` of a parameter plus the currently active sub-domain.
///
/// The active sub-domain is narrowed temporarily during direction-constrained
/// adjustment; `restore` widens it back to the full domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    min: f64,
    max: f64,
    active_min: f64,
    active_max: f64,
}

impl ParamDomain {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "domain [{min}, {max}] must be finite"
            )));
        }
        if min >= max {
            return Err(Error::InvalidSpec(format!(
                "degenerate domain [{min}, {max}]"
            )));
        }
        Ok(Self {
            min,
            max,
            active_min: min,
            active_max: max,
        })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn active_min(&self) -> f64 {
        self.active_min
    }

    pub fn active_max(&self) -> f64 {
        self.active_max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn contains_active(&self, v: f64) -> bool {
        v >= self.active_min && v <= self.active_max
    }

    pub fn is_restricted(&self) -> bool {
        self.active_min != self.min || self.active_max != self.max
    }

    /// Restrict the active domain to `[lo, hi]`, which must lie inside the full domain.
    pub fn restrict(&mut self, lo: f64, hi: f64) -> Result<()> {
        if !(lo <= hi && lo >= self.min && hi <= self.max) {
            return Err(Error::Config(format!(
                "cannot restrict [{}, {}] to [{lo}, {hi}]",
                self.min, self.max
            )));
        }
        self.active_min = lo;
        self.active_max = hi;
        Ok(())
    }

    /// Active domain becomes `(current, max]`.
    pub fn restrict_above(&mut self, current: f64) -> Result<()> {
        self.restrict(current.next_up().max(self.min), self.max)
    }

    /// Active domain becomes `[min, current)`.
    pub fn restrict_below(&mut self, current: f64) -> Result<()> {
        self.restrict(self.min, current.next_down().min(self.max))
    }

    pub fn restore(&mut self) {
        self.active_min = self.min;
        self.active_max = self.max;
    }

    pub fn clamp_active(&self, v: f64) -> f64 {
        v.clamp(self.active_min, self.active_max)
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

/// Named parameter values in a fixed order, each paired with its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    names: Arc<[String]>,
    values: Vec<f64>,
    domains: Vec<ParamDomain>,
}

impl ParamVector {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64, ParamDomain)>,
        S: Into<String>,
    {
        let mut names = Vec::new();
        let mut values = Vec::new();
        let mut domains = Vec::new();
        for (name, value, domain) in entries {
            let name = name.into();
            if name.is_empty() {
                return Err(Error::InvalidSpec("empty parameter name".into()));
            }
            if names.contains(&name) {
                return Err(Error::InvalidSpec(format!("duplicate parameter `{name}`")));
            }
            names.push(name);
            values.push(value);
            domains.push(domain);
        }
        let params = Self {
            names: names.into(),
            values,
            domains,
        };
        params.check_domain()?;
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domains(&self) -> &[ParamDomain] {
        &self.domains
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    pub fn domain(&self, name: &str) -> Option<&ParamDomain> {
        self.index_of(name).map(|i| &self.domains[i])
    }

    pub fn domain_mut(&mut self, name: &str) -> Option<&mut ParamDomain> {
        self.index_of(name).map(move |i| &mut self.domains[i])
    }

    /// Set a value, checking it against the active domain.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::ParamMismatch(format!("unknown parameter `{name}`")))?;
        let d = self.domains[i];
        if !d.contains_active(value) {
            return Err(Error::OutOfDomain {
                name: name.to_string(),
                value,
                min: d.active_min(),
                max: d.active_max(),
            });
        }
        self.values[i] = value;
        Ok(())
    }

    /// Same names and domains with new values. No domain check is made, so the
    /// result may be infeasible; see [`ParamVector::check_domain`].
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len(), "parameter count");
        Self {
            names: Arc::clone(&self.names),
            values,
            domains: self.domains.clone(),
        }
    }

    pub fn check_domain(&self) -> Result<()> {
        for ((name, &v), d) in self.names.iter().zip(&self.values).zip(&self.domains) {
            if !v.is_finite() || !d.contains_active(v) {
                return Err(Error::OutOfDomain {
                    name: name.clone(),
                    value: v,
                    min: d.active_min(),
                    max: d.active_max(),
                });
            }
        }
        Ok(())
    }

    pub fn in_active_domain(&self) -> bool {
        self.values
            .iter()
            .zip(&self.domains)
            .all(|(&v, d)| d.contains_active(v))
    }

    pub fn in_full_domain(&self) -> bool {
        self.values
            .iter()
            .zip(&self.domains)
            .all(|(&v, d)| d.contains(v))
    }

    pub fn restore_domains(&mut self) {
        self.domains.iter_mut().for_each(ParamDomain::restore);
    }

    pub fn domains_restored(&self) -> bool {
        self.domains.iter().all(|d| !d.is_restricted())
    }

    /// Euclidean distance in raw parameter units.
    pub fn distance(&self, other: &ParamVector) -> f64 {
        raw_distance(&self.values, &other.values)
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.names == other.names
    }
}

pub(crate) fn raw_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Map each parameter to the unit interval of its full domain.
pub fn normalize(params: &ParamVector) -> Result<Vec<f64>> {
    params
        .names
        .iter()
        .zip(&params.values)
        .zip(&params.domains)
        .map(|((name, &v), d)| {
            if d.contains(v) {
                Ok(d.normalize(v))
            } else {
                Err(Error::OutOfDomain {
                    name: name.clone(),
                    value: v,
                    min: d.min(),
                    max: d.max(),
                })
            }
        })
        .collect()
}

/// Inverse of [`normalize`] over the layout of `like`.
pub fn denormalize(like: &ParamVector, unit: &[f64]) -> ParamVector {
    let values = unit
        .iter()
        .zip(&like.domains)
        .map(|(&u, d)| d.denormalize(u))
        .collect();
    like.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, min: f64, max: f64) -> ParamVector {
        ParamVector::new([("w", value, ParamDomain::new(min, max).unwrap())]).unwrap()
    }

    #[test]
    fn normalize_midpoint_and_bounds() {
        assert_eq!(normalize(&single(5.0, 0.0, 10.0)).unwrap(), vec![0.5]);
        assert_eq!(normalize(&single(0.0, 0.0, 10.0)).unwrap(), vec![0.0]);
        assert_eq!(normalize(&single(10.0, 0.0, 10.0)).unwrap(), vec![1.0]);
    }

    #[test]
    fn round_trip_within_tolerance() {
        let p = single(3.7, -2.0, 8.0);
        let back = denormalize(&p, &normalize(&p).unwrap());
        assert!((back.values()[0] - 3.7).abs() < 1e-12);
    }

    #[test]
    fn degenerate_domain_rejected() {
        assert!(ParamDomain::new(1.0, 1.0).is_err());
        assert!(ParamDomain::new(2.0, 1.0).is_err());
        assert!(ParamDomain::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn restriction_is_strict_and_restorable() {
        let mut d = ParamDomain::new(0.0, 10.0).unwrap();
        d.restrict_above(2.0).unwrap();
        assert!(!d.contains_active(2.0));
        assert!(d.contains_active(2.0f64.next_up()));
        d.restore();
        assert!(!d.is_restricted());
        d.restrict_below(2.0).unwrap();
        assert!(!d.contains_active(2.0));
        assert!(d.contains_active(1.999));
        assert!(d.restrict_above(10.0).is_err());
    }

    #[test]
    fn set_checks_active_domain() {
        let mut p = single(1.0, 0.0, 2.0);
        assert!(p.set("w", 3.0).is_err());
        assert!(p.set("missing", 1.0).is_err());
        p.set("w", 1.5).unwrap();
        assert_eq!(p.get("w"), Some(1.5));
    }

    #[test]
    fn construction_rejects_out_of_domain_default() {
        let r = ParamVector::new([("w", 11.0, ParamDomain::new(0.0, 10.0).unwrap())]);
        assert!(matches!(r, Err(Error::OutOfDomain { .. })));
    }
}
