use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thresholds of a saturation (censoring) map at one time step.
///
/// Outputs inside `[lower_threshold, upper_threshold]` are observed exactly.
/// Below the window the observation is `lower_clip`, above it `upper_clip`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSpec {
    pub lower_clip: f64,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    pub upper_clip: f64,
}

/// Which branch of the saturation map an input falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Lower,
    Interior,
    Upper,
}

impl SaturationSpec {
    /// Builds a validated spec.
    pub fn new(
        lower_clip: f64,
        lower_threshold: f64,
        upper_threshold: f64,
        upper_clip: f64,
    ) -> Result<Self> {
        let spec = Self {
            lower_clip,
            lower_threshold,
            upper_threshold,
            upper_clip,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Continuous clipping to `[lower, upper]`.
    pub fn clip(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, lower, upper, upper)
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            lower_clip: lc,
            lower_threshold: lt,
            upper_threshold: ut,
            upper_clip: uc,
        } = *self;
        if [lc, lt, ut, uc].iter().any(|v| v.is_nan()) {
            return Err(Error::config("saturation thresholds must not be NaN"));
        }
        if !(lc <= lt && lt <= ut && ut <= uc) {
            return Err(Error::config(format!(
                "saturation ordering assumption violated: need L <= l <= u <= U, got [{lc}, {lt}, {ut}, {uc}]"
            )));
        }
        if lc == uc {
            return Err(Error::config(format!(
                "saturation assumption violated: degenerate map with L = l = u = U = {lc}"
            )));
        }
        Ok(())
    }

    /// True when the map has no jumps (`L = l` and `u = U`).
    pub fn is_continuous(&self) -> bool {
        self.lower_clip == self.lower_threshold && self.upper_threshold == self.upper_clip
    }

    /// Applies the saturation map.
    pub fn saturate(&self, x: f64) -> f64 {
        if x < self.lower_threshold {
            self.lower_clip
        } else if x > self.upper_threshold {
            self.upper_clip
        } else {
            x
        }
    }

    /// Regime of `saturate(x)`. Lower wins over Upper, both win over Interior.
    pub fn classify(&self, x: f64) -> Regime {
        let s = self.saturate(x);
        if s == self.lower_clip {
            Regime::Lower
        } else if s == self.upper_clip {
            Regime::Upper
        } else {
            Regime::Interior
        }
    }

    /// True when `y` is an attainable observation.
    pub fn contains(&self, y: f64) -> bool {
        self.lower_clip <= y && y <= self.upper_clip
    }
}

/// Free-function form of [`SaturationSpec::saturate`].
pub fn saturate(x: f64, spec: &SaturationSpec) -> f64 {
    spec.saturate(x)
}

/// Free-function form of [`SaturationSpec::classify`].
pub fn classify_regime(x: f64, spec: &SaturationSpec) -> Regime {
    spec.classify(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_spec() -> SaturationSpec {
        SaturationSpec::clip(0.0, 25.0).unwrap()
    }

    #[test]
    fn saturate_examples() {
        let s = table_spec();
        assert_eq!(saturate(30.0, &s), 25.0);
        assert_eq!(saturate(10.0, &s), 10.0);
        assert_eq!(saturate(-5.0, &s), 0.0);
    }

    #[test]
    fn classify_examples() {
        let s = table_spec();
        assert_eq!(classify_regime(26.0, &s), Regime::Upper);
        assert_eq!(classify_regime(0.0, &s), Regime::Lower);
        assert_eq!(classify_regime(12.0, &s), Regime::Interior);
        assert_eq!(classify_regime(25.0, &s), Regime::Upper);
    }

    #[test]
    fn discontinuous_spec_regimes() {
        let s = SaturationSpec::new(-1.0, 0.0, 10.0, 12.0).unwrap();
        assert!(!s.is_continuous());
        assert_eq!(s.saturate(-0.5), -1.0);
        assert_eq!(s.classify(-0.5), Regime::Lower);
        assert_eq!(s.classify(0.0), Regime::Interior);
        assert_eq!(s.classify(10.0), Regime::Interior);
        assert_eq!(s.saturate(10.5), 12.0);
    }

    #[test]
    fn rejects_bad_ordering_and_degenerate_maps() {
        assert!(SaturationSpec::new(0.0, 1.0, 0.5, 2.0).is_err());
        assert!(SaturationSpec::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(SaturationSpec::new(f64::NAN, 1.0, 1.0, 2.0).is_err());
        // l = u is allowed as long as the clips differ
        assert!(SaturationSpec::new(0.0, 1.0, 1.0, 2.0).is_ok());
    }

    fn arb_spec() -> impl Strategy<Value = SaturationSpec> {
        prop::array::uniform4(-50.0f64..50.0)
            .prop_filter_map("degenerate", |mut v| {
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                SaturationSpec::new(v[0], v[1], v[2], v[3]).ok()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn saturate_is_monotone(spec in arb_spec(), a in -100.0f64..100.0, b in -100.0f64..100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(spec.saturate(lo) <= spec.saturate(hi));
            let s = spec.saturate(a);
            prop_assert!(spec.lower_clip <= s && s <= spec.upper_clip);
        }

        #[test]
        fn continuous_saturate_is_one_lipschitz(lo in -50.0f64..0.0, w in 0.1f64..50.0,
                                               a in -100.0f64..100.0, b in -100.0f64..100.0) {
            let spec = SaturationSpec::clip(lo, lo + w).unwrap();
            prop_assert!((spec.saturate(a) - spec.saturate(b)).abs() <= (a - b).abs());
        }

        #[test]
        fn regimes_partition_inputs(spec in arb_spec(), x in -100.0f64..100.0) {
            let s = spec.saturate(x);
            let hits = [
                spec.classify(x) == Regime::Lower,
                spec.classify(x) == Regime::Interior,
                spec.classify(x) == Regime::Upper,
            ];
            prop_assert_eq!(hits.iter().filter(|h| **h).count(), 1);
            match spec.classify(x) {
                Regime::Lower => prop_assert_eq!(s, spec.lower_clip),
                Regime::Upper => prop_assert!(s == spec.upper_clip && s != spec.lower_clip),
                Regime::Interior => prop_assert!(s != spec.lower_clip && s != spec.upper_clip),
            }
        }
    }
}
