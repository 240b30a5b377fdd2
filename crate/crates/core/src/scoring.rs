//! NoFADE: test metric times dataset complexity, normalised by log10 FLOPs.

use serde::{Deserialize, Serialize};

use crate::complexity::ComplexityScore;
use crate::error::{Error, Result};

/// FLOPs must exceed this so that `log10(flops) > 1`.
pub const MIN_FLOPS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoFadeScore {
    pub model: String,
    pub dataset: String,
    pub value: f64,
    pub metric_percent: f64,
    pub complexity: f64,
    pub flops: f64,
}

impl NoFadeScore {
    /// Recompute the score from the echoed inputs.
    pub fn recompute(&self) -> f64 {
        nofade_value(self.metric_percent, self.complexity, self.flops)
    }
}

#[inline]
fn nofade_value(metric_percent: f64, complexity: f64, flops: f64) -> f64 {
    metric_percent * complexity / flops.log10()
}

pub fn nofade(
    model: &str,
    metric_percent: f64,
    complexity: &ComplexityScore,
    flops: f64,
) -> Result<NoFadeScore> {
    if !(0.0..=100.0).contains(&metric_percent) {
        return Err(Error::Validation(format!(
            "{model}: metric must be a percentage in [0, 100], got {metric_percent}"
        )));
    }
    if !(complexity.value >= 0.0 && complexity.value.is_finite()) {
        return Err(Error::Validation(format!(
            "{model}: complexity of '{}' must be finite and >= 0, got {}",
            complexity.dataset, complexity.value
        )));
    }
    if !(flops > MIN_FLOPS && flops.is_finite()) {
        return Err(Error::Domain(format!(
            "{model}: FLOPs must exceed {MIN_FLOPS} so that log10(FLOPs) > 1, got {flops}"
        )));
    }
    Ok(NoFadeScore {
        model: model.to_string(),
        dataset: complexity.dataset.clone(),
        value: nofade_value(metric_percent, complexity.value, flops),
        metric_percent,
        complexity: complexity.value,
        flops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::ComplexityKind;
    use proptest::prelude::*;

    fn score(v: f64) -> ComplexityScore {
        ComplexityScore {
            dataset: "ds".into(),
            kind: ComplexityKind::MeanEntropy,
            value: v,
            warning: None,
        }
    }

    #[test]
    fn examples() {
        assert_eq!(nofade("m", 0.0, &score(7.0), 1e9).unwrap().value, 0.0);
        let s = nofade("m", 80.0, &score(7.0), 1e10).unwrap();
        assert!((s.value - 56.0).abs() < 1e-12);
        assert_eq!(s.dataset, "ds");
        let small = nofade("m", 50.0, &score(3.0), 100.0).unwrap().value;
        let large = nofade("m", 50.0, &score(3.0), 10000.0).unwrap().value;
        assert_eq!(small, 2.0 * large);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            nofade("m", 50.0, &score(1.0), 10.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            nofade("m", 50.0, &score(1.0), 0.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            nofade("m", 100.5, &score(1.0), 1e9),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            nofade("m", -1.0, &score(1.0), 1e9),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            nofade("m", 50.0, &score(-0.2), 1e9),
            Err(Error::Validation(_))
        ));
    }

    proptest! {
        #[test]
        fn recomputable_from_echo(m in 0.0f64..=100.0, c in 0.0f64..10.0, f in 11.0f64..1e13) {
            let s = nofade("m", m, &score(c), f).unwrap();
            prop_assert!((s.recompute() - s.value).abs() <= 1e-12 * s.value.abs().max(1.0));
        }

        #[test]
        fn homogeneous_in_complexity(m in 1.0f64..=100.0, c in 0.1f64..10.0, f in 11.0f64..1e13, k in 0.1f64..10.0) {
            let a = nofade("m", m, &score(c), f).unwrap().value;
            let b = nofade("m", m, &score(c * k), f).unwrap().value;
            prop_assert!((b - k * a).abs() <= 1e-12 * b.abs());
        }
    }
}
