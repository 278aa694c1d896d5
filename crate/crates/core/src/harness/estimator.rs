//! Symbol estimators the sweep can run, selected by name at runtime.

use crate::channel::{ChannelModel, ObservationBlock};
use crate::combiner::{apply_weights, compute_weights};
use crate::constellation::{SymbolAlphabet, SymbolSequence};
use crate::em::{calibrate, detect_symbols, run_em, Detector, EmConfig};
use crate::error::{Error, Result};

/// One block as seen by an architecture: the restricted block and, for
/// estimators allowed to use it, the matching restricted model.
pub struct TrialInput<'a> {
    pub block: &'a ObservationBlock,
    pub model: &'a ChannelModel,
    pub alphabet: &'a SymbolAlphabet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub symbols: SymbolSequence,
    /// EM iterations used, if the estimator iterates.
    pub iterations: Option<usize>,
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;

    /// Whether the output carries the quarter-turn ambiguity of blind estimation.
    fn is_blind(&self) -> bool;

    fn detect(&self, input: &TrialInput<'_>) -> Result<Detection>;
}

/// Combines with the true gains and covariance, then takes the nearest point.
#[derive(Debug, Clone, Default)]
pub struct KnownParams;

impl Estimator for KnownParams {
    fn name(&self) -> &str {
        "known"
    }

    fn is_blind(&self) -> bool {
        false
    }

    fn detect(&self, input: &TrialInput<'_>) -> Result<Detection> {
        let w = compute_weights(&input.model.full_gain(), input.model.sigma())?;
        let s_hat = apply_weights(&w, input.block)?;
        let idx = s_hat.iter().map(|&s| input.alphabet.nearest(s)).collect();
        Ok(Detection { symbols: SymbolSequence::from_indices(idx, input.alphabet)?, iterations: None })
    }
}

/// Blind EM on the block alone.
#[derive(Debug, Clone, Default)]
pub struct BlindEm {
    pub config: EmConfig,
    pub detector: Detector,
}

impl Estimator for BlindEm {
    fn name(&self) -> &str {
        "em"
    }

    fn is_blind(&self) -> bool {
        true
    }

    fn detect(&self, input: &TrialInput<'_>) -> Result<Detection> {
        let out = run_em(input.block, input.alphabet, &self.config)?;
        let cal = calibrate(&out.state, input.alphabet, input.block)?;
        let symbols = detect_symbols(&cal, input.alphabet, self.detector);
        Ok(Detection { symbols, iterations: Some(out.iterations) })
    }
}

/// Name-keyed collection of estimators.
pub struct EstimatorRegistry {
    entries: Vec<Box<dyn Estimator>>,
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// `known` and `em` with the given EM settings.
    pub fn with_defaults(config: EmConfig, detector: Detector) -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(KnownParams));
        reg.register(Box::new(BlindEm { config, detector }));
        reg
    }

    /// Adds an estimator, replacing any previous one with the same name.
    pub fn register(&mut self, est: Box<dyn Estimator>) {
        self.entries.retain(|e| e.name() != est.name());
        self.entries.push(est);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::UnknownEstimator(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

impl Default for EstimatorRegistry {
    /// EM with default settings and nearest-point detection.
    fn default() -> Self {
        Self::with_defaults(EmConfig::default(), Detector::MinDistance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Silent;

    impl Estimator for Silent {
        fn name(&self) -> &str {
            "known"
        }
        fn is_blind(&self) -> bool {
            true
        }
        fn detect(&self, _: &TrialInput<'_>) -> Result<Detection> {
            Err(Error::ZeroEstimate)
        }
    }

    #[test]
    fn lookup_and_replacement() {
        let mut reg = EstimatorRegistry::default();
        assert_eq!(reg.names(), vec!["known", "em"]);
        assert!(!reg.get("known").unwrap().is_blind());
        assert!(matches!(reg.get("oracle"), Err(Error::UnknownEstimator(_))));
        reg.register(Box::new(Silent));
        assert_eq!(reg.names(), vec!["em", "known"]);
        assert!(reg.get("known").unwrap().is_blind());
    }
}
