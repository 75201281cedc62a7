//! Prediction from group spike counts, accuracy with tie semantics, and
//! misprediction tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{present_adaptive, EncodingParams};
use crate::error::{Result, SnnError};
use crate::mnist::Dataset;
use crate::network::{Network, Phase};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub group_counts: [u64; 10],
    /// Groups attaining the maximum count, ascending.
    pub argmax_set: Vec<u8>,
    pub ambiguous: bool,
    /// True label is among the maximal groups (ties included).
    pub correct: bool,
    /// Correct, but tied with at least one other group.
    pub correct_with_ambiguity: bool,
}

impl Prediction {
    pub fn from_counts(group_counts: [u64; 10], label: u8) -> Self {
        let max = *group_counts.iter().max().expect("ten groups");
        let argmax_set: Vec<u8> = (0..10u8)
            .filter(|&g| group_counts[g as usize] == max)
            .collect();
        let ambiguous = argmax_set.len() > 1;
        let correct = argmax_set.contains(&label);
        Prediction {
            label,
            group_counts,
            argmax_set,
            ambiguous,
            correct,
            correct_with_ambiguity: correct && ambiguous,
        }
    }
}

/// Seed of the evaluation presentation of stimulus `k`.
pub fn stimulus_seed(seed: u64, k: usize) -> u64 {
    rng::mix(rng::mix(seed, rng::SALT_EVAL), k as u64)
}

/// Presents one image without plasticity and reads out the last layer.
///
/// Thresholds adapt during the presentation but are restored afterwards, so
/// the network is left exactly as it was.
pub fn predict(net: &mut Network, pixels: &[u8], label: u8, ep: &EncodingParams, seed: u64) -> Result<Prediction> {
    if net.phase != Phase::Eval {
        return Err(SnnError::BadSpec("prediction requires the evaluation phase".into()));
    }
    let saved = net.adaptation();
    let out = present_adaptive(net, pixels, ep, None, seed);
    net.restore_adaptation(&saved);
    net.reset_dynamics();
    let out = out?;
    Ok(Prediction::from_counts(net.group_counts(&out.record), label))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub n_correct: usize,
    pub n_ambiguous_correct: usize,
    pub per_label_n: [usize; 10],
    pub per_label_correct: [usize; 10],
    pub per_label_ambiguous: [usize; 10],
    /// Rows: true label; columns: wrongly predicted group.
    pub mispredictions: [[f64; 10]; 10],
}

pub fn binomial_error(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

fn frac(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

impl Metrics {
    pub fn from_predictions(preds: &[Prediction]) -> Self {
        let mut m = Metrics {
            n: preds.len(),
            n_correct: 0,
            n_ambiguous_correct: 0,
            per_label_n: [0; 10],
            per_label_correct: [0; 10],
            per_label_ambiguous: [0; 10],
            mispredictions: [[0.0; 10]; 10],
        };
        for p in preds {
            let l = p.label as usize;
            m.per_label_n[l] += 1;
            if p.correct {
                m.n_correct += 1;
                m.per_label_correct[l] += 1;
                if p.ambiguous {
                    m.n_ambiguous_correct += 1;
                    m.per_label_ambiguous[l] += 1;
                }
            } else {
                let share = 1.0 / p.argmax_set.len() as f64;
                for &g in &p.argmax_set {
                    m.mispredictions[l][g as usize] += share;
                }
            }
        }
        m
    }

    /// Correct predictions, ties included.
    pub fn overall_accuracy(&self) -> f64 {
        frac(self.n_correct, self.n)
    }

    /// Correct predictions that were ties.
    pub fn accuracy_with_ambiguity(&self) -> f64 {
        frac(self.n_ambiguous_correct, self.n)
    }

    pub fn overall_error(&self) -> f64 {
        binomial_error(self.overall_accuracy(), self.n)
    }

    pub fn ambiguity_error(&self) -> f64 {
        binomial_error(self.accuracy_with_ambiguity(), self.n)
    }

    pub fn label_accuracy(&self, label: usize) -> f64 {
        frac(self.per_label_correct[label], self.per_label_n[label])
    }

    pub fn label_ambiguity(&self, label: usize) -> f64 {
        frac(self.per_label_ambiguous[label], self.per_label_n[label])
    }

    pub fn label_incorrect(&self, label: usize) -> usize {
        self.per_label_n[label] - self.per_label_correct[label]
    }
}

/// Evaluates every stimulus of `ds` from the same network state. Stimuli run
/// in parallel on network clones; results are reduced in stimulus order.
pub fn evaluate_predictions(net: &Network, ds: &Dataset, ep: &EncodingParams, seed: u64) -> Result<Vec<Prediction>> {
    if net.phase != Phase::Eval {
        return Err(SnnError::BadSpec("evaluation requires the evaluation phase".into()));
    }
    let mut clean = net.clone();
    clean.reset_dynamics();
    (0..ds.len())
        .into_par_iter()
        .map_init(
            || clean.clone(),
            |local, k| {
                let (pixels, label) = ds.get(k);
                predict(local, pixels, label, ep, stimulus_seed(seed, k)).map_err(|e| e.at_stimulus(k))
            },
        )
        .collect()
}

pub fn evaluate(net: &Network, ds: &Dataset, ep: &EncodingParams, seed: u64) -> Result<Metrics> {
    Ok(Metrics::from_predictions(&evaluate_predictions(net, ds, ep, seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(v: &[u64]) -> [u64; 10] {
        let mut c = [0; 10];
        c[..v.len()].copy_from_slice(v);
        c
    }

    #[test]
    fn unique_winner() {
        let p = Prediction::from_counts([9, 1, 1, 1, 1, 1, 1, 1, 1, 1], 0);
        assert!(p.correct && !p.ambiguous && !p.correct_with_ambiguity);
    }

    #[test]
    fn tie_containing_label() {
        let p = Prediction::from_counts(counts(&[3, 3]), 0);
        assert!(p.correct && p.ambiguous && p.correct_with_ambiguity);
        assert_eq!(p.argmax_set, vec![0, 1]);
    }

    #[test]
    fn silent_network_is_a_ten_way_tie() {
        let p = Prediction::from_counts([0; 10], 7);
        assert_eq!(p.argmax_set.len(), 10);
        assert!(p.ambiguous && p.correct_with_ambiguity);
    }

    #[test]
    fn perfect_classifier() {
        let preds: Vec<_> = (0..100)
            .map(|k| {
                let mut c = [0; 10];
                c[k % 10] = 5;
                Prediction::from_counts(c, (k % 10) as u8)
            })
            .collect();
        let m = Metrics::from_predictions(&preds);
        assert_eq!(m.overall_accuracy(), 1.0);
        assert_eq!(m.accuracy_with_ambiguity(), 0.0);
        assert!(m.mispredictions.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn four_read_as_nine() {
        let mut c = [0; 10];
        c[9] = 4;
        let m = Metrics::from_predictions(&[Prediction::from_counts(c, 4)]);
        assert_eq!(m.mispredictions[4][9], 1.0);
        assert_eq!(m.overall_accuracy(), 0.0);
    }

    #[test]
    fn wrong_tie_is_split() {
        let m = Metrics::from_predictions(&[Prediction::from_counts(counts(&[0, 2, 2]), 0)]);
        assert_eq!(m.mispredictions[0][1], 0.5);
        assert_eq!(m.mispredictions[0][2], 0.5);
    }

    #[test]
    fn binomial_error_value() {
        let e = binomial_error(0.89, 10_000);
        assert!((e - 0.0031).abs() < 5e-5, "{e}");
        assert!((e - (0.89f64 * 0.11 / 1e4).sqrt()).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn metric_invariants(
                raw in proptest::collection::vec((proptest::array::uniform10(0u64..4), 0u8..10), 0..60)
            ) {
                let preds: Vec<_> = raw.into_iter().map(|(c, l)| Prediction::from_counts(c, l)).collect();
                for p in &preds {
                    prop_assert_eq!(p.ambiguous, p.argmax_set.len() >= 2);
                    prop_assert!(!p.correct || p.argmax_set.contains(&p.label));
                }
                let m = Metrics::from_predictions(&preds);
                prop_assert!(m.accuracy_with_ambiguity() <= m.overall_accuracy());
                prop_assert!(m.overall_accuracy() <= 1.0);
                for l in 0..10 {
                    prop_assert_eq!(m.mispredictions[l][l], 0.0);
                    let row: f64 = m.mispredictions[l].iter().sum();
                    prop_assert!((row - m.label_incorrect(l) as f64).abs() < 1e-9);
                }
            }
        }
    }
}
