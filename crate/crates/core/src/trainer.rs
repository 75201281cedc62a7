//! Direct training and parallel training with diversity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{present_adaptive, EncodingParams};
use crate::error::{Result, SnnError};
use crate::hyper::HyperParams;
use crate::mnist::Dataset;
use crate::network::{Network, NetworkSpec, Phase};
use crate::rng;
use crate::state::{Provenance, TrainedState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Stimuli per worker (or for the single network in direct training).
    pub n_train: usize,
    pub epochs: usize,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    /// Per-layer parameters used when no diversity pool is given.
    pub hyper: Vec<HyperParams>,
    pub encoding: EncodingParams,
    pub workers: usize,
    /// One configuration per worker (applied to all of its layers).
    pub diversity_pool: Option<Vec<HyperParams>>,
    /// Shuffle the training set with this seed before splitting it.
    pub shuffle_seed: Option<u64>,
    /// Let worker blocks overlap; each worker then draws its own shuffled
    /// block from the full set.
    pub allow_overlap: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_train: 10,
            epochs: 1,
            seed: 0,
            layer_sizes: vec![10],
            hyper: vec![HyperParams::base()],
            encoding: EncodingParams::default(),
            workers: 1,
            diversity_pool: None,
            shuffle_seed: None,
            allow_overlap: false,
        }
    }
}

impl TrainConfig {
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec::layered(self.layer_sizes.clone(), self.hyper.clone())
    }

    /// Network spec of worker `k`.
    pub fn worker_spec(&self, k: usize) -> NetworkSpec {
        match &self.diversity_pool {
            Some(pool) => {
                NetworkSpec::layered(self.layer_sizes.clone(), vec![pool[k]; self.layer_sizes.len()])
            }
            None => self.spec(),
        }
    }
}

/// Seed of the `k`-th training presentation.
pub fn stimulus_seed(seed: u64, epoch: usize, k: usize) -> u64 {
    rng::mix(rng::mix(rng::mix(seed, rng::SALT_TRAIN), epoch as u64), k as u64)
}

/// Presents every stimulus of `ds` in order with supervised plasticity,
/// normalizing the plastic projections after each one.
pub fn train_direct(
    net: &mut Network,
    ds: &Dataset,
    ep: &EncodingParams,
    epochs: usize,
    seed: u64,
) -> Result<usize> {
    if net.phase != Phase::Train {
        net.set_phase(Phase::Train);
    }
    let mut presentations = 0;
    for epoch in 0..epochs {
        for (k, (pixels, label)) in ds.iter().enumerate() {
            let out = present_adaptive(net, pixels, ep, Some(label), stimulus_seed(seed, epoch, k))
                .map_err(|e| e.at_stimulus(k))?;
            presentations += out.attempts;
            net.normalize_plastic();
        }
    }
    net.reset_dynamics();
    Ok(presentations)
}

/// Builds and trains one network from `cfg` on `ds`, returning its snapshot.
pub fn train_one(spec: &NetworkSpec, ds: &Dataset, cfg: &TrainConfig, seed: u64, worker: usize) -> Result<TrainedState> {
    let mut net = Network::build(spec, seed)?;
    train_direct(&mut net, ds, &cfg.encoding, cfg.epochs, seed)?;
    Ok(TrainedState::capture(
        &net,
        spec,
        Provenance {
            seed,
            n_train: ds.len(),
            worker,
        },
    ))
}

/// Stimulus blocks, one per worker.
pub fn worker_blocks(ds: &Dataset, cfg: &TrainConfig) -> Result<Vec<Dataset>> {
    let workers = cfg.workers.max(1);
    let shuffled = match cfg.shuffle_seed {
        Some(s) => ds.take_subset(0, ds.len(), Some(s))?,
        None => ds.clone(),
    };
    if cfg.allow_overlap {
        if cfg.n_train > ds.len() {
            return Err(SnnError::InsufficientData {
                workers: 1,
                per_worker: cfg.n_train,
                available: ds.len(),
            });
        }
        let base = cfg.shuffle_seed.unwrap_or(cfg.seed);
        return (0..workers)
            .map(|k| Ok(shuffled.take_subset(0, cfg.n_train, Some(rng::mix(base, k as u64)))?))
            .collect();
    }
    if workers * cfg.n_train > ds.len() {
        return Err(SnnError::InsufficientData {
            workers,
            per_worker: cfg.n_train,
            available: ds.len(),
        });
    }
    (0..workers)
        .map(|k| Ok(shuffled.take_subset(k * cfg.n_train, cfg.n_train, None)?))
        .collect()
}

/// Trains `cfg.workers` independent networks concurrently. Worker `k` uses
/// block `k` of the data, seed `cfg.seed + k` and (when a pool is given)
/// `diversity_pool[k]`. Results are ordered by worker id.
pub fn train_parallel_diversity(ds: &Dataset, cfg: &TrainConfig) -> Result<Vec<TrainedState>> {
    let workers = cfg.workers.max(1);
    if let Some(pool) = &cfg.diversity_pool {
        if pool.len() < workers {
            return Err(SnnError::PoolTooSmall {
                pool: pool.len(),
                workers,
            });
        }
    }
    let blocks = worker_blocks(ds, cfg)?;
    blocks
        .par_iter()
        .enumerate()
        .map(|(k, block)| {
            let spec = cfg.worker_spec(k);
            train_one(&spec, block, cfg, cfg.seed.wrapping_add(k as u64), k)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mnist::{ImageSet, LabelSet};
    use crate::plasticity::column_means;

    /// Synthetic digits: a bright bar whose row depends on the label.
    pub(crate) fn bars(count: usize) -> Dataset {
        let mut pixels = vec![0u8; count * 784];
        let mut labels = Vec::new();
        for k in 0..count {
            let label = (k % 10) as u8;
            let row = 4 + 2 * label as usize;
            for c in 4..24 {
                pixels[k * 784 + row * 28 + c] = 255;
                pixels[k * 784 + (row + 1) * 28 + c] = 200;
            }
            labels.push(label);
        }
        Dataset::new(
            ImageSet { count, rows: 28, cols: 28, pixels },
            LabelSet { count, labels },
        )
        .unwrap()
    }

    #[test]
    fn zero_stimuli_is_initial_state() {
        let spec = NetworkSpec::base(HyperParams::base());
        let ds = bars(5).take_subset(0, 0, None).unwrap();
        let st = train_one(&spec, &ds, &TrainConfig::default(), 3, 0).unwrap();
        let fresh = Network::build(&spec, 3).unwrap();
        assert_eq!(st.projections[0].weights, fresh.projections[0].weights);
        assert_eq!(st.v_t, fresh.thresholds());
    }

    #[test]
    fn ten_stimuli_bounded_presentations_and_normalized() {
        let spec = NetworkSpec::base(HyperParams::base());
        let mut net = Network::build(&spec, 1).unwrap();
        let ds = bars(10);
        let n = train_direct(&mut net, &ds, &EncodingParams::default(), 1, 1).unwrap();
        assert!((10..=40).contains(&n));
        let p = &net.projections[0];
        for m in column_means(&p.weights, p.n_pre, p.n_post) {
            assert!(((m - 8.12) / 8.12).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig { workers: 2, n_train: 4, seed: 5, ..Default::default() };
        let ds = bars(20);
        let a = train_parallel_diversity(&ds, &cfg).unwrap();
        let b = train_parallel_diversity(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1].provenance.seed, 6);
        assert_ne!(a[0].projections[0].weights, a[1].projections[0].weights);
    }

    #[test]
    fn blocks_are_disjoint_or_rejected() {
        let ds = bars(30);
        let cfg = TrainConfig { workers: 3, n_train: 10, shuffle_seed: Some(2), ..Default::default() };
        let blocks = worker_blocks(&ds, &cfg).unwrap();
        let mut seen: Vec<usize> = blocks.iter().flat_map(|b| b.order.clone()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 30);

        let too_many = TrainConfig { workers: 4, ..cfg.clone() };
        assert!(matches!(
            worker_blocks(&ds, &too_many),
            Err(SnnError::InsufficientData { .. })
        ));
        let overlap = TrainConfig { allow_overlap: true, ..too_many };
        let blocks = worker_blocks(&ds, &overlap).unwrap();
        assert_eq!(blocks.len(), 4);
        assert!(blocks.iter().all(|b| b.len() == 10));
    }

    #[test]
    fn small_pool_is_rejected() {
        let cfg = TrainConfig {
            workers: 3,
            n_train: 1,
            diversity_pool: Some(vec![HyperParams::base(); 2]),
            ..Default::default()
        };
        assert!(matches!(
            train_parallel_diversity(&bars(10), &cfg),
            Err(SnnError::PoolTooSmall { pool: 2, workers: 3 })
        ));
    }

    #[test]
    fn worker_order_does_not_matter() {
        let ds = bars(12);
        let cfg = TrainConfig { workers: 3, n_train: 4, seed: 9, ..Default::default() };
        let all = train_parallel_diversity(&ds, &cfg).unwrap();
        let blocks = worker_blocks(&ds, &cfg).unwrap();
        for k in [2usize, 0, 1] {
            let alone = train_one(&cfg.worker_spec(k), &blocks[k], &cfg, 9 + k as u64, k).unwrap();
            assert_eq!(alone, all[k]);
        }
    }

    #[test]
    fn blow_up_reports_stimulus() {
        let hp = HyperParams { e_exc: 1e308, ..HyperParams::base() };
        let spec = NetworkSpec::base(hp);
        let mut net = Network::build(&spec, 0).unwrap();
        let err = train_direct(&mut net, &bars(3), &EncodingParams::default(), 1, 0).unwrap_err();
        assert!(err.is_numeric(), "{err}");
        assert!(matches!(err, SnnError::AtStimulus { stimulus: 0, .. }));
    }
}
