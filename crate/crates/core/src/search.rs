//! Seeded random search over hyperparameter ranges, producing a ranked list
//! from which diversity pools are drawn.

use std::cmp::Ordering;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EncodingParams;
use crate::error::{Result, SnnError};
use crate::evaluator::evaluate;
use crate::hyper::{sample_config, sample_layer_config, HyperParams, SearchRanges, FIELD_ORDER};
use crate::mnist::Dataset;
use crate::network::{Network, NetworkSpec, Phase};
use crate::rng;
use crate::trainer::train_direct;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub config: HyperParams,
    pub seed: u64,
    pub val_accuracy: f64,
    pub val_ambiguity: f64,
    pub rank: usize,
    /// Set when training or evaluation failed; such records rank last.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub budget: usize,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    pub ranges: SearchRanges,
    pub encoding: EncodingParams,
    /// Configurations evaluated in addition to the sampled ones.
    pub extra: Vec<HyperParams>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 8,
            seed: 0,
            layer_sizes: vec![10],
            ranges: SearchRanges::default(),
            encoding: EncodingParams::default(),
            extra: Vec::new(),
        }
    }
}

/// Accuracy descending, then ambiguity ascending, then seed ascending; failed
/// trials last.
pub fn compare(a: &SearchRecord, b: &SearchRecord) -> Ordering {
    a.failure
        .is_some()
        .cmp(&b.failure.is_some())
        .then(b.val_accuracy.total_cmp(&a.val_accuracy))
        .then(a.val_ambiguity.total_cmp(&b.val_ambiguity))
        .then(a.seed.cmp(&b.seed))
}

pub fn rank(records: &mut [SearchRecord]) {
    records.sort_by(compare);
    for (i, r) in records.iter_mut().enumerate() {
        r.rank = i;
    }
}

fn trial(
    config: HyperParams,
    seed: u64,
    layers: &[usize],
    train: &Dataset,
    val: &Dataset,
    ep: &EncodingParams,
) -> SearchRecord {
    let spec = NetworkSpec::layered(layers.to_vec(), vec![config; layers.len()]);
    let run = || -> Result<(f64, f64)> {
        let mut net = Network::build(&spec, seed)?;
        train_direct(&mut net, train, ep, 1, seed)?;
        net.set_phase(Phase::Eval);
        let m = evaluate(&net, val, ep, seed)?;
        Ok((m.overall_accuracy(), m.accuracy_with_ambiguity()))
    };
    match run() {
        Ok((acc, amb)) => SearchRecord {
            config,
            seed,
            val_accuracy: acc,
            val_ambiguity: amb,
            rank: 0,
            failure: None,
        },
        Err(e) => SearchRecord {
            config,
            seed,
            val_accuracy: f64::NAN,
            val_ambiguity: f64::NAN,
            rank: 0,
            failure: Some(e.to_string()),
        },
    }
}

/// Candidate configurations of a sweep. For multi-layer searches, all but the
/// hidden-to-hidden parameters come from a randomly chosen record of
/// `validated` (a previous single-layer search).
pub fn candidates(cfg: &SearchConfig, validated: &[HyperParams]) -> Result<Vec<(HyperParams, u64)>> {
    let multi = cfg.layer_sizes.len() > 1;
    if multi && validated.is_empty() {
        return Err(SnnError::BadSpec(
            "multi-layer search needs validated single-layer configurations".into(),
        ));
    }
    let mut out = Vec::with_capacity(cfg.budget + cfg.extra.len());
    for t in 0..cfg.budget {
        let seed = rng::mix(cfg.seed, t as u64);
        let config = if multi {
            let mut pick = rng::stream(seed, &[0]);
            let template = validated[pick.random_range(0..validated.len())];
            sample_layer_config(&cfg.ranges, &template, seed)?
        } else {
            sample_config(&cfg.ranges, seed)?
        };
        out.push((config, seed));
    }
    for (k, hp) in cfg.extra.iter().enumerate() {
        out.push((*hp, rng::mix(cfg.seed, (cfg.budget + k) as u64)));
    }
    Ok(out)
}

/// Trains one network per candidate for one epoch on `train`, scores it on
/// `val`, and returns the ranked records. Failed trials do not stop the sweep.
pub fn random_search(
    train: &Dataset,
    val: &Dataset,
    cfg: &SearchConfig,
    validated: &[HyperParams],
) -> Result<Vec<SearchRecord>> {
    if cfg.budget == 0 && cfg.extra.is_empty() {
        return Err(SnnError::BadSpec("search budget must be at least 1".into()));
    }
    let cands = candidates(cfg, validated)?;
    let mut records: Vec<SearchRecord> = cands
        .into_par_iter()
        .map(|(config, seed)| trial(config, seed, &cfg.layer_sizes, train, val, &cfg.encoding))
        .collect();
    rank(&mut records);
    Ok(records)
}

pub fn ranked_header() -> Vec<String> {
    let mut h: Vec<String> = ["rank", "seed", "val_acc", "val_ambig"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(FIELD_ORDER.iter().map(|s| s.to_string()));
    h.push("status".to_string());
    h
}

pub fn write_ranked_csv(records: &[SearchRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| SnnError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(ranked_header()).map_err(|e| SnnError::Csv(e.to_string()))?;
    for r in records {
        let mut rec = vec![
            r.rank.to_string(),
            r.seed.to_string(),
            format!("{}", r.val_accuracy),
            format!("{}", r.val_ambiguity),
        ];
        rec.extend(r.config.named_values().into_iter().map(|(_, v)| format!("{v}")));
        rec.push(r.failure.clone().unwrap_or_else(|| "ok".into()));
        w.write_record(rec).map_err(|e| SnnError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| SnnError::io(path, e))
}

pub fn read_ranked_csv(path: &Path) -> Result<Vec<SearchRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SnnError::Csv(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| SnnError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SnnError::Csv(format!("ranked.csv lacks column {name}")))
    };
    let (ri, si, ai, bi) = (find("rank")?, find("seed")?, find("val_acc")?, find("val_ambig")?);
    let status = header.iter().position(|h| h == "status");
    let num = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| SnnError::Csv(format!("cannot parse {s:?}")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| SnnError::Csv(e.to_string()))?;
        let mut pairs = Vec::new();
        for (i, h) in header.iter().enumerate() {
            if FIELD_ORDER.contains(&h.as_str()) {
                pairs.push((h.as_str(), num(&rec[i])?));
            }
        }
        let failure = status
            .map(|i| rec[i].to_string())
            .filter(|s| s != "ok" && !s.is_empty());
        out.push(SearchRecord {
            config: HyperParams::from_named_values(pairs)?,
            seed: rec[si].parse().map_err(|_| SnnError::Csv("bad seed".into()))?,
            val_accuracy: num(&rec[ai])?,
            val_ambiguity: num(&rec[bi])?,
            rank: rec[ri].parse().map_err(|_| SnnError::Csv("bad rank".into()))?,
            failure,
        });
    }
    Ok(out)
}

/// The top `n` successful configurations, in rank order.
pub fn diversity_pool(records: &[SearchRecord], n: usize) -> Result<Vec<HyperParams>> {
    let mut sorted: Vec<&SearchRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    sorted.sort_by(|a, b| compare(a, b));
    if sorted.len() < n {
        return Err(SnnError::PoolTooSmall {
            pool: sorted.len(),
            workers: n,
        });
    }
    Ok(sorted[..n].iter().map(|r| r.config).collect())
}
