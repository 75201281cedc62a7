//! Trained-network snapshots and the `.snnw` container.
//!
//! Layout: `b"SNNW"`, u32 LE version, u32 LE header length, UTF-8 JSON header,
//! the arrays listed in the header's manifest as LE f64 in manifest order,
//! then a CRC32 of every preceding byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};
use crate::network::{Connectivity, Network, NetworkSpec, Population, Projection, Sign, Source};

pub const MAGIC: &[u8; 4] = b"SNNW";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "snnw";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub n_train: usize,
    pub worker: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    pub source: Source,
    pub target: usize,
    pub n_pre: usize,
    pub n_post: usize,
    pub weights: Vec<f64>,
    pub delays: Vec<f64>,
}

/// Everything needed to rebuild a trained base (or directly trained) network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedState {
    pub spec: NetworkSpec,
    /// Excitatory projections in construction order.
    pub projections: Vec<ProjectionState>,
    /// Adaptive thresholds per hidden layer.
    pub v_t: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl TrainedState {
    /// Snapshot of an unmerged network (one population per layer).
    pub fn capture(net: &Network, spec: &NetworkSpec, provenance: Provenance) -> Self {
        debug_assert_eq!(net.populations.len(), spec.layer_sizes.len());
        TrainedState {
            spec: spec.clone(),
            projections: net
                .excitatory()
                .map(|p| ProjectionState {
                    source: p.source,
                    target: p.target,
                    n_pre: p.n_pre,
                    n_post: p.n_post,
                    weights: p.weights.clone(),
                    delays: p.delays.clone(),
                })
                .collect(),
            v_t: net.thresholds(),
            provenance,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.spec.layer_sizes.len()
    }

    fn manifest(&self) -> Vec<ArrayEntry> {
        let mut out = Vec::new();
        for (k, p) in self.projections.iter().enumerate() {
            out.push(ArrayEntry {
                name: format!("weights/{k}"),
                len: p.weights.len(),
            });
        }
        for (k, p) in self.projections.iter().enumerate() {
            out.push(ArrayEntry {
                name: format!("delays/{k}"),
                len: p.delays.len(),
            });
        }
        for (l, v) in self.v_t.iter().enumerate() {
            out.push(ArrayEntry {
                name: format!("v_t/{l}"),
                len: v.len(),
            });
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            spec: self.spec.clone(),
            provenance: self.provenance.clone(),
            projections: self
                .projections
                .iter()
                .map(|p| ProjectionMeta {
                    source: p.source,
                    target: p.target,
                    n_pre: p.n_pre,
                    n_post: p.n_post,
                })
                .collect(),
            arrays: self.manifest(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let arrays = self
            .projections
            .iter()
            .map(|p| &p.weights)
            .chain(self.projections.iter().map(|p| &p.delays))
            .chain(self.v_t.iter());
        for arr in arrays {
            for x in arr {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self> {
        if raw.len() < 4 || &raw[..4] != MAGIC {
            return Err(SnnError::BadMagic);
        }
        if raw.len() < 16 {
            return Err(SnnError::Truncated);
        }
        let version = u32::from_le_bytes(raw[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(SnnError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let (body, tail) = raw.split_at(raw.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(SnnError::ChecksumMismatch { stored, computed });
        }
        let header_len = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        let json = body.get(12..12 + header_len).ok_or(SnnError::Truncated)?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| SnnError::Header(e.to_string()))?;
        let mut data = &body[12 + header_len..];
        let mut take = |len: usize| -> Result<Vec<f64>> {
            let bytes = data.get(..len * 8).ok_or(SnnError::Truncated)?;
            data = &data[len * 8..];
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let n_proj = header.projections.len();
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for entry in &header.arrays {
            arrays.push(take(entry.len)?);
        }
        if !data.is_empty() {
            return Err(SnnError::Header("trailing bytes after arrays".into()));
        }
        if arrays.len() < 2 * n_proj {
            return Err(SnnError::Header("manifest shorter than projection list".into()));
        }
        let v_t = arrays.split_off(2 * n_proj);
        let delays = arrays.split_off(n_proj);
        let projections = header
            .projections
            .into_iter()
            .zip(arrays)
            .zip(delays)
            .map(|((m, weights), delays)| {
                if weights.len() != m.n_pre * m.n_post || delays.len() != weights.len() {
                    return Err(SnnError::Header("array length disagrees with shape".into()));
                }
                Ok(ProjectionState {
                    source: m.source,
                    target: m.target,
                    n_pre: m.n_pre,
                    n_post: m.n_post,
                    weights,
                    delays,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let st = TrainedState {
            spec: header.spec,
            projections,
            v_t,
            provenance: header.provenance,
        };
        if st.v_t.len() != st.n_layers()
            || st.v_t.iter().zip(&st.spec.layer_sizes).any(|(v, &n)| v.len() != n)
        {
            return Err(SnnError::Header("threshold arrays disagree with layer sizes".into()));
        }
        Ok(st)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| SnnError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| SnnError::io(path, e))?;
        Self::from_bytes(&raw)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectionMeta {
    source: Source,
    target: usize,
    n_pre: usize,
    n_post: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    provenance: Provenance,
    projections: Vec<ProjectionMeta>,
    arrays: Vec<ArrayEntry>,
}

/// Combines trained networks side by side. Layer `l` of the result holds
/// layer `l` of every state, each as its own population (and inhibition
/// scope) with its own hyperparameters, weights and thresholds. The result
/// is in the training phase.
pub fn merge_states(states: &[TrainedState]) -> Result<Network> {
    let first = states
        .first()
        .ok_or_else(|| SnnError::IncompatibleStates("no states to merge".into()))?;
    let n_layers = first.n_layers();
    for st in states {
        if st.n_layers() != n_layers {
            return Err(SnnError::IncompatibleStates(format!(
                "{} hidden layers vs {}",
                st.n_layers(),
                n_layers
            )));
        }
        if st.spec.n_input != first.spec.n_input || st.spec.dt != first.spec.dt {
            return Err(SnnError::IncompatibleStates(
                "input size or timestep differs".into(),
            ));
        }
        st.spec.validate()?;
    }
    let n_states = states.len();
    let dt = first.spec.dt;
    let pop_index = |state: usize, layer: usize| layer * n_states + state;

    let mut populations = Vec::with_capacity(n_layers * n_states);
    for layer in 0..n_layers {
        for (b, st) in states.iter().enumerate() {
            let mut pop = Population::new(
                layer,
                b,
                st.spec.layer_sizes[layer],
                st.spec.hyper[layer],
                dt,
            );
            for (i, &v) in st.v_t[layer].iter().enumerate() {
                pop.neurons.set_v_t(i, v);
            }
            populations.push(pop);
        }
    }

    let mut projections = Vec::new();
    for (b, st) in states.iter().enumerate() {
        for p in &st.projections {
            let hp = st.spec.hyper[p.target];
            let (source, stdp) = match p.source {
                Source::Input => (Source::Input, hp.stdp_input()),
                Source::Hidden(j) => (Source::Hidden(pop_index(b, j)), hp.stdp_hidden()),
            };
            projections.push(Projection::new(
                source,
                pop_index(b, p.target),
                p.n_pre,
                p.n_post,
                Sign::Excitatory,
                Connectivity::Full,
                p.weights.clone(),
                p.delays.clone(),
                Some(stdp),
                dt,
            ));
        }
    }
    // Keep the per-target ordering of a freshly built network.
    projections.sort_by_key(|p| {
        let src = match p.source {
            Source::Input => 0,
            Source::Hidden(j) => j + 1,
        };
        (p.target, src)
    });

    Ok(Network {
        dt,
        n_input: first.spec.n_input,
        populations,
        projections,
        phase: crate::network::Phase::Train,
        seed: first.provenance.seed,
        n_layers,
    })
}
