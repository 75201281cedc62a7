//! Network topology, delayed spike delivery, and the fixed-step simulation loop.
//!
//! A network is a list of neuron populations and the projections between
//! them. Each population is one base network's share of a hidden layer (or a
//! whole directly-trained layer) and is also the scope of lateral inhibition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};
use crate::hyper::HyperParams;
use crate::mnist::PIXELS;
use crate::neuron::{NeuronPopulation, StepFactors};
use crate::plasticity::{self, StdpParams, TraceBlock, TraceFactors};
use crate::rng;

pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Hidden-layer sizes, each a multiple of ten.
    pub layer_sizes: Vec<usize>,
    /// One parameter set per hidden layer.
    pub hyper: Vec<HyperParams>,
    #[serde(default = "default_input")]
    pub n_input: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_input() -> usize {
    PIXELS
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl NetworkSpec {
    pub fn base(hyper: HyperParams) -> Self {
        Self::layered(vec![10], vec![hyper])
    }

    pub fn layered(layer_sizes: Vec<usize>, hyper: Vec<HyperParams>) -> Self {
        NetworkSpec {
            layer_sizes,
            hyper,
            n_input: PIXELS,
            dt: DEFAULT_DT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() {
            return Err(SnnError::BadSpec("at least one hidden layer required".into()));
        }
        if let Some(&n) = self.layer_sizes.iter().find(|&&n| n == 0 || n % 10 != 0) {
            return Err(SnnError::BadSpec(format!(
                "hidden layer size {n} is not a positive multiple of 10"
            )));
        }
        if self.hyper.len() != self.layer_sizes.len() {
            return Err(SnnError::BadSpec(format!(
                "{} hyperparameter sets for {} layers",
                self.hyper.len(),
                self.layer_sizes.len()
            )));
        }
        if self.n_input == 0 {
            return Err(SnnError::BadSpec("empty input layer".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SnnError::BadSpec("dt must be positive".into()));
        }
        self.hyper.iter().try_for_each(HyperParams::validate)
    }

    pub fn is_base(&self) -> bool {
        self.layer_sizes.iter().all(|&n| n == 10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Input,
    Hidden(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Full,
    /// Only between neurons of different digit groups (lateral inhibition).
    CrossGroup,
}

/// Spikes waiting for their delivery step, in a ring indexed by arrival step.
#[derive(Debug, Clone, Default)]
struct DelayQueue {
    /// With a common delay only the presynaptic index is needed.
    rows: Vec<Vec<u32>>,
    /// Per-synapse delays: (pre, post) pairs.
    pairs: Vec<Vec<(u32, u32)>>,
}

impl DelayQueue {
    fn new(len: usize, uniform: bool) -> Self {
        if uniform {
            DelayQueue {
                rows: vec![Vec::new(); len],
                pairs: Vec::new(),
            }
        } else {
            DelayQueue {
                rows: Vec::new(),
                pairs: vec![Vec::new(); len],
            }
        }
    }

    fn clear(&mut self) {
        self.rows.iter_mut().for_each(Vec::clear);
        self.pairs.iter_mut().for_each(Vec::clear);
    }

    fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty) && self.pairs.iter().all(Vec::is_empty)
    }
}

/// A synapse block between two populations.
#[derive(Debug, Clone)]
pub struct Projection {
    pub source: Source,
    pub target: usize,
    pub n_pre: usize,
    pub n_post: usize,
    pub sign: Sign,
    pub connectivity: Connectivity,
    /// `n_pre x n_post`, row-major.
    pub weights: Vec<f64>,
    /// Per-synapse delays in ms, same layout as `weights`.
    pub delays: Vec<f64>,
    /// Present when the projection learns.
    pub stdp: Option<StdpParams>,
    pub traces: TraceBlock,
    delay_steps: Vec<u32>,
    uniform_delay: Option<u32>,
    ring_len: usize,
    queue: DelayQueue,
}

impl Projection {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        source: Source,
        target: usize,
        n_pre: usize,
        n_post: usize,
        sign: Sign,
        connectivity: Connectivity,
        weights: Vec<f64>,
        delays: Vec<f64>,
        stdp: Option<StdpParams>,
        dt: f64,
    ) -> Self {
        assert_eq!(weights.len(), n_pre * n_post);
        assert_eq!(delays.len(), n_pre * n_post);
        let mut proj = Projection {
            source,
            target,
            n_pre,
            n_post,
            sign,
            connectivity,
            weights,
            delays,
            stdp,
            traces: TraceBlock::new(n_pre, n_post),
            delay_steps: Vec::new(),
            uniform_delay: None,
            ring_len: 0,
            queue: DelayQueue::default(),
        };
        proj.prepare_delays(dt);
        proj
    }

    fn prepare_delays(&mut self, dt: f64) {
        self.delay_steps = self.delays.iter().map(|&d| (d / dt).round() as u32).collect();
        let max = self.delay_steps.iter().copied().max().unwrap_or(0);
        let min = self.delay_steps.iter().copied().min().unwrap_or(0);
        self.uniform_delay = (max == min).then_some(max);
        self.ring_len = max as usize + 2;
        self.queue = DelayQueue::new(self.ring_len, self.uniform_delay.is_some());
    }

    pub fn is_plastic(&self) -> bool {
        self.stdp.is_some()
    }

    pub fn delay_steps(&self, pre: usize, post: usize) -> u32 {
        self.delay_steps[pre * self.n_post + post]
    }

    /// Number of existing synapses.
    pub fn synapse_count(&self, groups: &[u8]) -> usize {
        match self.connectivity {
            Connectivity::Full => self.n_pre * self.n_post,
            Connectivity::CrossGroup => (0..self.n_pre)
                .map(|a| (0..self.n_post).filter(|&b| groups[a] != groups[b]).count())
                .sum(),
        }
    }

    fn reset_dynamics(&mut self) {
        self.traces.clear();
        self.queue.clear();
    }
}

/// Adds the weights of a presynaptic row to the target conductances.
fn apply_row(proj: &Projection, pre: usize, target: &mut NeuronPopulation) {
    let row = &proj.weights[pre * proj.n_post..(pre + 1) * proj.n_post];
    let g = match proj.sign {
        Sign::Excitatory => &mut target.g_e,
        Sign::Inhibitory => &mut target.g_i,
    };
    match proj.connectivity {
        Connectivity::Full => {
            for (g, &w) in g.iter_mut().zip(row) {
                *g += w;
            }
        }
        Connectivity::CrossGroup => {
            let own = target.group[pre];
            for ((g, &w), &grp) in g.iter_mut().zip(row).zip(&target.group) {
                if grp != own {
                    *g += w;
                }
            }
        }
    }
}

fn apply_one(proj: &Projection, pre: usize, post: usize, target: &mut NeuronPopulation) {
    let w = proj.weights[pre * proj.n_post + post];
    match proj.sign {
        Sign::Excitatory => target.g_e[post] += w,
        Sign::Inhibitory => target.g_i[post] += w,
    }
}

/// Schedules the spike of `pre`, first deliverable at step `base`; anything
/// arriving at `now` is applied immediately.
fn emit(proj: &mut Projection, pre: usize, base: u64, now: u64, target: &mut NeuronPopulation) {
    let len = proj.ring_len as u64;
    if let Some(d) = proj.uniform_delay {
        let arrival = base + d as u64;
        if arrival == now {
            apply_row(proj, pre, target);
        } else {
            proj.queue.rows[(arrival % len) as usize].push(pre as u32);
        }
        return;
    }
    let own = target.group.get(pre).copied();
    for post in 0..proj.n_post {
        if proj.connectivity == Connectivity::CrossGroup && Some(target.group[post]) == own {
            continue;
        }
        let arrival = base + proj.delay_steps[pre * proj.n_post + post] as u64;
        if arrival == now {
            apply_one(proj, pre, post, target);
        } else {
            proj.queue.pairs[(arrival % len) as usize].push((pre as u32, post as u32));
        }
    }
}

/// Applies everything due at step `now`.
fn deliver_due(proj: &mut Projection, now: u64, target: &mut NeuronPopulation) {
    let slot = (now % proj.ring_len as u64) as usize;
    if proj.uniform_delay.is_some() {
        let due = std::mem::take(&mut proj.queue.rows[slot]);
        for &pre in &due {
            apply_row(proj, pre as usize, target);
        }
        let mut due = due;
        due.clear();
        proj.queue.rows[slot] = due;
    } else {
        let due = std::mem::take(&mut proj.queue.pairs[slot]);
        for &(pre, post) in &due {
            apply_one(proj, pre as usize, post as usize, target);
        }
        let mut due = due;
        due.clear();
        proj.queue.pairs[slot] = due;
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    pub layer: usize,
    /// Base network this population came from; also its inhibition scope.
    pub scope: usize,
    pub hyper: HyperParams,
    pub neurons: NeuronPopulation,
    factors: StepFactors,
}

impl Population {
    pub fn new(layer: usize, scope: usize, size: usize, hyper: HyperParams, dt: f64) -> Self {
        let params = hyper.neuron();
        Population {
            layer,
            scope,
            hyper,
            neurons: NeuronPopulation::new(size, params),
            factors: StepFactors::new(&params, dt),
        }
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }
}

/// Spikes of hidden neurons in one window, sorted by (time, population, index).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpikeRecord {
    pub dt: f64,
    /// (step, population, neuron); the spike time is `(step + 1) * dt`.
    pub events: Vec<(u32, u16, u32)>,
    /// Spike counts per population and neuron.
    pub counts: Vec<Vec<u32>>,
    pub steps: u64,
}

impl SpikeRecord {
    pub fn time_ms(&self, event: usize) -> f64 {
        (self.events[event].0 as f64 + 1.0) * self.dt
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| c as u64).sum()
    }
}

/// Input spikes as (step, input neuron), sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputEvents {
    pub events: Vec<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub dt: f64,
    pub n_input: usize,
    pub populations: Vec<Population>,
    pub projections: Vec<Projection>,
    pub phase: Phase,
    pub seed: u64,
    /// Number of hidden layers.
    pub n_layers: usize,
}

fn random_weights<R: Rng>(rng: &mut R, n: usize, w_max: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * w_max).collect()
}

fn random_delays<R: Rng>(rng: &mut R, n: usize, max_delay: f64) -> Vec<f64> {
    if max_delay <= 0.0 {
        return vec![0.0; n];
    }
    (0..n).map(|_| rng.random::<f64>() * max_delay).collect()
}

impl Network {
    /// Fresh network with random normalized weights and sampled delays, in
    /// the training phase.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let dt = spec.dt;
        let mut populations = Vec::new();
        for (layer, (&size, hyper)) in spec.layer_sizes.iter().zip(&spec.hyper).enumerate() {
            populations.push(Population::new(layer, 0, size, *hyper, dt));
        }
        let mut projections = Vec::new();
        for (k, post) in populations.iter().enumerate() {
            let hp = post.hyper;
            let sources = std::iter::once((Source::Input, spec.n_input))
                .chain((0..k).map(|j| (Source::Hidden(j), populations[j].len())));
            for (source, n_pre) in sources {
                let n = n_pre * post.len();
                let salt = match source {
                    Source::Input => 0,
                    Source::Hidden(j) => j as u64 + 1,
                };
                let mut w_rng = rng::stream(seed, &[rng::SALT_WEIGHTS, k as u64, salt]);
                let mut d_rng = rng::stream(seed, &[rng::SALT_DELAYS, k as u64, salt]);
                let (stdp, max_delay) = match source {
                    Source::Input => (hp.stdp_input(), hp.max_delay_ie),
                    Source::Hidden(_) => (hp.stdp_hidden(), hp.max_delay_ee),
                };
                let mut weights = random_weights(&mut w_rng, n, stdp.w_max);
                plasticity::normalize_incoming(&mut weights, n_pre, post.len(), &stdp);
                let delays = random_delays(&mut d_rng, n, max_delay);
                projections.push(Projection::new(
                    source,
                    k,
                    n_pre,
                    post.len(),
                    Sign::Excitatory,
                    Connectivity::Full,
                    weights,
                    delays,
                    Some(stdp),
                    dt,
                ));
            }
        }
        Ok(Network {
            dt,
            n_input: spec.n_input,
            populations,
            projections,
            phase: Phase::Train,
            seed,
            n_layers: spec.layer_sizes.len(),
        })
    }

    pub fn layer_populations(&self, layer: usize) -> impl Iterator<Item = &Population> + '_ {
        self.populations.iter().filter(move |p| p.layer == layer)
    }

    pub fn layer_size(&self, layer: usize) -> usize {
        self.layer_populations(layer).map(Population::len).sum()
    }

    pub fn excitatory(&self) -> impl Iterator<Item = &Projection> + '_ {
        self.projections.iter().filter(|p| p.sign == Sign::Excitatory)
    }

    pub fn inhibitory_synapse_count(&self) -> usize {
        self.projections
            .iter()
            .filter(|p| p.sign == Sign::Inhibitory)
            .map(|p| p.synapse_count(&self.populations[p.target].neurons.group))
            .sum()
    }

    /// Eval adds lateral inhibition between different-group neurons of each
    /// population; Train removes it. Excitatory synapses are never touched.
    pub fn set_phase(&mut self, phase: Phase) {
        self.projections.retain(|p| p.sign == Sign::Excitatory);
        if phase == Phase::Eval {
            for (idx, pop) in self.populations.iter().enumerate() {
                let n = pop.len();
                let hp = pop.hyper;
                let groups = &pop.neurons.group;
                let mut weights = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        if groups[a] != groups[b] {
                            weights[a * n + b] = hp.dw_inhib;
                        }
                    }
                }
                let mut d_rng = rng::stream(self.seed, &[rng::SALT_INHIBITION, idx as u64]);
                let mut delays = random_delays(&mut d_rng, n * n, hp.max_delay_ie);
                for a in 0..n {
                    for b in 0..n {
                        if groups[a] == groups[b] {
                            delays[a * n + b] = 0.0;
                        }
                    }
                }
                self.projections.push(Projection::new(
                    Source::Hidden(idx),
                    idx,
                    n,
                    n,
                    Sign::Inhibitory,
                    Connectivity::CrossGroup,
                    weights,
                    delays,
                    None,
                    self.dt,
                ));
            }
        }
        self.phase = phase;
    }

    /// Back to rest: membrane, conductances, refractory clocks, traces and
    /// queued spikes. Thresholds and weights persist.
    pub fn reset_dynamics(&mut self) {
        self.populations.iter_mut().for_each(|p| p.neurons.reset_dynamics());
        self.projections.iter_mut().for_each(Projection::reset_dynamics);
    }

    /// Absolute firing thresholds per layer.
    pub fn thresholds(&self) -> Vec<Vec<f64>> {
        self.populations.iter().map(|p| p.neurons.thresholds()).collect()
    }

    /// Adaptive threshold offsets per layer, for exact save and restore.
    pub fn adaptation(&self) -> Vec<Vec<f64>> {
        self.populations.iter().map(|p| p.neurons.theta.clone()).collect()
    }

    pub fn restore_adaptation(&mut self, theta: &[Vec<f64>]) {
        for (p, t) in self.populations.iter_mut().zip(theta) {
            p.neurons.theta.copy_from_slice(t);
        }
    }

    pub fn normalize_plastic(&mut self) {
        for proj in self.projections.iter_mut() {
            if let Some(stdp) = proj.stdp {
                plasticity::normalize_incoming(&mut proj.weights, proj.n_pre, proj.n_post, &stdp);
            }
        }
    }

    /// Spike totals per group over the last hidden layer.
    pub fn group_counts(&self, record: &SpikeRecord) -> [u64; 10] {
        let last = self.n_layers - 1;
        let mut out = [0u64; 10];
        for (pop, counts) in self.populations.iter().zip(&record.counts) {
            if pop.layer == last {
                for (&g, &c) in pop.neurons.group.iter().zip(counts) {
                    out[g as usize] += c as u64;
                }
            }
        }
        out
    }

    /// Spike totals per hidden layer.
    pub fn layer_totals(&self, record: &SpikeRecord) -> Vec<u64> {
        let mut out = vec![0u64; self.n_layers];
        for (pop, counts) in self.populations.iter().zip(&record.counts) {
            out[pop.layer] += counts.iter().map(|&c| c as u64).sum::<u64>();
        }
        out
    }

    /// Runs `steps` fixed steps from the current state.
    ///
    /// Each step: queue this step's input spikes and apply everything due,
    /// integrate, threshold, schedule the new hidden spikes for the next step
    /// onwards, then (if `label` is given and the network is training) decay
    /// traces and apply presynaptic then postsynaptic plasticity.
    pub fn run_window(
        &mut self,
        input: &InputEvents,
        steps: u64,
        label: Option<u8>,
    ) -> Result<SpikeRecord> {
        let learn = label.filter(|_| self.phase == Phase::Train);
        let trace_factors: Vec<Option<TraceFactors>> = self
            .projections
            .iter()
            .map(|p| p.stdp.map(|s| TraceFactors::new(&s, self.dt)))
            .collect();
        let mut fired: Vec<Vec<u32>> = vec![Vec::new(); self.populations.len()];
        let mut events = Vec::new();
        let mut cursor = 0;
        let mut input_now: Vec<u32> = Vec::new();

        for step in 0..steps {
            input_now.clear();
            while cursor < input.events.len() && input.events[cursor].0 as u64 == step {
                input_now.push(input.events[cursor].1);
                cursor += 1;
            }
            while cursor < input.events.len() && (input.events[cursor].0 as u64) < step {
                cursor += 1;
            }

            for proj in self.projections.iter_mut() {
                let target = &mut self.populations[proj.target].neurons;
                if proj.source == Source::Input {
                    for &i in &input_now {
                        emit(proj, i as usize, step, step, target);
                    }
                }
                deliver_due(proj, step, target);
            }

            for (pop, out) in self.populations.iter_mut().zip(fired.iter_mut()) {
                pop.neurons.advance(&pop.factors, step)?;
                pop.neurons.fire_and_reset(&pop.factors, step, out);
            }

            for proj in self.projections.iter_mut() {
                if let Source::Hidden(src) = proj.source {
                    let target = &mut self.populations[proj.target].neurons;
                    for &i in &fired[src] {
                        emit(proj, i as usize, step + 1, step, target);
                    }
                }
            }

            if let Some(label) = learn {
                for (proj, tf) in self.projections.iter_mut().zip(&trace_factors) {
                    let (Some(stdp), Some(tf)) = (proj.stdp, tf) else {
                        continue;
                    };
                    let pre_spikes: &[u32] = match proj.source {
                        Source::Input => &input_now,
                        Source::Hidden(j) => &fired[j],
                    };
                    plasticity::learn_step(
                        &mut proj.weights,
                        &mut proj.traces,
                        &stdp,
                        tf,
                        pre_spikes,
                        &fired[proj.target],
                        &self.populations[proj.target].neurons.group,
                        label,
                    );
                }
            }

            for (p, out) in fired.iter().enumerate() {
                events.extend(out.iter().map(|&i| (step as u32, p as u16, i)));
            }
        }

        Ok(SpikeRecord {
            dt: self.dt,
            events,
            counts: self
                .populations
                .iter()
                .map(|p| p.neurons.spike_count.clone())
                .collect(),
            steps,
        })
    }

    /// True when no spike is waiting in any delay queue.
    pub fn queues_empty(&self) -> bool {
        self.projections.iter().all(|p| p.queue.is_empty())
    }
}
