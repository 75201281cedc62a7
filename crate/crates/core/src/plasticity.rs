//! Label-gated minimal triplet STDP with weight normalization.
//!
//! Only pair depression (`A2-`) and triplet potentiation (`A3+`) are active,
//! so the traces kept are `r1` (per presynaptic neuron) and `o1`, `o2` (per
//! postsynaptic neuron). Weight matrices are `pre x post`, row-major.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdpParams {
    pub a2_minus: f64,
    pub a3_plus: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub tau_y: f64,
    pub w_max: f64,
    pub w_shift: f64,
    pub w_scale: f64,
    pub lambda: f64,
}

/// Soft saturation of potentiation; exactly 0.5 at `w = w_max * (1 - w_shift)`.
pub fn theta_w(w: f64, p: &StdpParams) -> f64 {
    let x = (2.0 * (w + p.w_max * (p.w_shift - 0.5)) / p.w_max - 1.0) / p.w_scale;
    0.5 - 0.5 * x.tanh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBlock {
    pub r1: Vec<f64>,
    pub o1: Vec<f64>,
    pub o2: Vec<f64>,
}

impl TraceBlock {
    pub fn new(n_pre: usize, n_post: usize) -> Self {
        TraceBlock {
            r1: vec![0.0; n_pre],
            o1: vec![0.0; n_post],
            o2: vec![0.0; n_post],
        }
    }

    pub fn clear(&mut self) {
        self.r1.fill(0.0);
        self.o1.fill(0.0);
        self.o2.fill(0.0);
    }

    pub fn decay(&mut self, f: &TraceFactors) {
        self.r1.iter_mut().for_each(|x| *x *= f.plus);
        self.o1.iter_mut().for_each(|x| *x *= f.minus);
        self.o2.iter_mut().for_each(|x| *x *= f.y);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceFactors {
    pub plus: f64,
    pub minus: f64,
    pub y: f64,
}

impl TraceFactors {
    pub fn new(p: &StdpParams, dt: f64) -> Self {
        TraceFactors {
            plus: (-dt / p.tau_plus).exp(),
            minus: (-dt / p.tau_minus).exp(),
            y: (-dt / p.tau_y).exp(),
        }
    }
}

/// One step of the plasticity hook: decay all traces, apply the step's
/// presynaptic spikes, then its postsynaptic spikes. A post neuron
/// potentiates only when `label` equals its group.
#[allow(clippy::too_many_arguments)]
pub fn learn_step(
    weights: &mut [f64],
    traces: &mut TraceBlock,
    p: &StdpParams,
    f: &TraceFactors,
    pre_spikes: &[u32],
    post_spikes: &[u32],
    groups: &[u8],
    label: u8,
) {
    traces.decay(f);
    for &i in pre_spikes {
        on_pre_spike(weights, traces, p, i as usize);
    }
    for &j in post_spikes {
        let j = j as usize;
        on_post_spike(weights, traces, p, j, groups[j] == label);
    }
}

/// Pair depression on a presynaptic spike of `pre`, then the `r1` increment.
pub fn on_pre_spike(
    weights: &mut [f64],
    traces: &mut TraceBlock,
    p: &StdpParams,
    pre: usize,
) {
    let n_post = traces.o1.len();
    let row = &mut weights[pre * n_post..(pre + 1) * n_post];
    for (w, &o1) in row.iter_mut().zip(&traces.o1) {
        if o1 != 0.0 {
            *w = (*w - o1 * p.a2_minus).clamp(0.0, p.w_max);
        }
    }
    traces.r1[pre] += 1.0;
}

/// Supervised triplet potentiation on a postsynaptic spike of `post`.
///
/// Potentiation only applies when the neuron's group matches the stimulus
/// label; `o2` enters with its value from just before this spike. The
/// postsynaptic traces are incremented in either case.
pub fn on_post_spike(
    weights: &mut [f64],
    traces: &mut TraceBlock,
    p: &StdpParams,
    post: usize,
    label_matches: bool,
) {
    let n_post = traces.o1.len();
    let o2_before = traces.o2[post];
    if label_matches && o2_before != 0.0 {
        let gain = p.a3_plus * o2_before;
        for (i, &r1) in traces.r1.iter().enumerate() {
            if r1 != 0.0 {
                let w = &mut weights[i * n_post + post];
                *w = (*w + r1 * gain * theta_w(*w, p)).clamp(0.0, p.w_max);
            }
        }
    }
    traces.o1[post] += 1.0;
    traces.o2[post] += 1.0;
}

/// Rescales each postsynaptic column so its mean incoming weight is
/// `lambda * w_max`. All-zero columns are left alone.
///
/// If scaling would push weights past `w_max`, those are pinned at `w_max` and
/// the rest of the column is rescaled to make up the total. The mean is still
/// exact whenever the column has enough non-zero weights to reach it.
pub fn normalize_incoming(weights: &mut [f64], n_pre: usize, n_post: usize, p: &StdpParams) {
    let target = p.lambda * p.w_max;
    let mut totals = vec![0.0; n_post];
    for row in weights.chunks_exact(n_post) {
        for (t, &w) in totals.iter_mut().zip(row) {
            *t += w;
        }
    }
    let scale: Vec<f64> = totals
        .iter()
        .map(|&tot| if tot > 0.0 { target / (tot / n_pre as f64) } else { 1.0 })
        .collect();
    let mut overflow = false;
    for row in weights.chunks_exact_mut(n_post) {
        for (w, &s) in row.iter_mut().zip(&scale) {
            *w *= s;
            overflow |= *w > p.w_max;
        }
    }
    if overflow {
        for (j, &tot) in totals.iter().enumerate() {
            if tot > 0.0 {
                refill_column(weights, n_pre, n_post, j, target * n_pre as f64, p.w_max);
            }
        }
    }
}

fn refill_column(weights: &mut [f64], n_pre: usize, n_post: usize, j: usize, want: f64, w_max: f64) {
    loop {
        let mut pinned = 0.0;
        let mut free = 0.0;
        let mut over = false;
        for i in 0..n_pre {
            let w = weights[i * n_post + j];
            if w >= w_max {
                pinned += w_max;
                over |= w > w_max;
            } else {
                free += w;
            }
        }
        if !over && (pinned + free - want).abs() <= 1e-12 * want {
            return;
        }
        let s = if free > 0.0 { ((want - pinned) / free).max(0.0) } else { 0.0 };
        for i in 0..n_pre {
            let w = &mut weights[i * n_post + j];
            *w = if *w >= w_max { w_max } else { *w * s };
        }
        if free == 0.0 || (!over && s == 1.0) {
            return;
        }
    }
}

/// Mean incoming weight per postsynaptic neuron.
pub fn column_means(weights: &[f64], n_pre: usize, n_post: usize) -> Vec<f64> {
    let mut totals = vec![0.0; n_post];
    for row in weights.chunks_exact(n_post) {
        for (t, &w) in totals.iter_mut().zip(row) {
            *t += w;
        }
    }
    totals.into_iter().map(|t| t / n_pre as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyper::HyperParams;

    fn params() -> StdpParams {
        HyperParams::base().stdp_input()
    }

    #[test]
    fn trace_decay() {
        let p = params();
        let mut tb = TraceBlock::new(1, 1);
        tb.r1[0] = 1.0;
        tb.decay(&TraceFactors::new(&p, p.tau_plus));
        assert!((tb.r1[0] - (-1.0f64).exp()).abs() < 1e-15);

        let mut zero = TraceBlock::new(3, 2);
        zero.decay(&TraceFactors::new(&p, 1.0));
        assert_eq!(zero, TraceBlock::new(3, 2));

        let mut a = TraceBlock::new(1, 1);
        a.r1[0] = 1.0;
        a.o1[0] = 2.0;
        a.o2[0] = 3.0;
        let mut b = a.clone();
        let half = TraceFactors::new(&p, 0.35);
        a.decay(&half);
        a.decay(&half);
        b.decay(&TraceFactors::new(&p, 0.7));
        assert!((a.r1[0] - b.r1[0]).abs() < 1e-12);
        assert!((a.o1[0] - b.o1[0]).abs() < 1e-12);
        assert!((a.o2[0] - b.o2[0]).abs() < 1e-12);
    }

    #[test]
    fn pre_spike_without_post_history() {
        let p = params();
        let mut w = vec![1.0, 2.0, 3.0, 4.0];
        let mut tb = TraceBlock::new(2, 2);
        on_pre_spike(&mut w, &mut tb, &p, 1);
        assert_eq!(w, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(tb.r1, vec![0.0, 1.0]);
    }

    #[test]
    fn depression_clamps_at_zero() {
        let p = params();
        let mut w = vec![0.005];
        let mut tb = TraceBlock::new(1, 1);
        tb.o1[0] = 1.0;
        on_pre_spike(&mut w, &mut tb, &p, 0);
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn depression_arithmetic() {
        let p = StdpParams {
            a2_minus: 1e-2,
            ..params()
        };
        let mut w = vec![1.0];
        let mut tb = TraceBlock::new(1, 1);
        tb.o1[0] = 0.5;
        on_pre_spike(&mut w, &mut tb, &p, 0);
        assert!((w[0] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn mismatched_group_only_bumps_traces() {
        let p = params();
        let mut w = vec![1.0, 2.0];
        let mut tb = TraceBlock::new(2, 1);
        tb.r1 = vec![1.0, 1.0];
        tb.o2[0] = 1.0;
        on_post_spike(&mut w, &mut tb, &p, 0, false);
        assert_eq!(w, vec![1.0, 2.0]);
        assert_eq!(tb.o1[0], 1.0);
        assert_eq!(tb.o2[0], 2.0);
    }

    #[test]
    fn first_post_spike_does_not_potentiate() {
        let p = params();
        let mut w = vec![1.0];
        let mut tb = TraceBlock::new(1, 1);
        tb.r1[0] = 5.0;
        on_post_spike(&mut w, &mut tb, &p, 0, true);
        assert_eq!(w[0], 1.0);
    }

    #[test]
    fn potentiation_from_zero() {
        let p = params();
        let mut w = vec![0.0];
        let mut tb = TraceBlock::new(1, 1);
        tb.r1[0] = 1.0;
        tb.o2[0] = 1.0;
        on_post_spike(&mut w, &mut tb, &p, 0, true);
        let gate = theta_w(0.0, &p);
        assert!((gate - 0.99999).abs() < 1e-5, "{gate}");
        assert!((w[0] - 6.2e-3 * gate).abs() < 1e-15);
    }

    #[test]
    fn theta_w_anchors() {
        let p = params();
        assert!((theta_w(p.w_max * (1.0 - p.w_shift), &p) - 0.5).abs() < 1e-12);
        // (2*(0 + 29*(-0.2))/29 - 1)/0.23 = -1.4/0.23
        let at_zero = 0.5 - 0.5 * (-1.4f64 / 0.23).tanh();
        assert!((theta_w(0.0, &p) - at_zero).abs() < 1e-15);
        let at_max = 0.5 - 0.5 * (0.6f64 / 0.23).tanh();
        assert!((theta_w(p.w_max, &p) - at_max).abs() < 1e-15);
        assert!((theta_w(p.w_max, &p) - 0.0054).abs() < 1e-4);
    }

    #[test]
    fn normalization_examples() {
        let p = params();
        let mut w = vec![0.1; 784];
        normalize_incoming(&mut w, 784, 1, &p);
        assert!(w.iter().all(|&x| (x - 8.12).abs() < 1e-12));

        let mut fixed = vec![8.12; 784 * 2];
        let before = fixed.clone();
        normalize_incoming(&mut fixed, 784, 2, &p);
        for (a, b) in fixed.iter().zip(&before) {
            assert!((a - b).abs() < 1e-12);
        }

        let mut w = vec![0.0, 1.0, 0.0, 3.0];
        normalize_incoming(&mut w, 2, 2, &p);
        assert_eq!(w[0], 0.0);
        assert_eq!(w[2], 0.0);
        assert!((column_means(&w, 2, 2)[1] - 8.12).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn theta_w_is_decreasing_and_bounded(
                shift in 0.0f64..1.0,
                scale in 0.05f64..1.0,
                a in 0.0f64..1.0,
                b in 0.0f64..1.0,
            ) {
                let p = StdpParams { w_shift: shift, w_scale: scale, ..params() };
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assume!(hi - lo > 1e-3);
                let (t_lo, t_hi) = (theta_w(lo * p.w_max, &p), theta_w(hi * p.w_max, &p));
                prop_assert!(t_lo >= t_hi);
                prop_assert!((0.0..=1.0).contains(&t_lo));
                prop_assert!((0.0..=1.0).contains(&t_hi));
            }

            #[test]
            fn weights_stay_bounded(
                ops in proptest::collection::vec((any::<bool>(), 0usize..3, 0usize..3, any::<bool>()), 1..200),
                init in proptest::collection::vec(0.0f64..29.0, 9),
            ) {
                let p = StdpParams { a2_minus: 0.5, a3_plus: 2.0, ..params() };
                let mut w = init;
                let mut tb = TraceBlock::new(3, 3);
                let f = TraceFactors::new(&p, 1.0);
                for (is_pre, i, j, matches) in ops {
                    tb.decay(&f);
                    if is_pre {
                        on_pre_spike(&mut w, &mut tb, &p, i);
                    } else {
                        on_post_spike(&mut w, &mut tb, &p, j, matches);
                    }
                    prop_assert!(w.iter().all(|&x| (0.0..=p.w_max).contains(&x)));
                }
            }

            #[test]
            fn normalized_mean_is_exact(
                w in proptest::collection::vec(prop_oneof![Just(0.0f64), 0.0f64..29.0, 1e-3f64..1e-2], 12),
            ) {
                let p = params();
                let target = p.lambda * p.w_max;
                let nonzero: Vec<usize> = (0..3)
                    .map(|j| (0..4).filter(|i| w[i * 3 + j] > 0.0).count())
                    .collect();
                let mut w = w;
                normalize_incoming(&mut w, 4, 3, &p);
                prop_assert!(w.iter().all(|&x| (0.0..=p.w_max).contains(&x)));
                for (m, nz) in column_means(&w, 4, 3).into_iter().zip(nonzero) {
                    if nz as f64 * p.w_max >= target * 4.0 {
                        prop_assert!(((m - target) / target).abs() < 1e-12, "{m}");
                    } else {
                        prop_assert!(m <= target);
                    }
                }
            }
        }
    }
}
