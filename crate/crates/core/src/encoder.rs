//! Poisson rate coding of images and the adaptive-intensity presentation loop.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{InputEvents, Network, SpikeRecord};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingParams {
    /// Rate in Hz of a full-intensity (255) pixel at scale 1.
    pub r_max: f64,
    pub duration: f64,
    pub intensity_step: f64,
    pub min_layer_spikes: u64,
}

impl Default for EncodingParams {
    fn default() -> Self {
        EncodingParams {
            r_max: 63.75,
            duration: 500.0,
            intensity_step: 0.25,
            min_layer_spikes: 5,
        }
    }
}

impl EncodingParams {
    pub fn steps(&self, dt: f64) -> u64 {
        (self.duration / dt).round() as u64
    }

    /// The intensity scales tried in order: step, 2*step, ..., 1.
    pub fn scales(&self) -> Vec<f64> {
        let n = (1.0 / self.intensity_step).ceil() as usize;
        (1..=n).map(|k| (k as f64 * self.intensity_step).min(1.0)).collect()
    }
}

/// Spike steps per input neuron, strictly increasing, all below `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    pub dt: f64,
    pub steps: u64,
    pub spikes: Vec<Vec<u32>>,
}

impl SpikeTrain {
    pub fn count(&self) -> usize {
        self.spikes.iter().map(Vec::len).sum()
    }

    pub fn to_events(&self) -> InputEvents {
        let mut events: Vec<(u32, u32)> = self
            .spikes
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&t| (t, i as u32)))
            .collect();
        events.sort_unstable();
        InputEvents { events }
    }
}

/// Bernoulli spiking with per-step probability `rate * dt`, sampled by
/// geometric gaps between spikes (the same distribution, in O(spikes)).
pub fn encode_poisson<R: Rng>(
    pixels: &[u8],
    scale: f64,
    ep: &EncodingParams,
    dt: f64,
    rng: &mut R,
) -> SpikeTrain {
    let steps = ep.steps(dt);
    let spikes = pixels
        .iter()
        .map(|&px| {
            let rate_hz = scale * (px as f64 / 255.0) * ep.r_max;
            let p = (rate_hz * dt * 1e-3).min(1.0);
            let mut out = Vec::new();
            if p <= 0.0 {
                return out;
            }
            let gap = Geometric::new(p).expect("probability in (0, 1]");
            let mut t = gap.sample(rng);
            while t < steps {
                out.push(t as u32);
                t += 1 + gap.sample(rng);
            }
            out
        })
        .collect();
    SpikeTrain { dt, steps, spikes }
}

#[derive(Debug, Clone)]
pub struct Presentation {
    pub record: SpikeRecord,
    pub final_scale: f64,
    pub attempts: usize,
}

/// Presents an image at increasing intensity until every hidden layer emits
/// at least `min_layer_spikes` spikes or full intensity is reached.
///
/// Dynamic state is reset before each attempt; thresholds and weights carry
/// over. `label` enables supervised plasticity (training phase only).
pub fn present_adaptive(
    net: &mut Network,
    pixels: &[u8],
    ep: &EncodingParams,
    label: Option<u8>,
    seed: u64,
) -> Result<Presentation> {
    let steps = ep.steps(net.dt);
    let scales = ep.scales();
    let mut attempts = 0;
    let mut last = None;
    for (k, &scale) in scales.iter().enumerate() {
        net.reset_dynamics();
        let mut r = rng::stream(seed, &[rng::SALT_ENCODE, k as u64]);
        let train = encode_poisson(pixels, scale, ep, net.dt, &mut r);
        let record = net.run_window(&train.to_events(), steps, label)?;
        attempts += 1;
        let enough = net
            .layer_totals(&record)
            .iter()
            .all(|&n| n >= ep.min_layer_spikes);
        last = Some((record, scale));
        if enough {
            break;
        }
    }
    let (record, final_scale) = last.expect("at least one scale");
    Ok(Presentation {
        record,
        final_scale,
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyper::HyperParams;
    use crate::network::NetworkSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blank_pixels_never_spike() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = encode_poisson(&[0u8; 784], 1.0, &EncodingParams::default(), 0.1, &mut rng);
        assert_eq!(train.count(), 0);
    }

    #[test]
    fn trains_are_sorted_and_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pixels: Vec<u8> = (0..784).map(|i| (i % 256) as u8).collect();
        let train = encode_poisson(&pixels, 1.0, &EncodingParams::default(), 0.1, &mut rng);
        for s in &train.spikes {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&t| (t as u64) < train.steps));
        }
    }

    #[test]
    fn full_intensity_mean_count() {
        // 63.75 Hz for 0.5 s: expected 31.875 spikes, per-step Bernoulli.
        let ep = EncodingParams::default();
        let n = 1000usize;
        let p: f64 = 63.75 * 0.1e-3;
        let steps: f64 = 5000.0;
        let mean = steps * p;
        let sd = (steps * p * (1.0 - p)).sqrt();
        assert!((mean - 31.875).abs() < 1e-9);
        let total: usize = (0..n as u64)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                encode_poisson(&[255], 1.0, &ep, 0.1, &mut rng).count()
            })
            .sum();
        let sample_mean = total as f64 / n as f64;
        assert!((sample_mean - mean).abs() < 3.0 * sd / (n as f64).sqrt(), "{sample_mean}");
    }

    #[test]
    fn quarter_scale_quarters_the_rate() {
        let ep = EncodingParams::default();
        let count = |scale: f64| -> f64 {
            (0..400u64)
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    encode_poisson(&[255; 16], scale, &ep, 0.1, &mut rng).count()
                })
                .sum::<usize>() as f64
        };
        let ratio = count(0.25) / count(1.0);
        // 400*16 trains: the ratio's sampling error is well under 0.02.
        assert!((ratio - 0.25).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn scales() {
        assert_eq!(EncodingParams::default().scales(), vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn blank_image_uses_every_scale() {
        let mut net = Network::build(&NetworkSpec::base(HyperParams::base()), 0).unwrap();
        let out = present_adaptive(&mut net, &[0u8; 784], &EncodingParams::default(), Some(0), 1).unwrap();
        assert_eq!(out.attempts, 4);
        assert_eq!(out.final_scale, 1.0);
        assert_eq!(out.record.total(), 0);
    }

    #[test]
    fn responsive_network_stops_early() {
        let mut net = Network::build(&NetworkSpec::base(HyperParams::base()), 0).unwrap();
        let out = present_adaptive(&mut net, &[255u8; 784], &EncodingParams::default(), None, 1).unwrap();
        assert_eq!(out.attempts, 1);
        assert_eq!(out.final_scale, 0.25);
        assert!(out.record.total() >= 5);
    }
}
