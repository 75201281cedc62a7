//! Hyperparameters, their search ranges, and seeded sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};
use crate::neuron::NeuronParams;
use crate::plasticity::StdpParams;

/// Every tunable of one hidden layer, plus the fixed membrane constants.
///
/// Times are in ms, potentials in mV, weights and conductances are unitless.
/// `w_ee_max`, `lambda_ee` and `max_delay_ee` govern projections *into* this
/// layer from earlier hidden layers and are ignored for the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub e_rest: f64,
    pub e_exc: f64,
    pub e_inh: f64,
    pub v_thres: f64,
    pub v_reset: f64,
    pub t_refrac: f64,

    pub tau_adpt: f64,
    pub dv_t: f64,
    pub tau_m: f64,
    pub tau_ge: f64,
    pub tau_gi: f64,
    pub w_ie_max: f64,
    pub lambda_ie: f64,
    pub w_ee_max: f64,
    pub lambda_ee: f64,
    pub dw_inhib: f64,
    pub max_delay_ee: f64,
    pub max_delay_ie: f64,
    pub v_tscale: f64,
    pub v_tshift: f64,
    pub w_scale: f64,
    pub w_shift: f64,

    pub a2_minus: f64,
    pub a3_plus: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub tau_y: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self::base()
    }
}

impl HyperParams {
    /// The validated single-layer configuration.
    pub fn base() -> Self {
        HyperParams {
            e_rest: -65.0,
            e_exc: 0.0,
            e_inh: -100.0,
            v_thres: -52.0,
            v_reset: -65.0,
            t_refrac: 5.0,

            tau_adpt: 1e6,
            dv_t: 4.4e-3,
            tau_m: 200.0,
            tau_ge: 0.4,
            tau_gi: 4.0,
            w_ie_max: 29.0,
            lambda_ie: 0.28,
            w_ee_max: 100.0,
            lambda_ee: 0.15,
            dw_inhib: 0.64,
            max_delay_ee: 50.0,
            max_delay_ie: 0.0,
            v_tscale: 0.18,
            v_tshift: 0.10,
            w_scale: 0.23,
            w_shift: 0.30,

            a2_minus: 7e-3,
            a3_plus: 6.2e-3,
            tau_plus: 16.8,
            tau_minus: 33.7,
            tau_y: 114.0,
        }
    }

    /// The validated two-hidden-layer configuration, one entry per layer.
    pub fn two_layer() -> [Self; 2] {
        let shared = HyperParams {
            tau_adpt: 1e6,
            w_ee_max: 100.0,
            lambda_ee: 0.15,
            max_delay_ee: 50.0,
            v_tscale: 0.21,
            v_tshift: 0.40,
            w_scale: 0.14,
            w_shift: 0.40,
            ..Self::base()
        };
        [
            HyperParams {
                dv_t: 4.0e-4,
                tau_m: 170.0,
                tau_ge: 1.0,
                tau_gi: 3.0,
                w_ie_max: 58.0,
                lambda_ie: 0.34,
                max_delay_ie: 10.0,
                dw_inhib: 1.4,
                ..shared
            },
            HyperParams {
                dv_t: 3.0e-3,
                tau_m: 190.0,
                tau_ge: 0.3,
                tau_gi: 3.0,
                w_ie_max: 72.0,
                lambda_ie: 0.24,
                max_delay_ie: 0.0,
                dw_inhib: 2.1,
                ..shared
            },
        ]
    }

    pub fn neuron(&self) -> NeuronParams {
        NeuronParams {
            e_rest: self.e_rest,
            e_exc: self.e_exc,
            e_inh: self.e_inh,
            v_thres: self.v_thres,
            v_reset: self.v_reset,
            tau_m: self.tau_m,
            tau_ge: self.tau_ge,
            tau_gi: self.tau_gi,
            tau_adpt: self.tau_adpt,
            dv_t: self.dv_t,
            v_tshift: self.v_tshift,
            v_tscale: self.v_tscale,
            t_refrac: self.t_refrac,
        }
    }

    fn stdp(&self, w_max: f64, lambda: f64) -> StdpParams {
        StdpParams {
            a2_minus: self.a2_minus,
            a3_plus: self.a3_plus,
            tau_plus: self.tau_plus,
            tau_minus: self.tau_minus,
            tau_y: self.tau_y,
            w_max,
            w_shift: self.w_shift,
            w_scale: self.w_scale,
            lambda,
        }
    }

    /// Plasticity of the input -> hidden projection.
    pub fn stdp_input(&self) -> StdpParams {
        self.stdp(self.w_ie_max, self.lambda_ie)
    }

    /// Plasticity of hidden -> hidden projections into this layer.
    pub fn stdp_hidden(&self) -> StdpParams {
        self.stdp(self.w_ee_max, self.lambda_ee)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SnnError::BadSpec(msg.to_string()));
        if !(self.e_inh < self.e_rest && self.e_rest < self.v_thres && self.v_thres < self.e_exc) {
            return bad("need e_inh < e_rest < v_thres < e_exc");
        }
        let taus = [
            self.tau_m,
            self.tau_ge,
            self.tau_gi,
            self.tau_adpt,
            self.tau_plus,
            self.tau_minus,
            self.tau_y,
        ];
        if taus.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad("time constants must be positive");
        }
        if !(self.w_ie_max > 0.0 && self.w_ee_max > 0.0) {
            return bad("w_max must be positive");
        }
        if !(self.v_tscale > 0.0 && self.w_scale > 0.0) {
            return bad("saturation scales must be positive");
        }
        if self.max_delay_ie < 0.0 || self.max_delay_ee < 0.0 || self.t_refrac < 0.0 {
            return bad("delays and refractory period must be non-negative");
        }
        Ok(())
    }

    /// Field names and values in a fixed order, used for CSV columns.
    pub fn named_values(&self) -> Vec<(&'static str, f64)> {
        let v = serde_json::to_value(self).expect("plain struct serializes");
        FIELD_ORDER
            .iter()
            .map(|&name| (name, v[name].as_f64().expect("numeric field")))
            .collect()
    }

    pub fn from_named_values<'a>(
        pairs: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let mut v = serde_json::to_value(Self::base()).expect("plain struct serializes");
        for (name, value) in pairs {
            if !FIELD_ORDER.contains(&name) {
                return Err(SnnError::Csv(format!("unknown hyperparameter column {name}")));
            }
            v[name] = serde_json::json!(value);
        }
        serde_json::from_value(v).map_err(|e| SnnError::Csv(e.to_string()))
    }
}

pub const FIELD_ORDER: &[&str] = &[
    "tau_adpt",
    "dv_t",
    "tau_m",
    "tau_ge",
    "tau_gi",
    "w_ie_max",
    "lambda_ie",
    "w_ee_max",
    "lambda_ee",
    "dw_inhib",
    "max_delay_ee",
    "max_delay_ie",
    "a2_minus",
    "v_tscale",
    "v_tshift",
    "w_scale",
    "w_shift",
    "a3_plus",
    "tau_plus",
    "tau_minus",
    "tau_y",
    "e_rest",
    "e_exc",
    "e_inh",
    "v_thres",
    "v_reset",
    "t_refrac",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    /// Ranges covering two or more decades are sampled log-uniformly.
    pub fn is_log(&self) -> bool {
        self.lo > 0.0 && self.hi / self.lo >= 100.0
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn sample<R: Rng>(&self, name: &'static str, rng: &mut R) -> Result<f64> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(SnnError::BadRange {
                name,
                lo: self.lo,
                hi: self.hi,
            });
        }
        if self.lo == self.hi {
            return Ok(self.lo);
        }
        let u: f64 = rng.random();
        let x = if self.is_log() {
            let (a, b) = (self.lo.ln(), self.hi.ln());
            (a + u * (b - a)).exp()
        } else {
            self.lo + u * (self.hi - self.lo)
        };
        Ok(x.clamp(self.lo, self.hi))
    }
}

/// Search ranges for the single-layer search. Parameters without a range are
/// taken from [`HyperParams::base`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchRanges {
    pub tau_adpt: Range,
    pub dv_t: Range,
    pub tau_m: Range,
    pub tau_ge: Range,
    pub tau_gi: Range,
    pub w_ie_max: Range,
    pub lambda_ie: Range,
    pub dw_inhib: Range,
    pub max_delay_ie: Range,
    pub a2_minus: Range,
    pub v_tscale: Range,
    pub v_tshift: Range,
    pub w_scale: Range,
    pub w_shift: Range,
    // multi-layer only
    pub w_ee_max: Range,
    pub lambda_ee: Range,
    pub max_delay_ee: Range,
}

impl Default for SearchRanges {
    fn default() -> Self {
        SearchRanges {
            tau_adpt: Range::new(10.0, 1e8),
            dv_t: Range::new(1e-3, 1e-1),
            tau_m: Range::new(10.0, 200.0),
            tau_ge: Range::new(1.0, 10.0),
            tau_gi: Range::new(1.0, 10.0),
            w_ie_max: Range::new(0.1, 100.0),
            lambda_ie: Range::new(1e-3, 0.5),
            dw_inhib: Range::new(1e-2, 100.0),
            max_delay_ie: Range::new(0.0, 200.0),
            a2_minus: Range::new(1e-5, 1e-2),
            v_tscale: Range::new(1e-3, 1.0),
            v_tshift: Range::new(0.0, 1.0),
            w_scale: Range::new(1e-3, 1.0),
            w_shift: Range::new(0.0, 1.0),
            w_ee_max: Range::new(1.0, 100.0),
            lambda_ee: Range::new(0.1, 0.5),
            max_delay_ee: Range::new(0.0, 200.0),
        }
    }
}

impl SearchRanges {
    /// Base-layer parameters as (name, range) pairs, in sampling order.
    pub fn base_entries(&self) -> [(&'static str, Range); 14] {
        [
            ("tau_adpt", self.tau_adpt),
            ("dv_t", self.dv_t),
            ("tau_m", self.tau_m),
            ("tau_ge", self.tau_ge),
            ("tau_gi", self.tau_gi),
            ("w_ie_max", self.w_ie_max),
            ("lambda_ie", self.lambda_ie),
            ("dw_inhib", self.dw_inhib),
            ("max_delay_ie", self.max_delay_ie),
            ("a2_minus", self.a2_minus),
            ("v_tscale", self.v_tscale),
            ("v_tshift", self.v_tshift),
            ("w_scale", self.w_scale),
            ("w_shift", self.w_shift),
        ]
    }

    pub fn layer_entries(&self) -> [(&'static str, Range); 3] {
        [
            ("w_ee_max", self.w_ee_max),
            ("lambda_ee", self.lambda_ee),
            ("max_delay_ee", self.max_delay_ee),
        ]
    }
}

fn set_field(hp: &mut HyperParams, name: &str, x: f64) {
    match name {
        "tau_adpt" => hp.tau_adpt = x,
        "dv_t" => hp.dv_t = x,
        "tau_m" => hp.tau_m = x,
        "tau_ge" => hp.tau_ge = x,
        "tau_gi" => hp.tau_gi = x,
        "w_ie_max" => hp.w_ie_max = x,
        "lambda_ie" => hp.lambda_ie = x,
        "dw_inhib" => hp.dw_inhib = x,
        "max_delay_ie" => hp.max_delay_ie = x,
        "a2_minus" => hp.a2_minus = x,
        "v_tscale" => hp.v_tscale = x,
        "v_tshift" => hp.v_tshift = x,
        "w_scale" => hp.w_scale = x,
        "w_shift" => hp.w_shift = x,
        "w_ee_max" => hp.w_ee_max = x,
        "lambda_ee" => hp.lambda_ee = x,
        "max_delay_ee" => hp.max_delay_ee = x,
        other => unreachable!("no sampled field {other}"),
    }
}

/// Draws a single-layer configuration. Deterministic per seed.
pub fn sample_config(ranges: &SearchRanges, seed: u64) -> Result<HyperParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hp = HyperParams::base();
    for (name, range) in ranges.base_entries() {
        set_field(&mut hp, name, range.sample(name, &mut rng)?);
    }
    Ok(hp)
}

/// Re-draws only the hidden-to-hidden parameters of `template`.
pub fn sample_layer_config(
    ranges: &SearchRanges,
    template: &HyperParams,
    seed: u64,
) -> Result<HyperParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hp = *template;
    for (name, range) in ranges.layer_entries() {
        set_field(&mut hp, name, range.sample(name, &mut rng)?);
    }
    Ok(hp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        HyperParams::base().validate().unwrap();
        for hp in HyperParams::two_layer() {
            hp.validate().unwrap();
        }
    }

    #[test]
    fn tau_adpt_stays_in_range() {
        let range = SearchRanges::default().tau_adpt;
        assert!(range.is_log());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1_000_000 {
            let x = range.sample("tau_adpt", &mut rng).unwrap();
            assert!((10.0..=1e8).contains(&x));
        }
    }

    #[test]
    fn degenerate_range_is_constant() {
        let ranges = SearchRanges {
            tau_m: Range::new(5.0, 5.0),
            ..Default::default()
        };
        for seed in 0..20 {
            assert_eq!(sample_config(&ranges, seed).unwrap().tau_m, 5.0);
        }
    }

    #[test]
    fn inverted_range_is_rejected() {
        let ranges = SearchRanges {
            tau_gi: Range::new(3.0, 1.0),
            ..Default::default()
        };
        assert!(matches!(
            sample_config(&ranges, 0),
            Err(SnnError::BadRange { name: "tau_gi", .. })
        ));
    }

    #[test]
    fn seeded_sampling() {
        let r = SearchRanges::default();
        assert_eq!(sample_config(&r, 3).unwrap(), sample_config(&r, 3).unwrap());
        assert_ne!(sample_config(&r, 3).unwrap(), sample_config(&r, 4).unwrap());
    }

    #[test]
    fn every_sample_inside_declared_interval() {
        let r = SearchRanges::default();
        for seed in 0..500 {
            let hp = sample_config(&r, seed).unwrap();
            let values: std::collections::HashMap<_, _> = hp.named_values().into_iter().collect();
            for (name, range) in r.base_entries() {
                assert!(range.contains(values[name]), "{name} = {}", values[name]);
            }
            let layer = sample_layer_config(&r, &hp, seed).unwrap();
            assert_eq!(layer.tau_m, hp.tau_m);
            assert!(r.w_ee_max.contains(layer.w_ee_max));
        }
    }

    #[test]
    fn named_values_round_trip() {
        let hp = sample_config(&SearchRanges::default(), 11).unwrap();
        let back = HyperParams::from_named_values(hp.named_values()).unwrap();
        assert_eq!(back, hp);
        assert_eq!(hp.named_values().len(), FIELD_ORDER.len());
    }
}
