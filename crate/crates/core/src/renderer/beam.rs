use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradnet::ParamStore;

fn default_k_theta() -> usize {
    30
}

fn default_k_phi() -> usize {
    10
}

/// Kernel layout of the separable beam pattern. Angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    #[serde(default = "default_k_theta")]
    pub k_theta: usize,
    #[serde(default = "default_k_phi")]
    pub k_phi: usize,
    #[serde(default)]
    pub theta_min: f64,
    #[serde(default)]
    pub theta_max: f64,
    #[serde(default)]
    pub phi_min: f64,
    #[serde(default)]
    pub phi_max: f64,
    /// Whether the kernel weights are optimized.
    #[serde(default)]
    pub trainable: bool,
    /// Pass kernel weights through softplus instead of clamping the product.
    #[serde(default)]
    pub softplus: bool,
}

impl BeamConfig {
    pub fn new(k_theta: usize, k_phi: usize, theta: (f64, f64), phi: (f64, f64)) -> Self {
        BeamConfig {
            k_theta,
            k_phi,
            theta_min: theta.0,
            theta_max: theta.1,
            phi_min: phi.0,
            phi_max: phi.1,
            trainable: false,
            softplus: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_theta == 0 || self.k_phi == 0 {
            return Err(Error::Config("beam kernel counts must be positive".into()));
        }
        if !(self.theta_max > self.theta_min) || !(self.phi_max > self.phi_min) {
            return Err(Error::Config("beam kernel ranges must be non-empty".into()));
        }
        Ok(())
    }
}

/// One evenly spaced Gaussian kernel axis.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelAxis {
    pub centers: Vec<f64>,
    pub sigma: f64,
}

impl KernelAxis {
    pub fn new(lo: f64, hi: f64, k: usize) -> Self {
        let w = (hi - lo) / k as f64;
        KernelAxis { centers: (0..k).map(|i| lo + (i as f64 + 0.5) * w).collect(), sigma: w }
    }

    pub fn kernel(&self, i: usize, x: f64) -> f64 {
        let d = self.centers[i] - x;
        (-d * d / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.centers[0] + self.centers[self.centers.len() - 1])
    }

    /// Uniform weight making the kernel sum equal one at the axis midpoint.
    fn unit_weight(&self) -> f64 {
        let m = self.mid();
        1.0 / (0..self.centers.len()).map(|i| self.kernel(i, m)).sum::<f64>()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// beta(theta, phi) = max(beta_T(theta) * beta_P(phi), 0), each factor a
/// weighted sum of Gaussian kernels.
#[derive(Clone, Debug)]
pub struct BeamPattern {
    pub config: BeamConfig,
    pub theta_axis: KernelAxis,
    pub phi_axis: KernelAxis,
    theta_offset: usize,
    phi_offset: usize,
}

pub const BEAM_THETA_BLOCK: &str = "beam.theta";
pub const BEAM_PHI_BLOCK: &str = "beam.phi";

impl BeamPattern {
    /// Registers the weight blocks, initialized so that beta is about one
    /// at the center of both ranges.
    pub fn new(config: BeamConfig, store: &mut ParamStore) -> Result<Self> {
        config.validate()?;
        let theta_axis = KernelAxis::new(config.theta_min, config.theta_max, config.k_theta);
        let phi_axis = KernelAxis::new(config.phi_min, config.phi_max, config.k_phi);
        let theta_offset = store.add_block(BEAM_THETA_BLOCK, config.k_theta);
        let phi_offset = store.add_block(BEAM_PHI_BLOCK, config.k_phi);
        let (wt, wp) = (theta_axis.unit_weight(), phi_axis.unit_weight());
        let enc = |w: f64| if config.softplus { softplus_inv(w) } else { w };
        store.values_mut(theta_offset, config.k_theta).iter_mut().for_each(|v| *v = enc(wt));
        store.values_mut(phi_offset, config.k_phi).iter_mut().for_each(|v| *v = enc(wp));
        store.set_frozen("beam.", !config.trainable);
        Ok(BeamPattern { config, theta_axis, phi_axis, theta_offset, phi_offset })
    }

    pub fn attach(config: BeamConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let find = |name: &str, len: usize| match store.block(name) {
            Some((off, l)) if l == len => Ok(off),
            Some((_, l)) => Err(Error::Dimension { expected: len, got: l }),
            None => Err(Error::Format(format!("missing parameter block {name}"))),
        };
        Ok(BeamPattern {
            theta_offset: find(BEAM_THETA_BLOCK, config.k_theta)?,
            phi_offset: find(BEAM_PHI_BLOCK, config.k_phi)?,
            theta_axis: KernelAxis::new(config.theta_min, config.theta_max, config.k_theta),
            phi_axis: KernelAxis::new(config.phi_min, config.phi_max, config.k_phi),
            config,
        })
    }

    pub fn theta_range(&self) -> (usize, usize) {
        (self.theta_offset, self.config.k_theta)
    }

    pub fn phi_range(&self) -> (usize, usize) {
        (self.phi_offset, self.config.k_phi)
    }

    fn weight(&self, raw: f64) -> f64 {
        if self.config.softplus {
            softplus(raw)
        } else {
            raw
        }
    }

    fn dweight(&self, raw: f64) -> f64 {
        if self.config.softplus {
            crate::gradnet::stable_sigmoid(raw)
        } else {
            1.0
        }
    }

    fn axis_sum(&self, params: &[f64], axis: &KernelAxis, offset: usize, x: f64) -> f64 {
        (0..axis.centers.len()).map(|i| self.weight(params[offset + i]) * axis.kernel(i, x)).sum()
    }

    pub fn beta_theta(&self, params: &[f64], theta: f64) -> f64 {
        self.axis_sum(params, &self.theta_axis, self.theta_offset, theta)
    }

    pub fn beta_phi(&self, params: &[f64], phi: f64) -> f64 {
        self.axis_sum(params, &self.phi_axis, self.phi_offset, phi)
    }

    pub fn gain(&self, params: &[f64], theta: f64, phi: f64) -> f64 {
        (self.beta_theta(params, theta) * self.beta_phi(params, phi)).max(0.0)
    }

    /// Accumulates g * d(beta)/d(weights).
    pub fn gain_backward(&self, params: &[f64], theta: f64, phi: f64, g: f64, grads: &mut [f64]) {
        let bt = self.beta_theta(params, theta);
        let bp = self.beta_phi(params, phi);
        if bt * bp <= 0.0 || g == 0.0 {
            return;
        }
        for i in 0..self.config.k_theta {
            let raw = params[self.theta_offset + i];
            grads[self.theta_offset + i] += g * bp * self.theta_axis.kernel(i, theta) * self.dweight(raw);
        }
        for i in 0..self.config.k_phi {
            let raw = params[self.phi_offset + i];
            grads[self.phi_offset + i] += g * bt * self.phi_axis.kernel(i, phi) * self.dweight(raw);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(kt: usize, kp: usize) -> (BeamPattern, ParamStore) {
        let mut store = ParamStore::new();
        let bp = BeamPattern::new(BeamConfig::new(kt, kp, (-1.0, 1.0), (-0.5, 0.5)), &mut store).unwrap();
        (bp, store)
    }

    #[test]
    fn single_kernel_at_center_and_one_sigma_off() {
        let (bp, mut store) = pattern(1, 1);
        store.values[0] = 1.0;
        store.values[1] = 1.0;
        assert_eq!(bp.theta_axis.centers, vec![0.0]);
        assert_eq!(bp.theta_axis.sigma, 2.0);
        assert_eq!(bp.gain(&store.values, 0.0, 0.0), 1.0);
        let off = bp.gain(&store.values, 2.0, 0.0);
        assert!((off - (-0.5f64).exp()).abs() < 1e-15);
        assert!((off - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn zero_weights_give_zero_and_negative_products_clamp() {
        let (bp, mut store) = pattern(5, 3);
        store.values.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(bp.gain(&store.values, 0.1, 0.2), 0.0);
        store.values.iter_mut().for_each(|v| *v = 1.0);
        store.values[0..5].iter_mut().for_each(|v| *v = -1.0);
        assert_eq!(bp.gain(&store.values, 0.1, 0.2), 0.0);
    }

    #[test]
    fn default_init_is_unit_at_center() {
        let (bp, store) = pattern(30, 10);
        assert!((bp.gain(&store.values, 0.0, 0.0) - 1.0).abs() < 1e-12);
        assert!(store.is_frozen(0) && store.is_frozen(1));
    }

    #[test]
    fn centers_are_evenly_spaced() {
        let a = KernelAxis::new(-1.0, 1.0, 4);
        assert_eq!(a.centers, vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(a.sigma, 0.5);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for softplus in [false, true] {
            let mut store = ParamStore::new();
            let mut cfg = BeamConfig::new(6, 4, (-1.0, 1.0), (-0.5, 0.5));
            cfg.softplus = softplus;
            let bp = BeamPattern::new(cfg, &mut store).unwrap();
            for (i, v) in store.values.iter_mut().enumerate() {
                *v += 0.1 * (i as f64 * 0.7).sin();
            }
            let (th, ph) = (0.3, -0.1);
            let mut grads = vec![0.0; store.len()];
            bp.gain_backward(&store.values, th, ph, 1.0, &mut grads);
            let h = 1e-6;
            for i in 0..store.len() {
                let mut p = store.values.clone();
                p[i] += h;
                let up = bp.gain(&p, th, ph);
                p[i] -= 2.0 * h;
                let dn = bp.gain(&p, th, ph);
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - grads[i]).abs() < 1e-8 * fd.abs().max(1.0), "{i}: {fd} vs {}", grads[i]);
            }
        }
    }
}
