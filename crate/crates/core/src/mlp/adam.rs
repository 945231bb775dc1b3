use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::jet::GradTape;
use super::net::SineNet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment state for one network.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first: GradTape,
    second: GradTape,
}

impl OptimizerState {
    pub fn new(net: &SineNet, config: AdamConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: GradTape::zeros_for(net),
            second: GradTape::zeros_for(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update of `net` from the gradient in `tape`.
pub fn optimizer_step(net: &mut SineNet, tape: &GradTape, state: &mut OptimizerState) -> Result<()> {
    if !tape.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite gradient at optimizer step {}",
            state.step + 1
        )));
    }
    if tape.weights.len() != net.weights.len() {
        return Err(Error::InvalidArchitecture("tape does not match network".into()));
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let step_size = lr / c1;
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= step_size * *m / ((*v / c2).sqrt() + eps);
    };
    for l in 0..net.weights.len() {
        Zip::from(&mut net.weights[l])
            .and(&mut state.first.weights[l])
            .and(&mut state.second.weights[l])
            .and(&tape.weights[l])
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut net.biases[l])
            .and(&mut state.first.biases[l])
            .and(&mut state.second.biases[l])
            .and(&tape.biases[l])
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    if !net.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite parameter after optimizer step {}",
            state.step
        )));
    }
    Ok(())
}
