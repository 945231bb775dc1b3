//! Sinusoidal multilayer perceptrons with exact input derivatives.
//!
//! A [`SineNet`] is `y = W_d · h_{d-1} + b_d` with hidden layers
//! `h_{i+1} = sin(omega0 · (W_i h_i + b_i))`. Input derivatives up to second
//! order are propagated forward as jets ([`Jet`]) and parameter gradients of
//! any loss over those jets are obtained by a reverse sweep over the recorded
//! [`Trace`].

mod adam;
mod jet;
mod net;
mod trig;

pub use adam::{optimizer_step, AdamConfig, OptimizerState};
pub use jet::{loss_backward, pair_index, GradTape, Jet, JetSpec, Order, Trace};
pub use net::{SineNet, SineNetJson, SINE_NET_VERSION};
