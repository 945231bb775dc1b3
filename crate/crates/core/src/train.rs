//! Shared training plumbing: progress events, sampling, and deterministic
//! chunked gradient reduction.

use std::ops::ControlFlow;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{GradTape, SineNet};

/// Rows per parallel work unit for value-only evaluation. Chunking is fixed
/// per jet width so reductions do not depend on the number of threads.
pub const CHUNK_ROWS: usize = 256;

/// Rows per work unit for jets carrying `channels` blocks, sized to keep a
/// chunk's working set cache-resident.
pub fn chunk_rows(channels: usize) -> usize {
    (640 / channels.max(1)).clamp(32, CHUNK_ROWS)
}

/// One progress report from a training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainEvent {
    pub step: usize,
    pub total_steps: usize,
    pub terms: Vec<(String, f64)>,
}

/// Receives progress reports; returning `Break` cancels training.
pub trait Observer {
    fn on_event(&mut self, event: &TrainEvent) -> ControlFlow<()>;
}

impl<F: FnMut(&TrainEvent) -> ControlFlow<()>> Observer for F {
    fn on_event(&mut self, event: &TrainEvent) -> ControlFlow<()> {
        self(event)
    }
}

/// Observer that ignores all events.
pub struct Silent;

impl Observer for Silent {
    fn on_event(&mut self, _: &TrainEvent) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

pub(crate) fn notify(observer: &mut dyn Observer, event: TrainEvent) -> Result<()> {
    match observer.on_event(&event) {
        ControlFlow::Continue(()) => Ok(()),
        ControlFlow::Break(()) => Err(Error::Cancelled),
    }
}

/// Learning rate at `step` of `total`: constant, or decaying geometrically
/// from `lr` to `lr_final`.
pub(crate) fn scheduled_lr(lr: f64, lr_final: Option<f64>, step: usize, total: usize) -> f64 {
    match lr_final {
        Some(end) if total > 1 => lr * (end / lr).powf(step as f64 / (total - 1) as f64),
        _ => lr,
    }
}

/// `n` points uniform in the box `[lo_k, hi_k]` per column.
pub(crate) fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, bounds: &[(f64, f64)]) -> Array2<f64> {
    let mut out = Array2::zeros((n, bounds.len()));
    for mut row in out.rows_mut() {
        for (v, &(lo, hi)) in row.iter_mut().zip(bounds) {
            *v = rng.random_range(lo..=hi);
        }
    }
    out
}

/// Splits `0..n` into fixed chunks, evaluates `f` on each (possibly in
/// parallel), and sums losses and tapes in chunk order.
pub(crate) fn reduce_chunks<F>(net: &SineNet, n: usize, chunk: usize, f: F) -> Result<(f64, GradTape)>
where
    F: Fn(std::ops::Range<usize>, &mut GradTape) -> Result<f64> + Sync,
{
    let ([total], tape) = reduce_chunks_n(net, n, chunk, |r, tape| Ok([f(r, tape)?]))?;
    Ok((total, tape))
}

/// [`reduce_chunks`] for closures that report several loss terms at once.
pub(crate) fn reduce_chunks_n<const K: usize, F>(
    net: &SineNet,
    n: usize,
    chunk: usize,
    f: F,
) -> Result<([f64; K], GradTape)>
where
    F: Fn(std::ops::Range<usize>, &mut GradTape) -> Result<[f64; K]> + Sync,
{
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let parts: Vec<([f64; K], GradTape)> = starts
        .par_iter()
        .map(|&s| {
            let mut tape = GradTape::zeros_for(net);
            let loss = f(s..(s + chunk).min(n), &mut tape)?;
            Ok((loss, tape))
        })
        .collect::<Result<_>>()?;
    let mut total = [0.0; K];
    let mut tape = GradTape::zeros_for(net);
    for (loss, part) in parts {
        for (t, l) in total.iter_mut().zip(loss) {
            *t += l;
        }
        tape.add_assign(&part);
    }
    Ok((total, tape))
}

/// Like [`reduce_chunks`] for evaluation only.
pub(crate) fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> Result<Vec<T>> + Sync,
{
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let parts: Vec<Vec<T>> = starts
        .par_iter()
        .map(|&s| f(s..(s + chunk).min(n)))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(scheduled_lr(1e-3, None, 5, 10), 1e-3);
        assert!((scheduled_lr(1e-3, Some(1e-5), 0, 10) - 1e-3).abs() < 1e-15);
        assert!((scheduled_lr(1e-3, Some(1e-5), 9, 10) - 1e-5).abs() < 1e-15);
    }

    #[test]
    fn chunk_map_preserves_order() {
        let out = map_chunks(1300, 256, |r| Ok(r.collect::<Vec<_>>())).unwrap();
        assert_eq!(out, (0..1300).collect::<Vec<_>>());
    }
}
