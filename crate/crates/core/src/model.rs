//! Shared weight vector with lazily averaged parameters.
//!
//! Every coordinate is an `AtomicU64` holding the bits of an `f64`, so any
//! number of workers may score and update concurrently. A single-coordinate
//! addition is a compare-and-swap loop and never loses an update; nothing
//! coordinates across coordinates.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::features::{FeatureConfig, FeatureError, FeatureVector, ModelOrder};

const MAGIC: &[u8; 4] = b"PPCM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("model file declares {found} weights, expected {expected}")]
    Length { expected: u64, found: u64 },
    #[error(transparent)]
    Config(#[from] FeatureError),
}

#[inline]
fn load(cell: &AtomicU64) -> f64 {
    f64::from_bits(cell.load(Ordering::Relaxed))
}

/// Adds `delta` to the f64 stored in `cell`, returning the previous value.
#[inline]
fn atomic_add(cell: &AtomicU64, delta: f64) -> f64 {
    let prev = cell
        .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
            Some((f64::from_bits(bits) + delta).to_bits())
        })
        .expect("closure always returns Some");
    f64::from_bits(prev)
}

fn zeroed(len: usize) -> Vec<AtomicU64> {
    // 0u64 is the bit pattern of +0.0
    (0..len).map(|_| AtomicU64::new(0)).collect()
}

pub struct WeightModel {
    config: FeatureConfig,
    weights: Vec<AtomicU64>,
    accum: Vec<AtomicU64>,
    last_touched: Vec<AtomicU64>,
    global_updates: AtomicU64,
}

impl std::fmt::Debug for WeightModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightModel")
            .field("config", &self.config)
            .field("global_updates", &self.global_updates())
            .finish_non_exhaustive()
    }
}

impl WeightModel {
    pub fn new(config: FeatureConfig) -> Self {
        let len = config.table_size();
        WeightModel {
            config,
            weights: zeroed(len),
            accum: zeroed(len),
            last_touched: zeroed(len),
            global_updates: AtomicU64::new(0),
        }
    }

    /// A model whose weights are fixed values (e.g. averaged weights loaded
    /// from disk for parsing).
    pub fn from_weights(config: FeatureConfig, weights: &[f64]) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = config.table_size();
        if weights.len() != expected {
            return Err(ModelError::Length {
                expected: expected as u64,
                found: weights.len() as u64,
            });
        }
        let model = WeightModel::new(config);
        for (cell, &w) in model.weights.iter().zip(weights) {
            cell.store(w.to_bits(), Ordering::Relaxed);
        }
        Ok(model)
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn weight(&self, index: u32) -> f64 {
        load(&self.weights[index as usize])
    }

    pub fn global_updates(&self) -> u64 {
        self.global_updates.load(Ordering::Relaxed)
    }

    /// α · fv
    pub fn score_features(&self, fv: &FeatureVector) -> f64 {
        fv.entries()
            .iter()
            .map(|&(i, c)| c as f64 * self.weight(i))
            .sum()
    }

    /// Sum of weights over an index stream (each occurrence counts once).
    #[inline]
    pub fn score_indices(&self, indices: impl IntoIterator<Item = u32>) -> f64 {
        indices.into_iter().map(|i| self.weight(i)).sum()
    }

    /// α += gold − pred, one indivisible addition per touched coordinate.
    pub fn perceptron_update(&self, gold: &FeatureVector, pred: &FeatureVector) {
        let delta = gold.difference(pred);
        self.apply_delta(&delta);
    }

    /// Applies a signed sparse delta as one perceptron update.
    pub fn apply_delta(&self, delta: &[(u32, i64)]) {
        let stamp = self.global_updates.fetch_add(1, Ordering::Relaxed);
        for &(i, d) in delta {
            let i = i as usize;
            let old = atomic_add(&self.weights[i], d as f64);
            let since = self.last_touched[i].swap(stamp, Ordering::Relaxed);
            let span = stamp.saturating_sub(since);
            if span > 0 && old != 0.0 {
                atomic_add(&self.accum[i], old * span as f64);
            }
        }
    }

    /// Current (unaveraged) weights.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights.iter().map(load).collect()
    }

    /// Average of α over all updates so far. Returns the raw weights when
    /// no update has happened. Call only after workers have quiesced.
    pub fn averaged_weights(&self) -> Vec<f64> {
        let total = self.global_updates();
        if total == 0 {
            return self.raw_weights();
        }
        let denom = total as f64;
        self.weights
            .iter()
            .zip(&self.accum)
            .zip(&self.last_touched)
            .map(|((w, acc), last)| {
                let w = load(w);
                let span = total.saturating_sub(last.load(Ordering::Relaxed));
                (load(acc) + w * span as f64) / denom
            })
            .collect()
    }

    /// A fresh model holding these averaged weights as its parameters.
    pub fn averaged_model(&self) -> WeightModel {
        WeightModel::from_weights(self.config.clone(), &self.averaged_weights())
            .expect("same config and length")
    }
}

/// Writes the model file: header then little-endian f64 weights.
pub fn save_model<W: Write>(mut out: W, config: &FeatureConfig, weights: &[f64]) -> Result<(), ModelError> {
    if weights.len() != config.table_size() {
        return Err(ModelError::Length {
            expected: config.table_size() as u64,
            found: weights.len() as u64,
        });
    }
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&config.hash_bits.to_le_bytes())?;
    out.write_all(&config.order.as_u32().to_le_bytes())?;
    out.write_all(&(config.distance_buckets.len() as u32).to_le_bytes())?;
    for b in &config.distance_buckets {
        out.write_all(&b.to_le_bytes())?;
    }
    out.write_all(&(weights.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * 8192);
    for chunk in weights.chunks(8192) {
        buf.clear();
        for w in chunk {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_model<R: Read>(mut input: R) -> Result<(FeatureConfig, Vec<f64>), ModelError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(ModelError::Version(version));
    }
    let hash_bits = read_u32(&mut input)?;
    let order = ModelOrder::from_u32(read_u32(&mut input)?)?;
    let n_buckets = read_u32(&mut input)?;
    if n_buckets > 254 {
        return Err(FeatureError::InvalidConfig(format!("{n_buckets} distance buckets")).into());
    }
    let distance_buckets = (0..n_buckets)
        .map(|_| read_u32(&mut input))
        .collect::<io::Result<Vec<_>>>()?;
    let config = FeatureConfig {
        hash_bits,
        order,
        distance_buckets,
    };
    config.validate()?;
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let found = u64::from_le_bytes(len);
    let expected = config.table_size() as u64;
    if found != expected {
        return Err(ModelError::Length { expected, found });
    }
    let mut bytes = vec![0u8; expected as usize * 8];
    input.read_exact(&mut bytes)?;
    let weights = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((config, weights))
}
