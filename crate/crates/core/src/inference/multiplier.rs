//! Gaussian multiplier resampling of influence processes.
//!
//! Draw `m` perturbs the fixed influence paths with standard normal weights,
//! `Ŵ_m(t_k) = n^{-1/2} Σ_i Q_i^m ε̂_i(t_k)`. Each draw owns a
//! Xoshiro256++ stream seeded with `derive_seed(seed, m)`; normal variates
//! come from the ziggurat sampler of `rand_distr`. Within a draw, subject `i`
//! receives the variate at its canonical rank, so results do not depend on
//! the row order of the input file. Draws are evaluated in fixed-size blocks
//! as one matrix product per block.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

pub const DEFAULT_DRAWS: usize = 1000;

/// Draws per matrix product; fixed so that results are independent of the
/// thread count.
const BLOCK: usize = 64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under a master seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index)
}

/// Multipliers of draws `start..start + len` as a `len × n` matrix.
fn multiplier_block(seed: u64, start: usize, len: usize, ranks: &[usize]) -> DMatrix<f64> {
    let n = ranks.len();
    let mut q = DMatrix::<f64>::zeros(len, n);
    let mut z = vec![0.0; n];
    for r in 0..len {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, (start + r) as u64));
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for (i, &rank) in ranks.iter().enumerate() {
            q[(r, i)] = z[rank];
        }
    }
    q
}

fn blocks(draws: usize) -> Vec<(usize, usize)> {
    (0..draws).step_by(BLOCK).map(|s| (s, BLOCK.min(draws - s))).collect()
}

/// All resampled processes, `draws × m`.
pub fn multiplier_processes(process: &DMatrix<f64>, ranks: &[usize], draws: usize, seed: u64) -> DMatrix<f64> {
    let scale = 1.0 / (process.nrows() as f64).sqrt();
    let parts: Vec<DMatrix<f64>> = blocks(draws)
        .into_par_iter()
        .map(|(s, len)| multiplier_block(seed, s, len, ranks) * process * scale)
        .collect();
    let mut out = DMatrix::zeros(draws, process.ncols());
    for ((s, len), part) in blocks(draws).into_iter().zip(parts) {
        out.rows_mut(s, len).copy_from(&part);
    }
    out
}

/// `sup_k |Ŵ_m(t_k)|` for each draw, over every column of `process`.
pub fn multiplier_sups(process: &DMatrix<f64>, ranks: &[usize], draws: usize, seed: u64) -> Vec<f64> {
    if process.ncols() == 0 {
        return vec![0.0; draws];
    }
    let scale = 1.0 / (process.nrows() as f64).sqrt();
    blocks(draws)
        .into_par_iter()
        .flat_map_iter(|(s, len)| {
            let w = multiplier_block(seed, s, len, ranks) * process;
            (0..len).map(move |r| w.row(r).amax() * scale).collect::<Vec<_>>()
        })
        .collect()
}
