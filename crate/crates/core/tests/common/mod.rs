#![allow(dead_code)]

use beable_lab::hilbert::{Decomposition, HermitianOperator, C64};
use beable_lab::rng::StreamRng;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn rabi() -> HermitianOperator {
    HermitianOperator::from_real(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
}

/// Random partition of `0..d` into at least two blocks (one when `d == 1`).
pub fn random_blocks(d: usize, rng: &mut StreamRng) -> Decomposition {
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(rng);
    let n_blocks = if d == 1 { 1 } else { rng.random_range(2..=d) };
    let mut cuts: Vec<usize> = (1..d).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(n_blocks - 1).collect();
    cuts.sort_unstable();
    let mut blocks = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(d)) {
        blocks.push(idx[start..c].to_vec());
        start = c;
    }
    Decomposition::new(blocks).unwrap()
}

pub fn frobenius(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).norm()
}
