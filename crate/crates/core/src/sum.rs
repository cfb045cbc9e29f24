//! Pairwise summation with a fixed tree shape.
//!
//! The split points depend only on the slice length, so serial and
//! parallel evaluation produce the same bits.

const BLOCK: usize = 64;
const PAR_MIN: usize = 1 << 14;

pub(crate) fn pairwise(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = split(values.len());
    let (lo, hi) = values.split_at(mid);
    if values.len() >= PAR_MIN {
        let (a, b) = rayon::join(|| pairwise(lo), || pairwise(hi));
        a + b
    } else {
        pairwise(lo) + pairwise(hi)
    }
}

fn split(len: usize) -> usize {
    // round the left half to a multiple of BLOCK
    let half = len / 2;
    let mid = half.div_ceil(BLOCK) * BLOCK;
    mid.min(len - 1).max(1)
}
