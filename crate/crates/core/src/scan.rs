//! Forward and reverse associative scans.
//!
//! Both scans come in two shapes: a plain left/right fold ([`ScanStrategy::Sequential`])
//! and a recursive-doubling tree ([`ScanStrategy::Tree`]) with `O(log n)` depth. The
//! tree evaluates the combines of each level concurrently, so the caller's operator
//! must be pure. Results of the two strategies differ only by floating-point
//! re-association of the operator; that tolerance is the caller's concern.
//!
//! For a fixed input length the tree shape is fixed, so results are bit-identical
//! across runs regardless of how many threads rayon uses.

use rayon::prelude::*;
use thiserror::Error;

/// Number of independent combines below which a tree level runs on the calling thread.
const PAR_THRESHOLD: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError<E> {
    #[error("associative scan requires at least one element")]
    Empty,
    #[error(transparent)]
    Combine(E),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanStrategy {
    /// Left (forward) or right (reverse) fold, `n - 1` dependent combines.
    Sequential,
    /// Balanced recursive-doubling tree.
    #[default]
    Tree,
}

/// Inclusive forward scan: `out[0] = elems[0]`, `out[i] = combine(out[i-1], elems[i])`.
pub fn forward_scan<T, F>(elems: &[T], combine: F) -> Result<Vec<T>, ScanError<std::convert::Infallible>>
where
    T: Clone + Send + Sync,
    F: Fn(&T, &T) -> T + Sync,
{
    try_forward_scan(ScanStrategy::default(), elems, |a, b| Ok(combine(a, b)))
}

/// Inclusive reverse scan: `out[n-1] = elems[n-1]`, `out[i] = combine(elems[i], out[i+1])`.
pub fn reverse_scan<T, F>(elems: &[T], combine: F) -> Result<Vec<T>, ScanError<std::convert::Infallible>>
where
    T: Clone + Send + Sync,
    F: Fn(&T, &T) -> T + Sync,
{
    try_reverse_scan(ScanStrategy::default(), elems, |a, b| Ok(combine(a, b)))
}

/// Forward scan with a fallible operator. The first combine error aborts the scan.
pub fn try_forward_scan<T, E, F>(strategy: ScanStrategy, elems: &[T], combine: F) -> Result<Vec<T>, ScanError<E>>
where
    T: Clone + Send + Sync,
    E: Send,
    F: Fn(&T, &T) -> Result<T, E> + Sync,
{
    if elems.is_empty() {
        return Err(ScanError::Empty);
    }
    let out = match strategy {
        ScanStrategy::Sequential => fold_left(elems, &combine),
        ScanStrategy::Tree => tree_scan(elems.to_vec(), &combine),
    };
    out.map_err(ScanError::Combine)
}

/// Reverse scan with a fallible operator.
///
/// Implemented as a forward scan over the reversed sequence with the operator's
/// arguments swapped, so operand order is always `combine(earlier, later)`.
pub fn try_reverse_scan<T, E, F>(strategy: ScanStrategy, elems: &[T], combine: F) -> Result<Vec<T>, ScanError<E>>
where
    T: Clone + Send + Sync,
    E: Send,
    F: Fn(&T, &T) -> Result<T, E> + Sync,
{
    let reversed: Vec<T> = elems.iter().rev().cloned().collect();
    let mut out = try_forward_scan(strategy, &reversed, |later, earlier| combine(earlier, later))?;
    out.reverse();
    Ok(out)
}

fn fold_left<T, E, F>(elems: &[T], combine: &F) -> Result<Vec<T>, E>
where
    T: Clone,
    F: Fn(&T, &T) -> Result<T, E>,
{
    let mut out: Vec<T> = Vec::with_capacity(elems.len());
    out.push(elems[0].clone());
    for e in &elems[1..] {
        let next = combine(out.last().expect("non-empty"), e)?;
        out.push(next);
    }
    Ok(out)
}

fn tree_scan<T, E, F>(elems: Vec<T>, combine: &F) -> Result<Vec<T>, E>
where
    T: Clone + Send + Sync,
    E: Send,
    F: Fn(&T, &T) -> Result<T, E> + Sync,
{
    let n = elems.len();
    if n == 1 {
        return Ok(elems);
    }

    // Up-sweep: pair (2j, 2j+1) into one element covering both.
    let half = n / 2;
    let pairs: Vec<T> = map_indices(half, |j| combine(&elems[2 * j], &elems[2 * j + 1]))?;

    // pair_prefix[j] covers elems[0..=2j+1].
    let pair_prefix = tree_scan(pairs, combine)?;

    // Down-sweep: odd positions come straight from the pair prefixes, even
    // positions (other than 0) extend the previous pair prefix by one element.
    let out = map_indices(n, |i| {
        if i == 0 {
            Ok(elems[0].clone())
        } else if i % 2 == 1 {
            Ok(pair_prefix[i / 2].clone())
        } else {
            combine(&pair_prefix[i / 2 - 1], &elems[i])
        }
    })?;
    Ok(out)
}

fn map_indices<T, E, G>(count: usize, op: G) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    G: Fn(usize) -> Result<T, E> + Sync + Send,
{
    if count < PAR_THRESHOLD {
        (0..count).map(&op).collect()
    } else {
        (0..count).into_par_iter().map(&op).collect()
    }
}
