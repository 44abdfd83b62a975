//! Kendall's tau-b by Knight's O(n log n) algorithm.

use std::cmp::Ordering;

use crate::error::{contract, Result};
use crate::scalar::Scalar;

fn cmp<X: PartialOrd>(a: &X, b: &X) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Pairs inside runs of equal consecutive elements.
fn tied_pairs<X>(sorted: &[X], eq: impl Fn(&X, &X) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of strictly inverted pairs.
fn sort_counting_inversions<Y: PartialOrd + Copy>(v: &mut [Y], buf: &mut Vec<Y>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inversions = sort_counting_inversions(&mut v[..mid], buf) + sort_counting_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if cmp(&v[j], &v[i]) == Ordering::Less {
            inversions += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inversions
}

/// Tau-b between two rankings of the same items.
///
/// `Ok(None)` when fewer than two items are ranked or either ranking puts
/// every item in one tie.
pub fn kendall_tau_b<X, Y, T>(x: &[X], y: &[Y]) -> Result<Option<T>>
where
    X: PartialOrd + Copy,
    Y: PartialOrd + Copy,
    T: Scalar,
{
    if x.len() != y.len() {
        return Err(contract(format!("rankings of {} and {} items", x.len(), y.len())));
    }
    let n = x.len() as u64;
    if n < 2 {
        return Ok(None);
    }
    if x.iter().any(|a| a.partial_cmp(a).is_none()) || y.iter().any(|b| b.partial_cmp(b).is_none()) {
        return Err(contract("ranking contains an unordered value (NaN)"));
    }
    let mut pairs: Vec<(X, Y)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp(&a.0, &b.0).then_with(|| cmp(&a.1, &b.1)));

    let total = n * (n - 1) / 2;
    let ties_x = tied_pairs(&pairs, |a, b| cmp(&a.0, &b.0) == Ordering::Equal);
    let ties_xy = tied_pairs(&pairs, |a, b| cmp(&a.0, &b.0) == Ordering::Equal && cmp(&a.1, &b.1) == Ordering::Equal);
    let mut ys: Vec<Y> = pairs.iter().map(|p| p.1).collect();
    let mut scratch = Vec::with_capacity(ys.len());
    let discordant = sort_counting_inversions(&mut ys, &mut scratch);
    let ties_y = tied_pairs(&ys, |a, b| cmp(a, b) == Ordering::Equal);

    if total == ties_x || total == ties_y {
        return Ok(None);
    }
    // concordant - discordant
    let numerator = total as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * discordant as i64;
    let denominator = (total - ties_x) * (total - ties_y);
    let tau = numerator as f64 / (denominator as f64).sqrt();
    Ok(Some(T::of(tau)))
}
