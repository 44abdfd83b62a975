use crate::error::{contract, Result};
use crate::scalar::{neumaier_sum, Scalar};

/// `ln n!` as a compensated sum of logarithms.
pub fn ln_factorial<T: Scalar>(n: u32) -> T {
    neumaier_sum((2..=n).map(|i| T::of(f64::from(i)).ln()))
}

/// `ln( m! / (k_1! ⋯ k_n!) )` with `m = Σ k`.
pub fn ln_multinomial_coefficient<T: Scalar>(counts: &[u32]) -> T {
    let m: u32 = counts.iter().sum();
    let denominator = neumaier_sum(counts.iter().map(|&k| ln_factorial::<T>(k)));
    ln_factorial::<T>(m) - denominator
}

/// Log of the multinomial probability of observing response counts `k`
/// when the model assigns probabilities `p` to those responses (nats).
pub fn trial_log_likelihood<T: Scalar>(p: &[T], k: &[u32]) -> Result<T> {
    if p.len() != k.len() {
        return Err(contract(format!("{} probabilities for {} counts", p.len(), k.len())));
    }
    if p.is_empty() {
        return Err(contract("trial has no responses"));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x > T::zero() && x <= T::one())) {
        return Err(contract(format!("probability {bad} is outside (0, 1]")));
    }
    if k.contains(&0) {
        return Err(contract("response counts must be positive"));
    }
    let weighted = neumaier_sum(p.iter().zip(k).map(|(&pj, &kj)| T::of(f64::from(kj)) * pj.ln()));
    Ok(ln_multinomial_coefficient::<T>(k) + weighted)
}
