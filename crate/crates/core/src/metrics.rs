//! Rank and linear correlation coefficients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input, Error, Result};

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return input(format!("length mismatch: {} vs {}", a.len(), b.len()));
    }
    if a.len() < 2 {
        return input("need at least two observations");
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return input("observations must be finite");
    }
    Ok(())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of the average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Kendall's tau-b: `(C - D) / sqrt((C + D + Tx)(C + D + Ty))`, where `Tx`
/// counts pairs tied only in `a` and `Ty` pairs tied only in `b`.
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = a[i].total_cmp(&a[j]) as i8;
            let db = b[i].total_cmp(&b[j]) as i8;
            match (da, db) {
                (0, 0) => {}
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let base = (concordant + discordant) as f64;
    let denom = libm::sqrt((base + ties_a as f64) * (base + ties_b as f64));
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((concordant as f64 - discordant as f64) / denom)
}
