//! Reference implementations used as test oracles.
//!
//! Nothing here depends on the crates under test: each oracle is written
//! from the contract alone, the slow and obvious way.

pub mod essay;
pub mod eval;

use num::{BigInt, BigRational, Float, Signed, ToPrimitive};
use rand::Rng;

/// Cosine similarity from exact integer arithmetic.
///
/// Each component is `m · 2^e`. Shifting every mantissa of a vector to that
/// vector's smallest exponent gives integers `A_i`, `B_i` with
/// `cos² = (Σ A_i B_i)² / (Σ A_i² · Σ B_i²)`; the powers of two cancel. Only
/// the final quotient and square root are rounded.
pub fn exact_cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (a, b) = (integers(a), integers(b));
    let dot = |x: &[BigInt], y: &[BigInt]| x.iter().zip(y).map(|(p, q)| p * q).sum::<BigInt>();
    let ab = dot(&a, &b);
    let squared = BigRational::new(&ab * &ab, dot(&a, &a) * dot(&b, &b));
    let magnitude = squared.to_f64().unwrap().sqrt();
    if ab.is_negative() {
        -magnitude
    } else {
        magnitude
    }
}

fn integers(v: &[f64]) -> Vec<BigInt> {
    let parts: Vec<(u64, i16, i8)> = v.iter().map(|x| x.integer_decode()).collect();
    let min_exp = parts
        .iter()
        .filter(|(m, _, _)| *m != 0)
        .map(|(_, e, _)| *e)
        .min()
        .unwrap_or(0);
    parts
        .iter()
        .map(|&(m, e, sign)| {
            let n = BigInt::from(m) << ((e - min_exp).max(0) as usize);
            if sign < 0 {
                -n
            } else {
                n
            }
        })
        .collect()
}

/// Textbook cosine in f64, no scaling.
pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Outcome of [`greedy_dedup`]: kept ids in order, and
/// `(removed_id, kept_id, similarity)` in order of removal.
#[derive(Debug, Clone, PartialEq)]
pub struct DedupReference {
    pub kept: Vec<String>,
    pub removed: Vec<(String, String, f64)>,
}

/// O(n²) greedy scan: each record is compared with every earlier kept record
/// and dropped if any similarity exceeds `threshold`. The logged partner is
/// the earliest such kept record.
pub fn greedy_dedup(records: &[(String, Vec<f64>)], threshold: f64) -> DedupReference {
    let mut kept: Vec<usize> = Vec::new();
    let mut removed = Vec::new();
    for (j, (id, v)) in records.iter().enumerate() {
        let partner = kept
            .iter()
            .map(|&i| (i, naive_cosine(&records[i].1, v)))
            .find(|(_, s)| *s > threshold);
        match partner {
            Some((i, s)) => removed.push((id.clone(), records[i].0.clone(), s)),
            None => kept.push(j),
        }
    }
    DedupReference {
        kept: kept.iter().map(|&i| records[i].0.clone()).collect(),
        removed,
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// `n` clustered vectors whose pairwise similarities straddle `threshold`
/// but none within `margin` of it, so implementations that differ only in
/// rounding must agree on every comparison. Some exact repeats are included.
pub fn clustered_embeddings(rng: &mut impl Rng, n: usize, dim: usize, threshold: f64, margin: f64) -> Vec<Vec<f64>> {
    let clusters = (n / 6).max(1);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| gaussian(rng)).collect())
        .collect();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let candidate: Vec<f64> = if !out.is_empty() && rng.gen_bool(0.05) {
            out[rng.gen_range(0..out.len())].clone()
        } else {
            let center = &centers[rng.gen_range(0..clusters)];
            let spread = rng.gen_range(0.1..1.5);
            let scale = rng.gen_range(0.5..3.0);
            center.iter().map(|c| scale * (c + spread * gaussian(rng))).collect()
        };
        if candidate.iter().all(|x| *x == 0.0) {
            continue;
        }
        let ambiguous = out
            .iter()
            .any(|v| (naive_cosine(v, &candidate) - threshold).abs() < margin);
        if !ambiguous {
            out.push(candidate);
        }
    }
    out
}

/// The subsequence of `items` selected by `keep`, found by trying every
/// subset and returning the one that contains exactly the kept items.
pub fn brute_force_subsequence<T: Clone>(items: &[T], keep: impl Fn(&T) -> bool) -> Vec<T> {
    assert!(items.len() <= 16, "brute force is exponential");
    let n = items.len();
    let flags: Vec<bool> = items.iter().map(&keep).collect();
    let mut matches = (0u32..1 << n).filter(|mask| (0..n).all(|i| ((mask >> i) & 1 == 1) == flags[i]));
    let mask = matches.next().expect("some subset matches");
    assert!(matches.next().is_none());
    (0..n).filter(|i| (mask >> i) & 1 == 1).map(|i| items[i].clone()).collect()
}
