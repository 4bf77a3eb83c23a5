//! Entropy and divergence helpers, all in bits.
//!
//! Terms with zero probability contribute exactly zero.

/// Shannon entropy of a (sub-)distribution, skipping zero entries.
pub fn entropy_bits(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.log2())
        .sum();
    h.max(0.0)
}

/// Entropy of the normalisation of nonnegative `mass`. Zero when the mass is zero.
pub fn normalized_entropy_bits(mass: &[f64]) -> f64 {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = mass
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| {
            let p = m / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// `D(p || q)` in bits. Infinite when `p` puts mass where `q` has none.
pub fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            if qi <= 0.0 {
                f64::INFINITY
            } else {
                pi * (pi / qi).log2()
            }
        })
        .sum()
}

/// Total-variation distance, half the L1 distance.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Mix a distribution with the uniform one: `(1-η)q + η/m`.
pub fn smooth_uniform(q: &[f64], eta: f64) -> Vec<f64> {
    let m = q.len() as f64;
    q.iter().map(|&v| (1.0 - eta) * v + eta / m).collect()
}

/// Normalise nonnegative mass to the simplex. `None` when the mass is zero.
pub fn normalize(mass: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = mass.iter().sum();
    if total > 0.0 {
        Some(mass.iter().map(|m| m / total).collect())
    } else {
        None
    }
}
