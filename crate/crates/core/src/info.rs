//! Shared entropy primitives.

/// Floor applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// `ln(max(p, LOG_FLOOR))`.
#[inline]
pub fn ln_floor(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// `p · ln p` with the floor, and `0` for `p ≤ 0`.
#[inline]
pub fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * ln_floor(p)
    } else {
        0.0
    }
}

/// Shannon entropy of a probability vector, in nats.
pub fn entropy(dist: &[f64]) -> f64 {
    -dist.iter().map(|&p| xlogx(p)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mass_contributes_nothing() {
        assert_eq!(xlogx(0.0), 0.0);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn uniform_entropy_is_log_c() {
        let h = entropy(&[0.25; 4]);
        assert!((h - 4f64.ln()).abs() < 1e-15);
    }
}
