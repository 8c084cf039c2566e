use rand::Rng;

use crate::scalar::Real;

/// Half-width of the Glorot uniform interval, `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    assert!(fan_in >= 1 && fan_out >= 1, "fans must be at least 1");
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `len` i.i.d. samples from `U[-b, b]` with `b = glorot_bound(fan_in, fan_out)`.
///
/// Samples are drawn in f64 and rounded, so f32 and f64 models built from
/// the same seed agree up to rounding.
pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(len: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Vec<T> {
    let b = glorot_bound(fan_in, fan_out);
    (0..len).map(|_| T::lit(rng.random_range(-b..=b))).collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn bound_for_equal_fans_of_three_is_one() {
        assert_eq!(glorot_bound(3, 3), 1.0);
    }

    #[test]
    fn samples_stay_inside_the_bound_and_are_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = glorot_bound(75, 400);
        let v: Vec<f64> = glorot_uniform(100_000, 75, 400, &mut rng);
        assert!(v.iter().all(|x| x.abs() <= b));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.01 * b, "{mean}");
        // The extremes of 1e5 uniform draws sit close to the bound.
        assert!(v.iter().cloned().fold(f64::MIN, f64::max) > 0.99 * b);
        assert!(v.iter().cloned().fold(f64::MAX, f64::min) < -0.99 * b);
    }
}
