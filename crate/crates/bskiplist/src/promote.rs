//! Randomized height assignment: the geometric coin-flip process that
//! replaces tree rebalancing.

use rand::Rng;

use crate::error::Error;

/// Structural parameters of the index. Immutable after construction.
#[derive(Clone, Copy, Debug)]
pub struct PromotionParams {
    node_capacity: usize,
    scale: f64,
    promotion_p: f64,
    max_height: usize,
}

impl PromotionParams {
    /// `node_capacity` is B, `scale` is the dimensionless factor c on the
    /// promotion probability p = 1/(c*B), and `max_height` is the total
    /// number of levels.
    pub fn new(node_capacity: usize, scale: f64, max_height: usize) -> Result<Self, Error> {
        if node_capacity < 2 {
            return Err(Error::InvalidParams("node capacity must be at least 2".into()));
        }
        if max_height < 1 {
            return Err(Error::InvalidParams("max height must be at least 1".into()));
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidParams("scale factor must be positive".into()));
        }
        let promotion_p = 1.0 / (scale * node_capacity as f64);
        if !(promotion_p > 0.0 && promotion_p <= 0.5) {
            return Err(Error::InvalidParams(format!(
                "promotion probability 1/(c*B) = {promotion_p} out of (0, 1/2]"
            )));
        }
        Ok(PromotionParams { node_capacity, scale, promotion_p, max_height })
    }

    /// Parameters matching the reference configuration: 2048-byte nodes
    /// (128 key-value pairs), c = 0.5 (p = 1/64), max height 5.
    pub fn default_config() -> Self {
        PromotionParams::new(128, 0.5, 5).expect("reference configuration is valid")
    }

    pub fn node_capacity(&self) -> usize {
        self.node_capacity
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn promotion_p(&self) -> f64 {
        self.promotion_p
    }

    pub fn max_height(&self) -> usize {
        self.max_height
    }
}

/// Draws the height for one insert: the number of successive successes with
/// probability p, clipped at `max_height - 1`.
///
/// P(h = i) = p^i * (1 - p) for i < H-1, and P(h = H-1) = p^(H-1).
/// The height is sampled before any structural interaction with the index
/// and is independent of its current shape.
pub fn sample_height<R: Rng>(params: &PromotionParams, rng: &mut R) -> usize {
    let mut h = 0;
    while h < params.max_height - 1 && rng.gen::<f64>() < params.promotion_p {
        h += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    #[test]
    fn derived_probability() {
        let p = PromotionParams::new(128, 0.5, 5).unwrap();
        assert_eq!(p.promotion_p(), 1.0 / 64.0);
        let p = PromotionParams::new(4, 0.5, 5).unwrap();
        assert_eq!(p.promotion_p(), 0.5);
    }

    #[test]
    fn rejects_degenerate_params() {
        assert!(PromotionParams::new(1, 0.5, 5).is_err());
        assert!(PromotionParams::new(128, 0.5, 0).is_err());
        // p = 1/(c*B) > 1/2
        assert!(PromotionParams::new(2, 0.25, 5).is_err());
        assert!(PromotionParams::new(128, -1.0, 5).is_err());
    }

    #[test]
    fn single_level_always_zero() {
        let params = PromotionParams::new(128, 0.5, 1).unwrap();
        let mut rng = SmallRng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_height(&params, &mut rng), 0);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let params = PromotionParams::new(4, 0.5, 5).unwrap();
        let draw = |seed| {
            let mut rng = SmallRng::seed_from_u64(seed);
            (0..256).map(|_| sample_height(&params, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn promotion_fraction_within_binomial_bound() {
        let params = PromotionParams::new(128, 0.5, 5).unwrap();
        let p = params.promotion_p();
        let n = 1_000_000u64;
        let mut rng = SmallRng::seed_from_u64(7);
        let promoted = (0..n).filter(|_| sample_height(&params, &mut rng) >= 1).count() as f64;
        let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((promoted / n as f64 - p).abs() < tol);
    }

    #[test]
    fn heights_clip_at_top() {
        let params2 = PromotionParams::new(4, 0.5, 3).unwrap(); // p = 1/2
        let mut rng = SmallRng::seed_from_u64(9);
        let mut saw_top = false;
        for _ in 0..10_000 {
            let h = sample_height(&params2, &mut rng);
            assert!(h <= 2);
            saw_top |= h == 2;
        }
        assert!(saw_top);
    }
}
