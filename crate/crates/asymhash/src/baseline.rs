//! Random hyperplane baseline: `k` i.i.d. standard Gaussian directions
//! through the origin, one sign bit each. Query and database hashes are the
//! same map by construction.

use rand::Rng;

use crate::mat::Mat;
use crate::train::{CodeSide, LinearHash, ModelStage, TrainedModel, Variant};
use crate::{Error, Result};

/// Draws a seeded random-hyperplane hash for dimension `d` and `k` bits.
pub fn lsh(d: usize, k: usize, seed: u64) -> Result<LinearHash> {
    if d < 1 || k < 1 {
        return Err(Error::invalid("need d >= 1 and k >= 1"));
    }
    let mut rng = crate::seed_stream(seed, "lsh/w");
    let w = Mat::from_fn(k, d, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    LinearHash::new(w)
}

/// Wraps the hash as a model, with bit-prefix stages so per-length
/// evaluation treats it like the trained variants.
pub fn lsh_model(d: usize, k: usize, seed: u64) -> Result<TrainedModel> {
    let hash = lsh(d, k, seed)?;
    let stages: Vec<ModelStage> = (1..=k)
        .map(|kk| {
            let prefix = hash.prefix(kk);
            ModelStage {
                k: kk,
                theta: 0.0,
                surrogate_loss: f64::NAN,
                zero_one_loss: f64::NAN,
                query: CodeSide::Hash(prefix.clone()),
                database: CodeSide::Hash(prefix),
            }
        })
        .collect();
    Ok(TrainedModel {
        variant: Variant::Lsh,
        beta: 0.5,
        theta: 0.0,
        query: CodeSide::Hash(hash.clone()),
        database: CodeSide::Hash(hash),
        center: None,
        loss_trace: Vec::new(),
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_hyperplanes() {
        let a = lsh(10, 16, 7).unwrap();
        let b = lsh(10, 16, 7).unwrap();
        assert_eq!(a, b);
        let c = lsh(10, 16, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn query_and_database_sides_are_identical() {
        let model = lsh_model(5, 8, 3).unwrap();
        assert_eq!(model.query, model.database);
        assert_eq!(model.stages.len(), 8);
        assert_eq!(model.stages[2].query.k(), 3);
    }

    #[test]
    fn collision_probability_tracks_the_angle() {
        // For a random hyperplane, P[sign agrees] = 1 - angle / pi. Monte
        // Carlo over 1e5 rows must land within 0.01 of the closed form.
        let a = [1.0, 0.0, 0.0];
        let b = [0.6, 0.8, 0.0];
        let angle = {
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            (dot / (na * nb)).clamp(-1.0, 1.0).acos()
        };
        let expected = 1.0 - angle / std::f64::consts::PI;

        let rows = 100_000;
        let hash = lsh(3, rows, 99).unwrap();
        let ca = hash.apply(&a);
        let cb = hash.apply(&b);
        let agree = ca.iter().zip(&cb).filter(|(x, y)| x == y).count();
        let measured = agree as f64 / rows as f64;
        assert!(
            (measured - expected).abs() < 0.01,
            "measured {measured}, closed form {expected}"
        );
    }
}
