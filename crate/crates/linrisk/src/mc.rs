//! Seeded Monte Carlo replica execution.
//!
//! Every experiment derives one RNG per replica from a master seed by fixing
//! the ChaCha stream to the replica index. Replicas therefore consume
//! disjoint random streams by construction, results do not depend on thread
//! count, and aggregation runs in replica-index order so that floating-point
//! sums are bit-stable.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// RNG for replica `replica` of an experiment with master seed `seed`.
///
/// ChaCha supports 2^64 independent streams; we map replica index to stream.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Runs `reps` replicas in parallel and returns the per-replica results in
/// replica-index order.
pub fn run_replicas<T, F>(seed: u64, reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, ChaCha8Rng) -> T + Sync,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|r| f(r, replica_rng(seed, r)))
        .collect()
}

/// Deterministic pairwise summation in slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
    pub reps: usize,
}

impl MeanSem {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n > 0, "mean of empty sample");
        let mean = pairwise_sum(xs) / n as f64;
        if n == 1 {
            return MeanSem { mean, sem: 0.0, reps: 1 };
        }
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&sq) / (n as f64 - 1.0);
        MeanSem { mean, sem: (var / n as f64).sqrt(), reps: n }
    }
}

/// Median of a sample (average of middle pair for even length).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of empty sample");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in median"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn replica_streams_are_disjoint_and_deterministic() {
        let mut a = replica_rng(7, 0);
        let mut b = replica_rng(7, 1);
        let mut a2 = replica_rng(7, 0);
        let xa: f64 = a.gen();
        let xb: f64 = b.gen();
        let xa2: f64 = a2.gen();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }

    #[test]
    fn run_replicas_is_thread_count_invariant() {
        let f = |r: u64, mut rng: ChaCha8Rng| -> f64 { r as f64 + rng.gen::<f64>() };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let r1 = pool1.install(|| run_replicas(3, 16, f));
        let r8 = pool8.install(|| run_replicas(3, 16, f));
        assert_eq!(r1, r8);
    }

    #[test]
    fn mean_sem_matches_naive() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let m = MeanSem::from_samples(&xs);
        assert!((m.mean - 2.5).abs() < 1e-15);
        // var = 5/3, sem = sqrt(5/12)
        assert!((m.sem - (5.0_f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
