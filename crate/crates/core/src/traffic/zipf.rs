use rand::Rng;

/// Zipf probabilities over ranks `1..=library_size`: `p(r) ∝ r^(-alpha)`.
pub fn zipf_pmf(library_size: usize, alpha: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=library_size)
        .map(|r| (r as f64).powf(-alpha))
        .collect();
    // Summing smallest-first keeps the normalizer accurate for long tails.
    let total: f64 = weights.iter().rev().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Inverse-CDF sampler over ranks. Draws exactly one `f64` per sample.
#[derive(Clone, Debug)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(library_size: usize, alpha: f64) -> Self {
        let mut acc = 0.0;
        let cdf = zipf_pmf(library_size, alpha)
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        ZipfSampler { cdf }
    }

    /// Zero-based rank.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }
}
