//! Label-vector codebooks: nearly-orthogonal unit vectors that replace
//! one-hot class codings, plus closed-form estimates of how many such
//! vectors a given (dimension, threshold) budget admits.
//!
//! Generation is rejection sampling: draw a unit vector uniformly on the
//! sphere, keep it only if its cosine similarity against every vector
//! already in the set stays at or below the threshold `T`, and give up
//! after `max_tries` consecutive rejections.

use std::fmt::Write as _;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, new_rng, unit_vector};

/// Unit-norm vector in `R^d` used as a class target.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    /// Wrap a vector, normalizing it to unit length.
    ///
    /// Returns `None` for empty or (near-)zero input.
    pub fn from_components(mut components: Vec<f64>) -> Option<Self> {
        if components.is_empty() {
            return None;
        }
        let norm = components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-300) || !norm.is_finite() {
            return None;
        }
        for x in &mut components {
            *x /= norm;
        }
        Some(LabelVector(components))
    }

    fn from_unit(components: Vec<f64>) -> Self {
        LabelVector(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    /// Cosine similarity with another unit vector (plain dot product).
    pub fn cosine_to(&self, other: &LabelVector) -> f64 {
        dot(&self.0, &other.0).clamp(-1.0, 1.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Error, PartialEq)]
pub enum CodebookError {
    #[error("dimension must be >= 1, got {0}")]
    InvalidDim(usize),
    #[error("threshold must be a finite value in [-1, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("codebook generation exhausted after {max_tries} consecutive rejections: obtained {obtained} of {requested} vectors")]
    Exhausted {
        obtained: usize,
        requested: usize,
        max_tries: u32,
    },
    #[error("operation requires at least 2 vectors, codebook has {0}")]
    TooFewVectors(usize),
    #[error("codebook parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Ordered set of unit label vectors with pairwise cosine bounded by a
/// threshold.
///
/// Generation is a pure function of `(dim, threshold, seed)` and the call
/// sequence: each [`generate`](Self::generate) call consumes a fresh
/// ChaCha12 stream derived from the seed and the vector count at call
/// time, so extending a freshly built codebook and extending one reloaded
/// from disk produce identical vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelCodebook {
    dim: usize,
    threshold: f64,
    seed: u64,
    vectors: Vec<LabelVector>,
}

impl LabelCodebook {
    /// Empty codebook. `threshold` must lie in `[-1, 1]`.
    pub fn new(dim: usize, threshold: f64, seed: u64) -> Result<Self, CodebookError> {
        if dim < 1 {
            return Err(CodebookError::InvalidDim(dim));
        }
        if !threshold.is_finite() || !(-1.0..=1.0).contains(&threshold) {
            return Err(CodebookError::InvalidThreshold(threshold));
        }
        Ok(LabelCodebook {
            dim,
            threshold,
            seed,
            vectors: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, index: usize) -> &LabelVector {
        &self.vectors[index]
    }

    pub fn vectors(&self) -> &[LabelVector] {
        &self.vectors
    }

    fn accepts(&self, candidate: &LabelVector) -> bool {
        self.vectors
            .iter()
            .all(|v| v.cosine_to(candidate) <= self.threshold)
    }

    /// Extend the codebook by `count` vectors via rejection sampling.
    ///
    /// On exhaustion (`max_tries` consecutive rejections) the vectors
    /// accepted so far remain in the codebook and the error reports how
    /// many were obtained; the caller decides whether the partial result
    /// is acceptable.
    pub fn generate(&mut self, count: usize, max_tries: u32) -> Result<(), CodebookError> {
        assert!(max_tries >= 1, "max_tries must be >= 1");
        let mut rng = new_rng(derive_seed(self.seed, self.vectors.len() as u64));
        let mut obtained = 0usize;
        let mut try_time = 0u32;
        while obtained < count {
            let candidate = LabelVector::from_unit(unit_vector(self.dim, &mut rng));
            if self.accepts(&candidate) {
                self.vectors.push(candidate);
                obtained += 1;
                try_time = 0;
            } else {
                try_time += 1;
                if try_time >= max_tries {
                    return Err(CodebookError::Exhausted {
                        obtained,
                        requested: count,
                        max_tries,
                    });
                }
            }
        }
        Ok(())
    }

    /// Exact maximum cosine over all unordered distinct pairs.
    pub fn max_pairwise_cosine(&self) -> Result<f64, CodebookError> {
        if self.vectors.len() < 2 {
            return Err(CodebookError::TooFewVectors(self.vectors.len()));
        }
        let mut max = f64::NEG_INFINITY;
        for i in 0..self.vectors.len() {
            for j in (i + 1)..self.vectors.len() {
                let c = self.vectors[i].cosine_to(&self.vectors[j]);
                if c > max {
                    max = c;
                }
            }
        }
        Ok(max)
    }

    /// Serialize to the versioned text format:
    /// a header line `lmrc-codebook v1 dim=<d> T=<t> seed=<s> n=<count>`
    /// followed by one vector per line, components space-separated with
    /// 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "lmrc-codebook v1 dim={} T={} seed={} n={}",
            self.dim,
            self.threshold,
            self.seed,
            self.vectors.len()
        );
        for v in &self.vectors {
            let mut first = true;
            for x in v.components() {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{x:.16e}");
                first = false;
            }
            out.push('\n');
        }
        out
    }

    /// Parse the text format produced by [`to_text`](Self::to_text).
    pub fn from_text(text: &str) -> Result<Self, CodebookError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(CodebookError::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "lmrc-codebook" || fields[1] != "v1" {
            return Err(CodebookError::Parse {
                line: 1,
                message: format!("bad header: {header:?}"),
            });
        }
        let parse_kv = |field: &str, key: &str| -> Result<String, CodebookError> {
            field
                .strip_prefix(&format!("{key}="))
                .map(str::to_string)
                .ok_or_else(|| CodebookError::Parse {
                    line: 1,
                    message: format!("expected {key}=<value>, got {field:?}"),
                })
        };
        let dim: usize = parse_kv(fields[2], "dim")?
            .parse()
            .map_err(|e| CodebookError::Parse {
                line: 1,
                message: format!("dim: {e}"),
            })?;
        let threshold: f64 = parse_kv(fields[3], "T")?
            .parse()
            .map_err(|e| CodebookError::Parse {
                line: 1,
                message: format!("T: {e}"),
            })?;
        let seed: u64 = parse_kv(fields[4], "seed")?
            .parse()
            .map_err(|e| CodebookError::Parse {
                line: 1,
                message: format!("seed: {e}"),
            })?;
        let n: usize = parse_kv(fields[5], "n")?
            .parse()
            .map_err(|e| CodebookError::Parse {
                line: 1,
                message: format!("n: {e}"),
            })?;
        let mut cb = LabelCodebook::new(dim, threshold, seed)?;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let mut components = Vec::with_capacity(dim);
            for tok in line.split_whitespace() {
                components.push(tok.parse::<f64>().map_err(|e| CodebookError::Parse {
                    line: line_no,
                    message: format!("component: {e}"),
                })?);
            }
            if components.len() != dim {
                return Err(CodebookError::Parse {
                    line: line_no,
                    message: format!("expected {dim} components, got {}", components.len()),
                });
            }
            cb.vectors.push(LabelVector(components));
        }
        if cb.vectors.len() != n {
            return Err(CodebookError::Parse {
                line: 1,
                message: format!("header says n={n}, found {} vectors", cb.vectors.len()),
            });
        }
        Ok(cb)
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<(), CodebookError> {
        std::fs::write(path, self.to_text()).map_err(|e| CodebookError::Io(e.to_string()))
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self, CodebookError> {
        let text = std::fs::read_to_string(path).map_err(|e| CodebookError::Io(e.to_string()))?;
        Self::from_text(&text)
    }
}

/// Sample a unit label vector uniformly on the sphere in `R^dim`.
pub fn sample_unit_vector(dim: usize, rng: &mut ChaCha12Rng) -> LabelVector {
    LabelVector::from_unit(unit_vector(dim, rng))
}

/// Which standard deviation to plug into the acceptance-probability
/// Gaussian for the cosine of two random unit vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// `sigma = 1/d`, exactly the published integral.
    PaperFaithful,
    /// `sigma = 1/sqrt(d)`, the Beta-law variance of the cosine.
    Corrected,
}

/// Parameters for the closed-form capacity estimates.
#[derive(Clone, Copy, Debug)]
pub struct CapacityParams {
    pub dim: usize,
    pub threshold: f64,
    pub max_tries: u32,
    /// Confidence level `tau` in (0, 1).
    pub confidence: f64,
    pub variance_mode: VarianceMode,
}

impl CapacityParams {
    pub fn validate(&self) -> Result<(), CodebookError> {
        if self.dim < 1 {
            return Err(CodebookError::InvalidDim(self.dim));
        }
        if !self.threshold.is_finite() || !(-1.0..=1.0).contains(&self.threshold) {
            return Err(CodebookError::InvalidThreshold(self.threshold));
        }
        assert!(self.max_tries >= 1, "max_tries must be >= 1");
        assert!(
            self.confidence > 0.0 && self.confidence < 1.0,
            "confidence must lie in (0, 1)"
        );
        Ok(())
    }
}

/// Standard normal CDF via the Zelen & Severo rational approximation
/// (Abramowitz & Stegun 26.2.17); absolute error below 7.5e-8.
pub fn normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - normal_cdf(-x);
    }
    const P: f64 = 0.231_641_9;
    const B1: f64 = 0.319_381_530;
    const B2: f64 = -0.356_563_782;
    const B3: f64 = 1.781_477_937;
    const B4: f64 = -1.821_255_978;
    const B5: f64 = 1.330_274_429;
    let k = 1.0 / (1.0 + P * x);
    let poly = k * (B1 + k * (B2 + k * (B3 + k * (B4 + k * B5))));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    1.0 - pdf * poly
}

/// Probability that the cosine of two uniformly random unit vectors in
/// `R^d` falls at or below the threshold.
pub fn prob_accept(params: &CapacityParams) -> f64 {
    params.validate().expect("invalid capacity params");
    let d = params.dim as f64;
    let sigma = match params.variance_mode {
        VarianceMode::PaperFaithful => 1.0 / d,
        VarianceMode::Corrected => 1.0 / d.sqrt(),
    };
    normal_cdf(params.threshold / sigma)
}

/// Probability that the n-th insertion succeeds in one draw, under the
/// independence approximation: `pa^(n-1)`.
pub fn prob_nth_success(pa: f64, n: u32) -> f64 {
    assert!(pa > 0.0 && pa <= 1.0, "pa must lie in (0, 1]");
    assert!(n >= 1, "n must be >= 1");
    pa.powi(n as i32 - 1)
}

/// Probability of succeeding within `max_tries` geometric trials of
/// per-trial success probability `pb`: `1 - (1 - pb)^max_tries`.
pub fn prob_within_tries(pb: f64, max_tries: u32) -> f64 {
    assert!((0.0..=1.0).contains(&pb), "pb must lie in [0, 1]");
    1.0 - (1.0 - pb).powi(max_tries as i32)
}

/// Value returned by [`capacity_estimate`] when the acceptance
/// probability rounds to 1 and the bound degenerates.
pub const CAPACITY_UNBOUNDED: f64 = f64::INFINITY;

/// Closed-form estimate of how many label vectors the sampler yields
/// before the per-vector success probability (at confidence `tau`,
/// within `max_tries` draws) is no longer met:
/// `N = ln(1 - exp(ln(1 - tau)/gamma)) / ln(P(A)) + 1`.
///
/// Returns [`CAPACITY_UNBOUNDED`] when `P(A)` is numerically 1.
pub fn capacity_estimate(params: &CapacityParams) -> f64 {
    let pa = prob_accept(params);
    if pa >= 1.0 {
        return CAPACITY_UNBOUNDED;
    }
    let log_fail = (-params.confidence).ln_1p() / params.max_tries as f64;
    // 1 - e^x computed as -expm1(x) to keep precision for small |x|.
    let numerator = (-log_fail.exp_m1()).ln();
    numerator / pa.ln() + 1.0
}

/// Run the rejection sampler from an empty set until `max_tries`
/// consecutive rejections; returns the number of accepted vectors.
/// Deterministic in `seed`.
pub fn empirical_capacity(dim: usize, threshold: f64, max_tries: u32, seed: u64) -> usize {
    let mut cb = LabelCodebook::new(dim, threshold, seed).expect("invalid codebook params");
    match cb.generate(usize::MAX, max_tries) {
        Ok(()) => unreachable!("usize::MAX vectors cannot be generated"),
        Err(CodebookError::Exhausted { obtained, .. }) => obtained,
        Err(e) => panic!("unexpected generation error: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::new_rng;
    use proptest::prelude::*;

    #[test]
    fn sample_unit_vector_norms() {
        let mut rng = new_rng(1);
        for &dim in &[1usize, 2, 10, 100, 1000] {
            let v = sample_unit_vector(dim, &mut rng);
            let norm = v.components().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-9, "dim {dim}: {norm}");
        }
    }

    #[test]
    fn sample_unit_vector_dim_one_is_pm_one() {
        let mut rng = new_rng(2);
        for _ in 0..50 {
            let v = sample_unit_vector(1, &mut rng);
            assert!(v.components()[0] == 1.0 || v.components()[0] == -1.0);
        }
    }

    // Monte-Carlo check of the cosine moments: mean 0, variance 1/d.
    #[test]
    fn pair_cosine_moments_match_sphere_law() {
        let dim = 50;
        let pairs = 100_000;
        let mut rng = new_rng(3);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..pairs {
            let a = sample_unit_vector(dim, &mut rng);
            let b = sample_unit_vector(dim, &mut rng);
            let t = a.cosine_to(&b);
            sum += t;
            sumsq += t * t;
        }
        let mean = sum / pairs as f64;
        let var = sumsq / pairs as f64 - mean * mean;
        assert!(mean.abs() <= 0.01, "mean {mean}");
        let expected = 1.0 / dim as f64;
        assert!(
            (var - expected).abs() <= 0.2 * expected,
            "var {var} vs {expected}"
        );
    }

    #[test]
    fn generate_loose_threshold_succeeds() {
        let mut cb = LabelCodebook::new(8, 0.999, 10).unwrap();
        cb.generate(5, 100).unwrap();
        assert_eq!(cb.len(), 5);
        assert!(cb.max_pairwise_cosine().unwrap() <= 0.999);
    }

    #[test]
    fn generate_impossible_threshold_exhausts_with_partial() {
        let mut cb = LabelCodebook::new(64, -1.0, 10).unwrap();
        let err = cb.generate(2, 100).unwrap_err();
        assert_eq!(
            err,
            CodebookError::Exhausted {
                obtained: 1,
                requested: 2,
                max_tries: 100,
            }
        );
        assert_eq!(cb.len(), 1);
    }

    #[test]
    fn generate_paper_scale_codebook() {
        let mut cb = LabelCodebook::new(100, 0.15, 99).unwrap();
        cb.generate(100, 10_000).unwrap();
        assert_eq!(cb.len(), 100);
        assert!(cb.max_pairwise_cosine().unwrap() <= 0.15);
    }

    #[test]
    fn max_pairwise_cosine_basics() {
        let mut cb = LabelCodebook::new(2, 1.0, 0).unwrap();
        cb.vectors.push(LabelVector(vec![1.0, 0.0]));
        assert_eq!(
            cb.max_pairwise_cosine(),
            Err(CodebookError::TooFewVectors(1))
        );
        cb.vectors.push(LabelVector(vec![0.0, 1.0]));
        assert_eq!(cb.max_pairwise_cosine().unwrap(), 0.0);
        cb.vectors.push(LabelVector(vec![1.0, 0.0]));
        assert_eq!(cb.max_pairwise_cosine().unwrap(), 1.0);
    }

    #[test]
    fn generated_codebook_respects_threshold_exhaustively() {
        let mut cb = LabelCodebook::new(40, 0.2, 17).unwrap();
        cb.generate(30, 5_000).unwrap();
        // Direct exhaustive pair check as the oracle.
        let mut max = f64::NEG_INFINITY;
        for i in 0..cb.len() {
            for j in (i + 1)..cb.len() {
                max = max.max(cb.vector(i).cosine_to(cb.vector(j)));
            }
        }
        assert!(max <= 0.2, "max pairwise {max}");
        assert_eq!(max, cb.max_pairwise_cosine().unwrap());
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        let mut a = LabelCodebook::new(32, 0.3, 123).unwrap();
        let mut b = LabelCodebook::new(32, 0.3, 123).unwrap();
        a.generate(20, 1_000).unwrap();
        b.generate(20, 1_000).unwrap();
        for (u, v) in a.vectors().iter().zip(b.vectors()) {
            for (x, y) in u.components().iter().zip(v.components()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Incremental extension matches extension after a text round-trip.
        let mut c = LabelCodebook::from_text(&a.to_text()).unwrap();
        a.generate(5, 1_000).unwrap();
        c.generate(5, 1_000).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mut cb = LabelCodebook::new(7, 0.5, 99).unwrap();
        cb.generate(4, 1_000).unwrap();
        let text = cb.to_text();
        assert!(text.starts_with("lmrc-codebook v1 dim=7 T=0.5 seed=99 n=4\n"));
        let back = LabelCodebook::from_text(&text).unwrap();
        assert_eq!(cb.dim(), back.dim());
        assert_eq!(cb.threshold(), back.threshold());
        assert_eq!(cb.seed(), back.seed());
        for (u, v) in cb.vectors().iter().zip(back.vectors()) {
            for (x, y) in u.components().iter().zip(v.components()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn from_text_rejects_malformed_input() {
        assert!(LabelCodebook::from_text("").is_err());
        assert!(LabelCodebook::from_text("bogus v1 dim=2 T=0.5 seed=1 n=0").is_err());
        let short = "lmrc-codebook v1 dim=3 T=0.5 seed=1 n=1\n1.0 0.0\n";
        match LabelCodebook::from_text(short) {
            Err(CodebookError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(matches!(
            LabelCodebook::new(0, 0.5, 1),
            Err(CodebookError::InvalidDim(0))
        ));
        assert!(matches!(
            LabelCodebook::new(4, 1.5, 1),
            Err(CodebookError::InvalidThreshold(_))
        ));
        assert!(matches!(
            LabelCodebook::new(4, f64::NAN, 1),
            Err(CodebookError::InvalidThreshold(_))
        ));
    }

    // Reference values from an independent high-precision evaluation.
    #[test]
    fn normal_cdf_matches_reference_within_1e7() {
        let cases = [
            (0.0, 0.5),
            (0.5, 0.691_462_461_274_013_1),
            (1.0, 0.841_344_746_068_542_9),
            (1.5, 0.933_192_798_731_141_9),
            (2.0, 0.977_249_868_051_820_8),
            (-1.0, 0.158_655_253_931_457_05),
            (3.75, 0.999_911_582_714_799_2),
        ];
        for (x, expected) in cases {
            let got = normal_cdf(x);
            assert!(
                (got - expected).abs() <= 1e-7,
                "Phi({x}) = {got}, want {expected}"
            );
        }
    }

    fn params(dim: usize, threshold: f64, mode: VarianceMode) -> CapacityParams {
        CapacityParams {
            dim,
            threshold,
            max_tries: 10_000,
            confidence: 0.99,
            variance_mode: mode,
        }
    }

    #[test]
    fn prob_accept_at_zero_threshold_is_half() {
        for mode in [VarianceMode::PaperFaithful, VarianceMode::Corrected] {
            let p = prob_accept(&params(37, 0.0, mode));
            assert!((p - 0.5).abs() <= 1e-7, "{p}");
        }
    }

    #[test]
    fn prob_accept_near_one_threshold_low_dim() {
        let p = prob_accept(&params(2, 0.9999, VarianceMode::Corrected));
        assert!(p >= 0.92, "{p}");
    }

    #[test]
    fn prob_accept_corrected_matches_monte_carlo() {
        let dim = 25;
        let threshold = 0.2;
        let pairs = 100_000;
        let mut rng = new_rng(8);
        let mut hits = 0usize;
        for _ in 0..pairs {
            let a = sample_unit_vector(dim, &mut rng);
            let b = sample_unit_vector(dim, &mut rng);
            if a.cosine_to(&b) <= threshold {
                hits += 1;
            }
        }
        let mc = hits as f64 / pairs as f64;
        let p = prob_accept(&params(dim, threshold, VarianceMode::Corrected));
        assert!((p - mc).abs() <= 0.01, "gauss {p} vs mc {mc}");
    }

    #[test]
    fn prob_nth_success_basics() {
        assert_eq!(prob_nth_success(0.7, 1), 1.0);
        assert_eq!(prob_nth_success(0.5, 3), 0.25);
    }

    // Monte-Carlo check of the independence approximation: frequency of a
    // fresh draw passing against 9 fixed accepted vectors.
    #[test]
    fn prob_nth_success_matches_monte_carlo() {
        let dim = 50;
        let threshold = 0.2;
        let mut cb = LabelCodebook::new(dim, threshold, 21).unwrap();
        cb.generate(9, 10_000).unwrap();
        let trials = 100_000;
        let mut rng = new_rng(22);
        let mut hits = 0usize;
        for _ in 0..trials {
            let candidate = sample_unit_vector(dim, &mut rng);
            if cb.vectors().iter().all(|v| v.cosine_to(&candidate) <= threshold) {
                hits += 1;
            }
        }
        let mc = hits as f64 / trials as f64;
        let pa = prob_accept(&params(dim, threshold, VarianceMode::Corrected));
        let predicted = prob_nth_success(pa, 10);
        assert!((predicted - mc).abs() <= 0.05, "predicted {predicted} vs mc {mc}");
    }

    #[test]
    fn prob_within_tries_basics() {
        assert_eq!(prob_within_tries(1.0, 1), 1.0);
        assert_eq!(prob_within_tries(0.0, 17), 0.0);
        // Direct arithmetic oracle: repeated multiplication.
        let mut fail = 1.0;
        for _ in 0..100 {
            fail *= 0.99;
        }
        let expected = 1.0 - fail;
        let got = prob_within_tries(0.01, 100);
        assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
        assert!((got - 0.634).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn prob_within_tries_monotone(pb in 0.0f64..1.0, lo in 1u32..200, hi in 1u32..200) {
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            prop_assert!(prob_within_tries(pb, hi) >= prob_within_tries(pb, lo) - 1e-15);
        }

        #[test]
        fn prob_within_tries_monotone_in_pb(a in 0.0f64..1.0, b in 0.0f64..1.0, tries in 1u32..200) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(prob_within_tries(hi, tries) >= prob_within_tries(lo, tries) - 1e-15);
        }
    }

    // Frozen from an independent arbitrary-precision evaluation of the
    // capacity formula with the exact normal CDF.
    #[test]
    fn capacity_estimate_matches_independent_evaluation() {
        let p = params(100, 0.15, VarianceMode::Corrected);
        let n = capacity_estimate(&p);
        let expected = 112.122_461_667_675_37;
        assert!(
            (n - expected).abs() / expected <= 1e-4,
            "N = {n}, want ~{expected}"
        );
    }

    #[test]
    fn capacity_estimate_monotone_in_dim_and_threshold() {
        for mode in [VarianceMode::PaperFaithful, VarianceMode::Corrected] {
            let mut prev = 0.0;
            for dim in [25, 50, 100, 200, 300] {
                let n = capacity_estimate(&params(dim, 0.02, mode));
                assert!(n > prev, "mode {mode:?} dim {dim}: {n} !> {prev}");
                prev = n;
            }
            let mut prev = 0.0;
            for t in [0.05, 0.1, 0.2, 0.3] {
                let n = capacity_estimate(&params(25, t, mode));
                assert!(n > prev, "mode {mode:?} T {t}: {n} !> {prev}");
                prev = n;
            }
        }
    }

    #[test]
    fn capacity_estimate_monotone_in_gamma_and_confidence() {
        let base = params(50, 0.15, VarianceMode::Corrected);
        let mut lo = base;
        lo.max_tries = 100;
        let mut hi = base;
        hi.max_tries = 10_000;
        assert!(capacity_estimate(&hi) > capacity_estimate(&lo));

        let mut weak = base;
        weak.confidence = 0.5;
        let mut strong = base;
        strong.confidence = 0.999;
        assert!(capacity_estimate(&weak) > capacity_estimate(&strong));
    }

    #[test]
    fn capacity_estimate_unbounded_sentinel() {
        // Phi(T*d) rounds to 1 for large arguments in paper mode.
        let p = params(10_000, 0.5, VarianceMode::PaperFaithful);
        assert_eq!(capacity_estimate(&p), CAPACITY_UNBOUNDED);
    }

    #[test]
    fn empirical_capacity_tiny_dim_tight_threshold() {
        let count = empirical_capacity(2, -0.99, 50, 5);
        assert!(count <= 2, "count {count}");
    }

    #[test]
    fn empirical_capacity_meets_task_requirement() {
        let count = empirical_capacity(100, 0.2, 1_000, 6);
        assert!(count >= 100, "count {count}");
    }

    #[test]
    fn empirical_capacity_same_order_as_estimate() {
        let p = CapacityParams {
            dim: 25,
            threshold: 0.1,
            max_tries: 1_000,
            confidence: 0.99,
            variance_mode: VarianceMode::Corrected,
        };
        let estimate = capacity_estimate(&p);
        for seed in 0..5u64 {
            let count = empirical_capacity(25, 0.1, 1_000, seed) as f64;
            assert!(
                count >= estimate / 10.0 && count <= estimate * 10.0,
                "seed {seed}: count {count} vs estimate {estimate}"
            );
        }
    }

    #[test]
    fn empirical_capacity_deterministic() {
        assert_eq!(
            empirical_capacity(16, 0.25, 200, 77),
            empirical_capacity(16, 0.25, 200, 77)
        );
    }
}
