//! The compact trainable encoder.
//!
//! Text is lowercased, split on whitespace and hashed into a fixed number of
//! buckets. The encoding of a token sequence is
//!
//! ```text
//! x = mean of embedding rows (summed in ascending token-id order)
//! x' = x ⊙ mask / (1 - dropout_rate)      (only when a mask is supplied)
//! z = P x'
//! v = z / ‖z‖
//! ```
//!
//! Gradients are exact, including the normalization Jacobian `(I − vvᵀ)/‖z‖`.

mod io;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{HceError, Result};
use crate::vector::{axpy, dot, l2_norm, UnitVector, ZERO_NORM_EPS};

pub use io::{read_encoder, write_encoder, ENCODER_MAGIC};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Hashed vocabulary: tokens map to `FNV-1a(seed_le_bytes ++ token_utf8) % bucket_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    bucket_count: u32,
    hash_seed: u64,
}

impl Vocabulary {
    pub fn new(bucket_count: u32, hash_seed: u64) -> Result<Self> {
        if bucket_count < 2 {
            return Err(HceError::Config(format!(
                "bucket_count must be at least 2, got {bucket_count}"
            )));
        }
        Ok(Vocabulary {
            bucket_count,
            hash_seed,
        })
    }

    pub fn bucket_count(&self) -> u32 {
        self.bucket_count
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn token_id(&self, token: &str) -> u32 {
        let mut h = FNV_OFFSET;
        for b in self.hash_seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        (h % u64::from(self.bucket_count)) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence(Vec<u32>);

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        TokenSequence(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reserved id for text with no tokens.
pub const EMPTY_TOKEN: u32 = 0;

pub fn tokenize(vocab: &Vocabulary, text: &str) -> TokenSequence {
    let lowered = text.to_lowercase();
    let ids: Vec<u32> = lowered
        .split_whitespace()
        .map(|tok| vocab.token_id(tok))
        .collect();
    if ids.is_empty() {
        TokenSequence(vec![EMPTY_TOKEN])
    } else {
        TokenSequence(ids)
    }
}

/// Per-unit keep flags over the pooled hidden vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask(Vec<bool>);

impl DropoutMask {
    pub fn new(keep: Vec<bool>) -> Self {
        DropoutMask(keep)
    }

    pub fn draw<R: Rng + ?Sized>(hidden: usize, rate: f64, rng: &mut R) -> Self {
        DropoutMask((0..hidden).map(|_| rng.random::<f64>() >= rate).collect())
    }

    pub fn keep(&self) -> &[bool] {
        &self.0
    }
}

/// Trainable weights: `embedding_table` is `bucket_count × hidden`,
/// `projection` is `dim × hidden`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParameters {
    vocab: Vocabulary,
    dim: usize,
    hidden: usize,
    dropout_rate: f64,
    embedding_table: Vec<f64>,
    projection: Vec<f64>,
}

impl EncoderParameters {
    /// Gaussian init: embeddings ~ N(0, 1), projection ~ N(0, 1/hidden).
    pub fn init<R: Rng + ?Sized>(
        vocab: Vocabulary,
        dim: usize,
        hidden: usize,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        validate_shape(dim, hidden, dropout_rate)?;
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let rows = vocab.bucket_count as usize;
        let embedding_table: Vec<f64> = (0..rows * hidden).map(|_| unit.sample(rng)).collect();
        let scale = 1.0 / (hidden as f64).sqrt();
        let projection: Vec<f64> = (0..dim * hidden).map(|_| unit.sample(rng) * scale).collect();
        Ok(EncoderParameters {
            vocab,
            dim,
            hidden,
            dropout_rate,
            embedding_table,
            projection,
        })
    }

    pub fn from_parts(
        vocab: Vocabulary,
        dim: usize,
        hidden: usize,
        dropout_rate: f64,
        embedding_table: Vec<f64>,
        projection: Vec<f64>,
    ) -> Result<Self> {
        validate_shape(dim, hidden, dropout_rate)?;
        let rows = vocab.bucket_count as usize;
        if embedding_table.len() != rows * hidden {
            return Err(HceError::DimensionMismatch {
                expected: rows * hidden,
                found: embedding_table.len(),
            });
        }
        if projection.len() != dim * hidden {
            return Err(HceError::DimensionMismatch {
                expected: dim * hidden,
                found: projection.len(),
            });
        }
        if !embedding_table.iter().chain(&projection).all(|x| x.is_finite()) {
            return Err(HceError::NonFinite);
        }
        Ok(EncoderParameters {
            vocab,
            dim,
            hidden,
            dropout_rate,
            embedding_table,
            projection,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn embedding_table(&self) -> &[f64] {
        &self.embedding_table
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn embedding_table_mut(&mut self) -> &mut [f64] {
        &mut self.embedding_table
    }

    pub fn projection_mut(&mut self) -> &mut [f64] {
        &mut self.projection
    }

    pub fn embedding_row(&self, id: u32) -> &[f64] {
        let h = self.hidden;
        &self.embedding_table[id as usize * h..(id as usize + 1) * h]
    }

    pub fn parameter_count(&self) -> usize {
        self.embedding_table.len() + self.projection.len()
    }

    pub fn is_finite(&self) -> bool {
        self.embedding_table
            .iter()
            .chain(&self.projection)
            .all(|x| x.is_finite())
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        tokenize(&self.vocab, text)
    }

    /// Encodes text with no dropout.
    pub fn encode_text(&self, text: &str) -> Result<UnitVector> {
        encode(self, &self.tokenize(text), None)
    }

    fn check_tokens(&self, tokens: &TokenSequence) -> Result<()> {
        if tokens.is_empty() {
            return Err(HceError::EmptyTokens);
        }
        if let Some(&bad) = tokens.ids().iter().find(|&&t| t >= self.vocab.bucket_count) {
            return Err(HceError::IndexOutOfRange {
                index: bad as usize,
                len: self.vocab.bucket_count as usize,
            });
        }
        Ok(())
    }

    fn check_mask(&self, mask: Option<&DropoutMask>) -> Result<()> {
        match mask {
            Some(m) if m.0.len() != self.hidden => Err(HceError::DimensionMismatch {
                expected: self.hidden,
                found: m.0.len(),
            }),
            _ => Ok(()),
        }
    }
}

fn validate_shape(dim: usize, hidden: usize, dropout_rate: f64) -> Result<()> {
    if dim == 0 || hidden == 0 {
        return Err(HceError::Config("dim and hidden must be positive".into()));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(HceError::Config(format!(
            "dropout_rate must be in [0, 1), got {dropout_rate}"
        )));
    }
    Ok(())
}

/// Intermediate values of one forward pass.
struct Forward {
    /// Pooled and (optionally) masked hidden vector.
    hidden: Vec<f64>,
    /// Projected, pre-normalization vector.
    projected: Vec<f64>,
    norm: f64,
}

fn forward(
    params: &EncoderParameters,
    tokens: &TokenSequence,
    mask: Option<&DropoutMask>,
) -> Result<Forward> {
    params.check_tokens(tokens)?;
    params.check_mask(mask)?;
    let h = params.hidden;
    // Accumulate in ascending token-id order so any permutation of the
    // sequence pools to the same bits.
    let mut ordered = tokens.ids().to_vec();
    ordered.sort_unstable();
    let mut pooled = vec![0.0; h];
    for &t in &ordered {
        for (p, e) in pooled.iter_mut().zip(params.embedding_row(t)) {
            *p += e;
        }
    }
    let inv_len = 1.0 / tokens.len() as f64;
    for p in pooled.iter_mut() {
        *p *= inv_len;
    }
    if let Some(mask) = mask {
        let keep_scale = 1.0 / (1.0 - params.dropout_rate);
        for (p, &keep) in pooled.iter_mut().zip(&mask.0) {
            *p = if keep { *p * keep_scale } else { 0.0 };
        }
    }
    let projected: Vec<f64> = params
        .projection
        .chunks_exact(h)
        .map(|row| dot(row, &pooled))
        .collect();
    let norm = l2_norm(&projected);
    if !norm.is_finite() {
        return Err(HceError::NonFinite);
    }
    if norm <= ZERO_NORM_EPS {
        return Err(HceError::ZeroNorm { norm });
    }
    Ok(Forward {
        hidden: pooled,
        projected,
        norm,
    })
}

pub fn encode(
    params: &EncoderParameters,
    tokens: &TokenSequence,
    dropout_mask: Option<&DropoutMask>,
) -> Result<UnitVector> {
    let f = forward(params, tokens, dropout_mask)?;
    Ok(UnitVector::from_normalized_unchecked(
        f.projected.iter().map(|z| z / f.norm).collect(),
    ))
}

/// Gradients with the shapes of [`EncoderParameters`]. Embedding gradients
/// are stored sparsely by row.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    hidden: usize,
    pub embedding_rows: BTreeMap<u32, Vec<f64>>,
    pub projection: Vec<f64>,
}

impl EncoderGradients {
    pub fn zeros(params: &EncoderParameters) -> Self {
        EncoderGradients {
            hidden: params.hidden,
            embedding_rows: BTreeMap::new(),
            projection: vec![0.0; params.projection.len()],
        }
    }

    /// Gradient for one embedding row (zeros if the row was never touched).
    pub fn embedding_row(&self, id: u32) -> Vec<f64> {
        self.embedding_rows
            .get(&id)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.hidden])
    }

    pub fn scale(&mut self, a: f64) {
        for row in self.embedding_rows.values_mut() {
            row.iter_mut().for_each(|x| *x *= a);
        }
        self.projection.iter_mut().for_each(|x| *x *= a);
    }

    /// `self += a · other`
    pub fn add_scaled(&mut self, other: &EncoderGradients, a: f64) {
        for (id, row) in &other.embedding_rows {
            let dst = self
                .embedding_rows
                .entry(*id)
                .or_insert_with(|| vec![0.0; self.hidden]);
            axpy(a, row, dst);
        }
        axpy(a, &other.projection, &mut self.projection);
    }

    pub fn is_finite(&self) -> bool {
        self.projection.iter().all(|x| x.is_finite())
            && self
                .embedding_rows
                .values()
                .all(|r| r.iter().all(|x| x.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.projection.iter().all(|&x| x == 0.0)
            && self.embedding_rows.values().all(|r| r.iter().all(|&x| x == 0.0))
    }

    /// `params -= rate · self`
    pub fn apply_sgd(&self, params: &mut EncoderParameters, rate: f64) {
        let h = self.hidden;
        for (&id, row) in &self.embedding_rows {
            let start = id as usize * h;
            axpy(-rate, row, &mut params.embedding_table[start..start + h]);
        }
        axpy(-rate, &self.projection, &mut params.projection);
    }
}

/// Exact gradient of `upstream · encode(params, tokens, mask)`.
pub fn encode_backward(
    params: &EncoderParameters,
    tokens: &TokenSequence,
    dropout_mask: Option<&DropoutMask>,
    upstream: &[f64],
) -> Result<EncoderGradients> {
    let mut grads = EncoderGradients::zeros(params);
    accumulate_backward(params, tokens, dropout_mask, upstream, 1.0, &mut grads)?;
    Ok(grads)
}

/// Adds `scale ·` the gradient of `upstream · encode(...)` into `grads`.
pub fn accumulate_backward(
    params: &EncoderParameters,
    tokens: &TokenSequence,
    dropout_mask: Option<&DropoutMask>,
    upstream: &[f64],
    scale: f64,
    grads: &mut EncoderGradients,
) -> Result<()> {
    if upstream.len() != params.dim {
        return Err(HceError::DimensionMismatch {
            expected: params.dim,
            found: upstream.len(),
        });
    }
    let f = forward(params, tokens, dropout_mask)?;
    let h = params.hidden;

    // d/dz of g·(z/‖z‖) = (g − (g·v) v) / ‖z‖
    let v: Vec<f64> = f.projected.iter().map(|z| z / f.norm).collect();
    let gv = dot(upstream, &v);
    let dz: Vec<f64> = upstream
        .iter()
        .zip(&v)
        .map(|(g, vi)| scale * (g - gv * vi) / f.norm)
        .collect();

    // z = P x'  →  dP = dz x'ᵀ,  dx' = Pᵀ dz
    let mut dx = vec![0.0; h];
    for (i, dzi) in dz.iter().enumerate() {
        let row = &params.projection[i * h..(i + 1) * h];
        axpy(*dzi, &f.hidden, &mut grads.projection[i * h..(i + 1) * h]);
        axpy(*dzi, row, &mut dx);
    }
    if let Some(mask) = dropout_mask {
        let keep_scale = 1.0 / (1.0 - params.dropout_rate);
        for (d, &keep) in dx.iter_mut().zip(&mask.0) {
            *d = if keep { *d * keep_scale } else { 0.0 };
        }
    }
    let inv_len = 1.0 / tokens.len() as f64;
    for &t in tokens.ids() {
        let row = grads.embedding_rows.entry(t).or_insert_with(|| vec![0.0; h]);
        axpy(inv_len, &dx, row);
    }
    Ok(())
}

/// Inverse-cloze pseudo-query: a uniformly placed contiguous span of
/// `span_len` tokens, or the whole sequence when it is not longer than that.
pub fn ict_sample<R: Rng + ?Sized>(tokens: &TokenSequence, span_len: usize, rng: &mut R) -> TokenSequence {
    let span_len = span_len.max(1);
    if tokens.len() <= span_len {
        return tokens.clone();
    }
    let start = rng.random_range(0..=tokens.len() - span_len);
    TokenSequence(tokens.0[start..start + span_len].to_vec())
}

/// Two encodings of the same tokens under independently drawn dropout masks.
pub fn simcse_views<R: Rng + ?Sized>(
    params: &EncoderParameters,
    tokens: &TokenSequence,
    rng: &mut R,
) -> Result<(UnitVector, UnitVector)> {
    let (a, b) = simcse_masks(params, rng);
    Ok((
        encode(params, tokens, a.as_ref())?,
        encode(params, tokens, b.as_ref())?,
    ))
}

/// The mask pair behind [`simcse_views`]; `None` when dropout is disabled.
pub fn simcse_masks<R: Rng + ?Sized>(
    params: &EncoderParameters,
    rng: &mut R,
) -> (Option<DropoutMask>, Option<DropoutMask>) {
    if params.dropout_rate == 0.0 {
        return (None, None);
    }
    let a = DropoutMask::draw(params.hidden, params.dropout_rate, rng);
    let b = DropoutMask::draw(params.hidden, params.dropout_rate, rng);
    (Some(a), Some(b))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_params(seed: u64, buckets: u32, dim: usize, hidden: usize, rate: f64) -> EncoderParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = Vocabulary::new(buckets, 7).unwrap();
        EncoderParameters::init(vocab, dim, hidden, rate, &mut rng).unwrap()
    }

    /// FNV-1a written out independently of `Vocabulary::token_id`.
    fn reference_hash(seed: u64, token: &str, buckets: u64) -> u64 {
        let mut bytes = seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(token.as_bytes());
        let mut h: u64 = 14695981039346656037;
        for b in bytes {
            h = (h ^ b as u64).wrapping_mul(1099511628211);
        }
        h % buckets
    }

    #[test]
    fn tokenize_examples() {
        let vocab = Vocabulary::new(1 << 16, 42).unwrap();
        assert_eq!(tokenize(&vocab, "").ids(), &[0]);
        assert_eq!(tokenize(&vocab, "  \t\n").ids(), &[0]);
        let aa = tokenize(&vocab, "A a");
        assert_eq!(aa.len(), 2);
        assert_eq!(aa.ids()[0], aa.ids()[1]);
        let hw = tokenize(&vocab, "hello world");
        assert_eq!(
            hw.ids(),
            &[
                reference_hash(42, "hello", 1 << 16) as u32,
                reference_hash(42, "world", 1 << 16) as u32,
            ]
        );
        assert_eq!(hw, tokenize(&vocab, "hello world"));
        assert!(Vocabulary::new(1, 0).is_err());
    }

    #[test]
    fn single_token_with_identity_projection() {
        let vocab = Vocabulary::new(4, 0).unwrap();
        let (dim, hidden) = (3, 3);
        let mut table = vec![0.0; 4 * hidden];
        table[hidden * 2] = 2.0;
        let mut proj = vec![0.0; dim * hidden];
        for i in 0..dim.min(hidden) {
            proj[i * hidden + i] = 1.0;
        }
        let p = EncoderParameters::from_parts(vocab, dim, hidden, 0.0, table, proj).unwrap();
        let v = encode(&p, &TokenSequence::new(vec![2]), None).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn repeated_tokens_pool_to_same_output() {
        let p = small_params(1, 32, 4, 6, 0.0);
        let one = encode(&p, &TokenSequence::new(vec![5]), None).unwrap();
        let two = encode(&p, &TokenSequence::new(vec![5, 5]), None).unwrap();
        for (a, b) in one.iter().zip(two.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        let p = small_params(11, 64, 5, 7, 0.0);
        let tokens = p.tokenize("a b");
        let got = encode(&p, &tokens, None).unwrap();

        let h = p.hidden();
        let mut x = [0.0f64; 7];
        for &t in tokens.ids() {
            for j in 0..h {
                x[j] += p.embedding_table()[t as usize * h + j] / tokens.len() as f64;
            }
        }
        let mut z = [0.0f64; 5];
        for i in 0..5 {
            for j in 0..h {
                z[i] += p.projection()[i * h + j] * x[j];
            }
        }
        let n = z.iter().map(|a| a * a).sum::<f64>().sqrt();
        for i in 0..5 {
            assert!((got[i] - z[i] / n).abs() < 1e-12);
        }
    }

    #[test]
    fn output_is_unit_and_order_invariant() {
        let p = small_params(3, 128, 8, 8, 0.0);
        let a = encode(&p, &TokenSequence::new(vec![3, 9, 27, 81]), None).unwrap();
        let b = encode(&p, &TokenSequence::new(vec![81, 27, 9, 3]), None).unwrap();
        assert!((l2_norm(&a) - 1.0).abs() <= 1e-9);
        assert_eq!(a, b);
    }

    #[test]
    fn encode_errors() {
        let p = small_params(3, 16, 2, 2, 0.5);
        assert!(matches!(
            encode(&p, &TokenSequence::new(vec![]), None),
            Err(HceError::EmptyTokens)
        ));
        assert!(encode(&p, &TokenSequence::new(vec![16]), None).is_err());
        let all_dropped = DropoutMask::new(vec![false, false]);
        assert!(matches!(
            encode(&p, &TokenSequence::new(vec![1]), Some(&all_dropped)),
            Err(HceError::ZeroNorm { .. })
        ));
        assert!(encode(
            &p,
            &TokenSequence::new(vec![1]),
            Some(&DropoutMask::new(vec![true]))
        )
        .is_err());
    }

    #[test]
    fn backward_zero_upstream_and_tangent_projection() {
        let p = small_params(5, 16, 4, 3, 0.2);
        let tokens = TokenSequence::new(vec![1, 2, 2, 9]);
        let g = encode_backward(&p, &tokens, None, &[0.0; 4]).unwrap();
        assert!(g.is_zero());
        let v = encode(&p, &tokens, None).unwrap();
        let g = encode_backward(&p, &tokens, None, &v).unwrap();
        let max = g
            .embedding_rows
            .values()
            .flatten()
            .chain(&g.projection)
            .fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max < 1e-14, "max = {max}");
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = l2_norm(a).max(l2_norm(b));
        if scale < 1e-10 {
            diff
        } else {
            diff / scale
        }
    }

    #[test]
    fn backward_matches_finite_differences_small() {
        let mut p = small_params(9, 8, 2, 3, 0.25);
        let tokens = TokenSequence::new(vec![1, 4, 4, 6]);
        let mask = DropoutMask::new(vec![true, false, true]);
        let upstream = [0.7, -1.3];
        for m in [None, Some(&mask)] {
            let g = encode_backward(&p, &tokens, m, &upstream).unwrap();
            let eps = 1e-6;
            let f = |p: &EncoderParameters| dot(&upstream, &encode(p, &tokens, m).unwrap());
            let mut num_proj = vec![0.0; p.projection().len()];
            for i in 0..num_proj.len() {
                let orig = p.projection()[i];
                p.projection_mut()[i] = orig + eps;
                let up = f(&p);
                p.projection_mut()[i] = orig - eps;
                let down = f(&p);
                p.projection_mut()[i] = orig;
                num_proj[i] = (up - down) / (2.0 * eps);
            }
            assert!(rel_err(&g.projection, &num_proj) < 1e-6);
            let mut ana = Vec::new();
            let mut num = Vec::new();
            for i in 0..p.embedding_table().len() {
                let orig = p.embedding_table()[i];
                p.embedding_table_mut()[i] = orig + eps;
                let up = f(&p);
                p.embedding_table_mut()[i] = orig - eps;
                let down = f(&p);
                p.embedding_table_mut()[i] = orig;
                num.push((up - down) / (2.0 * eps));
                ana.push(g.embedding_row((i / 3) as u32)[i % 3]);
            }
            assert!(rel_err(&ana, &num) < 1e-6);
        }
    }

    #[test]
    fn ict_span_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let short = TokenSequence::new((0..10).collect());
        assert_eq!(ict_sample(&short, 64, &mut rng), short);
        let exact = TokenSequence::new((0..64).collect());
        assert_eq!(ict_sample(&exact, 64, &mut rng), exact);
        let long = TokenSequence::new((0..100).collect());
        let mut starts = std::collections::BTreeSet::new();
        for seed in 0..400 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = ict_sample(&long, 64, &mut rng);
            assert_eq!(s.len(), 64);
            let start = s.ids()[0] as usize;
            assert!(start <= 36);
            assert_eq!(s.ids(), &long.ids()[start..start + 64]);
            let mut again = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(ict_sample(&long, 64, &mut again), s);
            starts.insert(start);
        }
        // 400 draws over 37 offsets cover every one of them
        assert_eq!(starts.len(), 37);
    }

    #[test]
    fn simcse_views_behaviour() {
        let tokens = TokenSequence::new(vec![1, 2, 3, 4, 5]);
        let p0 = small_params(2, 16, 8, 64, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = simcse_views(&p0, &tokens, &mut rng).unwrap();
        assert_eq!(a, b);

        let p = small_params(2, 16, 8, 64, 0.1);
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            simcse_views(&p, &tokens, &mut r1).unwrap(),
            simcse_views(&p, &tokens, &mut r2).unwrap()
        );

        let mut cosines = Vec::new();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = simcse_views(&p, &tokens, &mut rng).unwrap();
            cosines.push(dot(&a, &b));
        }
        let differing = cosines.iter().filter(|&&c| c < 1.0 - 1e-12).count();
        let positive = cosines.iter().filter(|&&c| c > 0.0).count();
        assert!(differing >= 99, "views identical too often: {differing}");
        assert_eq!(positive, 100);
    }
}
