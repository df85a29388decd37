//! Sequence / slice / token partitioning of an IQ stream.
//!
//! A sequence is `N = M·S` consecutive complex samples. It is cut into `M`
//! slices of `S` samples and each slice is flattened into one token of `2S`
//! reals by interleaving I and Q. No embedding or positional encoding is
//! added here.

use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::signal::{deinterleave_into_complex, interleave_samples};
use crate::{Complex, ComplexSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenizationConfig {
    /// Slices (tokens) per sequence.
    pub m: usize,
    /// Complex samples per slice.
    pub s: usize,
    /// Hop between consecutive sequences drawn from one burst.
    pub stride_samples: usize,
}

impl TokenizationConfig {
    pub fn new(m: usize, s: usize) -> Result<Self> {
        let cfg = Self {
            m,
            s,
            stride_samples: m * s,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 24 tokens of 64 samples.
    pub fn sm() -> Self {
        Self::new(24, 64).expect("valid preset")
    }

    /// 64 tokens of 128 samples.
    pub fn lg() -> Self {
        Self::new(64, 128).expect("valid preset")
    }

    pub fn with_stride(mut self, stride_samples: usize) -> Self {
        self.stride_samples = stride_samples;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.s == 0 || self.stride_samples == 0 {
            bail!(InvalidSpec, "M, S and stride must be positive (got {self:?})");
        }
        Ok(())
    }

    /// Complex samples consumed per sequence.
    pub fn sequence_len(&self) -> usize {
        self.m * self.s
    }

    /// Width of one token (2S).
    pub fn token_width(&self) -> usize {
        2 * self.s
    }
}

/// `M` rows of `2S` interleaved reals, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    width: usize,
    values: Vec<f64>,
}

impl TokenMatrix {
    pub fn from_values(rows: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || width == 0 || !width.is_multiple_of(2) {
            bail!(Shape, "token matrix needs rows >= 1 and an even positive width");
        }
        if values.len() != rows * width {
            bail!(Shape, "expected {} values for {rows}x{width}, got {}", rows * width, values.len());
        }
        if values.iter().any(|v| !v.is_finite()) {
            bail!(InvalidInput, "token values must be finite");
        }
        Ok(Self { rows, width, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Tokenizes the first `M·S` samples of `signal`.
pub fn tokenize(signal: &ComplexSignal, cfg: &TokenizationConfig) -> Result<TokenMatrix> {
    tokenize_samples(signal.samples(), cfg)
}

pub fn tokenize_samples(samples: &[Complex], cfg: &TokenizationConfig) -> Result<TokenMatrix> {
    cfg.validate()?;
    let needed = cfg.sequence_len();
    if samples.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            available: samples.len(),
        });
    }
    // Row k covers samples [kS, (k+1)S); interleaving the whole prefix gives
    // exactly the row-major layout.
    let values = interleave_samples(&samples[..needed]);
    TokenMatrix::from_values(cfg.m, cfg.token_width(), values)
}

/// Start offsets `0, stride, 2·stride, …` of every sequence that fits.
pub fn index_sequences(total_len: usize, cfg: &TokenizationConfig) -> Vec<usize> {
    let n = cfg.sequence_len();
    if total_len < n || cfg.stride_samples == 0 {
        return Vec::new();
    }
    (0..=(total_len - n) / cfg.stride_samples)
        .map(|i| i * cfg.stride_samples)
        .collect()
}

/// Deinterleaves and concatenates the rows back into complex samples.
pub fn reassemble(tokens: &TokenMatrix) -> Vec<Complex> {
    deinterleave_into_complex(tokens.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use crate::signal::unit_noise;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn preset_shapes() {
        let x = ComplexSignal::new(unit_noise(8192, &mut rng_from_seed(1)), 20e6);
        let t = tokenize(&x, &TokenizationConfig::lg()).unwrap();
        assert_eq!((t.rows(), t.width()), (64, 256));
        let t = tokenize(&x, &TokenizationConfig::sm()).unwrap();
        assert_eq!((t.rows(), t.width()), (24, 128));
        assert_eq!(TokenizationConfig::sm().sequence_len(), 1536);
    }

    #[test]
    fn row_layout() {
        let samples: Vec<Complex> = (0..8).map(|k| Complex::new(k as f64, -(k as f64))).collect();
        let t = tokenize_samples(&samples, &TokenizationConfig::new(2, 3).unwrap()).unwrap();
        assert_eq!(t.row(0), &[0.0, -0.0, 1.0, -1.0, 2.0, -2.0]);
        assert_eq!(t.row(1), &[3.0, -3.0, 4.0, -4.0, 5.0, -5.0]);
    }

    #[test]
    fn too_short() {
        let x = ComplexSignal::zeros(100, 20e6);
        assert_eq!(
            tokenize(&x, &TokenizationConfig::sm()),
            Err(Error::InsufficientSamples { needed: 1536, available: 100 })
        );
    }

    #[test]
    fn sequence_offsets() {
        let lg = TokenizationConfig::lg();
        assert_eq!(index_sequences(18112, &lg), vec![0, 8192]);
        assert_eq!(index_sequences(8192, &lg), vec![0]);
        assert_eq!(index_sequences(16384, &lg.with_stride(4096)), vec![0, 4096, 8192]);
        assert!(index_sequences(100, &lg).is_empty());
    }

    #[test]
    fn no_clamping() {
        let samples = vec![Complex::new(5.0, -7.0); 4];
        let t = tokenize_samples(&samples, &TokenizationConfig::new(2, 2).unwrap()).unwrap();
        assert_eq!(t.values()[0], 5.0);
        assert_eq!(t.values()[1], -7.0);
    }

    proptest! {
        #[test]
        fn round_trip(seed in any::<u64>(), m in 1usize..8, s in 1usize..16, extra in 0usize..10) {
            let cfg = TokenizationConfig::new(m, s).unwrap();
            let x = unit_noise(m * s + extra, &mut rng_from_seed(seed));
            let t = tokenize_samples(&x, &cfg).unwrap();
            prop_assert_eq!(reassemble(&t), x[..m * s].to_vec());
        }

        #[test]
        fn scaling_equivariance(seed in any::<u64>(), a in -4.0f64..4.0) {
            let cfg = TokenizationConfig::new(3, 5).unwrap();
            let x = unit_noise(15, &mut rng_from_seed(seed));
            let scaled: Vec<Complex> = x.iter().map(|v| v * a).collect();
            let t = tokenize_samples(&x, &cfg).unwrap();
            let ts = tokenize_samples(&scaled, &cfg).unwrap();
            for (p, q) in t.values().iter().zip(ts.values()) {
                prop_assert_eq!(p * a, *q);
            }
        }

        #[test]
        fn offsets_in_bounds(len in 0usize..5000, m in 1usize..6, s in 1usize..50, stride in 1usize..400) {
            let cfg = TokenizationConfig::new(m, s).unwrap().with_stride(stride);
            let offs = index_sequences(len, &cfg);
            for &o in &offs {
                prop_assert!(o + cfg.sequence_len() <= len);
            }
            if len >= cfg.sequence_len() {
                let last = *offs.last().unwrap();
                prop_assert!(last + stride + cfg.sequence_len() > len);
            }
        }
    }
}
