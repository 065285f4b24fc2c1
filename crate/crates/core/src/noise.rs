//! Wiener increments dB for the collapse equations.
//!
//! Two schemes are supported. The binary scheme returns `±sqrt(γ·dt)` with
//! equal probability, so `dB² = γ·dt` holds for every single draw. The
//! Gaussian scheme returns `N(0, γ·dt)` draws, which only satisfies the
//! mean/variance constraints on average.
//!
//! Streams are either pseudorandom (ChaCha8, seeded, with an optional stream
//! id so ensemble trials get disjoint sequences) or recorded, replaying a
//! fixed list of increments and failing once it runs out.

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CslError, Result};

pub const DEFAULT_GAMMA: f64 = 800.0;
pub const DEFAULT_DT: f64 = 5e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScheme {
    #[default]
    Binary,
    Gaussian,
}

impl std::str::FromStr for NoiseScheme {
    type Err = CslError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Self::Binary),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(CslError::NoiseConfig(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise intensity γ, s⁻¹.
    pub gamma: f64,
    /// Elementary step dt, s.
    pub dt: f64,
    pub scheme: NoiseScheme,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            dt: DEFAULT_DT,
            scheme: NoiseScheme::Binary,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(CslError::NoiseConfig(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CslError::NoiseConfig(format!(
                "dt must be positive and finite, got {}",
                self.dt
            )));
        }
        Ok(())
    }

    /// `sqrt(γ·dt)`: the binary-scheme increment size and the Gaussian
    /// standard deviation.
    pub fn magnitude(&self) -> f64 {
        (self.gamma * self.dt).sqrt()
    }

    pub fn variance(&self) -> f64 {
        self.gamma * self.dt
    }
}

#[derive(Debug, Clone)]
pub enum NoiseSource {
    Pseudorandom(Box<ChaCha8Rng>),
    Recorded(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    config: NoiseConfig,
    cursor: u64,
    source: NoiseSource,
}

impl NoiseStream {
    /// Pseudorandom stream seeded from `config.seed`.
    pub fn pseudorandom(config: NoiseConfig) -> Result<Self> {
        Self::partitioned(config, 0)
    }

    /// Pseudorandom stream on ChaCha stream `stream_id` of `config.seed`.
    /// Distinct ids give independent, non-overlapping sequences.
    pub fn partitioned(config: NoiseConfig, stream_id: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream_id);
        Ok(Self {
            config,
            cursor: 0,
            source: NoiseSource::Pseudorandom(Box::new(rng)),
        })
    }

    /// Replays `increments` verbatim.
    pub fn recorded(config: NoiseConfig, increments: Vec<f64>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            cursor: 0,
            source: NoiseSource::Recorded(increments),
        })
    }

    /// Replays a sign sequence, each sign scaled by `sqrt(γ·dt)`.
    pub fn from_signs(config: NoiseConfig, signs: &SignSequence) -> Result<Self> {
        let magnitude = config.magnitude();
        let increments = signs
            .iter_signs()
            .map(|s| f64::from(s) * magnitude)
            .collect();
        Self::recorded(config, increments)
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn is_recorded(&self) -> bool {
        matches!(self.source, NoiseSource::Recorded(_))
    }

    /// Increments left in a recorded stream; `None` for pseudorandom ones.
    pub fn remaining(&self) -> Option<usize> {
        match &self.source {
            NoiseSource::Recorded(values) => {
                Some(values.len().saturating_sub(self.cursor as usize))
            }
            NoiseSource::Pseudorandom(_) => None,
        }
    }

    pub fn next_increment(&mut self) -> Result<f64> {
        let value = match &mut self.source {
            NoiseSource::Recorded(values) => match values.get(self.cursor as usize) {
                Some(v) => *v,
                None => {
                    return Err(CslError::NoiseExhausted {
                        step: self.cursor,
                        len: values.len(),
                    })
                }
            },
            NoiseSource::Pseudorandom(rng) => match self.config.scheme {
                NoiseScheme::Binary => {
                    // one u64 per step; the top bit picks the sign
                    let magnitude = self.config.magnitude();
                    if rng.next_u64() >> 63 == 1 {
                        magnitude
                    } else {
                        -magnitude
                    }
                }
                NoiseScheme::Gaussian => {
                    let z: f64 = StandardNormal.sample(rng.as_mut());
                    z * self.config.magnitude()
                }
            },
        };
        self.cursor += 1;
        Ok(value)
    }

    /// Draws `n` increments.
    pub fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.next_increment()).collect()
    }
}

/// Derives a child seed from a base seed and an index (SplitMix64 finaliser).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fair random signs in blocks, used to build binary paths with a given
/// block structure.
pub fn random_signs<R: Rng + ?Sized>(rng: &mut R, block_lengths: &[u32]) -> SignSequence {
    let blocks = block_lengths
        .iter()
        .map(|&n| {
            (0..n)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect()
        })
        .collect();
    SignSequence { blocks }
}

/// Per-generation blocks of dB signs, one sign per elementary step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SignSequence {
    blocks: Vec<Vec<i8>>,
}

impl SignSequence {
    pub fn new(blocks: Vec<Vec<i8>>) -> Result<Self> {
        for (b, block) in blocks.iter().enumerate() {
            if let Some(bad) = block.iter().find(|s| !matches!(s, 1 | -1)) {
                return Err(CslError::SignParse {
                    line: 0,
                    message: format!("block {} contains sign value {bad}", b + 1),
                });
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Vec<i8>] {
        &self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.iter().all(Vec::is_empty)
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn block_lengths(&self) -> Vec<u32> {
        self.blocks.iter().map(|b| b.len() as u32).collect()
    }

    /// Σ sign(dB) within each block.
    pub fn block_sums(&self) -> Vec<i64> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|&s| i64::from(s)).sum())
            .collect()
    }

    pub fn iter_signs(&self) -> impl Iterator<Item = i8> + '_ {
        self.blocks.iter().flatten().copied()
    }

    /// Checks the block lengths against schedule step counts.
    pub fn check_blocks(&self, steps: &[u32]) -> Result<()> {
        let found = self.block_lengths();
        if found != steps {
            return Err(CslError::BlockMismatch {
                expected: steps.to_vec(),
                found,
            });
        }
        Ok(())
    }

    /// Returns a copy with block `index` (0-based) replaced.
    pub fn with_block(&self, index: usize, block: Vec<i8>) -> Result<Self> {
        let mut blocks = self.blocks.clone();
        match blocks.get_mut(index) {
            Some(slot) => *slot = block,
            None => {
                return Err(CslError::Domain(format!(
                    "block index {index} out of range for {} blocks",
                    self.blocks.len()
                )))
            }
        }
        Self::new(blocks)
    }

    /// Parses the sign-sequence text format:
    ///
    /// ```text
    /// blocks: 3 2
    /// + - +
    /// - -
    /// ```
    ///
    /// Tokens are whitespace separated; a token may be a run such as `+-+`.
    /// Lines starting with `#` are comments. Empty input is an empty sequence.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, Vec<u32>)> = None;
        let mut signs: Vec<i8> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if header.is_none() {
                let rest = line
                    .strip_prefix("blocks:")
                    .ok_or_else(|| CslError::SignParse {
                        line: line_no,
                        message: "expected header 'blocks: n1 n2 ...'".into(),
                    })?;
                let lengths = rest
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<u32>().map_err(|_| CslError::SignParse {
                            line: line_no,
                            message: format!("bad block length '{tok}'"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                header = Some((line_no, lengths));
                continue;
            }
            for tok in line.split_whitespace() {
                for ch in tok.chars() {
                    match ch {
                        '+' => signs.push(1),
                        '-' => signs.push(-1),
                        other => {
                            return Err(CslError::SignParse {
                                line: line_no,
                                message: format!("unexpected character '{other}'"),
                            })
                        }
                    }
                }
            }
        }

        let Some((header_line, lengths)) = header else {
            return Ok(Self::default());
        };
        let declared: usize = lengths.iter().map(|&n| n as usize).sum();
        if declared != signs.len() {
            return Err(CslError::SignParse {
                line: header_line,
                message: format!(
                    "header declares {declared} signs, body contains {}",
                    signs.len()
                ),
            });
        }
        let mut rest = signs.as_slice();
        let blocks = lengths
            .iter()
            .map(|&n| {
                let (head, tail) = rest.split_at(n as usize);
                rest = tail;
                head.to_vec()
            })
            .collect();
        Ok(Self { blocks })
    }

    /// Emits the text format, one block per line.
    pub fn emit(&self) -> String {
        let mut out = String::from("blocks:");
        for len in self.block_lengths() {
            let _ = write!(out, " {len}");
        }
        out.push('\n');
        for block in &self.blocks {
            let line: Vec<&str> = block
                .iter()
                .map(|&s| if s > 0 { "+" } else { "-" })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> NoiseConfig {
        NoiseConfig {
            seed: 7,
            ..NoiseConfig::default()
        }
    }

    #[test]
    fn reference_magnitude_is_two_e_minus_five() {
        let m = reference().magnitude();
        assert!((m - 2e-5).abs() < 1e-18, "{m}");
    }

    #[test]
    fn binary_draws_have_exact_magnitude() {
        let cfg = reference();
        let mut stream = NoiseStream::pseudorandom(cfg).unwrap();
        for _ in 0..10_000 {
            let db = stream.next_increment().unwrap();
            assert_eq!(db.abs(), cfg.magnitude());
            assert_eq!(db * db, cfg.magnitude() * cfg.magnitude());
        }
        assert_eq!(stream.cursor(), 10_000);
    }

    #[test]
    fn binary_mean_within_three_sigma() {
        let cfg = reference();
        let n = 100_000;
        let draws = NoiseStream::pseudorandom(cfg).unwrap().take(n).unwrap();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!(
            mean.abs() <= 3.0 * (cfg.variance() / n as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn gaussian_moments() {
        let cfg = NoiseConfig {
            scheme: NoiseScheme::Gaussian,
            ..reference()
        };
        let n = 1_000_000;
        let draws = NoiseStream::pseudorandom(cfg).unwrap().take(n).unwrap();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 3.0 * cfg.magnitude() / 1e3, "mean {mean}");
        assert!((var / cfg.variance() - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn equal_seeds_replay_bitwise() {
        let a = NoiseStream::pseudorandom(reference())
            .unwrap()
            .take(100_000)
            .unwrap();
        let b = NoiseStream::pseudorandom(reference())
            .unwrap()
            .take(100_000)
            .unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn partitions_differ() {
        let a = NoiseStream::partitioned(reference(), 0)
            .unwrap()
            .take(64)
            .unwrap();
        let b = NoiseStream::partitioned(reference(), 1)
            .unwrap()
            .take(64)
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn recorded_replays_then_errors() {
        let cfg = reference();
        let signs = SignSequence::new(vec![vec![1, -1]]).unwrap();
        let mut stream = NoiseStream::from_signs(cfg, &signs).unwrap();
        let first = stream.next_increment().unwrap();
        let second = stream.next_increment().unwrap();
        assert!((first - 2e-5).abs() < 1e-18);
        assert!((second + 2e-5).abs() < 1e-18);
        assert_eq!(first, -second);
        assert_eq!(
            stream.next_increment(),
            Err(CslError::NoiseExhausted { step: 2, len: 2 })
        );
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = NoiseConfig {
            gamma: 0.0,
            ..reference()
        };
        assert!(NoiseStream::pseudorandom(bad).is_err());
        let bad = NoiseConfig {
            dt: -1.0,
            ..reference()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parse_small_block() {
        let seq = SignSequence::parse("blocks: 3\n+ - +\n").unwrap();
        assert_eq!(seq.block_sums(), vec![1]);
    }

    #[test]
    fn parse_table_three_block() {
        let seq = SignSequence::parse("blocks: 11\n- + + - - + + - + + +\n").unwrap();
        assert_eq!(seq.blocks()[0], vec![-1, 1, 1, -1, -1, 1, 1, -1, 1, 1, 1]);
        assert_eq!(seq.block_sums(), vec![3]);
    }

    #[test]
    fn parse_runs_and_comments() {
        let seq = SignSequence::parse("# note\nblocks: 2 3\n+-\n# mid\n--+\n").unwrap();
        assert_eq!(seq.blocks(), &[vec![1, -1], vec![-1, -1, 1]]);
    }

    #[test]
    fn empty_input_is_empty_sequence() {
        let seq = SignSequence::parse("").unwrap();
        assert!(seq.is_empty());
        assert!(seq.check_blocks(&[]).is_ok());
        assert!(matches!(
            seq.check_blocks(&[26, 23]),
            Err(CslError::BlockMismatch { .. })
        ));
    }

    #[test]
    fn malformed_character_reports_line() {
        let err = SignSequence::parse("blocks: 2\n+\nx\n").unwrap_err();
        assert_eq!(
            err,
            CslError::SignParse {
                line: 3,
                message: "unexpected character 'x'".into()
            }
        );
    }

    #[test]
    fn count_mismatch_reports_header_line() {
        let err = SignSequence::parse("\nblocks: 3 1\n+ + +\n").unwrap_err();
        assert!(matches!(err, CslError::SignParse { line: 2, .. }));
    }

    #[test]
    fn missing_header_is_error() {
        let err = SignSequence::parse("+ - +\n").unwrap_err();
        assert!(matches!(err, CslError::SignParse { line: 1, .. }));
    }

    #[test]
    fn derive_seed_spreads() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(42, 5), derive_seed(42, 5));
    }

    proptest! {
        #[test]
        fn emit_parse_round_trip(blocks in prop::collection::vec(
            prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), 0..30),
            0..14,
        )) {
            let seq = SignSequence::new(blocks).unwrap();
            let text = seq.emit();
            let back = SignSequence::parse(&text).unwrap();
            prop_assert_eq!(&back, &seq);
            prop_assert_eq!(back.emit(), text);
        }
    }
}
