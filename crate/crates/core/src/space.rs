//! Factorized, block-structured search space.
//!
//! A space is a list of blocks; each block declares an ordered list of
//! categorical dimensions. The flattened decision sequence is block-major and
//! follows declaration order inside a block, and the one-hot layout follows the
//! same order, so bit indices are stable across runs.

use std::fmt;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_SPACE_TOML: &str = include_str!("../configs/space_default.toml");

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error(
        "decision {value} out of catalog for dimension {dimension} (cardinality {cardinality})"
    )]
    IndexOutOfCatalog {
        dimension: usize,
        value: usize,
        cardinality: usize,
    },
    #[error("decision sequence has length {got}, space expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("architectures belong to different search spaces")]
    SpaceMismatch,
    #[error("invalid search space: {0}")]
    Invalid(String),
    #[error("unsupported space schema version {0}")]
    SchemaVersion(u32),
    #[error("one-hot vector is malformed: {0}")]
    MalformedOneHot(String),
    #[error("failed to read space file: {0}")]
    Io(String),
}

/// One categorical decision inside a block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDef {
    /// Filter count of the block before any kernel/width multiplier.
    pub base_width: usize,
    pub dims: Vec<Dimension>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SpaceFile {
    schema_version: u32,
    #[serde(default)]
    name: String,
    blocks: Vec<BlockDef>,
}

/// Position of one flattened dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatDim {
    pub block: usize,
    pub slot: usize,
    pub name: String,
    pub cardinality: usize,
    /// First bit of this dimension's one-hot segment.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceFile", into = "SpaceFile")]
pub struct SearchSpaceDef {
    name: String,
    blocks: Vec<BlockDef>,
    flat: Vec<FlatDim>,
    onehot_len: usize,
    fingerprint: u64,
}

impl TryFrom<SpaceFile> for SearchSpaceDef {
    type Error = SpaceError;

    fn try_from(f: SpaceFile) -> Result<Self, SpaceError> {
        if f.schema_version != SCHEMA_VERSION {
            return Err(SpaceError::SchemaVersion(f.schema_version));
        }
        SearchSpaceDef::new(f.name, f.blocks)
    }
}

impl From<SearchSpaceDef> for SpaceFile {
    fn from(s: SearchSpaceDef) -> Self {
        SpaceFile {
            schema_version: SCHEMA_VERSION,
            name: s.name,
            blocks: s.blocks,
        }
    }
}

impl SearchSpaceDef {
    pub fn new(name: impl Into<String>, blocks: Vec<BlockDef>) -> Result<Self, SpaceError> {
        if blocks.is_empty() {
            return Err(SpaceError::Invalid("block_count must be at least 1".into()));
        }
        let mut flat = Vec::new();
        let mut offset = 0;
        for (b, block) in blocks.iter().enumerate() {
            if block.base_width == 0 {
                return Err(SpaceError::Invalid(format!(
                    "block {b}: base_width must be positive"
                )));
            }
            for (slot, dim) in block.dims.iter().enumerate() {
                if dim.values.is_empty() {
                    return Err(SpaceError::Invalid(format!(
                        "block {b}: catalog `{}` is empty",
                        dim.name
                    )));
                }
                if block.dims[..slot].iter().any(|d| d.name == dim.name) {
                    return Err(SpaceError::Invalid(format!(
                        "block {b}: dimension `{}` declared twice",
                        dim.name
                    )));
                }
                for v in &dim.values {
                    Choice::parse(&dim.name, v)
                        .map_err(|e| SpaceError::Invalid(format!("block {b}: {e}")))?;
                }
                flat.push(FlatDim {
                    block: b,
                    slot,
                    name: dim.name.clone(),
                    cardinality: dim.values.len(),
                    offset,
                });
                offset += dim.values.len();
            }
        }
        if flat.is_empty() {
            return Err(SpaceError::Invalid("space has no decisions".into()));
        }
        let name = name.into();
        let fingerprint = fingerprint(&name, &blocks);
        Ok(Self {
            name,
            blocks,
            flat,
            onehot_len: offset,
            fingerprint,
        })
    }

    /// The shipped 7-block space (35 decisions, 77 one-hot bits).
    pub fn default_space() -> Self {
        Self::from_toml_str(DEFAULT_SPACE_TOML).expect("bundled space config is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SpaceError> {
        let file: SpaceFile = toml::from_str(s).map_err(|e| SpaceError::Invalid(e.to_string()))?;
        Self::try_from(file)
    }

    pub fn from_file(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpaceError::Io(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("space serializes")
    }

    /// Builds a single-block space from `(name, values)` pairs; handy for toy spaces.
    pub fn single_block(base_width: usize, dims: &[(&str, &[&str])]) -> Result<Self, SpaceError> {
        let dims = dims
            .iter()
            .map(|(n, vs)| Dimension {
                name: n.to_string(),
                values: vs.iter().map(|v| v.to_string()).collect(),
            })
            .collect();
        Self::new("toy", vec![BlockDef { base_width, dims }])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn blocks(&self) -> &[BlockDef] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Number of categorical decisions (D).
    pub fn num_decisions(&self) -> usize {
        self.flat.len()
    }

    /// Total one-hot length (E).
    pub fn onehot_len(&self) -> usize {
        self.onehot_len
    }

    pub fn dims(&self) -> &[FlatDim] {
        &self.flat
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.flat.iter().map(|d| d.cardinality).collect()
    }

    /// Number of architectures in the product space, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.flat
            .iter()
            .fold(1u128, |acc, d| acc.saturating_mul(d.cardinality as u128))
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Label of a one-hot bit, `b<block>.<dim>=<value>`.
    pub fn bit_label(&self, bit: usize) -> Option<String> {
        let d = self
            .flat
            .iter()
            .find(|d| bit >= d.offset && bit < d.offset + d.cardinality)?;
        let value = &self.blocks[d.block].dims[d.slot].values[bit - d.offset];
        Some(format!("b{}.{}={}", d.block, d.name, value))
    }

    pub fn decode(&self, decisions: &[usize]) -> Result<ArchitectureConfig, SpaceError> {
        if decisions.len() != self.flat.len() {
            return Err(SpaceError::LengthMismatch {
                expected: self.flat.len(),
                got: decisions.len(),
            });
        }
        for (i, (&v, d)) in decisions.iter().zip(&self.flat).enumerate() {
            if v >= d.cardinality {
                return Err(SpaceError::IndexOutOfCatalog {
                    dimension: i,
                    value: v,
                    cardinality: d.cardinality,
                });
            }
        }
        Ok(ArchitectureConfig {
            decisions: decisions.to_vec(),
            space_id: self.fingerprint,
        })
    }

    pub fn encode_onehot(&self, arch: &ArchitectureConfig) -> OneHotVector {
        debug_assert_eq!(arch.space_id, self.fingerprint);
        let mut bits = vec![0u8; self.onehot_len];
        for (&v, d) in arch.decisions.iter().zip(&self.flat) {
            bits[d.offset + v] = 1;
        }
        OneHotVector { bits }
    }

    /// Inverse of [`encode_onehot`](Self::encode_onehot).
    pub fn decode_onehot(&self, v: &OneHotVector) -> Result<ArchitectureConfig, SpaceError> {
        if v.bits.len() != self.onehot_len {
            return Err(SpaceError::MalformedOneHot(format!(
                "length {} != {}",
                v.bits.len(),
                self.onehot_len
            )));
        }
        let mut decisions = Vec::with_capacity(self.flat.len());
        for (i, d) in self.flat.iter().enumerate() {
            let seg = &v.bits[d.offset..d.offset + d.cardinality];
            let mut set = seg.iter().enumerate().filter(|(_, &b)| b != 0);
            match (set.next(), set.next()) {
                (Some((j, &1)), None) => decisions.push(j),
                _ => {
                    return Err(SpaceError::MalformedOneHot(format!(
                        "segment {i} does not hold exactly one set bit"
                    )))
                }
            }
        }
        self.decode(&decisions)
    }

    /// Uniform draw from the product space.
    pub fn random_sample(&self, rng_seed: u64) -> ArchitectureConfig {
        let mut rng = seed::rng(rng_seed);
        let decisions = self
            .flat
            .iter()
            .map(|d| rng.random_range(0..d.cardinality))
            .collect();
        ArchitectureConfig {
            decisions,
            space_id: self.fingerprint,
        }
    }

    /// Every architecture in the space, in lexicographic decision order.
    ///
    /// Returns `None` when the space holds more than `limit` architectures.
    pub fn enumerate(&self, limit: usize) -> Option<Vec<ArchitectureConfig>> {
        if self.size() > limit as u128 {
            return None;
        }
        let cards = self.cardinalities();
        let mut out = Vec::with_capacity(self.size() as usize);
        let mut cur = vec![0usize; cards.len()];
        loop {
            out.push(ArchitectureConfig {
                decisions: cur.clone(),
                space_id: self.fingerprint,
            });
            let mut i = cards.len();
            loop {
                if i == 0 {
                    return Some(out);
                }
                i -= 1;
                cur[i] += 1;
                if cur[i] < cards[i] {
                    break;
                }
                cur[i] = 0;
            }
        }
    }

    /// Semantic view of each block's decisions. Dimensions a block does not
    /// declare take their defaults (see [`BlockChoice::default`]).
    pub fn block_choices(&self, arch: &ArchitectureConfig) -> Vec<BlockChoice> {
        let mut out = vec![BlockChoice::default(); self.blocks.len()];
        for (&v, d) in arch.decisions.iter().zip(&self.flat) {
            let raw = &self.blocks[d.block].dims[d.slot].values[v];
            let choice = Choice::parse(&d.name, raw).expect("validated at construction");
            choice.apply(&mut out[d.block]);
        }
        out
    }
}

fn fingerprint(name: &str, blocks: &[BlockDef]) -> u64 {
    // FNV-1a over the canonical JSON form.
    let canon = serde_json::to_string(&(name, blocks)).expect("serializable");
    canon.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// One sampled student, as catalog indices into its space.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub decisions: Vec<usize>,
    pub space_id: u64,
}

impl ArchitectureConfig {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

impl fmt::Display for ArchitectureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.decisions.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotVector {
    pub bits: Vec<u8>,
}

impl OneHotVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Hamming,
    OnehotL2,
}

/// Distance between two architectures of the same space.
pub fn arch_distance(
    space: &SearchSpaceDef,
    a: &ArchitectureConfig,
    b: &ArchitectureConfig,
    metric: DistanceMetric,
) -> Result<f64, SpaceError> {
    if a.space_id != b.space_id || a.space_id != space.fingerprint {
        return Err(SpaceError::SpaceMismatch);
    }
    let differing = a
        .decisions
        .iter()
        .zip(&b.decisions)
        .filter(|(x, y)| x != y)
        .count();
    Ok(match metric {
        DistanceMetric::Hamming => differing as f64,
        // each differing dimension flips exactly two bits
        DistanceMetric::OnehotL2 => (2.0 * differing as f64).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpType {
    Relu,
    Swish,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipOp {
    None,
    Residual,
    Projected,
    Gated,
}

/// Decoded meaning of one block's decisions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockChoice {
    pub op: OpType,
    pub kernel: usize,
    pub se_ratio: f64,
    pub skip: SkipOp,
    pub layers: usize,
    pub width_mult: f64,
}

impl Default for BlockChoice {
    fn default() -> Self {
        Self {
            op: OpType::Relu,
            kernel: 3,
            se_ratio: 0.0,
            skip: SkipOp::None,
            layers: 1,
            width_mult: 1.0,
        }
    }
}

impl BlockChoice {
    /// Hidden width of every layer in the block. The kernel size acts as a
    /// width multiplier of `(k - 1) / 2`, so kernel 3 keeps the base width.
    pub fn hidden_width(&self, base_width: usize) -> usize {
        let w = base_width as f64 * self.width_mult * ((self.kernel - 1) / 2) as f64;
        (w.round() as usize).max(1)
    }
}

enum Choice {
    Op(OpType),
    Kernel(usize),
    Se(f64),
    Skip(SkipOp),
    Layers(usize),
    Width(f64),
}

impl Choice {
    fn parse(name: &str, value: &str) -> Result<Self, String> {
        let bad = || format!("dimension `{name}`: bad value `{value}`");
        match name {
            "op_type" => match value {
                "relu" => Ok(Choice::Op(OpType::Relu)),
                "swish" => Ok(Choice::Op(OpType::Swish)),
                "tanh" => Ok(Choice::Op(OpType::Tanh)),
                _ => Err(bad()),
            },
            "kernel" => match value.parse::<usize>() {
                Ok(k) if k >= 3 && k % 2 == 1 => Ok(Choice::Kernel(k)),
                _ => Err(bad()),
            },
            "se_ratio" => match value.parse::<f64>() {
                Ok(r) if (0.0..1.0).contains(&r) => Ok(Choice::Se(r)),
                _ => Err(bad()),
            },
            "skip_op" => match value {
                "none" => Ok(Choice::Skip(SkipOp::None)),
                "residual" => Ok(Choice::Skip(SkipOp::Residual)),
                "projected" => Ok(Choice::Skip(SkipOp::Projected)),
                "gated" => Ok(Choice::Skip(SkipOp::Gated)),
                _ => Err(bad()),
            },
            "layers" => value
                .parse::<usize>()
                .map(Choice::Layers)
                .map_err(|_| bad()),
            "width" => match value.parse::<f64>() {
                Ok(w) if w > 0.0 && w.is_finite() => Ok(Choice::Width(w)),
                _ => Err(bad()),
            },
            other => Err(format!("unknown dimension `{other}`")),
        }
    }

    fn apply(self, b: &mut BlockChoice) {
        match self {
            Choice::Op(o) => b.op = o,
            Choice::Kernel(k) => b.kernel = k,
            Choice::Se(r) => b.se_ratio = r,
            Choice::Skip(s) => b.skip = s,
            Choice::Layers(l) => b.layers = l,
            Choice::Width(w) => b.width_mult = w,
        }
    }
}
