//! Discrete token sequences for anchor sets.
//!
//! Coordinates are quantized to `resolution` levels per axis. Each point
//! emits three tokens in z, y, x order and points are sorted by their
//! (z, y, x) levels. With `per_axis` the three axes get disjoint ranges
//! (z at `+2·res`, y at `+res`, x at `+0`), so a decoder can tell which axis a
//! token belongs to. Dual-codebook modes shift centroid tokens past the whole
//! vertex range.

use std::fmt;
use std::str::FromStr;

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::mesh::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SequenceMode {
    /// Vertices only.
    Single,
    /// Vertices and centroids sorted jointly, separate codebooks.
    Dual,
    /// Vertex block then centroid block, separate codebooks.
    DualSeparate,
    /// Vertex block, separator, centroid block, one shared codebook.
    SingleSeparate,
}

impl SequenceMode {
    pub const ALL: [SequenceMode; 4] = [
        SequenceMode::Single,
        SequenceMode::Dual,
        SequenceMode::DualSeparate,
        SequenceMode::SingleSeparate,
    ];

    fn dual_codebook(self) -> bool {
        matches!(self, SequenceMode::Dual | SequenceMode::DualSeparate)
    }
}

impl FromStr for SequenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(SequenceMode::Single),
            "dual" => Ok(SequenceMode::Dual),
            "dual_separate" => Ok(SequenceMode::DualSeparate),
            "single_separate" => Ok(SequenceMode::SingleSeparate),
            _ => Err(Error::Config(format!(
                "unknown mode `{s}` (single|dual|dual_separate|single_separate)"
            ))),
        }
    }
}

impl fmt::Display for SequenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequenceMode::Single => "single",
            SequenceMode::Dual => "dual",
            SequenceMode::DualSeparate => "dual_separate",
            SequenceMode::SingleSeparate => "single_separate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub mode: SequenceMode,
    pub per_axis: bool,
    pub resolution: u32,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            mode: SequenceMode::SingleSeparate,
            per_axis: true,
            resolution: 1024,
        }
    }
}

impl TokenizerConfig {
    pub fn new(mode: SequenceMode, per_axis: bool) -> Self {
        TokenizerConfig {
            mode,
            per_axis,
            ..Default::default()
        }
    }

    /// The eight mode × per-axis combinations at the default resolution.
    pub fn all_combinations() -> Vec<TokenizerConfig> {
        SequenceMode::ALL
            .iter()
            .flat_map(|&m| [false, true].map(|p| TokenizerConfig::new(m, p)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::Config(format!(
                "resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    /// Tokens spanned by one point type's codebook.
    fn span(&self) -> u32 {
        if self.per_axis {
            3 * self.resolution
        } else {
            self.resolution
        }
    }

    fn axis_offset(&self, axis: usize) -> u32 {
        // axis: 0 = z, 1 = y, 2 = x (emission order)
        if self.per_axis {
            (2 - axis as u32) * self.resolution
        } else {
            0
        }
    }

    pub fn separator(&self) -> Option<u32> {
        (self.mode == SequenceMode::SingleSeparate).then(|| self.span())
    }
}

pub fn vocab_size(cfg: &TokenizerConfig) -> u32 {
    let span = cfg.span();
    match cfg.mode {
        SequenceMode::Single => span,
        SequenceMode::Dual | SequenceMode::DualSeparate => 2 * span,
        SequenceMode::SingleSeparate => span + 1,
    }
}

/// Round-half-up of `(c + 1) / 2 · (res − 1)`.
pub fn quantize(coord: f64, resolution: u32) -> Result<u32> {
    if !(-1.0..=1.0).contains(&coord) {
        return Err(Error::Range(format!("coordinate {coord} outside [-1, 1]")));
    }
    let scaled = (coord + 1.0) * 0.5 * f64::from(resolution - 1);
    Ok(((scaled + 0.5).floor() as u32).min(resolution - 1))
}

pub fn dequantize(level: u32, resolution: u32) -> Result<f64> {
    if level >= resolution {
        return Err(Error::Range(format!(
            "level {level} outside [0, {resolution})"
        )));
    }
    Ok(2.0 * f64::from(level) / f64::from(resolution - 1) - 1.0)
}

/// Quantized levels stored as `[z, y, x]`.
pub type Levels = [u32; 3];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuantizedAnchors {
    pub vertices: Vec<Levels>,
    pub centroids: Vec<Levels>,
}

impl QuantizedAnchors {
    pub fn to_anchor_set(&self, resolution: u32) -> Result<AnchorSet> {
        let lift = |l: &Levels| -> Result<Vec3> {
            Ok(Vec3::new(
                dequantize(l[2], resolution)?,
                dequantize(l[1], resolution)?,
                dequantize(l[0], resolution)?,
            ))
        };
        Ok(AnchorSet {
            vertices: self.vertices.iter().map(lift).collect::<Result<_>>()?,
            centroids: self.centroids.iter().map(lift).collect::<Result<_>>()?,
        })
    }
}

fn point_levels(p: &Vec3, res: u32) -> Result<Levels> {
    Ok([
        quantize(p.z, res)?,
        quantize(p.y, res)?,
        quantize(p.x, res)?,
    ])
}

fn sorted_levels(points: &[Vec3], res: u32) -> Result<Vec<Levels>> {
    let mut out = points
        .iter()
        .map(|p| point_levels(p, res))
        .collect::<Result<Vec<_>>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// The canonical quantized form that `decode(encode(a))` reproduces:
/// per point type sorted by (z, y, x) and deduplicated. Mode `single` drops
/// centroids.
pub fn canonical_levels(anchors: &AnchorSet, cfg: &TokenizerConfig) -> Result<QuantizedAnchors> {
    cfg.validate()?;
    let vertices = sorted_levels(&anchors.vertices, cfg.resolution)?;
    let centroids = if cfg.mode == SequenceMode::Single {
        Vec::new()
    } else {
        sorted_levels(&anchors.centroids, cfg.resolution)?
    };
    Ok(QuantizedAnchors {
        vertices,
        centroids,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub config: TokenizerConfig,
}

fn emit(out: &mut Vec<u32>, l: &Levels, base: u32, cfg: &TokenizerConfig) {
    for (axis, &level) in l.iter().enumerate() {
        out.push(base + cfg.axis_offset(axis) + level);
    }
}

pub fn encode(anchors: &AnchorSet, cfg: &TokenizerConfig) -> Result<TokenSequence> {
    let q = canonical_levels(anchors, cfg)?;
    if q.vertices.is_empty() {
        return Err(Error::Sequence(format!(
            "mode {} needs at least one vertex",
            cfg.mode
        )));
    }
    let span = cfg.span();
    let mut tokens = Vec::with_capacity(3 * (q.vertices.len() + q.centroids.len()) + 1);
    match cfg.mode {
        SequenceMode::Single => {
            for l in &q.vertices {
                emit(&mut tokens, l, 0, cfg);
            }
        }
        SequenceMode::DualSeparate => {
            for l in &q.vertices {
                emit(&mut tokens, l, 0, cfg);
            }
            for l in &q.centroids {
                emit(&mut tokens, l, span, cfg);
            }
        }
        SequenceMode::SingleSeparate => {
            for l in &q.vertices {
                emit(&mut tokens, l, 0, cfg);
            }
            tokens.push(span);
            for l in &q.centroids {
                emit(&mut tokens, l, 0, cfg);
            }
        }
        SequenceMode::Dual => {
            // Joint sort; at equal levels the vertex (type 0) comes first.
            let mut joint: Vec<(Levels, u8)> = q
                .vertices
                .iter()
                .map(|&l| (l, 0))
                .chain(q.centroids.iter().map(|&l| (l, 1)))
                .collect();
            joint.sort_unstable();
            for (l, kind) in &joint {
                emit(&mut tokens, l, u32::from(*kind) * span, cfg);
            }
        }
    }
    Ok(TokenSequence {
        tokens,
        config: *cfg,
    })
}

const AXIS_NAMES: [&str; 3] = ["z", "y", "x"];

/// Decodes one point triplet starting at `pos`, returning its levels and its
/// codebook (0 = vertex, 1 = centroid).
fn decode_triplet(tokens: &[u32], pos: usize, cfg: &TokenizerConfig) -> Result<(Levels, u8)> {
    let res = cfg.resolution;
    let span = cfg.span();
    let mut levels = [0u32; 3];
    let mut book = None;
    for axis in 0..3 {
        let at = pos + axis;
        let t = tokens[at];
        let (kind, local) = if cfg.mode.dual_codebook() && t >= span && t < 2 * span {
            (1u8, t - span)
        } else if t < span {
            (0u8, t)
        } else {
            return Err(Error::Range(format!(
                "token {t} at position {at} outside vocabulary of size {}",
                vocab_size(cfg)
            )));
        };
        if let Some(b) = book {
            if b != kind {
                return Err(Error::Sequence(format!(
                    "point at position {pos} mixes vertex and centroid codebooks"
                )));
            }
        }
        book = Some(kind);
        let off = cfg.axis_offset(axis);
        if local < off || local >= off + res {
            return Err(Error::AxisAmbiguity {
                position: at,
                token: t,
                expected: AXIS_NAMES[axis],
            });
        }
        levels[axis] = local - off;
    }
    Ok((levels, book.unwrap_or(0)))
}

fn decode_block(tokens: &[u32], start: usize, cfg: &TokenizerConfig) -> Result<Vec<(Levels, u8)>> {
    if !(tokens.len() - start).is_multiple_of(3) {
        return Err(Error::Sequence(format!(
            "block starting at {start} has {} tokens, not a multiple of 3",
            tokens.len() - start
        )));
    }
    (start..tokens.len())
        .step_by(3)
        .map(|p| decode_triplet(tokens, p, cfg))
        .collect()
}

/// Inverse of `encode` at level precision.
pub fn decode_levels(tokens: &[u32], cfg: &TokenizerConfig) -> Result<QuantizedAnchors> {
    cfg.validate()?;
    let mut q = QuantizedAnchors::default();
    match cfg.mode {
        SequenceMode::SingleSeparate => {
            let sep = cfg.span();
            let seps: Vec<usize> = tokens
                .iter()
                .enumerate()
                .filter(|(_, &t)| t == sep)
                .map(|(i, _)| i)
                .collect();
            let &[at] = seps.as_slice() else {
                return Err(Error::Sequence(format!(
                    "expected exactly one separator, found {}",
                    seps.len()
                )));
            };
            for (l, _) in decode_block(&tokens[..at], 0, cfg)? {
                q.vertices.push(l);
            }
            for (l, _) in decode_block(tokens, at + 1, cfg)? {
                q.centroids.push(l);
            }
        }
        SequenceMode::Single => {
            for (l, _) in decode_block(tokens, 0, cfg)? {
                q.vertices.push(l);
            }
        }
        SequenceMode::Dual | SequenceMode::DualSeparate => {
            let mut seen_centroid = false;
            for (i, (l, book)) in decode_block(tokens, 0, cfg)?.into_iter().enumerate() {
                if book == 1 {
                    seen_centroid = true;
                    q.centroids.push(l);
                } else {
                    if seen_centroid && cfg.mode == SequenceMode::DualSeparate {
                        return Err(Error::Sequence(format!(
                            "vertex at point {i} follows the centroid block"
                        )));
                    }
                    q.vertices.push(l);
                }
            }
        }
    }
    Ok(q)
}

pub fn decode(seq: &TokenSequence) -> Result<AnchorSet> {
    decode_with(&seq.tokens, &seq.config)
}

pub fn decode_with(tokens: &[u32], cfg: &TokenizerConfig) -> Result<AnchorSet> {
    decode_levels(tokens, cfg)?.to_anchor_set(cfg.resolution)
}

/// Whitespace-separated integers on one line.
pub fn format_tokens(tokens: &[u32]) -> String {
    let mut s = tokens
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(" ");
    s.push('\n');
    s
}

/// One sequence per non-empty line.
pub fn parse_token_lines(text: &str) -> Result<Vec<Vec<u32>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<u32>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("bad token `{t}`"),
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(-1.0, 1024).unwrap(), 0);
        assert_eq!(quantize(1.0, 1024).unwrap(), 1023);
        assert_eq!(quantize(0.0, 1024).unwrap(), 512);
        assert!(matches!(quantize(1.0001, 1024), Err(Error::Range(_))));
        assert!(quantize(f64::NAN, 1024).is_err());
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(0, 1024).unwrap(), -1.0);
        assert_eq!(dequantize(1023, 1024).unwrap(), 1.0);
        assert!((dequantize(512, 1024).unwrap() - (1024.0 / 1023.0 - 1.0)).abs() < 1e-15);
        assert!(dequantize(1024, 1024).is_err());
        for q in 0..1024 {
            assert_eq!(quantize(dequantize(q, 1024).unwrap(), 1024).unwrap(), q);
        }
    }

    #[test]
    fn vocab_table() {
        let expect = [
            (SequenceMode::Single, false, 1024),
            (SequenceMode::Single, true, 3072),
            (SequenceMode::Dual, false, 2048),
            (SequenceMode::Dual, true, 6144),
            (SequenceMode::DualSeparate, false, 2048),
            (SequenceMode::DualSeparate, true, 6144),
            (SequenceMode::SingleSeparate, false, 1025),
            (SequenceMode::SingleSeparate, true, 3073),
        ];
        for (m, p, size) in expect {
            assert_eq!(vocab_size(&TokenizerConfig::new(m, p)), size, "{m} {p}");
        }
    }

    #[test]
    fn encode_examples() {
        let single = TokenizerConfig::new(SequenceMode::Single, true);
        let a = AnchorSet::new(vec![v(-1.0, -1.0, -1.0)], vec![]);
        assert_eq!(encode(&a, &single).unwrap().tokens, vec![2048, 1024, 0]);

        let ss = TokenizerConfig::new(SequenceMode::SingleSeparate, true);
        let b = AnchorSet::new(vec![v(-1.0, -1.0, -1.0)], vec![v(1.0, 1.0, 1.0)]);
        let t = encode(&b, &ss).unwrap().tokens;
        assert_eq!(t, vec![2048, 1024, 0, 3072, 3071, 2047, 1023]);

        let flat = TokenizerConfig::new(SequenceMode::Single, false);
        let x5 = -1.0 + 2.0 * 5.0 / 1023.0;
        let x9 = -1.0 + 2.0 * 9.0 / 1023.0;
        let c = AnchorSet::new(vec![v(x9, 0.0, 0.0), v(x5, 0.0, 0.0)], vec![]);
        assert_eq!(
            encode(&c, &flat).unwrap().tokens,
            vec![512, 512, 5, 512, 512, 9]
        );
    }

    #[test]
    fn dual_mixed_puts_vertex_first_on_ties() {
        let cfg = TokenizerConfig::new(SequenceMode::Dual, false);
        let p = v(0.0, 0.0, 0.0);
        let q = v(0.0, 0.0, -1.0);
        let a = AnchorSet::new(vec![p], vec![p, q]);
        let t = encode(&a, &cfg).unwrap().tokens;
        // q sorts first (z = 0), then vertex p, then centroid p.
        assert_eq!(t, vec![1024, 1536, 1536, 512, 512, 512, 1536, 1536, 1536]);
        let back = decode_levels(&t, &cfg).unwrap();
        assert_eq!(back.vertices.len(), 1);
        assert_eq!(back.centroids.len(), 2);
    }

    #[test]
    fn empty_vertices_rejected() {
        let a = AnchorSet::new(vec![], vec![v(0.0, 0.0, 0.0)]);
        for cfg in TokenizerConfig::all_combinations() {
            assert!(matches!(encode(&a, &cfg), Err(Error::Sequence(_))));
        }
    }

    #[test]
    fn cube_round_trip_all_modes() {
        let cube = crate::mesh::normalize_unit_cube(&crate::shapes::cube()).unwrap();
        let a = AnchorSet::from_mesh(&cube);
        for cfg in TokenizerConfig::all_combinations() {
            let seq = encode(&a, &cfg).unwrap();
            assert!(seq.tokens.iter().all(|&t| t < vocab_size(&cfg)));
            assert_eq!(
                decode_levels(&seq.tokens, &cfg).unwrap(),
                canonical_levels(&a, &cfg).unwrap()
            );
            let decoded = decode(&seq).unwrap();
            assert_eq!(decoded.vertices.len(), 8);
        }
    }

    #[test]
    fn axis_mismatch_detected() {
        let cfg = TokenizerConfig::new(SequenceMode::Single, true);
        let err = decode_levels(&[1500, 1024, 0], &cfg).unwrap_err();
        assert!(
            matches!(
                err,
                Error::AxisAmbiguity {
                    position: 0,
                    token: 1500,
                    expected: "z"
                }
            ),
            "{err:?}"
        );
        assert!(matches!(
            decode_levels(&[2048, 1024, 2000], &cfg),
            Err(Error::AxisAmbiguity { position: 2, .. })
        ));
    }

    #[test]
    fn separator_structure() {
        let cfg = TokenizerConfig::new(SequenceMode::SingleSeparate, true);
        let only_verts = decode_levels(&[2048, 1024, 0, 3072], &cfg).unwrap();
        assert_eq!(only_verts.vertices, vec![[0, 0, 0]]);
        assert!(only_verts.centroids.is_empty());
        assert!(matches!(
            decode_levels(&[2048, 1024, 0], &cfg),
            Err(Error::Sequence(_))
        ));
        assert!(matches!(
            decode_levels(&[2048, 1024, 0, 3072, 3072], &cfg),
            Err(Error::Sequence(_))
        ));
        assert!(matches!(
            decode_levels(&[2048, 1024, 3072], &cfg),
            Err(Error::Sequence(_))
        ));
    }

    #[test]
    fn dual_separate_rejects_interleaving() {
        let cfg = TokenizerConfig::new(SequenceMode::DualSeparate, false);
        assert!(decode_levels(&[1030, 1030, 1030, 1, 1, 1], &cfg).is_err());
        assert!(decode_levels(&[1, 1, 1, 1030, 1030, 1030], &cfg).is_ok());
        assert!(decode_levels(&[1, 1030, 1], &cfg).is_err());
    }

    #[test]
    fn token_text_round_trip() {
        let text = format_tokens(&[1, 2, 3072]);
        assert_eq!(text, "1 2 3072\n");
        assert_eq!(parse_token_lines(&text).unwrap(), vec![vec![1, 2, 3072]]);
        assert!(parse_token_lines("1 x").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coord() -> impl Strategy<Value = f64> {
            prop_oneof![-1.0f64..=1.0, Just(-1.0), Just(1.0), Just(0.0)]
        }

        fn point() -> impl Strategy<Value = Vec3> {
            (coord(), coord(), coord()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        fn anchors() -> impl Strategy<Value = AnchorSet> {
            (
                proptest::collection::vec(point(), 1..60),
                proptest::collection::vec(point(), 0..40),
            )
                .prop_map(|(v, c)| AnchorSet::new(v, c))
        }

        fn config() -> impl Strategy<Value = TokenizerConfig> {
            (
                0usize..4,
                any::<bool>(),
                prop_oneof![Just(1024u32), 2u32..64],
            )
                .prop_map(|(m, p, r)| TokenizerConfig {
                    mode: SequenceMode::ALL[m],
                    per_axis: p,
                    resolution: r,
                })
        }

        proptest! {
            #[test]
            fn round_trip(a in anchors(), cfg in config()) {
                let seq = encode(&a, &cfg).unwrap();
                prop_assert_eq!(decode_levels(&seq.tokens, &cfg).unwrap(), canonical_levels(&a, &cfg).unwrap());
            }

            #[test]
            fn order_invariant(a in anchors(), cfg in config(), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut b = a.clone();
                b.vertices.shuffle(&mut rng);
                b.centroids.shuffle(&mut rng);
                prop_assert_eq!(encode(&a, &cfg).unwrap(), encode(&b, &cfg).unwrap());
            }

            #[test]
            fn bounds_and_length(a in anchors(), cfg in config()) {
                let seq = encode(&a, &cfg).unwrap();
                prop_assert!(seq.tokens.iter().all(|&t| t < vocab_size(&cfg)));
                let q = canonical_levels(&a, &cfg).unwrap();
                let expected = 3 * (q.vertices.len() + q.centroids.len())
                    + usize::from(cfg.mode == SequenceMode::SingleSeparate);
                prop_assert_eq!(seq.tokens.len(), expected);
                if let Some(sep) = cfg.separator() {
                    prop_assert_eq!(seq.tokens.iter().filter(|&&t| t == sep).count(), 1);
                }
            }
        }
    }
}
