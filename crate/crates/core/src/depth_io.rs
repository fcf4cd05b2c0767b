//! Depth-map sequences: in-memory model, the canonical `DSEQ` file format,
//! the MSR-Action3D binary adapter and directory ingestion helpers.
//!
//! Canonical layout (all little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "DSEQ"
//!      4     2  version (1)
//!      6     2  reserved (0)
//!      8     4  frames
//!     12     4  width
//!     16     4  height
//!     20     2  subject
//!     22     2  action
//!     24     2  trial
//!     26     2  pad (0)
//!     28     …  frames·height·width u16 depth values, row-major per frame
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::Grid;

pub const CANONICAL_MAGIC: &[u8; 4] = b"DSEQ";
pub const CANONICAL_VERSION: u16 = 1;
pub const CANONICAL_HEADER_LEN: usize = 28;
pub const CANONICAL_EXTENSION: &str = "dseq";
const MSR_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum DepthIoError {
    #[error("bad magic: expected \"DSEQ\"")]
    BadMagic,
    #[error("unsupported canonical version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated stream: expected {expected} bytes, got {actual}")]
    TruncatedStream { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-positive dimensions (frames={frames}, width={width}, height={height})")]
    NonPositiveDims { frames: i64, width: i64, height: i64 },
    #[error("sequence needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("file name {0:?} does not match the aNN_sNN_eNN pattern")]
    BadFileName(String),
    #[error("manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One depth image. `0` marks background / no sensor return.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthFrame {
    depth: Grid<u16>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, depth: Vec<u16>) -> Result<Self, DepthIoError> {
        if width == 0 || height == 0 {
            return Err(DepthIoError::NonPositiveDims {
                frames: 1,
                width: width as i64,
                height: height as i64,
            });
        }
        let len = depth.len();
        Grid::from_vec(width, height, depth)
            .map(|depth| Self { depth })
            .ok_or_else(|| {
                DepthIoError::DimensionMismatch(format!(
                    "{len} depth values for a {width}x{height} frame"
                ))
            })
    }

    pub fn from_grid(depth: Grid<u16>) -> Result<Self, DepthIoError> {
        let (w, h) = depth.dims();
        Self::new(w, h, depth.into_vec())
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn grid(&self) -> &Grid<u16> {
        &self.depth
    }

    pub fn values(&self) -> &[u16] {
        self.depth.as_slice()
    }
}

/// Identity of a recorded sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SequenceMeta {
    pub action: u16,
    pub subject: u16,
    pub trial: u16,
}

impl SequenceMeta {
    pub fn new(action: u16, subject: u16, trial: u16) -> Self {
        Self {
            action,
            subject,
            trial,
        }
    }

    /// `aNN_sNN_eNN`, the dataset naming convention.
    pub fn id(&self) -> String {
        format!("a{:02}_s{:02}_e{:02}", self.action, self.subject, self.trial)
    }
}

/// An ordered, validated sequence of equally-sized depth frames (T ≥ 2).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthSequence {
    frames: Vec<DepthFrame>,
    meta: SequenceMeta,
}

impl DepthSequence {
    pub fn new(frames: Vec<DepthFrame>, meta: SequenceMeta) -> Result<Self, DepthIoError> {
        if frames.len() < 2 {
            return Err(DepthIoError::TooFewFrames(frames.len()));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width() != w || f.height() != h)
        {
            return Err(DepthIoError::DimensionMismatch(format!(
                "frame {i} is {}x{}, frame 0 is {w}x{h}",
                f.width(),
                f.height()
            )));
        }
        Ok(Self { frames, meta })
    }

    pub fn frames(&self) -> &[DepthFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false: a sequence holds at least two frames.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn meta(&self) -> SequenceMeta {
        self.meta
    }

    pub fn with_meta(mut self, meta: SequenceMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn id(&self) -> String {
        self.meta.id()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..self.pos + N]);
        self.pos += N;
        out
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn i32(&mut self) -> i32 {
        i32::from_le_bytes(self.take())
    }
}

fn check_len(expected: usize, actual: usize) -> Result<(), DepthIoError> {
    match actual.cmp(&expected) {
        std::cmp::Ordering::Less => Err(DepthIoError::TruncatedStream { expected, actual }),
        std::cmp::Ordering::Greater => Err(DepthIoError::DimensionMismatch(format!(
            "{} trailing bytes after declared payload",
            actual - expected
        ))),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

/// Parses a canonical `DSEQ` stream.
pub fn read_canonical(bytes: &[u8]) -> Result<DepthSequence, DepthIoError> {
    if bytes.len() < CANONICAL_HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != CANONICAL_MAGIC {
            return Err(DepthIoError::BadMagic);
        }
        return Err(DepthIoError::TruncatedStream {
            expected: CANONICAL_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let mut r = Reader::new(bytes);
    if &r.take::<4>() != CANONICAL_MAGIC {
        return Err(DepthIoError::BadMagic);
    }
    let version = r.u16();
    if version != CANONICAL_VERSION {
        return Err(DepthIoError::UnsupportedVersion(version));
    }
    let _reserved = r.u16();
    let frames = r.u32() as usize;
    let width = r.u32() as usize;
    let height = r.u32() as usize;
    let meta = SequenceMeta {
        subject: r.u16(),
        action: r.u16(),
        trial: r.u16(),
    };
    let _pad = r.u16();
    if width == 0 || height == 0 {
        return Err(DepthIoError::DimensionMismatch(format!(
            "zero-sized frame {width}x{height}"
        )));
    }
    if frames < 2 {
        return Err(DepthIoError::TooFewFrames(frames));
    }
    let pixels = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(frames))
        .ok_or_else(|| DepthIoError::DimensionMismatch("payload size overflows".into()))?;
    check_len(CANONICAL_HEADER_LEN + 2 * pixels, bytes.len())?;

    let per_frame = width * height;
    let frames = (0..frames)
        .map(|_| {
            let depth = (0..per_frame).map(|_| r.u16()).collect();
            DepthFrame::new(width, height, depth)
        })
        .collect::<Result<Vec<_>, _>>()?;
    DepthSequence::new(frames, meta)
}

/// Serialises a sequence in the canonical layout. Output is deterministic.
pub fn write_canonical(seq: &DepthSequence) -> Vec<u8> {
    let pixels = seq.len() * seq.width() * seq.height();
    let mut out = Vec::with_capacity(CANONICAL_HEADER_LEN + 2 * pixels);
    out.extend_from_slice(CANONICAL_MAGIC);
    out.extend_from_slice(&CANONICAL_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.width() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.height() as u32).to_le_bytes());
    let meta = seq.meta();
    out.extend_from_slice(&meta.subject.to_le_bytes());
    out.extend_from_slice(&meta.action.to_le_bytes());
    out.extend_from_slice(&meta.trial.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    for frame in seq.frames() {
        for v in frame.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Result of decoding an MSR-Action3D `.bin` file.
#[derive(Clone, Debug)]
pub struct MsrLoad {
    pub sequence: DepthSequence,
    /// Depth words outside `0..=u16::MAX` that were clamped.
    pub saturated: usize,
}

/// Decodes the MSR-Action3D depth layout: `(frames, width, height)` as LE
/// `i32`, then `frames·height·width` LE 32-bit depth words, row-major.
/// Metadata is not stored in the file; pass it in (see [`parse_sequence_name`]).
pub fn read_msr_bin(bytes: &[u8], meta: SequenceMeta) -> Result<MsrLoad, DepthIoError> {
    if bytes.len() < MSR_HEADER_LEN {
        return Err(DepthIoError::TruncatedStream {
            expected: MSR_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let mut r = Reader::new(bytes);
    let (frames, width, height) = (r.i32(), r.i32(), r.i32());
    if frames <= 0 || width <= 0 || height <= 0 {
        return Err(DepthIoError::NonPositiveDims {
            frames: frames as i64,
            width: width as i64,
            height: height as i64,
        });
    }
    let (frames, width, height) = (frames as usize, width as usize, height as usize);
    let pixels = frames
        .checked_mul(width)
        .and_then(|p| p.checked_mul(height))
        .ok_or_else(|| DepthIoError::DimensionMismatch("payload size overflows".into()))?;
    check_len(MSR_HEADER_LEN + 4 * pixels, bytes.len())?;

    let mut saturated = 0usize;
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let depth = (0..width * height)
            .map(|_| {
                let word = r.i32();
                if (0..=u16::MAX as i32).contains(&word) {
                    word as u16
                } else {
                    saturated += 1;
                    if word < 0 {
                        0
                    } else {
                        u16::MAX
                    }
                }
            })
            .collect();
        out.push(DepthFrame::new(width, height, depth)?);
    }
    Ok(MsrLoad {
        sequence: DepthSequence::new(out, meta)?,
        saturated,
    })
}

/// Parses the `aNN_sNN_eNN…` prefix of a dataset file name.
pub fn parse_sequence_name(name: &str) -> Option<SequenceMeta> {
    let name = Path::new(name).file_name()?.to_str()?;
    let mut fields = name.splitn(4, '_');
    let mut field = |tag: char| -> Option<u16> {
        let f = fields.next()?;
        let digits = f.strip_prefix(tag)?;
        let end = digits
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(digits.len());
        if end == 0 {
            return None;
        }
        // only the last field may carry a suffix (e.g. "e02.bin")
        if tag != 'e' && end != digits.len() {
            return None;
        }
        digits[..end].parse().ok()
    };
    let action = field('a')?;
    let subject = field('s')?;
    let trial = field('e')?;
    Some(SequenceMeta {
        action,
        subject,
        trial,
    })
}

/// Parses a manifest of `file,action,subject,trial` lines (`#` comments allowed).
pub fn parse_manifest(text: &str) -> Result<HashMap<String, SequenceMeta>, DepthIoError> {
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| DepthIoError::BadManifest {
            line: i + 1,
            reason: reason.to_string(),
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 comma-separated columns"));
        }
        let num = |s: &str| s.parse::<u16>().map_err(|_| bad("non-numeric id"));
        out.insert(
            cols[0].to_string(),
            SequenceMeta::new(num(cols[1])?, num(cols[2])?, num(cols[3])?),
        );
    }
    Ok(out)
}

/// Files in `dir` whose extension equals `ext`, sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, DepthIoError> {
    let io_err = |source| DepthIoError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, DepthIoError> {
    fs::read(path).map_err(|source| DepthIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_canonical_file(path: &Path) -> Result<DepthSequence, DepthIoError> {
    read_canonical(&read_file(path)?)
}

pub fn save_canonical_file(path: &Path, seq: &DepthSequence) -> Result<(), DepthIoError> {
    fs::write(path, write_canonical(seq)).map_err(|source| DepthIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads every canonical file of a directory, ordered by (action, subject, trial).
pub fn load_dataset(dir: &Path) -> Result<Vec<DepthSequence>, DepthIoError> {
    let mut seqs = list_files(dir, CANONICAL_EXTENSION)?
        .iter()
        .map(|p| load_canonical_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    seqs.sort_by_key(|s| s.meta());
    Ok(seqs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(w: usize, h: usize, frames: &[Vec<u16>], meta: SequenceMeta) -> DepthSequence {
        let frames = frames
            .iter()
            .map(|d| DepthFrame::new(w, h, d.clone()).unwrap())
            .collect();
        DepthSequence::new(frames, meta).unwrap()
    }

    fn msr_bytes(frames: i32, w: i32, h: i32, words: &[i32]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [frames, w, h].iter().chain(words) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn zero_payload_round_trips() {
        let s = seq(4, 4, &[vec![0; 16], vec![0; 16]], SequenceMeta::default());
        let back = read_canonical(&write_canonical(&s)).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back.frames().iter().all(|f| f.values().iter().all(|&v| v == 0)));
        assert_eq!(back, s);
    }

    #[test]
    fn canonical_layout_is_bit_exact() {
        let s = seq(1, 1, &[vec![5], vec![7]], SequenceMeta::new(2, 3, 4));
        let bytes = write_canonical(&s);
        assert_eq!(bytes.len(), CANONICAL_HEADER_LEN + 4);
        let mut expected = b"DSEQ".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0]);
        expected.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&[3, 0, 2, 0, 4, 0, 0, 0]);
        expected.extend_from_slice(&[5, 0, 7, 0]);
        assert_eq!(bytes, expected);
        assert_eq!(write_canonical(&s), bytes);
    }

    #[test]
    fn missing_frame_is_truncated() {
        let s = seq(2, 2, &[vec![1; 4], vec![2; 4], vec![3; 4]], SequenceMeta::default());
        let mut bytes = write_canonical(&s);
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(
            read_canonical(&bytes),
            Err(DepthIoError::TruncatedStream { expected: 52, actual: 44 })
        ));
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        let s = seq(1, 1, &[vec![5], vec![7]], SequenceMeta::default());
        let mut bytes = write_canonical(&s);
        bytes[0] = b'X';
        assert!(matches!(read_canonical(&bytes), Err(DepthIoError::BadMagic)));
        let mut bytes = write_canonical(&s);
        bytes.push(0);
        assert!(matches!(
            read_canonical(&bytes),
            Err(DepthIoError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn single_frame_header_rejected() {
        let s = seq(1, 1, &[vec![5], vec![7]], SequenceMeta::default());
        let mut bytes = write_canonical(&s);
        bytes[8] = 1;
        bytes.truncate(CANONICAL_HEADER_LEN + 2);
        assert!(matches!(
            read_canonical(&bytes),
            Err(DepthIoError::TooFewFrames(1))
        ));
    }

    #[test]
    fn sequence_rejects_mixed_sizes() {
        let a = DepthFrame::new(2, 2, vec![0; 4]).unwrap();
        let b = DepthFrame::new(1, 4, vec![0; 4]).unwrap();
        assert!(matches!(
            DepthSequence::new(vec![a, b], SequenceMeta::default()),
            Err(DepthIoError::DimensionMismatch(_))
        ));
        assert!(DepthFrame::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn msr_zero_payload() {
        let bytes = msr_bytes(2, 4, 4, &[0; 32]);
        let load = read_msr_bin(&bytes, SequenceMeta::default()).unwrap();
        assert_eq!(load.sequence.len(), 2);
        assert_eq!(load.sequence.width(), 4);
        assert_eq!(load.saturated, 0);
    }

    #[test]
    fn msr_errors() {
        let bytes = msr_bytes(0, 4, 4, &[]);
        assert!(matches!(
            read_msr_bin(&bytes, SequenceMeta::default()),
            Err(DepthIoError::NonPositiveDims { .. })
        ));
        let bytes = msr_bytes(2, 4, 4, &[0; 31]);
        assert!(matches!(
            read_msr_bin(&bytes, SequenceMeta::default()),
            Err(DepthIoError::TruncatedStream { .. })
        ));
    }

    #[test]
    fn msr_saturates_large_words() {
        let bytes = msr_bytes(2, 1, 2, &[70000, 12, -3, 65535]);
        let load = read_msr_bin(&bytes, SequenceMeta::default()).unwrap();
        assert_eq!(load.saturated, 2);
        assert_eq!(load.sequence.frames()[0].values(), &[u16::MAX, 12]);
        assert_eq!(load.sequence.frames()[1].values(), &[0, 65535]);
    }

    #[test]
    fn file_name_pattern() {
        assert_eq!(
            parse_sequence_name("a01_s03_e02_sdepth.bin"),
            Some(SequenceMeta::new(1, 3, 2))
        );
        assert_eq!(
            parse_sequence_name("/data/a20_s10_e03.bin"),
            Some(SequenceMeta::new(20, 10, 3))
        );
        assert_eq!(parse_sequence_name("a1x_s03_e02.bin"), None);
        assert_eq!(parse_sequence_name("s03_a01_e02.bin"), None);
        assert_eq!(parse_sequence_name("a01_s03.bin"), None);
        assert_eq!(SequenceMeta::new(1, 3, 2).id(), "a01_s03_e02");
    }

    #[test]
    fn manifest_parses_and_reports_line() {
        let m = parse_manifest("# name,a,s,e\nfoo.bin, 4, 5, 6\n").unwrap();
        assert_eq!(m["foo.bin"], SequenceMeta::new(4, 5, 6));
        let err = parse_manifest("foo.bin,1,2\n").unwrap_err();
        assert!(matches!(err, DepthIoError::BadManifest { line: 1, .. }));
    }
}
