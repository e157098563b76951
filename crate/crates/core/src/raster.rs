//! Labeled segmentation rasters: decoding, ISOL extraction and cluster output.
//!
//! A raster stores one non-negative label per pixel in row-major order. Label
//! `0` marks interstitial (valley) material; every positive label names one
//! segment (an ISOL). Segments are defined by label equality only, so a label
//! that appears in two disconnected blobs is still a single ISOL.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while decoding, validating or writing rasters.
///
/// Row and column positions are zero-based raster coordinates.
#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("row {row}, column {col}: `{token}` is not a non-negative integer")]
    BadCell { row: usize, col: usize, token: String },
    #[error("row {row}, column {col}: negative label `{token}`")]
    NegativeLabel { row: usize, col: usize, token: String },
    #[error("row {row}: expected {expected} columns, found {found}")]
    RowLength { row: usize, expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimensions { expected: String, found: String },
    #[error("row {row}, column {col}: sample {value} exceeds maxval {maxval}")]
    ExceedsMaxval {
        row: usize,
        col: usize,
        value: u32,
        maxval: u32,
    },
    #[error("raster has no pixels")]
    Empty,
    #[error("unknown ISOL id {0}")]
    UnknownIsol(u32),
    #[error("ISOL {isol} appears in groups {first} and {second}")]
    OverlappingGroups { isol: u32, first: u32, second: u32 },
    #[error("group id must be positive")]
    ZeroGroupId,
    #[error("label {0} does not fit in a PGM sample (max 65535)")]
    LabelTooLarge(u32),
    #[error("unknown raster format `{0}` (expected text-grid or pgm)")]
    UnknownFormat(String),
}

/// A pixel position: `x` is the column, `y` the row.
///
/// Ordering is row-major (by `y`, then `x`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: u32,
    pub y: u32,
}

impl PixelCoord {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl Ord for PixelCoord {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for PixelCoord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PixelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A 2-D grid of segment labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledRaster {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabeledRaster {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Empty);
        }
        if labels.len() != width * height {
            return Err(RasterError::Dimensions {
                expected: format!("{} labels ({width}x{height})", width * height),
                found: format!("{} labels", labels.len()),
            });
        }
        Ok(Self { width, height, labels })
    }

    /// An all-interstitial raster.
    pub fn zeros(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Row-major index of a pixel.
    #[inline]
    pub fn index(&self, p: PixelCoord) -> usize {
        p.y as usize * self.width + p.x as usize
    }

    /// Inverse of [`LabeledRaster::index`].
    #[inline]
    pub fn coord(&self, index: usize) -> PixelCoord {
        PixelCoord::new((index % self.width) as u32, (index / self.width) as u32)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn label_at(&self, p: PixelCoord) -> u32 {
        self.labels[self.index(p)]
    }

    /// Label at a signed position, `None` when off-raster.
    #[inline]
    pub fn label_checked(&self, x: i64, y: i64) -> Option<u32> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.labels[y as usize * self.width + x as usize])
        }
    }

    pub fn set(&mut self, x: usize, y: usize, label: u32) {
        self.labels[y * self.width + x] = label;
    }

    /// Distinct positive labels in ascending order.
    pub fn isol_ids(&self) -> Vec<u32> {
        let ids: BTreeSet<u32> = self.labels.iter().copied().filter(|&l| l > 0).collect();
        ids.into_iter().collect()
    }

    /// Pixel count per positive label.
    pub fn label_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for &l in self.labels.iter().filter(|&&l| l > 0) {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Supported on-disk raster encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RasterFormat {
    /// Whitespace-separated decimal labels, one raster row per line.
    TextGrid,
    /// Netpbm graymap, ASCII (`P2`) or binary (`P5`).
    Pgm,
}

impl RasterFormat {
    /// Guess the format from a file extension (`.pgm` or anything else).
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => RasterFormat::Pgm,
            _ => RasterFormat::TextGrid,
        }
    }
}

impl FromStr for RasterFormat {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text-grid" | "text" | "grid" => Ok(RasterFormat::TextGrid),
            "pgm" => Ok(RasterFormat::Pgm),
            other => Err(RasterError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for RasterFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RasterFormat::TextGrid => f.write_str("text-grid"),
            RasterFormat::Pgm => f.write_str("pgm"),
        }
    }
}

/// Decode a raster from a byte stream.
pub fn load_raster<R: Read>(source: R, format: RasterFormat) -> Result<LabeledRaster, RasterError> {
    match format {
        RasterFormat::TextGrid => read_text_grid(source),
        RasterFormat::Pgm => read_pgm(source),
    }
}

fn parse_label(token: &str, row: usize, col: usize) -> Result<u32, RasterError> {
    token.parse::<u32>().map_err(|_| {
        let negative = token
            .strip_prefix('-')
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()));
        if negative {
            RasterError::NegativeLabel {
                row,
                col,
                token: token.to_string(),
            }
        } else {
            RasterError::BadCell {
                row,
                col,
                token: token.to_string(),
            }
        }
    })
}

fn read_text_grid<R: Read>(source: R) -> Result<LabeledRaster, RasterError> {
    let reader = BufReader::new(source);
    let mut header: Option<(usize, usize)> = None;
    let mut width: Option<usize> = None;
    let mut labels = Vec::new();
    let mut rows = 0usize;
    let mut seen_data = false;

    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if seen_data || header.is_some() {
                return Err(RasterError::Header(format!(
                    "unexpected header line `{trimmed}` after row {rows}"
                )));
            }
            let dims: Vec<&str> = rest.split_whitespace().collect();
            if dims.len() != 2 {
                return Err(RasterError::Header(format!(
                    "expected `# width height`, found `{trimmed}`"
                )));
            }
            let w = dims[0]
                .parse::<usize>()
                .map_err(|_| RasterError::Header(format!("bad width `{}`", dims[0])))?;
            let h = dims[1]
                .parse::<usize>()
                .map_err(|_| RasterError::Header(format!("bad height `{}`", dims[1])))?;
            header = Some((w, h));
            continue;
        }
        seen_data = true;
        let start = labels.len();
        for (col, token) in trimmed.split_whitespace().enumerate() {
            labels.push(parse_label(token, rows, col)?);
        }
        let found = labels.len() - start;
        match width {
            None => width = Some(found),
            Some(expected) if expected != found => {
                return Err(RasterError::RowLength {
                    row: rows,
                    expected,
                    found,
                })
            }
            Some(_) => {}
        }
        rows += 1;
    }

    let width = width.ok_or(RasterError::Empty)?;
    if let Some((w, h)) = header {
        if w != width || h != rows {
            return Err(RasterError::Dimensions {
                expected: format!("{w}x{h} from header"),
                found: format!("{width}x{rows}"),
            });
        }
    }
    LabeledRaster::new(width, rows, labels)
}

/// Tokenizer for the PGM header: whitespace separated, `#` starts a comment
/// running to end of line.
struct PgmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmHeader<'a> {
    fn next_token(&mut self) -> Option<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()
    }

    fn number(&mut self, what: &str) -> Result<usize, RasterError> {
        let token = self
            .next_token()
            .ok_or_else(|| RasterError::Header(format!("missing {what}")))?;
        token
            .parse::<usize>()
            .map_err(|_| RasterError::Header(format!("bad {what} `{token}`")))
    }
}

fn read_pgm<R: Read>(mut source: R) -> Result<LabeledRaster, RasterError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut header = PgmHeader { bytes: &bytes, pos: 0 };
    let magic = header
        .next_token()
        .ok_or_else(|| RasterError::Header("missing magic number".into()))?;
    let binary = match magic {
        "P2" => false,
        "P5" => true,
        other => return Err(RasterError::Header(format!("unsupported magic `{other}`"))),
    };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(RasterError::Empty);
    }
    if maxval == 0 || maxval > 65535 {
        return Err(RasterError::Header(format!("maxval {maxval} out of range 1..=65535")));
    }
    let maxval = maxval as u32;
    let total = width * height;
    let mut labels = Vec::with_capacity(total);

    let check = |i: usize, value: u32| -> Result<u32, RasterError> {
        if value > maxval {
            Err(RasterError::ExceedsMaxval {
                row: i / width,
                col: i % width,
                value,
                maxval,
            })
        } else {
            Ok(value)
        }
    };

    if binary {
        // exactly one whitespace byte separates maxval from the raster
        let data = bytes.get(header.pos + 1..).unwrap_or(&[]);
        let sample_size = if maxval < 256 { 1 } else { 2 };
        if data.len() < total * sample_size {
            return Err(RasterError::Dimensions {
                expected: format!("{} bytes of samples", total * sample_size),
                found: format!("{} bytes", data.len()),
            });
        }
        for i in 0..total {
            let value = if sample_size == 1 {
                data[i] as u32
            } else {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32
            };
            labels.push(check(i, value)?);
        }
    } else {
        for i in 0..total {
            let token = header.next_token().ok_or_else(|| RasterError::Dimensions {
                expected: format!("{total} samples ({width}x{height})"),
                found: format!("{i} samples"),
            })?;
            let value = parse_label(token, i / width, i % width)?;
            labels.push(check(i, value)?);
        }
        if let Some(extra) = header.next_token() {
            return Err(RasterError::Dimensions {
                expected: format!("{total} samples ({width}x{height})"),
                found: format!("trailing data starting with `{extra}`"),
            });
        }
    }
    LabeledRaster::new(width, height, labels)
}

/// Write a raster as a text grid with a `# width height` header.
pub fn write_text_grid<W: Write>(raster: &LabeledRaster, mut out: W) -> io::Result<()> {
    writeln!(out, "# {} {}", raster.width, raster.height)?;
    for row in raster.labels.chunks(raster.width) {
        let mut first = true;
        for label in row {
            if !first {
                out.write_all(b" ")?;
            }
            write!(out, "{label}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Write a raster as an ASCII (`P2`) graymap. Labels must fit in 16 bits.
pub fn write_pgm<W: Write>(raster: &LabeledRaster, mut out: W) -> Result<(), RasterError> {
    let max = raster.max_label();
    if max > 65535 {
        return Err(RasterError::LabelTooLarge(max));
    }
    writeln!(out, "P2")?;
    writeln!(out, "{} {}", raster.width, raster.height)?;
    writeln!(out, "{}", max.max(1))?;
    for row in raster.labels.chunks(raster.width) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// One delineated segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Isol {
    pub id: u32,
    /// All pixels carrying this label, row-major order.
    pub pixels: Vec<PixelCoord>,
    /// Pixels with at least one 4-neighbour outside the segment (including
    /// off-raster neighbours), row-major order.
    pub edge_pixels: Vec<PixelCoord>,
}

impl Isol {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_pixels.len()
    }
}

const FOUR_NEIGHBOURS: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

fn is_edge(raster: &LabeledRaster, x: usize, y: usize, label: u32) -> bool {
    FOUR_NEIGHBOURS
        .iter()
        .any(|&(dx, dy)| raster.label_checked(x as i64 + dx, y as i64 + dy) != Some(label))
}

/// Split a raster into its ISOLs, sorted by id.
pub fn extract_isols(raster: &LabeledRaster) -> Vec<Isol> {
    let mut by_label: BTreeMap<u32, Isol> = BTreeMap::new();
    for y in 0..raster.height {
        for x in 0..raster.width {
            let label = raster.get(x, y);
            if label == 0 {
                continue;
            }
            let isol = by_label.entry(label).or_insert_with(|| Isol {
                id: label,
                pixels: Vec::new(),
                edge_pixels: Vec::new(),
            });
            let p = PixelCoord::new(x as u32, y as u32);
            isol.pixels.push(p);
            if is_edge(raster, x, y, label) {
                isol.edge_pixels.push(p);
            }
        }
    }
    by_label.into_values().collect()
}

/// Render groups of ISOLs as a new raster: member pixels take their group
/// id, everything else becomes 0.
pub fn write_cluster_raster(raster: &LabeledRaster, groups: &[(u32, Vec<u32>)]) -> Result<LabeledRaster, RasterError> {
    let present = raster.label_counts();
    let mut assignment: BTreeMap<u32, u32> = BTreeMap::new();
    for (group_id, members) in groups {
        if *group_id == 0 {
            return Err(RasterError::ZeroGroupId);
        }
        for &isol in members {
            if !present.contains_key(&isol) {
                return Err(RasterError::UnknownIsol(isol));
            }
            if let Some(&first) = assignment.get(&isol) {
                return Err(RasterError::OverlappingGroups {
                    isol,
                    first,
                    second: *group_id,
                });
            }
            assignment.insert(isol, *group_id);
        }
    }
    let labels = raster
        .labels
        .iter()
        .map(|l| assignment.get(l).copied().unwrap_or(0))
        .collect();
    LabeledRaster::new(raster.width, raster.height, labels)
}
