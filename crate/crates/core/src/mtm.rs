//! Three-view motion trail model: front/side/top projections of each depth
//! frame folded into motion history images (MHI) and static history images
//! (SHI), one per projection plane.

use std::fmt;

use thiserror::Error;

use crate::depth_io::{DepthFrame, DepthSequence};
use crate::grid::{GrayImage, Grid};

#[derive(Debug, Error, PartialEq)]
pub enum MtmError {
    #[error("invalid MTM config: {0}")]
    InvalidConfig(String),
    #[error("depth {depth} outside the configured range [{min}, {max}]")]
    DepthOutOfRange { depth: u16, min: u16, max: u16 },
    #[error("grid shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("no update maps to fold")]
    EmptyInput,
    #[error("expected {expected} update maps for horizon {horizon}, got {actual}")]
    HorizonMismatch {
        horizon: usize,
        expected: usize,
        actual: usize,
    },
}

/// Projection plane of a history image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Plane {
    /// Front view, (x, y).
    XOy,
    /// Side view, (z, y).
    YOz,
    /// Top view, (x, z).
    XOz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::XOy, Plane::YOz, Plane::XOz];

    pub fn name(self) -> &'static str {
        match self {
            Plane::XOy => "xOy",
            Plane::YOz => "yOz",
            Plane::XOz => "xOz",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HistoryKind {
    Mhi,
    Shi,
}

impl HistoryKind {
    pub fn name(self) -> &'static str {
        match self {
            HistoryKind::Mhi => "MHI",
            HistoryKind::Shi => "SHI",
        }
    }
}

impl fmt::Display for HistoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Depth interval used to quantise the z axis of the side and top views.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZRange {
    /// `[min, max]` of the nonzero depths over the whole sequence.
    Auto,
    Explicit { min: u16, max: u16 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MtmConfig {
    /// Motion threshold on the front (depth-valued) view, raw sensor units.
    pub zeta_m: f64,
    /// Static threshold on the front view.
    pub zeta_s: f64,
    /// Motion threshold on the binary side/top occupancy views.
    pub occupancy_zeta_m: f64,
    /// Static threshold on the binary side/top occupancy views.
    pub occupancy_zeta_s: f64,
    pub z_bins: usize,
    pub z_range: ZRange,
}

impl Default for MtmConfig {
    fn default() -> Self {
        Self {
            zeta_m: 10.0,
            zeta_s: 10.0,
            occupancy_zeta_m: 0.5,
            occupancy_zeta_s: 0.5,
            z_bins: 64,
            z_range: ZRange::Auto,
        }
    }
}

impl MtmConfig {
    pub fn validate(&self) -> Result<(), MtmError> {
        let positive = [
            ("zeta_m", self.zeta_m),
            ("zeta_s", self.zeta_s),
            ("occupancy_zeta_m", self.occupancy_zeta_m),
            ("occupancy_zeta_s", self.occupancy_zeta_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MtmError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.z_bins == 0 {
            return Err(MtmError::InvalidConfig("z_bins must be >= 1".into()));
        }
        if let ZRange::Explicit { min, max } = self.z_range {
            if min >= max {
                return Err(MtmError::InvalidConfig(format!(
                    "z_range min {min} must be < max {max}"
                )));
            }
        }
        Ok(())
    }

    fn thresholds(&self, plane: Plane) -> (f64, f64) {
        match plane {
            Plane::XOy => (self.zeta_m, self.zeta_s),
            Plane::YOz | Plane::XOz => (self.occupancy_zeta_m, self.occupancy_zeta_s),
        }
    }
}

/// Resolved depth quantisation interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DepthRange {
    pub min: u16,
    pub max: u16,
}

impl DepthRange {
    /// Nonzero-depth extent of a set of frames; `None` if every pixel is background.
    pub fn of_frames<'a>(frames: impl IntoIterator<Item = &'a DepthFrame>) -> Option<Self> {
        let mut range: Option<DepthRange> = None;
        for f in frames {
            for &d in f.values().iter().filter(|&&d| d > 0) {
                range = Some(match range {
                    None => DepthRange { min: d, max: d },
                    Some(r) => DepthRange {
                        min: r.min.min(d),
                        max: r.max.max(d),
                    },
                });
            }
        }
        range
    }

    pub fn resolve(cfg: &MtmConfig, seq: &DepthSequence) -> DepthRange {
        match cfg.z_range {
            ZRange::Explicit { min, max } => DepthRange { min, max },
            ZRange::Auto => {
                DepthRange::of_frames(seq.frames()).unwrap_or(DepthRange { min: 0, max: 0 })
            }
        }
    }

    /// Bin index of a nonzero depth, or `DepthOutOfRange`.
    pub fn quantize(&self, depth: u16, z_bins: usize) -> Result<usize, MtmError> {
        if depth < self.min || depth > self.max {
            return Err(MtmError::DepthOutOfRange {
                depth,
                min: self.min,
                max: self.max,
            });
        }
        if self.max == self.min {
            return Ok(0);
        }
        let span = (self.max - self.min) as usize;
        let bin = (depth - self.min) as usize * z_bins / span;
        Ok(bin.min(z_bins - 1))
    }
}

/// Front, side and top views of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionTriple {
    /// `width × height`, the depth map itself.
    pub front: Grid<f64>,
    /// `z_bins × height` binary occupancy.
    pub side: Grid<f64>,
    /// `width × z_bins` binary occupancy.
    pub top: Grid<f64>,
    pub z_bins: usize,
}

impl ProjectionTriple {
    pub fn plane(&self, plane: Plane) -> &Grid<f64> {
        match plane {
            Plane::XOy => &self.front,
            Plane::YOz => &self.side,
            Plane::XOz => &self.top,
        }
    }
}

pub fn project_frame(
    frame: &DepthFrame,
    z_bins: usize,
    range: DepthRange,
) -> Result<ProjectionTriple, MtmError> {
    let (w, h) = (frame.width(), frame.height());
    let depth = frame.grid();
    let front = depth.map(|&d| d as f64);
    let mut side = Grid::filled(z_bins, h, 0.0);
    let mut top = Grid::filled(w, z_bins, 0.0);
    for y in 0..h {
        for x in 0..w {
            let d = depth[(x, y)];
            if d == 0 {
                continue;
            }
            let z = range.quantize(d, z_bins)?;
            side[(z, y)] = 1.0;
            top[(x, z)] = 1.0;
        }
    }
    Ok(ProjectionTriple {
        front,
        side,
        top,
        z_bins,
    })
}

fn check_shape<A, B>(a: &Grid<A>, b: &Grid<B>) -> Result<(), MtmError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MtmError::ShapeMismatch(a.dims(), b.dims()))
    }
}

/// `1` where the inter-frame difference magnitude exceeds `zeta_m`.
pub fn motion_update(prev: &Grid<f64>, cur: &Grid<f64>, zeta_m: f64) -> Result<Grid<u8>, MtmError> {
    check_shape(prev, cur)?;
    let data = prev
        .as_slice()
        .iter()
        .zip(cur.as_slice())
        .map(|(&p, &c)| u8::from((c - p).abs() > zeta_m))
        .collect();
    Ok(Grid::from_vec(cur.width(), cur.height(), data).expect("shape checked"))
}

/// `1` where the pixel is present and not moving: `cur − |cur − prev| > zeta_s`.
pub fn static_update(prev: &Grid<f64>, cur: &Grid<f64>, zeta_s: f64) -> Result<Grid<u8>, MtmError> {
    check_shape(prev, cur)?;
    let data = prev
        .as_slice()
        .iter()
        .zip(cur.as_slice())
        .map(|(&p, &c)| u8::from(c - (c - p).abs() > zeta_s))
        .collect();
    Ok(Grid::from_vec(cur.width(), cur.height(), data).expect("shape checked"))
}

/// A history template. Values are integers in `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryImage {
    pub plane: Plane,
    pub kind: HistoryKind,
    pub values: Grid<f64>,
    pub horizon: usize,
}

impl HistoryImage {
    /// Values divided by the horizon, in `[0, 1]`.
    pub fn normalized(&self) -> GrayImage {
        let t = self.horizon.max(1) as f64;
        self.values.map(|&v| v / t)
    }

    /// Binary 8-bit PGM (`P5`), `value·255/T` rounded half-up.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (w, h) = self.values.dims();
        let t = self.horizon.max(1) as u64;
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend(self.values.as_slice().iter().map(|&v| {
            let v = v.round().clamp(0.0, t as f64) as u64;
            ((2 * 255 * v + t) / (2 * t)) as u8
        }));
        out
    }

    pub fn pgm_file_name(&self, seq_id: &str) -> String {
        format!("{seq_id}_{}_{}.pgm", self.plane, self.kind)
    }

    fn step(&mut self, fired: &Grid<u8>) {
        let t = self.horizon as f64;
        for (v, &f) in self.values.as_mut_slice().iter_mut().zip(fired.as_slice()) {
            *v = if f == 1 { t } else { (*v - 1.0).max(0.0) };
        }
    }
}

/// Folds `horizon − 1` update maps (one per consecutive frame pair) into a
/// history image: `T` where the update fired, else previous value − 1, floored
/// at 0, starting from 0.
pub fn fold_history(
    maps: &[Grid<u8>],
    horizon: usize,
    plane: Plane,
    kind: HistoryKind,
) -> Result<HistoryImage, MtmError> {
    let first = maps.first().ok_or(MtmError::EmptyInput)?;
    if maps.len() + 1 != horizon {
        return Err(MtmError::HorizonMismatch {
            horizon,
            expected: horizon.saturating_sub(1),
            actual: maps.len(),
        });
    }
    let mut hist = HistoryImage {
        plane,
        kind,
        values: Grid::filled(first.width(), first.height(), 0.0),
        horizon,
    };
    for m in maps {
        check_shape(&hist.values, m)?;
        hist.step(m);
    }
    Ok(hist)
}

/// The six templates of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct MtmOutput {
    pub mhi: [HistoryImage; 3],
    pub shi: [HistoryImage; 3],
}

impl MtmOutput {
    pub fn get(&self, plane: Plane, kind: HistoryKind) -> &HistoryImage {
        match kind {
            HistoryKind::Mhi => &self.mhi[plane.index()],
            HistoryKind::Shi => &self.shi[plane.index()],
        }
    }

    /// MHI xOy, yOz, xOz then SHI xOy, yOz, xOz.
    pub fn iter(&self) -> impl Iterator<Item = &HistoryImage> {
        self.mhi.iter().chain(self.shi.iter())
    }
}

pub fn compute_mtm(seq: &DepthSequence, cfg: &MtmConfig) -> Result<MtmOutput, MtmError> {
    cfg.validate()?;
    let range = DepthRange::resolve(cfg, seq);
    let horizon = seq.len();
    let mut prev = project_frame(&seq.frames()[0], cfg.z_bins, range)?;

    let blank = |plane: Plane, kind: HistoryKind| {
        let (w, h) = prev.plane(plane).dims();
        HistoryImage {
            plane,
            kind,
            values: Grid::filled(w, h, 0.0),
            horizon,
        }
    };
    let mut mhi = Plane::ALL.map(|p| blank(p, HistoryKind::Mhi));
    let mut shi = Plane::ALL.map(|p| blank(p, HistoryKind::Shi));

    for frame in &seq.frames()[1..] {
        let cur = project_frame(frame, cfg.z_bins, range)?;
        for plane in Plane::ALL {
            let (zm, zs) = cfg.thresholds(plane);
            let (p, c) = (prev.plane(plane), cur.plane(plane));
            mhi[plane.index()].step(&motion_update(p, c, zm)?);
            shi[plane.index()].step(&static_update(p, c, zs)?);
        }
        prev = cur;
    }
    Ok(MtmOutput { mhi, shi })
}

/// Crop/resize applied to each history image before descriptor extraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateConfig {
    /// Crop to the bounding box of nonzero values first.
    pub crop: bool,
    /// Output size `(width, height)`; `None` keeps the (cropped) size.
    pub size: Option<(usize, usize)>,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            crop: true,
            size: Some((64, 64)),
        }
    }
}

/// Normalises, crops and resizes a history image into a GLAC input.
pub fn prepare_template(hist: &HistoryImage, cfg: &TemplateConfig) -> GrayImage {
    let img = hist.normalized();
    let img = match (cfg.crop, nonzero_bbox(&img)) {
        (true, Some((x0, y0, x1, y1))) => crop(&img, x0, y0, x1, y1),
        _ => img,
    };
    match cfg.size {
        Some((w, h)) if (w, h) != img.dims() => resize_bilinear(&img, w, h),
        _ => img,
    }
}

/// Inclusive bounding box `(x0, y0, x1, y1)` of nonzero pixels.
pub fn nonzero_bbox(img: &GrayImage) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img[(x, y)] != 0.0 {
                bbox = Some(match bbox {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    bbox
}

fn crop(img: &GrayImage, x0: usize, y0: usize, x1: usize, y1: usize) -> GrayImage {
    Grid::from_fn(x1 - x0 + 1, y1 - y0 + 1, |x, y| img[(x0 + x, y0 + y)])
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    let (sw, sh) = img.dims();
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let sample = |pos: f64, len: usize| {
        let p = pos.clamp(0.0, (len - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, p - i0 as f64)
    };
    Grid::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = sample((x as f64 + 0.5) * sx - 0.5, sw);
        let (y0, y1, fy) = sample((y as f64 + 0.5) * sy - 0.5, sh);
        let top = img[(x0, y0)] * (1.0 - fx) + img[(x1, y0)] * fx;
        let bottom = img[(x0, y1)] * (1.0 - fx) + img[(x1, y1)] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}
