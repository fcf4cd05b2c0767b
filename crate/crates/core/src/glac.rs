//! Gradient local auto-correlation (GLAC) descriptors.
//!
//! Each pixel's gradient orientation is coded as a sparse `D`-bin vector `g`
//! (linear voting between the two nearest bin centres). Per spatial cell:
//!
//! * 0th order: `F0[d] = Σ_r m(r)·g_d(r)`
//! * 1st order: `F1[p][d0][d1] = Σ_r min(m(r), m(r+b_p))·g_d0(r)·g_d1(r+b_p)`
//!   for the four displacements `b_p` in [`displacements`].
//!
//! A cell contributes `D + 4·D²` values; terms whose shifted pixel falls
//! outside the cell are skipped.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grid::{GrayImage, Grid};

#[derive(Debug, Error, PartialEq)]
pub enum GlacError {
    #[error("invalid GLAC config: {0}")]
    InvalidConfig(String),
    #[error("image {width}x{height} too small (need at least {min_width}x{min_height})")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("empty region")]
    EmptyRegion,
    #[error("region {0:?} exceeds the {1}x{2} field")]
    RegionOutOfBounds(Region, usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradientOperator {
    /// 2×2 diagonal differences rotated back onto the x/y axes.
    #[default]
    Roberts,
    Sobel,
    /// `[-1, 0, 1]` along each axis.
    Central1D,
}

impl GradientOperator {
    pub fn name(self) -> &'static str {
        match self {
            GradientOperator::Roberts => "roberts",
            GradientOperator::Sobel => "sobel",
            GradientOperator::Central1D => "central1d",
        }
    }
}

impl fmt::Display for GradientOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradientOperator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "roberts" => Ok(GradientOperator::Roberts),
            "sobel" => Ok(GradientOperator::Sobel),
            "central1d" | "central" => Ok(GradientOperator::Central1D),
            other => Err(format!("unknown gradient operator {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlacConfig {
    /// Orientation bin count `D`.
    pub bins: usize,
    /// Shift distance `Δr` in pixels.
    pub delta_r: usize,
    /// Spatial grid `(rows, cols)`.
    pub spatial_bins: (usize, usize),
    pub operator: GradientOperator,
    /// Orientations over `[0, 2π)` when true, `[0, π)` otherwise.
    pub signed: bool,
}

impl Default for GlacConfig {
    fn default() -> Self {
        Self {
            bins: 8,
            delta_r: 1,
            spatial_bins: (1, 2),
            operator: GradientOperator::Roberts,
            signed: true,
        }
    }
}

impl GlacConfig {
    pub fn validate(&self) -> Result<(), GlacError> {
        if self.bins < 2 {
            return Err(GlacError::InvalidConfig(format!(
                "bins must be >= 2, got {}",
                self.bins
            )));
        }
        if self.delta_r < 1 {
            return Err(GlacError::InvalidConfig("delta_r must be >= 1".into()));
        }
        if self.spatial_bins.0 == 0 || self.spatial_bins.1 == 0 {
            return Err(GlacError::InvalidConfig("spatial bins must be >= 1x1".into()));
        }
        Ok(())
    }

    /// `D + 4·D²`.
    pub fn cell_len(&self) -> usize {
        self.bins + 4 * self.bins * self.bins
    }

    /// `rows · cols · (D + 4·D²)`.
    pub fn descriptor_len(&self) -> usize {
        self.spatial_bins.0 * self.spatial_bins.1 * self.cell_len()
    }
}

/// The four first-order displacements `(dx, dy)`.
pub fn displacements(delta_r: usize) -> [(isize, isize); 4] {
    let r = delta_r as isize;
    [(r, 0), (0, r), (r, r), (r, -r)]
}

/// Per-pixel gradient magnitude and orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    /// `m ≥ 0`; zero where the stencil leaves the image.
    pub magnitude: Grid<f64>,
    /// Orientation in `[0, 2π)`; `0` where `m = 0`.
    pub orientation: Grid<f64>,
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.magnitude.width()
    }

    pub fn height(&self) -> usize {
        self.magnitude.height()
    }

    pub fn full_region(&self) -> Region {
        Region {
            x0: 0,
            y0: 0,
            x1: self.width(),
            y1: self.height(),
        }
    }
}

/// Wraps an angle into `[0, period)`.
pub fn wrap_angle(theta: f64, period: f64) -> f64 {
    let t = theta.rem_euclid(period);
    if t >= period {
        0.0
    } else {
        t
    }
}

fn derivatives(img: &GrayImage, op: GradientOperator, x: usize, y: usize) -> Option<(f64, f64)> {
    let (w, h) = img.dims();
    let p = |dx: isize, dy: isize| img[((x as isize + dx) as usize, (y as isize + dy) as usize)];
    match op {
        GradientOperator::Roberts => {
            if x + 1 >= w || y + 1 >= h {
                return None;
            }
            let diag = p(1, 1) - p(0, 0);
            let anti = p(1, 0) - p(0, 1);
            Some(((diag + anti) / 2.0, (diag - anti) / 2.0))
        }
        GradientOperator::Sobel => {
            if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
                return None;
            }
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            Some((gx, gy))
        }
        GradientOperator::Central1D => {
            if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
                return None;
            }
            Some((p(1, 0) - p(-1, 0), p(0, 1) - p(0, -1)))
        }
    }
}

/// Orientations are full-circle; see [`orientation_code`] for unsigned binning.
pub fn gradient_field(img: &GrayImage, op: GradientOperator) -> Result<GradientField, GlacError> {
    let (w, h) = img.dims();
    if w < 2 || h < 2 {
        return Err(GlacError::ImageTooSmall {
            width: w,
            height: h,
            min_width: 2,
            min_height: 2,
        });
    }
    let mut magnitude = Grid::filled(w, h, 0.0);
    let mut orientation = Grid::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            if let Some((gx, gy)) = derivatives(img, op, x, y) {
                let m = gx.hypot(gy);
                if m > 0.0 {
                    magnitude[(x, y)] = m;
                    orientation[(x, y)] = wrap_angle(gy.atan2(gx), 2.0 * PI);
                }
            }
        }
    }
    Ok(GradientField {
        magnitude,
        orientation,
    })
}

/// Two-bin soft vote `[(bin_a, w_a), (bin_b, w_b)]` with bin centres at
/// `k·period/D`. For `m > 0` the weights are non-negative and sum to 1;
/// for `m = 0` both weights are 0 on bin 0.
pub fn orientation_code(theta: f64, m: f64, bins: usize, signed: bool) -> [(usize, f64); 2] {
    if m <= 0.0 {
        return [(0, 0.0), (0, 0.0)];
    }
    let period = if signed { 2.0 * PI } else { PI };
    let pos = wrap_angle(theta, period) / period * bins as f64;
    let lower = pos.floor();
    let frac = pos - lower;
    let a = (lower as usize) % bins;
    let b = (a + 1) % bins;
    [(a, 1.0 - frac), (b, frac)]
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    fn contains(&self, x: isize, y: isize) -> bool {
        x >= self.x0 as isize && x < self.x1 as isize && y >= self.y0 as isize && y < self.y1 as isize
    }

    fn check(&self, field: &GradientField) -> Result<(), GlacError> {
        if self.is_empty() {
            return Err(GlacError::EmptyRegion);
        }
        if self.x1 > field.width() || self.y1 > field.height() {
            return Err(GlacError::RegionOutOfBounds(*self, field.width(), field.height()));
        }
        Ok(())
    }
}

/// Orientation codes of a whole field, computed once and shared by all cells.
struct CodedField<'a> {
    field: &'a GradientField,
    codes: Vec<[(usize, f64); 2]>,
}

impl<'a> CodedField<'a> {
    fn new(field: &'a GradientField, bins: usize, signed: bool) -> Self {
        let codes = field
            .magnitude
            .as_slice()
            .iter()
            .zip(field.orientation.as_slice())
            .map(|(&m, &t)| orientation_code(t, m, bins, signed))
            .collect();
        Self { field, codes }
    }

    fn at(&self, x: usize, y: usize) -> (f64, &[(usize, f64); 2]) {
        let i = y * self.field.width() + x;
        (self.field.magnitude.as_slice()[i], &self.codes[i])
    }

    fn zeroth(&self, region: Region, bins: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), bins);
        for y in region.y0..region.y1 {
            for x in region.x0..region.x1 {
                let (m, code) = self.at(x, y);
                if m == 0.0 {
                    continue;
                }
                for &(d, w) in code {
                    out[d] += m * w;
                }
            }
        }
    }

    fn first(&self, region: Region, bins: usize, delta_r: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), 4 * bins * bins);
        for (p, (dx, dy)) in displacements(delta_r).into_iter().enumerate() {
            let block = &mut out[p * bins * bins..(p + 1) * bins * bins];
            for y in region.y0..region.y1 {
                for x in region.x0..region.x1 {
                    let (xs, ys) = (x as isize + dx, y as isize + dy);
                    if !region.contains(xs, ys) {
                        continue;
                    }
                    let (m0, c0) = self.at(x, y);
                    let (m1, c1) = self.at(xs as usize, ys as usize);
                    let w = m0.min(m1);
                    if w == 0.0 {
                        continue;
                    }
                    for &(d0, w0) in c0 {
                        for &(d1, w1) in c1 {
                            block[d0 * bins + d1] += w * w0 * w1;
                        }
                    }
                }
            }
        }
    }
}

/// 0th-order GLAC over `region` (length `D`).
pub fn glac_0(field: &GradientField, region: Region, cfg: &GlacConfig) -> Result<Vec<f64>, GlacError> {
    cfg.validate()?;
    region.check(field)?;
    let mut out = vec![0.0; cfg.bins];
    CodedField::new(field, cfg.bins, cfg.signed).zeroth(region, cfg.bins, &mut out);
    Ok(out)
}

/// 1st-order GLAC over `region` (length `4·D²`, pattern-major then `d0`, `d1`).
pub fn glac_1(field: &GradientField, region: Region, cfg: &GlacConfig) -> Result<Vec<f64>, GlacError> {
    cfg.validate()?;
    region.check(field)?;
    let mut out = vec![0.0; 4 * cfg.bins * cfg.bins];
    CodedField::new(field, cfg.bins, cfg.signed).first(region, cfg.bins, cfg.delta_r, &mut out);
    Ok(out)
}

/// Splits `w × h` into `rows × cols` cells in row-major order; the last
/// row/column absorbs the remainder.
pub fn spatial_cells(w: usize, h: usize, (rows, cols): (usize, usize)) -> Vec<Region> {
    let (cw, ch) = (w / cols, h / rows);
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            cells.push(Region {
                x0: c * cw,
                y0: r * ch,
                x1: if c + 1 == cols { w } else { (c + 1) * cw },
                y1: if r + 1 == rows { h } else { (r + 1) * ch },
            });
        }
    }
    cells
}

/// Full descriptor of an image: `[F0; F1]` per spatial cell, cells row-major.
pub fn glac_descriptor(img: &GrayImage, cfg: &GlacConfig) -> Result<Vec<f64>, GlacError> {
    cfg.validate()?;
    let (w, h) = img.dims();
    let (rows, cols) = cfg.spatial_bins;
    if w < cols.max(2) || h < rows.max(2) {
        return Err(GlacError::ImageTooSmall {
            width: w,
            height: h,
            min_width: cols.max(2),
            min_height: rows.max(2),
        });
    }
    let field = gradient_field(img, cfg.operator)?;
    Ok(descriptor_from_field(&field, cfg))
}

fn descriptor_from_field(field: &GradientField, cfg: &GlacConfig) -> Vec<f64> {
    let coded = CodedField::new(field, cfg.bins, cfg.signed);
    let d = cfg.bins;
    let mut out = vec![0.0; cfg.descriptor_len()];
    for (cell, chunk) in spatial_cells(field.width(), field.height(), cfg.spatial_bins)
        .into_iter()
        .zip(out.chunks_mut(cfg.cell_len()))
    {
        let (f0, f1) = chunk.split_at_mut(d);
        coded.zeroth(cell, d, f0);
        coded.first(cell, d, cfg.delta_r, f1);
    }
    out
}

/// One-column CSV (`index,value`) dump of a descriptor.
pub fn descriptor_csv(desc: &[f64]) -> String {
    let mut s = String::from("index,value\n");
    for (i, v) in desc.iter().enumerate() {
        s.push_str(&format!("{i},{v:.17e}\n"));
    }
    s
}
