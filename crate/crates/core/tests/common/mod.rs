//! Reference implementations written straight from the definitions, plus
//! seeded generators. Deliberately slow and loop-based.
#![allow(dead_code)]

use std::f64::consts::PI;

use deptrail::depth_io::{DepthFrame, DepthSequence, SequenceMeta};
use deptrail::grid::{GrayImage, Grid};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    Grid::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Blocky random depth video: background 0, a few random rectangles that
/// jitter in depth and position between frames.
pub fn random_sequence(rng: &mut ChaCha8Rng, w: usize, h: usize, t: usize) -> DepthSequence {
    let mut frames = Vec::with_capacity(t);
    let (mut bx, mut by) = (rng.gen_range(0..w / 2), rng.gen_range(0..h / 2));
    for _ in 0..t {
        bx = (bx + rng.gen_range(0..3)).min(w - 4);
        by = (by + rng.gen_range(0..2)).min(h - 4);
        let base: u16 = rng.gen_range(800..3000);
        let mut data = vec![0u16; w * h];
        for y in by..(by + h / 3).min(h) {
            for x in bx..(bx + w / 3).min(w) {
                data[y * w + x] = base + rng.gen_range(0..40);
            }
        }
        // sparse speckle
        for _ in 0..(w * h / 20) {
            let i = rng.gen_range(0..w * h);
            if rng.gen_bool(0.5) {
                data[i] = rng.gen_range(500..4000);
            }
        }
        frames.push(DepthFrame::new(w, h, data).unwrap());
    }
    DepthSequence::new(frames, SequenceMeta::new(1, 1, 1)).unwrap()
}

// ---------------------------------------------------------------- GLAC

/// Roberts-cross derivatives at every pixel; `None` on the last row/column.
fn roberts(img: &GrayImage, x: usize, y: usize) -> Option<(f64, f64)> {
    if x + 1 >= img.width() || y + 1 >= img.height() {
        return None;
    }
    let i = |x: usize, y: usize| img.as_slice()[y * img.width() + x];
    let d1 = i(x + 1, y + 1) - i(x, y);
    let d2 = i(x + 1, y) - i(x, y + 1);
    // rotate the diagonal pair back onto the x/y axes
    Some((0.5 * (d1 + d2), 0.5 * (d1 - d2)))
}

/// Soft orientation membership `g_d` for every bin `d`: a triangular kernel of
/// width one bin around the centre `2πd/D` (or `πd/D` when unsigned).
fn membership(theta: f64, bins: usize, signed: bool) -> Vec<f64> {
    let period = if signed { 2.0 * PI } else { PI };
    let step = period / bins as f64;
    (0..bins)
        .map(|d| {
            let c = d as f64 * step;
            let mut diff = (theta - c).rem_euclid(period);
            if diff > period / 2.0 {
                diff = period - diff;
            }
            (1.0 - diff / step).max(0.0)
        })
        .collect()
}

pub struct NaiveGlac {
    pub bins: usize,
    pub delta_r: usize,
    pub spatial_bins: (usize, usize),
    pub signed: bool,
}

impl NaiveGlac {
    /// `[F0; F1]` for every cell by direct summation over pixels, patterns and
    /// bin pairs.
    pub fn descriptor(&self, img: &GrayImage) -> Vec<f64> {
        let (w, h) = img.dims();
        let d = self.bins;
        let mut m = vec![vec![0.0; w]; h];
        let mut g = vec![vec![vec![0.0; d]; w]; h];
        for y in 0..h {
            for x in 0..w {
                if let Some((gx, gy)) = roberts(img, x, y) {
                    let mag = (gx * gx + gy * gy).sqrt();
                    if mag > 0.0 {
                        m[y][x] = mag;
                        g[y][x] = membership(gy.atan2(gx), d, self.signed);
                    }
                }
            }
        }
        let r = self.delta_r as isize;
        let shifts = [(r, 0), (0, r), (r, r), (r, -r)];
        let (rows, cols) = self.spatial_bins;
        let mut out = Vec::new();
        for cr in 0..rows {
            for cc in 0..cols {
                let x0 = cc * (w / cols);
                let x1 = if cc == cols - 1 { w } else { (cc + 1) * (w / cols) };
                let y0 = cr * (h / rows);
                let y1 = if cr == rows - 1 { h } else { (cr + 1) * (h / rows) };
                let inside = |x: isize, y: isize| {
                    x >= x0 as isize && x < x1 as isize && y >= y0 as isize && y < y1 as isize
                };
                for d0 in 0..d {
                    let mut s = 0.0;
                    for (mr, gr) in m[y0..y1].iter().zip(&g[y0..y1]) {
                        for x in x0..x1 {
                            s += mr[x] * gr[x][d0];
                        }
                    }
                    out.push(s);
                }
                for &(dx, dy) in &shifts {
                    for d0 in 0..d {
                        for d1 in 0..d {
                            let mut s = 0.0;
                            for y in y0..y1 {
                                for x in x0..x1 {
                                    let (xs, ys) = (x as isize + dx, y as isize + dy);
                                    if !inside(xs, ys) {
                                        continue;
                                    }
                                    let (xs, ys) = (xs as usize, ys as usize);
                                    s += m[y][x].min(m[ys][xs]) * g[y][x][d0] * g[ys][xs][d1];
                                }
                            }
                            out.push(s);
                        }
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------- MTM

pub struct NaiveMtm {
    pub zeta: [(f64, f64); 3],
    pub z_bins: usize,
}

/// `[front, side, top]` of frame `t`, with the z axis quantised over `[lo, hi]`.
fn views(frame: &DepthFrame, lo: u16, hi: u16, z_bins: usize) -> [Vec<Vec<f64>>; 3] {
    let (w, h) = (frame.width(), frame.height());
    let v = frame.values();
    let mut front = vec![vec![0.0; w]; h];
    let mut side = vec![vec![0.0; z_bins]; h];
    let mut top = vec![vec![0.0; w]; z_bins];
    for y in 0..h {
        for x in 0..w {
            let d = v[y * w + x];
            front[y][x] = d as f64;
            if d == 0 {
                continue;
            }
            let z = if hi == lo {
                0
            } else {
                let f = ((d - lo) as f64 * z_bins as f64) / (hi - lo) as f64;
                (f.floor() as usize).min(z_bins - 1)
            };
            side[y][z] = 1.0;
            top[z][x] = 1.0;
        }
    }
    [front, side, top]
}

impl NaiveMtm {
    /// `[MHI xOy, yOz, xOz, SHI xOy, yOz, xOz]`, each `rows × cols` (y-major),
    /// using `H = 1 + t_last` where `t_last` is the last frame index `t ≥ 1` at
    /// which the update between `t−1` and `t` fired, `0` if it never fired.
    pub fn histories(&self, seq: &DepthSequence) -> Vec<Vec<Vec<f64>>> {
        let nz = seq.frames().iter().flat_map(|f| f.values().iter().copied()).filter(|&d| d > 0);
        let lo = nz.clone().min().unwrap_or(0);
        let hi = nz.max().unwrap_or(0);
        let all: Vec<_> = seq.frames().iter().map(|f| views(f, lo, hi, self.z_bins)).collect();
        let mut out = Vec::new();
        for motion in [true, false] {
            for plane in 0..3 {
                let (zm, zs) = self.zeta[plane];
                let (rows, cols) = (all[0][plane].len(), all[0][plane][0].len());
                let mut hist = vec![vec![0.0; cols]; rows];
                for (r, row) in hist.iter_mut().enumerate() {
                    for (c, cell) in row.iter_mut().enumerate() {
                        for t in 1..all.len() {
                            let p = all[t - 1][plane][r][c];
                            let q = all[t][plane][r][c];
                            let fired = if motion {
                                (q - p).abs() > zm
                            } else {
                                q - (q - p).abs() > zs
                            };
                            if fired {
                                *cell = (t + 1) as f64;
                            }
                        }
                    }
                }
                out.push(hist);
            }
        }
        out
    }
}

// ---------------------------------------------------------------- CRC

/// Gradient descent on `‖s − Pβ‖² + μ‖diag(a)β‖²` with step `1/L`, `L` the
/// Lipschitz constant of the gradient (by power iteration).
pub fn crc_gradient_descent(
    p: &DMatrix<f64>,
    s: &DVector<f64>,
    a: &DVector<f64>,
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> DVector<f64> {
    let n = p.ncols();
    let hess = |v: &DVector<f64>| -> DVector<f64> {
        let pv = p * v;
        let mut out = p.transpose() * pv;
        for i in 0..n {
            out[i] += mu * a[i] * a[i] * v[i];
        }
        out * 2.0
    };
    let mut v = DVector::from_element(n, 1.0);
    let mut lip = 0.0;
    for _ in 0..500 {
        let hv = hess(&v);
        lip = hv.norm() / v.norm();
        v = hv / lip;
    }
    let step = 1.0 / (lip * 1.01);
    let rhs = p.transpose() * s * 2.0;
    let mut beta = DVector::zeros(n);
    for _ in 0..max_iter {
        let grad = hess(&beta) - &rhs;
        if grad.amax() < tol {
            break;
        }
        beta -= grad * step;
    }
    beta
}

/// `A_ii` by explicit loops over rows.
pub fn naive_tikhonov(p: &DMatrix<f64>, s: &DVector<f64>) -> Vec<f64> {
    (0..p.ncols())
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..p.nrows() {
                let d = s[i] - p[(i, j)];
                acc += d * d;
            }
            acc.sqrt()
        })
        .collect()
}

/// Closed-form 2×2 solve (Cramer's rule) of `(PᵀP + μ diag(a²)) β = Pᵀs`.
pub fn crc_two_column(p: &DMatrix<f64>, s: &DVector<f64>, a: &[f64], mu: f64) -> [f64; 2] {
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let c0: Vec<f64> = p.column(0).iter().copied().collect();
    let c1: Vec<f64> = p.column(1).iter().copied().collect();
    let sv: Vec<f64> = s.iter().copied().collect();
    let (m00, m01, m11) = (
        dot(&c0, &c0) + mu * a[0] * a[0],
        dot(&c0, &c1),
        dot(&c1, &c1) + mu * a[1] * a[1],
    );
    let (r0, r1) = (dot(&c0, &sv), dot(&c1, &sv));
    let det = m00 * m11 - m01 * m01;
    [(m11 * r0 - m01 * r1) / det, (m00 * r1 - m01 * r0) / det]
}

// ---------------------------------------------------------------- evaluation

/// Counts `(truth, pred)` pairs by scanning every cell.
pub fn tally(truths: &[usize], preds: &[usize], classes: usize) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0; classes]; classes];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = truths
                .iter()
                .zip(preds)
                .filter(|(&t, &p)| t == r + 1 && p == c + 1)
                .count() as u64;
        }
    }
    out
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .filter(|e| e.is_finite())
        .fold(0.0, f64::max)
}

/// Relative error per entry, with entries below `floor` compared absolutely.
pub fn max_entry_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
