//! Deterministic synthetic depth-action datasets.
//!
//! Every sample renders an elliptical "body" at an integer depth plateau on a
//! zero background and animates it with its class's motion program. Subject
//! and trial ids perturb size, speed, start position and depth; optional
//! uniform noise is seeded per sample so generation order does not matter.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::depth_io::{DepthFrame, DepthSequence, SequenceMeta};
use crate::grid::Grid;
use crate::parallel::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionProgram {
    TranslateRight,
    /// Exact horizontal mirror of [`MotionProgram::TranslateRight`].
    TranslateLeft,
    /// Vertical sinusoidal bobbing.
    Oscillate,
    /// Expands while approaching the sensor.
    Grow,
    /// Static torso with one arm rising.
    ArmRaise,
    /// No motion at all.
    StaticPose,
}

impl MotionProgram {
    pub fn name(self) -> &'static str {
        match self {
            MotionProgram::TranslateRight => "translate-right",
            MotionProgram::TranslateLeft => "translate-left",
            MotionProgram::Oscillate => "oscillate",
            MotionProgram::Grow => "grow",
            MotionProgram::ArmRaise => "arm-raise",
            MotionProgram::StaticPose => "static",
        }
    }
}

impl fmt::Display for MotionProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionProgram {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "translate-right" | "translate" => MotionProgram::TranslateRight,
            "translate-left" => MotionProgram::TranslateLeft,
            "oscillate" => MotionProgram::Oscillate,
            "grow" => MotionProgram::Grow,
            "arm-raise" | "static-pose-with-arm-raise" => MotionProgram::ArmRaise,
            "static" | "static-pose" => MotionProgram::StaticPose,
            other => return Err(format!("unknown motion program {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    /// Class `i` (1-based action id `i + 1`) runs `classes[i]`.
    pub classes: Vec<MotionProgram>,
    pub subjects: u16,
    pub trials: u16,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Uniform noise amplitude added to foreground depths (raw units).
    pub noise: u16,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: vec![
                MotionProgram::TranslateRight,
                MotionProgram::Oscillate,
                MotionProgram::ArmRaise,
            ],
            subjects: 4,
            trials: 5,
            width: 32,
            height: 32,
            frames: 16,
            noise: 0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes.is_empty() || self.subjects == 0 || self.trials == 0 {
            return Err("classes, subjects and trials must all be >= 1".into());
        }
        if self.width < 8 || self.height < 8 {
            return Err("frames must be at least 8x8".into());
        }
        if self.frames < 2 {
            return Err("sequences need at least 2 frames".into());
        }
        Ok(())
    }

    fn metas(&self) -> Vec<(MotionProgram, SequenceMeta)> {
        let mut out = Vec::new();
        for (c, &program) in self.classes.iter().enumerate() {
            for subject in 1..=self.subjects {
                for trial in 1..=self.trials {
                    out.push((program, SequenceMeta::new(c as u16 + 1, subject, trial)));
                }
            }
        }
        out
    }
}

/// Per-sample body parameters derived from subject/trial ids.
#[derive(Clone, Copy, Debug)]
struct Body {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    depth: f64,
    speed: f64,
}

impl Body {
    fn new(spec: &SynthSpec, meta: SequenceMeta) -> Self {
        let s = meta.subject as usize - 1;
        let e = meta.trial as usize - 1;
        let (w, h) = (spec.width as f64, spec.height as f64);
        Self {
            cx: w * 0.5 + (e % 3) as f64 - 1.0,
            cy: h * 0.5 + ((e / 3) % 2) as f64,
            rx: w * (0.10 + 0.015 * (s % 3) as f64),
            ry: h * (0.25 + 0.02 * (s % 2) as f64),
            depth: 1500.0 + 40.0 * s as f64 + 10.0 * e as f64,
            speed: 0.75 + 0.25 * (s % 3) as f64,
        }
    }
}

fn fill_ellipse(grid: &mut Grid<u16>, cx: f64, cy: f64, rx: f64, ry: f64, depth: u16) {
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                grid[(x, y)] = depth;
            }
        }
    }
}

fn fill_rect(grid: &mut Grid<u16>, x0: f64, y0: f64, x1: f64, y1: f64, depth: u16) {
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let (fx, fy) = (x as f64, y as f64);
            if fx >= x0 && fx <= x1 && fy >= y0 && fy <= y1 {
                grid[(x, y)] = depth;
            }
        }
    }
}

fn render(spec: &SynthSpec, program: MotionProgram, body: Body, t: usize) -> Grid<u16> {
    let (w, h) = (spec.width, spec.height);
    let mut g = Grid::filled(w, h, 0u16);
    let tf = t as f64;
    let progress = tf / (spec.frames - 1).max(1) as f64;
    let depth = body.depth.round() as u16;
    match program {
        MotionProgram::TranslateRight | MotionProgram::TranslateLeft => {
            let start = w as f64 * 0.2;
            let cx = (start + body.speed * tf).round();
            fill_ellipse(&mut g, cx, body.cy, body.rx, body.ry, depth);
        }
        MotionProgram::Oscillate => {
            let amp = h as f64 * 0.12;
            let cy = (body.cy + amp * (2.0 * PI * body.speed * progress).sin()).round();
            fill_ellipse(&mut g, body.cx, cy, body.rx, body.ry, depth);
        }
        MotionProgram::Grow => {
            let scale = 1.0 + 0.6 * progress;
            let d = (body.depth - 300.0 * progress * body.speed).round() as u16;
            fill_ellipse(&mut g, body.cx, body.cy, body.rx * scale, body.ry * scale, d);
        }
        MotionProgram::ArmRaise => {
            fill_ellipse(&mut g, body.cx, body.cy, body.rx, body.ry, depth);
            let shoulder = body.cy - body.ry * 0.5;
            let reach = body.ry * (0.3 + 1.1 * progress);
            let x0 = body.cx + body.rx + 1.0;
            fill_rect(&mut g, x0, shoulder - reach, x0 + 1.0, shoulder, depth.saturating_sub(60));
        }
        MotionProgram::StaticPose => {
            fill_ellipse(&mut g, body.cx, body.cy, body.rx, body.ry, depth);
        }
    }
    g
}

fn sample_seed(seed: u64, meta: SequenceMeta) -> u64 {
    let key = ((meta.action as u64) << 32) | ((meta.subject as u64) << 16) | meta.trial as u64;
    seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Renders one sample.
pub fn generate_sample(spec: &SynthSpec, program: MotionProgram, meta: SequenceMeta) -> DepthSequence {
    let body = Body::new(spec, meta);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(spec.seed, meta));
    let frames = (0..spec.frames)
        .map(|t| {
            let mut g = render(spec, program, body, t);
            if program == MotionProgram::TranslateLeft {
                g = g.flip_horizontal();
            }
            if spec.noise > 0 {
                let a = spec.noise as i32;
                for v in g.as_mut_slice().iter_mut().filter(|v| **v > 0) {
                    let n: i32 = rng.gen_range(-a..=a);
                    *v = (*v as i32 + n).clamp(1, u16::MAX as i32) as u16;
                }
            }
            DepthFrame::from_grid(g).expect("non-empty frame")
        })
        .collect();
    DepthSequence::new(frames, meta).expect("spec validated: frames >= 2")
}

/// Renders the whole dataset ordered by (action, subject, trial).
pub fn generate(spec: &SynthSpec, exec: Execution) -> Result<Vec<DepthSequence>, String> {
    spec.validate()?;
    Ok(parallel::map(exec, &spec.metas(), |&(program, meta)| {
        generate_sample(spec, program, meta)
    }))
}
