//! Synthetic face-mask occlusion.
//!
//! A mask is a trapezoid over the lower face, wide at the top (cheek line) and
//! narrow at the bottom (chin). Six templates differ only in how the trapezoid
//! is filled. Each record gets a template and a small positional jitter drawn
//! from its own seeded stream.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{Corpus, ImageRecord, MaskState};
use crate::imaging::GrayImage;
use crate::rng::{record_stream, Domain};

pub const TEMPLATE_COUNT: u8 = 6;
pub const MAX_JITTER: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Uniform(u8),
    /// Alternating column bands of `period` pixels.
    VerticalStripes {
        level_a: u8,
        level_b: u8,
        period: u32,
    },
    /// `base ± amplitude`, varying per pixel through a coordinate hash.
    Speckle {
        base: u8,
        amplitude: u8,
    },
    /// Linear ramp from the trapezoid's top edge to its bottom edge.
    Gradient {
        top_level: u8,
        bottom_level: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskGeometry {
    pub top_fraction: f64,
    pub bottom_fraction: f64,
    pub top_width_fraction: f64,
    pub bottom_width_fraction: f64,
}

impl Default for MaskGeometry {
    fn default() -> Self {
        Self {
            top_fraction: 0.55,
            bottom_fraction: 0.95,
            top_width_fraction: 0.90,
            bottom_width_fraction: 0.55,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("template id {0} outside 1..=6")]
    BadId(u8),
    #[error("mask geometry invalid: {0}")]
    BadGeometry(String),
    #[error("stripe period must be positive")]
    ZeroPeriod,
    #[error("record {subject}/{index} is already masked")]
    AlreadyMasked { subject: u32, index: u32 },
}

impl MaskGeometry {
    pub fn validate(&self) -> Result<(), MaskError> {
        let g = self;
        if !(g.top_fraction > 0.0 && g.top_fraction < g.bottom_fraction && g.bottom_fraction <= 1.0) {
            return Err(MaskError::BadGeometry(format!(
                "need 0 < top ({}) < bottom ({}) <= 1",
                g.top_fraction, g.bottom_fraction
            )));
        }
        for (name, w) in [
            ("top width", g.top_width_fraction),
            ("bottom width", g.bottom_width_fraction),
        ] {
            if !(w > 0.0 && w <= 1.0) {
                return Err(MaskError::BadGeometry(format!("{name} fraction {w} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskTemplate {
    pub id: u8,
    pub fill: Fill,
    pub geometry: MaskGeometry,
}

impl MaskTemplate {
    /// The six built-in templates at default geometry, ids 1..=6.
    pub fn standard(id: u8) -> Result<Self, MaskError> {
        let fill = match id {
            1 => Fill::Uniform(200),
            2 => Fill::Uniform(225),
            3 => Fill::Uniform(60),
            4 => Fill::VerticalStripes {
                level_a: 180,
                level_b: 120,
                period: 4,
            },
            5 => Fill::Speckle {
                base: 150,
                amplitude: 30,
            },
            6 => Fill::Gradient {
                top_level: 190,
                bottom_level: 110,
            },
            other => return Err(MaskError::BadId(other)),
        };
        Ok(Self {
            id,
            fill,
            geometry: MaskGeometry::default(),
        })
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        if !(1..=TEMPLATE_COUNT).contains(&self.id) {
            return Err(MaskError::BadId(self.id));
        }
        if let Fill::VerticalStripes { period: 0, .. } = self.fill {
            return Err(MaskError::ZeroPeriod);
        }
        self.geometry.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MaskJitter {
    pub dx: i32,
    pub dy: i32,
}

impl MaskJitter {
    pub fn new(dx: i32, dy: i32) -> Self {
        Self {
            dx: dx.clamp(-MAX_JITTER, MAX_JITTER),
            dy: dy.clamp(-MAX_JITTER, MAX_JITTER),
        }
    }
}

/// Trapezoid in pixel coordinates after jitter.
#[derive(Debug, Clone, Copy)]
struct Trapezoid {
    center_x: f64,
    top_y: f64,
    bottom_y: f64,
    top_half: f64,
    bottom_half: f64,
}

impl Trapezoid {
    fn new(width: usize, height: usize, g: &MaskGeometry, j: MaskJitter) -> Self {
        let (w, h) = (width as f64, height as f64);
        Self {
            center_x: w / 2.0 + j.dx as f64,
            top_y: g.top_fraction * h + j.dy as f64,
            bottom_y: g.bottom_fraction * h + j.dy as f64,
            top_half: g.top_width_fraction * w / 2.0,
            bottom_half: g.bottom_width_fraction * w / 2.0,
        }
    }

    /// Column range `[x0, x1)` of pixels whose centres lie inside, for row `y`.
    fn row_span(&self, y: usize, width: usize) -> Option<(usize, usize, f64)> {
        let yc = y as f64 + 0.5;
        if yc < self.top_y || yc > self.bottom_y {
            return None;
        }
        let t = (yc - self.top_y) / (self.bottom_y - self.top_y);
        let half = self.top_half + t * (self.bottom_half - self.top_half);
        let left = self.center_x - half;
        let right = self.center_x + half;
        // centre x + 0.5 in [left, right]
        let x0 = (left - 0.5).ceil().max(0.0);
        let x1 = ((right - 0.5).floor() + 1.0).min(width as f64);
        (x1 > x0).then_some((x0 as usize, x1 as usize, t))
    }
}

fn coordinate_hash(x: usize, y: usize) -> u32 {
    let mut z = (x as u64).wrapping_mul(0x9e3779b97f4a7c15) ^ (y as u64).wrapping_mul(0xc2b2ae3d27d4eb4f);
    z = (z ^ (z >> 29)).wrapping_mul(0xbf58476d1ce4e5b9);
    (z >> 32) as u32
}

fn fill_level(fill: &Fill, x: usize, y: usize, t: f64) -> u8 {
    match *fill {
        Fill::Uniform(level) => level,
        Fill::VerticalStripes {
            level_a,
            level_b,
            period,
        } => {
            if (x / period as usize).is_multiple_of(2) {
                level_a
            } else {
                level_b
            }
        }
        Fill::Speckle { base, amplitude } => {
            let span = 2 * amplitude as i32 + 1;
            let offset = (coordinate_hash(x, y) % span as u32) as i32 - amplitude as i32;
            (base as i32 + offset).clamp(0, 255) as u8
        }
        Fill::Gradient {
            top_level,
            bottom_level,
        } => {
            let v = top_level as f64 + t * (bottom_level as f64 - top_level as f64);
            v.round().clamp(0.0, 255.0) as u8
        }
    }
}

/// Returns a copy of `img` with every pixel whose centre falls in the jittered
/// trapezoid replaced by the template fill. Pixels outside are untouched.
pub fn apply_mask(img: &GrayImage, template: &MaskTemplate, jitter: MaskJitter) -> GrayImage {
    let (width, height) = (img.width(), img.height());
    let trap = Trapezoid::new(width, height, &template.geometry, jitter);
    let mut out = img.clone();
    let pixels = out.pixels_mut();
    for y in 0..height {
        if let Some((x0, x1, t)) = trap.row_span(y, width) {
            for x in x0..x1 {
                pixels[y * width + x] = fill_level(&template.fill, x, y, t);
            }
        }
    }
    out
}

/// Template id and jitter for one record; a pure function of its arguments.
pub fn draw_assignment(seed: u64, subject: u32, index: u32) -> (u8, MaskJitter) {
    let mut rng = record_stream(seed, Domain::Mask, subject, index);
    let id = rng.random_range(1..=TEMPLATE_COUNT);
    let dx = rng.random_range(-MAX_JITTER..=MAX_JITTER);
    let dy = rng.random_range(-MAX_JITTER..=MAX_JITTER);
    (id, MaskJitter { dx, dy })
}

/// Masks every record with the standard templates at default geometry.
pub fn mask_corpus(corpus: &Corpus, seed: u64) -> Result<Corpus, MaskError> {
    mask_corpus_with(corpus, seed, &MaskGeometry::default())
}

/// Like [`mask_corpus`], with all six templates sharing `geometry`.
pub fn mask_corpus_with(corpus: &Corpus, seed: u64, geometry: &MaskGeometry) -> Result<Corpus, MaskError> {
    geometry.validate()?;
    if let Some(r) = corpus.records().iter().find(|r| r.mask_state == MaskState::Masked) {
        return Err(MaskError::AlreadyMasked {
            subject: r.subject.0,
            index: r.index,
        });
    }
    let templates: Vec<MaskTemplate> = (1..=TEMPLATE_COUNT)
        .map(|id| MaskTemplate {
            geometry: *geometry,
            ..MaskTemplate::standard(id).expect("ids 1..=6 are valid")
        })
        .collect();

    let records: Vec<ImageRecord> = corpus
        .records()
        .par_iter()
        .map(|r| {
            let (id, jitter) = draw_assignment(seed, r.subject.0, r.index);
            ImageRecord {
                subject: r.subject,
                index: r.index,
                mask_state: MaskState::Masked,
                image: apply_mask(&r.image, &templates[(id - 1) as usize], jitter),
            }
        })
        .collect();
    Ok(Corpus::from_sorted_parts(
        records,
        corpus.subject_count(),
        corpus.images_per_subject(),
    ))
}
