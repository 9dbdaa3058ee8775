//! Circular local binary patterns and grid-concatenated pattern histograms.
//!
//! Neighbour `k` of a centre `(cx, cy)` sits at angle `θ = 2πk/P`, counter-clockwise
//! from +x with image y pointing down, i.e. at `(cx + R cos θ, cy − R sin θ)`.
//! Off-grid points are bilinearly interpolated. Bit `k` of the code is set when the
//! interpolated neighbour is at least the centre value.
//!
//! The comparison is evaluated on interpolated *differences* `(neighbour − centre)`,
//! which are identical integers for an image and any gray-shifted copy of it, so the
//! codes are exactly shift invariant in floating point as well.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::ImageRecord;
use crate::imaging::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    None,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LbpConfig {
    pub radius: u32,
    pub neighbors: u32,
    pub grid_x: u32,
    pub grid_y: u32,
    pub uniform: bool,
    pub normalization: Normalization,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self {
            radius: 8,
            neighbors: 24,
            grid_x: 4,
            grid_y: 4,
            uniform: true,
            normalization: Normalization::L1,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("invalid LBP configuration: {0}")]
    InvalidConfig(String),
    #[error("{width}x{height} image too small for radius {radius} with a {grid_x}x{grid_y} grid")]
    ImageTooSmall {
        width: usize,
        height: usize,
        radius: u32,
        grid_x: u32,
        grid_y: u32,
    },
}

impl LbpConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if self.radius < 1 {
            return bad("radius must be at least 1".into());
        }
        if !(4..=32).contains(&self.neighbors) {
            return bad(format!("neighbors {} outside 4..=32", self.neighbors));
        }
        if self.grid_x < 1 || self.grid_y < 1 {
            return bad("grid counts must be at least 1".into());
        }
        if !self.uniform && self.neighbors > 16 {
            return bad(format!("uniform mapping is required for {} neighbors", self.neighbors));
        }
        Ok(())
    }

    /// Each cell needs at least one interior pixel along both axes.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<(), FeatureError> {
        self.validate()?;
        let r2 = 2 * self.radius as usize;
        let fits =
            width > r2 && height > r2 && width - r2 >= self.grid_x as usize && height - r2 >= self.grid_y as usize;
        if fits {
            Ok(())
        } else {
            Err(FeatureError::ImageTooSmall {
                width,
                height,
                radius: self.radius,
                grid_x: self.grid_x,
                grid_y: self.grid_y,
            })
        }
    }

    /// Histogram bins per cell: `P(P−1)+3` with uniform mapping, `2^P` without.
    pub fn bins(&self) -> usize {
        let p = self.neighbors as usize;
        if self.uniform {
            p * (p - 1) + 3
        } else {
            1usize << p
        }
    }

    pub fn dimension(&self) -> usize {
        self.grid_x as usize * self.grid_y as usize * self.bins()
    }

    /// First 8 bytes (big-endian) of SHA-256 over the canonical description.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_string().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

impl fmt::Display for LbpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lbp radius={} neighbors={} grid={}x{} uniform={} normalization={}",
            self.radius,
            self.neighbors,
            self.grid_x,
            self.grid_y,
            self.uniform,
            match self.normalization {
                Normalization::None => "none",
                Normalization::L1 => "l1",
            }
        )
    }
}

/// Concatenated per-cell histograms, row-major over cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy)]
struct SamplePoint {
    x0: isize,
    y0: isize,
    fx: f64,
    fy: f64,
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

fn sample_point(radius: u32, neighbors: u32, k: u32) -> SamplePoint {
    let theta = std::f64::consts::TAU * k as f64 / neighbors as f64;
    let dx = snap(radius as f64 * theta.cos());
    let dy = snap(-(radius as f64) * theta.sin());
    let (x0, y0) = (dx.floor(), dy.floor());
    SamplePoint {
        x0: x0 as isize,
        y0: y0 as isize,
        fx: dx - x0,
        fy: dy - y0,
    }
}

/// Bilinear interpolation of `(pixel − centre)` around `(cx, cy) + offset`.
/// Corners with zero weight are never read.
#[inline]
fn interpolated_difference(img: &GrayImage, cx: usize, cy: usize, s: &SamplePoint) -> f64 {
    let center = img.get(cx, cy) as f64;
    let x = (cx as isize + s.x0) as usize;
    let y = (cy as isize + s.y0) as usize;
    let d = |xx: usize, yy: usize| img.get(xx, yy) as f64 - center;
    let mut acc = (1.0 - s.fx) * (1.0 - s.fy) * d(x, y);
    if s.fx > 0.0 {
        acc += s.fx * (1.0 - s.fy) * d(x + 1, y);
    }
    if s.fy > 0.0 {
        acc += (1.0 - s.fx) * s.fy * d(x, y + 1);
        if s.fx > 0.0 {
            acc += s.fx * s.fy * d(x + 1, y + 1);
        }
    }
    acc
}

fn check_interior(img: &GrayImage, cx: usize, cy: usize, radius: u32) {
    let r = radius as usize;
    assert!(
        cx >= r && cy >= r && cx + r < img.width() && cy + r < img.height(),
        "({cx}, {cy}) is closer than radius {r} to the border of a {}x{} image",
        img.width(),
        img.height()
    );
}

/// Interpolated intensity of neighbour `k`. Panics if `(cx, cy)` is not in the interior.
pub fn sample_neighbor(img: &GrayImage, cx: usize, cy: usize, k: u32, cfg: &LbpConfig) -> f64 {
    check_interior(img, cx, cy, cfg.radius);
    let s = sample_point(cfg.radius, cfg.neighbors, k % cfg.neighbors);
    img.get(cx, cy) as f64 + interpolated_difference(img, cx, cy, &s)
}

/// `P`-bit code, neighbour 0 in the least significant bit.
pub fn lbp_code_at(img: &GrayImage, cx: usize, cy: usize, cfg: &LbpConfig) -> u32 {
    check_interior(img, cx, cy, cfg.radius);
    let points: Vec<SamplePoint> = (0..cfg.neighbors)
        .map(|k| sample_point(cfg.radius, cfg.neighbors, k))
        .collect();
    code_with(img, cx, cy, &points)
}

#[inline]
fn code_with(img: &GrayImage, cx: usize, cy: usize, points: &[SamplePoint]) -> u32 {
    points.iter().enumerate().fold(0u32, |code, (k, s)| {
        if interpolated_difference(img, cx, cy, s) >= 0.0 {
            code | (1 << k)
        } else {
            code
        }
    })
}

fn circular_transitions(code: u32, p: u32) -> u32 {
    let mask = if p == 32 { u32::MAX } else { (1u32 << p) - 1 };
    let rotated = ((code >> 1) | (code << (p - 1))) & mask;
    ((code ^ rotated) & mask).count_ones()
}

/// Bin assignment for u2 uniform patterns: the `P(P−1)+2` codes with at most two
/// circular transitions get bins in ascending code order, everything else shares
/// the last bin.
#[derive(Debug, Clone)]
pub struct UniformMapper {
    neighbors: u32,
    uniform_codes: Vec<u32>,
}

impl UniformMapper {
    pub fn new(neighbors: u32) -> Self {
        assert!((1..=32).contains(&neighbors));
        let p = neighbors;
        let full = if p == 32 { u32::MAX } else { (1u32 << p) - 1 };
        let mut codes = vec![0, full];
        for len in 1..p {
            let run = (1u32 << len) - 1;
            for start in 0..p {
                let rotated = if start == 0 {
                    run
                } else {
                    ((run << start) | (run >> (p - start))) & full
                };
                codes.push(rotated);
            }
        }
        codes.sort_unstable();
        codes.dedup();
        debug_assert_eq!(codes.len(), (p * (p - 1) + 2) as usize);
        Self {
            neighbors: p,
            uniform_codes: codes,
        }
    }

    pub fn bins(&self) -> usize {
        self.uniform_codes.len() + 1
    }

    pub fn is_uniform(&self, code: u32) -> bool {
        circular_transitions(code, self.neighbors) <= 2
    }

    pub fn map(&self, code: u32) -> usize {
        if self.is_uniform(code) {
            if let Ok(pos) = self.uniform_codes.binary_search(&code) {
                return pos;
            }
        }
        self.uniform_codes.len()
    }
}

/// One-shot form of [`UniformMapper::map`].
pub fn uniform_map(code: u32, neighbors: u32) -> usize {
    UniformMapper::new(neighbors).map(code)
}

/// Reusable extractor holding the precomputed sampling pattern and bin mapping.
#[derive(Debug, Clone)]
pub struct LbpExtractor {
    cfg: LbpConfig,
    points: Vec<SamplePoint>,
    mapper: Option<UniformMapper>,
}

impl LbpExtractor {
    pub fn new(cfg: LbpConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            points: (0..cfg.neighbors)
                .map(|k| sample_point(cfg.radius, cfg.neighbors, k))
                .collect(),
            mapper: cfg.uniform.then(|| UniformMapper::new(cfg.neighbors)),
        })
    }

    pub fn config(&self) -> &LbpConfig {
        &self.cfg
    }

    pub fn extract(&self, img: &GrayImage) -> Result<FeatureVector, FeatureError> {
        let cfg = &self.cfg;
        let (w, h) = (img.width(), img.height());
        cfg.validate_for(w, h)?;
        let r = cfg.radius as usize;
        let (vw, vh) = (w - 2 * r, h - 2 * r);
        let (gx, gy) = (cfg.grid_x as usize, cfg.grid_y as usize);
        let (cell_w, cell_h) = (vw / gx, vh / gy);
        let bins = cfg.bins();

        let mut hist = vec![0.0f64; gx * gy * bins];
        for y in r..h - r {
            let row_cell = ((y - r) / cell_h).min(gy - 1);
            for x in r..w - r {
                let col_cell = ((x - r) / cell_w).min(gx - 1);
                let code = code_with(img, x, y, &self.points);
                let bin = match &self.mapper {
                    Some(m) => m.map(code),
                    None => code as usize,
                };
                hist[(row_cell * gx + col_cell) * bins + bin] += 1.0;
            }
        }
        if cfg.normalization == Normalization::L1 {
            for cell in hist.chunks_mut(bins) {
                let total: f64 = cell.iter().sum();
                if total > 0.0 {
                    cell.iter_mut().for_each(|v| *v /= total);
                }
            }
        }
        Ok(FeatureVector(hist))
    }
}

pub fn extract_features(img: &GrayImage, cfg: &LbpConfig) -> Result<FeatureVector, FeatureError> {
    LbpExtractor::new(*cfg)?.extract(img)
}

/// One row per record: `subject,index,mask_state,v0,v1,...`, no header.
pub fn features_csv(records: &[ImageRecord], features: &[FeatureVector]) -> String {
    let mut out = String::new();
    for (r, f) in records.iter().zip(features) {
        out.push_str(&format!("{},{},{}", r.subject.0, r.index, r.mask_state.as_str()));
        for v in &f.0 {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(radius: u32, neighbors: u32) -> LbpConfig {
        LbpConfig {
            radius,
            neighbors,
            grid_x: 1,
            grid_y: 1,
            uniform: neighbors > 16,
            normalization: Normalization::None,
        }
    }

    fn bilinear_oracle(patch: &[[f64; 3]; 3], x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (tx, ty) = (x - x0 as f64, y - y0 as f64);
        let at = |xx: usize, yy: usize| if xx < 3 && yy < 3 { patch[yy][xx] } else { 0.0 };
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    #[test]
    fn integer_sample_point_is_exact() {
        let pixels = (0..21 * 21).map(|i| (i * 7 % 256) as u8).collect();
        let img = GrayImage::new(21, 21, pixels).unwrap();
        let c = cfg(8, 24);
        assert_eq!(sample_neighbor(&img, 10, 10, 0, &c), img.get(18, 10) as f64);
        // k = 6 is straight up, k = 12 left, k = 18 down
        assert_eq!(sample_neighbor(&img, 10, 10, 6, &c), img.get(10, 2) as f64);
        assert_eq!(sample_neighbor(&img, 10, 10, 12, &c), img.get(2, 10) as f64);
        assert_eq!(sample_neighbor(&img, 10, 10, 18, &c), img.get(10, 18) as f64);
    }

    #[test]
    fn constant_image_samples() {
        let img = GrayImage::filled(20, 20, 77).unwrap();
        let c = cfg(3, 16);
        for k in 0..16 {
            assert_eq!(sample_neighbor(&img, 10, 10, k, &c), 77.0);
        }
        assert_eq!(lbp_code_at(&img, 10, 10, &c), (1 << 16) - 1);
    }

    #[test]
    fn diagonal_sample_matches_bilinear_oracle() {
        let patch = [[9.0, 9.0, 9.0], [0.0, 5.0, 0.0], [1.0, 1.0, 1.0]];
        let img = GrayImage::new(3, 3, vec![9, 9, 9, 0, 5, 0, 1, 1, 1]).unwrap();
        let c = cfg(1, 8);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = bilinear_oracle(&patch, 1.0 + h, 1.0 - h);
        assert!((expected - 6.792893218813452).abs() < 1e-12);
        assert!((sample_neighbor(&img, 1, 1, 1, &c) - expected).abs() < 1e-12);
    }

    #[test]
    fn code_extremes_and_shift() {
        let mut px = vec![0u8; 81];
        px[40] = 255;
        let img = GrayImage::new(9, 9, px).unwrap();
        assert_eq!(lbp_code_at(&img, 4, 4, &cfg(2, 8)), 0);

        let base: Vec<u8> = (0..400).map(|i| ((i * 37) % 200) as u8).collect();
        let shifted: Vec<u8> = base.iter().map(|v| v + 10).collect();
        let a = GrayImage::new(20, 20, base).unwrap();
        let b = GrayImage::new(20, 20, shifted).unwrap();
        let c = cfg(3, 24);
        for y in 3..17 {
            for x in 3..17 {
                assert_eq!(lbp_code_at(&a, x, y, &c), lbp_code_at(&b, x, y, &c));
            }
        }
    }

    #[test]
    fn uniform_mapping() {
        let m = UniformMapper::new(24);
        assert_eq!(m.bins(), 555);
        assert_eq!(m.map(0), 0);
        assert!(m.is_uniform((1 << 24) - 1));
        assert_eq!(m.map((1 << 24) - 1), 553);
        // alternating pattern on 8 bits: count transitions directly
        let alt = 0b0101_0101u32;
        let transitions = (0..8)
            .filter(|&i| ((alt >> i) & 1) != ((alt >> ((i + 1) % 8)) & 1))
            .count();
        assert_eq!(transitions, 8);
        assert_eq!(uniform_map(alt, 8), 8 * 7 + 2);
    }

    #[test]
    fn uniform_mapping_is_injective_on_uniform_codes() {
        let m = UniformMapper::new(8);
        let mut seen = vec![false; m.bins()];
        let mut uniform = 0;
        for code in 0..256u32 {
            let bin = m.map(code);
            assert!(bin < m.bins());
            if m.is_uniform(code) {
                uniform += 1;
                assert!(!seen[bin]);
                seen[bin] = true;
            }
        }
        assert_eq!(uniform, 58);
    }

    #[test]
    fn orl_sized_dimension_and_mass() {
        let pixels = (0..92 * 112).map(|i| ((i * 31 + i / 92 * 17) % 256) as u8).collect();
        let img = GrayImage::new(92, 112, pixels).unwrap();
        let mut c = LbpConfig::default();
        let f = extract_features(&img, &c).unwrap();
        assert_eq!(f.dim(), 8880);
        for cell in f.0.chunks(555) {
            assert!((cell.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        c.normalization = Normalization::None;
        let raw = extract_features(&img, &c).unwrap();
        assert_eq!(raw.0.iter().sum::<f64>(), 7296.0);
    }

    #[test]
    fn constant_image_has_one_bin_per_cell() {
        let img = GrayImage::filled(92, 112, 128).unwrap();
        let f = extract_features(&img, &LbpConfig::default()).unwrap();
        for cell in f.0.chunks(555) {
            let nonzero: Vec<usize> = cell
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(nonzero, vec![553]);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = LbpConfig {
            uniform: false,
            ..LbpConfig::default()
        };
        assert!(c.validate().is_err());
        c = LbpConfig {
            neighbors: 3,
            ..LbpConfig::default()
        };
        assert!(c.validate().is_err());
        let err = extract_features(&GrayImage::filled(18, 40, 0).unwrap(), &LbpConfig::default());
        assert!(matches!(err, Err(FeatureError::ImageTooSmall { .. })));
        assert!(extract_features(&GrayImage::filled(20, 20, 0).unwrap(), &LbpConfig::default()).is_ok());
        let raw8 = LbpConfig {
            radius: 1,
            neighbors: 8,
            uniform: false,
            ..LbpConfig::default()
        };
        assert_eq!(raw8.dimension(), 16 * 256);
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = LbpConfig::default();
        let b = LbpConfig { grid_x: 5, ..a };
        assert_eq!(a.fingerprint(), LbpConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
