//! Subject-labelled corpora, the five train/test splits, and a procedural
//! fixture corpus for running everything without the real face images.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imaging::{read_pgm, write_pgm, GrayImage, PgmError};
use crate::rng::{record_stream, Domain};

/// 1-based subject label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubjectId(pub u32);

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaskState {
    Unmasked,
    Masked,
}

impl MaskState {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskState::Unmasked => "unmasked",
            MaskState::Masked => "masked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub subject: SubjectId,
    /// 1-based ordinal within the subject.
    pub index: u32,
    pub mask_state: MaskState,
    pub image: GrayImage,
}

impl ImageRecord {
    /// Location relative to a corpus root, `masked/` prefixed for masked renditions.
    pub fn relative_path(&self) -> PathBuf {
        let p = PathBuf::from(format!("s{}", self.subject.0)).join(format!("{}.pgm", self.index));
        match self.mask_state {
            MaskState::Unmasked => p,
            MaskState::Masked => Path::new("masked").join(p),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("corpus not found: {0}")]
    NotFound(PathBuf),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unreadable image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: PgmError,
    },
    #[error("missing image s{subject}/{index}")]
    MissingImage { subject: u32, index: u32 },
    #[error("image s{subject}/{index} is {found_w}x{found_h}, expected {width}x{height}")]
    InconsistentDimensions {
        subject: u32,
        index: u32,
        width: usize,
        height: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("duplicate record s{subject}/{index}")]
    Duplicate { subject: u32, index: u32 },
    #[error("corpus is empty")]
    Empty,
    #[error("holdout index {holdout} outside 1..={per_subject}")]
    HoldoutOutOfRange { holdout: u32, per_subject: u32 },
    #[error("at least 3 images per subject are needed to build splits, found {0}")]
    TooFewImages(u32),
    #[error("masked and unmasked corpora disagree: {0}")]
    CorpusMismatch(String),
}

/// Every subject has exactly `images_per_subject` records, all the same size.
/// Records are kept sorted by (subject, index).
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<ImageRecord>,
    subject_count: u32,
    images_per_subject: u32,
}

impl Corpus {
    pub fn new(mut records: Vec<ImageRecord>) -> Result<Self, DatasetError> {
        let first = records.first().ok_or(DatasetError::Empty)?;
        let (width, height) = (first.image.width(), first.image.height());
        records.sort_by_key(|r| (r.subject, r.index));

        let mut per_subject: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for r in &records {
            if r.image.width() != width || r.image.height() != height {
                return Err(DatasetError::InconsistentDimensions {
                    subject: r.subject.0,
                    index: r.index,
                    width,
                    height,
                    found_w: r.image.width(),
                    found_h: r.image.height(),
                });
            }
            per_subject.entry(r.subject.0).or_default().push(r.index);
        }
        let subject_count = *per_subject.keys().next_back().unwrap_or(&0);
        let images_per_subject = per_subject.values().flat_map(|v| v.iter().copied()).max().unwrap_or(0);
        for subject in 1..=subject_count {
            let indices = per_subject.get(&subject).map(Vec::as_slice).unwrap_or(&[]);
            for (pos, &index) in indices.iter().enumerate() {
                if pos > 0 && indices[pos - 1] == index {
                    return Err(DatasetError::Duplicate { subject, index });
                }
            }
            for index in 1..=images_per_subject {
                if indices.binary_search(&index).is_err() {
                    return Err(DatasetError::MissingImage { subject, index });
                }
            }
        }
        if subject_count == 0 || images_per_subject == 0 {
            return Err(DatasetError::Empty);
        }
        Ok(Self {
            records,
            subject_count,
            images_per_subject,
        })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn subject_count(&self) -> u32 {
        self.subject_count
    }

    pub fn images_per_subject(&self) -> u32 {
        self.images_per_subject
    }

    pub fn dimensions(&self) -> (usize, usize) {
        let img = &self.records[0].image;
        (img.width(), img.height())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, subject: SubjectId, index: u32) -> Option<&ImageRecord> {
        if subject.0 == 0 || index == 0 || subject.0 > self.subject_count || index > self.images_per_subject {
            return None;
        }
        let pos = (subject.0 - 1) as usize * self.images_per_subject as usize + (index - 1) as usize;
        self.records.get(pos)
    }

    /// Replaces every record through `f`, preserving order.
    pub fn map_records<F>(&self, f: F) -> Corpus
    where
        F: Fn(&ImageRecord) -> ImageRecord,
    {
        Corpus {
            records: self.records.iter().map(f).collect(),
            subject_count: self.subject_count,
            images_per_subject: self.images_per_subject,
        }
    }

    pub(crate) fn from_sorted_parts(records: Vec<ImageRecord>, subject_count: u32, images_per_subject: u32) -> Corpus {
        Corpus {
            records,
            subject_count,
            images_per_subject,
        }
    }

    /// SHA-256 over labels, mask states and rasters, in record order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(r.subject.0.to_le_bytes());
            h.update(r.index.to_le_bytes());
            h.update([r.mask_state as u8]);
            h.update((r.image.width() as u64).to_le_bytes());
            h.update((r.image.height() as u64).to_le_bytes());
            h.update(r.image.pixels());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_prefixed(name: &str, prefix: &str, suffix: &str) -> Option<u32> {
    let digits = name.strip_prefix(prefix)?.strip_suffix(suffix)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&v| v > 0)
}

/// Loads an `s<subject>/<index>.pgm` tree. Subject and image counts come from the tree.
pub fn load_corpus(root: &Path) -> Result<Corpus, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::NotFound(root.to_path_buf()));
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };

    let mut layout: BTreeMap<u32, (PathBuf, Vec<u32>)> = BTreeMap::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name();
        let Some(subject) = name.to_str().and_then(|n| parse_prefixed(n, "s", "")) else {
            continue;
        };
        let dir = entry.path();
        if !dir.is_dir() {
            continue;
        }
        let mut indices = Vec::new();
        for file in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let file = file.map_err(io_err(&dir))?;
            if let Some(index) = file.file_name().to_str().and_then(|n| parse_prefixed(n, "", ".pgm")) {
                indices.push(index);
            }
        }
        indices.sort_unstable();
        layout.insert(subject, (dir, indices));
    }

    let subject_count = *layout.keys().next_back().ok_or(DatasetError::Empty)?;
    let per_subject = layout
        .values()
        .flat_map(|(_, v)| v.last().copied())
        .max()
        .ok_or(DatasetError::Empty)?;
    for subject in 1..=subject_count {
        let indices = layout.get(&subject).map(|(_, v)| v.as_slice()).unwrap_or(&[]);
        if let Some(index) = (1..=per_subject).find(|i| indices.binary_search(i).is_err()) {
            return Err(DatasetError::MissingImage { subject, index });
        }
    }

    let mut records = Vec::with_capacity((subject_count * per_subject) as usize);
    for (&subject, (dir, _)) in &layout {
        for index in 1..=per_subject {
            let path = dir.join(format!("{index}.pgm"));
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let image = read_pgm(&bytes).map_err(|source| DatasetError::Image { path, source })?;
            records.push(ImageRecord {
                subject: SubjectId(subject),
                index,
                mask_state: MaskState::Unmasked,
                image,
            });
        }
    }
    Corpus::new(records)
}

/// Writes each record to `root/<relative_path>`.
pub fn write_corpus(corpus: &Corpus, root: &Path) -> Result<(), DatasetError> {
    for r in corpus.records() {
        let path = root.join(r.relative_path());
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| DatasetError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, write_pgm(&r.image)).map_err(|source| DatasetError::Io { path, source })?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitName {
    TrainingUm,
    TrainingHm,
    TrainingM,
    TestingUm,
    TestingM,
}

impl SplitName {
    pub const ALL: [SplitName; 5] = [
        SplitName::TrainingUm,
        SplitName::TrainingHm,
        SplitName::TrainingM,
        SplitName::TestingUm,
        SplitName::TestingM,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::TrainingUm => "Training_UM",
            SplitName::TrainingHm => "Training_HM",
            SplitName::TrainingM => "Training_M",
            SplitName::TestingUm => "Testing_UM",
            SplitName::TestingM => "Testing_M",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub records: Vec<ImageRecord>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub training_um: DatasetSplit,
    pub training_hm: DatasetSplit,
    pub training_m: DatasetSplit,
    pub testing_um: DatasetSplit,
    pub testing_m: DatasetSplit,
    pub holdout_index: u32,
}

impl SplitSet {
    pub fn get(&self, name: SplitName) -> &DatasetSplit {
        match name {
            SplitName::TrainingUm => &self.training_um,
            SplitName::TrainingHm => &self.training_hm,
            SplitName::TrainingM => &self.training_m,
            SplitName::TestingUm => &self.testing_um,
            SplitName::TestingM => &self.testing_m,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatasetSplit> {
        SplitName::ALL.into_iter().map(move |n| self.get(n))
    }

    /// `split_name,subject,index,mask_state,path` rows, header first.
    pub fn manifest_csv(&self) -> String {
        let mut out = String::from("split_name,subject,index,mask_state,path\n");
        for split in self.iter() {
            for r in &split.records {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    split.name.as_str(),
                    r.subject.0,
                    r.index,
                    r.mask_state.as_str(),
                    r.relative_path().display()
                ));
            }
        }
        out
    }
}

/// Derives the five splits from an unmasked corpus and its record-for-record masked rendition.
///
/// Per subject, the remaining (non-holdout) indices in ascending order feed the
/// half-masked set: the first `k` as masked renditions, the next `k` as unmasked
/// originals, with `k = (P - 1) / 2`. Anything left over is dropped; for P = 10 that
/// is 4 masked + 4 unmasked with the ninth remaining index unused.
pub fn build_splits(unmasked: &Corpus, masked: &Corpus, holdout_index: u32) -> Result<SplitSet, DatasetError> {
    let per_subject = unmasked.images_per_subject();
    if holdout_index == 0 || holdout_index > per_subject {
        return Err(DatasetError::HoldoutOutOfRange {
            holdout: holdout_index,
            per_subject,
        });
    }
    if per_subject < 3 {
        return Err(DatasetError::TooFewImages(per_subject));
    }
    if masked.subject_count() != unmasked.subject_count() || masked.images_per_subject() != per_subject {
        return Err(DatasetError::CorpusMismatch(format!(
            "{}x{} unmasked vs {}x{} masked",
            unmasked.subject_count(),
            per_subject,
            masked.subject_count(),
            masked.images_per_subject()
        )));
    }
    if unmasked.dimensions() != masked.dimensions() {
        return Err(DatasetError::CorpusMismatch("image dimensions differ".into()));
    }
    if let Some(r) = unmasked.records().iter().find(|r| r.mask_state != MaskState::Unmasked) {
        return Err(DatasetError::CorpusMismatch(format!(
            "{}/{} in the unmasked corpus is masked",
            r.subject, r.index
        )));
    }
    if let Some(r) = masked.records().iter().find(|r| r.mask_state != MaskState::Masked) {
        return Err(DatasetError::CorpusMismatch(format!(
            "{}/{} in the masked corpus is unmasked",
            r.subject, r.index
        )));
    }

    let half = ((per_subject - 1) / 2) as usize;
    let split = |name| DatasetSplit {
        name,
        records: Vec::new(),
    };
    let mut set = SplitSet {
        training_um: split(SplitName::TrainingUm),
        training_hm: split(SplitName::TrainingHm),
        training_m: split(SplitName::TrainingM),
        testing_um: split(SplitName::TestingUm),
        testing_m: split(SplitName::TestingM),
        holdout_index,
    };
    for s in 1..=unmasked.subject_count() {
        let subject = SubjectId(s);
        // Both corpora are complete, so lookups cannot fail.
        let um = |i| unmasked.get(subject, i).expect("complete corpus").clone();
        let m = |i| masked.get(subject, i).expect("complete corpus").clone();

        set.testing_um.records.push(um(holdout_index));
        set.testing_m.records.push(m(holdout_index));
        let remaining: Vec<u32> = (1..=per_subject).filter(|&i| i != holdout_index).collect();
        for &i in &remaining {
            set.training_um.records.push(um(i));
            set.training_m.records.push(m(i));
        }
        set.training_hm.records.extend(remaining[..half].iter().map(|&i| m(i)));
        set.training_hm
            .records
            .extend(remaining[half..2 * half].iter().map(|&i| um(i)));
    }
    Ok(set)
}

#[derive(Debug, Clone)]
struct FaceStyle {
    head_rx: f64,
    head_ry: f64,
    skin: f64,
    hair_line: f64,
    hair_period: f64,
    eye_dx: f64,
    eye_y: f64,
    eye_r: f64,
    brow_gap: f64,
    brow_h: f64,
    mouth_y: f64,
    mouth_w: f64,
    mouth_h: f64,
    mouth_level: f64,
    /// (cycles across width, cycles down height, phase, amplitude)
    texture: [(f64, f64, f64, f64); 2],
}

impl FaceStyle {
    fn draw<R: Rng>(rng: &mut R) -> Self {
        let mut texture = [(0.0, 0.0, 0.0, 0.0); 2];
        for t in &mut texture {
            *t = (
                rng.random_range(2.0..14.0),
                rng.random_range(2.0..14.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(8.0..20.0),
            );
        }
        Self {
            head_rx: rng.random_range(0.33..0.44),
            head_ry: rng.random_range(0.38..0.46),
            skin: rng.random_range(110.0..180.0),
            hair_line: rng.random_range(0.16..0.30),
            hair_period: rng.random_range(2.5..7.0),
            eye_dx: rng.random_range(0.13..0.20),
            eye_y: rng.random_range(0.36..0.44),
            eye_r: rng.random_range(0.05..0.08),
            brow_gap: rng.random_range(0.04..0.08),
            brow_h: rng.random_range(0.015..0.035),
            mouth_y: rng.random_range(0.68..0.76),
            mouth_w: rng.random_range(0.16..0.30),
            mouth_h: rng.random_range(0.02..0.05),
            mouth_level: rng.random_range(40.0..90.0),
            texture,
        }
    }

    fn intensity(&self, u: f64, v: f64, w: f64, h: f64) -> f64 {
        let background = 45.0 + 25.0 * v;
        let head = ((u - 0.5) / self.head_rx).powi(2) + ((v - 0.52) / self.head_ry).powi(2);
        if head > 1.0 {
            return background;
        }
        if v < self.hair_line {
            let stripe = ((u * w / self.hair_period).floor() as i64).rem_euclid(2) as f64;
            return 35.0 + 18.0 * stripe;
        }
        let mut level = self.skin;
        for &(fx, fy, phase, amp) in &self.texture {
            level += amp * (std::f64::consts::TAU * (fx * u + fy * v) + phase).sin();
        }
        let aspect = w / h;
        for side in [-1.0, 1.0] {
            let ex = 0.5 + side * self.eye_dx;
            let de = ((u - ex) / self.eye_r).powi(2) + ((v - self.eye_y) / (0.6 * self.eye_r * aspect)).powi(2);
            if de <= 1.0 {
                return 25.0 + 30.0 * de;
            }
            let brow_y = self.eye_y - self.brow_gap;
            if (u - ex).abs() <= 1.2 * self.eye_r && (v - brow_y).abs() <= self.brow_h / 2.0 {
                return 40.0;
            }
        }
        if (u - 0.5).abs() <= 0.012 && v > self.eye_y && v < self.mouth_y - 0.08 {
            level -= 30.0;
        }
        if (u - 0.5).abs() <= self.mouth_w / 2.0 && (v - self.mouth_y).abs() <= self.mouth_h / 2.0 {
            return self.mouth_level;
        }
        level
    }
}

/// Deterministic procedural faces. Each subject gets a fixed style (head shape,
/// skin texture, eye/brow/mouth geometry); each image adds a seeded shift,
/// gain/offset change and pixel noise.
pub fn generate_fixture_corpus(seed: u64, subjects: u32, per_subject: u32, width: usize, height: usize) -> Corpus {
    assert!(
        subjects > 0 && per_subject > 0 && width > 0 && height > 0,
        "fixture counts must be positive"
    );
    let (w, h) = (width as f64, height as f64);
    let mut records = Vec::with_capacity((subjects * per_subject) as usize);
    for s in 1..=subjects {
        let style = FaceStyle::draw(&mut record_stream(seed, Domain::FixtureSubject, s, 0));
        for i in 1..=per_subject {
            let mut rng = record_stream(seed, Domain::FixtureImage, s, i);
            let dx = rng.random_range(-2.0..=2.0);
            let dy = rng.random_range(-2.0..=2.0);
            let gain = rng.random_range(0.9..1.1);
            let offset = rng.random_range(-12.0..12.0);
            let mut pixels = Vec::with_capacity(width * height);
            for y in 0..height {
                for x in 0..width {
                    let u = (x as f64 + 0.5 - dx) / w;
                    let v = (y as f64 + 0.5 - dy) / h;
                    let noise = rng.random_range(-4.0..=4.0);
                    let value = gain * style.intensity(u, v, w, h) + offset + noise;
                    pixels.push(value.round().clamp(0.0, 255.0) as u8);
                }
            }
            records.push(ImageRecord {
                subject: SubjectId(s),
                index: i,
                mask_state: MaskState::Unmasked,
                image: GrayImage::new(width, height, pixels).expect("dimensions are positive"),
            });
        }
    }
    Corpus::from_sorted_parts(records, subjects, per_subject)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;

    fn masked_copy(c: &Corpus) -> Corpus {
        c.map_records(|r| ImageRecord {
            mask_state: MaskState::Masked,
            ..r.clone()
        })
    }

    fn tiny_corpus(subjects: u32, per: u32) -> Corpus {
        let records = (1..=subjects)
            .flat_map(|s| {
                (1..=per).map(move |i| ImageRecord {
                    subject: SubjectId(s),
                    index: i,
                    mask_state: MaskState::Unmasked,
                    image: GrayImage::filled(3, 3, (s * 10 + i) as u8).unwrap(),
                })
            })
            .collect();
        Corpus::new(records).unwrap()
    }

    #[test]
    fn fixture_is_deterministic_and_seed_sensitive() {
        let a = generate_fixture_corpus(1, 4, 10, 92, 112);
        let b = generate_fixture_corpus(1, 4, 10, 92, 112);
        let c = generate_fixture_corpus(2, 4, 10, 92, 112);
        assert_eq!(a.len(), 40);
        assert_eq!(a, b);
        assert_ne!(a.records()[0].image, c.records()[0].image);
    }

    #[test]
    fn orl_sized_split_cardinalities() {
        let um = tiny_corpus(41, 10);
        let set = build_splits(&um, &masked_copy(&um), 10).unwrap();
        let sizes: Vec<usize> = set.iter().map(DatasetSplit::len).collect();
        assert_eq!(sizes, vec![369, 328, 369, 41, 41]);
    }

    #[test]
    fn fixture_split_cardinalities() {
        let um = tiny_corpus(4, 10);
        let set = build_splits(&um, &masked_copy(&um), 10).unwrap();
        assert_eq!(set.training_um.len(), 36);
        assert_eq!(set.training_hm.len(), 32);
        assert_eq!(set.training_m.len(), 36);
        assert_eq!(set.testing_um.len(), 4);
        assert_eq!(set.testing_m.len(), 4);
    }

    #[test]
    fn half_masked_assignment_rule() {
        let um = tiny_corpus(2, 10);
        let set = build_splits(&um, &masked_copy(&um), 10).unwrap();
        let s1: Vec<(u32, MaskState)> = set
            .training_hm
            .records
            .iter()
            .filter(|r| r.subject == SubjectId(1))
            .map(|r| (r.index, r.mask_state))
            .collect();
        let expected: Vec<(u32, MaskState)> = (1..=4)
            .map(|i| (i, MaskState::Masked))
            .chain((5..=8).map(|i| (i, MaskState::Unmasked)))
            .collect();
        assert_eq!(s1, expected);
    }

    #[test]
    fn holdout_out_of_range() {
        let um = tiny_corpus(2, 10);
        assert!(matches!(
            build_splits(&um, &masked_copy(&um), 11),
            Err(DatasetError::HoldoutOutOfRange {
                holdout: 11,
                per_subject: 10
            })
        ));
        assert!(build_splits(&um, &masked_copy(&um), 0).is_err());
    }

    #[test]
    fn mismatched_corpora_rejected() {
        let um = tiny_corpus(2, 10);
        let other = masked_copy(&tiny_corpus(3, 10));
        assert!(matches!(
            build_splits(&um, &other, 10),
            Err(DatasetError::CorpusMismatch(_))
        ));
        assert!(matches!(
            build_splits(&um, &um, 10),
            Err(DatasetError::CorpusMismatch(_))
        ));
    }

    #[test]
    fn corpus_rejects_gaps_and_size_mismatch() {
        let mut records = tiny_corpus(2, 3).records().to_vec();
        records.retain(|r| !(r.subject == SubjectId(2) && r.index == 2));
        assert!(matches!(
            Corpus::new(records),
            Err(DatasetError::MissingImage { subject: 2, index: 2 })
        ));
        let mut records = tiny_corpus(2, 3).records().to_vec();
        records[4].image = GrayImage::filled(4, 3, 0).unwrap();
        assert!(matches!(
            Corpus::new(records),
            Err(DatasetError::InconsistentDimensions { .. })
        ));
    }

    #[test]
    fn manifest_lists_every_record() {
        let um = tiny_corpus(2, 4);
        let set = build_splits(&um, &masked_copy(&um), 4).unwrap();
        let csv = set.manifest_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "split_name,subject,index,mask_state,path");
        // P = 4 leaves 3 training indices per subject: 6 UM + 4 HM + 6 M + 2 + 2
        assert_eq!(lines.len() - 1, 20);
        assert!(lines.contains(&"Testing_M,2,4,masked,masked/s2/4.pgm"));
        assert!(lines.contains(&"Training_UM,1,1,unmasked,s1/1.pgm"));
    }

    #[test]
    fn corpus_lookup() {
        let c = tiny_corpus(3, 4);
        let r = c.get(SubjectId(2), 3).unwrap();
        assert_eq!((r.subject, r.index), (SubjectId(2), 3));
        assert!(c.get(SubjectId(4), 1).is_none());
    }
}
