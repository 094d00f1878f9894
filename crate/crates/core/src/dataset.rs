//! Image collections, subject sampling, train/test splits and the synthetic
//! face generator.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{self, EyePoint, GrayImage, CANONICAL_LEFT_EYE, CANONICAL_RIGHT_EYE};
use crate::rng::{self, Stream};

/// Header every manifest must start with.
pub const MANIFEST_HEADER: [&str; 7] = [
    "subject_id",
    "gender",
    "image_path",
    "eye_left_row",
    "eye_left_col",
    "eye_right_row",
    "eye_right_col",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
        })
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" => Ok(Gender::Female),
            "M" => Ok(Gender::Male),
            other => Err(Error::invalid(format!("gender must be M or F, got {other:?}"))),
        }
    }
}

/// Where an image's pixels come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Path(PathBuf),
    Pixels(Arc<GrayImage>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    subject_id: String,
    gender: Gender,
    source: ImageSource,
    eyes: Option<(EyePoint, EyePoint)>,
}

impl ImageRecord {
    pub fn new(
        subject_id: impl Into<String>,
        gender: Gender,
        source: ImageSource,
        eyes: Option<(EyePoint, EyePoint)>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if subject_id.is_empty() {
            return Err(Error::invalid("subject_id must be non-empty"));
        }
        if let Some((l, r)) = eyes {
            if l == r {
                return Err(Error::invalid(format!("subject {subject_id}: eye coordinates coincide")));
            }
        }
        Ok(ImageRecord {
            subject_id,
            gender,
            source,
            eyes,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn gender(&self) -> Gender {
        self.gender
    }

    pub fn source(&self) -> &ImageSource {
        &self.source
    }

    pub fn eyes(&self) -> Option<(EyePoint, EyePoint)> {
        self.eyes
    }

    /// Short identifier used in exported matrices and predictions.
    pub fn label(&self) -> String {
        match &self.source {
            ImageSource::Path(p) => p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            ImageSource::Pixels(_) => String::new(),
        }
    }

    pub fn load_image(&self) -> Result<GrayImage> {
        match &self.source {
            ImageSource::Path(p) => preprocess::read_pgm(p),
            ImageSource::Pixels(img) => Ok((**img).clone()),
        }
    }

    /// Loads and canonicalizes (align when eyes are present, then equalize).
    pub fn canonical_face(&self) -> Result<GrayImage> {
        preprocess::canonicalize(&self.load_image()?, self.eyes)
    }
}

#[derive(Debug, Clone)]
struct SubjectEntry {
    id: String,
    gender: Gender,
    positions: Vec<usize>,
}

/// Ordered records plus a subject index (subjects in order of first appearance).
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    records: Vec<ImageRecord>,
    subjects: Vec<SubjectEntry>,
    lookup: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(records: Vec<ImageRecord>) -> Result<Self> {
        let mut subjects: Vec<SubjectEntry> = Vec::new();
        let mut lookup = HashMap::new();
        for (pos, rec) in records.iter().enumerate() {
            match lookup.get(&rec.subject_id) {
                Some(&s) => {
                    let entry: &mut SubjectEntry = &mut subjects[s];
                    if entry.gender != rec.gender {
                        return Err(Error::invalid(format!(
                            "subject {} has records with both genders",
                            rec.subject_id
                        )));
                    }
                    entry.positions.push(pos);
                }
                None => {
                    lookup.insert(rec.subject_id.clone(), subjects.len());
                    subjects.push(SubjectEntry {
                        id: rec.subject_id.clone(),
                        gender: rec.gender,
                        positions: vec![pos],
                    });
                }
            }
        }
        Ok(Dataset {
            records,
            subjects,
            lookup,
        })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subject_ids(&self) -> impl Iterator<Item = &str> {
        self.subjects.iter().map(|s| s.id.as_str())
    }

    pub fn subject_gender(&self, id: &str) -> Option<Gender> {
        self.lookup.get(id).map(|&s| self.subjects[s].gender)
    }

    /// Record positions of one subject, in dataset order.
    pub fn positions(&self, id: &str) -> Option<&[usize]> {
        self.lookup.get(id).map(|&s| self.subjects[s].positions.as_slice())
    }

    pub fn count_gender(&self, gender: Gender) -> usize {
        self.subjects.iter().filter(|s| s.gender == gender).count()
    }

    fn from_positions(&self, mut keep: Vec<usize>) -> Dataset {
        keep.sort_unstable();
        let records = keep.into_iter().map(|p| self.records[p].clone()).collect();
        Dataset::new(records).expect("subset of a valid dataset is valid")
    }
}

fn parse_coord(field: &str, line: u64, name: &str) -> Result<Option<f64>> {
    let t = field.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::Manifest {
            line,
            message: format!("{name} is not a number: {t:?}"),
        })
}

/// Reads a manifest CSV. Relative image paths resolve against the manifest's
/// directory; eye columns must be all present or all empty.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != MANIFEST_HEADER {
        return Err(Error::Manifest {
            line: 1,
            message: format!("header must be {}, got {}", MANIFEST_HEADER.join(","), found.join(",")),
        });
    }

    let mut records = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Manifest { line, message };
        if row.len() != MANIFEST_HEADER.len() {
            return Err(bad(format!("expected {} columns, found {}", MANIFEST_HEADER.len(), row.len())));
        }
        let subject = row[0].trim();
        if subject.is_empty() {
            return Err(bad("empty subject_id".into()));
        }
        let gender: Gender = row[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("gender must be M or F, got {:?}", row[1].trim())))?;
        let image = row[2].trim();
        if image.is_empty() {
            return Err(bad("empty image_path".into()));
        }
        if !seen.insert((subject.to_string(), image.to_string())) {
            return Err(bad(format!("duplicate (subject_id, image_path) pair ({subject}, {image})")));
        }
        let coords = [
            parse_coord(&row[3], line, "eye_left_row")?,
            parse_coord(&row[4], line, "eye_left_col")?,
            parse_coord(&row[5], line, "eye_right_row")?,
            parse_coord(&row[6], line, "eye_right_col")?,
        ];
        let eyes = match coords {
            [Some(lr), Some(lc), Some(rr), Some(rc)] => {
                let (l, r) = (EyePoint::new(lr, lc), EyePoint::new(rr, rc));
                if l == r {
                    return Err(bad("eye coordinates coincide".into()));
                }
                Some((l, r))
            }
            [None, None, None, None] => None,
            _ => return Err(bad("eye coordinates must be all present or all empty".into())),
        };
        let image_path = Path::new(image);
        let resolved = if image_path.is_absolute() {
            image_path.to_path_buf()
        } else {
            base.join(image_path)
        };
        records.push(ImageRecord::new(subject, gender, ImageSource::Path(resolved), eyes).map_err(|e| bad(e.to_string()))?);
    }
    Dataset::new(records).map_err(|e| Error::Manifest {
        line: 0,
        message: e.to_string(),
    })
}

/// Writes a manifest listing each record with the image path given alongside
/// it. Relative paths are resolved against the manifest's directory on load.
pub fn write_manifest(records: &[(ImageRecord, PathBuf)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    let fmt = |v: f64| format!("{v}");
    for (rec, image_path) in records {
        let (a, b, c, d) = match rec.eyes {
            Some((l, r)) => (fmt(l.row), fmt(l.col), fmt(r.row), fmt(r.col)),
            None => Default::default(),
        };
        w.write_record([
            rec.subject_id.as_str(),
            rec.gender.code(),
            &image_path.to_string_lossy(),
            &a,
            &b,
            &c,
            &d,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Canonical faces of `records` as rows of an `n x 4200` matrix.
pub fn face_matrix(records: &[ImageRecord]) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = records
        .par_iter()
        .map(|r| preprocess::to_feature_vector(&r.canonical_face()?))
        .collect::<Result<_>>()?;
    let mut x = Array2::zeros((rows.len(), preprocess::FACE_DIM));
    for (mut dst, src) in x.rows_mut().into_iter().zip(&rows) {
        dst.assign(&ndarray::ArrayView1::from(src));
    }
    Ok(x)
}

/// Keeps only subjects with at least `k` records (record order preserved).
pub fn filter_min_images(d: &Dataset, k: usize) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::invalid("minimum image count must be at least 1"));
    }
    let keep = d
        .subjects
        .iter()
        .filter(|s| s.positions.len() >= k)
        .flat_map(|s| s.positions.iter().copied())
        .collect();
    Ok(d.from_positions(keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub n_female: usize,
    pub n_male: usize,
    pub images_per_subject: usize,
    pub seed: u64,
}

/// Draws `n_female` + `n_male` subjects uniformly without replacement from
/// those with enough images, then `images_per_subject` images from each.
/// Subjects and images keep their dataset order in the output.
pub fn sample_subjects(d: &Dataset, spec: &SamplingSpec) -> Result<Dataset> {
    if spec.images_per_subject < 2 {
        return Err(Error::invalid("images_per_subject must be at least 2 to admit a split"));
    }
    let mut subject_rng = rng::stream(spec.seed, Stream::SubjectSampling);
    let mut chosen: Vec<usize> = Vec::new();
    for (gender, needed) in [(Gender::Female, spec.n_female), (Gender::Male, spec.n_male)] {
        let eligible: Vec<usize> = d
            .subjects
            .iter()
            .enumerate()
            .filter(|(_, s)| s.gender == gender && s.positions.len() >= spec.images_per_subject)
            .map(|(i, _)| i)
            .collect();
        if eligible.len() < needed {
            return Err(Error::InsufficientSubjects {
                gender,
                needed,
                available: eligible.len(),
                images_per_subject: spec.images_per_subject,
            });
        }
        let picks = index::sample(&mut subject_rng, eligible.len(), needed);
        chosen.extend(picks.into_iter().map(|i| eligible[i]));
    }
    chosen.sort_unstable();

    let mut image_rng = rng::stream(spec.seed, Stream::ImageSampling);
    let mut keep = Vec::with_capacity(chosen.len() * spec.images_per_subject);
    for s in chosen {
        let positions = &d.subjects[s].positions;
        if positions.len() == spec.images_per_subject {
            keep.extend_from_slice(positions);
        } else {
            let picks = index::sample(&mut image_rng, positions.len(), spec.images_per_subject);
            keep.extend(picks.into_iter().map(|i| positions[i]));
        }
    }
    Ok(d.from_positions(keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitRatio {
    #[serde(rename = "9:1")]
    R9_1,
    #[serde(rename = "5:5")]
    R5_5,
}

impl SplitRatio {
    /// (train, test) parts out of ten.
    pub fn parts(self) -> (usize, usize) {
        match self {
            SplitRatio::R9_1 => (9, 1),
            SplitRatio::R5_5 => (5, 5),
        }
    }

    /// Train/test counts for a subject with `count` images, if the ratio divides it.
    pub fn counts(self, count: usize) -> Option<(usize, usize)> {
        let (tr, te) = self.parts();
        let unit = tr + te;
        if count == 0 || count % unit != 0 {
            return None;
        }
        let k = count / unit;
        Some((tr * k, te * k))
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRatio::R9_1 => "9:1",
            SplitRatio::R5_5 => "5:5",
        })
    }
}

impl FromStr for SplitRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "9:1" => Ok(SplitRatio::R9_1),
            "5:5" => Ok(SplitRatio::R5_5),
            _ => Err(Error::invalid("ratio must be 9:1 or 5:5")),
        }
    }
}

/// Per-subject train/test partition. `train_positions`/`test_positions` index
/// into the dataset the split was made from.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
    pub train_positions: Vec<usize>,
    pub test_positions: Vec<usize>,
    pub ratio: SplitRatio,
}

pub fn split_train_test(d: &Dataset, ratio: SplitRatio, seed: u64) -> Result<Split> {
    let mut rng = rng::stream(seed, Stream::Split);
    let mut train_positions = Vec::new();
    let mut test_positions = Vec::new();
    for s in &d.subjects {
        let (_, n_test) = ratio.counts(s.positions.len()).ok_or_else(|| Error::SplitCount {
            subject: s.id.clone(),
            count: s.positions.len(),
            ratio: ratio.to_string(),
        })?;
        let mut order = s.positions.clone();
        order.shuffle(&mut rng);
        let (test, train) = order.split_at(n_test);
        let mut test = test.to_vec();
        let mut train = train.to_vec();
        test.sort_unstable();
        train.sort_unstable();
        test_positions.extend(test);
        train_positions.extend(train);
    }
    train_positions.sort_unstable();
    test_positions.sort_unstable();
    Ok(Split {
        train: train_positions.iter().map(|&p| d.records[p].clone()).collect(),
        test: test_positions.iter().map(|&p| d.records[p].clone()).collect(),
        train_positions,
        test_positions,
        ratio,
    })
}

/// Parameters of the procedural face generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_female: usize,
    pub n_male: usize,
    pub images_per_subject: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub intra_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// 600 subjects (100 F, 500 M) x 10 images of 70x60 with noise 20: large
    /// enough for every experiment protocol's pool requirements.
    fn default() -> Self {
        SyntheticSpec {
            n_female: 100,
            n_male: 500,
            images_per_subject: 10,
            image_height: preprocess::FACE_HEIGHT,
            image_width: preprocess::FACE_WIDTH,
            intra_noise: 20.0,
            seed: 0,
        }
    }
}

/// Number of cosine frequencies per axis in a synthetic base face.
const BASIS_FREQS: usize = 10;
/// Mean grey level of a synthetic face.
const BASE_LEVEL: f64 = 128.0;
/// Std-dev (grey levels) of the coefficient of frequency (u, v) is
/// `COEF_SCALE / (1 + u + v)`.
const COEF_SCALE: f64 = 24.0;
/// Shift applied to the (0,1) and (1,0) coefficient means: +shift for female,
/// -shift for male subjects.
const GENDER_SHIFT: f64 = 20.0;
/// Std-dev of the per-image illumination gradients, as a multiple of
/// `intra_noise`.
const ILLUMINATION_SCALE: f64 = 3.0;

fn cosine_pattern(u: usize, v: usize, r: usize, c: usize, h: usize, w: usize) -> f64 {
    (PI * u as f64 * (r as f64 + 0.5) / h as f64).cos() * (PI * v as f64 * (c as f64 + 0.5) / w as f64).cos()
}

/// Linear ramp over `n` pixels from -1 to 1 (pixel centres).
fn ramp(i: usize, n: usize) -> f64 {
    2.0 * (i as f64 + 0.5) / n as f64 - 1.0
}

/// Generates a dataset of procedural faces. Each subject's base face is a sum
/// of low-frequency 2-D cosine patterns with coefficients drawn from a stream
/// keyed by the subject index; two coefficient means depend on gender. Each
/// image adds a random horizontal and vertical illumination gradient and
/// i.i.d. Gaussian pixel noise of std-dev `intra_noise`, then is clamped to
/// [0, 255]. Eyes are reported at the canonical positions scaled
/// to the image size. Subject ids are `F0000`, ... then `M0000`, ...
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let (h, w) = (spec.image_height, spec.image_width);
    if h < 8 || w < 8 {
        return Err(Error::invalid(format!("synthetic images must be at least 8x8, got {h}x{w}")));
    }
    if !(spec.intra_noise >= 0.0) || !spec.intra_noise.is_finite() {
        return Err(Error::invalid("intra_noise must be a finite value >= 0"));
    }
    if spec.images_per_subject == 0 {
        return Err(Error::invalid("images_per_subject must be at least 1"));
    }
    let noise = Normal::new(0.0, spec.intra_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let sy = h as f64 / preprocess::FACE_HEIGHT as f64;
    let sx = w as f64 / preprocess::FACE_WIDTH as f64;
    let eyes = (
        EyePoint::new(CANONICAL_LEFT_EYE.row * sy, CANONICAL_LEFT_EYE.col * sx),
        EyePoint::new(CANONICAL_RIGHT_EYE.row * sy, CANONICAL_RIGHT_EYE.col * sx),
    );

    let patterns: Vec<((usize, usize), Vec<f64>)> = (0..BASIS_FREQS)
        .flat_map(|u| (0..BASIS_FREQS).map(move |v| (u, v)))
        .filter(|&(u, v)| (u, v) != (0, 0))
        .map(|(u, v)| {
            let mut p = Vec::with_capacity(h * w);
            for r in 0..h {
                for c in 0..w {
                    p.push(cosine_pattern(u, v, r, c, h, w));
                }
            }
            ((u, v), p)
        })
        .collect();

    let subjects = (0..spec.n_female)
        .map(|i| (Gender::Female, i))
        .chain((0..spec.n_male).map(|i| (Gender::Male, i)));
    let mut records = Vec::with_capacity((spec.n_female + spec.n_male) * spec.images_per_subject);
    for (ordinal, (gender, i)) in subjects.enumerate() {
        let mut rng = rng::indexed_stream(spec.seed, Stream::Synthetic, ordinal as u64);
        let shift = match gender {
            Gender::Female => GENDER_SHIFT,
            Gender::Male => -GENDER_SHIFT,
        };
        let mut base = vec![BASE_LEVEL; h * w];
        for ((u, v), pattern) in &patterns {
            let sd = COEF_SCALE / (1 + u + v) as f64;
            let mean = if (*u, *v) == (0, 1) || (*u, *v) == (1, 0) { shift } else { 0.0 };
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let coef = mean + sd * z;
            for (b, p) in base.iter_mut().zip(pattern) {
                *b += coef * p;
            }
        }
        let id = format!("{}{:04}", gender.code(), i);
        for _ in 0..spec.images_per_subject {
            let (gy, gx) = if spec.intra_noise > 0.0 {
                let z: (f64, f64) = (rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal));
                (z.0 * ILLUMINATION_SCALE * spec.intra_noise, z.1 * ILLUMINATION_SCALE * spec.intra_noise)
            } else {
                (0.0, 0.0)
            };
            let pixels = base
                .iter()
                .enumerate()
                .map(|(k, &b)| {
                    let v = if spec.intra_noise > 0.0 {
                        let (r, c) = (k / w, k % w);
                        let ramp = gy * ramp(r, h) + gx * ramp(c, w);
                        b + ramp + noise.sample(&mut rng)
                    } else {
                        b
                    };
                    v.round().clamp(0.0, 255.0) as u8
                })
                .collect();
            let img = GrayImage::new(h, w, pixels)?;
            records.push(ImageRecord::new(id.clone(), gender, ImageSource::Pixels(Arc::new(img)), Some(eyes))?);
        }
    }
    Dataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn manifest(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}", MANIFEST_HEADER.join(",")).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        (dir, path)
    }

    fn counted(counts: &[(Gender, usize)]) -> Dataset {
        let mut records = Vec::new();
        for (s, &(g, n)) in counts.iter().enumerate() {
            for k in 0..n {
                records.push(
                    ImageRecord::new(format!("s{s}"), g, ImageSource::Path(format!("s{s}_{k}.pgm").into()), None).unwrap(),
                );
            }
        }
        Dataset::new(records).unwrap()
    }

    #[test]
    fn manifest_parses_rows_in_order() {
        let (dir, path) = manifest("A,F,a1.pgm,10,5,10,20\nA,F,a2.pgm,,,,\nB,M,sub/b1.pgm,1,1,1,9\n");
        let d = load_manifest(&path).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.n_subjects(), 2);
        assert_eq!(d.positions("A").unwrap(), &[0, 1]);
        assert_eq!(d.records()[2].source(), &ImageSource::Path(dir.path().join("sub/b1.pgm")));
        assert!(d.records()[1].eyes().is_none());
        let (l, r) = d.records()[0].eyes().unwrap();
        assert_eq!((l.row, l.col, r.row, r.col), (10.0, 5.0, 10.0, 20.0));
    }

    #[test]
    fn manifest_header_only_is_empty() {
        let (_dir, path) = manifest("");
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn manifest_rejects_bad_rows() {
        let (_d, path) = manifest("A,F,a1.pgm,,,,\nA,X,a2.pgm,,,,\n");
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 3, .. }), "{err}");

        let (_d, path) = manifest("A,F,a1.pgm,,,\n");
        assert!(matches!(load_manifest(&path), Err(Error::Manifest { line: 2, .. })));

        let (_d, path) = manifest("A,F,a1.pgm,,,,\nA,F,a1.pgm,,,,\n");
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let (_d, path) = manifest("A,F,a1.pgm,1,2,,\n");
        assert!(load_manifest(&path).is_err());

        assert!(matches!(load_manifest("/nonexistent/m.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn filter_threshold_and_identity() {
        let d = counted(&[(Gender::Female, 10), (Gender::Male, 9), (Gender::Male, 12)]);
        let f = filter_min_images(&d, 10).unwrap();
        assert_eq!(f.n_subjects(), 2);
        assert_eq!(f.len(), 22);
        let same = filter_min_images(&d, 1).unwrap();
        assert_eq!(same.records(), d.records());
        assert!(filter_min_images(&d, 0).is_err());
        assert_eq!(filter_min_images(&f, 10).unwrap().records(), f.records());
    }

    #[test]
    fn sampling_counts_and_determinism() {
        let mut counts = vec![(Gender::Female, 10); 20];
        counts.extend(vec![(Gender::Male, 12); 30]);
        let d = counted(&counts);
        let spec = SamplingSpec {
            n_female: 5,
            n_male: 7,
            images_per_subject: 10,
            seed: 3,
        };
        let s = sample_subjects(&d, &spec).unwrap();
        assert_eq!(s.n_subjects(), 12);
        assert_eq!(s.len(), 120);
        assert_eq!(s.count_gender(Gender::Female), 5);
        assert_eq!(s.count_gender(Gender::Male), 7);
        for id in s.subject_ids() {
            assert_eq!(s.positions(id).unwrap().len(), 10);
        }
        let again = sample_subjects(&d, &spec).unwrap();
        assert_eq!(s.records(), again.records());

        let male_only = sample_subjects(&d, &SamplingSpec { n_female: 0, ..spec }).unwrap();
        assert_eq!(male_only.count_gender(Gender::Female), 0);

        let err = sample_subjects(&d, &SamplingSpec { n_female: 21, ..spec }).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSubjects {
                gender: Gender::Female,
                needed: 21,
                available: 20,
                ..
            }
        ));
        assert!(sample_subjects(&d, &SamplingSpec { images_per_subject: 1, ..spec }).is_err());
    }

    #[test]
    fn split_small_case() {
        let d = counted(&[(Gender::Female, 10), (Gender::Male, 10)]);
        let s = split_train_test(&d, SplitRatio::R5_5, 1).unwrap();
        assert_eq!(s.train.len(), 10);
        assert_eq!(s.test.len(), 10);
        let train: HashSet<_> = s.train_positions.iter().collect();
        assert!(s.test_positions.iter().all(|p| !train.contains(p)));
        for id in ["s0", "s1"] {
            assert_eq!(s.train.iter().filter(|r| r.subject_id() == id).count(), 5);
        }
        let s91 = split_train_test(&d, SplitRatio::R9_1, 1).unwrap();
        assert_eq!((s91.train.len(), s91.test.len()), (18, 2));
        let bad = counted(&[(Gender::Female, 7)]);
        assert!(matches!(split_train_test(&bad, SplitRatio::R5_5, 0), Err(Error::SplitCount { .. })));
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("9:1".parse::<SplitRatio>().unwrap(), SplitRatio::R9_1);
        let err = "7:3".parse::<SplitRatio>().unwrap_err();
        assert!(err.to_string().contains("ratio must be 9:1 or 5:5"));
    }

    #[test]
    fn synthetic_zero_noise_images_identical() {
        let spec = SyntheticSpec {
            n_female: 2,
            n_male: 1,
            images_per_subject: 3,
            intra_noise: 0.0,
            ..Default::default()
        };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.len(), 9);
        for id in d.subject_ids() {
            let pos = d.positions(id).unwrap();
            let first = d.records()[pos[0]].load_image().unwrap();
            for &p in &pos[1..] {
                assert_eq!(d.records()[p].load_image().unwrap(), first);
            }
        }
        let a = d.records()[0].load_image().unwrap();
        let b = d.records()[3].load_image().unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn synthetic_is_deterministic_and_validates() {
        let spec = SyntheticSpec {
            n_female: 1,
            n_male: 1,
            images_per_subject: 2,
            image_height: 16,
            image_width: 12,
            intra_noise: 5.0,
            seed: 9,
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.records(), b.records());
        assert!(generate_synthetic(&SyntheticSpec { image_height: 7, ..spec }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { intra_noise: -1.0, ..spec }).is_err());
    }
}
