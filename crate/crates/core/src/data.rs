//! CIFAR binary ingestion, preprocessing and rotated evaluation sets.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{rot90, Tensor4};

/// Per-channel means subtracted before dividing by 256.
pub const CHANNEL_MEANS: [f64; 3] = [122.782, 117.001, 104.298];
pub const PIXEL_SCALE: f64 = 256.0;

const IMAGE_SIDE: usize = 32;
const IMAGE_BYTES: usize = 3 * IMAGE_SIDE * IMAGE_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + IMAGE_BYTES
    }

    pub fn class_count(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    /// File names of a split in the standard binary distribution.
    pub fn files(self, split: Split) -> Vec<String> {
        match (self, split) {
            (CifarVariant::Cifar10, Split::Train) => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
            (CifarVariant::Cifar10, Split::Test) => vec!["test_batch.bin".into()],
            (CifarVariant::Cifar100, Split::Train) => vec!["train.bin".into()],
            (CifarVariant::Cifar100, Split::Test) => vec!["test.bin".into()],
        }
    }
}

/// Images with one class id each. Pixels of loaded sets are the raw byte
/// values in `[0, 255]`, channels R, G, B.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    pub images: Tensor4<f32>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// CIFAR-100 coarse labels, kept only so records can be written back.
    pub coarse_labels: Option<Vec<u8>>,
}

impl LabeledImageSet {
    pub fn new(images: Tensor4<f32>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.n() != labels.len() {
            return Err(Error::invalid(format!("{} images but {} labels", images.n(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(format!("label {bad} out of range for {class_count} classes")));
        }
        Ok(Self {
            images,
            labels,
            class_count,
            coarse_labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The items at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            images: self.images.gather(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            coarse_labels: self.coarse_labels.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
        })
    }
}

/// Parses concatenated CIFAR records. Any non-zero whole number of records
/// is accepted.
pub fn parse_cifar(bytes: &[u8], variant: CifarVariant, path: &Path) -> Result<LabeledImageSet> {
    let rec = variant.record_len();
    if bytes.is_empty() || !bytes.len().is_multiple_of(rec) {
        return Err(Error::DataSize {
            path: path.to_path_buf(),
            expected: format!("a non-zero multiple of {rec}"),
            actual: bytes.len() as u64,
        });
    }
    let n = bytes.len() / rec;
    let lb = variant.label_bytes();
    let mut pixels = Vec::with_capacity(n * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(n);
    let mut coarse = Vec::new();
    for (i, r) in bytes.chunks_exact(rec).enumerate() {
        let label = r[lb - 1] as usize;
        if label >= variant.class_count() {
            return Err(Error::invalid(format!(
                "{}: record {i} has label {label}, expected < {}",
                path.display(),
                variant.class_count()
            )));
        }
        if variant == CifarVariant::Cifar100 {
            coarse.push(r[0]);
        }
        labels.push(label);
        pixels.extend(r[lb..].iter().map(|&b| b as f32));
    }
    let mut set = LabeledImageSet::new(Tensor4::from_vec([n, 3, IMAGE_SIDE, IMAGE_SIDE], pixels)?, labels, variant.class_count())?;
    if variant == CifarVariant::Cifar100 {
        set.coarse_labels = Some(coarse);
    }
    Ok(set)
}

/// Loads every file of `split` from `dir`, in the standard order.
pub fn load_cifar(dir: &Path, variant: CifarVariant, split: Split) -> Result<LabeledImageSet> {
    let mut bytes = Vec::new();
    let mut first: Option<PathBuf> = None;
    for name in variant.files(split) {
        let path = dir.join(&name);
        let chunk = fs::read(&path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        // Validate each file on its own so the error names the bad one.
        if chunk.is_empty() || chunk.len() % variant.record_len() != 0 {
            return Err(Error::DataSize {
                path,
                expected: format!("a non-zero multiple of {}", variant.record_len()),
                actual: chunk.len() as u64,
            });
        }
        first.get_or_insert(path);
        bytes.extend_from_slice(&chunk);
    }
    parse_cifar(&bytes, variant, first.as_deref().unwrap_or(dir))
}

/// Writes item `idx` back in the binary record layout.
pub fn serialize_record(set: &LabeledImageSet, idx: usize, variant: CifarVariant) -> Result<Vec<u8>> {
    let img = &set.images;
    if (img.c(), img.h(), img.w()) != (3, IMAGE_SIDE, IMAGE_SIDE) {
        return Err(Error::invalid("records hold 3x32x32 images"));
    }
    if idx >= set.len() {
        return Err(Error::invalid(format!("record {idx} out of range for {} items", set.len())));
    }
    let mut out = Vec::with_capacity(variant.record_len());
    if variant == CifarVariant::Cifar100 {
        out.push(set.coarse_labels.as_ref().map_or(0, |c| c[idx]));
    }
    out.push(u8::try_from(set.labels[idx]).map_err(|_| Error::invalid("label does not fit in a byte"))?);
    for &v in &img.data()[idx * IMAGE_BYTES..(idx + 1) * IMAGE_BYTES] {
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::invalid(format!("pixel {v} is not a byte value")));
        }
        out.push(v as u8);
    }
    Ok(out)
}

pub fn write_cifar(set: &LabeledImageSet, variant: CifarVariant, mut w: impl Write) -> Result<()> {
    for i in 0..set.len() {
        w.write_all(&serialize_record(set, i, variant)?)?;
    }
    Ok(())
}

/// `(pixel − channel mean) / 256` for every pixel.
pub fn preprocess<T: Real>(set: &LabeledImageSet) -> Result<Tensor4<T>> {
    let img = &set.images;
    if img.c() != 3 {
        return Err(Error::Shape {
            op: "preprocess",
            axis: "channels",
            expected: 3,
            actual: img.c(),
        });
    }
    let mut out = Tensor4::zeros(img.n(), 3, img.h(), img.w());
    let scale = T::lit(PIXEL_SCALE);
    for n in 0..img.n() {
        for (c, &mean) in CHANNEL_MEANS.iter().enumerate() {
            let mean = T::lit(mean);
            for (o, &p) in out.plane_mut(n, c).iter_mut().zip(img.plane(n, c)) {
                *o = (T::lit(p as f64) - mean) / scale;
            }
        }
    }
    Ok(out)
}

/// The set rotated by 0, 1, 2 and 3 counter-clockwise quarter turns.
pub fn rotated_eval_sets(set: &LabeledImageSet) -> Result<[LabeledImageSet; 4]> {
    if set.images.h() != set.images.w() {
        return Err(Error::invalid(format!(
            "rotated evaluation needs square images, got {}x{}",
            set.images.h(),
            set.images.w()
        )));
    }
    Ok(std::array::from_fn(|q| LabeledImageSet {
        images: rot90(&set.images, q as i32),
        ..set.clone()
    }))
}

/// `n` items with classes as balanced as possible: each class list is
/// shuffled with the seeded generator, then classes are interleaved in
/// round-robin order and the first `n` items kept.
pub fn stratified_subset(set: &LabeledImageSet, n: usize, seed: u64) -> Result<LabeledImageSet> {
    if n > set.len() {
        return Err(Error::invalid(format!("subset of {n} requested from {} items", set.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); set.class_count];
    for (i, &l) in set.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for list in &mut by_class {
        list.shuffle(&mut rng);
    }
    let longest = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let picked: Vec<usize> = (0..longest)
        .flat_map(|round| by_class.iter().filter_map(move |l| l.get(round).copied()))
        .take(n)
        .collect();
    set.select(&picked)
}

/// Number of classes of [`synthetic_glyphs`].
pub const SYNTHETIC_CLASSES: usize = 4;

// 5×5 glyphs F, L, P, T. No glyph is a rotation or a mirror image of
// another, so every class stays separable for rotation- and
// reflection-invariant models, while the upright orientation is the only
// one seen in training.
const GLYPHS: [[&str; 5]; SYNTHETIC_CLASSES] = [
    ["#####", "#....", "####.", "#....", "#...."],
    ["#....", "#....", "#....", "#....", "#####"],
    ["####.", "#...#", "####.", "#....", "#...."],
    ["#####", "..#..", "..#..", "..#..", "..#.."],
];

/// `n` upright glyph images of side `size` (at least 5) with byte-valued
/// pixels: a random dark background, a random bright glyph color, a random
/// position and uniform noise. Labels cycle through the classes.
pub fn synthetic_glyphs(n: usize, size: usize, seed: u64) -> LabeledImageSet {
    assert!(size >= 5, "synthetic images need a side of at least 5");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (size / 7).max(1);
    let glyph = 5 * scale;
    let mut images = Tensor4::zeros(n, 3, size, size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % SYNTHETIC_CLASSES;
        labels.push(label);
        let bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..80.0));
        let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(150.0..255.0));
        let oy = rng.random_range(0..=size - glyph);
        let ox = rng.random_range(0..=size - glyph);
        for y in 0..size {
            for x in 0..size {
                let on = (oy..oy + glyph).contains(&y)
                    && (ox..ox + glyph).contains(&x)
                    && GLYPHS[label][(y - oy) / scale].as_bytes()[(x - ox) / scale] == b'#';
                for c in 0..3 {
                    let base = if on { fg[c] } else { bg[c] };
                    let v = (base + rng.random_range(-20.0..20.0)).round().clamp(0.0, 255.0);
                    images.set(i, c, y, x, v as f32);
                }
            }
        }
    }
    LabeledImageSet::new(images, labels, SYNTHETIC_CLASSES).expect("labels are in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_records(n: usize, variant: CifarVariant, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..n {
            if variant == CifarVariant::Cifar100 {
                out.push(rng.random_range(0..20));
            }
            out.push((i % variant.class_count()) as u8);
            out.extend((0..IMAGE_BYTES).map(|_| rng.random::<u8>()));
        }
        out
    }

    #[test]
    fn first_record_round_trips() {
        for variant in [CifarVariant::Cifar10, CifarVariant::Cifar100] {
            let bytes = fake_records(3, variant, 1);
            let set = parse_cifar(&bytes, variant, Path::new("x.bin")).unwrap();
            assert_eq!(set.len(), 3);
            assert_eq!(serialize_record(&set, 0, variant).unwrap(), &bytes[..variant.record_len()]);
            let mut all = Vec::new();
            write_cifar(&set, variant, &mut all).unwrap();
            assert_eq!(all, bytes);
        }
    }

    #[test]
    fn pixel_layout_is_channel_planes() {
        let mut bytes = vec![7u8];
        bytes.extend((0..IMAGE_BYTES).map(|i| (i / 1024) as u8 * 100 + (i % 2) as u8));
        let set = parse_cifar(&bytes, CifarVariant::Cifar10, Path::new("x")).unwrap();
        assert_eq!(set.labels, vec![7]);
        assert_eq!(set.images.get(0, 0, 0, 0), 0.0);
        assert_eq!(set.images.get(0, 1, 0, 1), 101.0);
        assert_eq!(set.images.get(0, 2, 31, 31), 201.0);
    }

    #[test]
    fn truncated_file_reports_sizes() {
        let bytes = fake_records(2, CifarVariant::Cifar10, 2);
        match parse_cifar(&bytes[..bytes.len() - 5], CifarVariant::Cifar10, Path::new("t.bin")) {
            Err(Error::DataSize { expected, actual, .. }) => {
                assert!(expected.contains("3073"));
                assert_eq!(actual, 2 * 3073 - 5);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_cifar(&[], CifarVariant::Cifar100, Path::new("e")).is_err());
    }

    #[test]
    fn loads_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        for (i, name) in CifarVariant::Cifar10.files(Split::Train).iter().enumerate() {
            fs::write(dir.path().join(name), fake_records(2, CifarVariant::Cifar10, i as u64)).unwrap();
        }
        let set = load_cifar(dir.path(), CifarVariant::Cifar10, Split::Train).unwrap();
        assert_eq!((set.len(), set.class_count), (10, 10));
        let err = load_cifar(dir.path(), CifarVariant::Cifar10, Split::Test).unwrap_err();
        assert!(err.to_string().contains("test_batch.bin"), "{err}");
        fs::write(dir.path().join("data_batch_3.bin"), [1u8; 10]).unwrap();
        let err = load_cifar(dir.path(), CifarVariant::Cifar10, Split::Train).unwrap_err();
        assert!(matches!(err, Error::DataSize { ref path, actual: 10, .. } if path.ends_with("data_batch_3.bin")));
    }

    #[test]
    fn preprocess_matches_the_constants() {
        let mut img = Tensor4::<f32>::zeros(2, 3, 1, 1);
        img.data_mut().copy_from_slice(&[122.782, 117.001, 104.298, 255.0, 255.0, 255.0]);
        let set = LabeledImageSet::new(img, vec![0, 1], 2).unwrap();
        let x = preprocess::<f64>(&set).unwrap();
        // f32 storage rounds the means, so the zero is only approximate.
        assert!(x.data()[..3].iter().all(|v| v.abs() < 1e-6));
        let want = [0.516_477, 0.539_059, 0.588_680];
        for (v, w) in x.data()[3..].iter().zip(want) {
            assert!((v - w).abs() < 1e-6, "{v}");
        }
        let bad = LabeledImageSet::new(Tensor4::zeros(1, 1, 2, 2), vec![0], 1).unwrap();
        assert!(preprocess::<f32>(&bad).is_err());
    }

    #[test]
    fn preprocess_commutes_with_rotation() {
        let set = synthetic_glyphs(3, 9, 4);
        let rotated = rotated_eval_sets(&set).unwrap();
        let base = preprocess::<f32>(&set).unwrap();
        for (q, r) in rotated.iter().enumerate() {
            assert_eq!(preprocess::<f32>(r).unwrap(), rot90(&base, q as i32));
        }
    }

    #[test]
    fn rotated_sets_form_the_cyclic_group() {
        let set = synthetic_glyphs(4, 8, 5);
        let [r0, r1, r2, r3] = rotated_eval_sets(&set).unwrap();
        assert_eq!(r0, set);
        assert_eq!(rotated_eval_sets(&r2).unwrap()[2], set);
        assert_eq!(rotated_eval_sets(&r3).unwrap()[1], set);
        assert_eq!(r1.labels, set.labels);
        let tall = LabeledImageSet::new(Tensor4::zeros(1, 3, 4, 5), vec![0], 1).unwrap();
        assert!(rotated_eval_sets(&tall).is_err());
    }

    #[test]
    fn stratified_subset_is_balanced_and_seeded() {
        let set = synthetic_glyphs(40, 8, 6);
        let a = stratified_subset(&set, 12, 3).unwrap();
        let mut counts = [0; SYNTHETIC_CLASSES];
        for &l in &a.labels {
            counts[l] += 1;
        }
        assert_eq!(counts, [3; SYNTHETIC_CLASSES]);
        assert_eq!(a, stratified_subset(&set, 12, 3).unwrap());
        assert_ne!(a, stratified_subset(&set, 12, 4).unwrap());
        assert!(stratified_subset(&set, 41, 3).is_err());
    }

    #[test]
    fn synthetic_glyphs_are_byte_valued_and_seeded() {
        let a = synthetic_glyphs(8, 16, 1);
        assert_eq!(a, synthetic_glyphs(8, 16, 1));
        assert!(a.images.data().iter().all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0));
        assert_eq!(a.labels, vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }
}
