//! Deterministic synthetic forgery dataset.
//!
//! "Real" images are smooth fields of toroidal Gaussian bumps plus a faint
//! sensor-noise floor. Each forgery category leaves a different trace:
//!
//! | category  | trace                                             | most visible in |
//! |-----------|---------------------------------------------------|-----------------|
//! | `BLEND`   | brightened donor patch pasted with a hard seam    | spatial         |
//! | `GRID`    | faint periodic sinusoid, random phase             | frequency       |
//! | `SHIFT`   | global gamma / intensity remap                    | spatial         |
//! | `CHECKER` | 2x down-then-up nearest-neighbour resampling      | frequency       |
//! | `STACKED` | `BLEND` followed by `GRID` (optional, unseen only)|  both           |
//!
//! # Random streams
//!
//! Every sample draws from its own `ChaCha8Rng` seeded with
//! `seed ^ splitmix64(key)`, where
//! `key = split << 56 | category_code << 48 | index` (`split` is 0 for train,
//! 1 for test; `category_code` is 0 for real and 1..=5 in the order of the
//! table above). A sample therefore does not depend on which categories are
//! held out or on how many other samples are generated.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectrum::ImageTensor;

pub const IMAGE_SIZE: usize = 32;

/// Number of distinct forgery methods exposed by every category.
pub const METHODS_PER_CATEGORY: u32 = 3;

const NOISE_SIGMA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Blend,
    Grid,
    Shift,
    Checker,
    Stacked,
}

impl Category {
    pub const STANDARD: [Category; 4] = [
        Category::Blend,
        Category::Grid,
        Category::Shift,
        Category::Checker,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Blend => "BLEND",
            Self::Grid => "GRID",
            Self::Shift => "SHIFT",
            Self::Checker => "CHECKER",
            Self::Stacked => "STACKED",
        }
    }

    fn code(self) -> u64 {
        match self {
            Self::Blend => 1,
            Self::Grid => 2,
            Self::Shift => 3,
            Self::Checker => 4,
            Self::Stacked => 5,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BLEND" => Ok(Self::Blend),
            "GRID" => Ok(Self::Grid),
            "SHIFT" => Ok(Self::Shift),
            "CHECKER" => Ok(Self::Checker),
            "STACKED" => Ok(Self::Stacked),
            other => Err(invalid(format!("unknown category {other:?}"))),
        }
    }
}

/// Paste a donor patch of `height x width` near the image center, lifted to
/// `lift + (1 - lift) * donor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendParams {
    pub height: usize,
    pub width: usize,
    pub lift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub period: usize,
    pub amplitude: f64,
}

/// `floor + (1 - floor) * x^gamma`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftParams {
    pub gamma: f64,
    pub floor: f64,
}

/// Keep one pixel per 2x2 block, at `(row_phase, col_phase)`, and replicate it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckerParams {
    pub row_phase: usize,
    pub col_phase: usize,
}

impl BlendParams {
    pub fn for_method(method_id: u32) -> Result<Self> {
        match method_id {
            0 => Ok(Self { height: 14, width: 14, lift: 0.55 }),
            1 => Ok(Self { height: 18, width: 12, lift: 0.5 }),
            2 => Ok(Self { height: 12, width: 18, lift: 0.6 }),
            m => Err(invalid(format!("BLEND has no method {m}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(invalid("BLEND patch must have non-zero size"));
        }
        if self.height > IMAGE_SIZE || self.width > IMAGE_SIZE {
            return Err(invalid("BLEND patch larger than the image"));
        }
        if !(0.0..=1.0).contains(&self.lift) {
            return Err(invalid("BLEND lift must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl GridParams {
    pub fn for_method(method_id: u32) -> Result<Self> {
        match method_id {
            0 => Ok(Self { period: 3, amplitude: 0.05 }),
            1 => Ok(Self { period: 4, amplitude: 0.05 }),
            2 => Ok(Self { period: 5, amplitude: 0.05 }),
            m => Err(invalid(format!("GRID has no method {m}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(invalid("GRID period must be at least 2"));
        }
        if !(self.amplitude >= 0.0 && self.amplitude <= 0.5) {
            return Err(invalid("GRID amplitude must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

impl ShiftParams {
    pub fn for_method(method_id: u32) -> Result<Self> {
        match method_id {
            0 => Ok(Self { gamma: 0.5, floor: 0.3 }),
            1 => Ok(Self { gamma: 0.7, floor: 0.35 }),
            2 => Ok(Self { gamma: 0.4, floor: 0.25 }),
            m => Err(invalid(format!("SHIFT has no method {m}"))),
        }
    }
}

impl CheckerParams {
    pub fn for_method(method_id: u32) -> Result<Self> {
        match method_id {
            0 => Ok(Self { row_phase: 0, col_phase: 0 }),
            1 => Ok(Self { row_phase: 1, col_phase: 1 }),
            2 => Ok(Self { row_phase: 0, col_phase: 1 }),
            m => Err(invalid(format!("CHECKER has no method {m}"))),
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent per-sample generator: `ChaCha8Rng(seed ^ splitmix64(key))`.
pub fn sample_rng(seed: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ splitmix64(key))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

fn sample_key(split: Split, category: Option<Category>, index: u64) -> u64 {
    let split_bit = match split {
        Split::Train => 0u64,
        Split::Test => 1,
    };
    split_bit << 56 | category.map_or(0, Category::code) << 48 | index
}

/// Smooth "real" image on the torus, lightly noised, values in `[0, 1]`.
pub fn real_image<R: Rng + ?Sized>(rng: &mut R) -> ImageTensor {
    let n = IMAGE_SIZE;
    let bumps = rng.random_range(3..=6);
    let mut field = vec![0.0; n * n];
    for _ in 0..bumps {
        let cr = rng.random_range(0.0..n as f64);
        let cc = rng.random_range(0.0..n as f64);
        let sigma = rng.random_range(3.0..8.0);
        let amp = rng.random_range(0.3..1.0);
        let inv = 1.0 / (2.0 * sigma * sigma);
        for r in 0..n {
            let dr = torus_delta(r as f64, cr, n as f64);
            for c in 0..n {
                let dc = torus_delta(c as f64, cc, n as f64);
                field[r * n + c] += amp * (-(dr * dr + dc * dc) * inv).exp();
            }
        }
    }
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let pixels = field
        .iter()
        .map(|v| (0.05 + 0.9 * (v - lo) / span + noise.sample(rng)).clamp(0.0, 1.0))
        .collect();
    ImageTensor::from_raw(n, n, pixels)
}

fn torus_delta(x: f64, center: f64, n: f64) -> f64 {
    let d = (x - center).abs();
    d.min(n - d)
}

pub fn generate_real(seed: u64, count: usize) -> Result<Vec<ImageTensor>> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    Ok((0..count as u64)
        .map(|i| real_image(&mut sample_rng(seed, sample_key(Split::Train, None, i))))
        .collect())
}

pub fn apply_blend<R: Rng + ?Sized>(
    base: &ImageTensor,
    params: BlendParams,
    rng: &mut R,
) -> Result<ImageTensor> {
    params.validate()?;
    let donor = real_image(rng);
    let (h, w) = (base.height(), base.width());
    let jitter = 3i64;
    let top = ((h - params.height) / 2) as i64 + rng.random_range(-jitter..=jitter);
    let left = ((w - params.width) / 2) as i64 + rng.random_range(-jitter..=jitter);
    let top = top.clamp(0, (h - params.height) as i64) as usize;
    let left = left.clamp(0, (w - params.width) as i64) as usize;
    let mut px = base.pixels().to_vec();
    for r in top..top + params.height {
        for c in left..left + params.width {
            px[r * w + c] = params.lift + (1.0 - params.lift) * donor.get(r, c);
        }
    }
    Ok(ImageTensor::from_raw(h, w, clamp_all(px)))
}

pub fn apply_grid<R: Rng + ?Sized>(
    base: &ImageTensor,
    params: GridParams,
    rng: &mut R,
) -> Result<ImageTensor> {
    params.validate()?;
    let (h, w) = (base.height(), base.width());
    let tau = std::f64::consts::TAU;
    let phase_r = rng.random_range(0.0..tau);
    let phase_c = rng.random_range(0.0..tau);
    if params.amplitude == 0.0 {
        return Ok(base.clone());
    }
    let p = params.period as f64;
    let mut px = base.pixels().to_vec();
    for r in 0..h {
        let sr = (tau * r as f64 / p + phase_r).sin();
        for c in 0..w {
            let sc = (tau * c as f64 / p + phase_c).sin();
            px[r * w + c] += params.amplitude * 0.5 * (sr + sc);
        }
    }
    Ok(ImageTensor::from_raw(h, w, clamp_all(px)))
}

pub fn apply_shift(base: &ImageTensor, params: ShiftParams) -> ImageTensor {
    let px = base
        .pixels()
        .iter()
        .map(|&x| params.floor + (1.0 - params.floor) * x.powf(params.gamma))
        .collect();
    ImageTensor::from_raw(base.height(), base.width(), clamp_all(px))
}

pub fn apply_checker(base: &ImageTensor, params: CheckerParams) -> ImageTensor {
    let (h, w) = (base.height(), base.width());
    let mut px = vec![0.0; h * w];
    for r in 0..h {
        let sr = ((r & !1) + params.row_phase).min(h - 1);
        for c in 0..w {
            let sc = ((c & !1) + params.col_phase).min(w - 1);
            px[r * w + c] = base.get(sr, sc);
        }
    }
    ImageTensor::from_raw(h, w, px)
}

/// Stamps the trace of `category` (variant `method_id`) onto `base`.
pub fn apply_category<R: Rng + ?Sized>(
    base: &ImageTensor,
    category: Category,
    method_id: u32,
    rng: &mut R,
) -> Result<ImageTensor> {
    match category {
        Category::Blend => apply_blend(base, BlendParams::for_method(method_id)?, rng),
        Category::Grid => apply_grid(base, GridParams::for_method(method_id)?, rng),
        Category::Shift => Ok(apply_shift(base, ShiftParams::for_method(method_id)?)),
        Category::Checker => Ok(apply_checker(base, CheckerParams::for_method(method_id)?)),
        Category::Stacked => {
            let blended = apply_blend(base, BlendParams::for_method(method_id)?, rng)?;
            apply_grid(&blended, GridParams::for_method(method_id)?, rng)
        }
    }
}

fn clamp_all(mut px: Vec<f64>) -> Vec<f64> {
    px.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
    px
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub image: ImageTensor,
    /// `0` is real, `1..K` are seen categories, `K` marks any held-out category.
    pub class_label: u32,
    /// `None` for real images.
    pub category: Option<Category>,
    pub method_id: u32,
}

impl Sample {
    pub fn category_name(&self) -> &'static str {
        self.category.map_or("REAL", Category::name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub categories: Vec<Category>,
    pub held_out: Vec<Category>,
    #[serde(default = "default_train_count")]
    pub samples_per_class_train: usize,
    #[serde(default = "default_test_count")]
    pub samples_per_class_test: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_train_count() -> usize {
    500
}

fn default_test_count() -> usize {
    200
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            categories: Category::STANDARD.to_vec(),
            held_out: vec![Category::Checker],
            samples_per_class_train: default_train_count(),
            samples_per_class_test: default_test_count(),
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn leave_one_out(held_out: Category, seed: u64) -> Self {
        Self {
            held_out: vec![held_out],
            seed,
            ..Self::default()
        }
    }

    /// Seen categories in configuration order.
    pub fn seen(&self) -> Vec<Category> {
        self.categories
            .iter()
            .copied()
            .filter(|c| !self.held_out.contains(c))
            .collect()
    }

    /// Number of closed-set classes: real plus every seen category.
    pub fn class_count(&self) -> usize {
        self.seen().len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.held_out.is_empty() {
            return Err(invalid("at least one category must be held out"));
        }
        for (i, c) in self.categories.iter().enumerate() {
            if self.categories[..i].contains(c) {
                return Err(invalid(format!("category {c} listed twice")));
            }
        }
        for (i, h) in self.held_out.iter().enumerate() {
            if self.held_out[..i].contains(h) {
                return Err(invalid(format!("held-out category {h} listed twice")));
            }
            if !self.categories.contains(h) && *h != Category::Stacked {
                return Err(invalid(format!("held-out category {h} is not among the categories")));
            }
        }
        if self.seen().contains(&Category::Stacked) {
            return Err(invalid("STACKED may only be used as an unseen category"));
        }
        if self.seen().len() < 2 {
            return Err(invalid("need at least two seen fake categories"));
        }
        if self.samples_per_class_train == 0 || self.samples_per_class_test == 0 {
            return Err(invalid("per-class sample counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: ProtocolConfig,
    pub seen_categories: Vec<Category>,
    pub unseen_categories: Vec<Category>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl SynthDataset {
    pub fn class_count(&self) -> usize {
        self.seen_categories.len() + 1
    }

    /// Label used for every held-out category.
    pub fn novel_label(&self) -> u32 {
        self.class_count() as u32
    }

    /// `REAL`, then seen categories, indexed by class label.
    pub fn class_names(&self) -> Vec<String> {
        std::iter::once("REAL".to_string())
            .chain(self.seen_categories.iter().map(|c| c.name().to_string()))
            .collect()
    }

    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

fn make_sample(
    seed: u64,
    split: Split,
    category: Option<Category>,
    index: usize,
    class_label: u32,
) -> Result<Sample> {
    let id = sample_key(split, category, index as u64);
    let mut rng = sample_rng(seed, id);
    let base = real_image(&mut rng);
    let method_id = match category {
        Some(_) => index as u32 % METHODS_PER_CATEGORY,
        None => 0,
    };
    let image = match category {
        Some(cat) => apply_category(&base, cat, method_id, &mut rng)?,
        None => base,
    };
    Ok(Sample {
        id,
        image,
        class_label,
        category,
        method_id,
    })
}

pub fn build_protocol(config: &ProtocolConfig) -> Result<SynthDataset> {
    config.validate()?;
    let seen = config.seen();
    let unseen = config.held_out.clone();
    let novel = seen.len() as u32 + 1;

    let groups = |split: Split, with_unseen: bool| {
        let mut g: Vec<(Option<Category>, u32)> = vec![(None, 0)];
        g.extend(seen.iter().enumerate().map(|(i, &c)| (Some(c), i as u32 + 1)));
        if with_unseen {
            g.extend(unseen.iter().map(|&c| (Some(c), novel)));
        }
        let count = match split {
            Split::Train => config.samples_per_class_train,
            Split::Test => config.samples_per_class_test,
        };
        (g, count)
    };

    let build = |split: Split, with_unseen: bool| -> Result<Vec<Sample>> {
        let (g, count) = groups(split, with_unseen);
        let mut out = Vec::with_capacity(g.len() * count);
        for (category, label) in g {
            for i in 0..count {
                out.push(make_sample(config.seed, split, category, i, label)?);
            }
        }
        Ok(out)
    };

    let train = build(Split::Train, false)?;
    let test = build(Split::Test, true)?;
    Ok(SynthDataset {
        config: config.clone(),
        seen_categories: seen,
        unseen_categories: unseen,
        train,
        test,
    })
}
