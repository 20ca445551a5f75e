//! On-disk formats: dataset tensor files with their JSON manifest, and
//! binary checkpoints of a dual-branch model. Byte layouts are documented
//! in `docs/FORMATS.md`; all integers and floats are little-endian.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edl::{BranchNetwork, TrainConfig};
use crate::error::{Error, Result};
use crate::evidence::EvidenceFunction;
use crate::features::{Branch, Standardizer};
use crate::openset::{BranchModel, DualBranchModel};
use crate::spectrum::ImageTensor;
use crate::synth::{Category, ProtocolConfig, Sample, SynthDataset};

pub const TENSOR_MAGIC: [u8; 4] = *b"DVDS";
pub const TENSOR_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DVCK";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT: &str = "dualev-dataset";
pub const MANIFEST_VERSION: u32 = 1;

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical (serde_json, declaration-order) encoding of a value.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b)?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.0.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after payload".into())),
        }
    }
}

fn usize_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in 32 bits")))
}

/// Tensor file contents: images plus per-sample class label and method id.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub height: usize,
    pub width: usize,
    pub images: Vec<ImageTensor>,
    pub labels: Vec<u32>,
    pub method_ids: Vec<u32>,
}

impl TensorFile {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let (height, width) = samples
            .first()
            .map_or((0, 0), |s| (s.image.height(), s.image.width()));
        if samples
            .iter()
            .any(|s| s.image.height() != height || s.image.width() != width)
        {
            return Err(Error::Format("samples have mixed image shapes".into()));
        }
        Ok(Self {
            height,
            width,
            images: samples.iter().map(|s| s.image.clone()).collect(),
            labels: samples.iter().map(|s| s.class_label).collect(),
            method_ids: samples.iter().map(|s| s.method_id).collect(),
        })
    }

    /// ```text
    /// magic "DVDS" | version u32 | count u64 | height u32 | width u32
    /// pixels  count*height*width f64 (sample-major, row-major)
    /// labels  count u32
    /// methods count u32
    /// ```
    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = Writer(out);
        w.bytes(&TENSOR_MAGIC)?;
        w.u32(TENSOR_VERSION)?;
        w.u64(self.images.len() as u64)?;
        w.u32(usize_u32(self.height, "height")?)?;
        w.u32(usize_u32(self.width, "width")?)?;
        for im in &self.images {
            w.f64s(im.pixels())?;
        }
        for &l in &self.labels {
            w.u32(l)?;
        }
        for &m in &self.method_ids {
            w.u32(m)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader(input);
        if r.array::<4>()? != TENSOR_MAGIC {
            return Err(Error::Format("not a dataset tensor file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != TENSOR_VERSION {
            return Err(Error::VersionMismatch {
                what: "dataset tensor file",
                found: version,
                supported: TENSOR_VERSION,
            });
        }
        let count = r.u64()? as usize;
        let height = r.u32()? as usize;
        let width = r.u32()? as usize;
        let mut images = Vec::with_capacity(count);
        for _ in 0..count {
            images.push(ImageTensor::new(height, width, r.f64s(height * width)?)?);
        }
        let labels = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let method_ids = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        Ok(Self {
            height,
            width,
            images,
            labels,
            method_ids,
        })
    }
}

/// A contiguous run of samples from one category inside a split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    /// `REAL` or a category name.
    pub category: String,
    pub label: u32,
    pub count: usize,
    /// Identifier of the first sample; the rest follow consecutively.
    pub first_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitListing {
    pub file: String,
    pub count: usize,
    pub sha256: String,
    pub groups: Vec<SampleGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub config: ProtocolConfig,
    pub seed: u64,
    pub config_hash: String,
    pub class_names: Vec<String>,
    pub novel_label: u32,
    pub seen_categories: Vec<Category>,
    pub unseen_categories: Vec<Category>,
    pub train: SplitListing,
    pub test: SplitListing,
}

fn group_samples(samples: &[Sample]) -> Vec<SampleGroup> {
    let mut groups: Vec<SampleGroup> = Vec::new();
    for s in samples {
        match groups.last_mut() {
            Some(g)
                if g.category == s.category_name()
                    && g.label == s.class_label
                    && g.first_id + g.count as u64 == s.id =>
            {
                g.count += 1
            }
            _ => groups.push(SampleGroup {
                category: s.category_name().to_string(),
                label: s.class_label,
                count: 1,
                first_id: s.id,
            }),
        }
    }
    groups
}

/// Encoded dataset: manifest plus the bytes of each split's tensor file.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    pub manifest: DatasetManifest,
    pub train_bytes: Vec<u8>,
    pub test_bytes: Vec<u8>,
}

pub const TRAIN_FILE: &str = "train.bin";
pub const TEST_FILE: &str = "test.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn encode_dataset(ds: &SynthDataset) -> Result<EncodedDataset> {
    let train_bytes = TensorFile::from_samples(&ds.train)?.to_bytes()?;
    let test_bytes = TensorFile::from_samples(&ds.test)?.to_bytes()?;
    let listing = |file: &str, samples: &[Sample], bytes: &[u8]| SplitListing {
        file: file.to_string(),
        count: samples.len(),
        sha256: sha256_hex(bytes),
        groups: group_samples(samples),
    };
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION,
        config: ds.config.clone(),
        seed: ds.config.seed,
        config_hash: config_hash(&ds.config)?,
        class_names: ds.class_names(),
        novel_label: ds.novel_label(),
        seen_categories: ds.seen_categories.clone(),
        unseen_categories: ds.unseen_categories.clone(),
        train: listing(TRAIN_FILE, &ds.train, &train_bytes),
        test: listing(TEST_FILE, &ds.test, &test_bytes),
    };
    Ok(EncodedDataset {
        manifest,
        train_bytes,
        test_bytes,
    })
}

fn decode_split(listing: &SplitListing, bytes: &[u8]) -> Result<Vec<Sample>> {
    if sha256_hex(bytes) != listing.sha256 {
        return Err(Error::Format(format!(
            "{} does not match the checksum in the manifest",
            listing.file
        )));
    }
    let tensor = TensorFile::read_from(bytes)?;
    if tensor.images.len() != listing.count {
        return Err(Error::Format(format!(
            "{} holds {} samples, manifest lists {}",
            listing.file,
            tensor.images.len(),
            listing.count
        )));
    }
    let mut meta = Vec::with_capacity(listing.count);
    for g in &listing.groups {
        let category = match g.category.as_str() {
            "REAL" => None,
            name => Some(name.parse::<Category>()?),
        };
        meta.extend((0..g.count as u64).map(|i| (g.first_id + i, category, g.label)));
    }
    if meta.len() != listing.count {
        return Err(Error::Format(format!("{} group counts do not add up", listing.file)));
    }
    let mut out = Vec::with_capacity(listing.count);
    for (((image, label), method_id), (id, category, group_label)) in tensor
        .images
        .into_iter()
        .zip(tensor.labels)
        .zip(tensor.method_ids)
        .zip(meta)
    {
        if label != group_label {
            return Err(Error::Format(format!(
                "{}: sample {id} has label {label}, manifest group says {group_label}",
                listing.file
            )));
        }
        out.push(Sample {
            id,
            image,
            class_label: label,
            category,
            method_id,
        });
    }
    Ok(out)
}

pub fn decode_dataset(
    manifest: &DatasetManifest,
    train_bytes: &[u8],
    test_bytes: &[u8],
) -> Result<SynthDataset> {
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::Format(format!("unexpected manifest format {:?}", manifest.format)));
    }
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::VersionMismatch {
            what: "dataset manifest",
            found: manifest.version,
            supported: MANIFEST_VERSION,
        });
    }
    Ok(SynthDataset {
        config: manifest.config.clone(),
        seen_categories: manifest.seen_categories.clone(),
        unseen_categories: manifest.unseen_categories.clone(),
        train: decode_split(&manifest.train, train_bytes)?,
        test: decode_split(&manifest.test, test_bytes)?,
    })
}

/// Everything needed to rebuild a [`DualBranchModel`] plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DualBranchModel,
    pub train_config: TrainConfig,
    /// Hex SHA-256 of the dataset configuration the model was trained on.
    pub dataset_hash: String,
}

fn branch_tag(b: Branch) -> u32 {
    match b {
        Branch::Spatial => 0,
        Branch::Frequency => 1,
    }
}

fn hash_bytes(hex: &str) -> Result<[u8; 32]> {
    if hex.len() != 64 {
        return Err(Error::Format(format!("hash {hex:?} is not 64 hex digits")));
    }
    let mut out = [0u8; 32];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::Format(format!("hash {hex:?} is not hex")))?;
    }
    Ok(out)
}

impl Checkpoint {
    /// ```text
    /// magic "DVCK" | version u32 | class_count u32 | evidence_fn u32
    /// dataset_hash [u8; 32]
    /// learning_rate f64 | epochs u64 | batch_size u64 | avu_weight f64 | hidden_dim u64 | seed u64
    /// 2 x branch (spatial, then frequency):
    ///   tag u32 | input_dim u32 | hidden_dim u32 | class_count u32
    ///   mean[input_dim] f64 | inv_std[input_dim] f64
    ///   weights_1[hidden_dim][input_dim] f64 | bias_1[hidden_dim] f64
    ///   weights_2[class_count][hidden_dim] f64 | bias_2[class_count] f64
    /// ```
    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = Writer(out);
        w.bytes(&CHECKPOINT_MAGIC)?;
        w.u32(CHECKPOINT_VERSION)?;
        w.u32(usize_u32(self.model.class_count(), "class count")?)?;
        w.u32(self.model.evidence_fn.code())?;
        w.bytes(&hash_bytes(&self.dataset_hash)?)?;
        let c = &self.train_config;
        w.f64(c.learning_rate)?;
        w.u64(c.epochs as u64)?;
        w.u64(c.batch_size as u64)?;
        w.f64(c.avu_weight)?;
        w.u64(c.hidden_dim as u64)?;
        w.u64(c.seed)?;
        for b in [&self.model.spatial, &self.model.frequency] {
            let net = &b.network;
            w.u32(branch_tag(b.branch))?;
            w.u32(usize_u32(net.input_dim(), "input dim")?)?;
            w.u32(usize_u32(net.hidden_dim(), "hidden dim")?)?;
            w.u32(usize_u32(net.class_count(), "class count")?)?;
            w.f64s(b.standardizer.mean.iter())?;
            w.f64s(b.standardizer.inv_std.iter())?;
            w.f64s(net.parameters().collect::<Vec<_>>().iter())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader(input);
        if r.array::<4>()? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                what: "checkpoint",
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let class_count = r.u32()? as usize;
        let evidence_code = r.u32()?;
        let evidence_fn = EvidenceFunction::from_code(evidence_code)
            .ok_or_else(|| Error::Format(format!("unknown evidence function {evidence_code}")))?;
        let hash: [u8; 32] = r.array()?;
        let dataset_hash = hash.iter().map(|b| format!("{b:02x}")).collect();
        let train_config = TrainConfig {
            learning_rate: r.f64()?,
            epochs: r.u64()? as usize,
            batch_size: r.u64()? as usize,
            avu_weight: r.f64()?,
            hidden_dim: r.u64()? as usize,
            evidence_fn,
            seed: r.u64()?,
        };
        let mut branches = Vec::with_capacity(2);
        for expected in [Branch::Spatial, Branch::Frequency] {
            let tag = r.u32()?;
            if tag != branch_tag(expected) {
                return Err(Error::Format(format!("unexpected branch tag {tag}")));
            }
            let input = r.u32()? as usize;
            let hidden = r.u32()? as usize;
            let k = r.u32()? as usize;
            if k != class_count {
                return Err(Error::Format("branch class count differs from header".into()));
            }
            let standardizer =
                Standardizer::from_parts(Array1::from(r.f64s(input)?), Array1::from(r.f64s(input)?))?;
            let to_err = |e: ndarray::ShapeError| Error::Format(e.to_string());
            let w1 = Array2::from_shape_vec((hidden, input), r.f64s(hidden * input)?).map_err(to_err)?;
            let b1 = Array1::from(r.f64s(hidden)?);
            let w2 = Array2::from_shape_vec((k, hidden), r.f64s(k * hidden)?).map_err(to_err)?;
            let b2 = Array1::from(r.f64s(k)?);
            let network = BranchNetwork::from_parts(w1, b1, w2, b2)?;
            branches.push(BranchModel::new(expected, standardizer, network)?);
        }
        r.expect_end()?;
        let frequency = branches.pop().expect("two branches");
        let spatial = branches.pop().expect("two branches");
        Ok(Self {
            model: DualBranchModel::new(spatial, frequency, evidence_fn)?,
            train_config,
            dataset_hash,
        })
    }
}
