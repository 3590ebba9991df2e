//! Binary model file format, the payload a trained model travels in.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SADM" | version u16 | algorithm id u8 | schema_hash u64 |
//! trained_at f64 | payload length u32 | payload | CRC32 of everything prior
//! ```
//!
//! The payload is a canonical encoding of the algorithm parameters,
//! training provenance, and weights, so identical training inputs produce
//! identical bytes. Wall-clock training time is deliberately left out for
//! that reason; a deserialized model reports zero for it.

use thiserror::Error;

use crate::featurize::{schema_hash, ClassCounts, FEATURE_DIM};
use crate::learn::forest::{self};
use crate::learn::gbdt::{GbdtModel, RegNode, RegTree};
use crate::learn::tree::{ClassNode, ClassTree};
use crate::learn::{
    Algorithm, AlgorithmKind, AlgorithmSpec, DetectionModel, ForestParams, GbdtParams, KnnParams,
    ModelPayload, TreeParams,
};
use crate::types::{Label, TimeWindow};

const MAGIC: &[u8; 4] = b"SADM";
const VERSION: u16 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("bad model magic")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u16),
    #[error("schema mismatch: file {found:#018x}, expected {expected:#018x}")]
    SchemaMismatch { expected: u64, found: u64 },
    #[error("corrupt model payload: {0}")]
    CorruptPayload(&'static str),
}

fn algorithm_id(kind: AlgorithmKind) -> u8 {
    match kind {
        AlgorithmKind::Knn => 1,
        AlgorithmKind::DecisionTree => 2,
        AlgorithmKind::RandomForest => 3,
        AlgorithmKind::Gbdt => 4,
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn label(&mut self, l: Label) {
        self.u8(if l.is_malicious() { 1 } else { 0 });
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, at: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.at + n > self.buf.len() {
            return Err(CodecError::CorruptPayload("payload ends early"));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn label(&mut self) -> Result<Label, CodecError> {
        match self.u8()? {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Malicious),
            _ => Err(CodecError::CorruptPayload("bad label byte")),
        }
    }
    fn done(&self) -> bool {
        self.at == self.buf.len()
    }
}

fn write_class_tree(w: &mut Writer, tree: &ClassTree) {
    w.u32(tree.nodes.len() as u32);
    for node in &tree.nodes {
        match node {
            ClassNode::Leaf { benign, malicious } => {
                w.u8(0);
                w.u32(*benign);
                w.u32(*malicious);
            }
            ClassNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u8(1);
                w.u8(*feature);
                w.f64(*threshold);
                w.u32(*left);
                w.u32(*right);
            }
        }
    }
}

fn read_class_tree(r: &mut Reader) -> Result<ClassTree, CodecError> {
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(CodecError::CorruptPayload("empty tree"));
    }
    let mut nodes = Vec::with_capacity(count);
    for _ in 0..count {
        let node = match r.u8()? {
            0 => ClassNode::Leaf {
                benign: r.u32()?,
                malicious: r.u32()?,
            },
            1 => {
                let feature = r.u8()?;
                if usize::from(feature) >= FEATURE_DIM {
                    return Err(CodecError::CorruptPayload("feature index out of range"));
                }
                let threshold = r.f64()?;
                let left = r.u32()?;
                let right = r.u32()?;
                if left as usize >= count || right as usize >= count {
                    return Err(CodecError::CorruptPayload("child index out of range"));
                }
                ClassNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                }
            }
            _ => return Err(CodecError::CorruptPayload("bad node tag")),
        };
        nodes.push(node);
    }
    Ok(ClassTree { nodes })
}

fn write_reg_tree(w: &mut Writer, tree: &RegTree) {
    w.u32(tree.nodes.len() as u32);
    for node in &tree.nodes {
        match node {
            RegNode::Leaf { value } => {
                w.u8(0);
                w.f64(*value);
            }
            RegNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u8(1);
                w.u8(*feature);
                w.f64(*threshold);
                w.u32(*left);
                w.u32(*right);
            }
        }
    }
}

fn read_reg_tree(r: &mut Reader) -> Result<RegTree, CodecError> {
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(CodecError::CorruptPayload("empty tree"));
    }
    let mut nodes = Vec::with_capacity(count);
    for _ in 0..count {
        let node = match r.u8()? {
            0 => RegNode::Leaf { value: r.f64()? },
            1 => {
                let feature = r.u8()?;
                if usize::from(feature) >= FEATURE_DIM {
                    return Err(CodecError::CorruptPayload("feature index out of range"));
                }
                let threshold = r.f64()?;
                let left = r.u32()?;
                let right = r.u32()?;
                if left as usize >= count || right as usize >= count {
                    return Err(CodecError::CorruptPayload("child index out of range"));
                }
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                }
            }
            _ => return Err(CodecError::CorruptPayload("bad node tag")),
        };
        nodes.push(node);
    }
    Ok(RegTree { nodes })
}

/// Serializes a model into the transfer format.
pub fn serialize_model(model: &DetectionModel) -> Vec<u8> {
    let mut payload = Writer::new();
    payload.u64(model.spec.rng_seed);
    payload.f64(model.train_window.start);
    payload.f64(model.train_window.end);
    payload.u64(model.class_counts.benign);
    payload.u64(model.class_counts.malicious);
    match (&model.spec.algorithm, &model.payload) {
        (Algorithm::Knn(p), ModelPayload::Knn { points, labels }) => {
            payload.u32(p.k as u32);
            payload.u32(points.len() as u32);
            for (point, label) in points.iter().zip(labels) {
                for v in point {
                    payload.f64(*v);
                }
                payload.label(*label);
            }
        }
        (Algorithm::DecisionTree(p), ModelPayload::Tree(tree)) => {
            match p.max_depth {
                None => payload.u8(0),
                Some(d) => {
                    payload.u8(1);
                    payload.u32(d);
                }
            }
            write_class_tree(&mut payload, tree);
        }
        (Algorithm::RandomForest(p), ModelPayload::Forest(trees)) => {
            payload.u32(p.n_trees as u32);
            payload.u32(p.max_features as u32);
            payload.u8(u8::from(p.bootstrap));
            payload.u32(trees.len() as u32);
            for tree in trees {
                write_class_tree(&mut payload, tree);
            }
        }
        (Algorithm::Gbdt(p), ModelPayload::Gbdt(g)) => {
            payload.u32(p.n_stages as u32);
            payload.f64(p.learning_rate);
            payload.u32(p.max_depth);
            payload.f64(g.base_score);
            payload.f64(g.learning_rate);
            payload.u32(g.stages.len() as u32);
            for tree in &g.stages {
                write_reg_tree(&mut payload, tree);
            }
        }
        _ => unreachable!("payload always matches the algorithm"),
    }

    let mut out = Writer::new();
    out.buf.extend_from_slice(MAGIC);
    out.u16(VERSION);
    out.u8(algorithm_id(model.spec.kind()));
    out.u64(model.schema_hash);
    out.f64(model.trained_at);
    out.u32(payload.buf.len() as u32);
    out.buf.extend_from_slice(&payload.buf);
    let crc = crc32fast::hash(&out.buf);
    out.u32(crc);
    out.buf
}

/// Inverse of [`serialize_model`]. The round trip preserves predictions
/// bit for bit; only the measured training time is reset to zero.
pub fn deserialize_model(bytes: &[u8]) -> Result<DetectionModel, CodecError> {
    // Fixed part: magic(4) version(2) algo(1) schema(8) trained_at(8) len(4) crc(4)
    if bytes.len() < 31 {
        return Err(CodecError::CorruptPayload("file shorter than header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(CodecError::CorruptPayload("checksum mismatch"));
    }
    let algo_id = bytes[6];
    let file_schema = u64::from_le_bytes(bytes[7..15].try_into().unwrap());
    let expected = schema_hash();
    if file_schema != expected {
        return Err(CodecError::SchemaMismatch {
            expected,
            found: file_schema,
        });
    }
    let trained_at = f64::from_le_bytes(bytes[15..23].try_into().unwrap());
    let payload_len = u32::from_le_bytes(bytes[23..27].try_into().unwrap()) as usize;
    if 27 + payload_len + 4 != bytes.len() {
        return Err(CodecError::CorruptPayload("length field mismatch"));
    }
    let mut r = Reader::new(&bytes[27..27 + payload_len]);

    let rng_seed = r.u64()?;
    let start = r.f64()?;
    let end = r.f64()?;
    if !(start.is_finite() && end.is_finite() && end > start) {
        return Err(CodecError::CorruptPayload("bad training window"));
    }
    let train_window = TimeWindow::new(start, end);
    let class_counts = ClassCounts {
        benign: r.u64()?,
        malicious: r.u64()?,
    };

    let (algorithm, payload) = match algo_id {
        1 => {
            let k = r.u32()? as usize;
            let n = r.u32()? as usize;
            let mut points = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let mut point = [0.0; FEATURE_DIM];
                for v in point.iter_mut() {
                    *v = r.f64()?;
                }
                points.push(point);
                labels.push(r.label()?);
            }
            if points.is_empty() {
                return Err(CodecError::CorruptPayload("knn model with no points"));
            }
            (
                Algorithm::Knn(KnnParams { k }),
                ModelPayload::Knn { points, labels },
            )
        }
        2 => {
            let max_depth = match r.u8()? {
                0 => None,
                1 => Some(r.u32()?),
                _ => return Err(CodecError::CorruptPayload("bad max_depth tag")),
            };
            let tree = read_class_tree(&mut r)?;
            (
                Algorithm::DecisionTree(TreeParams { max_depth }),
                ModelPayload::Tree(tree),
            )
        }
        3 => {
            let n_trees = r.u32()? as usize;
            let max_features = r.u32()? as usize;
            let bootstrap = r.u8()? != 0;
            let count = r.u32()? as usize;
            let mut trees = Vec::with_capacity(count);
            for _ in 0..count {
                trees.push(read_class_tree(&mut r)?);
            }
            if trees.is_empty() {
                return Err(CodecError::CorruptPayload("forest with no trees"));
            }
            (
                Algorithm::RandomForest(ForestParams {
                    n_trees,
                    max_features,
                    bootstrap,
                }),
                ModelPayload::Forest(trees),
            )
        }
        4 => {
            let n_stages = r.u32()? as usize;
            let learning_rate = r.f64()?;
            let max_depth = r.u32()?;
            let base_score = r.f64()?;
            let model_lr = r.f64()?;
            let count = r.u32()? as usize;
            let mut stages = Vec::with_capacity(count);
            for _ in 0..count {
                stages.push(read_reg_tree(&mut r)?);
            }
            (
                Algorithm::Gbdt(GbdtParams {
                    n_stages,
                    learning_rate,
                    max_depth,
                }),
                ModelPayload::Gbdt(GbdtModel {
                    base_score,
                    learning_rate: model_lr,
                    stages,
                }),
            )
        }
        other => {
            let _ = other;
            return Err(CodecError::CorruptPayload("unknown algorithm id"));
        }
    };
    if !r.done() {
        return Err(CodecError::CorruptPayload("trailing payload bytes"));
    }
    // Quick sanity for forests: votes only make sense over at least one tree.
    if let ModelPayload::Forest(trees) = &payload {
        let _ = forest::forest_predict(trees, &[0.0; FEATURE_DIM]);
    }
    Ok(DetectionModel {
        spec: AlgorithmSpec {
            algorithm,
            rng_seed,
        },
        schema_hash: file_schema,
        trained_at,
        train_window,
        class_counts,
        train_seconds: 0.0,
        payload,
    })
}
