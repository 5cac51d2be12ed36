//! Binary model files.
//!
//! Layout, all integers little-endian, reals as IEEE-754 bit patterns:
//!
//! ```text
//! "HGMODEL"  u32 schema_version  u8 algorithm  u64 seed
//! u32 n, n × (str key, str value)          hyperparameters
//! 12 × f64 mean, 12 × f64 std               standardizer
//! u32 n, n × str                            label set
//! payload                                    per algorithm, see `write_payload`
//! ```
//!
//! Strings are a `u32` byte length followed by UTF-8.

use std::path::Path;

use healthguard_core::classifiers::ann::{Dense, Mlp};
use healthguard_core::classifiers::tree::{DecisionTree, Node, RandomForest};
use healthguard_core::classifiers::{Algorithm, Hyperparams, Knn, Model, Parameters, Standardizer};
use healthguard_core::domain::{ConditionLabel, NUM_CLASSES, NUM_FEATURES, VECTOR_DIM};
use healthguard_core::pipeline::SCHEMA_VERSION;

use crate::error::CliError;

pub const MAGIC: &[u8; 7] = b"HGMODEL";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatError {
    pub offset: usize,
    pub message: String,
}

impl std::fmt::Display for FormatError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "byte {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for FormatError {}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, FormatError> {
        Err(FormatError { offset: self.pos, message: message.into() })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return self.fail(format!("truncated: needed {n} more bytes, {} left", self.buf.len() - self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_bits(self.u64()?))
    }
    /// A count of items that each occupy at least `min_bytes`, checked against what is left.
    fn len(&mut self, min_bytes: usize) -> Result<usize, FormatError> {
        let at = self.pos;
        let n = self.u64()?;
        if n.saturating_mul(min_bytes as u64) > (self.buf.len() - self.pos) as u64 {
            return Err(FormatError { offset: at, message: format!("count {n} exceeds the remaining data") });
        }
        Ok(n as usize)
    }
    fn str(&mut self) -> Result<&'a str, FormatError> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let bytes = self.take(n)?;
        std::str::from_utf8(bytes).map_err(|_| FormatError { offset: at, message: "string is not UTF-8".into() })
    }
}

fn write_tree(w: &mut Writer, t: &DecisionTree) {
    w.len(t.nodes.len());
    for n in &t.nodes {
        match n {
            Node::Leaf { counts } => {
                w.u8(0);
                counts.iter().for_each(|&c| w.u32(c));
            }
            Node::Split { feature, threshold, left, right } => {
                w.u8(1);
                w.u32(*feature as u32);
                w.f64(*threshold);
                w.len(*left);
                w.len(*right);
            }
        }
    }
}

/// Tag, feature, threshold and two child indices; leaves are larger.
const SPLIT_NODE_BYTES: usize = 1 + 4 + 8 + 8 + 8;

fn read_tree(r: &mut Reader) -> Result<DecisionTree, FormatError> {
    let n = r.len(SPLIT_NODE_BYTES)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(match r.u8()? {
            0 => {
                let mut counts = [0u32; NUM_CLASSES];
                for c in &mut counts {
                    *c = r.u32()?;
                }
                Node::Leaf { counts }
            }
            1 => Node::Split {
                feature: r.u32()? as usize,
                threshold: r.f64()?,
                left: r.u64()? as usize,
                right: r.u64()? as usize,
            },
            t => return r.fail(format!("unknown tree node tag {t}")),
        });
    }
    Ok(DecisionTree { nodes })
}

fn write_payload(w: &mut Writer, p: &Parameters) {
    match p {
        Parameters::Knn(k) => {
            w.len(k.points.len());
            for (pt, &label) in k.points.iter().zip(&k.labels) {
                pt.iter().for_each(|&v| w.f64(v));
                w.u8(label);
            }
        }
        Parameters::Tree(t) => write_tree(w, t),
        Parameters::Forest(f) => {
            w.len(f.trees.len());
            f.trees.iter().for_each(|t| write_tree(w, t));
        }
        Parameters::Ann(net) => {
            w.len(net.layers.len());
            for l in &net.layers {
                w.u32(l.inputs as u32);
                w.u32(l.outputs as u32);
                l.weights.iter().chain(&l.bias).for_each(|&v| w.f64(v));
            }
        }
    }
}

fn read_payload(r: &mut Reader, algorithm: Algorithm, hp: &Hyperparams) -> Result<Parameters, FormatError> {
    Ok(match algorithm {
        Algorithm::Knn => {
            let n = r.len(8 * VECTOR_DIM + 1)?;
            let mut points = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let mut p = [0.0; VECTOR_DIM];
                for v in &mut p {
                    *v = r.f64()?;
                }
                points.push(p);
                labels.push(r.u8()?);
            }
            Parameters::Knn(Knn::new(hp.knn_k, points, labels))
        }
        Algorithm::Dt => Parameters::Tree(read_tree(r)?),
        Algorithm::Rf => {
            let n = r.len(8)?;
            let trees = (0..n).map(|_| read_tree(r)).collect::<Result<_, _>>()?;
            Parameters::Forest(RandomForest { trees })
        }
        Algorithm::Ann => {
            let n = r.len(8)?;
            let mut layers = Vec::with_capacity(n);
            for _ in 0..n {
                let inputs = r.u32()? as usize;
                let outputs = r.u32()? as usize;
                let count = inputs.saturating_mul(outputs);
                if count.saturating_add(outputs).saturating_mul(8) > r.buf.len() - r.pos {
                    return r.fail(format!("layer {inputs}×{outputs} exceeds the remaining data"));
                }
                let weights = (0..count).map(|_| r.f64()).collect::<Result<_, _>>()?;
                let bias = (0..outputs).map(|_| r.f64()).collect::<Result<_, _>>()?;
                layers.push(Dense { inputs, outputs, weights, bias });
            }
            Parameters::Ann(Mlp { layers })
        }
    })
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(model.schema_version);
    w.u8(model.algorithm.tag());
    w.u64(model.seed);
    let entries = model.hyperparams.entries();
    w.u32(entries.len() as u32);
    for (k, v) in entries {
        w.str(k);
        w.str(&v);
    }
    model.standardizer.mean.iter().chain(&model.standardizer.std).for_each(|&v| w.f64(v));
    w.u32(model.label_set.len() as u32);
    model.label_set.iter().for_each(|l| w.str(l.name()));
    write_payload(&mut w, &model.parameters);
    w.0
}

/// Decodes and validates a model; nothing is returned unless the whole buffer is consistent.
pub fn decode(buf: &[u8]) -> Result<Model, FormatError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(FormatError { offset: 0, message: "not a model file (bad magic)".into() });
    }
    let at = r.pos;
    let schema_version = r.u32()?;
    if schema_version != SCHEMA_VERSION {
        return Err(FormatError {
            offset: at,
            message: format!("schema version {schema_version} is not supported (expected {SCHEMA_VERSION})"),
        });
    }
    let at = r.pos;
    let tag = r.u8()?;
    let algorithm =
        Algorithm::from_tag(tag).ok_or_else(|| FormatError { offset: at, message: format!("unknown algorithm tag {tag}") })?;
    let seed = r.u64()?;
    let mut hyperparams = Hyperparams::default();
    for _ in 0..r.u32()? {
        let at = r.pos;
        let (k, v) = (r.str()?, r.str()?);
        hyperparams.set(k, v).map_err(|e| FormatError { offset: at, message: e.to_string() })?;
    }
    let mut standardizer = Standardizer::identity();
    for m in &mut standardizer.mean {
        *m = r.f64()?;
    }
    for s in &mut standardizer.std[..NUM_FEATURES] {
        *s = r.f64()?;
    }
    let mut label_set = Vec::new();
    for _ in 0..r.u32()? {
        let at = r.pos;
        let name = r.str()?;
        label_set.push(
            name.parse::<ConditionLabel>().map_err(|e| FormatError { offset: at, message: e.to_string() })?,
        );
    }
    let payload_at = r.pos;
    let parameters = read_payload(&mut r, algorithm, &hyperparams)?;
    if r.pos != buf.len() {
        return r.fail(format!("{} trailing bytes", buf.len() - r.pos));
    }
    let model = Model { algorithm, hyperparams, standardizer, parameters, label_set, schema_version, seed };
    model.validate().map_err(|e| FormatError { offset: payload_at, message: e.to_string() })?;
    Ok(model)
}

pub fn save(path: &Path, model: &Model) -> Result<(), CliError> {
    std::fs::write(path, encode(model)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Model, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| CliError::format(path, e))
}
