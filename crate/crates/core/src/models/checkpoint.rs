use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::arch::{ArchDescriptor, ParamSpec};
use crate::models::{GeneratorModel, SimulatorModel};
use crate::nn::{ParamKind, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSCK";

/// Training provenance stored next to the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub epochs: usize,
    pub seed: u64,
    /// Where the per-epoch loss curve was written, if anywhere.
    #[serde(default)]
    pub loss_history: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    kind: ParamKind,
    dims: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchDescriptor,
    params: Vec<ParamEntry>,
    metadata: Metadata,
}

pub enum Model {
    Simulator(SimulatorModel),
    Generator(GeneratorModel),
}

/// A loaded checkpoint.
pub struct Checkpoint {
    pub model: Model,
    pub metadata: Metadata,
}

/// Borrowed view of either network for saving.
pub enum ModelRef<'a> {
    Simulator(&'a SimulatorModel),
    Generator(&'a GeneratorModel),
}

impl<'a> From<&'a SimulatorModel> for ModelRef<'a> {
    fn from(m: &'a SimulatorModel) -> Self {
        ModelRef::Simulator(m)
    }
}

impl<'a> From<&'a GeneratorModel> for ModelRef<'a> {
    fn from(m: &'a GeneratorModel) -> Self {
        ModelRef::Generator(m)
    }
}

fn fmt_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, message: message.into() }
}

pub fn encode_checkpoint<'a>(model: impl Into<ModelRef<'a>>, metadata: &Metadata) -> Result<Vec<u8>> {
    let (arch, store) = match model.into() {
        ModelRef::Simulator(m) => (ArchDescriptor::Simulator(m.arch().clone()), m.store()),
        ModelRef::Generator(m) => (ArchDescriptor::Generator(m.arch().clone()), m.store()),
    };
    let params: Vec<ParamEntry> = store
        .iter()
        .map(|(_, p)| ParamEntry { name: p.name.clone(), kind: p.kind, dims: p.value.dims().to_vec() })
        .collect();
    let header = serde_json::to_vec(&Header { arch, params, metadata: metadata.clone() })?;
    let mut out = Vec::with_capacity(12 + header.len() + 4 * store.iter().map(|(_, p)| p.value.len()).sum::<usize>());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, p) in store.iter() {
        for v in p.value.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(fmt_err(0, "not a checkpoint (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let end = usize::try_from(len).ok().and_then(|l| l.checked_add(12)).filter(|&e| e <= bytes.len());
    let end = end.ok_or_else(|| fmt_err(4, format!("descriptor length {len} exceeds file size {}", bytes.len())))?;
    let header: Header = serde_json::from_slice(&bytes[12..end])
        .map_err(|e| Error::Checkpoint(format!("descriptor: {e}")))?;

    let expected: Vec<ParamSpec> = header.arch.param_specs()?;
    if expected.len() != header.params.len() {
        return Err(Error::Checkpoint(format!(
            "descriptor lists {} arrays, architecture has {}",
            header.params.len(),
            expected.len()
        )));
    }
    for ((name, kind, dims), entry) in expected.iter().zip(&header.params) {
        if *name != entry.name || *kind != entry.kind || *dims != entry.dims {
            return Err(Error::Checkpoint(format!(
                "array `{}` {:?} does not match architecture `{name}` {dims:?}",
                entry.name, entry.dims
            )));
        }
    }

    let mut store = ParamStore::<f32>::new();
    let mut pos = end;
    for (name, kind, dims) in &expected {
        let id = store.register(name, *kind, dims)?;
        let dst = store.value_mut(id).values_mut();
        let need = 4 * dst.len();
        let chunk = bytes
            .get(pos..pos + need)
            .ok_or_else(|| fmt_err(pos, format!("truncated while reading `{name}`")))?;
        for (d, b) in dst.iter_mut().zip(chunk.chunks_exact(4)) {
            *d = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
        pos += need;
    }
    if pos != bytes.len() {
        return Err(fmt_err(pos, format!("{} trailing bytes", bytes.len() - pos)));
    }
    let model = match header.arch {
        ArchDescriptor::Simulator(a) => Model::Simulator(SimulatorModel::from_parts(a, store)),
        ArchDescriptor::Generator(a) => Model::Generator(GeneratorModel::from_parts(a, store)),
    };
    Ok(Checkpoint { model, metadata: header.metadata })
}

pub fn save_checkpoint<'a>(model: impl Into<ModelRef<'a>>, metadata: &Metadata, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model, metadata)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

pub fn load_simulator(path: impl AsRef<Path>) -> Result<(SimulatorModel, Metadata)> {
    let ck = load_checkpoint(path)?;
    match ck.model {
        Model::Simulator(m) => Ok((m, ck.metadata)),
        Model::Generator(_) => Err(Error::Checkpoint("expected a simulator checkpoint, found a generator".into())),
    }
}

pub fn load_generator(path: impl AsRef<Path>) -> Result<(GeneratorModel, Metadata)> {
    let ck = load_checkpoint(path)?;
    match ck.model {
        Model::Generator(m) => Ok((m, ck.metadata)),
        Model::Simulator(_) => Err(Error::Checkpoint("expected a generator checkpoint, found a simulator".into())),
    }
}
