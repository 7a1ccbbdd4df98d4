//! Checkpoint layout: a text manifest (one tab-separated record per tensor:
//! name, comma-joined shape, byte offset, frozen flag) next to a blob of
//! little-endian `f32` values in manifest order. Adam moments, when
//! present, use the same scheme in `adam.manifest` / `adam.bin`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{EncoderConfig, ModelError};
use crate::autodiff::{AdamState, ParamStore, Tensor};

pub const MODEL_MANIFEST: &str = "model.manifest";
pub const MODEL_BLOB: &str = "model.bin";
pub const ADAM_MANIFEST: &str = "adam.manifest";
pub const ADAM_BLOB: &str = "adam.bin";

const MODEL_HEADER: &str = "# metaner tensors v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub frozen: bool,
}

impl ManifestRecord {
    pub fn byte_len(&self) -> usize {
        4 * self.shape.iter().product::<usize>()
    }
}

fn shape_text(shape: &[usize]) -> String {
    if shape.is_empty() {
        "-".to_string()
    } else {
        shape.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

/// Writes a manifest (after `header`) and the matching blob.
pub fn write_manifest_and_blob<M: Write, B: Write>(
    mut manifest: M,
    mut blob: B,
    header: &str,
    tensors: &[(&str, &Tensor, bool)],
) -> std::io::Result<()> {
    writeln!(manifest, "{header}")?;
    let mut offset = 0usize;
    for (name, tensor, frozen) in tensors {
        writeln!(
            manifest,
            "{name}\t{}\t{offset}\t{}",
            shape_text(tensor.shape()),
            u8::from(*frozen)
        )?;
        let mut bytes = Vec::with_capacity(4 * tensor.len());
        for &v in tensor.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        blob.write_all(&bytes)?;
        offset += bytes.len();
    }
    Ok(())
}

/// Parses manifest records, returning the header line separately.
pub fn read_manifest(text: &str) -> Result<(String, Vec<ManifestRecord>), ModelError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ModelError::Checkpoint("empty manifest".into()))?
        .to_string();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| ModelError::Checkpoint(format!("manifest line {}: {what}", i + 2));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 tab-separated fields"));
        }
        let shape = if fields[1] == "-" {
            Vec::new()
        } else {
            fields[1]
                .split(',')
                .map(|d| d.parse::<usize>().map_err(|_| bad("bad shape")))
                .collect::<Result<_, _>>()?
        };
        let offset = fields[2].parse().map_err(|_| bad("bad offset"))?;
        let frozen = match fields[3] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("frozen flag must be 0 or 1")),
        };
        records.push(ManifestRecord {
            name: fields[0].to_string(),
            shape,
            offset,
            frozen,
        });
    }
    Ok((header, records))
}

/// Decodes the tensor of `record` from `blob`.
pub fn tensor_from_blob(record: &ManifestRecord, blob: &[u8]) -> Result<Tensor, ModelError> {
    let end = record.offset + record.byte_len();
    let bytes = blob.get(record.offset..end).ok_or_else(|| {
        ModelError::Checkpoint(format!("blob too short for tensor '{}'", record.name))
    })?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Tensor::new(record.shape.clone(), data))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub adam: Option<AdamState>,
}

pub fn save_checkpoint(
    dir: &Path,
    params: &ParamStore,
    adam: Option<&AdamState>,
) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let tensors: Vec<(&str, &Tensor, bool)> = params
        .iter()
        .map(|(n, t)| (n, t, params.is_frozen(n)))
        .collect();
    let mut manifest = Vec::new();
    let mut blob = Vec::new();
    write_manifest_and_blob(&mut manifest, &mut blob, MODEL_HEADER, &tensors)?;
    fs::write(dir.join(MODEL_MANIFEST), manifest)?;
    fs::write(dir.join(MODEL_BLOB), blob)?;

    if let Some(state) = adam {
        let names: Vec<&str> = state.moment_names().collect();
        let moment_names: Vec<(String, String)> = names
            .iter()
            .map(|n| (format!("{n}.m"), format!("{n}.v")))
            .collect();
        let mut records: Vec<(&str, &Tensor, bool)> = Vec::new();
        for (n, (m_name, v_name)) in names.iter().zip(&moment_names) {
            records.push((m_name, state.first_moment(n).expect("moment"), false));
            records.push((v_name, state.second_moment(n).expect("moment"), false));
        }
        let header = format!(
            "# metaner adam v1 step={} beta1={} beta2={} epsilon={}",
            state.step_count(),
            state.beta1,
            state.beta2,
            state.epsilon
        );
        let mut manifest = Vec::new();
        let mut blob = Vec::new();
        write_manifest_and_blob(&mut manifest, &mut blob, &header, &records)?;
        fs::write(dir.join(ADAM_MANIFEST), manifest)?;
        fs::write(dir.join(ADAM_BLOB), blob)?;
    }
    Ok(())
}

fn header_value<'h>(header: &'h str, key: &str) -> Result<&'h str, ModelError> {
    header
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| ModelError::Checkpoint(format!("adam header lacks '{key}'")))
}

/// Loads a checkpoint and checks every tensor against `config`.
pub fn load_checkpoint(dir: &Path, config: &EncoderConfig) -> Result<Checkpoint, ModelError> {
    let text = fs::read_to_string(dir.join(MODEL_MANIFEST))?;
    let blob = fs::read(dir.join(MODEL_BLOB))?;
    let (header, records) = read_manifest(&text)?;
    if header != MODEL_HEADER {
        return Err(ModelError::Checkpoint(format!("unexpected header '{header}'")));
    }
    let expected = config.parameter_shapes();
    if expected.len() != records.len() {
        return Err(ModelError::Checkpoint(format!(
            "config expects {} tensors, checkpoint has {}",
            expected.len(),
            records.len()
        )));
    }
    let mut params = ParamStore::new();
    for ((name, shape), rec) in expected.iter().zip(&records) {
        if *name != rec.name || *shape != rec.shape {
            return Err(ModelError::Checkpoint(format!(
                "expected {name} {shape:?}, found {} {:?}",
                rec.name, rec.shape
            )));
        }
        params.insert(rec.name.clone(), tensor_from_blob(rec, &blob)?);
        if rec.frozen {
            params.set_frozen(&rec.name, true)?;
        }
    }

    let adam_manifest = dir.join(ADAM_MANIFEST);
    let adam = if adam_manifest.exists() {
        let text = fs::read_to_string(adam_manifest)?;
        let blob = fs::read(dir.join(ADAM_BLOB))?;
        let (header, records) = read_manifest(&text)?;
        let parse = |key: &str| -> Result<f64, ModelError> {
            header_value(&header, key)?
                .parse()
                .map_err(|_| ModelError::Checkpoint(format!("bad adam '{key}'")))
        };
        let step = header_value(&header, "step")?
            .parse::<u64>()
            .map_err(|_| ModelError::Checkpoint("bad adam step".into()))?;
        let mut state = AdamState::new(parse("beta1")?, parse("beta2")?, parse("epsilon")?);
        let mut moments = Vec::new();
        for pair in records.chunks(2) {
            let [m, v] = pair else {
                return Err(ModelError::Checkpoint("adam moments must come in pairs".into()));
            };
            let name = m
                .name
                .strip_suffix(".m")
                .ok_or_else(|| ModelError::Checkpoint(format!("bad moment name '{}'", m.name)))?;
            match params.get(name) {
                Some(p) if p.shape() == m.shape.as_slice() && m.shape == v.shape => {}
                _ => {
                    return Err(ModelError::Checkpoint(format!(
                        "adam moment '{name}' does not match a parameter"
                    )))
                }
            }
            moments.push((
                name.to_string(),
                tensor_from_blob(m, &blob)?,
                tensor_from_blob(v, &blob)?,
            ));
        }
        state.restore(step, moments);
        Some(state)
    } else {
        None
    };
    Ok(Checkpoint { params, adam })
}
