//! Length-prefixed JSON header + raw little-endian buffer checkpoint format.
//!
//! Layout: `u64` LE header length `H`, `H` bytes of JSON mapping each tensor
//! key to `{"dtype", "shape", "data_offsets"}` (plus an optional
//! `"__metadata__"` string map), then the tensor bytes. Keys are written in
//! sorted order, tensors packed back to back.

use std::collections::BTreeMap;
use std::path::Path;

use half::{bf16, f16};
use serde::{Deserialize, Serialize};

use super::{AdapterSet, LoraPair, LORA_A_SUFFIX, LORA_B_SUFFIX, META_ALPHA, META_TASK};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const METADATA_KEY: &str = "__metadata__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Dtype {
    F32,
    F16,
    BF16,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 | Dtype::BF16 => 2,
        }
    }
}

#[derive(Serialize)]
struct TensorEntry<'a> {
    dtype: &'a str,
    shape: [usize; 2],
    data_offsets: [u64; 2],
}

/// Counts gathered while reading a checkpoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadDiagnostics {
    /// Tensors that are not LoRA factors.
    pub ignored_tensors: usize,
    /// LoRA tensors stored as F16 or BF16 and widened to F32.
    pub widened_tensors: usize,
}

pub fn load_adapter(path: impl AsRef<Path>) -> Result<AdapterSet> {
    load_adapter_with_diagnostics(path).map(|(set, _)| set)
}

pub fn load_adapter_with_diagnostics(path: impl AsRef<Path>) -> Result<(AdapterSet, LoadDiagnostics)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "adapter".to_string());
    let (set, diag) = parse(&bytes, &stem).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        Error::Shape(m) => Error::Shape(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if diag.ignored_tensors > 0 {
        log::info!(
            "{}: ignored {} non-LoRA tensor(s)",
            path.display(),
            diag.ignored_tensors
        );
    }
    Ok((set, diag))
}

struct RawTensor {
    key: String,
    header_pos: u64,
    dtype: Option<Dtype>,
    dtype_name: String,
    shape: Vec<u64>,
    begin: u64,
    end: u64,
}

fn json_offset(header: &str, line: usize, column: usize) -> u64 {
    let mut offset = 0usize;
    for (i, l) in header.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)) as u64;
        }
        offset += l.len();
    }
    offset as u64
}

fn parse(bytes: &[u8], default_task: &str) -> Result<(AdapterSet, LoadDiagnostics)> {
    if bytes.len() < 8 {
        return Err(Error::format(
            0,
            format!("file is {} bytes, too short for the 8-byte header length", bytes.len()),
        ));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let available = (bytes.len() - 8) as u64;
    if header_len > available {
        return Err(Error::format(
            0,
            format!("header length {header_len} exceeds the {available} bytes that follow"),
        ));
    }
    let header_end = 8 + header_len as usize;
    let header = std::str::from_utf8(&bytes[8..header_end])
        .map_err(|e| Error::format(8 + e.valid_up_to() as u64, "header is not valid UTF-8"))?;
    let value: serde_json::Value = serde_json::from_str(header).map_err(|e| {
        Error::format(
            8 + json_offset(header, e.line(), e.column()),
            format!("malformed header JSON: {e}"),
        )
    })?;
    let serde_json::Value::Object(entries) = value else {
        return Err(Error::format(8, "header JSON is not an object"));
    };
    let buffer = &bytes[header_end..];
    let locate = |key: &str| -> u64 {
        let quoted = serde_json::to_string(key).unwrap_or_default();
        8 + header.find(&quoted).unwrap_or(0) as u64
    };

    let mut metadata = BTreeMap::new();
    let mut raw = Vec::new();
    for (key, entry) in &entries {
        let pos = locate(key);
        if key == METADATA_KEY {
            let serde_json::Value::Object(map) = entry else {
                return Err(Error::format(pos, "__metadata__ is not an object"));
            };
            for (k, v) in map {
                let serde_json::Value::String(s) = v else {
                    return Err(Error::format(
                        locate(k),
                        format!("metadata value for '{k}' is not a string"),
                    ));
                };
                metadata.insert(k.clone(), s.clone());
            }
            continue;
        }
        raw.push(parse_entry(key, entry, pos)?);
    }

    let mut diag = LoadDiagnostics::default();
    let mut a_parts: BTreeMap<String, Matrix> = BTreeMap::new();
    let mut b_parts: BTreeMap<String, Matrix> = BTreeMap::new();
    for t in &raw {
        let data_pos = header_end as u64 + t.begin;
        if t.end < t.begin || t.end > buffer.len() as u64 {
            return Err(Error::format(
                data_pos,
                format!(
                    "tensor '{}': data_offsets [{}, {}] outside the {}-byte buffer",
                    t.key,
                    t.begin,
                    t.end,
                    buffer.len()
                ),
            ));
        }
        let (prefix, is_a) = if let Some(p) = t.key.strip_suffix(LORA_A_SUFFIX) {
            (p, true)
        } else if let Some(p) = t.key.strip_suffix(LORA_B_SUFFIX) {
            (p, false)
        } else {
            diag.ignored_tensors += 1;
            continue;
        };
        let Some(dtype) = t.dtype else {
            return Err(Error::format(
                t.header_pos,
                format!("tensor '{}': unsupported dtype '{}'", t.key, t.dtype_name),
            ));
        };
        if t.shape.len() != 2 || t.shape.contains(&0) {
            return Err(Error::Validation(format!(
                "tensor '{}': LoRA factors must be non-empty 2-D, got shape {:?}",
                t.key, t.shape
            )));
        }
        let (rows, cols) = (t.shape[0] as usize, t.shape[1] as usize);
        let expected = (rows * cols * dtype.size()) as u64;
        if t.end - t.begin != expected {
            return Err(Error::format(
                data_pos,
                format!(
                    "tensor '{}': {} bytes for shape {:?} {:?}, expected {expected}",
                    t.key,
                    t.end - t.begin,
                    t.shape,
                    dtype
                ),
            ));
        }
        let payload = &buffer[t.begin as usize..t.end as usize];
        let values = decode(payload, dtype);
        if dtype != Dtype::F32 {
            diag.widened_tensors += 1;
        }
        let m = Matrix::new(rows, cols, values).map_err(|e| {
            Error::Validation(format!("tensor '{}': {e}", t.key))
        })?;
        if is_a {
            a_parts.insert(prefix.to_string(), m);
        } else {
            b_parts.insert(prefix.to_string(), m);
        }
    }

    let alpha = match metadata.remove(META_ALPHA) {
        Some(s) => Some(s.trim().parse::<f32>().ok().filter(|a| a.is_finite() && *a >= 0.0).ok_or_else(
            || Error::Validation(format!("metadata lora_alpha '{s}' is not a non-negative number")),
        )?),
        None => None,
    };
    let task_name = metadata
        .remove(META_TASK)
        .unwrap_or_else(|| default_task.to_string());

    let mut set = AdapterSet::new(task_name);
    set.metadata = metadata;
    for (prefix, a) in a_parts {
        let Some(b) = b_parts.remove(&prefix) else {
            return Err(Error::Validation(format!(
                "module '{prefix}' has {prefix}{LORA_A_SUFFIX} but no {prefix}{LORA_B_SUFFIX}"
            )));
        };
        let mut pair = LoraPair::new(prefix.clone(), a, b)?;
        pair.alpha = alpha;
        set.insert(pair)?;
    }
    if let Some(prefix) = b_parts.keys().next() {
        return Err(Error::Validation(format!(
            "module '{prefix}' has {prefix}{LORA_B_SUFFIX} but no {prefix}{LORA_A_SUFFIX}"
        )));
    }
    if set.is_empty() {
        return Err(Error::Validation("no LoRA tensor pairs found".into()));
    }
    Ok((set, diag))
}

fn parse_entry(key: &str, entry: &serde_json::Value, pos: u64) -> Result<RawTensor> {
    let bad = |what: &str| Error::format(pos, format!("tensor '{key}': {what}"));
    let obj = entry.as_object().ok_or_else(|| bad("entry is not an object"))?;
    let dtype_name = obj
        .get("dtype")
        .and_then(|v| v.as_str())
        .ok_or_else(|| bad("missing string field 'dtype'"))?
        .to_string();
    let dtype = match dtype_name.as_str() {
        "F32" => Some(Dtype::F32),
        "F16" => Some(Dtype::F16),
        "BF16" => Some(Dtype::BF16),
        _ => None,
    };
    let shape = obj
        .get("shape")
        .and_then(|v| v.as_array())
        .ok_or_else(|| bad("missing array field 'shape'"))?
        .iter()
        .map(|d| d.as_u64().ok_or_else(|| bad("shape entries must be non-negative integers")))
        .collect::<Result<Vec<_>>>()?;
    let offsets = obj
        .get("data_offsets")
        .and_then(|v| v.as_array())
        .filter(|a| a.len() == 2)
        .ok_or_else(|| bad("'data_offsets' must be a two-element array"))?;
    let begin = offsets[0]
        .as_u64()
        .ok_or_else(|| bad("data_offsets must be non-negative integers"))?;
    let end = offsets[1]
        .as_u64()
        .ok_or_else(|| bad("data_offsets must be non-negative integers"))?;
    Ok(RawTensor {
        key: key.to_string(),
        header_pos: pos,
        dtype,
        dtype_name,
        shape,
        begin,
        end,
    })
}

fn decode(payload: &[u8], dtype: Dtype) -> Vec<f32> {
    match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F16 => payload
            .chunks_exact(2)
            .map(|c| f16::from_bits(u16::from_le_bytes(c.try_into().unwrap())).to_f32())
            .collect(),
        Dtype::BF16 => payload
            .chunks_exact(2)
            .map(|c| bf16::from_bits(u16::from_le_bytes(c.try_into().unwrap())).to_f32())
            .collect(),
    }
}

/// Serializes an adapter set to container bytes (always F32).
pub(crate) fn encode(set: &AdapterSet) -> Result<Vec<u8>> {
    if set.is_empty() {
        return Err(Error::Validation(format!(
            "refusing to save task '{}' with no modules",
            set.task_name
        )));
    }
    let mut tensors: BTreeMap<String, &Matrix> = BTreeMap::new();
    for pair in set.modules.values() {
        tensors.insert(format!("{}{LORA_A_SUFFIX}", pair.module_name), &pair.a);
        tensors.insert(format!("{}{LORA_B_SUFFIX}", pair.module_name), &pair.b);
    }

    let mut header = serde_json::Map::new();
    let mut offset = 0u64;
    for (key, m) in &tensors {
        let len = (m.numel() * 4) as u64;
        let entry = TensorEntry {
            dtype: "F32",
            shape: [m.rows(), m.cols()],
            data_offsets: [offset, offset + len],
        };
        header.insert(key.clone(), serde_json::to_value(entry).expect("entry serializes"));
        offset += len;
    }
    let mut metadata = set.metadata.clone();
    metadata.insert(META_TASK.to_string(), set.task_name.clone());
    if let Some(alpha) = set.alpha()? {
        metadata.insert(META_ALPHA.to_string(), alpha.to_string());
    }
    header.insert(
        METADATA_KEY.to_string(),
        serde_json::to_value(&metadata).expect("metadata serializes"),
    );
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset as usize);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for m in tensors.values() {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes an adapter set; the file appears only once fully written.
pub fn save_adapter(set: &AdapterSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(set)?;
    crate::io::write_atomic(path.as_ref(), &bytes)
}
