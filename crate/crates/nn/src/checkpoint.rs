//! `OBSNN1` checkpoints: the preset and class count identify the
//! architecture; the body is every parameter followed by the running
//! statistics of each layer, as little-endian `f32`, in layer order.
//!
//! ```text
//! "OBSNN1" | preset u8 | classes u32 | iteration u64 | value count u64 | f32 × count
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::float::Float;
use crate::network::Network;
use crate::presets::{build_preset, Preset};

const MAGIC: &[u8; 6] = b"OBSNN1";
const HEADER_LEN: usize = 6 + 1 + 4 + 8 + 8;

fn value_count<F: Float>(net: &Network<F>) -> usize {
    net.layers()
        .iter()
        .map(|l| l.param_count() + l.running().len())
        .sum()
}

pub fn encode_checkpoint<F: Float>(net: &Network<F>) -> Result<Vec<u8>> {
    let preset = net
        .preset()
        .ok_or_else(|| Error::Argument("only preset networks can be checkpointed".into()))?;
    let count = value_count(net);
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * count);
    out.extend_from_slice(MAGIC);
    out.push(preset.id());
    out.extend_from_slice(&(net.class_count() as u32).to_le_bytes());
    out.extend_from_slice(&net.iteration().to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for layer in net.layers() {
        let values = layer
            .params()
            .iter()
            .flat_map(|p| p.value.iter())
            .chain(layer.running());
        for v in values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Network<f32>> {
    let bad = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < HEADER_LEN || &bytes[..6] != MAGIC {
        return Err(bad("not an OBSNN1 checkpoint".into()));
    }
    let preset = Preset::from_id(bytes[6]).ok_or_else(|| bad(format!("unknown preset id {}", bytes[6])))?;
    let classes = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let iteration = u64::from_le_bytes(bytes[11..19].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[19..27].try_into().unwrap()) as usize;
    let mut net: Network<f32> = build_preset(preset, classes, 0).map_err(|e| bad(e.to_string()))?;
    if count != value_count(&net) {
        return Err(bad(format!(
            "{count} stored values, {preset} with {classes} classes needs {}",
            value_count(&net)
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * count {
        return Err(bad(format!("body is {} bytes, expected {}", body.len(), 4 * count)));
    }
    let mut values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for layer in net.layers_mut() {
        for p in layer.params_mut() {
            p.value.iter_mut().for_each(|v| *v = values.next().unwrap());
        }
        layer.running_mut().iter_mut().for_each(|v| *v = values.next().unwrap());
    }
    net.set_iteration(iteration);
    Ok(net)
}

pub fn save_checkpoint<F: Float>(net: &Network<F>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(net)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes, path)
}

/// One line per layer: index, layer, output shape and parameter count.
pub fn summary<F: Float>(net: &Network<F>) -> String {
    let mut s = String::new();
    if let Some(p) = net.preset() {
        let _ = writeln!(s, "preset {p}, {} classes, iteration {}", net.class_count(), net.iteration());
    }
    let _ = writeln!(s, "input {}", net.input_shape());
    for (i, l) in net.layers().iter().enumerate() {
        let _ = writeln!(
            s,
            "({:>2}) {:<40} -> {:<14} params {}",
            i + 1,
            l.spec().to_string(),
            l.output_shape().to_string(),
            l.param_count()
        );
    }
    let _ = writeln!(s, "total parameters {}", net.param_count());
    s
}
