//! NET v1 checkpoint format.
//!
//! ASCII header `NET 1 <n_encoder> <n_decoder> <n_head>`, newline, then for
//! each layer (encoder, decoder, head order) a line `<out> <in> <tag>` where
//! the tag is one of relu/sigmoid/linear/softmax, followed by out*in
//! little-endian float64 weights (row-major) and out float64 biases. Loads
//! run full structural validation, so a corrupt or inconsistent file never
//! yields a usable network.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use super::{Activation, LayerParams, NetworkParams};
use crate::imaging::files::{header_err, io_err, parse_field, read_header_line, FileError};

pub fn save_network(path: &Path, net: &NetworkParams) -> Result<(), FileError> {
    net.validate()
        .map_err(|e| header_err(path, format!("refusing to save invalid network: {e}")))?;
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "NET 1 {} {} {}", net.encoder.len(), net.decoder.len(), net.head.len())
        .map_err(|e| io_err(path, e))?;
    for layer in net.encoder.iter().chain(&net.decoder).chain(&net.head) {
        writeln!(w, "{} {} {}", layer.out_dim(), layer.in_dim(), layer.activation.tag())
            .map_err(|e| io_err(path, e))?;
        for v in layer.weights.data() {
            w.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))?;
        }
        for v in &layer.biases {
            w.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_network(path: &Path) -> Result<NetworkParams, FileError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let fields = read_header_line(&mut r, path)?;
    if fields.len() != 5 || fields[0] != "NET" || fields[1] != "1" {
        return Err(header_err(path, "expected `NET 1 <enc> <dec> <head>`"));
    }
    let n_enc: usize = parse_field(&fields, 2, "encoder layer count", path)?;
    let n_dec: usize = parse_field(&fields, 3, "decoder layer count", path)?;
    let n_head: usize = parse_field(&fields, 4, "head layer count", path)?;
    const MAX_LAYERS: usize = 64;
    if n_enc == 0 || n_dec == 0 || n_head == 0 || n_enc + n_dec + n_head > MAX_LAYERS {
        return Err(header_err(path, "implausible layer counts"));
    }

    let mut read_stack = |count: usize| -> Result<Vec<LayerParams>, FileError> {
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let fields = read_header_line(&mut r, path)?;
            if fields.len() != 3 {
                return Err(header_err(path, "expected `<out> <in> <tag>`"));
            }
            let out_dim: usize = parse_field(&fields, 0, "output dim", path)?;
            let in_dim: usize = parse_field(&fields, 1, "input dim", path)?;
            let activation = Activation::from_tag(&fields[2])
                .ok_or_else(|| header_err(path, format!("unknown activation tag `{}`", fields[2])))?;
            if out_dim == 0 || in_dim == 0 || out_dim.saturating_mul(in_dim) > 1 << 28 {
                return Err(header_err(path, "implausible layer dims"));
            }
            let weights = read_f64s(&mut r, out_dim * in_dim, path)?;
            let biases = read_f64s(&mut r, out_dim, path)?;
            layers.push(LayerParams {
                weights: Matrix::from_vec(out_dim, in_dim, weights),
                biases,
                activation,
            });
        }
        Ok(layers)
    };

    let encoder = read_stack(n_enc)?;
    let decoder = read_stack(n_dec)?;
    let head = read_stack(n_head)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(FileError::BadPayload { path: path.display().to_string() });
    }

    let net = NetworkParams { encoder, decoder, head };
    net.validate().map_err(|e| header_err(path, format!("inconsistent network: {e}")))?;
    Ok(net)
}

fn read_f64s(r: &mut impl Read, count: usize, path: &Path) -> Result<Vec<f64>, FileError> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|_| FileError::BadPayload { path: path.display().to_string() })?;
    let values: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(FileError::BadValue { path: path.display().to_string(), index });
    }
    Ok(values)
}
