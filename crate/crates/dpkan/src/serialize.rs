//! Versioned binary model container.
//!
//! Layout (all integers little-endian unless noted):
//!   magic        5 bytes  "DPKAN"
//!   version      u32      currently 1
//!   layer_count  u32
//!   per layer:
//!     kind       u8       0 = kan, 1 = fasterkan, 2 = linear
//!     kan:       n_in u32, n_out u32, grid_size u32, degree u32,
//!                lo f64, hi f64, coeffs, w_b, w_s (f64 payloads)
//!     fasterkan: n_in u32, n_out u32, num_grids u32,
//!                grid_min f64, grid_max f64, inv_denominator f64,
//!                ln_gamma, ln_beta, weights (f64 payloads)
//!     linear:    n_in u32, n_out u32, activation u8 (0 none, 1 relu),
//!                weights, bias (f64 payloads)
//! Parameter payloads are little-endian f64 in flattening order.

use crate::basis::{BSplineGrid, RswafGrid};
use crate::error::{Error, Result};
use crate::layers::{Activation, FasterKanLayer, KanLayer, Layer, LinearLayer, Model};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Cursor, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 5] = b"DPKAN";
pub const FORMAT_VERSION: u32 = 1;

// Guards against absurd dimensions from corrupt headers before allocating.
const MAX_DIM: u32 = 1 << 24;

pub fn serialize_model(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    buf.write_u32::<LittleEndian>(model.layers().len() as u32)
        .unwrap();
    for layer in model.layers() {
        match layer {
            Layer::Kan(l) => {
                buf.write_u8(0).unwrap();
                buf.write_u32::<LittleEndian>(l.n_in as u32).unwrap();
                buf.write_u32::<LittleEndian>(l.n_out as u32).unwrap();
                buf.write_u32::<LittleEndian>(l.grid.grid_size() as u32).unwrap();
                buf.write_u32::<LittleEndian>(l.grid.degree() as u32).unwrap();
                let (lo, hi) = l.grid.domain();
                buf.write_f64::<LittleEndian>(lo).unwrap();
                buf.write_f64::<LittleEndian>(hi).unwrap();
                write_f64s(&mut buf, &l.coeffs);
                write_f64s(&mut buf, &l.w_b);
                write_f64s(&mut buf, &l.w_s);
            }
            Layer::FasterKan(l) => {
                buf.write_u8(1).unwrap();
                buf.write_u32::<LittleEndian>(l.n_in as u32).unwrap();
                buf.write_u32::<LittleEndian>(l.n_out as u32).unwrap();
                buf.write_u32::<LittleEndian>(l.grid.num_grids() as u32).unwrap();
                let centers = l.grid.centers();
                buf.write_f64::<LittleEndian>(centers[0]).unwrap();
                buf.write_f64::<LittleEndian>(*centers.last().unwrap()).unwrap();
                buf.write_f64::<LittleEndian>(l.grid.inv_denominator()).unwrap();
                write_f64s(&mut buf, &l.ln_gamma);
                write_f64s(&mut buf, &l.ln_beta);
                write_f64s(&mut buf, &l.weights);
            }
            Layer::Linear(l) => {
                buf.write_u8(2).unwrap();
                buf.write_u32::<LittleEndian>(l.n_in as u32).unwrap();
                buf.write_u32::<LittleEndian>(l.n_out as u32).unwrap();
                buf.write_u8(match l.activation {
                    Activation::None => 0,
                    Activation::Relu => 1,
                })
                .unwrap();
                write_f64s(&mut buf, &l.weights);
                write_f64s(&mut buf, &l.bias);
            }
        }
    }
    buf
}

fn write_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        buf.write_f64::<LittleEndian>(v).unwrap();
    }
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Model> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 5];
    cur.read_exact(&mut magic)
        .map_err(|_| Error::Truncated("missing magic".into()))?;
    if &magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&magic[..4]);
        return Err(Error::BadMagic {
            expected: u32::from_be_bytes([b'D', b'P', b'K', b'A']),
            found: u32::from_be_bytes(found),
        });
    }
    let version = read_u32(&mut cur, "format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let n_layers = read_u32(&mut cur, "layer count")?;
    let mut layers = Vec::new();
    for li in 0..n_layers {
        let kind = cur
            .read_u8()
            .map_err(|_| Error::Truncated(format!("layer {li} kind")))?;
        let n_in = read_dim(&mut cur, li, "n_in")?;
        let n_out = read_dim(&mut cur, li, "n_out")?;
        let layer = match kind {
            0 => {
                let grid_size = read_dim(&mut cur, li, "grid_size")?;
                let degree = read_dim(&mut cur, li, "degree")?;
                let lo = read_f64(&mut cur, li, "domain lo")?;
                let hi = read_f64(&mut cur, li, "domain hi")?;
                let grid = BSplineGrid::new(grid_size, degree, lo, hi)
                    .map_err(|e| Error::Parse(format!("layer {li}: {e}")))?;
                let mut l = KanLayer::new(n_in, n_out, grid);
                read_f64s(&mut cur, li, "coeffs", &mut l.coeffs)?;
                read_f64s(&mut cur, li, "w_b", &mut l.w_b)?;
                read_f64s(&mut cur, li, "w_s", &mut l.w_s)?;
                Layer::Kan(l)
            }
            1 => {
                let num_grids = read_dim(&mut cur, li, "num_grids")?;
                let grid_min = read_f64(&mut cur, li, "grid_min")?;
                let grid_max = read_f64(&mut cur, li, "grid_max")?;
                let inv_den = read_f64(&mut cur, li, "inv_denominator")?;
                let grid = RswafGrid::new(num_grids, grid_min, grid_max, inv_den)
                    .map_err(|e| Error::Parse(format!("layer {li}: {e}")))?;
                let mut l = FasterKanLayer::new(n_in, n_out, grid);
                read_f64s(&mut cur, li, "ln_gamma", &mut l.ln_gamma)?;
                read_f64s(&mut cur, li, "ln_beta", &mut l.ln_beta)?;
                read_f64s(&mut cur, li, "weights", &mut l.weights)?;
                Layer::FasterKan(l)
            }
            2 => {
                let act = cur
                    .read_u8()
                    .map_err(|_| Error::Truncated(format!("layer {li} activation")))?;
                let activation = match act {
                    0 => Activation::None,
                    1 => Activation::Relu,
                    other => {
                        return Err(Error::Parse(format!(
                            "layer {li}: unknown activation code {other}"
                        )))
                    }
                };
                let mut l = LinearLayer::new(n_in, n_out, activation);
                read_f64s(&mut cur, li, "weights", &mut l.weights)?;
                read_f64s(&mut cur, li, "bias", &mut l.bias)?;
                Layer::Linear(l)
            }
            other => return Err(Error::Parse(format!("layer {li}: unknown kind {other}"))),
        };
        layers.push(layer);
    }
    if cur.position() != bytes.len() as u64 {
        return Err(Error::Parse(format!(
            "{} trailing bytes after last layer",
            bytes.len() as u64 - cur.position()
        )));
    }
    // Model::new re-validates adjacent dimensions from the headers.
    Model::new(layers).map_err(|e| match e {
        Error::Shape(s) => Error::Shape(s),
        other => other,
    })
}

fn read_u32(cur: &mut Cursor<&[u8]>, what: &str) -> Result<u32> {
    cur.read_u32::<LittleEndian>()
        .map_err(|_| Error::Truncated(what.into()))
}

fn read_dim(cur: &mut Cursor<&[u8]>, layer: u32, what: &str) -> Result<usize> {
    let v = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Truncated(format!("layer {layer} {what}")))?;
    if v == 0 || v > MAX_DIM {
        return Err(Error::Parse(format!(
            "layer {layer}: implausible {what} = {v}"
        )));
    }
    Ok(v as usize)
}

fn read_f64(cur: &mut Cursor<&[u8]>, layer: u32, what: &str) -> Result<f64> {
    cur.read_f64::<LittleEndian>()
        .map_err(|_| Error::Truncated(format!("layer {layer} {what}")))
}

fn read_f64s(cur: &mut Cursor<&[u8]>, layer: u32, what: &str, dst: &mut [f64]) -> Result<()> {
    for v in dst.iter_mut() {
        *v = cur
            .read_f64::<LittleEndian>()
            .map_err(|_| Error::Truncated(format!("layer {layer} {what} payload")))?;
    }
    Ok(())
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let bytes = serialize_model(model);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path)?;
    deserialize_model(&bytes)
}
