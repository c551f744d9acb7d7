//! Encoder parameters, fast forward/backward passes, and checkpoints.

use std::path::Path;

use rand::Rng;

use crate::bytesio::{crc32, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::Frame;

/// One fully connected layer; `w` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub out_dim: usize,
    pub in_dim: usize,
}

/// Weights of the frame encoder: a trunk mapping a flattened frame to the
/// latent space, plus an optional scalar head for direct-reward and
/// classifier models. Rectifier nonlinearities sit between hidden layers;
/// the latent and head outputs are linear.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Layer>,
    pub trunk_layers: usize,
}

fn init_layer(out_dim: usize, in_dim: usize, seed: u64, layer_idx: u64) -> Layer {
    let mut rng = rng::stream(&[seed, layer_idx, rng::tag("diffnet/init")]);
    let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let w = (0..out_dim * in_dim)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Layer {
        w,
        b: vec![0.0; out_dim],
        out_dim,
        in_dim,
    }
}

impl EncoderParams {
    /// Embedding network: input -> hidden -> ... -> latent.
    pub fn embedding(input_dim: usize, hidden: &[usize], latent_dim: usize, seed: u64) -> Self {
        let mut layers = Vec::new();
        let mut prev = input_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(init_layer(h, prev, seed, i as u64));
            prev = h;
        }
        layers.push(init_layer(latent_dim, prev, seed, hidden.len() as u64));
        let trunk_layers = layers.len();
        Self {
            layers,
            trunk_layers,
        }
    }

    /// Embedding network with a scalar head on the latent.
    pub fn with_scalar_head(
        input_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        seed: u64,
    ) -> Self {
        let mut p = Self::embedding(input_dim, hidden, latent_dim, seed);
        p.layers
            .push(init_layer(1, latent_dim, seed, p.layers.len() as u64));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[self.trunk_layers - 1].out_dim
    }

    pub fn has_head(&self) -> bool {
        self.layers.len() > self.trunk_layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat coordinate accessors (layer-major, weights then biases) for the
    /// finite-difference checks.
    pub fn get_coord(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.w.len() {
                return l.w[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("coordinate out of range");
    }

    pub fn set_coord(&mut self, mut idx: usize, v: f64) {
        for l in &mut self.layers {
            if idx < l.w.len() {
                l.w[idx] = v;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = v;
                return;
            }
            idx -= l.b.len();
        }
        panic!("coordinate out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Whether relu follows layer `l` (hidden trunk layers only).
    pub(crate) fn relu_after(&self, l: usize) -> bool {
        l + 1 < self.trunk_layers
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Grads {
    pub fn zeros(params: &EncoderParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.0.iter_mut().zip(&b.0) {
                *x += y;
            }
            for (x, y) in a.1.iter_mut().zip(&b.1) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            for x in &mut l.0 {
                *x *= c;
            }
            for x in &mut l.1 {
                *x *= c;
            }
        }
    }

    pub fn get_coord(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.0.len() {
                return l.0[idx];
            }
            idx -= l.0.len();
            if idx < l.1.len() {
                return l.1[idx];
            }
            idx -= l.1.len();
        }
        panic!("coordinate out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.0.iter().chain(l.1.iter()).all(|v| v.is_finite()))
    }

    pub fn matches_shape(&self, params: &EncoderParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.0.len() == p.w.len() && g.1.len() == p.b.len())
    }
}

pub(crate) fn matvec(layer: &Layer, x: &[f64], out: &mut Vec<f64>) {
    debug_assert_eq!(x.len(), layer.in_dim);
    out.clear();
    out.reserve(layer.out_dim);
    for r in 0..layer.out_dim {
        let row = &layer.w[r * layer.in_dim..(r + 1) * layer.in_dim];
        let mut acc = layer.b[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        out.push(acc);
    }
}

/// Per-frame activation cache: `xs[l]` is the input to layer `l`; the last
/// entry is the network output.
#[derive(Debug, Clone)]
pub struct CachedForward {
    pub xs: Vec<Vec<f64>>,
}

impl CachedForward {
    pub fn output(&self) -> &[f64] {
        self.xs.last().unwrap()
    }
}

/// Forward through the first `layers` layers, keeping activations for
/// backprop.
pub(crate) fn forward_cached(params: &EncoderParams, input: &[f64], layers: usize) -> CachedForward {
    let mut xs = Vec::with_capacity(layers + 1);
    xs.push(input.to_vec());
    let mut buf = Vec::new();
    for l in 0..layers {
        matvec(&params.layers[l], xs.last().unwrap(), &mut buf);
        if params.relu_after(l) {
            for v in &mut buf {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        xs.push(buf.clone());
    }
    CachedForward { xs }
}

/// Accumulate parameter gradients for one cached forward pass given the
/// adjoint of its output.
pub(crate) fn backprop_cached(
    params: &EncoderParams,
    fwd: &CachedForward,
    d_out: &[f64],
    layers: usize,
    grads: &mut Grads,
) {
    let mut dz = d_out.to_vec();
    for l in (0..layers).rev() {
        let layer = &params.layers[l];
        let x = &fwd.xs[l];
        // The stored activation already has relu applied; its zeros mark
        // the dead units.
        if params.relu_after(l) {
            let a = &fwd.xs[l + 1];
            for (d, &v) in dz.iter_mut().zip(a) {
                if v <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let (gw, gb) = &mut grads.layers[l];
        for r in 0..layer.out_dim {
            let d = dz[r];
            if d != 0.0 {
                let row = &mut gw[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            gb[r] += d;
        }
        if l > 0 {
            let mut dx = vec![0.0; layer.in_dim];
            for r in 0..layer.out_dim {
                let d = dz[r];
                if d != 0.0 {
                    let row = &layer.w[r * layer.in_dim..(r + 1) * layer.in_dim];
                    for (dxi, &wi) in dx.iter_mut().zip(row) {
                        *dxi += d * wi;
                    }
                }
            }
            dz = dx;
        }
    }
}

/// Deterministic forward pass of the trunk on a raw value vector.
pub fn encode_values(params: &EncoderParams, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != params.input_dim() {
        return Err(Error::Usage(format!(
            "input length {} does not match encoder input dim {}",
            input.len(),
            params.input_dim()
        )));
    }
    let mut cur = input.to_vec();
    let mut buf = Vec::new();
    for l in 0..params.trunk_layers {
        matvec(&params.layers[l], &cur, &mut buf);
        if params.relu_after(l) {
            for v in &mut buf {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        std::mem::swap(&mut cur, &mut buf);
    }
    Ok(cur)
}

/// Embed one frame into the latent space.
pub fn encode(params: &EncoderParams, frame: &Frame) -> Result<Vec<f64>> {
    encode_values(params, &frame.to_f64())
}

/// Embed a batch of frames; order-preserving and safe to parallelize since
/// each element is independent.
pub fn encode_batch(params: &EncoderParams, frames: &[&Frame]) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    frames
        .par_iter()
        .map(|f| encode(params, f))
        .collect::<Result<Vec<_>>>()
}

/// Scalar-head output for one frame.
pub fn head_value(params: &EncoderParams, frame: &Frame) -> Result<f64> {
    if !params.has_head() {
        return Err(Error::Usage("encoder has no scalar head".into()));
    }
    let latent = encode(params, frame)?;
    let head = &params.layers[params.trunk_layers];
    let mut out = Vec::new();
    matvec(head, &latent, &mut out);
    Ok(out[0])
}

pub const CHECKPOINT_MAGIC: &[u8] = b"XENC1";
const VERSION: u16 = 1;

pub fn save_checkpoint(params: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams> {
    decode_checkpoint(&std::fs::read(path)?)
}

pub(crate) fn encode_checkpoint(params: &EncoderParams) -> Vec<u8> {
    let mut payload = ByteWriter::new();
    payload.put_u8(params.trunk_layers as u8);
    payload.put_u8(params.layers.len() as u8);
    for l in &params.layers {
        payload.put_u32(l.out_dim as u32);
        payload.put_u32(l.in_dim as u32);
    }
    for l in &params.layers {
        for &v in l.w.iter().chain(l.b.iter()) {
            payload.put_f64(v);
        }
    }
    let payload = payload.into_bytes();
    let mut out = ByteWriter::new();
    out.put_bytes(CHECKPOINT_MAGIC);
    out.put_u16(VERSION);
    out.put_u64(payload.len() as u64);
    let checksum = crc32(&payload);
    out.put_bytes(&payload);
    out.put_u32(checksum);
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{EmbodimentKind, Env, EnvConfig};

    #[test]
    fn zero_network_outputs_zero() {
        let mut params = EncoderParams::embedding(6, &[4], 3, 1);
        for l in &mut params.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let out = encode_values(&params, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn encoding_is_deterministic_with_fixed_latent_dim() {
        let config = EnvConfig::default();
        let env = Env::new(config, EmbodimentKind::MediumStick).unwrap();
        let frame = env.render_frame(&env.reset(4).unwrap());
        let params = EncoderParams::embedding(config.frame_len(), &[128, 128], 32, 9);
        let a = encode(&params, &frame).unwrap();
        let b = encode(&params, &frame).unwrap();
        assert_eq!(a.len(), 32);
        assert_eq!(a, b);
        // Dimension mismatch is a usage error.
        assert!(encode_values(&params, &[0.0; 10]).is_err());
    }

    #[test]
    fn coordinate_accessors_cover_every_parameter() {
        let mut params = EncoderParams::with_scalar_head(5, &[3], 2, 7);
        let n = params.param_count();
        for i in 0..n {
            let v = params.get_coord(i);
            params.set_coord(i, v + 1.0);
            assert_eq!(params.get_coord(i), v + 1.0);
            params.set_coord(i, v);
        }
    }

    #[test]
    fn checkpoint_round_trips_and_detects_corruption() {
        let params = EncoderParams::with_scalar_head(7, &[5, 4], 3, 11);
        let bytes = encode_checkpoint(&params);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, params);
        assert_eq!(encode_checkpoint(&back), bytes);

        let mut corrupt = bytes.clone();
        let mid = corrupt.len() / 2;
        corrupt[mid] ^= 0x10;
        match decode_checkpoint(&corrupt) {
            Err(crate::Error::Format { reason, .. }) => {
                assert!(reason.contains("checksum"), "{reason}")
            }
            other => panic!("expected checksum failure, got {other:?}"),
        }

        let mut bad_magic = bytes;
        bad_magic[0] = b'Z';
        assert!(matches!(
            decode_checkpoint(&bad_magic),
            Err(crate::Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn batch_encoding_matches_single_encoding() {
        let config = EnvConfig::default();
        let env = Env::new(config, EmbodimentKind::Gripper).unwrap();
        let frames: Vec<_> = (0..6).map(|s| env.render_frame(&env.reset(s).unwrap())).collect();
        let refs: Vec<&crate::sim::Frame> = frames.iter().collect();
        let params = EncoderParams::embedding(config.frame_len(), &[16], 8, 2);
        let batch = encode_batch(&params, &refs).unwrap();
        for (f, e) in refs.iter().zip(&batch) {
            assert_eq!(*e, encode(&params, f).unwrap());
        }
    }
}

pub(crate) fn decode_checkpoint(bytes: &[u8]) -> Result<EncoderParams> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let version = r.get_u16()?;
    if version != VERSION {
        return Err(Error::format(
            r.offset() - 2,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let payload_len = r.get_u64()? as usize;
    let payload_off = r.offset();
    let payload = r.take(payload_len)?;
    let stored = r.get_u32()?;
    r.expect_end()?;
    let actual = crc32(payload);
    if stored != actual {
        return Err(Error::format(
            payload_off,
            format!("checkpoint checksum mismatch (stored {stored:#010x}, computed {actual:#010x})"),
        ));
    }
    let mut pr = ByteReader::new(payload);
    let trunk_layers = pr.get_u8()? as usize;
    let total_layers = pr.get_u8()? as usize;
    if trunk_layers == 0 || trunk_layers > total_layers {
        return Err(Error::format(payload_off, "bad layer counts"));
    }
    let mut dims = Vec::with_capacity(total_layers);
    for _ in 0..total_layers {
        let out_dim = pr.get_u32()? as usize;
        let in_dim = pr.get_u32()? as usize;
        dims.push((out_dim, in_dim));
    }
    let mut layers = Vec::with_capacity(total_layers);
    for &(out_dim, in_dim) in &dims {
        let mut w = Vec::with_capacity(out_dim * in_dim);
        for _ in 0..out_dim * in_dim {
            w.push(pr.get_f64()?);
        }
        let mut b = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            b.push(pr.get_f64()?);
        }
        layers.push(Layer {
            w,
            b,
            out_dim,
            in_dim,
        });
    }
    pr.expect_end()
        .map_err(|_| Error::format(payload_off + pr.offset(), "trailing payload bytes"))?;
    Ok(EncoderParams {
        layers,
        trunk_layers,
    })
}
