//! Versioned binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "FAIRGANC"
//! version      u32      currently 1
//! manifest     u32 length + UTF-8, e.g.
//!              "stage=pretrained;generator=8-32-32-2;discriminator=2-32-32-1;source=none;optimizer=yes"
//! stage        u8       0 pretrained, 1 fairtl, 2 fairtlpp
//! seed         u64
//! config_hash  u32 length + UTF-8
//! created_by   u32 length + UTF-8
//! flags        u8       bit 0 discriminator, bit 1 frozen source, bit 2 optimizer state
//! generator    network
//! [discriminator, frozen source]   networks, when flagged
//! [optimizer]  generator then discriminator Adam state, when flagged
//! digest       32 bytes SHA-256 of everything above
//!
//! network   = u32 layer count, then per layer:
//!             u32 out, u32 in, u8 activation, f64 activation parameter,
//!             out*in f64 weights (row-major), out f64 biases
//! adam      = per layer u64 step count, then first-moment weights and
//!             biases, then second-moment weights and biases
//! ```
//!
//! The manifest is redundant with the binary payload and is checked against
//! it on load.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gan::{AdamState, GanState, OptimizerState, Stage};
use crate::numerics::{Activation, DenseLayer, Matrix, MlpGrads, MlpParams};

pub const MAGIC: &[u8; 8] = b"FAIRGANC";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

const FLAG_DISCRIMINATOR: u8 = 1;
const FLAG_SOURCE: u8 = 2;
const FLAG_OPTIMIZER: u8 = 4;

/// Everything a checkpoint file holds. A checkpoint may omit the
/// discriminator (a generator-only export); such files cannot be adapted.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub seed: u64,
    pub config_hash: String,
    pub created_by: String,
    pub generator: MlpParams,
    pub discriminator: Option<MlpParams>,
    pub frozen_source: Option<MlpParams>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_state(state: &GanState, seed: u64, config_hash: &str) -> Self {
        Checkpoint {
            stage: state.stage(),
            seed,
            config_hash: config_hash.to_string(),
            created_by: format!("fairgan {}", env!("CARGO_PKG_VERSION")),
            generator: state.generator().clone(),
            discriminator: Some(state.discriminator().clone()),
            frozen_source: state.frozen_source().cloned(),
            optimizer: Some(state.optimizer.clone()),
        }
    }

    /// Drops the discriminator, as a generator-only release would.
    pub fn generator_only(mut self) -> Self {
        self.discriminator = None;
        self.frozen_source = None;
        self.optimizer = None;
        self
    }

    pub fn into_state(self) -> Result<GanState> {
        let discriminator = self.discriminator.ok_or(Error::MissingDiscriminator)?;
        let optimizer = self
            .optimizer
            .unwrap_or_else(|| OptimizerState::fresh(&self.generator, &discriminator));
        GanState::from_parts(
            self.generator,
            discriminator,
            self.frozen_source,
            self.stage,
            optimizer,
        )
    }

    fn manifest(&self) -> String {
        let dims = |n: &MlpParams| {
            n.layer_dims()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("-")
        };
        format!(
            "stage={};generator={};discriminator={};source={};optimizer={}",
            self.stage,
            dims(&self.generator),
            self.discriminator.as_ref().map_or("none".into(), dims),
            self.frozen_source.as_ref().map_or("none".into(), dims),
            if self.optimizer.is_some() {
                "yes"
            } else {
                "no"
            }
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.string(&self.manifest());
        w.u8(stage_code(self.stage));
        w.u64(self.seed);
        w.string(&self.config_hash);
        w.string(&self.created_by);
        let mut flags = 0;
        if self.discriminator.is_some() {
            flags |= FLAG_DISCRIMINATOR;
        }
        if self.frozen_source.is_some() {
            flags |= FLAG_SOURCE;
        }
        if self.optimizer.is_some() {
            flags |= FLAG_OPTIMIZER;
        }
        w.u8(flags);
        w.network(&self.generator);
        if let Some(d) = &self.discriminator {
            w.network(d);
        }
        if let Some(s) = &self.frozen_source {
            w.network(s);
        }
        if let Some(opt) = &self.optimizer {
            w.adam(&opt.generator);
            w.adam(&opt.discriminator);
        }
        let digest = Sha256::digest(&w.buf);
        w.buf.extend_from_slice(&digest);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::Checkpoint(format!(
                "file too short ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint(
                "digest mismatch: file is truncated or corrupt".into(),
            ));
        }

        let mut r = Reader { buf: body, pos: 12 };
        let manifest = r.string()?;
        let stage = stage_from_code(r.u8()?)?;
        let seed = r.u64()?;
        let config_hash = r.string()?;
        let created_by = r.string()?;
        let flags = r.u8()?;
        let generator = r.network()?;
        let discriminator = (flags & FLAG_DISCRIMINATOR != 0)
            .then(|| r.network())
            .transpose()?;
        let frozen_source = (flags & FLAG_SOURCE != 0)
            .then(|| r.network())
            .transpose()?;
        let optimizer = if flags & FLAG_OPTIMIZER != 0 {
            let d = discriminator
                .as_ref()
                .ok_or_else(|| Error::Checkpoint("optimizer state without discriminator".into()))?;
            Some(OptimizerState {
                generator: r.adam(&generator)?,
                discriminator: r.adam(d)?,
            })
        } else {
            None
        };
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after payload",
                body.len() - r.pos
            )));
        }
        let ckpt = Checkpoint {
            stage,
            seed,
            config_hash,
            created_by,
            generator,
            discriminator,
            frozen_source,
            optimizer,
        };
        if ckpt.manifest() != manifest {
            return Err(Error::Checkpoint(format!(
                "manifest '{manifest}' does not describe the payload ('{}')",
                ckpt.manifest()
            )));
        }
        Ok(ckpt)
    }
}

fn stage_code(stage: Stage) -> u8 {
    match stage {
        Stage::Pretrained => 0,
        Stage::FairTl => 1,
        Stage::FairTlPp => 2,
    }
}

fn stage_from_code(code: u8) -> Result<Stage> {
    match code {
        0 => Ok(Stage::Pretrained),
        1 => Ok(Stage::FairTl),
        2 => Ok(Stage::FairTlPp),
        other => Err(Error::Checkpoint(format!("unknown stage code {other}"))),
    }
}

fn activation_code(a: Activation) -> (u8, f64) {
    match a {
        Activation::LeakyRelu(s) => (0, s),
        Activation::Tanh => (1, 0.0),
        Activation::Sigmoid => (2, 0.0),
        Activation::Identity => (3, 0.0),
    }
}

fn activation_from_code(code: u8, param: f64) -> Result<Activation> {
    match code {
        0 => Ok(Activation::LeakyRelu(param)),
        1 => Ok(Activation::Tanh),
        2 => Ok(Activation::Sigmoid),
        3 => Ok(Activation::Identity),
        other => Err(Error::Checkpoint(format!(
            "unknown activation code {other}"
        ))),
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn network(&mut self, net: &MlpParams) {
        self.u32(net.num_layers() as u32);
        for l in net.layers() {
            self.u32(l.out_dim() as u32);
            self.u32(l.in_dim() as u32);
            let (code, param) = activation_code(l.activation);
            self.u8(code);
            self.f64s(&[param]);
            self.f64s(l.weights.as_slice());
            self.f64s(&l.biases);
        }
    }
    fn grads(&mut self, g: &MlpGrads) {
        for (w, b) in g.weights.iter().zip(&g.biases) {
            self.f64s(w.as_slice());
            self.f64s(b);
        }
    }
    fn adam(&mut self, a: &AdamState) {
        for &s in &a.steps {
            self.u64(s);
        }
        self.grads(&a.first);
        self.grads(&a.second);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "payload ends early at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 in header".into()))
    }
    fn network(&mut self) -> Result<MlpParams> {
        let n = self.u32()? as usize;
        let mut layers = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let out = self.u32()? as usize;
            let inp = self.u32()? as usize;
            let code = self.u8()?;
            let param = self.f64s(1)?[0];
            let weights = Matrix::from_vec(out, inp, self.f64s(out * inp)?)?;
            let biases = self.f64s(out)?;
            layers.push(DenseLayer {
                weights,
                biases,
                activation: activation_from_code(code, param)?,
            });
        }
        MlpParams::from_layers(layers).map_err(|e| Error::Checkpoint(format!("bad network: {e}")))
    }
    fn grads(&mut self, net: &MlpParams) -> Result<MlpGrads> {
        let mut g = MlpGrads::zeros_like(net);
        for (w, b) in g.weights.iter_mut().zip(g.biases.iter_mut()) {
            let nw = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&self.f64s(nw)?);
            let nb = b.len();
            b.copy_from_slice(&self.f64s(nb)?);
        }
        Ok(g)
    }
    fn adam(&mut self, net: &MlpParams) -> Result<AdamState> {
        let steps = (0..net.num_layers())
            .map(|_| self.u64())
            .collect::<Result<Vec<_>>>()?;
        Ok(AdamState {
            steps,
            first: self.grads(net)?,
            second: self.grads(net)?,
        })
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

pub fn save_checkpoint(state: &GanState, path: &Path, seed: u64, config_hash: &str) -> Result<()> {
    write_checkpoint(&Checkpoint::from_state(state, seed, config_hash), path)
}

pub fn load_checkpoint(path: &Path) -> Result<GanState> {
    read_checkpoint(path)?.into_state()
}
