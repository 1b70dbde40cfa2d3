//! Self-describing weight container.
//!
//! Layout: magic `PASCW1`, u32 LE config-JSON length + JSON, u32 LE tensor
//! count, then per tensor (u16 LE name length, name, u8 ndim, u32 LE dims,
//! row-major f32 LE values), and finally a 64-bit FNV-1a checksum over
//! everything between the magic and the checksum.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{CodecConfig, CodecWeights};

const MAGIC: &[u8; 6] = b"PASCW1";

pub struct Fnv64 {
    state: u64,
}

impl Fnv64 {
    pub fn new() -> Self {
        Self {
            state: 0xcbf2_9ce4_8422_2325,
        }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= b as u64;
            self.state = self.state.wrapping_mul(0x100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.state
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

fn tensor_entries(cfg: &CodecConfig) -> Vec<(String, Vec<u32>)> {
    let a = cfg.arch();
    let mut out = Vec::new();
    for (l, s) in a.enc.iter().enumerate() {
        out.push((format!("enc.conv{l}.w"), vec![s.cout as u32, s.cin as u32, s.k as u32, s.k as u32]));
        out.push((format!("enc.conv{l}.b"), vec![s.cout as u32]));
    }
    out.push(("enc.dense.w".into(), vec![a.bits as u32, a.flat() as u32]));
    out.push(("enc.dense.b".into(), vec![a.bits as u32]));
    out.push(("dec.dense.w".into(), vec![a.flat() as u32, a.bits as u32]));
    out.push(("dec.dense.b".into(), vec![a.flat() as u32]));
    for (l, s) in a.dec.iter().enumerate() {
        out.push((format!("dec.conv{l}.w"), vec![s.cout as u32, s.cin as u32, s.k as u32, s.k as u32]));
        out.push((format!("dec.conv{l}.b"), vec![s.cout as u32]));
    }
    out.push(("out.conv.w".into(), vec![a.out.cout as u32, a.out.cin as u32, a.out.k as u32, a.out.k as u32]));
    out.push(("out.conv.b".into(), vec![a.out.cout as u32]));
    out
}

pub fn save_weights(w: &CodecWeights, cfg: &CodecConfig, path: &Path) -> Result<()> {
    if !w.matches(cfg) {
        return Err(Error::Argument("weights do not match codec config".into()));
    }
    let mut payload: Vec<u8> = Vec::new();
    let cfg_json = serde_json::to_vec(cfg)?;
    payload.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    payload.extend_from_slice(&cfg_json);

    let entries = tensor_entries(cfg);
    let vecs = w.param_vecs();
    payload.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for ((name, dims), vals) in entries.iter().zip(&vecs) {
        payload.extend_from_slice(&(name.len() as u16).to_le_bytes());
        payload.extend_from_slice(name.as_bytes());
        payload.push(dims.len() as u8);
        for d in dims {
            payload.extend_from_slice(&d.to_le_bytes());
        }
        for v in *vals {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut h = Fnv64::new();
    h.update(&payload);

    let mut file = Vec::with_capacity(MAGIC.len() + payload.len() + 8);
    file.extend_from_slice(MAGIC);
    file.extend_from_slice(&payload);
    file.extend_from_slice(&h.finish().to_le_bytes());
    fs::write(path, file)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Load("weight file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_weights(path: &Path) -> Result<(CodecWeights, CodecConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Load("not a PASCW1 weight file".into()));
    }
    let payload = &bytes[MAGIC.len()..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let mut h = Fnv64::new();
    h.update(payload);
    if h.finish() != stored {
        return Err(Error::Load("weight file checksum mismatch".into()));
    }

    let mut r = Reader { buf: payload, pos: 0 };
    let cfg_len = r.u32()? as usize;
    let cfg: CodecConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| Error::Load(format!("bad config record: {e}")))?;
    let expected = tensor_entries(&cfg);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Load(format!(
            "tensor count {count} does not match config (expected {})",
            expected.len()
        )));
    }
    let mut w = CodecWeights::zeros(&cfg);
    {
        let mut vecs = w.param_vecs_mut();
        for ((name, dims), dst) in expected.iter().zip(vecs.iter_mut()) {
            let nlen = r.u16()? as usize;
            let got_name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Load("tensor name is not utf-8".into()))?;
            if got_name != name {
                return Err(Error::Load(format!("unexpected tensor `{got_name}`, wanted `{name}`")));
            }
            let ndim = r.take(1)?[0] as usize;
            if ndim != dims.len() {
                return Err(Error::Load(format!("tensor `{name}` rank mismatch")));
            }
            let mut n = 1usize;
            for want in dims {
                let d = r.u32()?;
                if d != *want {
                    return Err(Error::Load(format!("tensor `{name}` shape mismatch")));
                }
                n *= d as usize;
            }
            let raw = r.take(4 * n)?;
            for (i, v) in dst.iter_mut().enumerate() {
                *v = f32::from_le_bytes(raw[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            }
        }
    }
    if r.pos != payload.len() {
        return Err(Error::Load("trailing bytes in weight file".into()));
    }
    Ok((w, cfg))
}
