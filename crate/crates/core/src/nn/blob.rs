//! Exact parameter snapshot/restore.
//!
//! Container layout (all little-endian):
//!
//! ```text
//! magic    b"GCTT"
//! version  u16            (currently 1)
//! role     u8             (0 mlp, 1 gaussian policy, 2 critic Q, 3 critic V)
//! n_layers u32            (count of layer dims)
//! dims     u32 * n_layers
//! n_vals   u64            (f64 payload count)
//! values   f64 * n_vals   (net weights; for the policy role, log_std follows)
//! crc32    u32            (over every preceding byte)
//! ```
//!
//! Restore is bitwise: `restore(snapshot(p)) == p` down to the last bit.

use super::{weight_count, GaussianPolicy, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GCTT";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlobRole {
    Mlp = 0,
    Policy = 1,
    CriticQ = 2,
    CriticV = 3,
}

impl BlobRole {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(BlobRole::Mlp),
            1 => Ok(BlobRole::Policy),
            2 => Ok(BlobRole::CriticQ),
            3 => Ok(BlobRole::CriticV),
            other => Err(Error::integrity(format!("unknown blob role {other}"))),
        }
    }
}

fn encode(role: BlobRole, dims: &[usize], values: &[f64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + dims.len() * 4 + values.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(role as u8);
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Decoded {
    role: BlobRole,
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn decode(blob: &[u8]) -> Result<Decoded> {
    let fail = |msg: &str| Error::integrity(format!("checkpoint blob: {msg}"));
    if blob.len() < 4 + 2 + 1 + 4 + 8 + 4 {
        return Err(fail("truncated header"));
    }
    let (body, crc_bytes) = blob.split_at(blob.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(fail("checksum mismatch"));
    }
    if &body[..4] != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let role = BlobRole::from_u8(body[6])?;
    let n_layers = u32::from_le_bytes(body[7..11].try_into().unwrap()) as usize;
    let mut off = 11;
    if body.len() < off + n_layers * 4 + 8 {
        return Err(fail("truncated dims"));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        dims.push(u32::from_le_bytes(body[off..off + 4].try_into().unwrap()) as usize);
        off += 4;
    }
    let n_vals = u64::from_le_bytes(body[off..off + 8].try_into().unwrap()) as usize;
    off += 8;
    if body.len() != off + n_vals * 8 {
        return Err(fail("payload length mismatch"));
    }
    let mut values = Vec::with_capacity(n_vals);
    for _ in 0..n_vals {
        values.push(f64::from_le_bytes(body[off..off + 8].try_into().unwrap()));
        off += 8;
    }
    Ok(Decoded { role, dims, values })
}

/// Serializes a plain MLP (critics and the like).
pub fn snapshot_mlp(role: BlobRole, params: &ParamStore) -> Vec<u8> {
    assert_ne!(role, BlobRole::Policy, "use snapshot_policy for policies");
    encode(role, params.layer_dims(), params.weights())
}

/// Restores a plain MLP, checking the expected role.
pub fn restore_mlp(blob: &[u8], expect_role: BlobRole) -> Result<ParamStore> {
    let d = decode(blob)?;
    if d.role != expect_role {
        return Err(Error::integrity(format!(
            "expected role {:?}, found {:?}",
            expect_role, d.role
        )));
    }
    if d.values.len() != weight_count(&d.dims) {
        return Err(Error::integrity("weight count does not match dims"));
    }
    ParamStore::from_weights(d.dims, d.values)
}

/// Serializes a Gaussian policy: net weights followed by log_std.
pub fn snapshot_policy(policy: &GaussianPolicy) -> Vec<u8> {
    encode(
        BlobRole::Policy,
        policy.net.layer_dims(),
        &policy.flat_params(),
    )
}

pub fn restore_policy(blob: &[u8]) -> Result<GaussianPolicy> {
    let d = decode(blob)?;
    if d.role != BlobRole::Policy {
        return Err(Error::integrity(format!(
            "expected a policy blob, found {:?}",
            d.role
        )));
    }
    let action_dim = *d
        .dims
        .last()
        .ok_or_else(|| Error::integrity("policy blob with no dims"))?;
    let nw = weight_count(&d.dims);
    if d.values.len() != nw + action_dim {
        return Err(Error::integrity("policy payload length mismatch"));
    }
    let net = ParamStore::from_weights(d.dims, d.values[..nw].to_vec())?;
    Ok(GaussianPolicy::from_parts(net, d.values[nw..].to_vec()))
}
