//! Dataset persistence.
//!
//! Binary container, little-endian throughout:
//!
//! ```text
//! magic        b"GCTTDS v1\n"
//! layout name  u16 length + utf-8 bytes
//! env kind     u8 (0 grid, 1 point)
//! regime       u8 (0 expert, 1 play)
//! seed         u64
//! noise        f64
//! n_waypoints  u32
//! leg_cap      u32
//! n_traj       u32
//! per trajectory:
//!   source     u8
//!   length T   u32
//!   states     (T + 1) * 2 f64
//!   actions    T * 2 f64
//! crc32        u32 over every preceding byte
//! ```

use super::{DatasetMeta, OfflineDataset, Regime, Trajectory, ACTION_DIM, OBS_DIM};
use crate::env::MazeKind;
use crate::{Error, Result};
use std::fs;
use std::path::Path;

const MAGIC: &[u8] = b"GCTTDS v1\n";

fn regime_tag(r: Regime) -> u8 {
    match r {
        Regime::Expert => 0,
        Regime::Play => 1,
    }
}

fn kind_tag(k: MazeKind) -> u8 {
    match k {
        MazeKind::Grid => 0,
        MazeKind::Point => 1,
    }
}

pub fn save_dataset(ds: &OfflineDataset, path: &Path) -> Result<()> {
    if ds.trajectories.is_empty() {
        return Err(Error::config("refusing to save an empty dataset"));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let name = ds.meta.layout_name.as_bytes();
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name);
    buf.push(kind_tag(ds.meta.env_kind));
    buf.push(regime_tag(ds.meta.regime));
    buf.extend_from_slice(&ds.meta.seed.to_le_bytes());
    buf.extend_from_slice(&ds.meta.noise.to_le_bytes());
    buf.extend_from_slice(&ds.meta.n_waypoints.to_le_bytes());
    buf.extend_from_slice(&ds.meta.leg_cap.to_le_bytes());
    buf.extend_from_slice(&(ds.trajectories.len() as u32).to_le_bytes());
    for traj in &ds.trajectories {
        buf.push(regime_tag(traj.source()));
        buf.extend_from_slice(&(traj.len() as u32).to_le_bytes());
        for v in traj.states_flat() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in traj.actions_flat() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::integrity("dataset file truncated"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_dataset(path: &Path) -> Result<OfflineDataset> {
    let buf = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::missing(format!("dataset file {}", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    if buf.len() < MAGIC.len() + 4 {
        return Err(Error::integrity("dataset file truncated"));
    }
    let (body, crc_bytes) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::integrity("dataset checksum mismatch"));
    }
    if &body[..MAGIC.len()] != MAGIC {
        return Err(Error::integrity(
            "not a GCTTDS v1 dataset (bad or unsupported header)",
        ));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let name_len = r.u16()? as usize;
    let layout_name = String::from_utf8(r.take(name_len)?.to_vec())
        .map_err(|_| Error::integrity("layout name is not utf-8"))?;
    let env_kind = match r.u8()? {
        0 => MazeKind::Grid,
        1 => MazeKind::Point,
        other => return Err(Error::integrity(format!("unknown env kind {other}"))),
    };
    let regime = match r.u8()? {
        0 => Regime::Expert,
        1 => Regime::Play,
        other => return Err(Error::integrity(format!("unknown regime {other}"))),
    };
    let seed = r.u64()?;
    let noise = r.f64()?;
    let n_waypoints = r.u32()?;
    let leg_cap = r.u32()?;
    let n_traj = r.u32()? as usize;
    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let source = match r.u8()? {
            0 => Regime::Expert,
            1 => Regime::Play,
            other => return Err(Error::integrity(format!("unknown source tag {other}"))),
        };
        let t = r.u32()? as usize;
        let states = r.f64s((t + 1) * OBS_DIM)?;
        let actions = r.f64s(t * ACTION_DIM)?;
        trajectories.push(Trajectory::new(states, actions, source)?);
    }
    if r.pos != body.len() {
        return Err(Error::integrity("trailing bytes in dataset file"));
    }
    OfflineDataset::new(
        trajectories,
        DatasetMeta {
            layout_name,
            env_kind,
            regime,
            seed,
            noise,
            n_waypoints,
            leg_cap,
        },
    )
}
