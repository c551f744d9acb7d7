//! Binary dataset container.
//!
//! Layout (little-endian): magic `XMQME1`, version word, header (config,
//! provenance, section counts), `u64` body length, body (per-trajectory
//! records grouped by embodiment and split, then the goal section), and a
//! CRC-32 trailer over the body bytes.
//!
//! Trajectory record: embodiment tag (1 byte), episode seed, epsilon,
//! length `L` (u32), action-presence flag, `L` bit-packed frames
//! (1 bit/cell/channel), `L` reward numerator bytes (over `num_blocks`),
//! and `L` action bytes when present.

use std::path::Path;

use crate::bytesio::{crc32, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::sim::{Action, EmbodimentKind, EnvConfig, Frame, MaxStepsTable, ALL_EMBODIMENTS};

use super::{
    DatasetQuotas, GoalSet, MqmeDataset, Provenance, SplitKind, SplitPair, Trajectory,
};

pub const DATASET_MAGIC: &[u8] = b"XMQME1";
const VERSION: u16 = 1;
const GOAL_SECTION_TAG: u8 = b'G';

fn frame_bytes(config: &EnvConfig) -> usize {
    config.frame_len().div_ceil(8)
}

fn write_trajectory(w: &mut ByteWriter, t: &Trajectory, config: &EnvConfig) {
    w.put_u8(t.embodiment.index() as u8);
    w.put_u64(t.episode_seed);
    w.put_f64(t.epsilon);
    w.put_u32(t.len() as u32);
    w.put_u8(u8::from(t.actions.is_some()));
    for f in &t.frames {
        w.put_bytes(&f.packed_bytes());
    }
    let b = config.num_blocks as f64;
    for &r in &t.gt_rewards {
        w.put_u8((r * b).round() as u8);
    }
    if let Some(actions) = &t.actions {
        for &a in actions {
            w.put_u8(a.index() as u8);
        }
    }
}

fn read_trajectory(r: &mut ByteReader, config: &EnvConfig) -> Result<Trajectory> {
    let embodiment = EmbodimentKind::from_index(r.get_u8()?)?;
    let episode_seed = r.get_u64()?;
    let epsilon = r.get_f64()?;
    let len = r.get_u32()? as usize;
    let has_actions = r.get_u8()? != 0;
    let fb = frame_bytes(config);
    let mut frames = Vec::with_capacity(len);
    for _ in 0..len {
        let off = r.offset();
        let bytes = r.take(fb)?;
        frames.push(
            Frame::from_packed_bytes(config.width, config.height, bytes)
                .map_err(|e| Error::format(off, e.to_string()))?,
        );
    }
    let b = config.num_blocks as f64;
    let mut gt_rewards = Vec::with_capacity(len);
    for _ in 0..len {
        let off = r.offset();
        let numer = r.get_u8()?;
        if numer as usize > config.num_blocks {
            return Err(Error::format(off, format!("reward numerator {numer} > num_blocks")));
        }
        gt_rewards.push(numer as f64 / b);
    }
    let actions = if has_actions {
        let mut acts = Vec::with_capacity(len);
        for _ in 0..len {
            acts.push(Action::from_index(r.get_u8()?).map_err(|e| Error::format(r.offset(), e.to_string()))?);
        }
        Some(acts)
    } else {
        None
    };
    Ok(Trajectory {
        embodiment,
        frames,
        gt_rewards,
        actions,
        episode_seed,
        epsilon,
    })
}

fn encode(dataset: &MqmeDataset) -> Vec<u8> {
    let cfg = &dataset.config;
    let mut head = ByteWriter::new();
    head.put_bytes(DATASET_MAGIC);
    head.put_u16(VERSION);
    head.put_u32(cfg.width as u32);
    head.put_u32(cfg.height as u32);
    head.put_u32(cfg.goal_depth as u32);
    head.put_u32(cfg.num_blocks as u32);
    head.put_u64(cfg.seed);
    for kind in ALL_EMBODIMENTS {
        head.put_u32(cfg.max_steps.get(kind) as u32);
    }
    head.put_u64(dataset.provenance.master_seed);
    head.put_u32(dataset.provenance.noise_schedule.len() as u32);
    for &e in &dataset.provenance.noise_schedule {
        head.put_f64(e);
    }
    head.put_u32(dataset.provenance.quotas.train_per_class as u32);
    head.put_u32(dataset.provenance.quotas.test_per_class as u32);
    for emb in ALL_EMBODIMENTS {
        for kind in [SplitKind::Train, SplitKind::Test] {
            head.put_u32(dataset.split(emb, kind).len() as u32);
        }
    }
    head.put_u32(dataset.goal_set.frames.len() as u32);

    let mut body = ByteWriter::new();
    for emb in ALL_EMBODIMENTS {
        for kind in [SplitKind::Train, SplitKind::Test] {
            for t in dataset.split(emb, kind) {
                write_trajectory(&mut body, t, cfg);
            }
        }
    }
    body.put_u8(GOAL_SECTION_TAG);
    for f in &dataset.goal_set.frames {
        body.put_bytes(&f.packed_bytes());
    }

    let body_bytes = body.into_bytes();
    let mut out = head.into_bytes();
    out.extend_from_slice(&(body_bytes.len() as u64).to_le_bytes());
    let checksum = crc32(&body_bytes);
    out.extend_from_slice(&body_bytes);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

fn decode(bytes: &[u8]) -> Result<MqmeDataset> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(DATASET_MAGIC)?;
    let version = r.get_u16()?;
    if version != VERSION {
        return Err(Error::format(
            r.offset() - 2,
            format!("unsupported dataset version {version}"),
        ));
    }
    let width = r.get_u32()? as usize;
    let height = r.get_u32()? as usize;
    let goal_depth = r.get_u32()? as usize;
    let num_blocks = r.get_u32()? as usize;
    let seed = r.get_u64()?;
    let mut steps = [0usize; 4];
    for s in &mut steps {
        *s = r.get_u32()? as usize;
    }
    let config = EnvConfig {
        width,
        height,
        goal_depth,
        num_blocks,
        seed,
        max_steps: MaxStepsTable {
            shortstick: steps[0],
            mediumstick: steps[1],
            longstick: steps[2],
            gripper: steps[3],
        },
    };
    let master_seed = r.get_u64()?;
    let schedule_len = r.get_u32()? as usize;
    let mut noise_schedule = Vec::with_capacity(schedule_len);
    for _ in 0..schedule_len {
        noise_schedule.push(r.get_f64()?);
    }
    let quotas = DatasetQuotas {
        train_per_class: r.get_u32()? as usize,
        test_per_class: r.get_u32()? as usize,
    };
    let mut counts = [[0usize; 2]; 4];
    for emb in 0..4 {
        for split in 0..2 {
            counts[emb][split] = r.get_u32()? as usize;
        }
    }
    let goal_count = r.get_u32()? as usize;

    let body_len = r.get_u64()? as usize;
    let body_off = r.offset();
    let body = r.take(body_len)?;
    let stored_crc = r.get_u32()?;
    r.expect_end()?;
    let actual_crc = crc32(body);
    if stored_crc != actual_crc {
        return Err(Error::format(
            body_off,
            format!(
                "body checksum mismatch over bytes {body_off}..{} (stored {stored_crc:#010x}, computed {actual_crc:#010x})",
                body_off + body_len as u64
            ),
        ));
    }

    let mut br = ByteReader::new(body);
    let mut splits: [SplitPair; 4] = Default::default();
    for emb in ALL_EMBODIMENTS {
        for kind in [SplitKind::Train, SplitKind::Test] {
            let n = counts[emb.index()][match kind {
                SplitKind::Train => 0,
                SplitKind::Test => 1,
            }];
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                list.push(read_trajectory(&mut br, &config).map_err(|e| shift_offset(e, body_off))?);
            }
            match kind {
                SplitKind::Train => splits[emb.index()].train = list,
                SplitKind::Test => splits[emb.index()].test = list,
            }
        }
    }
    let tag_off = br.offset();
    let tag = br.get_u8().map_err(|e| shift_offset(e, body_off))?;
    if tag != GOAL_SECTION_TAG {
        return Err(Error::format(
            body_off + tag_off,
            format!("expected goal section tag, found {tag:#04x}"),
        ));
    }
    let fb = frame_bytes(&config);
    let mut goal_frames = Vec::with_capacity(goal_count);
    for _ in 0..goal_count {
        let bytes = br.take(fb).map_err(|e| shift_offset(e, body_off))?;
        goal_frames.push(
            Frame::from_packed_bytes(width, height, bytes)
                .map_err(|e| Error::format(body_off + br.offset(), e.to_string()))?,
        );
    }
    br.expect_end().map_err(|e| shift_offset(e, body_off))?;

    Ok(MqmeDataset {
        config,
        splits,
        goal_set: GoalSet { frames: goal_frames },
        provenance: Provenance {
            master_seed,
            noise_schedule,
            quotas,
        },
    })
}

fn shift_offset(e: Error, base: u64) -> Error {
    match e {
        Error::Format { offset, reason } => Error::Format {
            offset: offset + base,
            reason,
        },
        other => other,
    }
}

pub fn save_dataset(dataset: &MqmeDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(dataset))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<MqmeDataset> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

#[cfg(test)]
pub(super) fn encode_for_tests(dataset: &MqmeDataset) -> Vec<u8> {
    encode(dataset)
}

#[cfg(test)]
pub(super) fn decode_for_tests(bytes: &[u8]) -> Result<MqmeDataset> {
    decode(bytes)
}
