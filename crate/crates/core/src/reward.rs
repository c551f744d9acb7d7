//! Learned reward functions: goal-embedding computation, the scaled
//! negative-distance-to-goal reward, direct scalar-net rewards, and
//! classifier-probability rewards, plus their persistent container.

use std::path::Path;

use crate::bytesio::{crc32, ByteReader, ByteWriter};
use crate::demogen::{MqmeDataset, SplitKind};
use crate::diffnet::{self, EncoderParams};
use crate::error::{Error, Result};
use crate::sim::{EmbodimentKind, Frame};

/// Where a goal embedding came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalSource {
    /// Privileged goal-state set.
    FromGoalSet,
    /// Final frames of successful demonstrations.
    FromFinalFrames,
}

/// Mean latent of a set of goal frames under one encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalEmbedding {
    pub values: Vec<f64>,
    pub source: GoalSource,
}

/// Arithmetic mean of the encoder's embeddings of `frames`.
pub fn compute_goal_embedding(
    params: &EncoderParams,
    frames: &[&Frame],
    source: GoalSource,
) -> Result<GoalEmbedding> {
    if frames.is_empty() {
        return Err(Error::Usage("goal embedding needs a nonempty source".into()));
    }
    let embeds = diffnet::encode_batch(params, frames)?;
    let dim = params.latent_dim();
    let mut g = vec![0.0; dim];
    for e in &embeds {
        for (o, &x) in g.iter_mut().zip(e) {
            *o += x;
        }
    }
    for v in &mut g {
        *v /= embeds.len() as f64;
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage("non-finite goal embedding".into()));
    }
    Ok(GoalEmbedding { values: g, source })
}

/// A learned reward function over frames.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    /// `-(1/kappa) * ||phi(frame) - g||^2`; always non-positive.
    DistanceToGoal {
        encoder: EncoderParams,
        goal: GoalEmbedding,
        kappa: f64,
    },
    /// Raw scalar-head output.
    DirectNet { net: EncoderParams },
    /// Sigmoid probability of the scalar head; always in (0, 1).
    Classifier { net: EncoderParams },
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl RewardModel {
    pub fn variant_name(&self) -> &'static str {
        match self {
            RewardModel::DistanceToGoal { .. } => "distance-to-goal",
            RewardModel::DirectNet { .. } => "direct-net",
            RewardModel::Classifier { .. } => "classifier",
        }
    }

    /// Reward of a single frame.
    pub fn reward_of_frame(&self, frame: &Frame) -> Result<f64> {
        match self {
            RewardModel::DistanceToGoal {
                encoder,
                goal,
                kappa,
            } => {
                let latent = diffnet::encode(encoder, frame)?;
                Ok(-sq_dist(&latent, &goal.values) / kappa)
            }
            RewardModel::DirectNet { net } => diffnet::head_value(net, frame),
            RewardModel::Classifier { net } => {
                let z = diffnet::head_value(net, frame)?;
                Ok(if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                })
            }
        }
    }
}

/// Scale calibration for the distance reward: the mean squared latent
/// distance from training-episode initial frames to the goal, so an
/// episode start scores about -1.
pub fn calibrate_kappa(
    params: &EncoderParams,
    goal: &GoalEmbedding,
    dataset: &MqmeDataset,
    embodiments: &[EmbodimentKind],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for &emb in embodiments {
        for traj in dataset.split(emb, SplitKind::Train) {
            let latent = diffnet::encode(params, &traj.frames[0])?;
            total += sq_dist(&latent, &goal.values);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Usage("kappa calibration needs a nonempty dataset".into()));
    }
    let kappa = total / count as f64;
    if kappa <= 0.0 || !kappa.is_finite() {
        return Err(Error::Calibration(format!(
            "degenerate kappa {kappa}: all start frames embed at the goal"
        )));
    }
    Ok(kappa)
}

pub const REWARD_MAGIC: &[u8] = b"XRWD1";
const VERSION: u16 = 1;

fn encode_model(model: &RewardModel, config_hash: u64) -> Vec<u8> {
    let mut payload = ByteWriter::new();
    payload.put_u64(config_hash);
    match model {
        RewardModel::DistanceToGoal {
            encoder,
            goal,
            kappa,
        } => {
            payload.put_u8(0);
            let ckpt = diffnet::checkpoint_bytes(encoder);
            payload.put_u64(ckpt.len() as u64);
            payload.put_bytes(&ckpt);
            payload.put_u8(match goal.source {
                GoalSource::FromGoalSet => 0,
                GoalSource::FromFinalFrames => 1,
            });
            payload.put_u32(goal.values.len() as u32);
            for &v in &goal.values {
                payload.put_f64(v);
            }
            payload.put_f64(*kappa);
        }
        RewardModel::DirectNet { net } => {
            payload.put_u8(1);
            let ckpt = diffnet::checkpoint_bytes(net);
            payload.put_u64(ckpt.len() as u64);
            payload.put_bytes(&ckpt);
        }
        RewardModel::Classifier { net } => {
            payload.put_u8(2);
            let ckpt = diffnet::checkpoint_bytes(net);
            payload.put_u64(ckpt.len() as u64);
            payload.put_bytes(&ckpt);
        }
    }
    let payload = payload.into_bytes();
    let mut out = ByteWriter::new();
    out.put_bytes(REWARD_MAGIC);
    out.put_u16(VERSION);
    out.put_u64(payload.len() as u64);
    let checksum = crc32(&payload);
    out.put_bytes(&payload);
    out.put_u32(checksum);
    out.into_bytes()
}

fn decode_model(bytes: &[u8]) -> Result<(RewardModel, u64)> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(REWARD_MAGIC)?;
    let version = r.get_u16()?;
    if version != VERSION {
        return Err(Error::format(
            r.offset() - 2,
            format!("unsupported reward model version {version}"),
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
            format!(
                "reward model checksum mismatch (stored {stored:#010x}, computed {actual:#010x})"
            ),
        ));
    }
    let mut pr = ByteReader::new(payload);
    let config_hash = pr.get_u64()?;
    let tag = pr.get_u8()?;
    let ckpt_len = pr.get_u64()? as usize;
    let ckpt = pr.take(ckpt_len)?;
    let params = diffnet::checkpoint_from_bytes(ckpt)?;
    let model = match tag {
        0 => {
            let source = match pr.get_u8()? {
                0 => GoalSource::FromGoalSet,
                1 => GoalSource::FromFinalFrames,
                other => {
                    return Err(Error::format(
                        payload_off + pr.offset() - 1,
                        format!("bad goal source {other}"),
                    ))
                }
            };
            let dim = pr.get_u32()? as usize;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(pr.get_f64()?);
            }
            let kappa = pr.get_f64()?;
            RewardModel::DistanceToGoal {
                encoder: params,
                goal: GoalEmbedding { values, source },
                kappa,
            }
        }
        1 => RewardModel::DirectNet { net: params },
        2 => RewardModel::Classifier { net: params },
        other => {
            return Err(Error::format(
                payload_off + 8,
                format!("bad reward variant {other}"),
            ))
        }
    };
    pr.expect_end()
        .map_err(|_| Error::format(payload_off + pr.offset(), "trailing payload bytes"))?;
    Ok((model, config_hash))
}

pub fn save_reward_model(
    model: &RewardModel,
    config_hash: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, encode_model(model, config_hash))?;
    Ok(())
}

pub fn load_reward_model(path: impl AsRef<Path>) -> Result<(RewardModel, u64)> {
    decode_model(&std::fs::read(path)?)
}
