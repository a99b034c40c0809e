//! Binary checkpoints: magic, little-endian header length, JSON header, then
//! every tensor as raw little-endian `f64`. Round trips are bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{InputNorm, Network, Params};
use super::optim::TrainConfig;
use crate::error::{Error, Result};
use crate::synthgen::io::TOOL_VERSION;

const MAGIC: &[u8; 8] = b"LDCKPT01";

/// Network, optimizer velocity and progress counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Network,
    pub config: TrainConfig,
    /// `"pretrain"`, `"unlearn"` or `"classifier"`.
    pub phase: String,
    /// Completed epochs in `phase`.
    pub epoch: usize,
    pub velocity: Option<Params>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: String,
    image_size: usize,
    channels: [usize; 4],
    config: TrainConfig,
    phase: String,
    epoch: usize,
    tensors: Vec<(String, usize)>,
}

fn named_tensors(c: &Checkpoint) -> Vec<(String, Vec<f64>)> {
    let mut out = vec![
        ("norm.mean".to_string(), c.net.norm.mean.to_vec()),
        ("norm.std".to_string(), c.net.norm.std.to_vec()),
        ("lambda".to_string(), vec![c.net.lambda]),
    ];
    for (name, _, t) in c.net.params.tensors() {
        out.push((name, t.to_vec()));
    }
    if let Some(v) = &c.velocity {
        for (name, _, t) in v.tensors() {
            out.push((format!("velocity.{name}"), t.to_vec()));
        }
    }
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = named_tensors(self);
        let header = Header {
            version: TOOL_VERSION.to_string(),
            image_size: self.net.image_size,
            channels: self.net.channels,
            config: self.config.clone(),
            phase: self.phase.clone(),
            epoch: self.epoch,
            tensors: tensors.iter().map(|(n, t)| (n.clone(), t.len())).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |r: &str| Error::format(origin, r);
        let mut cur = bytes;
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut len = [0u8; 8];
        cur.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
        let len = u64::from_le_bytes(len) as usize;
        if cur.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&cur[..len])?;
        cur = &cur[len..];

        let mut read = |name: &str, expect: usize| -> Result<Vec<f64>> {
            let n = expect * 8;
            if cur.len() < n {
                return Err(bad(&std::format!("truncated tensor {name}")));
            }
            let v = cur[..n]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            cur = &cur[n..];
            Ok(v)
        };

        let mut net = Network::new(
            header.image_size,
            header.channels,
            header.config.lambda,
            0,
        )?;
        let mut velocity = net.params.zeros_like();
        let mut has_velocity = false;
        let expected: Vec<(String, usize)> = {
            let mut e = vec![
                ("norm.mean".to_string(), 3),
                ("norm.std".to_string(), 3),
                ("lambda".to_string(), 1),
            ];
            e.extend(net.params.tensors().into_iter().map(|(n, _, t)| (n, t.len())));
            e
        };
        let n_velocity = expected.len() - 3;
        if header.tensors.len() == expected.len() + n_velocity {
            has_velocity = true;
        } else if header.tensors.len() != expected.len() {
            return Err(bad("tensor count does not match network layout"));
        }
        for (i, (name, n)) in expected.iter().enumerate() {
            if header.tensors[i] != (name.clone(), *n) {
                return Err(bad(&std::format!("unexpected tensor entry {:?}", header.tensors[i])));
            }
        }

        let mean = read("norm.mean", 3)?;
        let std = read("norm.std", 3)?;
        net.norm = InputNorm {
            mean: [mean[0], mean[1], mean[2]],
            std: [std[0], std[1], std[2]],
        };
        net.lambda = read("lambda", 1)?[0];
        for (name, _, t) in net.params.tensors_mut() {
            let n = t.len();
            *t = read(&name, n)?;
        }
        if has_velocity {
            for (name, _, t) in velocity.tensors_mut() {
                let n = t.len();
                *t = read(&name, n)?;
            }
        }
        if !cur.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            net,
            config: header.config,
            phase: header.phase,
            epoch: header.epoch,
            velocity: has_velocity.then_some(velocity),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, path)
    }
}
