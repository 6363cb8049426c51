//! Binary agent checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "ARBCKPT\0"
//! version      u32      currently 1
//! goal_count   u32
//! max_speed    f64
//! networks     u32      always 5: head, actor, critic, actor_target, critic_target
//! per network:
//!   layers     u32
//!   per layer: inputs u32, outputs u32, activation u8 (0 relu, 1 tanh, 2 identity), frozen u8
//! tensors, in the same network and layer order:
//!   weights    outputs × inputs f64, row-major
//!   bias       outputs f64
//! ```
//!
//! Decoding rejects trailing bytes and non-finite parameters.

use std::path::Path;

use arbiter_core::agent::{Agent, AgentConfig, AgentNetworks};
use arbiter_core::nn::{Activation, DenseLayer, DenseNetwork};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"ARBCKPT\0";
pub const VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub goal_count: usize,
    pub max_speed: f64,
    pub networks: AgentNetworks,
}

impl Checkpoint {
    pub fn of(agent: &Agent) -> Self {
        Checkpoint {
            goal_count: agent.goal_count(),
            max_speed: agent.max_speed(),
            networks: agent.networks().clone(),
        }
    }

    pub fn into_agent(self, config: AgentConfig) -> arbiter_core::Result<Agent> {
        Agent::from_networks(config, self.goal_count, self.max_speed, self.networks)
    }
}

fn nets(n: &AgentNetworks) -> [&DenseNetwork; 5] {
    [&n.head, &n.actor, &n.critic, &n.actor_target, &n.critic_target]
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    }
}

pub fn encode(checkpoint: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(checkpoint.goal_count as u32).to_le_bytes());
    out.extend_from_slice(&checkpoint.max_speed.to_le_bytes());
    let networks = nets(&checkpoint.networks);
    out.extend_from_slice(&(networks.len() as u32).to_le_bytes());
    for net in networks {
        out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
        for l in net.layers() {
            out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
            out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
            out.push(activation_code(l.activation));
            out.push(l.frozen as u8);
        }
    }
    for net in networks {
        for l in net.layers() {
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not an arbiter checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let goal_count = r.u32()? as usize;
    let max_speed = r.f64()?;
    let count = r.u32()?;
    if count != 5 {
        return Err(format!("expected 5 networks, found {count}"));
    }
    let mut shapes = Vec::new();
    for _ in 0..count {
        let layers = r.u32()?;
        let mut net = Vec::new();
        for _ in 0..layers {
            let inputs = r.u32()? as usize;
            let outputs = r.u32()? as usize;
            let activation = match r.u8()? {
                0 => Activation::Relu,
                1 => Activation::Tanh,
                2 => Activation::Identity,
                other => return Err(format!("unknown activation code {other}")),
            };
            let frozen = match r.u8()? {
                0 => false,
                1 => true,
                other => return Err(format!("bad frozen flag {other}")),
            };
            net.push((inputs, outputs, activation, frozen));
        }
        shapes.push(net);
    }
    let mut networks = Vec::new();
    for net in shapes {
        let mut layers = Vec::new();
        for (inputs, outputs, activation, frozen) in net {
            let size = inputs
                .checked_mul(outputs)
                .filter(|s| s.saturating_mul(8) <= bytes.len())
                .ok_or("layer larger than the file")?;
            let mut layer = DenseLayer::zeros(inputs, outputs, activation);
            layer.frozen = frozen;
            for w in layer.weights.iter_mut().take(size) {
                *w = r.f64()?;
            }
            for b in layer.bias.iter_mut() {
                *b = r.f64()?;
            }
            if !layer.weights.iter().chain(&layer.bias).all(|v| v.is_finite()) {
                return Err("non-finite parameter".into());
            }
            layers.push(layer);
        }
        networks.push(DenseNetwork::new(layers).map_err(|e| e.to_string())?);
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let mut it = networks.into_iter();
    let mut next = || it.next().unwrap();
    Ok(Checkpoint {
        goal_count,
        max_speed,
        networks: AgentNetworks {
            head: next(),
            actor: next(),
            critic: next(),
            actor_target: next(),
            critic_target: next(),
        },
    })
}

pub fn save(agent: &Agent, path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, encode(&Checkpoint::of(agent))).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path, config: &AgentConfig) -> CliResult<Agent> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let fail = |message: String| CliError::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let ck = decode(&bytes).map_err(fail)?;
    ck.into_agent(config.clone()).map_err(|e| fail(e.to_string()))
}
