//! Versioned, byte-exact checkpointing of search state.
//!
//! Every float is stored as the 16-hex-digit bit pattern of its f64, so a
//! save/load round trip is exact and a reloaded run continues bit-for-bit.
//! The launching configuration text rides along verbatim, keyed by a content
//! hash, so derivation can trace any architecture back to its run.

use std::collections::BTreeMap;
use std::path::Path;

use stretchnas_autodiff::Tensor;

use crate::error::{Error, Result};
use crate::search_space::{CellOp, Supernet, SupernetConfig};
use crate::topology::TopologyMode;

use super::state::SearchState;

const MAGIC: &str = "stretchnas-checkpoint v1";

/// FNV-1a over the UTF-8 bytes, rendered as 16 hex digits.
pub fn fnv64_hex(text: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in text.as_bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

fn f64_hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn parse_f64_hex(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::config(format!("bad float bit pattern {s:?} in checkpoint")))
}

/// A reloaded run: exact state plus the configuration text it was launched
/// with.
pub struct Checkpoint {
    pub state: SearchState,
    pub config_text: String,
    pub config_hash: String,
}

fn push_array(out: &mut String, role: &str, name: &str, t: &Tensor) {
    out.push_str("[array]\n");
    out.push_str(&format!("role = {role}\n"));
    out.push_str(&format!("name = {name}\n"));
    let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    out.push_str(&format!("shape = {}\n", shape.join(" ")));
    let data: Vec<String> = t.data().iter().map(|&v| f64_hex(v)).collect();
    out.push_str(&format!("data = {}\n", data.join(" ")));
}

/// Serializes the full state. Deterministic: same state and text, same
/// bytes.
pub fn render_checkpoint(state: &SearchState, config_text: &str) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str("[meta]\n");
    out.push_str(&format!("seed = {}\n", state.seed));
    out.push_str(&format!("epoch = {}\n", state.epoch));
    out.push_str(&format!("adam_t = {}\n", state.adam_t));
    out.push_str(&format!("config_hash = {}\n", fnv64_hex(config_text)));
    let cfg = &state.net.config;
    out.push_str("[net]\n");
    out.push_str(&format!("n_nodes = {}\n", cfg.n_nodes));
    out.push_str(&format!("layers = {}\n", cfg.layers));
    out.push_str(&format!("init_channels = {}\n", cfg.init_channels));
    out.push_str(&format!("in_channels = {}\n", cfg.in_channels));
    out.push_str(&format!("image_size = {}\n", cfg.image_size));
    out.push_str(&format!("n_classes = {}\n", cfg.n_classes));
    out.push_str(&format!("mode = {}\n", cfg.mode.name()));
    let ops: Vec<&str> = cfg.ops.iter().map(|op| op.name()).collect();
    out.push_str(&format!("ops = {}\n", ops.join(" ")));
    out.push_str(&format!("baseline = {}\n", cfg.baseline));
    out.push_str(&format!("bn_eps = {}\n", f64_hex(cfg.bn_eps)));
    out.push_str("[config]\n");
    for line in config_text.lines() {
        out.push_str("| ");
        out.push_str(line);
        out.push('\n');
    }
    for (name, t) in state.net.params.iter() {
        push_array(&mut out, "param", name, t);
    }
    for (name, t) in &state.adam_m {
        push_array(&mut out, "adam_m", name, t);
    }
    for (name, t) in &state.adam_v {
        push_array(&mut out, "adam_v", name, t);
    }
    for (name, t) in &state.sgd_vel {
        push_array(&mut out, "sgd_vel", name, t);
    }
    out
}

pub fn save_checkpoint(path: &Path, state: &SearchState, config_text: &str) -> Result<()> {
    std::fs::write(path, render_checkpoint(state, config_text))?;
    Ok(())
}

struct Lines<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.peek();
        if item.is_some() {
            self.pos += 1;
        }
        item
    }

    fn expect_key(&mut self, key: &str) -> Result<String> {
        let (line_no, line) = self
            .next()
            .ok_or_else(|| Error::parse(self.items.len() + 1, 1, format!("expected key {key}")))?;
        let (k, v) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::parse(line_no, 1, format!("expected {key} = value")))?;
        if k != key {
            return Err(Error::parse(line_no, 1, format!("expected key {key}, found {k:?}")));
        }
        Ok(v.to_string())
    }
}

fn parse_usize(text: &str, what: &str) -> Result<usize> {
    text.parse::<usize>()
        .map_err(|_| Error::config(format!("{what} must be an integer, got {text:?}")))
}

/// Reads a checkpoint back into an exact [`SearchState`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    parse_checkpoint(&text)
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = Lines {
        items: text
            .lines()
            .enumerate()
            .map(|(idx, line)| (idx + 1, line))
            .filter(|(_, line)| !line.trim().is_empty())
            .collect(),
        pos: 0,
    };
    let (line_no, first) = lines
        .next()
        .ok_or_else(|| Error::parse(1, 1, "empty checkpoint".to_string()))?;
    if first.trim() != MAGIC {
        return Err(Error::parse(
            line_no,
            1,
            format!("expected version line {MAGIC:?}, found {:?}", first.trim()),
        ));
    }

    expect_section(&mut lines, "meta")?;
    let seed = lines.expect_key("seed")?.parse::<u64>().map_err(|_| {
        Error::config("seed must be an integer".to_string())
    })?;
    let epoch = parse_usize(&lines.expect_key("epoch")?, "epoch")?;
    let adam_t = lines.expect_key("adam_t")?.parse::<u64>().map_err(|_| {
        Error::config("adam_t must be an integer".to_string())
    })?;
    let stored_hash = lines.expect_key("config_hash")?;

    expect_section(&mut lines, "net")?;
    let n_nodes = parse_usize(&lines.expect_key("n_nodes")?, "n_nodes")?;
    let layers = parse_usize(&lines.expect_key("layers")?, "layers")?;
    let init_channels = parse_usize(&lines.expect_key("init_channels")?, "init_channels")?;
    let in_channels = parse_usize(&lines.expect_key("in_channels")?, "in_channels")?;
    let image_size = parse_usize(&lines.expect_key("image_size")?, "image_size")?;
    let n_classes = parse_usize(&lines.expect_key("n_classes")?, "n_classes")?;
    let mode = TopologyMode::parse(&lines.expect_key("mode")?)?;
    let ops = lines
        .expect_key("ops")?
        .split_whitespace()
        .map(CellOp::parse)
        .collect::<Result<Vec<_>>>()?;
    let baseline = match lines.expect_key("baseline")?.as_str() {
        "true" => true,
        "false" => false,
        other => return Err(Error::config(format!("baseline must be true or false, got {other:?}"))),
    };
    let bn_eps = parse_f64_hex(&lines.expect_key("bn_eps")?)?;
    let config = SupernetConfig {
        n_nodes,
        layers,
        init_channels,
        in_channels,
        image_size,
        n_classes,
        mode,
        ops,
        baseline,
        bn_eps,
    };

    expect_section(&mut lines, "config")?;
    let mut config_lines: Vec<&str> = Vec::new();
    while let Some((line_no, line)) = lines.peek() {
        if let Some(rest) = line.strip_prefix("| ") {
            config_lines.push(rest);
            lines.next();
        } else if line.trim() == "|" {
            config_lines.push("");
            lines.next();
        } else if line.trim_start().starts_with('[') {
            break;
        } else {
            return Err(Error::parse(
                line_no,
                1,
                format!("unexpected line in config payload: {line:?}"),
            ));
        }
    }
    let config_text = if config_lines.is_empty() {
        String::new()
    } else {
        let mut joined = config_lines.join("\n");
        joined.push('\n');
        joined
    };
    if fnv64_hex(&config_text) != stored_hash {
        return Err(Error::config(
            "checkpoint config hash does not match its config payload",
        ));
    }

    // Arrays overwrite a freshly initialized state so every expected entry
    // must be present with the right shape and nothing extra can slip in.
    let net = Supernet::init(config, seed)?;
    let mut state = SearchState::new(net, seed);
    state.epoch = epoch;
    state.adam_t = adam_t;
    let mut loaded: BTreeMap<(String, String), bool> = BTreeMap::new();
    while let Some((line_no, line)) = lines.peek() {
        if line.trim() != "[array]" {
            return Err(Error::parse(line_no, 1, format!("expected [array], found {line:?}")));
        }
        lines.next();
        let role = lines.expect_key("role")?;
        let name = lines.expect_key("name")?;
        let shape: Vec<usize> = lines
            .expect_key("shape")?
            .split_whitespace()
            .map(|tok| parse_usize(tok, "shape entry"))
            .collect::<Result<Vec<_>>>()?;
        let data: Vec<f64> = lines
            .expect_key("data")?
            .split_whitespace()
            .map(parse_f64_hex)
            .collect::<Result<Vec<_>>>()?;
        let tensor = Tensor::new(shape, data).map_err(Error::from)?;
        let slot = match role.as_str() {
            "param" => state.net.params.get_mut(&name),
            "adam_m" => state.adam_m.get_mut(&name),
            "adam_v" => state.adam_v.get_mut(&name),
            "sgd_vel" => state.sgd_vel.get_mut(&name),
            other => return Err(Error::config(format!("unknown array role {other:?}"))),
        };
        let slot = slot.ok_or_else(|| {
            Error::config(format!("checkpoint names unknown {role} array {name:?}"))
        })?;
        if slot.shape() != tensor.shape() {
            return Err(Error::config(format!(
                "array {name:?} has shape {:?}, expected {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        let grad = slot.requires_grad;
        *slot = if grad { tensor.with_grad() } else { tensor };
        loaded.insert((role, name), true);
    }
    let expected = state.net.params.len() + state.adam_m.len() + state.adam_v.len() + state.sgd_vel.len();
    if loaded.len() != expected {
        return Err(Error::config(format!(
            "checkpoint holds {} arrays, expected {expected}",
            loaded.len()
        )));
    }
    Ok(Checkpoint {
        state,
        config_text,
        config_hash: stored_hash,
    })
}

fn expect_section(lines: &mut Lines, name: &str) -> Result<()> {
    let (line_no, line) = lines
        .next()
        .ok_or_else(|| Error::parse(lines.items.len() + 1, 1, format!("expected section [{name}]")))?;
    if line.trim() != format!("[{name}]") {
        return Err(Error::parse(
            line_no,
            1,
            format!("expected section [{name}], found {:?}", line.trim()),
        ));
    }
    Ok(())
}
