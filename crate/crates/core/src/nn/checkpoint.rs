//! Binary network checkpoints.
//!
//! ```text
//! "TIWNET"            6 bytes magic
//! version             u16 LE (currently 1)
//! header_len          u32 LE
//! header              header_len bytes of UTF-8 `key: value` lines
//! param_count         u64 LE
//! params              param_count x f64 LE, layout order
//! ```
//!
//! Required header keys: `role`, `input_dim`, `output_dim`, `hidden`,
//! `activation`, `time_embed`. Additional keys are carried through untouched.

use std::path::Path;

use super::mlp::{Activation, Mlp, NetArch, TimeEmbed};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"TIWNET";
pub const FORMAT_VERSION: u16 = 1;

const REQUIRED: [&str; 6] = [
    "role",
    "input_dim",
    "output_dim",
    "hidden",
    "activation",
    "time_embed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub role: String,
    pub net: Mlp,
    /// Extra header fields, in file order.
    pub extra: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(role: impl Into<String>, net: Mlp) -> Self {
        Self {
            role: role.into(),
            net,
            extra: Vec::new(),
        }
    }

    pub fn with_field(mut self, key: &str, value: impl Into<String>) -> Self {
        self.extra.push((key.to_string(), value.into()));
        self
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.extra
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = self.net.arch();
        let mut header = String::new();
        header.push_str(&format!("role: {}\n", self.role));
        header.push_str(&format!("input_dim: {}\n", arch.input_dim));
        header.push_str(&format!("output_dim: {}\n", arch.output_dim));
        let hidden: Vec<String> = arch.hidden.iter().map(|h| h.to_string()).collect();
        header.push_str(&format!("hidden: {}\n", hidden.join(",")));
        let act = match arch.activation {
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
        };
        header.push_str(&format!("activation: {act}\n"));
        let embed = match arch.time_embed {
            TimeEmbed::AppendScalar => "append_scalar".to_string(),
            TimeEmbed::Sinusoidal { frequencies } => format!("sinusoidal:{frequencies}"),
        };
        header.push_str(&format!("time_embed: {embed}\n"));
        for (k, v) in &self.extra {
            header.push_str(&format!("{k}: {v}\n"));
        }

        let params = self.net.params();
        let mut out = Vec::with_capacity(24 + header.len() + 8 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(6, "magic")? != MAGIC {
            return Err(Error::format("magic", "not a TIWNET checkpoint"));
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::format("version", format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes(r.take(4, "header_len")?.try_into().expect("4 bytes"));
        let header = std::str::from_utf8(r.take(header_len as usize, "header")?)
            .map_err(|_| Error::format("header", "not valid UTF-8"))?;

        let mut fields: Vec<(String, String)> = Vec::new();
        for line in header.lines() {
            let (k, v) = line
                .split_once(": ")
                .ok_or_else(|| Error::format("header", format!("malformed line `{line}`")))?;
            if fields.iter().any(|(existing, _)| existing == k) {
                return Err(Error::format(k, "duplicate key"));
            }
            fields.push((k.to_string(), v.to_string()));
        }
        let get = |key: &str| -> Result<&str> {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::format(key, "missing"))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::format(key, "not an integer"))
        };

        let role = get("role")?.to_string();
        let input_dim = parse_usize("input_dim")?;
        let output_dim = parse_usize("output_dim")?;
        let hidden_text = get("hidden")?;
        let hidden = if hidden_text.is_empty() {
            Vec::new()
        } else {
            hidden_text
                .split(',')
                .map(|h| h.parse().map_err(|_| Error::format("hidden", "bad width")))
                .collect::<Result<Vec<usize>>>()?
        };
        let activation = match get("activation")? {
            "tanh" => Activation::Tanh,
            "silu" => Activation::Silu,
            other => return Err(Error::format("activation", format!("unknown `{other}`"))),
        };
        let time_embed = match get("time_embed")? {
            "append_scalar" => TimeEmbed::AppendScalar,
            other => match other.strip_prefix("sinusoidal:").map(str::parse) {
                Some(Ok(frequencies)) => TimeEmbed::Sinusoidal { frequencies },
                _ => return Err(Error::format("time_embed", format!("unknown `{other}`"))),
            },
        };
        let arch = NetArch {
            input_dim,
            output_dim,
            hidden,
            activation,
            time_embed,
        };
        arch.validate()
            .map_err(|e| Error::format("architecture", e.to_string()))?;

        let count = u64::from_le_bytes(r.take(8, "param_count")?.try_into().expect("8 bytes"));
        if count as usize != arch.num_params() {
            return Err(Error::format(
                "param_count",
                format!("{count} does not match architecture ({})", arch.num_params()),
            ));
        }
        let raw = r.take(8 * count as usize, "params")?;
        let params: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if r.pos != bytes.len() {
            return Err(Error::format("params", "trailing bytes after parameters"));
        }
        let net = Mlp::from_params(arch, params)?;
        let extra = fields
            .into_iter()
            .filter(|(k, _)| !REQUIRED.contains(&k.as_str()))
            .collect();
        Ok(Self { role, net, extra })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::ensure_parent(path)?;
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::format(field, "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_ckpt(seed: u64) -> Checkpoint {
        let net = Mlp::init(NetArch::toy(2, 1), seed).unwrap();
        Checkpoint::new("discriminator", net).with_field("time_dependent", "true")
    }

    #[test]
    fn header_starts_with_magic_and_version() {
        let bytes = sample_ckpt(1).to_bytes();
        assert_eq!(&bytes[..6], b"TIWNET");
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 1);
        let text = String::from_utf8_lossy(&bytes[12..120]);
        assert!(text.starts_with("role: discriminator\n"));
    }

    #[test]
    fn corruption_names_the_field() {
        let good = sample_ckpt(2).to_bytes();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format { field, .. }) if field == "magic"));

        let bad = &good[..good.len() - 3];
        assert!(matches!(Checkpoint::from_bytes(bad), Err(Error::Format { field, .. }) if field == "params"));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format { field, .. }) if field == "params"));

        let mut bad = good.clone();
        let pos = bad.windows(4).position(|w| w == b"silu").unwrap();
        bad[pos..pos + 4].copy_from_slice(b"relu");
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format { field, .. }) if field == "activation"));

        let mut bad = good;
        bad[6] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format { field, .. }) if field == "version"));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/d.ckpt");
        let ck = sample_ckpt(3);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.field("time_dependent"), Some("true"));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in 0u64..10_000, scale in -1e6f64..1e6) {
            let mut ck = sample_ckpt(seed);
            for p in ck.net.params_mut() {
                *p *= scale;
            }
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            for (a, b) in back.net.params().iter().zip(ck.net.params()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
