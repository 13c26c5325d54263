//! Checkpoint container.
//!
//! ```text
//! csso-checkpoint 1
//! config <key> <value>
//! tensor <name> <rows> <cols> <offset> <trainable>
//! end <payload bytes>
//! <payload: little-endian f32, tensors at their byte offsets>
//! ```
//!
//! Header lines are UTF-8 and newline terminated; names and values contain
//! no whitespace. Tensors are stored contiguously in declaration order.

use std::collections::BTreeSet;

use super::params::{Mat, ParamStore};
use crate::error::{Error, Result};

const MAGIC: &str = "csso-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub tensors: Vec<TensorRecord>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl Checkpoint {
    /// Snapshot of a store, narrowed to single precision.
    pub fn from_store(store: &ParamStore, config: Vec<(String, String)>) -> Self {
        let tensors = store
            .iter()
            .map(|(_, p)| TensorRecord {
                name: p.name.clone(),
                rows: p.value.nrows(),
                cols: p.value.ncols(),
                trainable: p.trainable,
                data: p.value.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        Self { config, tensors }
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Copies every tensor into the same-named entry of `store`; names and
    /// shapes must match exactly.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::arg(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for t in &self.tensors {
            let id = store
                .id(&t.name)
                .ok_or_else(|| Error::arg(format!("unknown tensor `{}`", t.name)))?;
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("tensor `{}` holds non-finite values", t.name)));
            }
            let value = Mat::from_shape_vec((t.rows, t.cols), t.data.iter().map(|&v| v as f64).collect())
                .map_err(|e| Error::dim(e.to_string()))?;
            store.set_value(id, value)?;
        }
        store.reset_slots();
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut header = String::new();
        header.push_str(MAGIC);
        header.push('\n');
        for (k, v) in &self.config {
            if !valid_token(k) || !valid_token(v) {
                return Err(Error::arg(format!("config entry `{k}` = `{v}` has whitespace")));
            }
            header.push_str(&format!("config {k} {v}\n"));
        }
        let mut offset = 0usize;
        for t in &self.tensors {
            if !valid_token(&t.name) {
                return Err(Error::arg(format!("tensor name `{}` has whitespace", t.name)));
            }
            if t.data.len() != t.rows * t.cols {
                return Err(Error::dim(format!("tensor `{}` data length", t.name)));
            }
            header.push_str(&format!(
                "tensor {} {} {} {} {}\n",
                t.name,
                t.rows,
                t.cols,
                offset,
                u8::from(t.trainable)
            ));
            offset += t.data.len() * 4;
        }
        header.push_str(&format!("end {offset}\n"));
        let mut out = header.into_bytes();
        out.reserve(offset);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut line_no = 0usize;
        let mut next_line = |pos: &mut usize| -> Result<(usize, &str)> {
            line_no += 1;
            let rest = &bytes[*pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::parse(line_no, "unterminated header line"))?;
            let line = std::str::from_utf8(&rest[..end])
                .map_err(|_| Error::parse(line_no, "header is not UTF-8"))?;
            *pos += end + 1;
            Ok((line_no, line))
        };

        let (_, magic) = next_line(&mut pos)?;
        if magic != MAGIC {
            return Err(Error::parse(1, "not a checkpoint (bad magic line)"));
        }
        let mut ckpt = Checkpoint::default();
        let mut names = BTreeSet::new();
        let mut layout = Vec::new();
        let mut expected_offset = 0usize;
        let payload_len;
        loop {
            let (ln, line) = next_line(&mut pos)?;
            let fields: Vec<&str> = line.split(' ').collect();
            let num = |s: &str, what: &str| -> Result<usize> {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(ln, format!("bad {what} `{s}`")))
            };
            match fields.as_slice() {
                ["config", k, v] if valid_token(k) && valid_token(v) => {
                    ckpt.config.push((k.to_string(), v.to_string()))
                }
                ["tensor", name, rows, cols, offset, trainable] if valid_token(name) => {
                    let rows = num(rows, "rows")?;
                    let cols = num(cols, "cols")?;
                    let offset = num(offset, "offset")?;
                    let trainable = match *trainable {
                        "1" => true,
                        "0" => false,
                        other => return Err(Error::parse(ln, format!("bad trainable flag `{other}`"))),
                    };
                    if !names.insert(name.to_string()) {
                        return Err(Error::parse(ln, format!("duplicate tensor `{name}`")));
                    }
                    if offset != expected_offset {
                        return Err(Error::parse(ln, format!("tensor `{name}` offset {offset}, expected {expected_offset}")));
                    }
                    let bytes_len = rows
                        .checked_mul(cols)
                        .and_then(|n| n.checked_mul(4))
                        .ok_or_else(|| Error::parse(ln, "tensor size overflows"))?;
                    expected_offset = expected_offset
                        .checked_add(bytes_len)
                        .ok_or_else(|| Error::parse(ln, "payload size overflows"))?;
                    layout.push((name.to_string(), rows, cols, trainable, offset, bytes_len));
                }
                ["end", len] => {
                    payload_len = num(len, "payload length")?;
                    if payload_len != expected_offset {
                        return Err(Error::parse(ln, format!("payload length {payload_len}, tensors need {expected_offset}")));
                    }
                    break;
                }
                _ => return Err(Error::parse(ln, format!("unrecognized header line `{line}`"))),
            }
        }
        let payload = &bytes[pos..];
        if payload.len() != payload_len {
            return Err(Error::parse(0, format!(
                "payload has {} bytes, header declares {payload_len}",
                payload.len()
            )));
        }
        for (name, rows, cols, trainable, offset, len) in layout {
            let data = payload[offset..offset + len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            ckpt.tensors.push(TensorRecord {
                name,
                rows,
                cols,
                trainable,
                data,
            });
        }
        Ok(ckpt)
    }
}
