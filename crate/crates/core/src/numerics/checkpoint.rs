//! Binary checkpoint format.
//!
//! ```text
//! params=<k>\n
//! <name> <d1> <d2> ...\n  followed by prod(d) little-endian f64   (k times)
//! adam step=<t> lr=<..> beta1=<..> beta2=<..> eps=<..> weight_decay=<..>\n   (optional)
//! then, per parameter in the same order: first moment, second moment (raw f64)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Result, TegError};
use crate::numerics::{AdamConfig, AdamState, ParamStore, Tensor};

pub fn encode(params: &ParamStore, adam: Option<&AdamState>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(format!("params={}\n", params.len()).as_bytes());
    for p in params.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        out.extend_from_slice(format!("{} {}\n", p.name, dims.join(" ")).as_bytes());
        push_f64s(&mut out, p.value.data());
    }
    if let Some(st) = adam {
        let c = st.config;
        out.extend_from_slice(
            format!(
                "adam step={} lr={:?} beta1={:?} beta2={:?} eps={:?} weight_decay={:?}\n",
                st.step, c.lr, c.beta1, c.beta2, c.eps, c.weight_decay
            )
            .as_bytes(),
        );
        for p in params.iter() {
            push_f64s(&mut out, st.m[&p.name].data());
            push_f64s(&mut out, st.v[&p.name].data());
        }
    }
    out
}

fn push_f64s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn line(&mut self) -> Result<Option<&str>> {
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| TegError::Checkpoint("unterminated header line".into()))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map(Some)
            .map_err(|_| TegError::Checkpoint("header is not utf-8".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let need = n * 8;
        if self.bytes.len() - self.pos < need {
            return Err(TegError::Checkpoint(format!(
                "truncated payload: need {need} bytes at offset {}",
                self.pos
            )));
        }
        let out = self.bytes[self.pos..self.pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos += need;
        Ok(out)
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ParamStore, Option<AdamState>)> {
    let mut rd = Reader { bytes, pos: 0 };
    let header = rd
        .line()?
        .ok_or_else(|| TegError::Checkpoint("empty file".into()))?;
    let k: usize = header
        .strip_prefix("params=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| TegError::Checkpoint(format!("bad header {header:?}")))?;

    let mut store = ParamStore::new(0);
    for _ in 0..k {
        let line = rd
            .line()?
            .ok_or_else(|| TegError::Checkpoint("missing parameter header".into()))?
            .to_string();
        let mut parts = line.split(' ');
        let name = parts.next().unwrap_or_default().to_string();
        let shape: Vec<usize> = parts
            .map(|d| d.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| TegError::Checkpoint(format!("bad shape in {line:?}")))?;
        let data = rd.f64s(shape.iter().product())?;
        store.add_given(&name, Tensor::new(&shape, data)?)?;
    }

    let adam = match rd.line()? {
        None => None,
        Some(line) => {
            let line = line.to_string();
            let fields: BTreeMap<&str, &str> = line
                .strip_prefix("adam ")
                .ok_or_else(|| TegError::Checkpoint(format!("unexpected trailer {line:?}")))?
                .split(' ')
                .filter_map(|kv| kv.split_once('='))
                .collect();
            let num = |key: &str| -> Result<f64> {
                fields
                    .get(key)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| TegError::Checkpoint(format!("missing adam field {key}")))
            };
            let config = AdamConfig {
                lr: num("lr")?,
                beta1: num("beta1")?,
                beta2: num("beta2")?,
                eps: num("eps")?,
                weight_decay: num("weight_decay")?,
            };
            let step = fields
                .get("step")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| TegError::Checkpoint("missing adam step".into()))?;
            let mut st = AdamState::new(config, &store);
            st.step = step;
            for p in store.iter() {
                let n = p.value.len();
                st.m.insert(p.name.clone(), Tensor::new(p.value.shape(), rd.f64s(n)?)?);
                st.v.insert(p.name.clone(), Tensor::new(p.value.shape(), rd.f64s(n)?)?);
            }
            Some(st)
        }
    };
    if rd.pos != bytes.len() {
        return Err(TegError::Checkpoint("trailing bytes".into()));
    }
    Ok((store, adam))
}

pub fn save(path: &Path, params: &ParamStore, adam: Option<&AdamState>) -> Result<()> {
    fs::write(path, encode(params, adam)).map_err(|e| TegError::io(path, e))
}

pub fn load(path: &Path) -> Result<(ParamStore, Option<AdamState>)> {
    let bytes = fs::read(path).map_err(|e| TegError::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Init;
    use proptest::prelude::*;

    fn sample_store(seed: u64) -> ParamStore {
        let mut s = ParamStore::new(seed);
        s.add("gcn.w.0", &[5, 3], Init::GlorotUniform).unwrap();
        s.add("egnn.0.msg.0.b", &[1, 3], Init::Zeros).unwrap();
        s
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample_store(0), None);
        assert!(bytes.starts_with(b"params=2\ngcn.w.0 5 3\n"));
        assert_eq!(
            bytes.len(),
            "params=2\ngcn.w.0 5 3\n".len() + 15 * 8 + "egnn.0.msg.0.b 1 3\n".len() + 3 * 8
        );
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut bytes = encode(&sample_store(0), None);
        bytes.truncate(bytes.len() - 3);
        assert!(decode(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_with_adam(seed in any::<u64>(), step in 0u64..1000) {
            let s = sample_store(seed);
            let mut st = AdamState::new(AdamConfig::default(), &s);
            st.step = step;
            st.m.get_mut("gcn.w.0").unwrap().data_mut()[2] = seed as f64 * 1e-3;
            let (s2, st2) = decode(&encode(&s, Some(&st))).unwrap();
            prop_assert_eq!(s.checksum(), s2.checksum());
            prop_assert_eq!(Some(st), st2);
        }
    }
}
