//! Versioned binary model container.
//!
//! ```text
//! magic "DDSRANK\0" | version u32 | body length u64 | body | fnv1a-64(body)
//! ```
//!
//! All integers are little endian. The body holds the config, the seed and
//! every parameter as `name, group, shape, f64 values` in layout order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::{ModelConfig, Variant};
use super::layers::Activation;
use super::params::{Param, ParamGroup};
use super::Model;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DDSRANK\0";
pub const FORMAT_VERSION: u32 = 1;

fn checksum(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("length fits u32"));
    }
    fn widths(&mut self, w: &[usize]) {
        self.len(w.len());
        for &x in w {
            self.len(x);
        }
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Codec(format!("truncated payload at byte {} (wanted {n} more)", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn widths(&mut self) -> Result<Vec<usize>> {
        let n = self.len()?;
        (0..n).map(|_| self.len()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Codec("parameter name is not UTF-8".into()))
    }
}

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::Baseline => 0,
        Variant::MultiHead => 1,
        Variant::Dda => 2,
        Variant::Dds => 3,
    }
}

fn write_config(w: &mut Writer, c: &ModelConfig) {
    w.u8(variant_tag(c.variant));
    w.u8(match c.activation {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    });
    w.len(c.n_domains);
    w.len(c.feature_dim);
    w.widths(&c.trunk_hidden);
    w.len(c.token_dim);
    w.len(c.transformer_layers);
    w.len(c.heads);
    w.len(c.ffn_dim);
    w.widths(&c.final_hidden);
    w.widths(&c.classifier_hidden);
    w.f64(c.grl_lambda);
    w.f64(c.domain_loss_weight);
}

fn read_config(r: &mut Reader) -> Result<ModelConfig> {
    let variant = match r.u8()? {
        0 => Variant::Baseline,
        1 => Variant::MultiHead,
        2 => Variant::Dda,
        3 => Variant::Dds,
        t => return Err(Error::Codec(format!("unknown variant tag {t}"))),
    };
    let activation = match r.u8()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        t => return Err(Error::Codec(format!("unknown activation tag {t}"))),
    };
    Ok(ModelConfig {
        variant,
        activation,
        n_domains: r.len()?,
        feature_dim: r.len()?,
        trunk_hidden: r.widths()?,
        token_dim: r.len()?,
        transformer_layers: r.len()?,
        heads: r.len()?,
        ffn_dim: r.len()?,
        final_hidden: r.widths()?,
        classifier_hidden: r.widths()?,
        grl_lambda: r.f64()?,
        domain_loss_weight: r.f64()?,
    })
}

pub(crate) fn encode(model: &Model) -> Vec<u8> {
    let mut body = Writer::default();
    write_config(&mut body, &model.config);
    body.u64(model.seed);
    body.len(model.params.len());
    for p in &model.params {
        body.str(&p.name);
        match p.group {
            ParamGroup::Shared => {
                body.u8(0);
                body.u32(0);
            }
            ParamGroup::Head(d) => {
                body.u8(1);
                body.len(d);
            }
            ParamGroup::Classifier => {
                body.u8(2);
                body.u32(0);
            }
        }
        body.widths(p.value.shape());
        for &v in p.value.data() {
            body.f64(v);
        }
    }
    let body = body.0;
    let mut out = Writer::default();
    out.0.extend_from_slice(MAGIC);
    out.u32(FORMAT_VERSION);
    out.u64(body.len() as u64);
    out.0.extend_from_slice(&body);
    out.u64(checksum(&body));
    out.0
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Codec("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Codec(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let body_len = usize::try_from(r.u64()?).map_err(|_| Error::Codec("body too large".into()))?;
    let body = r.take(body_len)?;
    let sum = r.u64()?;
    if r.pos != bytes.len() {
        return Err(Error::Codec(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if checksum(body) != sum {
        return Err(Error::Codec("checksum mismatch, payload is corrupt".into()));
    }

    let mut b = Reader { bytes: body, pos: 0 };
    let config = read_config(&mut b)?;
    let seed = b.u64()?;
    let count = b.len()?;
    let mut params = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name = b.str()?;
        let tag = b.u8()?;
        let domain = b.len()?;
        let group = match tag {
            0 => ParamGroup::Shared,
            1 => ParamGroup::Head(domain),
            2 => ParamGroup::Classifier,
            t => return Err(Error::Codec(format!("unknown parameter group {t}"))),
        };
        let shape = b.widths()?;
        let n: usize = shape.iter().product();
        if n > body.len() / 8 {
            return Err(Error::Codec(format!("parameter {name} claims {n} values")));
        }
        let data = (0..n).map(|_| b.f64()).collect::<Result<Vec<_>>>()?;
        let value = Tensor::new(shape, data).map_err(|e| Error::Codec(format!("{name}: {e}")))?;
        params.push(Param { name, group, value });
    }
    if b.pos != body.len() {
        return Err(Error::Codec("unread bytes after the last parameter".into()));
    }
    Model::from_parts(config, seed, params)
}
