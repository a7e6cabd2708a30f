//! Single-file model container: a line-oriented text header followed by
//! the raw little-endian f64 parameter payload.
//!
//! ```text
//! nucleus-parser-model	1
//! config	word_dim	100
//! ...
//! label	nsubj
//! char	100
//! word	3	did
//! param	words	4x100	sparse
//! payload	<bytes>	<sha256 hex>
//! end
//! <payload>
//! ```
#![allow(clippy::tabs_in_doc_comments)]

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{ModelConfig, ParserModel};
use super::vocab::Vocab;
use super::ParserError;
use crate::numeric::{ParamSet, Tensor};

pub const MODEL_MAGIC: &str = "nucleus-parser-model";
pub const MODEL_VERSION: u32 = 1;

pub fn model_to_bytes(model: &ParserModel) -> Vec<u8> {
    let c = &model.config;
    let mut head = format!("{}\t{}\n", MODEL_MAGIC, MODEL_VERSION);
    for (k, v) in [
        ("word_dim", c.word_dim.to_string()),
        ("char_dim", c.char_dim.to_string()),
        ("char_hidden", c.char_hidden.to_string()),
        ("lstm_hidden", c.lstm_hidden.to_string()),
        ("lstm_layers", c.lstm_layers.to_string()),
        ("mlp_hidden", c.mlp_hidden.to_string()),
        ("rel_dim", c.rel_dim.to_string()),
        ("forget_bias", format!("{:?}", c.forget_bias)),
        ("recursive", c.recursive.to_string()),
    ] {
        head.push_str(&format!("config\t{}\t{}\n", k, v));
    }
    for l in model.vocab.labels() {
        head.push_str(&format!("label\t{}\n", l));
    }
    for ch in model.vocab.chars() {
        head.push_str(&format!("char\t{}\n", *ch as u32));
    }
    for (w, n) in model.vocab.words() {
        head.push_str(&format!("word\t{}\t{}\n", n, w));
    }

    let mut payload = Vec::with_capacity(8 * model.params.size());
    for id in model.params.ids() {
        let t = model.params.get(id);
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        head.push_str(&format!(
            "param\t{}\t{}\t{}\n",
            model.params.name(id),
            dims.join("x"),
            if model.params.is_sparse(id) { "sparse" } else { "dense" }
        ));
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    head.push_str(&format!("payload\t{}\t{}\nend\n", payload.len(), hex::encode(Sha256::digest(&payload))));

    let mut out = head.into_bytes();
    out.extend_from_slice(&payload);
    out
}

fn format_err(line: usize, msg: impl std::fmt::Display) -> ParserError {
    ParserError::Format(format!("header line {}: {}", line, msg))
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, ParserError> {
    s.parse().map_err(|_| format_err(line, format!("bad number `{}`", s)))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ParserModel, ParserError> {
    let mut config = ModelConfig::default();
    let (mut labels, mut chars, mut words) = (Vec::new(), Vec::new(), Vec::new());
    let mut specs: Vec<(String, Vec<usize>, bool)> = Vec::new();
    let mut payload_spec: Option<(usize, String)> = None;

    let mut pos = 0;
    let mut lineno = 0;
    loop {
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(ParserError::Integrity("header ends before `end` line".to_owned()));
        };
        let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|_| format_err(lineno + 1, "not UTF-8"))?;
        pos += nl + 1;
        lineno += 1;
        let fields: Vec<&str> = line.split('\t').collect();

        if lineno == 1 {
            if fields.len() != 2 || fields[0] != MODEL_MAGIC {
                return Err(ParserError::Format("not a parser model file".to_owned()));
            }
            if fields[1] != MODEL_VERSION.to_string() {
                return Err(ParserError::Version {
                    found: fields[1].to_owned(),
                    expected: MODEL_VERSION,
                });
            }
            continue;
        }
        match fields.as_slice() {
            ["end"] => break,
            ["config", key, value] => match *key {
                "word_dim" => config.word_dim = parse_num(value, lineno)?,
                "char_dim" => config.char_dim = parse_num(value, lineno)?,
                "char_hidden" => config.char_hidden = parse_num(value, lineno)?,
                "lstm_hidden" => config.lstm_hidden = parse_num(value, lineno)?,
                "lstm_layers" => config.lstm_layers = parse_num(value, lineno)?,
                "mlp_hidden" => config.mlp_hidden = parse_num(value, lineno)?,
                "rel_dim" => config.rel_dim = parse_num(value, lineno)?,
                "forget_bias" => config.forget_bias = parse_num(value, lineno)?,
                "recursive" => config.recursive = parse_num(value, lineno)?,
                other => return Err(format_err(lineno, format!("unknown config key `{}`", other))),
            },
            ["label", name] => labels.push((*name).to_owned()),
            ["char", code] => {
                let code: u32 = parse_num(code, lineno)?;
                chars.push(char::from_u32(code).ok_or_else(|| format_err(lineno, "invalid character code"))?);
            }
            ["word", count, form] => words.push(((*form).to_owned(), parse_num(count, lineno)?)),
            ["param", name, dims, kind] => {
                let shape = dims
                    .split('x')
                    .map(|d| parse_num(d, lineno))
                    .collect::<Result<Vec<usize>, _>>()?;
                let sparse = match *kind {
                    "sparse" => true,
                    "dense" => false,
                    _ => return Err(format_err(lineno, "expected `sparse` or `dense`")),
                };
                specs.push(((*name).to_owned(), shape, sparse));
            }
            ["payload", len, digest] => payload_spec = Some((parse_num(len, lineno)?, (*digest).to_owned())),
            _ => return Err(format_err(lineno, format!("unrecognized line `{}`", line))),
        }
    }

    let (len, digest) = payload_spec.ok_or_else(|| ParserError::Format("missing payload line".to_owned()))?;
    let payload = &bytes[pos..];
    if payload.len() != len {
        return Err(ParserError::Integrity(format!(
            "payload has {} bytes, header declares {}",
            payload.len(),
            len
        )));
    }
    if hex::encode(Sha256::digest(payload)) != digest {
        return Err(ParserError::Integrity("payload checksum mismatch".to_owned()));
    }

    let mut values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
    let mut params = ParamSet::new();
    for (name, shape, sparse) in specs {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        if data.len() != n {
            return Err(ParserError::Integrity(format!("payload too short for `{}`", name)));
        }
        params.push(&name, Tensor::new(shape, data)?, sparse);
    }
    if values.next().is_some() {
        return Err(ParserError::Integrity("payload longer than the declared parameters".to_owned()));
    }

    ParserModel::from_parts(config, Vocab::from_parts(words, chars, labels), params)
}

pub fn save_model(model: &ParserModel, path: impl AsRef<Path>) -> Result<(), ParserError> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ParserModel, ParserError> {
    model_from_bytes(&fs::read(path)?)
}
