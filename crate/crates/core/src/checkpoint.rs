//! Versioned plain-text model checkpoints.
//!
//! ```text
//! SGAIL1
//! meta <key> <value>
//! net <name> <input> <hidden|-> <output> <activation> <head>
//! <params, space separated>
//! vec <name> <len>
//! <values, space separated>
//! ```
//!
//! Floats are written in shortest round-trip form, so save then load is exact.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{Activation, Approximator, ApproximatorSpec, OutputHead, ParamVector};
use crate::error::{Error, Result};

pub const MAGIC: &str = "SGAIL1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub nets: Vec<(String, Approximator)>,
    pub vectors: Vec<(String, Vec<f64>)>,
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::Config(format!("{kind} '{s}' must be a non-empty token without whitespace")));
    }
    Ok(())
}

fn join_floats(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").expect("write to string");
    }
    out
}

fn parse_floats(line: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}' in {what}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::Parse(format!("{what}: expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse(format!("bad {what} '{s}'")))
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) -> Result<()> {
        check_token("meta key", key)?;
        let value = value.to_string();
        if value.contains('\n') {
            return Err(Error::Config(format!("meta value for {key} spans lines")));
        }
        self.meta.push((key.to_string(), value));
        Ok(())
    }

    pub fn push_net(&mut self, name: &str, net: &Approximator) -> Result<()> {
        check_token("network name", name)?;
        self.nets.push((name.to_string(), net.clone()));
        Ok(())
    }

    pub fn push_vector(&mut self, name: &str, values: &[f64]) -> Result<()> {
        check_token("vector name", name)?;
        self.vectors.push((name.to_string(), values.to_vec()));
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse(format!("checkpoint has no meta entry '{key}'")))
    }

    pub fn net(&self, name: &str) -> Result<&Approximator> {
        self.nets
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, n)| n)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no network '{name}'")))
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        self.vectors
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Parse(format!("checkpoint has no vector '{name}'")))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{MAGIC}")?;
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}")?;
        }
        for (name, net) in &self.nets {
            let spec = net.spec();
            let hidden = if spec.hidden_layers.is_empty() {
                "-".to_string()
            } else {
                spec.hidden_layers.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            };
            writeln!(
                out,
                "net {name} {} {hidden} {} {} {}",
                spec.input_dim,
                spec.output_dim,
                spec.hidden_activation.name(),
                spec.output_head.name()
            )?;
            writeln!(out, "{}", join_floats(net.params()))?;
        }
        for (name, values) in &self.vectors {
            writeln!(out, "vec {name} {}", values.len())?;
            writeln!(out, "{}", join_floats(values))?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let mut lines = text.lines();
        let mut payload = |what: &str| -> Result<&str> {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("checkpoint ends before {what}")))
        };
        let magic = payload("the header")?;
        if magic.trim_end() != MAGIC {
            return Err(Error::Parse(format!("not an {MAGIC} checkpoint (header '{}')", magic.trim_end())));
        }
        let mut ck = Checkpoint::new();
        while let Ok(line) = payload("the next record") {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.push((key.to_string(), value.to_string()));
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["net", name, input, hidden, output, act, head] => {
                    let hidden_layers = if *hidden == "-" {
                        Vec::new()
                    } else {
                        hidden
                            .split(',')
                            .map(|h| parse_usize(h, "hidden width"))
                            .collect::<Result<Vec<_>>>()?
                    };
                    let spec = ApproximatorSpec {
                        input_dim: parse_usize(input, "input dim")?,
                        hidden_layers,
                        output_dim: parse_usize(output, "output dim")?,
                        hidden_activation: Activation::parse(act)?,
                        output_head: OutputHead::parse(head)?,
                    };
                    let mut net = Approximator::zeros(spec)?;
                    let params = parse_floats(payload("network parameters")?, net.param_len(), name)?;
                    net.set_params(ParamVector::from_vec(params))?;
                    ck.nets.push((name.to_string(), net));
                }
                ["vec", name, len] => {
                    let len = parse_usize(len, "vector length")?;
                    let values = parse_floats(payload("vector values")?, len, name)?;
                    ck.vectors.push((name.to_string(), values));
                }
                _ => return Err(Error::Parse(format!("unrecognized checkpoint line '{line}'"))),
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
