//! Binary-free text checkpoints: kind, hyperparameters, and the flat
//! parameter list. Values are written with Rust's shortest round-trip float
//! formatting so a reload reproduces the parameters bit for bit.

use std::io::{BufRead, BufReader, Read, Write};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::{ForecastModel, ModelConfig, ModelInit, ModelKind, Param};

pub fn write_checkpoint<W: Write>(model: &ForecastModel, mut w: W) -> Result<()> {
    let cfg = &model.cfg;
    writeln!(w, "fairdemand-model v1")?;
    writeln!(w, "kind={}", cfg.kind)?;
    writeln!(w, "k={}", cfg.k)?;
    writeln!(w, "m={}", cfg.m)?;
    writeln!(w, "hidden={}", cfg.hidden)?;
    writeln!(w, "dropout={}", cfg.dropout)?;
    writeln!(w, "learning_rate={}", cfg.learning_rate)?;
    writeln!(w, "arima={},{},{}", cfg.arima.0, cfg.arima.1, cfg.arima.2)?;
    writeln!(w, "seed={}", cfg.seed)?;
    writeln!(w, "linear_hidden={}", cfg.linear_hidden)?;
    writeln!(w, "n_nodes={}", model.n_nodes)?;
    writeln!(w, "arima_fallback_nodes={}", model.arima_fallback_nodes)?;
    for param in model.params() {
        let shape = param.value.shape();
        let (r, c) = (shape.first().copied().unwrap_or(1), shape.get(1).copied().unwrap_or(1));
        writeln!(w, "param {} {} {}", param.name, r, c)?;
        let line: Vec<String> = param.value.data().iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<ForecastModel> {
    let buf = BufReader::new(reader);
    let mut lines = buf.lines();
    let header = next_line(&mut lines)?;
    if header.trim() != "fairdemand-model v1" {
        return Err(Error::Checkpoint(format!("unexpected header '{header}'")));
    }
    let mut cfg = ModelConfig::new(ModelKind::Ha);
    let mut n_nodes = 0usize;
    let mut fallback = 0usize;
    let mut params: Vec<Param> = Vec::new();
    loop {
        let line = next_line(&mut lines)?;
        let line = line.trim();
        if line == "end" {
            break;
        }
        if let Some(rest) = line.strip_prefix("param ") {
            let mut it = rest.split_whitespace();
            let name = it
                .next()
                .ok_or_else(|| Error::Checkpoint("param line missing name".into()))?
                .to_string();
            let r: usize = parse_field(it.next(), "param rows")?;
            let c: usize = parse_field(it.next(), "param cols")?;
            let data_line = next_line(&mut lines)?;
            let data: Vec<f64> = data_line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Checkpoint(format!("bad value '{s}': {e}")))
                })
                .collect::<Result<_>>()?;
            if data.len() != r * c {
                return Err(Error::Checkpoint(format!(
                    "param {name}: expected {} values, found {}",
                    r * c,
                    data.len()
                )));
            }
            params.push(Param {
                name,
                value: Tensor::from_vec(vec![r, c], data)?,
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("unparseable line '{line}'")))?;
        match key {
            "kind" => cfg.kind = ModelKind::parse(value)?,
            "k" => cfg.k = parse_field(Some(value), "k")?,
            "m" => cfg.m = parse_field(Some(value), "m")?,
            "hidden" => cfg.hidden = parse_field(Some(value), "hidden")?,
            "dropout" => cfg.dropout = parse_float(value, "dropout")?,
            "learning_rate" => cfg.learning_rate = parse_float(value, "learning_rate")?,
            "arima" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::Checkpoint("arima needs p,d,q".into()));
                }
                cfg.arima = (
                    parse_field(Some(parts[0]), "p")?,
                    parse_field(Some(parts[1]), "d")?,
                    parse_field(Some(parts[2]), "q")?,
                );
            }
            "seed" => cfg.seed = parse_field(Some(value), "seed")?,
            "linear_hidden" => cfg.linear_hidden = value == "true",
            "n_nodes" => n_nodes = parse_field(Some(value), "n_nodes")?,
            "arima_fallback_nodes" => fallback = parse_field(Some(value), "arima_fallback_nodes")?,
            other => return Err(Error::Checkpoint(format!("unknown key '{other}'"))),
        }
    }
    // ARIMA parameters come straight from the checkpoint, so no series is
    // needed; T-GCN still needs its propagation matrix rebound by the caller.
    let mut model = match cfg.kind {
        ModelKind::Arima => {
            let mut m = ForecastModel::new(
                ModelConfig {
                    kind: ModelKind::Mlr,
                    ..cfg.clone()
                },
                &ModelInit {
                    n_nodes,
                    train_series: None,
                    propagation: None,
                },
            )?;
            m.cfg = cfg;
            m
        }
        ModelKind::Tgcn => {
            let ident = Tensor::eye(n_nodes);
            ForecastModel::new(
                cfg,
                &ModelInit {
                    n_nodes,
                    train_series: None,
                    propagation: Some(&ident),
                },
            )?
        }
        _ => ForecastModel::new(
            cfg,
            &ModelInit {
                n_nodes,
                train_series: None,
                propagation: None,
            },
        )?,
    };
    model.replace_params(params)?;
    model.arima_fallback_nodes = fallback;
    Ok(model)
}

fn next_line(lines: &mut impl Iterator<Item = std::io::Result<String>>) -> Result<String> {
    lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))
}

fn parse_field<T: std::str::FromStr>(value: Option<&str>, what: &str) -> Result<T> {
    value
        .ok_or_else(|| Error::Checkpoint(format!("missing {what}")))?
        .trim()
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad {what}")))
}

fn parse_float(value: &str, what: &str) -> Result<f64> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad {what}")))
}
