//! Text checkpoint of an [`MlpPolicy`].
//!
//! ```text
//! # sdectl policy checkpoint v1
//! layer_dims = 2,32,32,32,2
//! hidden_activation = tanh
//! output_activation = softplus
//! time_input = false
//! seed = 7
//! n_params = 2274
//! ---
//! <n_params lines, one parameter each, 17 significant digits>
//! ```
//!
//! Parameters follow the flattened order of [`MlpPolicy`].

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use super::{mlp::param_count, Activation, DifferentiablePolicy, MlpPolicy};
use crate::csvio::fmt_f64;
use crate::error::{Error, Result};

const MAGIC: &str = "# sdectl policy checkpoint v1";

pub fn write_checkpoint(path: &Path, policy: &MlpPolicy) -> Result<()> {
    std::fs::write(path, render(policy)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<MlpPolicy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

fn render(p: &MlpPolicy) -> String {
    let dims = p
        .layer_dims()
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "layer_dims = {dims}");
    let _ = writeln!(s, "hidden_activation = {}", p.hidden_activation());
    let _ = writeln!(s, "output_activation = {}", p.output_activation());
    let _ = writeln!(s, "time_input = {}", p.time_input());
    let _ = writeln!(s, "seed = {}", p.seed());
    let _ = writeln!(s, "n_params = {}", p.n_params());
    let _ = writeln!(s, "---");
    for v in p.params().iter() {
        let _ = writeln!(s, "{}", fmt_f64(*v));
    }
    s
}

fn parse(text: &str) -> Result<MlpPolicy, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err("missing checkpoint header".into());
    }
    let mut dims = None;
    let mut hidden = None;
    let mut output = None;
    let mut time_input = false;
    let mut seed = 0u64;
    let mut n_params = None;
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "---" {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("malformed header line `{line}`"))?;
        let value = value.trim();
        match key.trim() {
            "layer_dims" => {
                dims = Some(
                    value
                        .split(',')
                        .map(|d| d.trim().parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| format!("layer_dims: {e}"))?,
                )
            }
            "hidden_activation" => {
                hidden = Some(value.parse::<Activation>().map_err(|e| e.to_string())?)
            }
            "output_activation" => {
                output = Some(value.parse::<Activation>().map_err(|e| e.to_string())?)
            }
            "time_input" => time_input = value.parse().map_err(|e| format!("time_input: {e}"))?,
            "seed" => seed = value.parse().map_err(|e| format!("seed: {e}"))?,
            "n_params" => {
                n_params = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| format!("n_params: {e}"))?,
                )
            }
            other => return Err(format!("unknown header key `{other}`")),
        }
    }
    let dims = dims.ok_or("missing layer_dims")?;
    let n = n_params.ok_or("missing n_params")?;
    if param_count(&dims) != n {
        return Err(format!(
            "n_params = {n} does not match layer_dims ({})",
            param_count(&dims)
        ));
    }
    let theta = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| format!("parameter `{l}`: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if theta.len() != n {
        return Err(format!("expected {n} parameters, found {}", theta.len()));
    }
    let mut p = MlpPolicy::init(
        &dims,
        hidden.ok_or("missing hidden_activation")?,
        output.ok_or("missing output_activation")?,
        seed,
    )
    .map_err(|e| e.to_string())?
    .with_time_input(time_input)
    .map_err(|e| e.to_string())?;
    p.set_params(&DVector::from_vec(theta))
        .map_err(|e| e.to_string())?;
    Ok(p)
}
