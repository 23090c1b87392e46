//! Flat `key = value` training configuration files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::training::TrainConfig;

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("line {line}: {key}: cannot parse {value:?}: {e}")))
}

/// Parses a training config. Blank lines and `#` comments are skipped; keys not
/// listed are errors; missing keys keep their defaults.
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("line {line}: duplicate key {key}")));
        }
        match key {
            "epochs" => cfg.epochs = parse_value(key, value, line)?,
            "instances_per_epoch" => cfg.instances_per_epoch = parse_value(key, value, line)?,
            "batch_size" => cfg.batch_size = parse_value(key, value, line)?,
            "n" => cfg.n = parse_value(key, value, line)?,
            "decoders" => cfg.decoders = parse_value(key, value, line)?,
            "lr" => cfg.lr = parse_value(key, value, line)?,
            "tau0" => cfg.tau0 = parse_value(key, value, line)?,
            "seed" => cfg.seed = parse_value(key, value, line)?,
            "eval_instances" => cfg.eval_instances = parse_value(key, value, line)?,
            "d_model" => cfg.d_model = parse_value(key, value, line)?,
            "heads" => cfg.heads = parse_value(key, value, line)?,
            "ff_hidden" => cfg.ff_hidden = parse_value(key, value, line)?,
            "encoder_layers" => cfg.encoder_layers = parse_value(key, value, line)?,
            other => return Err(Error::Config(format!("line {line}: unknown key {other}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_train_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_train_config(&text)
}

/// Renders a config in the format read by [`parse_train_config`].
pub fn render_train_config(cfg: &TrainConfig) -> String {
    format!(
        "epochs = {}\ninstances_per_epoch = {}\nbatch_size = {}\nn = {}\ndecoders = {}\nlr = {}\ntau0 = {}\nseed = {}\neval_instances = {}\nd_model = {}\nheads = {}\nff_hidden = {}\nencoder_layers = {}\n",
        cfg.epochs,
        cfg.instances_per_epoch,
        cfg.batch_size,
        cfg.n,
        cfg.decoders,
        cfg.lr,
        cfg.tau0,
        cfg.seed,
        cfg.eval_instances,
        cfg.d_model,
        cfg.heads,
        cfg.ff_hidden,
        cfg.encoder_layers
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let cfg = parse_train_config("# desk run\nn = 10\nepochs = 2 # short\n\nlr = 0.001\n").unwrap();
        assert_eq!(cfg.n, 10);
        assert_eq!(cfg.epochs, 2);
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(parse_train_config(&render_train_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_problem() {
        let e = parse_train_config("n = 10\nlearning_rate = 1\n").unwrap_err().to_string();
        assert!(e.contains("learning_rate") && e.contains("line 2"), "{e}");
        let e = parse_train_config("epochs = 0\n").unwrap_err().to_string();
        assert!(e.contains("epochs"), "{e}");
        assert!(parse_train_config("epochs 3\n").is_err());
        assert!(parse_train_config("epochs = x\n").is_err());
        assert!(parse_train_config("n = 5\nn = 6\n").is_err());
    }
}
