//! Versioned text format for trained composite models.
//!
//! Numbers are written with 17 significant decimal digits, which is
//! enough for every f64 to round-trip bit-exactly. The layout is
//! line-oriented:
//!
//! ```text
//! replearn-model v1
//! config_hash <hex>
//! seed <u64>
//! task_ids <id> <id> ...
//! trunk <in>x<out>:<activation> ...
//! head <in>x<out>:<activation> ...
//! trunk_params <count>
//! <one value per line>
//! head_params <index> <count>
//! <one value per line>
//! end
//! ```

use std::path::Path;

use replearn::nnet::{Activation, LayerSpec, MlpSpec, ParamVector};
use replearn::{CompositeParams, CompositeSpec};

use crate::error::{CliError, Result};

pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub config_hash: String,
    pub seed: u64,
    pub task_ids: Vec<usize>,
    pub spec: CompositeSpec,
    pub params: CompositeParams,
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Sigmoid => "sigmoid",
        Activation::Tanh => "tanh",
        Activation::Identity => "identity",
    }
}

fn parse_activation(s: &str, line: usize) -> Result<Activation> {
    match s {
        "sigmoid" => Ok(Activation::Sigmoid),
        "tanh" => Ok(Activation::Tanh),
        "identity" => Ok(Activation::Identity),
        other => Err(parse_err(line, format!("unknown activation {other:?}"))),
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> CliError {
    CliError::Validation(format!("model parse error at line {line}: {}", message.into()))
}

fn spec_line(spec: &MlpSpec) -> String {
    spec.layers()
        .iter()
        .map(|l| format!("{}x{}:{}", l.inputs, l.outputs, activation_name(l.activation)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_spec_line(fields: &[&str], line: usize) -> Result<MlpSpec> {
    let mut layers = Vec::with_capacity(fields.len());
    for f in fields {
        let (dims, act) = f
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("layer {f:?} is not INxOUT:activation")))?;
        let (i, o) = dims
            .split_once('x')
            .ok_or_else(|| parse_err(line, format!("layer dims {dims:?} are not INxOUT")))?;
        let inputs = i.parse::<usize>().map_err(|e| parse_err(line, format!("bad layer input {i:?}: {e}")))?;
        let outputs = o.parse::<usize>().map_err(|e| parse_err(line, format!("bad layer output {o:?}: {e}")))?;
        layers.push(
            LayerSpec::new(inputs, outputs, parse_activation(act, line)?)
                .map_err(|e| parse_err(line, e.to_string()))?,
        );
    }
    MlpSpec::new(layers).map_err(|e| parse_err(line, e.to_string()))
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("replearn-model v{MODEL_VERSION}\n"));
        out.push_str(&format!("config_hash {}\n", self.config_hash));
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str("task_ids");
        for t in &self.task_ids {
            out.push_str(&format!(" {t}"));
        }
        out.push('\n');
        out.push_str(&format!("trunk {}\n", spec_line(self.spec.trunk())));
        out.push_str(&format!("head {}\n", spec_line(self.spec.head())));
        out.push_str(&format!("trunk_params {}\n", self.params.trunk.len()));
        for v in self.params.trunk.as_slice() {
            out.push_str(&format!("{v:.16e}\n"));
        }
        for (i, h) in self.params.heads.iter().enumerate() {
            out.push_str(&format!("head_params {i} {}\n", h.len()));
            for v in h.as_slice() {
                out.push_str(&format!("{v:.16e}\n"));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<ModelFile> {
        struct Reader<'a> {
            lines: Vec<&'a str>,
            pos: usize,
        }
        impl<'a> Reader<'a> {
            fn next(&mut self, expect: &str) -> Result<(usize, &'a str)> {
                let line = self.lines.get(self.pos).ok_or_else(|| {
                    parse_err(self.pos + 1, format!("unexpected end of file, expected {expect}"))
                })?;
                self.pos += 1;
                Ok((self.pos, line))
            }
        }
        fn read_params(reader: &mut Reader, label: &str, expected: usize) -> Result<ParamVector> {
            let mut values = Vec::with_capacity(expected);
            for _ in 0..expected {
                let (vn, vline) = reader.next(&format!("{label} value"))?;
                let v = vline
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(vn, format!("bad number {vline:?}: {e}")))?;
                values.push(v);
            }
            ParamVector::new(values).map_err(|e| CliError::Validation(format!("{label}: {e}")))
        }
        let mut reader = Reader { lines: text.lines().collect(), pos: 0 };

        let (n, header) = reader.next("version header")?;
        match header.strip_prefix("replearn-model v") {
            Some(v) if v == MODEL_VERSION.to_string() => {}
            Some(v) => {
                return Err(CliError::Validation(format!(
                    "unsupported model version {v} (this reader supports v{MODEL_VERSION})"
                )))
            }
            None => return Err(parse_err(n, "missing `replearn-model v<N>` header")),
        }

        let (n, line) = reader.next("config_hash")?;
        let config_hash = line
            .strip_prefix("config_hash ")
            .ok_or_else(|| parse_err(n, "expected `config_hash <hex>`"))?
            .to_string();

        let (n, line) = reader.next("seed")?;
        let seed = line
            .strip_prefix("seed ")
            .ok_or_else(|| parse_err(n, "expected `seed <u64>`"))?
            .parse::<u64>()
            .map_err(|e| parse_err(n, format!("bad seed: {e}")))?;

        let (n, line) = reader.next("task_ids")?;
        let rest = line
            .strip_prefix("task_ids")
            .ok_or_else(|| parse_err(n, "expected `task_ids ...`"))?;
        let task_ids = rest
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(n, format!("bad task id {t:?}: {e}"))))
            .collect::<Result<Vec<usize>>>()?;
        if task_ids.is_empty() {
            return Err(parse_err(n, "model needs at least one task id"));
        }

        let (n, line) = reader.next("trunk")?;
        let trunk_fields: Vec<&str> = line
            .strip_prefix("trunk ")
            .ok_or_else(|| parse_err(n, "expected `trunk <layers>`"))?
            .split_whitespace()
            .collect();
        let trunk = parse_spec_line(&trunk_fields, n)?;

        let (n, line) = reader.next("head")?;
        let head_fields: Vec<&str> = line
            .strip_prefix("head ")
            .ok_or_else(|| parse_err(n, "expected `head <layers>`"))?
            .split_whitespace()
            .collect();
        let head = parse_spec_line(&head_fields, n)?;

        let spec = CompositeSpec::new(trunk, head, task_ids.len())
            .map_err(|e| CliError::Validation(format!("model spec invalid: {e}")))?;

        let (n, line) = reader.next("trunk_params")?;
        let count = line
            .strip_prefix("trunk_params ")
            .ok_or_else(|| parse_err(n, "expected `trunk_params <count>`"))?
            .parse::<usize>()
            .map_err(|e| parse_err(n, format!("bad count: {e}")))?;
        if count != spec.trunk().param_count() {
            return Err(parse_err(
                n,
                format!("trunk has {count} params, spec needs {}", spec.trunk().param_count()),
            ));
        }
        let trunk_params = read_params(&mut reader, "trunk_params", count)?;

        let mut heads = Vec::with_capacity(task_ids.len());
        for i in 0..task_ids.len() {
            let (n, line) = reader.next("head_params")?;
            let rest = line
                .strip_prefix("head_params ")
                .ok_or_else(|| parse_err(n, format!("expected `head_params {i} <count>`")))?;
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(parse_err(n, "expected `head_params <index> <count>`"));
            }
            let idx = fields[0].parse::<usize>().map_err(|e| parse_err(n, format!("bad index: {e}")))?;
            if idx != i {
                return Err(parse_err(n, format!("head index {idx}, expected {i}")));
            }
            let count = fields[1].parse::<usize>().map_err(|e| parse_err(n, format!("bad count: {e}")))?;
            if count != spec.head().param_count() {
                return Err(parse_err(
                    n,
                    format!("head has {count} params, spec needs {}", spec.head().param_count()),
                ));
            }
            heads.push(read_params(&mut reader, &format!("head_params {i}"), count)?);
        }

        let (n, line) = reader.next("end")?;
        if line != "end" {
            return Err(parse_err(n, format!("expected `end`, found {line:?}")));
        }

        Ok(ModelFile {
            config_hash,
            seed,
            task_ids,
            spec,
            params: CompositeParams::new(trunk_params, heads),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        ModelFile::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> ModelFile {
        let trunk = MlpSpec::from_widths(&[4, 3, 2], Activation::Sigmoid).unwrap();
        let head = MlpSpec::from_widths(&[2, 2, 1], Activation::Tanh).unwrap();
        let spec = CompositeSpec::new(trunk, head, 2).unwrap();
        // Adversarial values: tiny, huge, repeating fractions.
        let mut flat: Vec<f64> = Vec::new();
        for i in 0..spec.param_count() {
            flat.push(match i % 5 {
                0 => 1.0 / 3.0,
                1 => -1.234567890123456e-300,
                2 => 9.87654321e200,
                3 => -0.1,
                _ => (i as f64).sin(),
            });
        }
        ModelFile {
            config_hash: "deadbeefdeadbeef".to_string(),
            seed: 99,
            task_ids: vec![3, 11],
            spec: spec.clone(),
            params: spec.params_from_flat(&flat),
        }
    }

    #[test]
    fn text_roundtrip_is_bit_exact() {
        let m = sample_model();
        let text = m.to_text();
        let back = ModelFile::parse(&text).unwrap();
        assert_eq!(m, back);
        // Serialization itself is stable.
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let m = sample_model();
        let text = m.to_text();
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        let err = ModelFile::parse(&truncated).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn other_versions_are_rejected() {
        let m = sample_model();
        let text = m.to_text().replace("replearn-model v1", "replearn-model v0");
        let err = ModelFile::parse(&text).unwrap_err();
        assert!(err.to_string().contains("unsupported model version 0"));
        let text2 = m.to_text().replace("replearn-model v1", "replearn-model v2");
        assert!(ModelFile::parse(&text2).unwrap_err().to_string().contains("unsupported"));
    }

    #[test]
    fn corrupted_numbers_report_line() {
        let m = sample_model();
        let mut lines: Vec<String> = m.to_text().lines().map(String::from).collect();
        lines[8] = "not-a-number".to_string();
        let err = ModelFile::parse(&lines.join("\n")).unwrap_err();
        assert!(err.to_string().contains("line 9"), "{err}");
    }
}
