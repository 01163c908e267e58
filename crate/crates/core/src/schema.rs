//! Parameter schema: the synth's parameter inventory, partitioned into groups.
//!
//! Schema file format (line oriented, UTF-8):
//!
//! ```text
//! presetlab-schema format-version=1
//! # comment
//! group name=Oscillators
//! param id=osc1_wave group=Oscillators kind=discrete choices=saw,square default=saw
//! param id=osc1_level group=Oscillators kind=continuous range=0,1 default=1.000000
//! ```
//!
//! Group order is the order of `group` lines; parameter order is the order of
//! `param` lines. Every algorithm in this crate is driven by the schema and
//! never by hard-coded group names.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::preset::{format_continuous, quantize, ParamValue};

pub const SCHEMA_HEADER: &str = "presetlab-schema";
pub const SCHEMA_FORMAT_VERSION: u32 = 1;

/// Number of parameter groups a schema must declare.
pub const GROUP_COUNT: usize = 13;

const REFERENCE_SCHEMA: &str = include_str!("../assets/reference_schema.txt");

#[derive(Clone, Debug, PartialEq)]
pub enum ParamKind {
    /// Valued in [0, 1].
    Continuous,
    Discrete { choices: Vec<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSpec {
    pub id: String,
    pub group: String,
    pub group_index: usize,
    pub kind: ParamKind,
    pub default: ParamValue,
}

impl ParameterSpec {
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ParamKind::Continuous)
    }

    /// Checks kind and range of `value` against this spec.
    pub fn check(&self, value: &ParamValue) -> std::result::Result<(), String> {
        match (&self.kind, value) {
            (ParamKind::Continuous, ParamValue::Continuous(v)) => {
                if v.is_finite() && (0.0..=1.0).contains(v) {
                    Ok(())
                } else {
                    Err(format!("{}: value {v} outside [0,1]", self.id))
                }
            }
            (ParamKind::Discrete { choices }, ParamValue::Discrete(i)) => {
                if (*i as usize) < choices.len() {
                    Ok(())
                } else {
                    Err(format!("{}: choice index {i} out of range", self.id))
                }
            }
            (ParamKind::Continuous, ParamValue::Discrete(_)) => {
                Err(format!("{}: expected continuous value", self.id))
            }
            (ParamKind::Discrete { .. }, ParamValue::Continuous(_)) => {
                Err(format!("{}: expected discrete choice", self.id))
            }
        }
    }

    /// Parses a serialized value token for this parameter.
    pub fn parse_value(&self, token: &str) -> std::result::Result<ParamValue, String> {
        let value = match &self.kind {
            ParamKind::Continuous => {
                let v: f64 = token
                    .parse()
                    .map_err(|_| format!("{}: {token:?} is not a number", self.id))?;
                ParamValue::Continuous(quantize(v))
            }
            ParamKind::Discrete { choices } => {
                let i = choices
                    .iter()
                    .position(|c| c == token)
                    .ok_or_else(|| format!("{}: {token:?} is not a valid choice", self.id))?;
                ParamValue::Discrete(i as u32)
            }
        };
        self.check(&value)?;
        Ok(value)
    }

    /// Serialized token for `value`; the value must already satisfy `check`.
    pub fn format_value(&self, value: &ParamValue) -> String {
        match (&self.kind, value) {
            (ParamKind::Discrete { choices }, ParamValue::Discrete(i)) => choices[*i as usize].clone(),
            (_, ParamValue::Continuous(v)) => format_continuous(*v),
            (ParamKind::Continuous, ParamValue::Discrete(i)) => i.to_string(),
        }
    }

    /// Number of distinct discrete choices, `None` for continuous parameters.
    pub fn choice_count(&self) -> Option<usize> {
        match &self.kind {
            ParamKind::Continuous => None,
            ParamKind::Discrete { choices } => Some(choices.len()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParameterSchema {
    groups: Vec<String>,
    params: Vec<ParameterSpec>,
    by_id: HashMap<String, usize>,
    group_members: Vec<Vec<usize>>,
}

impl PartialEq for ParameterSchema {
    fn eq(&self, other: &Self) -> bool {
        self.groups == other.groups && self.params == other.params
    }
}

impl ParameterSchema {
    /// Builds and validates a schema from groups and parameter specs.
    pub fn new(groups: Vec<String>, mut params: Vec<ParameterSpec>) -> Result<Self> {
        if groups.len() != GROUP_COUNT {
            return Err(Error::Schema(format!(
                "group count is {}, expected {GROUP_COUNT}",
                groups.len()
            )));
        }
        let mut group_pos = HashMap::new();
        for (i, g) in groups.iter().enumerate() {
            if group_pos.insert(g.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate group {g:?}")));
            }
        }

        let mut by_id = HashMap::new();
        let mut group_members = vec![Vec::new(); groups.len()];
        for (i, spec) in params.iter_mut().enumerate() {
            let Some(&gi) = group_pos.get(&spec.group) else {
                return Err(Error::Schema(format!(
                    "parameter {:?} names undeclared group {:?}",
                    spec.id, spec.group
                )));
            };
            spec.group_index = gi;
            if by_id.insert(spec.id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate parameter id {:?}", spec.id)));
            }
            if let ParamKind::Discrete { choices } = &spec.kind {
                if choices.is_empty() {
                    return Err(Error::Schema(format!("{}: empty choice list", spec.id)));
                }
                for (j, c) in choices.iter().enumerate() {
                    if choices[..j].contains(c) {
                        return Err(Error::Schema(format!("{}: duplicate choice {c:?}", spec.id)));
                    }
                }
            }
            if let Err(msg) = spec.check(&spec.default) {
                return Err(Error::Schema(format!("default out of range: {msg}")));
            }
            group_members[gi].push(i);
        }
        if let Some(gi) = group_members.iter().position(Vec::is_empty) {
            return Err(Error::Schema(format!("group {:?} has no parameters", groups[gi])));
        }

        Ok(Self {
            groups,
            params,
            by_id,
            group_members,
        })
    }

    /// The schema of the built-in reference synthesizer.
    pub fn reference() -> Self {
        Self::parse(REFERENCE_SCHEMA).expect("bundled reference schema is valid")
    }

    /// Text of the bundled reference schema file.
    pub fn reference_text() -> &'static str {
        REFERENCE_SCHEMA
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let header = lines
            .by_ref()
            .find(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match header {
            Some((n, l)) => check_header(n, l)?,
            None => return Err(Error::parse(1, "missing schema header")),
        }

        let mut groups = Vec::new();
        let mut params = Vec::new();
        for (n, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (record, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let fields = parse_fields(n, rest)?;
            match record {
                "group" => groups.push(required(&fields, "name", n)?.to_string()),
                "param" => params.push(parse_param(n, &fields)?),
                other => return Err(Error::parse(n, format!("unknown record {other:?}"))),
            }
        }
        Self::new(groups, params)
    }

    /// Serializes in the schema file format. `parse(to_text())` reproduces the schema.
    pub fn to_text(&self) -> String {
        let mut out = format!("{SCHEMA_HEADER} format-version={SCHEMA_FORMAT_VERSION}\n");
        for g in &self.groups {
            let _ = writeln!(out, "group name={g}");
        }
        for p in &self.params {
            let _ = write!(out, "param id={} group={} ", p.id, p.group);
            match &p.kind {
                ParamKind::Continuous => out.push_str("kind=continuous range=0,1"),
                ParamKind::Discrete { choices } => {
                    let _ = write!(out, "kind=discrete choices={}", choices.join(","));
                }
            }
            let _ = writeln!(out, " default={}", p.format_value(&p.default));
        }
        out
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn param(&self, id: &str) -> Option<&ParameterSpec> {
        self.param_index(id).map(|i| &self.params[i])
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == name)
    }

    /// Parameter indices belonging to group `group_index`, in schema order.
    pub fn group_members(&self, group_index: usize) -> &[usize] {
        &self.group_members[group_index]
    }

    pub fn defaults(&self) -> Vec<ParamValue> {
        self.params.iter().map(|p| p.default).collect()
    }
}

fn check_header(line_no: usize, line: &str) -> Result<()> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(SCHEMA_HEADER) {
        return Err(Error::parse(line_no, format!("expected {SCHEMA_HEADER:?} header")));
    }
    let version = parts
        .next()
        .and_then(|p| p.strip_prefix("format-version="))
        .ok_or_else(|| Error::parse(line_no, "missing format-version"))?;
    if version != SCHEMA_FORMAT_VERSION.to_string() {
        return Err(Error::parse(
            line_no,
            format!("unsupported schema format-version {version}"),
        ));
    }
    Ok(())
}

fn parse_fields(line_no: usize, rest: &str) -> Result<Vec<(&str, &str)>> {
    rest.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected key=value, got {tok:?}")))
        })
        .collect()
}

fn required<'a>(fields: &[(&str, &'a str)], key: &str, line_no: usize) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(line_no, format!("missing field {key:?}")))
}

fn parse_param(line_no: usize, fields: &[(&str, &str)]) -> Result<ParameterSpec> {
    let id = required(fields, "id", line_no)?.to_string();
    let group = required(fields, "group", line_no)?.to_string();
    let kind = match required(fields, "kind", line_no)? {
        "continuous" => {
            if let Some((_, range)) = fields.iter().find(|(k, _)| *k == "range") {
                let bounds: Vec<f64> = range
                    .split(',')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(line_no, format!("bad range {range:?}")))?;
                if bounds != [0.0, 1.0] {
                    return Err(Error::parse(line_no, "continuous range must be 0,1"));
                }
            }
            ParamKind::Continuous
        }
        "discrete" => ParamKind::Discrete {
            choices: required(fields, "choices", line_no)?
                .split(',')
                .map(str::to_string)
                .collect(),
        },
        other => return Err(Error::parse(line_no, format!("unknown kind {other:?}"))),
    };
    let default_token = required(fields, "default", line_no)?;
    let default = match &kind {
        ParamKind::Continuous => ParamValue::Continuous(quantize(
            default_token
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad default {default_token:?}")))?,
        )),
        ParamKind::Discrete { choices } => match choices.iter().position(|c| c == default_token) {
            Some(i) => ParamValue::Discrete(i as u32),
            None => {
                return Err(Error::Schema(format!(
                    "default out of range: {id}: {default_token:?} is not a choice"
                )))
            }
        },
    };
    Ok(ParameterSpec {
        id,
        group,
        group_index: 0,
        kind,
        default,
    })
}
