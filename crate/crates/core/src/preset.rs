//! Presets and preset diffs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::ParameterSchema;

/// Decimal places kept for continuous values.
pub const CONTINUOUS_DECIMALS: usize = 6;

/// Rounds to 6 decimal places, ties to even. Negative zero becomes zero.
pub fn quantize(v: f64) -> f64 {
    (v * 1e6).round_ties_even() / 1e6 + 0.0
}

pub fn format_continuous(v: f64) -> String {
    format!("{:.*}", CONTINUOUS_DECIMALS, quantize(v))
}

/// A single parameter value. Discrete values are stored as an index into
/// the parameter's choice list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamValue {
    Continuous(f64),
    Discrete(u32),
}

impl ParamValue {
    pub fn as_continuous(&self) -> Option<f64> {
        match self {
            ParamValue::Continuous(v) => Some(*v),
            ParamValue::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<u32> {
        match self {
            ParamValue::Discrete(i) => Some(*i),
            ParamValue::Continuous(_) => None,
        }
    }

    /// Bitwise equality (continuous values compared by bit pattern).
    pub fn same_as(&self, other: &ParamValue) -> bool {
        match (self, other) {
            (ParamValue::Continuous(a), ParamValue::Continuous(b)) => a.to_bits() == b.to_bits(),
            (ParamValue::Discrete(a), ParamValue::Discrete(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Default,
    Mixed,
    Modified,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Default => "default",
            Provenance::Mixed => "mixed",
            Provenance::Modified => "modified",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "default" => Ok(Provenance::Default),
            "mixed" => Ok(Provenance::Mixed),
            "modified" => Ok(Provenance::Modified),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// A complete assignment of values to every schema parameter.
///
/// Values are stored in schema order, so a preset is only meaningful next to
/// the schema it was validated against.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub id: String,
    pub name: String,
    pub provenance: Provenance,
    values: Vec<ParamValue>,
}

impl Preset {
    /// Validates `values` (schema order) against `schema`. Continuous values
    /// are quantized to 6 decimals.
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        provenance: Provenance,
        values: Vec<ParamValue>,
        schema: &ParameterSchema,
    ) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|v| match v {
                ParamValue::Continuous(x) => ParamValue::Continuous(quantize(x)),
                d => d,
            })
            .collect();
        let preset = Self {
            id: id.into(),
            name: name.into(),
            provenance,
            values,
        };
        preset.validate(schema)?;
        Ok(preset)
    }

    /// A preset holding every parameter at its default.
    pub fn with_defaults(id: impl Into<String>, name: impl Into<String>, schema: &ParameterSchema) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            provenance: Provenance::Default,
            values: schema.defaults(),
        }
    }

    /// Assembles a preset from already-validated parts.
    pub(crate) fn from_parts(id: String, name: String, provenance: Provenance, values: Vec<ParamValue>) -> Self {
        Self {
            id,
            name,
            provenance,
            values,
        }
    }

    pub fn validate(&self, schema: &ParameterSchema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::InvalidPreset {
                preset: self.id.clone(),
                message: format!("has {} values, schema has {} parameters", self.values.len(), schema.len()),
            });
        }
        for (spec, value) in schema.params().iter().zip(&self.values) {
            spec.check(value).map_err(|message| Error::InvalidPreset {
                preset: self.id.clone(),
                message,
            })?;
        }
        Ok(())
    }

    pub fn values(&self) -> &[ParamValue] {
        &self.values
    }

    pub fn value(&self, index: usize) -> ParamValue {
        self.values[index]
    }

    pub fn get(&self, schema: &ParameterSchema, id: &str) -> Option<ParamValue> {
        schema.param_index(id).map(|i| self.values[i])
    }

    /// Sets a single parameter, validating the value.
    pub fn set(&mut self, schema: &ParameterSchema, id: &str, value: ParamValue) -> Result<()> {
        let i = schema
            .param_index(id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {id:?}")))?;
        let value = match value {
            ParamValue::Continuous(x) => ParamValue::Continuous(quantize(x)),
            d => d,
        };
        schema.params()[i].check(&value).map_err(|message| Error::InvalidPreset {
            preset: self.id.clone(),
            message,
        })?;
        self.values[i] = value;
        Ok(())
    }

    /// Copies every parameter of group `group_index` from `source`.
    pub fn copy_group_from(&mut self, source: &Preset, schema: &ParameterSchema, group_index: usize) {
        for &i in schema.group_members(group_index) {
            self.values[i] = source.values[i];
        }
    }

    /// True when both presets carry bitwise-identical values.
    pub fn same_values(&self, other: &Preset) -> bool {
        self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.same_as(b))
    }

    /// Values keyed by parameter id, as serialized tokens, in schema order.
    pub fn tokens(&self, schema: &ParameterSchema) -> Vec<(String, String)> {
        schema
            .params()
            .iter()
            .zip(&self.values)
            .map(|(spec, v)| (spec.id.clone(), spec.format_value(v)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamChange {
    pub index: usize,
    pub id: String,
    pub old: ParamValue,
    pub new: ParamValue,
}

/// Parameters that differ between two presets, and the groups they belong to.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PresetDiff {
    changed_params: Vec<ParamChange>,
    changed_groups: Vec<String>,
}

impl PresetDiff {
    pub fn changed_params(&self) -> &[ParamChange] {
        &self.changed_params
    }

    /// Changed group names in schema order.
    pub fn changed_groups(&self) -> &[String] {
        &self.changed_groups
    }

    pub fn is_empty(&self) -> bool {
        self.changed_params.is_empty()
    }
}

/// Lists the parameters whose values differ between `a` (old) and `b` (new).
pub fn diff_presets(a: &Preset, b: &Preset, schema: &ParameterSchema) -> Result<PresetDiff> {
    if a.values.len() != schema.len() || b.values.len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "presets {:?} ({} values) and {:?} ({} values) vs schema of {}",
            a.id,
            a.values.len(),
            b.id,
            b.values.len(),
            schema.len()
        )));
    }
    let mut group_changed = vec![false; schema.groups().len()];
    let changed_params: Vec<ParamChange> = schema
        .params()
        .iter()
        .enumerate()
        .filter(|(i, _)| !a.values[*i].same_as(&b.values[*i]))
        .map(|(i, spec)| {
            group_changed[spec.group_index] = true;
            ParamChange {
                index: i,
                id: spec.id.clone(),
                old: a.values[i],
                new: b.values[i],
            }
        })
        .collect();
    let changed_groups = schema
        .groups()
        .iter()
        .zip(group_changed)
        .filter(|(_, changed)| *changed)
        .map(|(g, _)| g.clone())
        .collect();
    Ok(PresetDiff {
        changed_params,
        changed_groups,
    })
}
