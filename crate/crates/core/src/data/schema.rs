use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical quantity measured by a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SensorType {
    Flow,
    Temperature,
    Pressure,
}

impl SensorType {
    /// Branch order used everywhere a per-type layout is flattened:
    /// temperature nodes first, then pressure, then flow.
    pub const BRANCH_ORDER: [SensorType; 3] =
        [SensorType::Temperature, SensorType::Pressure, SensorType::Flow];

    pub fn code(self) -> &'static str {
        match self {
            SensorType::Flow => "F",
            SensorType::Temperature => "T",
            SensorType::Pressure => "P",
        }
    }

    pub fn default_unit(self) -> &'static str {
        match self {
            SensorType::Flow => "l/min",
            SensorType::Temperature => "°C",
            SensorType::Pressure => "bar",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorType::Flow => "flow",
            SensorType::Temperature => "temperature",
            SensorType::Pressure => "pressure",
        }
    }
}

impl fmt::Display for SensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SensorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "F" => Ok(SensorType::Flow),
            "T" => Ok(SensorType::Temperature),
            "P" => Ok(SensorType::Pressure),
            other => Err(Error::data(format!("unknown sensor kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorRole {
    Input,
    Target,
}

impl SensorRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SensorRole::Input => "input",
            SensorRole::Target => "target",
        }
    }
}

impl FromStr for SensorRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "input" => Ok(SensorRole::Input),
            "target" => Ok(SensorRole::Target),
            other => Err(Error::data(format!("unknown sensor role '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub id: String,
    pub kind: SensorType,
    pub role: SensorRole,
    pub unit: String,
}

impl SensorMeta {
    pub fn input(id: impl Into<String>, kind: SensorType) -> Self {
        Self {
            id: id.into(),
            kind,
            role: SensorRole::Input,
            unit: kind.default_unit().to_string(),
        }
    }

    pub fn target(id: impl Into<String>, kind: SensorType) -> Self {
        Self {
            role: SensorRole::Target,
            ..Self::input(id, kind)
        }
    }
}

/// Ordered sensor list with the type partition of the input sensors.
///
/// `inputs` and `targets` hold positions into `sensors`; `by_type` holds
/// positions into `inputs` for each sensor type, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SensorMeta>", into = "Vec<SensorMeta>")]
pub struct SensorNetworkSchema {
    sensors: Vec<SensorMeta>,
    inputs: Vec<usize>,
    targets: Vec<usize>,
    by_type: [Vec<usize>; 3],
}

fn type_slot(kind: SensorType) -> usize {
    match kind {
        SensorType::Temperature => 0,
        SensorType::Pressure => 1,
        SensorType::Flow => 2,
    }
}

impl SensorNetworkSchema {
    pub fn new(sensors: Vec<SensorMeta>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &sensors {
            if s.id.is_empty() {
                return Err(Error::data("empty sensor id"));
            }
            if s.id.contains(',') {
                return Err(Error::data(format!("sensor id '{}' contains a comma", s.id)));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::data(format!("duplicate sensor id '{}'", s.id)));
            }
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut by_type: [Vec<usize>; 3] = Default::default();
        for (pos, s) in sensors.iter().enumerate() {
            match s.role {
                SensorRole::Input => {
                    by_type[type_slot(s.kind)].push(inputs.len());
                    inputs.push(pos);
                }
                SensorRole::Target => targets.push(pos),
            }
        }
        Ok(Self {
            sensors,
            inputs,
            targets,
            by_type,
        })
    }

    pub fn sensors(&self) -> &[SensorMeta] {
        &self.sensors
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// Total number of input sensors `N`.
    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    /// Number of target sensors `D`.
    pub fn d_out(&self) -> usize {
        self.targets.len()
    }

    pub fn n_of(&self, kind: SensorType) -> usize {
        self.by_type[type_slot(kind)].len()
    }

    pub fn n_temp(&self) -> usize {
        self.n_of(SensorType::Temperature)
    }

    pub fn n_press(&self) -> usize {
        self.n_of(SensorType::Pressure)
    }

    pub fn n_flow(&self) -> usize {
        self.n_of(SensorType::Flow)
    }

    /// Row positions (into `sensors`) of the input sensors.
    pub fn input_positions(&self) -> &[usize] {
        &self.inputs
    }

    /// Row positions (into `sensors`) of the target sensors.
    pub fn target_positions(&self) -> &[usize] {
        &self.targets
    }

    /// Indices into the input list for one sensor type.
    pub fn type_indices(&self, kind: SensorType) -> &[usize] {
        &self.by_type[type_slot(kind)]
    }

    pub fn input_meta(&self, input_idx: usize) -> &SensorMeta {
        &self.sensors[self.inputs[input_idx]]
    }

    pub fn target_meta(&self, target_idx: usize) -> &SensorMeta {
        &self.sensors[self.targets[target_idx]]
    }

    pub fn position_of(&self, id: &str) -> Option<usize> {
        self.sensors.iter().position(|s| s.id == id)
    }

    /// Sensor types with at least one input sensor, in branch order.
    pub fn present_types(&self) -> Vec<SensorType> {
        SensorType::BRANCH_ORDER
            .into_iter()
            .filter(|&k| self.n_of(k) > 0)
            .collect()
    }

    /// Schema with every input sensor of `kind` removed. Targets are kept.
    pub fn without_inputs_of(&self, kind: SensorType) -> Result<Self> {
        Self::new(
            self.sensors
                .iter()
                .filter(|s| !(s.role == SensorRole::Input && s.kind == kind))
                .cloned()
                .collect(),
        )
    }

    /// Input ids in the flattened branch layout (temperature, pressure, flow).
    pub fn branch_ordered_inputs(&self) -> Vec<usize> {
        SensorType::BRANCH_ORDER
            .into_iter()
            .flat_map(|k| self.type_indices(k).iter().copied())
            .collect()
    }
}

impl TryFrom<Vec<SensorMeta>> for SensorNetworkSchema {
    type Error = Error;

    fn try_from(sensors: Vec<SensorMeta>) -> Result<Self> {
        Self::new(sensors)
    }
}

impl From<SensorNetworkSchema> for Vec<SensorMeta> {
    fn from(s: SensorNetworkSchema) -> Self {
        s.sensors
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kind_strategy() -> impl Strategy<Value = SensorType> {
        prop_oneof![
            Just(SensorType::Flow),
            Just(SensorType::Temperature),
            Just(SensorType::Pressure)
        ]
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = SensorNetworkSchema::new(vec![
            SensorMeta::input("a", SensorType::Flow),
            SensorMeta::target("a", SensorType::Flow),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn kind_codes_round_trip() {
        for k in SensorType::BRANCH_ORDER {
            assert_eq!(k.code().parse::<SensorType>().unwrap(), k);
        }
        assert!("X".parse::<SensorType>().is_err());
    }

    #[test]
    fn removing_a_type_keeps_targets() {
        let s = SensorNetworkSchema::new(vec![
            SensorMeta::input("t", SensorType::Temperature),
            SensorMeta::input("p", SensorType::Pressure),
            SensorMeta::target("y", SensorType::Temperature),
        ])
        .unwrap();
        let r = s.without_inputs_of(SensorType::Temperature).unwrap();
        assert_eq!(r.n_temp(), 0);
        assert_eq!(r.n_inputs(), 1);
        assert_eq!(r.d_out(), 1);
        assert_eq!(r.present_types(), vec![SensorType::Pressure]);
    }

    proptest! {
        #[test]
        fn type_lists_partition_inputs(
            spec in proptest::collection::vec((kind_strategy(), any::<bool>()), 0..40)
        ) {
            let sensors: Vec<_> = spec
                .iter()
                .enumerate()
                .map(|(i, &(k, is_target))| {
                    if is_target {
                        SensorMeta::target(format!("s{i}"), k)
                    } else {
                        SensorMeta::input(format!("s{i}"), k)
                    }
                })
                .collect();
            let schema = SensorNetworkSchema::new(sensors).unwrap();
            let n = schema.n_inputs();
            prop_assert_eq!(schema.n_temp() + schema.n_press() + schema.n_flow(), n);
            let mut all: Vec<usize> = SensorType::BRANCH_ORDER
                .iter()
                .flat_map(|&k| schema.type_indices(k).to_vec())
                .collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for k in SensorType::BRANCH_ORDER {
                for &i in schema.type_indices(k) {
                    prop_assert_eq!(schema.input_meta(i).kind, k);
                    prop_assert_eq!(schema.input_meta(i).role, SensorRole::Input);
                }
            }
        }
    }
}
