//! Parameter bin boundaries, action definitions and the schema file format.
//!
//! Schema file, one declaration per line:
//!
//! ```text
//! % comment
//! map: 50,60,70,80
//! resp_rate: 15,20,30,40 labels: <=15|15-20|20-30|30-40|>40
//! @action mapincr map increase 2
//! @action resp_ratedecr resp_rate decrease 2 max_gap 6
//! ```
//!
//! When no `@action` lines are present the default action list is used.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::facts::{Bin, PredicateId, N_BINS};

const LABEL_FORBIDDEN: &[char] = &[',', '(', ')', '[', ']', '|', ':', '%', '#'];

fn label_ok(label: &str) -> bool {
    !label.is_empty()
        && !label
            .chars()
            .any(|c| c.is_whitespace() || LABEL_FORBIDDEN.contains(&c))
}

fn fmt_number(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BinSpecDoc", into = "BinSpecDoc")]
pub struct BinSpec {
    parameter: PredicateId,
    boundaries: [f64; 4],
    labels: [String; N_BINS],
}

#[derive(Serialize, Deserialize)]
struct BinSpecDoc {
    name: String,
    boundaries: [f64; 4],
    labels: [String; N_BINS],
}

impl TryFrom<BinSpecDoc> for BinSpec {
    type Error = Error;

    fn try_from(doc: BinSpecDoc) -> Result<Self> {
        BinSpec::new(&doc.name, doc.boundaries)?.with_labels(doc.labels)
    }
}

impl From<BinSpec> for BinSpecDoc {
    fn from(spec: BinSpec) -> Self {
        BinSpecDoc {
            name: spec.parameter.name().to_string(),
            boundaries: spec.boundaries,
            labels: spec.labels,
        }
    }
}

impl BinSpec {
    /// Five bins from four strictly increasing boundaries, with default labels
    /// `<=b1`, `b1-b2`, `b2-b3`, `b3-b4`, `>b4`.
    pub fn new(name: &str, boundaries: [f64; 4]) -> Result<Self> {
        let parameter = PredicateId::parameter(name).map_err(|e| Error::InvalidSchema(e.to_string()))?;
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidSchema(format!("{name}: boundaries must be finite")));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchema(format!(
                "{name}: boundaries must be strictly increasing, got {boundaries:?}"
            )));
        }
        let [b1, b2, b3, b4] = boundaries.map(fmt_number);
        let labels = [
            format!("<={b1}"),
            format!("{b1}-{b2}"),
            format!("{b2}-{b3}"),
            format!("{b3}-{b4}"),
            format!(">{b4}"),
        ];
        let spec = BinSpec {
            parameter,
            boundaries,
            labels,
        };
        spec.check_labels()?;
        Ok(spec)
    }

    pub fn with_labels(mut self, labels: [String; N_BINS]) -> Result<Self> {
        self.labels = labels;
        self.check_labels()?;
        Ok(self)
    }

    fn check_labels(&self) -> Result<()> {
        let name = self.parameter.name();
        if let Some(bad) = self.labels.iter().find(|l| !label_ok(l)) {
            return Err(Error::InvalidSchema(format!("{name}: invalid bin label `{bad}`")));
        }
        let distinct: BTreeSet<&str> = self.labels.iter().map(String::as_str).collect();
        if distinct.len() != N_BINS {
            return Err(Error::InvalidSchema(format!("{name}: bin labels must be pairwise distinct")));
        }
        Ok(())
    }

    pub fn parameter(&self) -> &PredicateId {
        &self.parameter
    }

    pub fn name(&self) -> &str {
        self.parameter.name()
    }

    pub fn boundaries(&self) -> [f64; 4] {
        self.boundaries
    }

    pub fn labels(&self) -> &[String; N_BINS] {
        &self.labels
    }

    pub fn label(&self, bin: Bin) -> &str {
        &self.labels[bin.index() as usize]
    }

    pub fn bin_for_label(&self, label: &str) -> Option<Bin> {
        self.labels
            .iter()
            .position(|l| l == label)
            .and_then(|i| Bin::new(i as u8))
    }

    /// Boundary values belong to the lower bin.
    pub fn discretize(&self, value: f64) -> Result<Bin> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue(value));
        }
        let index = self.boundaries.iter().take_while(|&&b| value > b).count();
        Ok(Bin::new(index as u8).expect("at most four boundaries are exceeded"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    pub fn suffix(self) -> &'static str {
        match self {
            Direction::Increase => "incr",
            Direction::Decrease => "decr",
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Direction::Increase => 1,
            Direction::Decrease => -1,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increase" | "incr" => Ok(Direction::Increase),
            "decrease" | "decr" => Ok(Direction::Decrease),
            other => Err(Error::InvalidSchema(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub name: PredicateId,
    pub parameter: PredicateId,
    pub direction: Direction,
    pub threshold_bins: u8,
    /// Consecutive measurements further apart than this are not paired.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gap_hours: Option<u32>,
}

impl ActionSpec {
    /// `<parameter>incr` / `<parameter>decr` with a two-bin threshold.
    pub fn new(parameter: &PredicateId, direction: Direction) -> Result<Self> {
        let name = PredicateId::event(format!("{}{}", parameter.name(), direction.suffix()))?;
        Ok(ActionSpec {
            name,
            parameter: parameter.clone(),
            direction,
            threshold_bins: 2,
            max_gap_hours: None,
        })
    }

    pub fn with_threshold(mut self, bins: u8) -> Self {
        self.threshold_bins = bins;
        self
    }

    pub fn with_max_gap(mut self, hours: Option<u32>) -> Self {
        self.max_gap_hours = hours;
        self
    }

    pub fn name(&self) -> &str {
        self.name.name()
    }

    /// Whether a transition between two bins counts as this action.
    pub fn fires(&self, from: Bin, to: Bin) -> bool {
        let delta = to.index() as i16 - from.index() as i16;
        delta * self.direction.sign() as i16 >= self.threshold_bins as i16
    }
}

/// The seven monitored parameters with their default boundaries.
///
/// Only the MAP boundaries are documented for the source cohort; the others
/// are chosen so that the usual rule labels (`<=15`, `20-30`, `>130`, `0-10`,
/// `20-50`, ...) appear, and should be treated as configuration.
pub const DEFAULT_PARAMETERS: [(&str, [f64; 4]); 7] = [
    ("map", [50.0, 60.0, 70.0, 80.0]),
    ("heart_rate", [70.0, 90.0, 110.0, 130.0]),
    ("resp_rate", [15.0, 20.0, 30.0, 40.0]),
    ("ph", [7.2, 7.3, 7.4, 7.5]),
    ("po2", [60.0, 80.0, 100.0, 200.0]),
    ("pressure_volume_sensor", [-20.0, -10.0, 0.0, 10.0]),
    ("measured_flow", [20.0, 50.0, 100.0, 150.0]),
];

/// Directions tracked for each default parameter.
pub fn default_directions(parameter: &str) -> &'static [Direction] {
    use Direction::*;
    match parameter {
        "map" => &[Increase],
        "heart_rate" => &[Decrease],
        _ => &[Increase, Decrease],
    }
}

/// Action order of the default vocabulary.
const DEFAULT_ACTION_ORDER: [&str; 7] = [
    "map",
    "resp_rate",
    "heart_rate",
    "ph",
    "po2",
    "pressure_volume_sensor",
    "measured_flow",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    parameters: Vec<BinSpec>,
    actions: Vec<ActionSpec>,
}

impl Schema {
    pub fn new(parameters: Vec<BinSpec>, actions: Vec<ActionSpec>) -> Result<Self> {
        let schema = Schema { parameters, actions };
        schema.validate()?;
        Ok(schema)
    }

    /// Parameters only; actions follow the default direction table.
    pub fn with_default_actions(parameters: Vec<BinSpec>) -> Result<Self> {
        let mut ordered: Vec<&BinSpec> = Vec::new();
        for name in DEFAULT_ACTION_ORDER {
            ordered.extend(parameters.iter().filter(|p| p.name() == name));
        }
        ordered.extend(parameters.iter().filter(|p| !DEFAULT_ACTION_ORDER.contains(&p.name())));
        let mut actions = Vec::new();
        for spec in ordered {
            for &dir in default_directions(spec.name()) {
                actions.push(ActionSpec::new(spec.parameter(), dir)?);
            }
        }
        Self::new(parameters, actions)
    }

    /// The seven-parameter, twelve-action default.
    pub fn default_clinical() -> Self {
        let params = DEFAULT_PARAMETERS
            .iter()
            .map(|(name, b)| BinSpec::new(name, *b).expect("default boundaries are valid"))
            .collect();
        Self::with_default_actions(params).expect("default schema is valid")
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for p in &self.parameters {
            if !names.insert(p.name()) {
                return Err(Error::InvalidSchema(format!("duplicate parameter `{}`", p.name())));
            }
        }
        for a in &self.actions {
            if !a.name.is_event() {
                return Err(Error::InvalidSchema(format!("action `{}` must be an event", a.name())));
            }
            if !names.insert(a.name()) {
                return Err(Error::InvalidSchema(format!("duplicate predicate `{}`", a.name())));
            }
            if self.parameter(a.parameter.name()).is_none() {
                return Err(Error::InvalidSchema(format!(
                    "action `{}` refers to unknown parameter `{}`",
                    a.name(),
                    a.parameter.name()
                )));
            }
            if a.threshold_bins == 0 {
                return Err(Error::InvalidSchema(format!("action `{}`: threshold must be >= 1", a.name())));
            }
        }
        Ok(())
    }

    pub fn parameters(&self) -> &[BinSpec] {
        &self.parameters
    }

    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    pub fn parameter(&self, name: &str) -> Option<&BinSpec> {
        self.parameters.iter().find(|p| p.name() == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.name() == name)
    }

    /// Parameters followed by action events.
    pub fn vocabulary(&self) -> Vec<PredicateId> {
        self.parameters
            .iter()
            .map(|p| p.parameter().clone())
            .chain(self.actions.iter().map(|a| a.name.clone()))
            .collect()
    }

    pub fn label(&self, parameter: &str, bin: Bin) -> Result<&str> {
        self.parameter(parameter)
            .map(|p| p.label(bin))
            .ok_or_else(|| Error::UnknownParameter(parameter.to_string()))
    }

    pub fn resolve_label(&self, parameter: &str, label: &str) -> Result<Bin> {
        let spec = self
            .parameter(parameter)
            .ok_or_else(|| Error::UnknownParameter(parameter.to_string()))?;
        spec.bin_for_label(label).ok_or_else(|| Error::UnknownBinLabel {
            parameter: parameter.to_string(),
            label: label.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut parameters = Vec::new();
        let mut actions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('%') || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::parse(line_no, 1, msg);
            if let Some(rest) = line.strip_prefix("@action") {
                let tokens: Vec<&str> = rest.split_whitespace().collect();
                let (name, param, dir) = match tokens.as_slice() {
                    [name, param, dir, ..] => (*name, *param, *dir),
                    _ => return Err(err("expected `@action NAME PARAMETER DIRECTION [THRESHOLD] [max_gap H]`".into())),
                };
                let mut spec = ActionSpec {
                    name: PredicateId::event(name).map_err(|e| err(e.to_string()))?,
                    parameter: PredicateId::parameter(param).map_err(|e| err(e.to_string()))?,
                    direction: dir.parse().map_err(|e: Error| err(e.to_string()))?,
                    threshold_bins: 2,
                    max_gap_hours: None,
                };
                let mut rest = &tokens[3..];
                if let [t, tail @ ..] = rest {
                    if *t != "max_gap" {
                        spec.threshold_bins = t.parse().map_err(|_| err(format!("bad threshold `{t}`")))?;
                        rest = tail;
                    }
                }
                match rest {
                    [] => {}
                    ["max_gap", h] => {
                        spec.max_gap_hours = Some(h.parse().map_err(|_| err(format!("bad max_gap `{h}`")))?);
                    }
                    _ => return Err(err(format!("unexpected tokens {rest:?}"))),
                }
                actions.push(spec);
                continue;
            }

            let (name, rest) = line
                .split_once(':')
                .ok_or_else(|| err("expected `name: b1,b2,b3,b4`".into()))?;
            let (bounds, labels) = match rest.split_once("labels:") {
                Some((b, l)) => (b, Some(l)),
                None => (rest, None),
            };
            let values: Vec<f64> = bounds
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(format!("bad boundary list `{}`", bounds.trim())))?;
            let boundaries: [f64; 4] = values
                .try_into()
                .map_err(|v: Vec<f64>| err(format!("expected 4 boundaries, got {}", v.len())))?;
            let mut spec = BinSpec::new(name.trim(), boundaries).map_err(|e| err(e.to_string()))?;
            if let Some(labels) = labels {
                let labels: Vec<String> = labels.split('|').map(|l| l.trim().to_string()).collect();
                let labels: [String; N_BINS] = labels
                    .try_into()
                    .map_err(|v: Vec<String>| err(format!("expected 5 labels, got {}", v.len())))?;
                spec = spec.with_labels(labels).map_err(|e| err(e.to_string()))?;
            }
            parameters.push(spec);
        }
        if parameters.is_empty() {
            return Err(Error::InvalidSchema("schema declares no parameters".into()));
        }
        if actions.is_empty() {
            Self::with_default_actions(parameters)
        } else {
            Self::new(parameters, actions)
        }
    }

    /// Canonical text form; [`Schema::parse`] reads it back unchanged.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.parameters {
            let b = p.boundaries.map(fmt_number).join(",");
            let _ = writeln!(out, "{}: {} labels: {}", p.name(), b, p.labels.join("|"));
        }
        for a in &self.actions {
            let dir = match a.direction {
                Direction::Increase => "increase",
                Direction::Decrease => "decrease",
            };
            let _ = write!(out, "@action {} {} {} {}", a.name(), a.parameter.name(), dir, a.threshold_bins);
            if let Some(h) = a.max_gap_hours {
                let _ = write!(out, " max_gap {h}");
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

impl Default for Schema {
    fn default() -> Self {
        Self::default_clinical()
    }
}
