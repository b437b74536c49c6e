use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Fails,
    Inconclusive,
}

impl Outcome {
    pub fn holds(self) -> bool {
        self == Outcome::Holds
    }
    pub fn fails(self) -> bool {
        self == Outcome::Fails
    }
}

/// A replayable counterexample: integrating from `initial` for `time`
/// reproduces the violating `distance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub initial: Vec<f64>,
    pub time: f64,
    pub distance: f64,
}

/// Empirical outcome of a property check, with the parameters it used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub property: String,
    pub outcome: Outcome,
    pub witness: Option<Witness>,
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<Verdict>,
    pub scenario: Option<String>,
    pub seed: Option<u64>,
}

impl Verdict {
    fn new(property: impl Into<String>, outcome: Outcome) -> Self {
        Verdict {
            property: property.into(),
            outcome,
            witness: None,
            params: Map::new(),
            notes: vec![],
            components: vec![],
            scenario: None,
            seed: None,
        }
    }

    pub fn holds(property: impl Into<String>) -> Self {
        Self::new(property, Outcome::Holds)
    }

    pub fn fails(property: impl Into<String>, witness: Witness) -> Self {
        let mut v = Self::new(property, Outcome::Fails);
        v.witness = Some(witness);
        v
    }

    /// A failure whose evidence is a point rather than a trajectory
    /// (e.g. a sampled state violating an algebraic identity).
    pub fn fails_at(property: impl Into<String>, point: Vec<f64>, violation: f64) -> Self {
        Self::fails(
            property,
            Witness {
                initial: point,
                time: 0.0,
                distance: violation,
            },
        )
    }

    pub fn inconclusive(property: impl Into<String>, why: impl Into<String>) -> Self {
        Self::new(property, Outcome::Inconclusive).note(why)
    }

    /// Conjunction: fails if any part fails, else inconclusive if any part is,
    /// else holds. The witness of the first failing part is lifted.
    pub fn all(property: impl Into<String>, parts: Vec<Verdict>) -> Self {
        let outcome = if parts.iter().any(|p| p.outcome.fails()) {
            Outcome::Fails
        } else if parts.iter().any(|p| p.outcome == Outcome::Inconclusive) {
            Outcome::Inconclusive
        } else {
            Outcome::Holds
        };
        let mut v = Self::new(property, outcome);
        v.witness = parts
            .iter()
            .find(|p| p.outcome.fails())
            .and_then(|p| p.witness.clone());
        v.components = parts;
        v
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    pub fn tagged(mut self, scenario: Option<&str>, seed: Option<u64>) -> Self {
        self.scenario = scenario.map(str::to_string);
        self.seed = seed;
        for c in &mut self.components {
            *c = c.clone().tagged(scenario, seed);
        }
        self
    }

    pub fn component(&self, property: &str) -> Option<&Verdict> {
        self.components.iter().find(|c| c.property == property)
    }
}
