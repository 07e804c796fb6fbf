use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]", bound = "T: Scalar")]
pub struct Circle<T> {
    pub x: T,
    pub y: T,
    pub r: T,
}

impl<T> From<[T; 3]> for Circle<T> {
    fn from([x, y, r]: [T; 3]) -> Self {
        Self { x, y, r }
    }
}

impl<T> From<Circle<T>> for [T; 3] {
    fn from(c: Circle<T>) -> Self {
        [c.x, c.y, c.r]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]", bound = "T: Scalar")]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T> From<[T; 2]> for Point<T> {
    fn from([x, y]: [T; 2]) -> Self {
        Self { x, y }
    }
}

impl<T> From<Point<T>> for [T; 2] {
    fn from(p: Point<T>) -> Self {
        [p.x, p.y]
    }
}

/// A geometric solution as emitted by a task agent.
///
/// Wire format is a single JSON object tagged by `task`:
/// `{"task":"kn","vectors":[[..]]}`, `{"task":"cp","circles":[[x,y,r],..]}`,
/// `{"task":"ht","points":[[x,y],..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase", bound = "T: Scalar")]
pub enum Construction<T> {
    Kn { vectors: Vec<Vec<i64>> },
    Cp { circles: Vec<Circle<T>> },
    Ht { points: Vec<Point<T>> },
}

impl<T: Scalar> Construction<T> {
    pub fn task(&self) -> super::TaskKind {
        match self {
            Construction::Kn { .. } => super::TaskKind::Kn,
            Construction::Cp { .. } => super::TaskKind::Cp,
            Construction::Ht { .. } => super::TaskKind::Ht,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Construction::Kn { vectors } => vectors.len(),
            Construction::Cp { circles } => circles.len(),
            Construction::Ht { points } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_json(doc: &str) -> serde_json::Result<Self> {
        serde_json::from_str(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("construction serializes")
    }
}
