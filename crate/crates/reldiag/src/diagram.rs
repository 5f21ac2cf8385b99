//! Diagram intermediate representation (placeholder).

/// A diagram validity violation (one of the six validity conditions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub condition: u8,
    pub element: String,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "condition {} at {}: {}", self.condition, self.element, self.detail)
    }
}
