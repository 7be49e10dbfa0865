//! Named parameter collections shared by the models.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::EngineError;

/// Ordered map of named tensors. Iteration order is the lexicographic name
/// order, which keeps every pass over the parameters deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        assert!(
            self.tensors.insert(name.to_string(), t).is_none(),
            "parameter `{name}` inserted twice"
        );
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, EngineError> {
        self.tensors
            .get(name)
            .ok_or_else(|| EngineError::MissingParam { name: name.to_string() })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, EngineError> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| EngineError::MissingParam { name: name.to_string() })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Bitwise equality over all tensors; used to assert that frozen
    /// parameters really did not move.
    pub fn bits_eq(&self, other: &ParameterSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|((an, at), (bn, bt))| an == bn && at.bits_eq(bt))
    }
}

impl FromIterator<(String, Tensor)> for ParameterSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParameterSet { tensors: iter.into_iter().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_parameter_is_an_error() {
        let p = ParameterSet::new();
        assert!(matches!(p.get("w"), Err(EngineError::MissingParam { .. })));
    }

    #[test]
    fn bits_eq_detects_single_bit_change() {
        let mut a = ParameterSet::new();
        a.insert("w", Tensor::scalar(1.0));
        let mut b = a.clone();
        assert!(a.bits_eq(&b));
        b.get_mut("w").unwrap().values_mut()[0] = 1.0 + f64::EPSILON;
        assert!(!a.bits_eq(&b));
    }
}
