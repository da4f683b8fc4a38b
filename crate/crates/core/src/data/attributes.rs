use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub cardinality: usize,
}

/// Sensitive attributes and their joint label space. Joint labels are
/// mixed-radix indices with the first attribute most significant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSpec {
    attributes: Vec<Attribute>,
}

impl AttributeSpec {
    pub fn new<S: Into<String>>(attributes: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let attributes: Vec<Attribute> = attributes
            .into_iter()
            .map(|(name, cardinality)| Attribute {
                name: name.into(),
                cardinality,
            })
            .collect();
        Self::try_from(attributes)
    }

    /// One binary attribute.
    pub fn binary(name: &str) -> Self {
        Self::new([(name, 2)]).expect("binary spec is valid")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn joint_cardinality(&self) -> usize {
        self.attributes.iter().map(|a| a.cardinality).product()
    }

    /// Per-attribute values of a joint label.
    pub fn decode(&self, joint: usize) -> Vec<usize> {
        let mut rest = joint;
        let mut values = vec![0; self.attributes.len()];
        for (v, a) in values.iter_mut().zip(&self.attributes).rev() {
            *v = rest % a.cardinality;
            rest /= a.cardinality;
        }
        values
    }

    pub fn encode(&self, values: &[usize]) -> Result<usize> {
        if values.len() != self.attributes.len() {
            return Err(Error::invalid(format!(
                "{} attribute values for {} attributes",
                values.len(),
                self.attributes.len()
            )));
        }
        let mut joint = 0;
        for (&v, a) in values.iter().zip(&self.attributes) {
            if v >= a.cardinality {
                return Err(Error::invalid(format!(
                    "value {v} out of range for attribute '{}' ({} values)",
                    a.name, a.cardinality
                )));
            }
            joint = joint * a.cardinality + v;
        }
        Ok(joint)
    }
}

impl TryFrom<Vec<Attribute>> for AttributeSpec {
    type Error = Error;

    fn try_from(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::invalid(
                "attribute spec needs at least one attribute",
            ));
        }
        if let Some(a) = attributes.iter().find(|a| a.cardinality < 2) {
            return Err(Error::invalid(format!(
                "attribute '{}' has cardinality {}, needs at least 2",
                a.name, a.cardinality
            )));
        }
        Ok(AttributeSpec { attributes })
    }
}

impl From<AttributeSpec> for Vec<Attribute> {
    fn from(spec: AttributeSpec) -> Self {
        spec.attributes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_cardinality_is_product() {
        let spec = AttributeSpec::new([("gender", 2), ("black_hair", 2), ("age", 3)]).unwrap();
        assert_eq!(spec.joint_cardinality(), 12);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(AttributeSpec::new(Vec::<(&str, usize)>::new()).is_err());
        assert!(AttributeSpec::new([("gender", 1)]).is_err());
    }

    #[test]
    fn encode_decode_roundtrip() {
        let spec = AttributeSpec::new([("a", 2), ("b", 3)]).unwrap();
        for j in 0..spec.joint_cardinality() {
            assert_eq!(spec.encode(&spec.decode(j)).unwrap(), j);
        }
        assert_eq!(spec.decode(4), vec![1, 1]);
        assert!(spec.encode(&[0, 3]).is_err());
    }
}
