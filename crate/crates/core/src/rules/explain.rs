use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::kb::{Assertion, Binding, Fact, Ontology};

/// Derivation tree for an assertion. Leaves are non-derived assertions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Explanation {
    Leaf { assertion: Assertion },
    Derived { assertion: Assertion, rule: String, binding: Binding, support: Vec<Explanation> },
}

impl Explanation {
    pub fn assertion(&self) -> &Assertion {
        match self {
            Explanation::Leaf { assertion } | Explanation::Derived { assertion, .. } => assertion,
        }
    }

    /// Distinct leaf assertions in depth-first order.
    pub fn leaves(&self) -> Vec<&Assertion> {
        let mut out: Vec<&Assertion> = Vec::new();
        self.walk_leaves(&mut out);
        out
    }

    fn walk_leaves<'a>(&'a self, out: &mut Vec<&'a Assertion>) {
        match self {
            Explanation::Leaf { assertion } => {
                if !out.contains(&assertion) {
                    out.push(assertion)
                }
            }
            Explanation::Derived { support, .. } => support.iter().for_each(|s| s.walk_leaves(out)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Explanation::Leaf { .. } => 0,
            Explanation::Derived { support, .. } => 1 + support.iter().map(Explanation::depth).max().unwrap_or(0),
        }
    }
}

pub fn explain(kb: &Ontology, fact: &Fact) -> Result<Explanation, EngineError> {
    let provenance = kb.provenance(fact).ok_or_else(|| EngineError::UnknownAssertion(fact.to_string()))?;
    let assertion = Assertion::new(fact.clone(), provenance.clone());
    let Some(derivation) = kb.derivation_of(fact) else {
        return Ok(Explanation::Leaf { assertion });
    };
    // support facts were present before this derivation fired, so recursion
    // follows strictly earlier derivations and terminates
    let support = derivation.support.iter().map(|s| explain(kb, &s.fact)).collect::<Result<Vec<_>, _>>()?;
    Ok(Explanation::Derived {
        assertion,
        rule: derivation.rule.clone(),
        binding: derivation.binding.clone(),
        support,
    })
}

/// Explains an individual through its class memberships, preferring a
/// derived membership when there is one.
pub fn explain_individual(kb: &Ontology, id: &str) -> Result<Explanation, EngineError> {
    let classes = kb.direct_classes(id).ok_or_else(|| EngineError::UnknownAssertion(id.to_string()))?;
    let fact = classes
        .iter()
        .find(|(_, p)| p.is_derived())
        .or_else(|| classes.iter().next())
        .map(|(c, _)| Fact::instance(id, c))
        .ok_or_else(|| EngineError::UnknownAssertion(id.to_string()))?;
    explain(kb, &fact)
}
