use crate::gazetteer::Gazetteer;

use super::Prediction;

/// Labels a sentence positive exactly when the gazetteer matches some term in it.
#[derive(Clone, Debug)]
pub struct DictionaryClassifier {
    gazetteer: Gazetteer,
}

impl DictionaryClassifier {
    pub fn new(gazetteer: Gazetteer) -> Self {
        DictionaryClassifier { gazetteer }
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> Prediction {
        let hit = self
            .gazetteer
            .has_match_folded(tokens.iter().map(|t| t.as_ref()));
        Prediction {
            probability: if hit { 1.0 } else { 0.0 },
            label: hit,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::folded_tokens;
    use crate::gazetteer::{NationalityTerm, TermKind, TermSource};

    #[test]
    fn positive_iff_a_term_matches() {
        let g = Gazetteer::new(vec![
            NationalityTerm::new(
                "Italiener",
                "IT".parse().unwrap(),
                TermKind::Demonym,
                TermSource::Seed,
            ),
            NationalityTerm::new(
                "Neu Seeländer",
                "NZ".parse().unwrap(),
                TermKind::Demonym,
                TermSource::Seed,
            ),
        ])
        .unwrap();
        let d = DictionaryClassifier::new(g);
        assert!(d.predict(&folded_tokens("Viele Italiener hier.")).label);
        assert!(d.predict(&folded_tokens("Zwei neu seeländer Gäste")).label);
        assert!(!d.predict(&folded_tokens("Nur Seeländer")).label);
        assert_eq!(d.predict(&Vec::<String>::new()).probability, 0.0);
    }
}
