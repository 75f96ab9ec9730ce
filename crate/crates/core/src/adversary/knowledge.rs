use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::Timestamp;
use crate::fuzzy::{BiometricTemplate, HelperData};
use crate::harness::card::SmartCard;
use crate::scheme::{Password, Scheme};
use crate::transcript::Transcript;

/// Names that must never enter the adversary's view.
pub const FORBIDDEN: &[&str] = &["ID", "ID_i", "PW", "PW_i", "X", "T1", "T2", "T3", "T4", "T5"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("'{0}' is a user or server secret outside the adversary model")]
    Smuggled(String),
    #[error("invalid card contents: {0}")]
    Card(String),
    #[error("transcript is for the {found} scheme, card is {expected}")]
    SchemeMismatch { expected: Scheme, found: Scheme },
}

/// Registration timestamps handed to the adversary outside the threat
/// model, for white-box controls only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimestampGrant {
    pub t1: Timestamp,
    pub t2: Timestamp,
}

/// An insider holding a stolen card: its contents, intercepted traffic,
/// the victim's biometric, and leaked session exponents.
#[derive(Clone, Debug)]
pub struct AdversaryKnowledge {
    card: SmartCard,
    transcripts: Vec<Transcript>,
    biometric: Option<BiometricTemplate>,
    helper: Option<HelperData>,
    r_u: Option<u128>,
    r_s: Option<u128>,
    dictionary: Vec<Password>,
    grant: Option<TimestampGrant>,
}

impl AdversaryKnowledge {
    /// Starts from the card read out of the victim's smart card. `P_i` is
    /// part of the card, so the helper is known from the outset.
    pub fn new(card: SmartCard) -> Self {
        let helper = Some(card.helper().clone());
        AdversaryKnowledge {
            card,
            transcripts: Vec::new(),
            biometric: None,
            helper,
            r_u: None,
            r_s: None,
            dictionary: Vec::new(),
            grant: None,
        }
    }

    /// Builds knowledge from a named field dump of the card. Any secret
    /// name (identity, password, `X`, timestamps) is refused outright.
    pub fn from_card_fields(
        scheme: Scheme,
        fields: &BTreeMap<String, String>,
    ) -> Result<Self, KnowledgeError> {
        if let Some(bad) = fields.keys().find(|k| FORBIDDEN.contains(&k.as_str())) {
            return Err(KnowledgeError::Smuggled(bad.clone()));
        }
        let card = SmartCard::from_fields(scheme, fields, true).map_err(KnowledgeError::Card)?;
        Ok(Self::new(card))
    }

    pub fn with_transcript(mut self, t: Transcript) -> Result<Self, KnowledgeError> {
        if t.scheme != self.card.scheme() {
            return Err(KnowledgeError::SchemeMismatch { expected: self.card.scheme(), found: t.scheme });
        }
        self.transcripts.push(t);
        Ok(self)
    }

    pub fn with_biometric(mut self, b: BiometricTemplate) -> Self {
        self.biometric = Some(b);
        self
    }

    pub fn with_ephemerals(mut self, r_u: Option<u128>, r_s: Option<u128>) -> Self {
        self.r_u = r_u;
        self.r_s = r_s;
        self
    }

    pub fn with_dictionary(mut self, words: Vec<Password>) -> Self {
        self.dictionary = words;
        self
    }

    /// Out-of-model: reveals the victim's registration timestamps.
    pub fn grant_timestamps(mut self, grant: TimestampGrant) -> Self {
        self.grant = Some(grant);
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.card.scheme()
    }

    pub fn card(&self) -> &SmartCard {
        &self.card
    }

    pub fn transcripts(&self) -> &[Transcript] {
        &self.transcripts
    }

    pub fn biometric(&self) -> Option<&BiometricTemplate> {
        self.biometric.as_ref()
    }

    pub fn helper(&self) -> Option<&HelperData> {
        self.helper.as_ref()
    }

    pub fn r_u(&self) -> Option<u128> {
        self.r_u
    }

    pub fn r_s(&self) -> Option<u128> {
        self.r_s
    }

    pub fn dictionary(&self) -> &[Password] {
        &self.dictionary
    }

    pub fn grant(&self) -> Option<TimestampGrant> {
        self.grant
    }

    pub fn is_in_model(&self) -> bool {
        self.grant.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::card::SmartCard;

    fn baseline_fields() -> BTreeMap<String, String> {
        let text = "TRIAUTH-CARD 1\nscheme baseline\nfields 8\n\
h 73686132353600000000000000000000\n\
e 000102030405060708090a0b0c0d0e0f\n\
p ffffffffffffffffffffffffffffc3a7\n\
g 00000000000000000000000000000004\n\
Y 00000000000000000000000000003039\n\
P_i 128:ffffffffffffffffffffffffffffffff\n\
L 000102030405060708090a0b0c0d0e0f\n\
V 000102030405060708090a0b0c0d0e0f\n";
        let card = SmartCard::parse(text, true).unwrap();
        card.fields().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn secrets_are_refused() {
        for name in FORBIDDEN {
            let mut f = baseline_fields();
            f.insert(name.to_string(), "00".repeat(16));
            assert_eq!(
                AdversaryKnowledge::from_card_fields(Scheme::Baseline, &f).unwrap_err(),
                KnowledgeError::Smuggled(name.to_string())
            );
        }
    }

    #[test]
    fn card_dump_is_accepted() {
        let k = AdversaryKnowledge::from_card_fields(Scheme::Baseline, &baseline_fields()).unwrap();
        assert!(k.is_in_model());
        assert!(k.helper().is_some());
        assert!(k.r_u().is_none());
        let mut f = baseline_fields();
        f.insert("M".into(), "00".repeat(16));
        assert!(matches!(
            AdversaryKnowledge::from_card_fields(Scheme::Baseline, &f),
            Err(KnowledgeError::Card(_))
        ));
    }

    #[test]
    fn transcript_scheme_must_match() {
        let k = AdversaryKnowledge::from_card_fields(Scheme::Baseline, &baseline_fields()).unwrap();
        let t = Transcript::new(0, Scheme::Improved, 0);
        assert!(k.with_transcript(t).is_err());
    }
}
