use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::TypedPhrase;
use crate::error::{Error, Result};

/// Disjoint participant sets for train / validation / test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSplit")]
pub struct SplitSpec {
    train: BTreeSet<String>,
    val: BTreeSet<String>,
    test: BTreeSet<String>,
}

#[derive(Deserialize)]
struct RawSplit {
    train: BTreeSet<String>,
    val: BTreeSet<String>,
    test: BTreeSet<String>,
}

impl TryFrom<RawSplit> for SplitSpec {
    type Error = Error;
    fn try_from(r: RawSplit) -> Result<Self> {
        SplitSpec::new(r.train, r.val, r.test)
    }
}

impl SplitSpec {
    pub fn new(
        train: BTreeSet<String>,
        val: BTreeSet<String>,
        test: BTreeSet<String>,
    ) -> Result<Self> {
        let overlap: Vec<String> = train
            .intersection(&val)
            .chain(train.intersection(&test))
            .chain(val.intersection(&test))
            .cloned()
            .collect();
        if !overlap.is_empty() {
            return Err(Error::Config(format!(
                "participants assigned to more than one split: {overlap:?}"
            )));
        }
        Ok(Self { train, val, test })
    }

    /// Assigns sorted participant ids to splits in order: the first `n_train`
    /// to train, the next `n_val` to validation and the remainder to test.
    pub fn by_counts(participants: &[String], n_train: usize, n_val: usize) -> Result<Self> {
        let sorted: BTreeSet<String> = participants.iter().cloned().collect();
        if n_train + n_val > sorted.len() {
            return Err(Error::Config(format!(
                "{} participants cannot fill {n_train} train + {n_val} validation slots",
                sorted.len()
            )));
        }
        let mut it = sorted.into_iter();
        let train = it.by_ref().take(n_train).collect();
        let val = it.by_ref().take(n_val).collect();
        let test = it.collect();
        Self::new(train, val, test)
    }

    pub fn train(&self) -> &BTreeSet<String> {
        &self.train
    }

    pub fn val(&self) -> &BTreeSet<String> {
        &self.val
    }

    pub fn test(&self) -> &BTreeSet<String> {
        &self.test
    }
}

/// Distinct participant ids in first-appearance order.
pub fn participants(data: &[TypedPhrase]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    data.iter()
        .filter(|p| seen.insert(p.meta.participant_id.clone()))
        .map(|p| p.meta.participant_id.clone())
        .collect()
}

pub type Splits = (Vec<TypedPhrase>, Vec<TypedPhrase>, Vec<TypedPhrase>);

pub fn split_by_participant(data: &[TypedPhrase], spec: &SplitSpec) -> Result<Splits> {
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let mut missing = BTreeSet::new();
    for p in data {
        let id = &p.meta.participant_id;
        if spec.train.contains(id) {
            train.push(p.clone());
        } else if spec.val.contains(id) {
            val.push(p.clone());
        } else if spec.test.contains(id) {
            test.push(p.clone());
        } else {
            missing.insert(id.clone());
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnassignedParticipants(missing.into_iter().collect()));
    }
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SessionMeta, SourceCorpus};

    fn phrase(pid: &str) -> TypedPhrase {
        TypedPhrase {
            meta: SessionMeta::new(pid, 1080, 1920),
            phrase: String::new(),
            points: vec![],
            source_corpus: SourceCorpus::OneBillionWord,
        }
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn seventy_three_five() {
        let ids: Vec<String> = (0..78).map(|i| format!("p{i:02}")).collect();
        let data: Vec<_> = ids.iter().flat_map(|id| [phrase(id), phrase(id)]).collect();
        let spec = SplitSpec::by_counts(&ids, 70, 3).unwrap();
        let (tr, va, te) = split_by_participant(&data, &spec).unwrap();
        assert_eq!(participants(&tr).len(), 70);
        assert_eq!(participants(&va).len(), 3);
        assert_eq!(participants(&te).len(), 5);
        assert_eq!(tr.len() + va.len() + te.len(), data.len());
    }

    #[test]
    fn single_participant_all_train() {
        let data = vec![phrase("a"), phrase("a")];
        let spec = SplitSpec::new(set(&["a"]), set(&[]), set(&[])).unwrap();
        let (tr, va, te) = split_by_participant(&data, &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (2, 0, 0));
    }

    #[test]
    fn overlapping_sets_rejected() {
        assert!(SplitSpec::new(set(&["a"]), set(&["a"]), set(&[])).is_err());
        let json = r#"{"train":["a"],"val":[],"test":["a"]}"#;
        assert!(serde_json::from_str::<SplitSpec>(json).is_err());
    }

    #[test]
    fn unassigned_participants_listed() {
        let data = vec![phrase("a"), phrase("b"), phrase("c")];
        let spec = SplitSpec::new(set(&["a"]), set(&[]), set(&[])).unwrap();
        match split_by_participant(&data, &spec) {
            Err(Error::UnassignedParticipants(ids)) => assert_eq!(ids, vec!["b", "c"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn split_partitions_input(assign in proptest::collection::vec(0u8..3, 1..30)) {
            let data: Vec<_> = (0..assign.len()).map(|i| phrase(&format!("p{}", i % 7))).collect();
            let mut sets = [BTreeSet::new(), BTreeSet::new(), BTreeSet::new()];
            for i in 0..7usize {
                let k = assign[i % assign.len()] as usize;
                sets[k].insert(format!("p{i}"));
            }
            let [a, b, c] = sets;
            let spec = SplitSpec::new(a, b, c).unwrap();
            let (tr, va, te) = split_by_participant(&data, &spec).unwrap();
            proptest::prop_assert_eq!(tr.len() + va.len() + te.len(), data.len());
            let ptr: BTreeSet<_> = participants(&tr).into_iter().collect();
            let pva: BTreeSet<_> = participants(&va).into_iter().collect();
            let pte: BTreeSet<_> = participants(&te).into_iter().collect();
            proptest::prop_assert!(ptr.is_disjoint(&pva) && ptr.is_disjoint(&pte) && pva.is_disjoint(&pte));
        }
    }
}
