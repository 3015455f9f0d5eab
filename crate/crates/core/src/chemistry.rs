//! Multiset of molecules and the built-in reaction rules acting on it.
//!
//! A molecule is created once and deleted once. Reactions consume molecules
//! by id and insert products under fresh ids, so every consumption can be
//! audited from the reaction log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Globally unique molecule identifier. Never reused within a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MoleculeId(pub u64);

impl fmt::Display for MoleculeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Payload {
    Int(i64),
    Str(String),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Int(v) => write!(f, "{v}"),
            Payload::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<i64> for Payload {
    fn from(v: i64) -> Self {
        Payload::Int(v)
    }
}

impl From<&str> for Payload {
    fn from(s: &str) -> Self {
        Payload::Str(s.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Molecule {
    pub id: MoleculeId,
    pub payload: Payload,
}

/// Type pattern for one argument slot of a rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    Any,
    Int,
    Str,
}

impl Pattern {
    pub fn accepts(self, payload: &Payload) -> bool {
        matches!(
            (self, payload),
            (Pattern::Any, _) | (Pattern::Int, Payload::Int(_)) | (Pattern::Str, Payload::Str(_))
        )
    }
}

/// A rewrite rule: consumes `arity` molecules whose payloads fit the slot
/// patterns and satisfy the condition, and produces zero or more payloads.
///
/// Condition and product are plain function pointers, so rules carry no
/// hidden state.
#[derive(Clone, Copy)]
pub struct ReactionRule {
    pub name: &'static str,
    slots: &'static [Pattern],
    condition: fn(&[&Payload]) -> bool,
    produce: fn(&[&Payload]) -> Vec<Payload>,
    unconstrained: bool,
}

impl fmt::Debug for ReactionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionRule")
            .field("name", &self.name)
            .field("slots", &self.slots)
            .finish()
    }
}

impl PartialEq for ReactionRule {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

fn str_len(p: &Payload) -> usize {
    match p {
        Payload::Str(s) => s.chars().count(),
        Payload::Int(_) => 0,
    }
}

impl ReactionRule {
    /// `replace s::string by len(s) if len(s) >= 2`
    pub const fn count() -> Self {
        ReactionRule {
            name: "count",
            slots: &[Pattern::Str],
            condition: |args| str_len(args[0]) >= 2,
            produce: |args| vec![Payload::Int(str_len(args[0]) as i64)],
            unconstrained: false,
        }
    }

    /// `replace x::int, y::int by x + y`
    pub const fn aggregate() -> Self {
        ReactionRule {
            name: "aggregate",
            slots: &[Pattern::Int, Pattern::Int],
            condition: |_| true,
            produce: |args| match (args[0], args[1]) {
                (Payload::Int(x), Payload::Int(y)) => vec![Payload::Int(x + y)],
                _ => unreachable!("pattern guarantees two ints"),
            },
            unconstrained: false,
        }
    }

    /// Consumes any two molecules and produces nothing.
    pub const fn consume2() -> Self {
        ReactionRule {
            name: "consume2",
            slots: &[Pattern::Any, Pattern::Any],
            condition: |_| true,
            produce: |_| Vec::new(),
            unconstrained: true,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "count" => Some(Self::count()),
            "aggregate" => Some(Self::aggregate()),
            "consume2" => Some(Self::consume2()),
            _ => None,
        }
    }

    pub fn arity(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &'static [Pattern] {
        self.slots
    }

    /// True when every slot accepts any payload and the condition never
    /// rejects. Such rules can be sampled without filtering.
    pub fn is_unconstrained(&self) -> bool {
        self.unconstrained
    }

    /// Whether `payloads` (in slot order) satisfy the pattern and the condition.
    ///
    /// Panics if the number of payloads differs from the rule's arity.
    pub fn matches(&self, payloads: &[&Payload]) -> bool {
        assert_eq!(
            payloads.len(),
            self.arity(),
            "rule {} expects {} arguments",
            self.name,
            self.arity()
        );
        self.slots.iter().zip(payloads).all(|(slot, p)| slot.accepts(p)) && (self.condition)(payloads)
    }

    pub fn produce(&self, payloads: &[&Payload]) -> Vec<Payload> {
        (self.produce)(payloads)
    }
}

/// Checks a candidate combination of molecules against a rule. Molecules
/// must be distinct and exactly `rule.arity()` of them.
pub fn match_combination(rule: &ReactionRule, molecules: &[&Molecule]) -> bool {
    assert_eq!(molecules.len(), rule.arity(), "arity mismatch for rule {}", rule.name);
    let ids: BTreeSet<_> = molecules.iter().map(|m| m.id).collect();
    assert_eq!(ids.len(), molecules.len(), "combination repeats a molecule");
    let payloads: Vec<&Payload> = molecules.iter().map(|m| &m.payload).collect();
    rule.matches(&payloads)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChemistryError {
    #[error("molecule {0} was already consumed")]
    AlreadyConsumed(MoleculeId),
    #[error("molecule {0} is not part of the solution")]
    UnknownMolecule(MoleculeId),
    #[error("molecules do not satisfy rule {0}")]
    NoMatch(&'static str),
}

/// The solution: live molecules plus the set of retired ids, with a running
/// ledger of insertions, products and consumptions.
#[derive(Clone, Debug, Default)]
pub struct Multiset {
    live: BTreeMap<MoleculeId, Payload>,
    consumed: BTreeSet<MoleculeId>,
    next_id: u64,
    inserted: u64,
    produced: u64,
}

impl Multiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_payloads<I, P>(payloads: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<Payload>,
    {
        let mut set = Self::new();
        for p in payloads {
            set.insert(p.into());
        }
        set
    }

    fn allocate(&mut self, payload: Payload) -> Molecule {
        let id = MoleculeId(self.next_id);
        self.next_id += 1;
        self.live.insert(id, payload.clone());
        Molecule { id, payload }
    }

    /// Inserts an initial molecule.
    pub fn insert(&mut self, payload: Payload) -> Molecule {
        self.inserted += 1;
        self.allocate(payload)
    }

    pub fn get(&self, id: MoleculeId) -> Option<&Payload> {
        self.live.get(&id)
    }

    pub fn molecule(&self, id: MoleculeId) -> Option<Molecule> {
        self.live.get(&id).map(|p| Molecule { id, payload: p.clone() })
    }

    pub fn is_live(&self, id: MoleculeId) -> bool {
        self.live.contains_key(&id)
    }

    pub fn is_consumed(&self, id: MoleculeId) -> bool {
        self.consumed.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn live(&self) -> impl Iterator<Item = (MoleculeId, &Payload)> {
        self.live.iter().map(|(id, p)| (*id, p))
    }

    pub fn consumed_ids(&self) -> &BTreeSet<MoleculeId> {
        &self.consumed
    }

    pub fn inserted_count(&self) -> u64 {
        self.inserted
    }

    pub fn produced_count(&self) -> u64 {
        self.produced
    }

    pub fn consumed_count(&self) -> u64 {
        self.consumed.len() as u64
    }

    /// `inserted + produced - consumed == |live|`.
    pub fn ledger_balanced(&self) -> bool {
        self.inserted + self.produced == self.consumed_count() + self.live.len() as u64
            && self.live.keys().all(|id| !self.consumed.contains(id))
    }

    /// Live payloads in canonical (sorted) order.
    pub fn sorted_payloads(&self) -> Vec<Payload> {
        let mut out: Vec<Payload> = self.live.values().cloned().collect();
        out.sort();
        out
    }

    /// Consumes `ids` through `rule` and inserts the products under fresh ids.
    ///
    /// Nothing is modified if an error is returned.
    pub fn apply_reaction(
        &mut self,
        rule: &ReactionRule,
        ids: &[MoleculeId],
    ) -> Result<Vec<Molecule>, ChemistryError> {
        let mut payloads = Vec::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if self.consumed.contains(id) || ids[..i].contains(id) {
                return Err(ChemistryError::AlreadyConsumed(*id));
            }
            payloads.push(self.live.get(id).ok_or(ChemistryError::UnknownMolecule(*id))?);
        }
        if ids.len() != rule.arity() || !rule.matches(&payloads) {
            return Err(ChemistryError::NoMatch(rule.name));
        }
        let products = rule.produce(&payloads);
        for id in ids {
            self.live.remove(id);
            self.consumed.insert(*id);
        }
        self.produced += products.len() as u64;
        Ok(products.into_iter().map(|p| self.allocate(p)).collect())
    }
}

/// Global-observer check that no rule can fire on the live molecules.
///
/// Exhaustive over ordered combinations, with early exit on the first match.
/// Only meant for the harness; protocol nodes never see global state.
pub fn is_inert(multiset: &Multiset, rules: &[ReactionRule]) -> bool {
    rules.iter().all(|rule| !has_match(multiset, rule))
}

fn has_match(multiset: &Multiset, rule: &ReactionRule) -> bool {
    if multiset.len() < rule.arity() {
        return false;
    }
    let candidates: Vec<Vec<(MoleculeId, &Payload)>> = rule
        .slots()
        .iter()
        .map(|slot| multiset.live().filter(|(_, p)| slot.accepts(p)).collect())
        .collect();
    let mut chosen = Vec::with_capacity(rule.arity());
    search(rule, &candidates, &mut chosen)
}

fn search<'a>(
    rule: &ReactionRule,
    candidates: &[Vec<(MoleculeId, &'a Payload)>],
    chosen: &mut Vec<(MoleculeId, &'a Payload)>,
) -> bool {
    let slot = chosen.len();
    if slot == candidates.len() {
        let payloads: Vec<&Payload> = chosen.iter().map(|(_, p)| *p).collect();
        return (rule.condition)(&payloads);
    }
    for &(id, p) in &candidates[slot] {
        if chosen.iter().any(|(c, _)| *c == id) {
            continue;
        }
        chosen.push((id, p));
        let found = search(rule, candidates, chosen);
        chosen.pop();
        if found {
            return true;
        }
    }
    false
}

/// The ten strings of the count/aggregate example program.
pub const COUNT_AGGREGATE_WORDS: [&str; 10] = [
    "maecenas", "ligula", "massa", "varius", "a", "semper", "congue", "euismod", "non", "mi",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn mol(id: u64, p: impl Into<Payload>) -> Molecule {
        Molecule { id: MoleculeId(id), payload: p.into() }
    }

    #[test]
    fn count_rule_matches_long_strings_only() {
        let count = ReactionRule::count();
        assert!(match_combination(&count, &[&mol(0, "maecenas")]));
        assert!(!match_combination(&count, &[&mol(0, "a")]));
        assert!(!match_combination(&count, &[&mol(0, 5)]));
    }

    #[test]
    fn aggregate_matches_two_ints() {
        let agg = ReactionRule::aggregate();
        assert!(match_combination(&agg, &[&mol(0, 8), &mol(1, 6)]));
        assert!(!match_combination(&agg, &[&mol(0, 8), &mol(1, "six")]));
    }

    #[test]
    #[should_panic(expected = "arity mismatch")]
    fn arity_mismatch_is_a_caller_bug() {
        match_combination(&ReactionRule::aggregate(), &[&mol(0, 8)]);
    }

    #[test]
    fn reactions_produce_fresh_ids() {
        let mut set = Multiset::from_payloads(["maecenas"]);
        let out = set.apply_reaction(&ReactionRule::count(), &[MoleculeId(0)]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].payload, Payload::Int(8));
        assert_ne!(out[0].id, MoleculeId(0));

        let mut set = Multiset::from_payloads([8i64, 6]);
        let out = set
            .apply_reaction(&ReactionRule::aggregate(), &[MoleculeId(0), MoleculeId(1)])
            .unwrap();
        assert_eq!(out[0].payload, Payload::Int(14));
        assert_eq!(out[0].id, MoleculeId(2));

        let mut set = Multiset::from_payloads([1i64, 2]);
        let out = set
            .apply_reaction(&ReactionRule::consume2(), &[MoleculeId(0), MoleculeId(1)])
            .unwrap();
        assert!(out.is_empty());
        assert!(set.is_empty());
        assert!(set.ledger_balanced());
    }

    #[test]
    fn double_consumption_is_rejected() {
        let mut set = Multiset::from_payloads([1i64, 2, 3]);
        let rule = ReactionRule::consume2();
        set.apply_reaction(&rule, &[MoleculeId(0), MoleculeId(1)]).unwrap();
        let err = set.apply_reaction(&rule, &[MoleculeId(1), MoleculeId(2)]).unwrap_err();
        assert_eq!(err, ChemistryError::AlreadyConsumed(MoleculeId(1)));
        assert!(set.is_live(MoleculeId(2)));
        assert_eq!(set.len(), 1);
        assert!(set.ledger_balanced());
    }

    #[test]
    fn same_id_twice_in_one_reaction_is_rejected() {
        let mut set = Multiset::from_payloads([1i64, 2]);
        let err = set
            .apply_reaction(&ReactionRule::consume2(), &[MoleculeId(0), MoleculeId(0)])
            .unwrap_err();
        assert_eq!(err, ChemistryError::AlreadyConsumed(MoleculeId(0)));
    }

    #[test]
    fn inertia_examples() {
        let rules = [ReactionRule::count(), ReactionRule::aggregate()];
        assert!(is_inert(&Multiset::from_payloads([Payload::from("a"), Payload::Int(49)]), &rules));
        assert!(!is_inert(&Multiset::from_payloads([5i64, 2]), &[ReactionRule::aggregate()]));
        assert!(is_inert(&Multiset::from_payloads([1i64]), &[ReactionRule::consume2()]));
        assert!(!is_inert(&Multiset::from_payloads([1i64, 1]), &[ReactionRule::consume2()]));
    }

    // Independent check of the inert example: enumerate every ordered pair
    // and every single molecule by hand, without the search helper.
    #[test]
    fn inert_example_by_enumeration() {
        let live = [Payload::from("a"), Payload::Int(49)];
        let count = ReactionRule::count();
        let agg = ReactionRule::aggregate();
        let singles = live.iter().filter(|p| count.matches(&[p])).count();
        let mut pairs = 0;
        for i in 0..live.len() {
            for j in 0..live.len() {
                if i != j && agg.matches(&[&live[i], &live[j]]) {
                    pairs += 1;
                }
            }
        }
        assert_eq!((singles, pairs), (0, 0));
    }

    #[test]
    fn count_aggregate_oracle_total() {
        // sum of lengths of the qualifying words
        let total: usize = COUNT_AGGREGATE_WORDS.iter().map(|w| w.len()).filter(|&l| l >= 2).sum();
        assert_eq!(total, 49);
    }
}
