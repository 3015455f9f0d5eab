//! Simulator-level molecule discovery.
//!
//! Stands in for DHT range queries: nodes draw combinations from the set of
//! molecules not yet consumed. Reservations are invisible here, which is
//! what makes requesters collide.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;

use crate::chemistry::{MoleculeId, Multiset, Payload, ReactionRule};

const REJECTION_TRIES: usize = 16;

#[derive(Clone, Debug, Default)]
pub struct Registry {
    ids: Vec<MoleculeId>,
    index: HashMap<MoleculeId, usize>,
}

impl Registry {
    pub fn insert(&mut self, id: MoleculeId) {
        let prev = self.index.insert(id, self.ids.len());
        assert!(prev.is_none(), "molecule {id} registered twice");
        self.ids.push(id);
    }

    pub fn remove(&mut self, id: MoleculeId) -> bool {
        let Some(pos) = self.index.remove(&id) else {
            return false;
        };
        self.ids.swap_remove(pos);
        if let Some(moved) = self.ids.get(pos) {
            self.index.insert(*moved, pos);
        }
        true
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: MoleculeId) -> bool {
        self.index.contains_key(&id)
    }

    /// Draws `rule.arity()` distinct molecules that satisfy `rule`, uniformly
    /// when the rule is unconstrained. `None` when no such combination exists.
    pub fn find_combination<R: Rng + ?Sized>(
        &self,
        rule: &ReactionRule,
        solution: &Multiset,
        rng: &mut R,
    ) -> Option<Vec<MoleculeId>> {
        let arity = rule.arity();
        if self.ids.len() < arity {
            return None;
        }
        if rule.is_unconstrained() {
            let picks = index::sample(rng, self.ids.len(), arity);
            return Some(picks.iter().map(|i| self.ids[i]).collect());
        }

        let payload = |id: &MoleculeId| solution.get(*id).expect("registered molecules are live");
        let candidates: Vec<Vec<MoleculeId>> = rule
            .slots()
            .iter()
            .map(|slot| self.ids.iter().copied().filter(|id| slot.accepts(payload(id))).collect())
            .collect();
        if candidates.iter().any(Vec::is_empty) {
            return None;
        }
        let fits = |combo: &[MoleculeId]| {
            let distinct = combo.iter().enumerate().all(|(i, id)| !combo[..i].contains(id));
            let args: Vec<&Payload> = combo.iter().map(payload).collect();
            distinct && rule.matches(&args)
        };
        for _ in 0..REJECTION_TRIES {
            let combo: Vec<MoleculeId> =
                candidates.iter().map(|c| c[rng.random_range(0..c.len())]).collect();
            if fits(&combo) {
                return Some(combo);
            }
        }
        // sparse matches: enumerate them all and pick one
        let mut all = Vec::new();
        enumerate(&candidates, &mut Vec::with_capacity(arity), &mut |combo| {
            if fits(combo) {
                all.push(combo.to_vec());
            }
        });
        if all.is_empty() {
            None
        } else {
            let i = rng.random_range(0..all.len());
            Some(all.swap_remove(i))
        }
    }
}

fn enumerate(
    candidates: &[Vec<MoleculeId>],
    prefix: &mut Vec<MoleculeId>,
    visit: &mut impl FnMut(&[MoleculeId]),
) {
    if prefix.len() == candidates.len() {
        visit(prefix);
        return;
    }
    for &id in &candidates[prefix.len()] {
        prefix.push(id);
        enumerate(candidates, prefix, visit);
        prefix.pop();
    }
}
