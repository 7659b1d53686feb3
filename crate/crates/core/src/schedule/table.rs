use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where an identifier came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    /// The all-True table installed when selection starts.
    Initial,
    /// Produced by the forward pass of this global iteration.
    Iteration(u64),
}

/// Double-buffered per-sample clean flags.
///
/// Training reads `active`; fresh identifiers go to `pending` and only become
/// visible to training at a commit, which copies the whole pending buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentifierTable {
    active: Vec<bool>,
    active_origin: Vec<Origin>,
    pending: Vec<bool>,
    produced_at: Vec<Origin>,
    jump_step: usize,
    commits: u64,
}

impl IdentifierTable {
    /// An all-True table over `len` samples committing every `jump_step` iterations.
    pub fn new(len: usize, jump_step: usize) -> Result<Self> {
        if jump_step < 2 {
            return Err(Error::config(format!(
                "schedule.jump_step: must be at least 2, got {jump_step}"
            )));
        }
        Ok(Self {
            active: vec![true; len],
            active_origin: vec![Origin::Initial; len],
            pending: vec![true; len],
            produced_at: vec![Origin::Initial; len],
            jump_step,
            commits: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn jump_step(&self) -> usize {
        self.jump_step
    }

    pub fn commits(&self) -> u64 {
        self.commits
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn pending(&self) -> &[bool] {
        &self.pending
    }

    pub fn is_active(&self, sample: usize) -> bool {
        self.active[sample]
    }

    /// The iteration that produced the currently active flag of `sample`.
    pub fn active_origin(&self, sample: usize) -> Origin {
        self.active_origin[sample]
    }

    pub fn produced_at(&self, sample: usize) -> Origin {
        self.produced_at[sample]
    }

    /// Writes a fresh identifier to the pending buffer.
    pub fn write(&mut self, sample: usize, flag: bool, iteration: u64) {
        self.pending[sample] = flag;
        self.produced_at[sample] = Origin::Iteration(iteration);
    }

    /// `active ← pending`; the pending buffer is kept for further overwriting.
    pub fn commit_pending(&mut self) {
        self.active.clone_from(&self.pending);
        self.active_origin.clone_from(&self.produced_at);
        self.commits += 1;
    }

    /// Whether the `local`-th selection iteration (0-based, counted from the
    /// first iteration after warm-up) ends a commit window.
    pub fn is_commit_boundary(&self, local: u64) -> bool {
        (local + 1) % self.jump_step as u64 == 0
    }

    /// Commit window of a selection iteration; warm-up iterations have none.
    pub fn window_of(&self, local: Option<u64>) -> Option<u64> {
        local.map(|l| l / self.jump_step as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;

    #[test]
    fn rejects_short_jump_step() {
        assert!(IdentifierTable::new(4, 1).is_err());
        assert!(IdentifierTable::new(4, 2).is_ok());
    }

    #[test]
    fn pending_all_false_commits_to_active() {
        let mut t = IdentifierTable::new(3, 2).unwrap();
        for i in 0..3 {
            t.write(i, false, 7);
        }
        assert_eq!(t.active(), &[true; 3]);
        t.commit_pending();
        assert_eq!(t.active(), &[false; 3]);
        assert_eq!(t.active_origin(1), Origin::Iteration(7));
        assert_eq!(t.commits(), 1);
    }

    #[test]
    fn double_commit_is_idempotent() {
        let mut t = IdentifierTable::new(5, 3).unwrap();
        t.write(2, false, 0);
        t.commit_pending();
        let snapshot = t.clone();
        t.commit_pending();
        assert_eq!(t.active(), snapshot.active());
        assert_eq!(t.commits(), 2);
    }

    #[test]
    fn active_tracks_last_commit_under_random_ops() {
        let mut rng = RngStream::new(12);
        let n = 20;
        let mut t = IdentifierTable::new(n, 4).unwrap();
        let mut shadow_pending = vec![true; n];
        let mut shadow_active = vec![true; n];
        for step in 0..2000u64 {
            if rng.bernoulli(0.1) {
                t.commit_pending();
                shadow_active = shadow_pending.clone();
            } else {
                let i = rng.below(n);
                let flag = rng.bernoulli(0.5);
                t.write(i, flag, step);
                shadow_pending[i] = flag;
            }
            assert_eq!(t.active(), shadow_active.as_slice());
            assert_eq!(t.pending(), shadow_pending.as_slice());
        }
    }

    #[test]
    fn commit_boundaries() {
        let t = IdentifierTable::new(1, 4).unwrap();
        let b: Vec<u64> = (0..12).filter(|&l| t.is_commit_boundary(l)).collect();
        assert_eq!(b, vec![3, 7, 11]);
        assert_eq!(t.window_of(Some(5)), Some(1));
        assert_eq!(t.window_of(None), None);
    }
}
