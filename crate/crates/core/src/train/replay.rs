//! FIFO replay buffer with per-episode successor links.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;

use crate::image::Image;

#[derive(Debug, Clone)]
pub struct Transition {
    /// Instance that produced the transition.
    pub env: usize,
    pub episode: u64,
    pub obs: Arc<Image>,
    pub target: Arc<Image>,
    pub depth: Option<Arc<Image>>,
    /// Observation after the action.
    pub next_obs: Arc<Image>,
    pub prev_action: Option<usize>,
    pub prev_reward: f32,
    pub action: usize,
    pub reward: f32,
    pub done: bool,
    /// Recurrent state before this step.
    pub state_h: Vec<f32>,
    pub state_c: Vec<f32>,
}

#[derive(Debug)]
struct Slot {
    t: Transition,
    next: Option<u64>,
}

/// Ring buffer of the most recent transitions. Each transition links to its
/// successor within the same episode, so sampled sequences are contiguous in
/// time even though instances interleave in the buffer.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    slots: VecDeque<Slot>,
    /// Serial number of `slots[0]`.
    front: u64,
    last_by_env: HashMap<usize, u64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, slots: VecDeque::with_capacity(capacity), front: 0, last_by_env: HashMap::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn pos_of(&self, serial: u64) -> Option<usize> {
        (serial >= self.front && serial < self.front + self.slots.len() as u64).then(|| (serial - self.front) as usize)
    }

    pub fn get(&self, pos: usize) -> &Transition {
        &self.slots[pos].t
    }

    /// Transitions oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.slots.iter().map(|s| &s.t)
    }

    pub fn push(&mut self, t: Transition) {
        if self.slots.len() == self.capacity {
            self.slots.pop_front();
            self.front += 1;
        }
        let serial = self.front + self.slots.len() as u64;
        if let Some(prev) = self.last_by_env.get(&t.env).copied() {
            if let Some(p) = self.pos_of(prev) {
                let slot = &mut self.slots[p];
                if slot.t.episode == t.episode && !slot.t.done {
                    slot.next = Some(serial);
                }
            }
        }
        self.last_by_env.insert(t.env, serial);
        self.slots.push_back(Slot { t, next: None });
    }

    /// Position of the in-episode successor of the transition at `pos`.
    pub fn next_of(&self, pos: usize) -> Option<usize> {
        self.slots[pos].next.and_then(|s| self.pos_of(s))
    }

    /// Contiguous run of up to `max_len` positions starting at `start`,
    /// stopping at episode ends.
    pub fn run_from(&self, start: usize, max_len: usize) -> Vec<usize> {
        let mut run = vec![start];
        while run.len() < max_len {
            let last = *run.last().expect("non-empty");
            if self.slots[last].t.done {
                break;
            }
            match self.next_of(last) {
                Some(n) => run.push(n),
                None => break,
            }
        }
        run
    }

    /// A sequence of at most `len` transitions for value or Q regression,
    /// plus the position of the bootstrap frame when the episode continues.
    /// Returns `None` when the buffer is empty.
    pub fn sample_sequence(&self, len: usize, rng: &mut impl Rng) -> Option<(Vec<usize>, Option<usize>)> {
        if self.slots.is_empty() {
            return None;
        }
        // A few attempts to find a start whose run is usable.
        for _ in 0..16 {
            let start = rng.gen_range(0..self.slots.len());
            let mut run = self.run_from(start, len + 1);
            let last = *run.last().expect("non-empty");
            if run.len() == len + 1 {
                let boot = run.pop();
                return Some((run, boot));
            }
            if self.slots[last].t.done {
                return Some((run, None));
            }
            // Run cut by the newest transition: its frame only bootstraps.
            if run.len() >= 2 {
                let boot = run.pop();
                return Some((run, boot));
            }
        }
        None
    }

    /// Three consecutive in-episode positions; with probability `skew` the
    /// third carries a nonzero reward when such a triple exists.
    pub fn sample_reward_triple(&self, skew: f64, rng: &mut impl Rng) -> Option<[usize; 3]> {
        let mut rewarding = Vec::new();
        let mut plain = Vec::new();
        for p in 0..self.slots.len() {
            let r = self.run_from(p, 3);
            if r.len() == 3 {
                let triple = [r[0], r[1], r[2]];
                if self.slots[r[2]].t.reward != 0.0 {
                    rewarding.push(triple);
                } else {
                    plain.push(triple);
                }
            }
        }
        let pick = |v: &Vec<[usize; 3]>, rng: &mut dyn rand::RngCore| v[rng.gen_range(0..v.len())];
        match (rewarding.is_empty(), plain.is_empty()) {
            (true, true) => None,
            (true, false) => {
                log::debug!("no rewarding transition in replay; sampling uniformly");
                Some(pick(&plain, rng))
            }
            (false, true) => Some(pick(&rewarding, rng)),
            (false, false) => Some(if rng.gen_bool(skew) { pick(&rewarding, rng) } else { pick(&plain, rng) }),
        }
    }
}
