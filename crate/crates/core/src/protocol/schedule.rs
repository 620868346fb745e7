use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// What one round of a step is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Slot {
    Computation { evaluation: usize, shot: usize },
    Test,
}

/// Interleaving of computation and test rounds for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSchedule {
    pub slots: Vec<Slot>,
}

impl RoundSchedule {
    /// `evaluations * shots` computation slots and `t` test slots in a
    /// uniformly random order.
    pub fn new<R: Rng + ?Sized>(evaluations: usize, shots: usize, t: usize, rng: &mut R) -> Result<Self> {
        if evaluations == 0 || shots == 0 {
            return Err(input_err!("a step needs at least one evaluation and one shot"));
        }
        let mut slots: Vec<Slot> = (0..evaluations)
            .flat_map(|evaluation| (0..shots).map(move |shot| Slot::Computation { evaluation, shot }))
            .chain(std::iter::repeat_n(Slot::Test, t))
            .collect();
        slots.shuffle(rng);
        Ok(RoundSchedule { slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn num_tests(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, Slot::Test)).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn covers_every_pair_once() {
        let mut rng = stream(0, Domain::Schedule, 0);
        let s = RoundSchedule::new(4, 3, 5, &mut rng).unwrap();
        assert_eq!(s.len(), 17);
        assert_eq!(s.num_tests(), 5);
        let mut pairs: Vec<(usize, usize)> = s
            .slots
            .iter()
            .filter_map(|slot| match *slot {
                Slot::Computation { evaluation, shot } => Some((evaluation, shot)),
                Slot::Test => None,
            })
            .collect();
        pairs.sort_unstable();
        let expected: Vec<_> = (0..4).flat_map(|e| (0..3).map(move |k| (e, k))).collect();
        assert_eq!(pairs, expected);
        assert!(RoundSchedule::new(0, 3, 1, &mut rng).is_err());
    }
}
