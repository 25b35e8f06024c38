//! Tower of Hanoi with single-disk goals: "move the gray disk in rod 2".
//!
//! Disks are identified by color; their sizes follow the order of
//! [`HanoiState::disks`] (smallest first). Episodes start with every disk
//! stacked on rod 1.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::text::{join_sentences, parse_index, sentences, unexpected};
use super::{Check, Split, SymbolicState, World};
use crate::error::{Error, Result};
use crate::plan::{ActionInstance, GoalSpec, Symbol};

pub const DONE_TEXT: &str = "done moving disks";
pub const COLORS: [&str; 6] = ["blue", "gray", "green", "red", "yellow", "purple"];

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HanoiState {
    /// Disk colors from smallest to largest.
    pub disks: Vec<String>,
    /// Per rod, disk colors from bottom to top.
    pub rods: Vec<Vec<String>>,
}

impl HanoiState {
    fn size(&self, color: &str) -> Option<usize> {
        self.disks.iter().position(|d| d == color)
    }

    fn rod_of(&self, color: &str) -> Option<usize> {
        self.rods.iter().position(|r| r.iter().any(|d| d == color))
    }

    fn rod_arg(&self, arg: &str) -> Option<usize> {
        let r: usize = arg.parse().ok()?;
        (1..=self.rods.len()).contains(&r).then(|| r - 1)
    }
}

pub fn move_action(color: &str, rod: usize) -> ActionInstance {
    ActionInstance::new(
        format!("move {color} disk to rod {rod}"),
        Symbol::new("move", [color.to_owned(), rod.to_string()]),
        false,
    )
    .expect("template is well-formed")
}

pub fn goal(color: &str, rod: usize) -> GoalSpec {
    GoalSpec::new(
        format!("move the {color} disk in rod {rod}"),
        Symbol::new("disk_in", [color.to_owned(), rod.to_string()]),
    )
    .expect("template is well-formed")
}

impl World for HanoiState {
    fn vocabulary(&self) -> Vec<ActionInstance> {
        let mut out: Vec<_> = self
            .disks
            .iter()
            .flat_map(|d| (1..=self.rods.len()).map(move |r| move_action(d, r)))
            .collect();
        out.push(super::done_action(super::EnvId::Hanoi));
        out
    }

    fn knows(&self, op: &Symbol) -> bool {
        op.name == "move"
            && op.args.len() == 2
            && self.size(&op.args[0]).is_some()
            && self.rod_arg(&op.args[1]).is_some()
    }

    fn check(&self, op: &Symbol) -> Check {
        let color = &op.args[0];
        let to = self.rod_arg(&op.args[1]).expect("known op");
        let from = self.rod_of(color).expect("every disk sits on a rod");
        if self.rods[from].last() != Some(color) {
            return Err(format!("{color} disk is not on top of rod {}", from + 1));
        }
        if from == to {
            return Err(format!("{color} disk is already in rod {}", to + 1));
        }
        if let Some(top) = self.rods[to].last() {
            if self.size(top) < self.size(color) {
                return Err(format!("{top} disk in rod {} is smaller than {color} disk", to + 1));
            }
        }
        Ok(())
    }

    fn apply(&self, op: &Symbol) -> Self {
        let mut next = self.clone();
        let color = &op.args[0];
        let to = self.rod_arg(&op.args[1]).expect("known op");
        let from = self.rod_of(color).expect("every disk sits on a rod");
        let disk = next.rods[from].pop().expect("checked");
        next.rods[to].push(disk);
        next
    }

    fn is_goal(&self, goal: &Symbol) -> bool {
        if goal.name != "disk_in" || goal.args.len() != 2 {
            return false;
        }
        match (self.rod_of(&goal.args[0]), self.rod_arg(&goal.args[1])) {
            (Some(at), Some(want)) => at == want,
            _ => false,
        }
    }

    fn render(&self) -> String {
        let mut parts = Vec::new();
        for (r, rod) in self.rods.iter().enumerate() {
            for pair in rod.windows(2).rev() {
                parts.push(format!("{} disk on top of {} disk", pair[1], pair[0]));
            }
            if let Some(bottom) = rod.first() {
                parts.push(format!("{bottom} disk in rod {}", r + 1));
            }
        }
        let rods: Vec<_> = (1..=self.rods.len()).map(|r| format!("rod {r}")).collect();
        parts.push(format!("the disks can be moved in {}", rods.join(", ")));
        parts.push(format!(
            "the disks from smallest to largest are {}",
            self.disks.join(", ")
        ));
        join_sentences(&parts)
    }

    fn parse(text: &str) -> Result<Self> {
        let mut on_top: Vec<(String, String)> = Vec::new();
        let mut bottoms: Vec<(String, usize)> = Vec::new();
        let mut n_rods = None;
        let mut disks = None;
        for s in sentences(text) {
            let words: Vec<&str> = s.split(' ').collect();
            if let Some(rest) = s.strip_prefix("the disks can be moved in ") {
                n_rods = Some(rest.split(", ").count());
            } else if let Some(rest) = s.strip_prefix("the disks from smallest to largest are ") {
                disks = Some(rest.split(", ").map(str::to_owned).collect::<Vec<_>>());
            } else if words.len() == 7 && words[1..5] == ["disk", "on", "top", "of"] && words[6] == "disk" {
                on_top.push((words[0].to_owned(), words[5].to_owned()));
            } else if words.len() == 5 && words[1..4] == ["disk", "in", "rod"] {
                bottoms.push((words[0].to_owned(), parse_index(words[4], s)?));
            } else {
                return Err(unexpected(s));
            }
        }
        let n_rods = n_rods.ok_or_else(|| Error::Parse("missing rod list".into()))?;
        let disks = disks.ok_or_else(|| Error::Parse("missing disk sizes".into()))?;
        let mut rods = vec![Vec::new(); n_rods];
        for (bottom, r) in bottoms {
            let rod = rods
                .get_mut(r.wrapping_sub(1))
                .ok_or_else(|| Error::Parse(format!("rod {r} out of range")))?;
            rod.push(bottom.clone());
            let mut below = bottom;
            while let Some((above, _)) = on_top.iter().find(|(_, b)| *b == below) {
                rod.push(above.clone());
                below = above.clone();
            }
        }
        let state = HanoiState { disks, rods };
        state.validate().map_err(Error::Parse)?;
        Ok(state)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let mut seen = vec![0usize; self.disks.len()];
        for rod in &self.rods {
            for pair in rod.windows(2) {
                let (below, above) = (self.size(&pair[0]), self.size(&pair[1]));
                if below < above {
                    return Err(format!("{} disk sits on smaller {} disk", pair[1], pair[0]));
                }
            }
            for d in rod {
                let i = self.size(d).ok_or_else(|| format!("unknown disk {d}"))?;
                seen[i] += 1;
            }
        }
        if seen.iter().any(|&n| n != 1) {
            return Err("every disk must sit on exactly one rod".into());
        }
        Ok(())
    }
}

pub(crate) fn sample<R: Rng>(rng: &mut R, split: Split) -> (SymbolicState, GoalSpec) {
    let n = if split.is_generalize() { 4 } else { 3 };
    let disks: Vec<String> = COLORS.choose_multiple(rng, n).map(|c| c.to_string()).collect();
    let mut rods = vec![Vec::new(); 3];
    rods[0] = disks.iter().rev().cloned().collect();
    let target = disks.choose(rng).expect("non-empty").clone();
    let rod = rng.gen_range(2..=3);
    (SymbolicState::Hanoi(HanoiState { disks, rods }), goal(&target, rod))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> HanoiState {
        HanoiState {
            disks: vec!["blue".into(), "gray".into(), "green".into()],
            rods: vec![vec!["green".into(), "gray".into(), "blue".into()], vec![], vec![]],
        }
    }

    #[test]
    fn renders_stack_top_down() {
        assert_eq!(
            example().render(),
            "blue disk on top of gray disk. gray disk on top of green disk. green disk in rod 1. \
             the disks can be moved in rod 1, rod 2, rod 3. \
             the disks from smallest to largest are blue, gray, green."
        );
    }

    #[test]
    fn vocabulary_has_nine_moves_and_done() {
        let s = SymbolicState::Hanoi(example());
        let vocab = s.vocabulary();
        assert_eq!(vocab.len(), 10);
        assert!(vocab.iter().any(|a| a.text == "move blue disk to rod 3"));
    }

    #[test]
    fn moving_top_disk_updates_rods() {
        let s = SymbolicState::Hanoi(example());
        let g = goal("gray", 2);
        let next = s.step(&g, &move_action("blue", 3)).unwrap();
        let SymbolicState::Hanoi(h) = &next else { unreachable!() };
        assert_eq!(h.rods[0], vec!["green".to_string(), "gray".to_string()]);
        assert_eq!(h.rods[2], vec!["blue".to_string()]);
        let err = s.step(&g, &move_action("gray", 2)).unwrap_err();
        assert!(err.to_string().contains("not on top"));
        let after = next.step(&g, &move_action("gray", 3)).unwrap_err();
        assert!(after.to_string().contains("smaller"));
    }

    #[test]
    fn goal_disk_in_rod() {
        let s = SymbolicState::Hanoi(example());
        let g = goal("gray", 2);
        assert_eq!(g.text, "move the gray disk in rod 2");
        assert!(!s.is_goal(&g));
        let s = s.step(&g, &move_action("blue", 3)).unwrap();
        let s = s.step(&g, &move_action("gray", 2)).unwrap();
        assert!(s.is_goal(&g));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(HanoiState::parse("blue disk floats.").is_err());
    }
}
