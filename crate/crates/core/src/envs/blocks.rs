//! Putting colored blocks into colored bowls: "put the yellow blocks in gray bowls".
//!
//! A placement is a single action and cannot be undone, so a block dropped
//! into the wrong bowl makes the goal unreachable.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::text::{join_sentences, parse_index, sentences, unexpected};
use super::{Check, Split, SymbolicState, World};
use crate::error::{Error, Result};
use crate::plan::{ActionInstance, GoalSpec, Symbol};

pub const DONE_TEXT: &str = "done placing blocks";
pub const COLORS: [&str; 6] = ["blue", "gray", "green", "orange", "red", "yellow"];
/// Colors that only appear in the test-generalize split.
pub const HELD_OUT_COLORS: [&str; 2] = ["pink", "purple"];

/// A block or bowl, named `<color> <kind> <index>` with indices counted per color.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Item {
    pub color: String,
    pub index: usize,
}

impl Item {
    fn name(&self, kind: &str) -> String {
        format!("{} {kind} {}", self.color, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlocksState {
    pub bowls: Vec<Item>,
    pub blocks: Vec<Item>,
    /// For each block, the index into `bowls` of the bowl holding it.
    pub placement: Vec<Option<usize>>,
}

pub fn put_action(block: &Item, bowl: &Item) -> ActionInstance {
    ActionInstance::new(
        format!("put {} in {}", block.name("block"), bowl.name("bowl")),
        Symbol::new(
            "put",
            [
                block.color.clone(),
                block.index.to_string(),
                bowl.color.clone(),
                bowl.index.to_string(),
            ],
        ),
        false,
    )
    .expect("template is well-formed")
}

pub fn goal(block_color: &str, bowl_color: &str) -> GoalSpec {
    GoalSpec::new(
        format!("put the {block_color} blocks in {bowl_color} bowls"),
        Symbol::new("blocks_in", [block_color, bowl_color]),
    )
    .expect("template is well-formed")
}

fn find(items: &[Item], color: &str, index: &str) -> Option<usize> {
    let index: usize = index.parse().ok()?;
    items.iter().position(|i| i.color == color && i.index == index)
}

impl BlocksState {
    fn resolve(&self, op: &Symbol) -> Option<(usize, usize)> {
        if op.name != "put" || op.args.len() != 4 {
            return None;
        }
        Some((
            find(&self.blocks, &op.args[0], &op.args[1])?,
            find(&self.bowls, &op.args[2], &op.args[3])?,
        ))
    }
}

impl World for BlocksState {
    fn vocabulary(&self) -> Vec<ActionInstance> {
        let mut out: Vec<_> = self
            .blocks
            .iter()
            .flat_map(|b| self.bowls.iter().map(move |w| put_action(b, w)))
            .collect();
        out.push(super::done_action(super::EnvId::Blocks));
        out
    }

    fn knows(&self, op: &Symbol) -> bool {
        self.resolve(op).is_some()
    }

    fn check(&self, op: &Symbol) -> Check {
        let (block, _) = self.resolve(op).expect("known op");
        match self.placement[block] {
            Some(bowl) => Err(format!(
                "{} is already in {}",
                self.blocks[block].name("block"),
                self.bowls[bowl].name("bowl")
            )),
            None => Ok(()),
        }
    }

    fn apply(&self, op: &Symbol) -> Self {
        let (block, bowl) = self.resolve(op).expect("known op");
        let mut next = self.clone();
        next.placement[block] = Some(bowl);
        next
    }

    fn is_goal(&self, goal: &Symbol) -> bool {
        if goal.name != "blocks_in" || goal.args.len() != 2 {
            return false;
        }
        let mut targets = self
            .blocks
            .iter()
            .zip(&self.placement)
            .filter(|(b, _)| b.color == goal.args[0])
            .peekable();
        targets.peek().is_some() && targets.all(|(_, p)| p.is_some_and(|w| self.bowls[w].color == goal.args[1]))
    }

    fn render(&self) -> String {
        let names: Vec<String> = self
            .bowls
            .iter()
            .map(|w| w.name("bowl"))
            .chain(self.blocks.iter().map(|b| b.name("block")))
            .collect();
        let mut parts = vec![format!("there is a {}", names.join(", "))];
        for (b, p) in self.blocks.iter().zip(&self.placement) {
            if let Some(w) = p {
                parts.push(format!("{} is in {}", b.name("block"), self.bowls[*w].name("bowl")));
            }
        }
        join_sentences(&parts)
    }

    fn parse(text: &str) -> Result<Self> {
        let mut sents = sentences(text).into_iter();
        let first = sents.next().ok_or_else(|| Error::Parse("empty observation".into()))?;
        let list = first.strip_prefix("there is a ").ok_or_else(|| unexpected(first))?;
        let mut state = BlocksState {
            bowls: Vec::new(),
            blocks: Vec::new(),
            placement: Vec::new(),
        };
        for entry in list.split(", ") {
            let words: Vec<&str> = entry.split(' ').collect();
            let [color, kind, index] = words[..] else {
                return Err(unexpected(entry));
            };
            let item = Item {
                color: color.to_owned(),
                index: parse_index(index, entry)?,
            };
            match kind {
                "bowl" => state.bowls.push(item),
                "block" => {
                    state.blocks.push(item);
                    state.placement.push(None);
                }
                _ => return Err(unexpected(entry)),
            }
        }
        for s in sents {
            let words: Vec<&str> = s.split(' ').collect();
            let [bc, "block", bi, "is", "in", wc, "bowl", wi] = words[..] else {
                return Err(unexpected(s));
            };
            let block = find(&state.blocks, bc, bi).ok_or_else(|| unexpected(s))?;
            let bowl = find(&state.bowls, wc, wi).ok_or_else(|| unexpected(s))?;
            state.placement[block] = Some(bowl);
        }
        state.validate().map_err(Error::Parse)?;
        Ok(state)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.placement.len() != self.blocks.len() {
            return Err("placement does not cover every block".into());
        }
        if self.placement.iter().flatten().any(|&w| w >= self.bowls.len()) {
            return Err("block placed in a missing bowl".into());
        }
        Ok(())
    }
}

/// Numbers items per color in color order: `gray 1, gray 2, yellow 1, ...`.
fn number(colors: &mut [String]) -> Vec<Item> {
    colors.sort();
    let mut out: Vec<Item> = Vec::with_capacity(colors.len());
    for c in colors.iter() {
        let index = out.iter().filter(|i| &i.color == c).count() + 1;
        out.push(Item {
            color: c.clone(),
            index,
        });
    }
    out
}

pub(crate) fn sample<R: Rng>(rng: &mut R, split: Split) -> (SymbolicState, GoalSpec) {
    let palette: Vec<&str> = if split.is_generalize() {
        COLORS.iter().chain(&HELD_OUT_COLORS).copied().collect()
    } else {
        COLORS.to_vec()
    };
    let n_blocks = rng.gen_range(3..=5);
    let n_bowls = rng.gen_range(3..=5);
    let (block_color, bowl_color) = loop {
        let pair: Vec<&str> = palette.choose_multiple(rng, 2).copied().collect();
        let novel = HELD_OUT_COLORS.contains(&pair[0]) || HELD_OUT_COLORS.contains(&pair[1]);
        if novel == split.is_generalize() {
            break (pair[0], pair[1]);
        }
    };
    let n_targets = rng.gen_range(1..=3.min(n_blocks));
    let mut block_colors: Vec<String> = (0..n_blocks)
        .map(|i| {
            if i < n_targets {
                block_color.to_owned()
            } else {
                let others: Vec<&&str> = palette.iter().filter(|c| **c != block_color).collect();
                others.choose(rng).expect("palette has spare colors").to_string()
            }
        })
        .collect();
    let n_goal_bowls = rng.gen_range(1..=n_bowls.min(3));
    let mut bowl_colors: Vec<String> = (0..n_bowls)
        .map(|i| {
            if i < n_goal_bowls {
                bowl_color.to_owned()
            } else {
                palette.choose(rng).expect("non-empty").to_string()
            }
        })
        .collect();
    let blocks = number(&mut block_colors);
    let bowls = number(&mut bowl_colors);
    let placement = vec![None; blocks.len()];
    (
        SymbolicState::Blocks(BlocksState {
            bowls,
            blocks,
            placement,
        }),
        goal(block_color, bowl_color),
    )
}
