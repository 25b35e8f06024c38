//! Room-level pickup tasks in a row of rooms joined by (possibly locked) doors.
//!
//! Navigation is implicit: the agent can act on anything in a room reachable
//! through unlocked doors. Actions are `pick up <color> <kind>`,
//! `toggle <color> door`, `drop <kind> in void`, and `done picking up`.
//! The agent holds at most one object; dropping discards it for good.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::text::{join_sentences, parse_index, sentences, unexpected};
use super::{Check, Split, SymbolicState, World};
use crate::error::{Error, Result};
use crate::plan::{ActionInstance, GoalSpec, Symbol};

pub const DONE_TEXT: &str = "done picking up";
pub const COLORS: [&str; 6] = ["blue", "gray", "green", "purple", "red", "yellow"];
pub const KINDS: [&str; 3] = ["ball", "box", "key"];

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Door {
    pub color: String,
    /// Rooms joined by this door, 1-based, lower first.
    pub rooms: (usize, usize),
    pub locked: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Place {
    Room(usize),
    Held,
    Discarded,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Object {
    pub color: String,
    pub kind: String,
    pub place: Place,
}

impl Object {
    fn name(&self) -> String {
        format!("{} {}", self.color, self.kind)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub rooms: usize,
    pub doors: Vec<Door>,
    /// Sorted by (color, kind); names are unique within an episode.
    pub objects: Vec<Object>,
    pub agent: usize,
}

pub fn pickup_action(color: &str, kind: &str) -> ActionInstance {
    ActionInstance::new(
        format!("pick up {color} {kind}"),
        Symbol::new("pickup", [color, kind]),
        false,
    )
    .expect("template is well-formed")
}

pub fn toggle_action(color: &str) -> ActionInstance {
    ActionInstance::new(format!("toggle {color} door"), Symbol::new("toggle", [color]), false)
        .expect("template is well-formed")
}

pub fn drop_action(kind: &str) -> ActionInstance {
    ActionInstance::new(format!("drop {kind} in void"), Symbol::new("drop", [kind]), false)
        .expect("template is well-formed")
}

pub fn goal(color: &str, kind: &str) -> GoalSpec {
    GoalSpec::new(
        format!("pick up the {color} {kind}"),
        Symbol::new("holding", [color, kind]),
    )
    .expect("template is well-formed")
}

impl GridState {
    fn object(&self, color: &str, kind: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.color == color && o.kind == kind)
    }

    fn door(&self, color: &str) -> Option<usize> {
        self.doors.iter().position(|d| d.color == color)
    }

    fn held(&self) -> Option<&Object> {
        self.objects.iter().find(|o| o.place == Place::Held)
    }

    fn kinds(&self) -> Vec<&str> {
        let mut kinds: Vec<&str> = self.objects.iter().map(|o| o.kind.as_str()).collect();
        kinds.sort_unstable();
        kinds.dedup();
        kinds
    }

    /// Rooms connected to the agent's room through unlocked doors.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.rooms + 1];
        let mut stack = vec![self.agent];
        seen[self.agent] = true;
        while let Some(r) = stack.pop() {
            for d in self.doors.iter().filter(|d| !d.locked) {
                let other = if d.rooms.0 == r {
                    d.rooms.1
                } else if d.rooms.1 == r {
                    d.rooms.0
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen
    }
}

impl World for GridState {
    fn vocabulary(&self) -> Vec<ActionInstance> {
        let mut out: Vec<_> = self.objects.iter().map(|o| pickup_action(&o.color, &o.kind)).collect();
        out.extend(self.doors.iter().map(|d| toggle_action(&d.color)));
        out.extend(self.kinds().into_iter().map(drop_action));
        out.push(super::done_action(super::EnvId::Gridworld));
        out
    }

    fn knows(&self, op: &Symbol) -> bool {
        match (op.name.as_str(), op.args.as_slice()) {
            ("pickup", [color, kind]) => self.object(color, kind).is_some(),
            ("toggle", [color]) => self.door(color).is_some(),
            ("drop", [kind]) => self.kinds().contains(&kind.as_str()),
            _ => false,
        }
    }

    fn check(&self, op: &Symbol) -> Check {
        match op.name.as_str() {
            "pickup" => {
                let obj = &self.objects[self.object(&op.args[0], &op.args[1]).expect("known op")];
                if let Some(h) = self.held() {
                    return Err(format!("agent already holds {}", h.name()));
                }
                match obj.place {
                    Place::Room(r) if self.reachable()[r] => Ok(()),
                    Place::Room(r) => Err(format!("room {r} with {} is behind a locked door", obj.name())),
                    _ => Err(format!("{} is no longer in any room", obj.name())),
                }
            }
            "toggle" => {
                let door = &self.doors[self.door(&op.args[0]).expect("known op")];
                if !door.locked {
                    return Err(format!("{} door is not locked", door.color));
                }
                let reach = self.reachable();
                if !reach[door.rooms.0] && !reach[door.rooms.1] {
                    return Err(format!("{} door is not adjacent to a reachable room", door.color));
                }
                match self.held() {
                    Some(h) if h.kind == "key" && h.color == door.color => Ok(()),
                    _ => Err(format!("agent does not hold the {} key", door.color)),
                }
            }
            "drop" => match self.held() {
                Some(h) if h.kind == op.args[0] => Ok(()),
                Some(h) => Err(format!("agent holds {}, not a {}", h.name(), op.args[0])),
                None => Err("agent holds nothing".into()),
            },
            _ => unreachable!("unknown ops are rejected earlier"),
        }
    }

    fn apply(&self, op: &Symbol) -> Self {
        let mut next = self.clone();
        match op.name.as_str() {
            "pickup" => {
                let i = self.object(&op.args[0], &op.args[1]).expect("known op");
                if let Place::Room(r) = self.objects[i].place {
                    next.agent = r;
                }
                next.objects[i].place = Place::Held;
            }
            "toggle" => {
                let i = self.door(&op.args[0]).expect("known op");
                next.doors[i].locked = false;
            }
            "drop" => {
                if let Some(o) = next.objects.iter_mut().find(|o| o.place == Place::Held) {
                    o.place = Place::Discarded;
                }
            }
            _ => unreachable!("unknown ops are rejected earlier"),
        }
        next
    }

    fn is_goal(&self, goal: &Symbol) -> bool {
        goal.name == "holding"
            && goal.args.len() == 2
            && self
                .held()
                .is_some_and(|h| h.color == goal.args[0] && h.kind == goal.args[1])
    }

    fn render(&self) -> String {
        let mut parts = Vec::new();
        for r in 1..=self.rooms {
            let mut contents: Vec<String> = self
                .objects
                .iter()
                .filter(|o| o.place == Place::Room(r))
                .map(Object::name)
                .collect();
            if self.agent == r {
                contents.push("agent".into());
            }
            if contents.is_empty() {
                parts.push(format!("room {r} is empty"));
            } else {
                parts.push(format!("room {r} has {}", contents.join(", ")));
            }
        }
        for d in &self.doors {
            let status = if d.locked { "locked" } else { "open" };
            parts.push(format!(
                "the {} door connecting room {} and room {} is {status}",
                d.color, d.rooms.0, d.rooms.1
            ));
        }
        if let Some(h) = self.held() {
            parts.push(format!("agent holds {}", h.name()));
        }
        for o in self.objects.iter().filter(|o| o.place == Place::Discarded) {
            parts.push(format!("{} is discarded", o.name()));
        }
        join_sentences(&parts)
    }

    fn parse(text: &str) -> Result<Self> {
        let mut state = GridState {
            rooms: 0,
            doors: Vec::new(),
            objects: Vec::new(),
            agent: 0,
        };
        let put = |state: &mut GridState, name: &str, place: Place| -> Result<()> {
            let [color, kind] = name.split(' ').collect::<Vec<_>>()[..] else {
                return Err(unexpected(name));
            };
            state.objects.push(Object {
                color: color.to_owned(),
                kind: kind.to_owned(),
                place,
            });
            Ok(())
        };
        for s in sentences(text) {
            let words: Vec<&str> = s.split(' ').collect();
            match words[..] {
                ["room", r, "is", "empty"] => {
                    state.rooms = state.rooms.max(parse_index(r, s)?);
                }
                ["room", r, "has", ..] => {
                    let r = parse_index(r, s)?;
                    state.rooms = state.rooms.max(r);
                    let list = s.splitn(4, ' ').nth(3).unwrap_or_default();
                    for item in list.split(", ") {
                        if item == "agent" {
                            state.agent = r;
                        } else {
                            put(&mut state, item, Place::Room(r))?;
                        }
                    }
                }
                ["the", color, "door", "connecting", "room", a, "and", "room", b, "is", status] => {
                    let locked = match status {
                        "locked" => true,
                        "open" => false,
                        _ => return Err(unexpected(s)),
                    };
                    state.doors.push(Door {
                        color: color.to_owned(),
                        rooms: (parse_index(a, s)?, parse_index(b, s)?),
                        locked,
                    });
                }
                ["agent", "holds", color, kind] => put(&mut state, &format!("{color} {kind}"), Place::Held)?,
                [color, kind, "is", "discarded"] => put(&mut state, &format!("{color} {kind}"), Place::Discarded)?,
                _ => return Err(unexpected(s)),
            }
        }
        state
            .objects
            .sort_by(|a, b| (&a.color, &a.kind).cmp(&(&b.color, &b.kind)));
        state.validate().map_err(Error::Parse)?;
        Ok(state)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(1..=self.rooms).contains(&self.agent) {
            return Err(format!("agent is in room {} of {}", self.agent, self.rooms));
        }
        if self.objects.iter().filter(|o| o.place == Place::Held).count() > 1 {
            return Err("agent holds more than one object".into());
        }
        for d in &self.doors {
            let (a, b) = d.rooms;
            if a == b || !(1..=self.rooms).contains(&a) || !(1..=self.rooms).contains(&b) {
                return Err(format!("{} door does not join two rooms", d.color));
            }
        }
        for o in &self.objects {
            if let Place::Room(r) = o.place {
                if !(1..=self.rooms).contains(&r) {
                    return Err(format!("{} is in missing room {r}", o.name()));
                }
            }
        }
        let mut names: Vec<_> = self.objects.iter().map(Object::name).collect();
        names.sort();
        names.dedup();
        if names.len() != self.objects.len() {
            return Err("object names are not unique".into());
        }
        Ok(())
    }
}

pub(crate) fn sample<R: Rng>(rng: &mut R, split: Split) -> (SymbolicState, GoalSpec) {
    let (rooms, distractors) = if split.is_generalize() {
        (4, rng.gen_range(3..=5))
    } else {
        (rng.gen_range(2..=3), rng.gen_range(0..=3))
    };
    let n_locked = rng.gen_range(0..=2.min(rooms - 1));
    let door_colors: Vec<&str> = COLORS.choose_multiple(rng, rooms - 1).copied().collect();
    let mut locked = vec![false; rooms - 1];
    for i in rand::seq::index::sample(rng, rooms - 1, n_locked) {
        locked[i] = true;
    }
    let doors: Vec<Door> = door_colors
        .iter()
        .zip(&locked)
        .enumerate()
        .map(|(i, (c, &l))| Door {
            color: c.to_string(),
            rooms: (i + 1, i + 2),
            locked: l,
        })
        .collect();

    let mut names: Vec<(String, String)> = doors
        .iter()
        .filter(|d| d.locked)
        .map(|d| (d.color.clone(), "key".to_owned()))
        .collect();
    let target = loop {
        let pick = (
            COLORS.choose(rng).expect("non-empty").to_string(),
            KINDS.choose(rng).expect("non-empty").to_string(),
        );
        if !names.contains(&pick) {
            break pick;
        }
    };
    names.push(target.clone());
    while names.len() < n_locked + 1 + distractors {
        let pick = (
            COLORS.choose(rng).expect("non-empty").to_string(),
            KINDS.choose(rng).expect("non-empty").to_string(),
        );
        if !names.contains(&pick) {
            names.push(pick);
        }
    }
    let mut objects: Vec<Object> = names
        .into_iter()
        .map(|(color, kind)| Object {
            color,
            kind,
            place: Place::Room(rng.gen_range(1..=rooms)),
        })
        .collect();
    objects.sort_by(|a, b| (&a.color, &a.kind).cmp(&(&b.color, &b.kind)));
    let agent = rng.gen_range(1..=rooms);
    (
        SymbolicState::Gridworld(GridState {
            rooms,
            doors,
            objects,
            agent,
        }),
        goal(&target.0, &target.1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two rooms, locked yellow door, yellow key with the agent, purple box beyond.
    pub(crate) fn locked_two_rooms() -> GridState {
        GridState {
            rooms: 2,
            doors: vec![Door {
                color: "yellow".into(),
                rooms: (1, 2),
                locked: true,
            }],
            objects: vec![
                Object {
                    color: "purple".into(),
                    kind: "box".into(),
                    place: Place::Room(2),
                },
                Object {
                    color: "yellow".into(),
                    kind: "key".into(),
                    place: Place::Room(1),
                },
            ],
            agent: 1,
        }
    }

    #[test]
    fn renders_rooms_and_doors() {
        assert_eq!(
            locked_two_rooms().render(),
            "room 1 has yellow key, agent. room 2 has purple box. \
             the yellow door connecting room 1 and room 2 is locked."
        );
    }

    #[test]
    fn vocabulary_contains_expected_templates() {
        let s = SymbolicState::Gridworld(locked_two_rooms());
        let texts: Vec<String> = s.vocabulary().into_iter().map(|a| a.text).collect();
        for t in [
            "pick up yellow key",
            "toggle yellow door",
            "drop key in void",
            "done picking up",
        ] {
            assert!(texts.contains(&t.to_owned()), "missing {t}");
        }
    }

    #[test]
    fn key_unlocks_door() {
        let g = goal("purple", "box");
        let s = SymbolicState::Gridworld(locked_two_rooms());
        assert!(!s.precondition_holds(&g, &pickup_action("purple", "box")).unwrap());
        assert!(!s.precondition_holds(&g, &toggle_action("yellow")).unwrap());
        let s = s.step(&g, &pickup_action("yellow", "key")).unwrap();
        assert!(s.precondition_holds(&g, &toggle_action("yellow")).unwrap());
        assert!(!s.precondition_holds(&g, &pickup_action("purple", "box")).unwrap());
        let s = s.step(&g, &toggle_action("yellow")).unwrap();
        let SymbolicState::Gridworld(gs) = &s else {
            unreachable!()
        };
        assert!(!gs.doors[0].locked);
        assert!(!s.precondition_holds(&g, &pickup_action("purple", "box")).unwrap());
        let s = s.step(&g, &drop_action("key")).unwrap();
        let s = s.step(&g, &pickup_action("purple", "box")).unwrap();
        assert!(s.is_goal(&g));
        assert!(s.render_observation().contains("yellow key is discarded"));
    }
}
