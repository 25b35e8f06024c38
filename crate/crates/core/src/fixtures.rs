//! Hand-built episodes shared by unit tests.

use crate::envs::gridworld::{self, Door, GridState, Object, Place};
use crate::envs::hanoi::{self, HanoiState};
use crate::envs::{EpisodeSpec, Split, SymbolicState};

/// Three disks stacked on rod 1; goal: gray disk in rod 2.
pub fn hanoi_example() -> EpisodeSpec {
    let state = HanoiState {
        disks: vec!["blue".into(), "gray".into(), "green".into()],
        rods: vec![vec!["green".into(), "gray".into(), "blue".into()], vec![], vec![]],
    };
    EpisodeSpec::new(SymbolicState::Hanoi(state), hanoi::goal("gray", 2), Split::Test, 0)
}

/// Two rooms joined by a locked yellow door; the purple box is behind it.
pub fn locked_grid() -> EpisodeSpec {
    let object = |color: &str, kind: &str, room| Object {
        color: color.into(),
        kind: kind.into(),
        place: Place::Room(room),
    };
    let state = GridState {
        rooms: 2,
        doors: vec![Door {
            color: "yellow".into(),
            rooms: (1, 2),
            locked: true,
        }],
        objects: vec![
            object("green", "box", 1),
            object("purple", "box", 2),
            object("yellow", "key", 1),
        ],
        agent: 1,
    };
    EpisodeSpec::new(
        SymbolicState::Gridworld(state),
        gridworld::goal("purple", "box"),
        Split::Test,
        0,
    )
}
