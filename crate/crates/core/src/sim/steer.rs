use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Operator input applied at a tick boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteerCommand {
    MoveTarget { target: usize, position: Vec3 },
    Pause,
    Resume,
    Reset,
}

/// A command to apply right before `tick` is planned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tick: u64,
    pub command: SteerCommand,
}

/// Recorded steering input, ordered by tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommandScript {
    pub entries: Vec<ScriptEntry>,
}

impl CommandScript {
    pub fn push(&mut self, tick: u64, command: SteerCommand) {
        self.entries.push(ScriptEntry { tick, command });
        self.entries.sort_by_key(|e| e.tick);
    }

    pub fn at(&self, tick: u64) -> impl Iterator<Item = &SteerCommand> {
        self.entries.iter().filter(move |e| e.tick == tick).map(|e| &e.command)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
