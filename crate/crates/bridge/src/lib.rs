//! Live view of a run over WebSocket.
//!
//! Clients receive a `scene.v1` message on connect and then one `frame.v1`
//! per tick. They send `command.v1` messages; each is validated and applied
//! at the next tick boundary and answered with an `ack.v1`.

pub mod protocol;
mod server;

use std::thread;
use std::time::{Duration, Instant};

pub use protocol::{Ack, AgentFrame, CommandMessage, EdgeFrame, Frame, Role, Scene};
pub use server::{Bridge, Inbound};

use relaymesh::sim::{CommandScript, RunResult, Runner, Simulation};

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Minimum wall time per tick; `None` runs flat out.
    pub pace: Option<Duration>,
    /// Hold the loop this long for a first client before ticking.
    pub wait_for_client: Option<Duration>,
}

/// Result of a served run.
#[derive(Debug, Clone)]
pub struct Served {
    pub result: RunResult,
    /// Accepted commands keyed by boundary; replaying them headless
    /// reproduces the run log.
    pub script: CommandScript,
}

/// Runs `sim` to its outcome while streaming frames through `bridge`.
///
/// The command queue is drained once per boundary. Pause holds the loop
/// without ticking.
pub fn serve(sim: Simulation, bridge: &Bridge, options: &ServeOptions) -> Served {
    if let Some(limit) = options.wait_for_client {
        let start = Instant::now();
        while bridge.client_count() == 0 && start.elapsed() < limit {
            thread::sleep(Duration::from_millis(10));
        }
    }
    let mut runner = Runner::new(sim);
    let mut script = CommandScript::default();
    let mut held = false;
    bridge.broadcast(&Frame::capture(runner.sim(), None, None));
    loop {
        let started = Instant::now();
        let boundary = runner.boundary();
        for cmd in bridge.drain() {
            let ack = match runner.apply(&cmd.command) {
                Ok(()) => {
                    script.push(boundary, cmd.command.clone());
                    Ack::accepted(cmd.id, boundary)
                }
                Err(reason) => Ack::rejected(cmd.id, reason),
            };
            bridge.ack(cmd.client, &ack);
        }
        if runner.sim().paused {
            if !held {
                bridge.broadcast(&Frame::capture(runner.sim(), runner.last(), None));
                held = true;
            }
            thread::sleep(Duration::from_millis(20));
            continue;
        }
        held = false;
        if !runner.advance() {
            break;
        }
        bridge.broadcast(&Frame::capture(runner.sim(), runner.last(), None));
        if let Some(pace) = options.pace {
            if let Some(rest) = pace.checked_sub(started.elapsed()) {
                thread::sleep(rest);
            }
        }
    }
    bridge.broadcast(&Frame::capture(runner.sim(), runner.last(), runner.outcome()));
    Served {
        result: runner.finish(),
        script,
    }
}
