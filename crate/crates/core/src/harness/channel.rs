//! Simulated public channel between one user and the server.

use std::collections::VecDeque;

use crate::crypto::{Clock, Field128, Timestamp};
use crate::harness::cost::CostLedger;
use crate::scheme::Scheme;
use crate::transcript::{apply_mask, locate_field, Direction, Transcript, TranscriptError};

#[derive(Clone, Debug)]
struct InFlight {
    sent_at: Timestamp,
    bytes: Vec<u8>,
}

/// FIFO per direction. Delivery advances the shared simulated clock by
/// the channel latency; every delivered message is captured in the
/// transcript when recording is on.
#[derive(Clone, Debug)]
pub struct SimChannel {
    up: VecDeque<InFlight>,
    down: VecDeque<InFlight>,
    latency_ms: u64,
    recording: bool,
    transcript: Transcript,
}

impl SimChannel {
    pub fn new(session: u64, scheme: Scheme, seed: u64, latency_ms: u64) -> Self {
        SimChannel {
            up: VecDeque::new(),
            down: VecDeque::new(),
            latency_ms,
            recording: true,
            transcript: Transcript::new(session, scheme, seed),
        }
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn latency_ms(&self) -> u64 {
        self.latency_ms
    }

    fn queue(&mut self, dir: Direction) -> &mut VecDeque<InFlight> {
        match dir {
            Direction::UserToServer => &mut self.up,
            Direction::ServerToUser => &mut self.down,
        }
    }

    pub fn pending(&self, dir: Direction) -> usize {
        match dir {
            Direction::UserToServer => self.up.len(),
            Direction::ServerToUser => self.down.len(),
        }
    }

    /// Queues a message; its size goes into the ledger as wire bits.
    pub fn send(&mut self, dir: Direction, bytes: Vec<u8>, clock: &Clock, ledger: &mut CostLedger) {
        let label = match dir {
            Direction::UserToServer => "login",
            Direction::ServerToUser => "reply",
        };
        ledger.record_wire(label, &bytes);
        let sent_at = clock.now();
        self.queue(dir).push_back(InFlight { sent_at, bytes });
    }

    /// Pops the oldest message in `dir`, advancing `clock` by the latency.
    pub fn deliver(&mut self, dir: Direction, clock: &mut Clock) -> Option<Vec<u8>> {
        let msg = self.queue(dir).pop_front()?;
        clock.advance(self.latency_ms);
        if self.recording {
            self.transcript.push(dir, msg.sent_at, &msg.bytes);
        }
        Some(msg.bytes)
    }

    /// XORs `mask` into the named field of the oldest in-flight message.
    pub fn tamper_in_flight(&mut self, field: &str, mask: Field128) -> Result<(), TranscriptError> {
        let scheme = self.transcript.scheme;
        let (dir, offset) = locate_field(scheme, field)?;
        let msg = self
            .queue(dir)
            .front_mut()
            .ok_or(TranscriptError::MissingMessage("in-flight"))?;
        apply_mask(&mut msg.bytes, offset, mask)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}
