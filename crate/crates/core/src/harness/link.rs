//! How a scripted operator reaches the robot: an in-process discrete-event
//! link for reproducible studies and a network link against a live server.

use std::net::ToSocketAddrs;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::executor::ExecutionEvent;
use crate::protocol::{
    Client, CommandBody, CommandMsg, DelayLine, ErrorMsg, LinkConfig, Mode, ProtocolError,
    ServerMsg, Session, SessionConfig, StateMsg,
};
use crate::world::{WorkspaceSpec, WorkspaceState};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("command rejected: {0:?}")]
    Rejected(ErrorMsg),
    #[error("session budget exhausted")]
    OutOfTime,
    #[error("server unreachable: {0}")]
    Unreachable(#[from] ProtocolError),
}

pub trait OperatorLink {
    fn mode(&self) -> Mode;

    /// Operator clock, seconds since the session started.
    fn now(&self) -> f64;

    /// Lets `seconds` pass without sending anything; the robot keeps running.
    fn think(&mut self, seconds: f64) -> Result<(), LinkError>;

    /// Sends one command and blocks until it is acknowledged or rejected.
    fn command(&mut self, body: CommandBody) -> Result<u64, LinkError>;

    /// Latest state received.
    fn state(&self) -> &StateMsg;

    /// Blocks until a received state satisfies `pred`; false after `timeout` seconds.
    fn wait_until(&mut self, timeout: f64, pred: &mut dyn FnMut(&StateMsg) -> bool) -> Result<bool, LinkError>;

    /// Execution events seen so far.
    fn events(&self) -> &[ExecutionEvent];

    fn commands_sent(&self) -> u64;

    /// Tasks completed so far as far as this link can tell.
    fn score(&self) -> u32;
}

/// Session and delay lines stepped tick by tick in one thread.
pub struct SimulatedLink {
    session: Session,
    mode: Mode,
    period_us: u64,
    tick_us: u64,
    now_us: u64,
    deadline_us: Option<u64>,
    uplink: DelayLine<CommandMsg>,
    downlink: DelayLine<ServerMsg>,
    latest: StateMsg,
    errors: Vec<ErrorMsg>,
    events: Vec<ExecutionEvent>,
    last_key: Option<(crate::executor::ExecutorStatus, bool, Option<u64>, Vec<u8>)>,
    last_pub: u64,
    seq: u64,
}

impl SimulatedLink {
    pub fn new(spec: Arc<WorkspaceSpec>, mode: Mode, link: LinkConfig, session: SessionConfig) -> Result<Self, LinkError> {
        link.validate()?;
        let tick_us = (spec.physics.tick_dt * 1e6).round() as u64;
        let mut s = Session::new(spec, session);
        let latest = s.state_msg();
        Ok(Self {
            session: s,
            mode,
            period_us: link.state_period_us(),
            tick_us,
            now_us: 0,
            deadline_us: None,
            uplink: DelayLine::new(&link, session.seed ^ 0x5eed_0001),
            downlink: DelayLine::new(&link, session.seed ^ 0x5eed_0002),
            latest,
            errors: Vec::new(),
            events: Vec::new(),
            last_key: None,
            last_pub: 0,
            seq: 0,
        })
    }

    /// Stops the clock at `seconds`; later waits fail with `OutOfTime`.
    pub fn set_deadline(&mut self, seconds: Option<f64>) {
        self.deadline_us = seconds.map(|s| (s * 1e6).round() as u64);
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn world_state(&self) -> &WorkspaceState {
        self.session.state()
    }

    fn step(&mut self) -> Result<(), LinkError> {
        if self.deadline_us.is_some_and(|d| self.now_us >= d) {
            return Err(LinkError::OutOfTime);
        }
        let now = self.now_us;
        let wall = now as f64 * 1e-6;
        for msg in self.uplink.pop_due(now) {
            if let Err(e) = self.session.handle(&msg, wall) {
                self.downlink.push(now, ServerMsg::Error(e));
            }
            let drained = self.session.drain_events(wall);
            self.events.extend(drained);
        }
        let ticked = self.session.tick(wall);
        self.events.extend(ticked);
        self.now_us += self.tick_us;

        let key = self.session.publish_key();
        if self.last_key.as_ref() != Some(&key) || self.now_us.saturating_sub(self.last_pub) >= self.period_us {
            let msg = self.session.state_msg();
            self.downlink.push(self.now_us, ServerMsg::State(Box::new(msg)));
            self.last_key = Some(key);
            self.last_pub = self.now_us;
        }
        for msg in self.downlink.pop_due(self.now_us) {
            match msg {
                ServerMsg::State(s) => self.latest = *s,
                ServerMsg::Error(e) => self.errors.push(e),
                _ => {}
            }
        }
        Ok(())
    }
}

impl OperatorLink for SimulatedLink {
    fn mode(&self) -> Mode {
        self.mode
    }

    fn now(&self) -> f64 {
        self.now_us as f64 * 1e-6
    }

    fn think(&mut self, seconds: f64) -> Result<(), LinkError> {
        let until = self.now_us + (seconds.max(0.0) * 1e6).round() as u64;
        while self.now_us < until {
            self.step()?;
        }
        Ok(())
    }

    fn command(&mut self, body: CommandBody) -> Result<u64, LinkError> {
        self.seq += 1;
        let seq = self.seq;
        self.uplink.push(self.now_us, CommandMsg::new(seq, self.mode, body));
        loop {
            if let Some(i) = self.errors.iter().position(|e| e.seq == Some(seq)) {
                return Err(LinkError::Rejected(self.errors.remove(i)));
            }
            if self.latest.acked(seq) {
                return Ok(seq);
            }
            self.step()?;
        }
    }

    fn state(&self) -> &StateMsg {
        &self.latest
    }

    fn wait_until(&mut self, timeout: f64, pred: &mut dyn FnMut(&StateMsg) -> bool) -> Result<bool, LinkError> {
        let until = self.now_us + (timeout.max(0.0) * 1e6).round() as u64;
        loop {
            if pred(&self.latest) {
                return Ok(true);
            }
            if self.now_us >= until {
                return Ok(false);
            }
            self.step()?;
        }
    }

    fn events(&self) -> &[ExecutionEvent] {
        &self.events
    }

    fn commands_sent(&self) -> u64 {
        self.seq
    }

    fn score(&self) -> u32 {
        self.session.monitor().score()
    }
}

/// Scripted operator against a running server.
pub struct RemoteLink {
    client: Client,
    mode: Mode,
    start: Instant,
    deadline: Option<f64>,
    latest: StateMsg,
    errors: Vec<ErrorMsg>,
    events: Vec<ExecutionEvent>,
    sent: u64,
}

impl RemoteLink {
    /// Connects and waits for the first state message.
    pub fn connect(addr: impl ToSocketAddrs, mode: Mode) -> Result<Self, LinkError> {
        let client = Client::connect(addr, mode)?;
        let first = client.wait_for(Duration::from_secs(10), |m| {
            matches!(m, ServerMsg::State(_) | ServerMsg::Busy)
        })?;
        let latest = match first {
            Some(ServerMsg::State(s)) => *s,
            Some(_) => return Err(ProtocolError::Busy.into()),
            None => return Err(ProtocolError::Closed.into()),
        };
        Ok(Self {
            client,
            mode,
            start: Instant::now(),
            deadline: None,
            latest,
            errors: Vec::new(),
            events: Vec::new(),
            sent: 0,
        })
    }

    pub fn set_deadline(&mut self, seconds: Option<f64>) {
        self.deadline = seconds;
    }

    pub fn close(self) {
        self.client.close();
    }

    fn absorb(&mut self, msg: ServerMsg) {
        match msg {
            ServerMsg::State(s) => self.latest = *s,
            ServerMsg::Error(e) => self.errors.push(e),
            ServerMsg::Event { event } => self.events.push(event),
            ServerMsg::Busy => {}
        }
    }

    /// Receives for at most `seconds`, bounded by the deadline.
    fn pump(&mut self, seconds: f64) -> Result<(), LinkError> {
        let left = self.deadline.map(|d| d - self.now()).unwrap_or(f64::INFINITY);
        if left <= 0.0 {
            return Err(LinkError::OutOfTime);
        }
        let wait = Duration::from_secs_f64(seconds.min(left).max(0.0));
        if let Some(m) = self.client.recv_timeout(wait)? {
            self.absorb(m);
        }
        Ok(())
    }
}

impl OperatorLink for RemoteLink {
    fn mode(&self) -> Mode {
        self.mode
    }

    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn think(&mut self, seconds: f64) -> Result<(), LinkError> {
        let until = self.now() + seconds.max(0.0);
        while self.now() < until {
            self.pump(until - self.now())?;
        }
        Ok(())
    }

    fn command(&mut self, body: CommandBody) -> Result<u64, LinkError> {
        let seq = self.client.send(body)?;
        self.sent += 1;
        loop {
            if let Some(i) = self.errors.iter().position(|e| e.seq == Some(seq)) {
                return Err(LinkError::Rejected(self.errors.remove(i)));
            }
            if self.latest.acked(seq) {
                return Ok(seq);
            }
            self.pump(0.05)?;
        }
    }

    fn state(&self) -> &StateMsg {
        &self.latest
    }

    fn wait_until(&mut self, timeout: f64, pred: &mut dyn FnMut(&StateMsg) -> bool) -> Result<bool, LinkError> {
        let until = self.now() + timeout.max(0.0);
        loop {
            if pred(&self.latest) {
                return Ok(true);
            }
            if self.now() >= until {
                return Ok(false);
            }
            self.pump((until - self.now()).min(0.05))?;
        }
    }

    fn events(&self) -> &[ExecutionEvent] {
        &self.events
    }

    fn commands_sent(&self) -> u64 {
        self.sent
    }

    fn score(&self) -> u32 {
        self.latest.tasks_done.len() as u32
    }
}
