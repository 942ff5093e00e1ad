use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError};

use super::wire::{read_frame, write_frame};
use super::{CommandBody, CommandMsg, Mode, ProtocolError, ServerMsg};

/// Blocking framed-TCP client for scripted operators and tests.
pub struct Client {
    stream: TcpStream,
    inbox: Receiver<ServerMsg>,
    mode: Mode,
    next_seq: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs, mode: Mode) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let (tx, inbox) = unbounded();
        thread::spawn(move || {
            while let Ok(Some(msg)) = read_frame::<_, ServerMsg>(&mut reader) {
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            stream,
            inbox,
            mode,
            next_seq: 1,
        })
    }

    /// Sends `body` with the next sequence number and returns that number.
    pub fn send(&mut self, body: CommandBody) -> Result<u64, ProtocolError> {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.send_raw(&CommandMsg::new(seq, self.mode, body))?;
        Ok(seq)
    }

    pub fn send_raw(&mut self, msg: &CommandMsg) -> Result<(), ProtocolError> {
        write_frame(&mut self.stream, msg)
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<ServerMsg>, ProtocolError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::Closed),
        }
    }

    /// Receives until `pred` accepts a message or `timeout` passes.
    pub fn wait_for(
        &self,
        timeout: Duration,
        mut pred: impl FnMut(&ServerMsg) -> bool,
    ) -> Result<Option<ServerMsg>, ProtocolError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            match self.recv_timeout(left)? {
                Some(m) if pred(&m) => return Ok(Some(m)),
                Some(_) => {}
                None => return Ok(None),
            }
        }
    }

    pub fn close(self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}
