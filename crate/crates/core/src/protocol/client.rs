use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};

use serde_json::{Map, Value};

use super::frame::FrameDecoder;
use super::message::{Body, ConfigAck, Hello, Message, Reset, Step, StepReply};
use super::{decode, encode, ProtocolError};

/// Blocking client that numbers requests from 1 and checks each reply's seq.
pub struct Client {
    stream: TcpStream,
    decoder: FrameDecoder,
    seq: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream, decoder: FrameDecoder::new(), seq: 0 })
    }

    /// Sends `body` and returns the matching reply, turning error replies into `Remote`.
    pub fn request(&mut self, body: Body) -> Result<Message, ProtocolError> {
        self.seq += 1;
        self.stream.write_all(&encode(&Message::new(self.seq, body))?)?;
        let reply = self.read_message()?;
        if reply.seq != self.seq {
            return Err(ProtocolError::UnexpectedReply(format!("seq {} for request {}", reply.seq, self.seq)));
        }
        match reply.body {
            Body::Error(e) => Err(ProtocolError::Remote { code: e.code, message: e.message }),
            _ => Ok(reply),
        }
    }

    fn read_message(&mut self) -> Result<Message, ProtocolError> {
        let mut buf = [0u8; 8192];
        loop {
            if let Some(p) = self.decoder.next_frame()? {
                return decode(&p);
            }
            let n = self.stream.read(&mut buf)?;
            if n == 0 {
                return Err(ProtocolError::Closed);
            }
            self.decoder.push(&buf[..n]);
        }
    }

    pub fn hello(&mut self, config: Option<Map<String, Value>>) -> Result<ConfigAck, ProtocolError> {
        match self.request(Body::Hello(Hello { config }))?.body {
            Body::ConfigAck(a) => Ok(a),
            b => Err(unexpected(&b)),
        }
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f64>, ProtocolError> {
        match self.request(Body::Reset(Reset { seed }))?.body {
            Body::Obs(o) => Ok(o.obs),
            b => Err(unexpected(&b)),
        }
    }

    pub fn step(&mut self, action: f64) -> Result<StepReply, ProtocolError> {
        match self.request(Body::Step(Step { action: vec![action] }))?.body {
            Body::Result(r) => Ok(r),
            b => Err(unexpected(&b)),
        }
    }

    pub fn bye(mut self) -> Result<(), ProtocolError> {
        match self.request(Body::Bye)?.body {
            Body::Bye => Ok(()),
            b => Err(unexpected(&b)),
        }
    }
}

fn unexpected(b: &Body) -> ProtocolError {
    ProtocolError::UnexpectedReply(b.type_name().to_string())
}
