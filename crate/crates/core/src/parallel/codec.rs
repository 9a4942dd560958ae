//! Binary framing for the master/worker protocol.
//!
//! All integers are little-endian.
//!
//! ```text
//! frame   := "BPB1" | msg_type u8 | payload_len u32 | payload
//! hello   := n u16 | m u16 | objective_kind u8 | objective_param i32
//! request := radius u16 | seed_lane u64 | task_count u16 | task*
//! task    := count u32 | center (n x u16)
//! reply   := point_count u32 | point*
//! point   := coords (n x u16) | value f64          (2n + 8 bytes)
//! error   := UTF-8 message
//! ```
//!
//! Requests and replies do not carry `n`; it is fixed by the hello message at
//! the start of a session.

use std::time::Duration;

use thiserror::Error;

use super::{DrawTask, SampleReply, SampleRequest};
use crate::objectives::Evaluation;
use crate::space::Point;

pub const MAGIC: &[u8; 4] = b"BPB1";
pub const HEADER_LEN: usize = 9;
/// Frames above this payload size are rejected before allocation.
pub const MAX_PAYLOAD: usize = 1 << 30;

/// Bytes per point in a reply.
pub const fn point_record_len(n: usize) -> usize {
    2 * n + 8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    Request = 2,
    Reply = 3,
    Shutdown = 4,
    Error = 5,
}

impl MessageType {
    fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => MessageType::Hello,
            2 => MessageType::Request,
            3 => MessageType::Reply,
            4 => MessageType::Shutdown,
            5 => MessageType::Error,
            _ => return None,
        })
    }
}

/// Session parameters broadcast once to every worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub n: u16,
    pub m: u16,
    pub objective_kind: u8,
    pub objective_param: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    Request(SampleRequest),
    Reply(SampleReply),
    Shutdown,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("{field} = {value} does not fit the wire format")]
    Overflow { field: &'static str, value: u64 },
    #[error("point has {got} coordinates, session dimension is {n}")]
    Dimension { got: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed frame at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

fn derr<T>(offset: usize, reason: impl Into<String>) -> Result<T, DecodeError> {
    Err(DecodeError { offset, reason: reason.into() })
}

fn fits<T: TryFrom<u64>>(field: &'static str, value: usize) -> Result<T, EncodeError> {
    T::try_from(value as u64).map_err(|_| EncodeError::Overflow { field, value: value as u64 })
}

fn frame(kind: MessageType, payload: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(kind as u8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn put_point(out: &mut Vec<u8>, p: &Point, n: usize) -> Result<(), EncodeError> {
    if p.dim() != n {
        return Err(EncodeError::Dimension { got: p.dim(), n });
    }
    for &c in p.coords() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(())
}

pub fn encode_hello(h: &Hello) -> Vec<u8> {
    let mut p = Vec::with_capacity(9);
    p.extend_from_slice(&h.n.to_le_bytes());
    p.extend_from_slice(&h.m.to_le_bytes());
    p.push(h.objective_kind);
    p.extend_from_slice(&h.objective_param.to_le_bytes());
    frame(MessageType::Hello, p)
}

/// Encodes a request whose centers have dimension `n`.
pub fn encode_request(req: &SampleRequest, n: usize) -> Result<Vec<u8>, EncodeError> {
    let radius: u16 = fits("radius", req.radius)?;
    let task_count: u16 = fits("task_count", req.tasks.len())?;
    let mut p = Vec::with_capacity(12 + req.tasks.len() * (4 + 2 * n));
    p.extend_from_slice(&radius.to_le_bytes());
    p.extend_from_slice(&req.seed_lane.to_le_bytes());
    p.extend_from_slice(&task_count.to_le_bytes());
    for t in &req.tasks {
        let count: u32 = fits("count", t.count)?;
        p.extend_from_slice(&count.to_le_bytes());
        put_point(&mut p, &t.center, n)?;
    }
    fits::<u32>("payload_len", p.len())?;
    Ok(frame(MessageType::Request, p))
}

/// Encodes a reply whose points have dimension `n`. Evaluation durations
/// are not transmitted.
pub fn encode_reply(rep: &SampleReply, n: usize) -> Result<Vec<u8>, EncodeError> {
    let count: u32 = fits("point_count", rep.evaluations.len())?;
    let mut p = Vec::with_capacity(4 + rep.evaluations.len() * point_record_len(n));
    p.extend_from_slice(&count.to_le_bytes());
    for e in &rep.evaluations {
        put_point(&mut p, &e.point, n)?;
        p.extend_from_slice(&e.value.to_le_bytes());
    }
    fits::<u32>("payload_len", p.len())?;
    Ok(frame(MessageType::Reply, p))
}

pub fn encode_shutdown() -> Vec<u8> {
    frame(MessageType::Shutdown, Vec::new())
}

pub fn encode_error(message: &str) -> Vec<u8> {
    frame(MessageType::Error, message.as_bytes().to_vec())
}

/// Bounds-checked cursor over a frame.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], DecodeError> {
        match self.pos.checked_add(len) {
            Some(end) if end <= self.bytes.len() => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            _ => derr(self.pos, format!("truncated {what}")),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8, DecodeError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn i32(&mut self, what: &str) -> Result<i32, DecodeError> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn point(&mut self, n: usize) -> Result<Point, DecodeError> {
        let raw = self.take(2 * n, "point coordinates")?;
        Ok(Point::from_coords(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()))
    }

    fn finish(&self) -> Result<(), DecodeError> {
        if self.pos != self.bytes.len() {
            return derr(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

/// Parses a frame header; returns the message type and the declared payload
/// length.
pub fn decode_header(header: &[u8]) -> Result<(MessageType, usize), DecodeError> {
    if header.len() < HEADER_LEN {
        return derr(header.len(), "truncated header");
    }
    if &header[..4] != MAGIC {
        return derr(0, "bad magic");
    }
    let Some(kind) = MessageType::from_u8(header[4]) else {
        return derr(4, format!("unknown message type {}", header[4]));
    };
    let len = u32::from_le_bytes(header[5..9].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return derr(5, format!("payload length {len} exceeds limit"));
    }
    Ok((kind, len))
}

/// Splits a complete frame into type and payload reader.
fn open(bytes: &[u8], expect: Option<MessageType>) -> Result<(MessageType, Reader<'_>), DecodeError> {
    let (kind, len) = decode_header(bytes)?;
    if let Some(e) = expect {
        if kind != e {
            return derr(4, format!("expected {e:?}, found {kind:?}"));
        }
    }
    let available = bytes.len() - HEADER_LEN;
    if available != len {
        return derr(5, format!("declared payload length {len}, frame carries {available}"));
    }
    Ok((kind, Reader { bytes, pos: HEADER_LEN }))
}

fn hello_body(r: &mut Reader<'_>) -> Result<Hello, DecodeError> {
    let h = Hello {
        n: r.u16("n")?,
        m: r.u16("m")?,
        objective_kind: r.u8("objective kind")?,
        objective_param: r.i32("objective parameter")?,
    };
    r.finish()?;
    Ok(h)
}

fn request_body(r: &mut Reader<'_>, n: usize) -> Result<SampleRequest, DecodeError> {
    let radius = r.u16("radius")? as usize;
    let seed_lane = r.u64("seed lane")?;
    let task_count = r.u16("task count")? as usize;
    let remaining = r.bytes.len() - r.pos;
    let need = n.checked_mul(2).and_then(|b| b.checked_add(4)).and_then(|b| b.checked_mul(task_count));
    if need != Some(remaining) {
        return derr(r.pos, format!("{task_count} tasks do not match {remaining} payload bytes"));
    }
    let mut tasks = Vec::with_capacity(task_count);
    for _ in 0..task_count {
        let count = r.u32("task count")? as usize;
        let center = r.point(n)?;
        tasks.push(DrawTask { center, count });
    }
    r.finish()?;
    Ok(SampleRequest { radius, seed_lane, tasks })
}

fn reply_body(r: &mut Reader<'_>, n: usize) -> Result<SampleReply, DecodeError> {
    let count = r.u32("point count")? as usize;
    let remaining = r.bytes.len() - r.pos;
    let need = count.checked_mul(point_record_len(n));
    if need != Some(remaining) {
        return derr(r.pos - 4, format!("{count} points do not match {remaining} payload bytes"));
    }
    let mut evaluations = Vec::with_capacity(count);
    for _ in 0..count {
        let point = r.point(n)?;
        let value = r.f64("value")?;
        evaluations.push(Evaluation { point, value, eval_duration: Duration::ZERO });
    }
    r.finish()?;
    Ok(SampleReply { evaluations })
}

pub fn decode_hello(bytes: &[u8]) -> Result<Hello, DecodeError> {
    let (_, mut r) = open(bytes, Some(MessageType::Hello))?;
    hello_body(&mut r)
}

pub fn decode_request(bytes: &[u8], n: usize) -> Result<SampleRequest, DecodeError> {
    let (_, mut r) = open(bytes, Some(MessageType::Request))?;
    request_body(&mut r, n)
}

pub fn decode_reply(bytes: &[u8], n: usize) -> Result<SampleReply, DecodeError> {
    let (_, mut r) = open(bytes, Some(MessageType::Reply))?;
    reply_body(&mut r, n)
}

/// Decodes any frame; `n` is the session dimension used for requests and
/// replies.
pub fn decode_message(bytes: &[u8], n: usize) -> Result<Message, DecodeError> {
    let (kind, mut r) = open(bytes, None)?;
    Ok(match kind {
        MessageType::Hello => Message::Hello(hello_body(&mut r)?),
        MessageType::Request => Message::Request(request_body(&mut r, n)?),
        MessageType::Reply => Message::Reply(reply_body(&mut r, n)?),
        MessageType::Shutdown => {
            r.finish()?;
            Message::Shutdown
        }
        MessageType::Error => {
            let body = r.take(r.bytes.len() - HEADER_LEN, "message")?;
            match std::str::from_utf8(body) {
                Ok(s) => Message::Error(s.to_owned()),
                Err(e) => return derr(HEADER_LEN + e.valid_up_to(), "invalid UTF-8 in error message"),
            }
        }
    })
}
