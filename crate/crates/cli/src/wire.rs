//! Framing for the socket demo.
//!
//! A frame is a 4-byte big-endian payload length, a type byte, then the
//! payload. Payloads that carry several artifacts concatenate them, each
//! behind its own 4-byte length.

use std::io::{self, Read, Write};

/// Frames longer than this are refused before allocating.
pub const MAX_PAYLOAD: u32 = 256 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameType {
    Hello = 0x01,
    Signature = 0x02,
    Task = 0x03,
    Result = 0x04,
    Verdict = 0x05,
    Error = 0x7f,
}

impl FrameType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => FrameType::Hello,
            0x02 => FrameType::Signature,
            0x03 => FrameType::Task,
            0x04 => FrameType::Result,
            0x05 => FrameType::Verdict,
            0x7f => FrameType::Error,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameType, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    pub fn error(msg: &str) -> Self {
        Self::new(FrameType::Error, msg.as_bytes().to_vec())
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    let len = u32::try_from(frame.payload.len())
        .ok()
        .filter(|&l| l <= MAX_PAYLOAD)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "payload too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&[frame.kind as u8])?;
    w.write_all(&frame.payload)?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> io::Result<Frame> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    let len = u32::from_be_bytes(head[..4].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let kind = FrameType::from_byte(head[4])
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("frame type {:#04x}", head[4])))?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Frame { kind, payload })
}

pub fn join_sections(sections: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in sections {
        out.extend_from_slice(&(s.len() as u32).to_be_bytes());
        out.extend_from_slice(s);
    }
    out
}

pub fn split_sections(mut bytes: &[u8]) -> Option<Vec<&[u8]>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let len = u32::from_be_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
        let body = bytes.get(4..4 + len)?;
        out.push(body);
        bytes = &bytes[4 + len..];
    }
    Some(out)
}
