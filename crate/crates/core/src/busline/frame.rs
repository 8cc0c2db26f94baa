//! Length-prefixed JSON framing for the bus wire protocol.
//!
//! Every message on the wire is a 4-byte big-endian length followed by that
//! many bytes of UTF-8 JSON. The JSON value must be an object carrying an
//! `op` field naming the operation.

use std::io::{Read, Write};

use serde_json::Value;

use super::BusError;

/// Upper bound on a single frame body, in bytes.
pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

/// Operations understood by broker and clients.
pub const KNOWN_OPS: &[&str] = &[
    "REGISTER",
    "REGISTERED",
    "LOOKUP",
    "LOOKUP_REPLY",
    "LIST",
    "LIST_REPLY",
    "CALL",
    "REPLY",
    "SUBSCRIBE",
    "SUBSCRIBED",
    "PUBLISH",
    "EVENT",
    "PING",
    "PONG",
    "ERROR",
    "BYE",
];

/// Serialize `body` into a length-prefixed frame.
pub fn encode_frame(body: &Value) -> Result<Vec<u8>, BusError> {
    if !body.is_object() {
        return Err(BusError::Protocol("frame body must be a JSON object".into()));
    }
    let bytes = serde_json::to_vec(body).map_err(|e| BusError::Protocol(e.to_string()))?;
    if bytes.len() > MAX_FRAME_BYTES {
        return Err(BusError::Oversize {
            size: bytes.len(),
            limit: MAX_FRAME_BYTES,
        });
    }
    let mut out = Vec::with_capacity(4 + bytes.len());
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
    Ok(out)
}

/// Read one frame from `stream` and parse its body.
///
/// The stream must be positioned at a frame boundary. A clean EOF before the
/// first length byte is reported as [`BusError::ConnectionClosed`]; EOF in the
/// middle of a frame is [`BusError::IncompleteFrame`]. Malformed bodies are a
/// protocol error and the caller must close the connection.
pub fn decode_frame<R: Read>(stream: &mut R) -> Result<Value, BusError> {
    let mut len_buf = [0u8; 4];
    read_exact_or(stream, &mut len_buf, true)?;
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(BusError::Oversize {
            size: len,
            limit: MAX_FRAME_BYTES,
        });
    }
    let mut body = vec![0u8; len];
    read_exact_or(stream, &mut body, false)?;
    let text = std::str::from_utf8(&body)
        .map_err(|_| BusError::Protocol("frame body is not valid UTF-8".into()))?;
    let value: Value =
        serde_json::from_str(text).map_err(|e| BusError::Protocol(format!("bad JSON body: {e}")))?;
    if !value.is_object() {
        return Err(BusError::Protocol("frame body must be a JSON object".into()));
    }
    if value.get("op").and_then(Value::as_str).is_none() {
        return Err(BusError::Protocol("frame body missing string field `op`".into()));
    }
    Ok(value)
}

/// Encode and write a frame in one call.
pub fn write_frame<W: Write>(stream: &mut W, body: &Value) -> Result<(), BusError> {
    let bytes = encode_frame(body)?;
    stream.write_all(&bytes).map_err(BusError::Io)?;
    Ok(())
}

fn read_exact_or<R: Read>(stream: &mut R, buf: &mut [u8], at_boundary: bool) -> Result<(), BusError> {
    let mut filled = 0;
    while filled < buf.len() {
        match stream.read(&mut buf[filled..]) {
            Ok(0) => {
                return if at_boundary && filled == 0 {
                    Err(BusError::ConnectionClosed)
                } else {
                    Err(BusError::IncompleteFrame)
                };
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(BusError::Io(e)),
        }
    }
    Ok(())
}
