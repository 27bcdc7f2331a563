//! Binary framing between the device and server agents.
//!
//! A connection opens with the 4-byte preamble `DSC1`, sent once by the
//! device. Every frame is a `u8` type tag followed by its fields in
//! little-endian order:
//!
//! | type | frame         | fields                                                                            |
//! |------|---------------|-----------------------------------------------------------------------------------|
//! | 1    | Hello         | `u64 profile_hash`                                                                |
//! | 2    | InferRequest  | `u64 request_id, u8 strategy, u16 split_layer, u32 batch, u64 payload_len, payload` |
//! | 3    | InferResponse | `u64 request_id, u64 server_compute_ns`                                           |
//! | 4    | Error         | `u16 code, u32 message_len, message (UTF-8)`                                      |

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const PREAMBLE: [u8; 4] = *b"DSC1";

pub const TYPE_HELLO: u8 = 1;
pub const TYPE_INFER_REQUEST: u8 = 2;
pub const TYPE_INFER_RESPONSE: u8 = 3;
pub const TYPE_ERROR: u8 = 4;

/// Error frame codes.
pub const ERR_HASH_MISMATCH: u16 = 1;
pub const ERR_MALFORMED: u16 = 2;
pub const ERR_UNMEASURED_BATCH: u16 = 3;

/// Upper bound on a request payload accepted from the wire.
pub const MAX_PAYLOAD_LEN: u64 = 1 << 32;
/// Upper bound on an error message accepted from the wire.
pub const MAX_MESSAGE_LEN: u32 = 1 << 16;

/// What the server is asked to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum WireStrategy {
    /// Run every layer.
    FullOffload = 0,
    /// Run the layers after `split_layer`.
    Split = 1,
    /// Nothing to run; the device ran every layer and only reports in.
    NoOffloadReport = 2,
}

impl TryFrom<u8> for WireStrategy {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        match code {
            0 => Ok(WireStrategy::FullOffload),
            1 => Ok(WireStrategy::Split),
            2 => Ok(WireStrategy::NoOffloadReport),
            other => Err(Error::Protocol(format!("unknown strategy code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Hello {
        profile_hash: u64,
    },
    InferRequest {
        request_id: u64,
        strategy: WireStrategy,
        /// Zero unless `strategy` is `Split`.
        split_layer: u16,
        batch: u32,
        payload: Vec<u8>,
    },
    InferResponse {
        request_id: u64,
        server_compute_ns: u64,
    },
    Error {
        code: u16,
        message: String,
    },
}

/// Everything of an `InferRequest` frame up to (not including) the payload bytes.
pub fn infer_request_header(
    request_id: u64,
    strategy: WireStrategy,
    split_layer: u16,
    batch: u32,
    payload_len: u64,
) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24);
    buf.push(TYPE_INFER_REQUEST);
    buf.extend_from_slice(&request_id.to_le_bytes());
    buf.push(strategy as u8);
    buf.extend_from_slice(&split_layer.to_le_bytes());
    buf.extend_from_slice(&batch.to_le_bytes());
    buf.extend_from_slice(&payload_len.to_le_bytes());
    buf
}

impl WireMessage {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            WireMessage::Hello { profile_hash } => {
                let mut buf = vec![TYPE_HELLO];
                buf.extend_from_slice(&profile_hash.to_le_bytes());
                buf
            }
            WireMessage::InferRequest {
                request_id,
                strategy,
                split_layer,
                batch,
                payload,
            } => {
                let mut buf = infer_request_header(*request_id, *strategy, *split_layer, *batch, payload.len() as u64);
                buf.extend_from_slice(payload);
                buf
            }
            WireMessage::InferResponse {
                request_id,
                server_compute_ns,
            } => {
                let mut buf = vec![TYPE_INFER_RESPONSE];
                buf.extend_from_slice(&request_id.to_le_bytes());
                buf.extend_from_slice(&server_compute_ns.to_le_bytes());
                buf
            }
            WireMessage::Error { code, message } => {
                let mut buf = vec![TYPE_ERROR];
                buf.extend_from_slice(&code.to_le_bytes());
                buf.extend_from_slice(&(message.len() as u32).to_le_bytes());
                buf.extend_from_slice(message.as_bytes());
                buf
            }
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let msg = read_frame(&mut cursor)?.ok_or_else(|| Error::Protocol("empty frame".into()))?;
        if !cursor.is_empty() {
            return Err(Error::Protocol(format!("{} trailing bytes after frame", cursor.len())));
        }
        Ok(msg)
    }
}

/// Reads one frame. Returns `None` on a clean end of stream before the type byte.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<WireMessage>> {
    let mut tag = [0u8; 1];
    loop {
        match r.read(&mut tag) {
            Ok(0) => return Ok(None),
            Ok(_) => break,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let msg = match tag[0] {
        TYPE_HELLO => WireMessage::Hello {
            profile_hash: read_u64(r)?,
        },
        TYPE_INFER_REQUEST => {
            let request_id = read_u64(r)?;
            let strategy = WireStrategy::try_from(read_array::<1, _>(r)?[0])?;
            let split_layer = u16::from_le_bytes(read_array(r)?);
            let batch = u32::from_le_bytes(read_array(r)?);
            let payload_len = read_u64(r)?;
            if payload_len > MAX_PAYLOAD_LEN {
                return Err(Error::Protocol(format!("payload length {payload_len} exceeds limit")));
            }
            WireMessage::InferRequest {
                request_id,
                strategy,
                split_layer,
                batch,
                payload: read_exact_vec(r, payload_len)?,
            }
        }
        TYPE_INFER_RESPONSE => WireMessage::InferResponse {
            request_id: read_u64(r)?,
            server_compute_ns: read_u64(r)?,
        },
        TYPE_ERROR => {
            let code = u16::from_le_bytes(read_array(r)?);
            let len = u32::from_le_bytes(read_array(r)?);
            if len > MAX_MESSAGE_LEN {
                return Err(Error::Protocol(format!("error message length {len} exceeds limit")));
            }
            let message = String::from_utf8(read_exact_vec(r, u64::from(len))?)
                .map_err(|_| Error::Protocol("error message is not UTF-8".into()))?;
            WireMessage::Error { code, message }
        }
        other => return Err(Error::Protocol(format!("unknown frame type {other}"))),
    };
    Ok(Some(msg))
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Protocol("truncated frame".into())
    } else {
        Error::Network(e)
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

// Grows with the data actually received instead of trusting the length prefix up front.
fn read_exact_vec<R: Read>(r: &mut R, len: u64) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(len.min(1 << 20) as usize);
    r.take(len).read_to_end(&mut buf)?;
    if buf.len() as u64 != len {
        return Err(Error::Protocol("truncated frame".into()));
    }
    Ok(buf)
}

pub fn write_preamble<W: Write>(w: &mut W) -> io::Result<()> {
    w.write_all(&PREAMBLE)
}

pub fn read_preamble<R: Read>(r: &mut R) -> Result<()> {
    let got: [u8; 4] = read_array(r)?;
    if got != PREAMBLE {
        return Err(Error::Protocol(format!("bad preamble {got:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_layout() {
        let bytes = WireMessage::Hello {
            profile_hash: 0x0102030405060708,
        }
        .encode();
        assert_eq!(bytes, [1, 8, 7, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn infer_request_layout() {
        let msg = WireMessage::InferRequest {
            request_id: 7,
            strategy: WireStrategy::Split,
            split_layer: 2,
            batch: 1,
            payload: vec![0; 3],
        };
        let bytes = msg.encode();
        let expected: Vec<u8> = [
            &[2u8][..],
            &7u64.to_le_bytes(),
            &[1],
            &2u16.to_le_bytes(),
            &1u32.to_le_bytes(),
            &3u64.to_le_bytes(),
            &[0, 0, 0],
        ]
        .concat();
        assert_eq!(bytes, expected);
        assert_eq!(WireMessage::decode(&bytes).unwrap(), msg);
    }

    #[test]
    fn error_layout() {
        let bytes = WireMessage::Error {
            code: 1,
            message: "no".into(),
        }
        .encode();
        assert_eq!(bytes, [4, 1, 0, 2, 0, 0, 0, b'n', b'o']);
    }

    #[test]
    fn malformed_frames() {
        assert!(matches!(WireMessage::decode(&[9]), Err(Error::Protocol(_))));
        assert!(matches!(WireMessage::decode(&[1, 0, 0]), Err(Error::Protocol(_))));
        let mut bad_strategy = infer_request_header(1, WireStrategy::Split, 1, 1, 0);
        bad_strategy[9] = 5;
        assert!(matches!(WireMessage::decode(&bad_strategy), Err(Error::Protocol(_))));
        let short_payload = infer_request_header(1, WireStrategy::Split, 1, 1, 10);
        assert!(matches!(WireMessage::decode(&short_payload), Err(Error::Protocol(_))));
        assert!(matches!(
            WireMessage::decode(&[4, 0, 0, 1, 0, 0, 0, 0xff]),
            Err(Error::Protocol(_))
        ));
        let mut extra = WireMessage::Hello { profile_hash: 1 }.encode();
        extra.push(0);
        assert!(WireMessage::decode(&extra).is_err());
    }

    #[test]
    fn clean_end_of_stream() {
        let mut empty: &[u8] = &[];
        assert!(read_frame(&mut empty).unwrap().is_none());
    }

    #[test]
    fn preamble_check() {
        let mut ok: &[u8] = b"DSC1";
        read_preamble(&mut ok).unwrap();
        let mut bad: &[u8] = b"DSC2";
        assert!(read_preamble(&mut bad).is_err());
    }
}
