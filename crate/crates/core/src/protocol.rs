//! Framed device link protocol.
//!
//! ```text
//! +------+------+-----+-----------------+----------+
//! | 0xAA | type | len | payload (len B) | checksum |
//! +------+------+-----+-----------------+----------+
//! checksum = type ^ len ^ payload[0] ^ ... ^ payload[len-1]
//! ```
//!
//! Every frame type has a fixed payload length (see [`FrameType::payload_len`]),
//! and the decoder rejects any header whose length disagrees with its type.
//! Together with the XOR checksum this rejects every single-bit corruption:
//! a flip in `len` breaks the length rule, a flip anywhere else breaks the
//! checksum.
//!
//! Random data passes as a frame at a given offset with probability
//! `(1/256) * (7/256) * (1/256) * (1/256)` (SOF, a known type with its
//! matching length, checksum), about 1.6e-9, so roughly one spurious frame
//! per 6e8 bytes of noise. Multi-bit corruptions that cancel in the XOR are
//! not detected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{FaultCode, Level, Mode};

pub const SOF: u8 = 0xAA;
pub const MAX_PAYLOAD: usize = 32;
pub const FRAME_OVERHEAD: usize = 4;
pub const MAX_FRAME_LEN: usize = MAX_PAYLOAD + FRAME_OVERHEAD;
pub const MAX_PASSWORD_LEN: usize = 16;
pub const TELEMETRY_LEN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    Oversize(usize),
    #[error("{frame_type:?} carries {expected} payload bytes, got {got}")]
    PayloadLength { frame_type: FrameType, expected: usize, got: usize },
    #[error("unknown frame type 0x{0:02X}")]
    UnknownType(u8),
    #[error("password must be 1..={MAX_PASSWORD_LEN} bytes, got {0}")]
    PasswordLength(usize),
    #[error("malformed {0:?} payload")]
    BadPayload(FrameType),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum FrameType {
    AuthReq = 0x01,
    AuthAck = 0x02,
    SetLevel = 0x03,
    Telemetry = 0x04,
    Heartbeat = 0x05,
    FaultEvt = 0x06,
    Ack = 0x07,
}

impl FrameType {
    pub const ALL: [FrameType; 7] = [
        FrameType::AuthReq,
        FrameType::AuthAck,
        FrameType::SetLevel,
        FrameType::Telemetry,
        FrameType::Heartbeat,
        FrameType::FaultEvt,
        FrameType::Ack,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn payload_len(self) -> usize {
        match self {
            // length byte + password padded to 16
            FrameType::AuthReq => 1 + MAX_PASSWORD_LEN,
            FrameType::AuthAck => 1,
            FrameType::SetLevel => 1,
            FrameType::Telemetry => TELEMETRY_LEN,
            FrameType::Heartbeat => 0,
            FrameType::FaultEvt => 1,
            // acked type, mode, level
            FrameType::Ack => 3,
        }
    }

    /// Frames the device emits; the device ignores these if it receives them.
    pub fn is_device_originated(self) -> bool {
        matches!(self, FrameType::AuthAck | FrameType::Telemetry | FrameType::FaultEvt | FrameType::Ack)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    frame_type: FrameType,
    payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, payload: Vec<u8>) -> Result<Self, ProtocolError> {
        if payload.len() > MAX_PAYLOAD {
            return Err(ProtocolError::Oversize(payload.len()));
        }
        if payload.len() != frame_type.payload_len() {
            return Err(ProtocolError::PayloadLength {
                frame_type,
                expected: frame_type.payload_len(),
                got: payload.len(),
            });
        }
        Ok(Self { frame_type, payload })
    }

    pub fn frame_type(&self) -> FrameType {
        self.frame_type
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn heartbeat() -> Self {
        Self { frame_type: FrameType::Heartbeat, payload: Vec::new() }
    }

    pub fn set_level(level: Level) -> Self {
        Self { frame_type: FrameType::SetLevel, payload: vec![level as u8] }
    }

    /// Status 0 accepts, 1 rejects.
    pub fn auth_ack(accepted: bool) -> Self {
        Self { frame_type: FrameType::AuthAck, payload: vec![u8::from(!accepted)] }
    }

    pub fn fault_evt(code: FaultCode) -> Self {
        Self { frame_type: FrameType::FaultEvt, payload: vec![code as u8] }
    }

    pub fn ack(acked: FrameType, mode: Mode, level: Level) -> Self {
        Self { frame_type: FrameType::Ack, payload: vec![acked as u8, mode as u8, level as u8] }
    }

    pub fn telemetry(t: &TelemetryPayload) -> Self {
        Self { frame_type: FrameType::Telemetry, payload: t.to_bytes().to_vec() }
    }

    pub fn as_level(&self) -> Option<Level> {
        match self.frame_type {
            FrameType::SetLevel => Level::from_byte(self.payload[0]),
            _ => None,
        }
    }

    pub fn as_auth_status(&self) -> Option<bool> {
        match self.frame_type {
            FrameType::AuthAck => Some(self.payload[0] == 0),
            _ => None,
        }
    }

    pub fn as_fault(&self) -> Option<FaultCode> {
        match self.frame_type {
            FrameType::FaultEvt => FaultCode::from_byte(self.payload[0]),
            _ => None,
        }
    }

    pub fn as_ack(&self) -> Option<(Option<FrameType>, Option<Mode>, Option<Level>)> {
        match self.frame_type {
            FrameType::Ack => Some((
                FrameType::from_byte(self.payload[0]),
                Mode::from_byte(self.payload[1]),
                Level::from_byte(self.payload[2]),
            )),
            _ => None,
        }
    }

    pub fn as_telemetry(&self) -> Option<TelemetryPayload> {
        match self.frame_type {
            FrameType::Telemetry => TelemetryPayload::from_bytes(&self.payload).ok(),
            _ => None,
        }
    }
}

pub fn checksum(type_byte: u8, payload: &[u8]) -> u8 {
    payload.iter().fold(type_byte ^ payload.len() as u8, |acc, b| acc ^ b)
}

/// Frame arbitrary bytes without the per-type length rule.
pub fn encode_raw(type_byte: u8, payload: &[u8]) -> Result<Vec<u8>, ProtocolError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(ProtocolError::Oversize(payload.len()));
    }
    let mut out = Vec::with_capacity(payload.len() + FRAME_OVERHEAD);
    out.push(SOF);
    out.push(type_byte);
    out.push(payload.len() as u8);
    out.extend_from_slice(payload);
    out.push(checksum(type_byte, payload));
    Ok(out)
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    encode_raw(frame.frame_type as u8, &frame.payload).expect("frame payload within limit")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TelemetryPayload {
    /// Centi-degrees Celsius per zone.
    pub zone_centi: [i16; 3],
    pub battery_mv: u16,
    pub mode: u8,
    pub fault_flags: u8,
}

impl TelemetryPayload {
    pub fn from_celsius(temps: [f64; 3], battery_mv: u16, mode: Mode, fault: FaultCode) -> Self {
        Self { zone_centi: temps.map(celsius_to_centi), battery_mv, mode: mode as u8, fault_flags: fault.flag() }
    }

    pub fn zone_temps_c(&self) -> [f64; 3] {
        self.zone_centi.map(|c| f64::from(c) / 100.0)
    }

    pub fn to_bytes(&self) -> [u8; TELEMETRY_LEN] {
        let mut out = [0u8; TELEMETRY_LEN];
        for (i, c) in self.zone_centi.iter().enumerate() {
            out[2 * i..2 * i + 2].copy_from_slice(&c.to_be_bytes());
        }
        out[6..8].copy_from_slice(&self.battery_mv.to_be_bytes());
        out[8] = self.mode;
        out[9] = self.fault_flags;
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ProtocolError> {
        if b.len() != TELEMETRY_LEN {
            return Err(ProtocolError::BadPayload(FrameType::Telemetry));
        }
        let word = |i: usize| [b[i], b[i + 1]];
        Ok(Self {
            zone_centi: [0, 2, 4].map(|i| i16::from_be_bytes(word(i))),
            battery_mv: u16::from_be_bytes(word(6)),
            mode: b[8],
            fault_flags: b[9],
        })
    }
}

/// Round to 0.01 °C, saturating at the i16 range.
pub fn celsius_to_centi(t: f64) -> i16 {
    let c = (t * 100.0).round();
    if c.is_nan() {
        0
    } else {
        c.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
    }
}

fn check_password(password: &[u8]) -> Result<(), ProtocolError> {
    if password.is_empty() || password.len() > MAX_PASSWORD_LEN {
        Err(ProtocolError::PasswordLength(password.len()))
    } else {
        Ok(())
    }
}

/// AUTH_REQ carrying the password in clear: `[len][password, zero padded to 16]`.
pub fn make_auth(password: &str) -> Result<Frame, ProtocolError> {
    let bytes = password.as_bytes();
    check_password(bytes)?;
    let mut payload = vec![0u8; 1 + MAX_PASSWORD_LEN];
    payload[0] = bytes.len() as u8;
    payload[1..1 + bytes.len()].copy_from_slice(bytes);
    Frame::new(FrameType::AuthReq, payload)
}

/// The pairing secret held by the device.
#[derive(Clone, PartialEq, Eq)]
pub struct PasswordStore {
    secret: Vec<u8>,
}

impl std::fmt::Debug for PasswordStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PasswordStore(..)")
    }
}

impl PasswordStore {
    pub fn new(password: &str) -> Result<Self, ProtocolError> {
        check_password(password.as_bytes())?;
        Ok(Self { secret: password.as_bytes().to_vec() })
    }

    pub fn verify(&self, frame: &Frame) -> bool {
        verify_auth(frame, self)
    }
}

/// Compare the claimed password with the stored one. Every byte position
/// is visited regardless of where the first mismatch is.
pub fn verify_auth(frame: &Frame, stored: &PasswordStore) -> bool {
    if frame.frame_type != FrameType::AuthReq {
        return false;
    }
    let claimed_len = usize::from(frame.payload[0]);
    let claimed = &frame.payload[1..];
    let mut diff = u8::from(claimed_len != stored.secret.len());
    for (i, c) in claimed.iter().enumerate() {
        diff |= c ^ stored.secret.get(i).copied().unwrap_or(0);
    }
    diff == 0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeErrors {
    pub checksum: usize,
    /// Unknown type, or a length that disagrees with the type.
    pub bad_header: usize,
    /// Partial frame left when the stream was closed.
    pub truncated: usize,
}

impl DecodeErrors {
    pub fn total(&self) -> usize {
        self.checksum + self.bad_header + self.truncated
    }

    fn add(&mut self, other: &DecodeErrors) {
        self.checksum += other.checksum;
        self.bad_header += other.bad_header;
        self.truncated += other.truncated;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decoded {
    pub frames: Vec<Frame>,
    /// Offset of each frame's SOF in the input buffer.
    pub offsets: Vec<usize>,
    /// Unconsumed tail that may begin a frame; at most `MAX_FRAME_LEN - 1` bytes.
    pub remainder: Vec<u8>,
    pub errors: DecodeErrors,
}

/// Scan `buf` for frames. Bytes before a SOF are skipped; a bad header or
/// checksum discards the SOF and resynchronises on the next one.
pub fn decode_stream(buf: &[u8]) -> Decoded {
    let mut out = Decoded::default();
    let mut i = 0;
    while i < buf.len() {
        if buf[i] != SOF {
            i += 1;
            continue;
        }
        if buf.len() - i < 3 {
            break;
        }
        let type_byte = buf[i + 1];
        let len = usize::from(buf[i + 2]);
        let frame_type = match FrameType::from_byte(type_byte) {
            Some(t) if t.payload_len() == len => t,
            _ => {
                out.errors.bad_header += 1;
                i += 1;
                continue;
            }
        };
        let end = i + 3 + len;
        if end >= buf.len() {
            break;
        }
        let payload = &buf[i + 3..end];
        if checksum(type_byte, payload) != buf[end] {
            out.errors.checksum += 1;
            i += 1;
            continue;
        }
        out.frames.push(Frame { frame_type, payload: payload.to_vec() });
        out.offsets.push(i);
        i = end + 1;
    }
    out.remainder = buf[i.min(buf.len())..].to_vec();
    out
}

/// Incremental decoder for a byte stream arriving in arbitrary chunks.
#[derive(Debug, Default, Clone)]
pub struct StreamDecoder {
    pending: Vec<u8>,
    errors: DecodeErrors,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Frame> {
        self.pending.extend_from_slice(bytes);
        let decoded = decode_stream(&self.pending);
        self.errors.add(&decoded.errors);
        self.pending = decoded.remainder;
        debug_assert!(self.pending.len() < MAX_FRAME_LEN);
        decoded.frames
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn buffered(&self) -> usize {
        self.pending.len()
    }

    pub fn errors(&self) -> DecodeErrors {
        self.errors
    }

    /// Close the stream, counting a dangling partial frame as truncated.
    pub fn finish(&mut self) -> DecodeErrors {
        if self.pending.first() == Some(&SOF) {
            self.errors.truncated += 1;
        }
        self.pending.clear();
        self.errors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heartbeat_bytes() {
        assert_eq!(encode_frame(&Frame::heartbeat()), vec![0xAA, 0x05, 0x00, 0x05]);
    }

    #[test]
    fn set_level_high_bytes() {
        assert_eq!(encode_frame(&Frame::set_level(Level::High)), vec![0xAA, 0x03, 0x01, 0x03, 0x01]);
    }

    #[test]
    fn telemetry_bytes() {
        let t = TelemetryPayload::from_celsius([41.0, 41.2, 40.8], 11_800, Mode::Heating, FaultCode::None);
        let payload = [0x10, 0x04, 0x10, 0x18, 0x0F, 0xF0, 0x2E, 0x18, 0x03, 0x00];
        assert_eq!(t.to_bytes(), payload);
        // Oracle: XOR by hand of 0x04, 0x0A and the ten payload bytes.
        let mut x = 0x04u8 ^ 0x0A;
        for b in payload {
            x ^= b;
        }
        let mut expected = vec![0xAA, 0x04, 0x0A];
        expected.extend_from_slice(&payload);
        expected.push(x);
        assert_eq!(encode_frame(&Frame::telemetry(&t)), expected);
        assert_eq!(t.zone_temps_c(), [41.0, 41.2, 40.8]);
    }

    #[test]
    fn negative_temperatures_survive() {
        let t = TelemetryPayload::from_celsius([-12.34, 0.0, 327.67], 9000, Mode::Idle, FaultCode::None);
        let back = TelemetryPayload::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back.zone_temps_c(), [-12.34, 0.0, 327.67]);
        assert_eq!(celsius_to_centi(400.0), i16::MAX);
        assert_eq!(celsius_to_centi(-400.0), i16::MIN);
    }

    #[test]
    fn oversize_payload_is_rejected() {
        assert_eq!(encode_raw(0x05, &[0; 33]), Err(ProtocolError::Oversize(33)));
        assert!(encode_raw(0x05, &[0; 32]).is_ok());
        assert!(matches!(Frame::new(FrameType::Heartbeat, vec![1]), Err(ProtocolError::PayloadLength { .. })));
    }

    #[test]
    fn resync_after_bad_checksum() {
        let d = decode_stream(&[0xAA, 0x05, 0x00, 0x04, 0xAA, 0x05, 0x00, 0x05]);
        assert_eq!(d.errors.checksum, 1);
        assert_eq!(d.frames, vec![Frame::heartbeat()]);
        assert!(d.remainder.is_empty());
    }

    #[test]
    fn partial_frame_is_kept_as_remainder() {
        let bytes = encode_frame(&Frame::set_level(Level::Low));
        let d = decode_stream(&bytes[..3]);
        assert!(d.frames.is_empty());
        assert_eq!(d.remainder, bytes[..3].to_vec());

        let mut dec = StreamDecoder::new();
        assert!(dec.push(&bytes[..2]).is_empty());
        assert_eq!(dec.push(&bytes[2..]), vec![Frame::set_level(Level::Low)]);
        assert!(dec.push(&bytes[..4]).is_empty());
        assert_eq!(dec.finish().truncated, 1);
    }

    #[test]
    fn wrong_length_for_type_is_a_header_error() {
        let raw = encode_raw(FrameType::Heartbeat as u8, &[0x01]).unwrap();
        let d = decode_stream(&raw);
        assert!(d.frames.is_empty());
        assert_eq!(d.errors.bad_header, 1);
    }

    #[test]
    fn auth() {
        let store = PasswordStore::new("mima1234").unwrap();
        assert!(verify_auth(&make_auth("mima1234").unwrap(), &store));
        assert!(!verify_auth(&make_auth("mima1235").unwrap(), &store));
        assert!(!verify_auth(&make_auth("mima123").unwrap(), &store));
        assert!(!verify_auth(&make_auth("mima12345").unwrap(), &store));
        assert!(!verify_auth(&Frame::heartbeat(), &store));
        assert_eq!(make_auth(&"x".repeat(17)), Err(ProtocolError::PasswordLength(17)));
        assert_eq!(make_auth(""), Err(ProtocolError::PasswordLength(0)));
        assert!(make_auth(&"x".repeat(16)).is_ok());
    }

    #[test]
    fn forged_length_byte_with_matching_padding_is_rejected() {
        let store = PasswordStore::new("abc").unwrap();
        let mut payload = vec![0u8; 17];
        payload[0] = 4;
        payload[1..4].copy_from_slice(b"abc");
        let f = Frame::new(FrameType::AuthReq, payload).unwrap();
        assert!(!verify_auth(&f, &store));
    }
}
