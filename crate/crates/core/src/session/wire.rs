//! Frame layout: `[u8 type][u32 payload length][payload]`, big-endian.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use serde::Serialize;

use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::timing::{pack_bits, unpack_bits};

pub const HEADER_LEN: usize = 5;
pub const TAG_LEN: usize = 16;
/// Direction byte plus a 7-byte counter.
pub const EXPLICIT_NONCE_LEN: usize = 8;
pub const MAX_COUNTER: u64 = (1 << 56) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[repr(u8)]
pub enum FrameType {
    Hello = 1,
    Smp1 = 2,
    Smp2 = 3,
    Smp3 = 4,
    Smp4 = 5,
    Nonce = 6,
    Probe = 7,
    Echo = 8,
    Indices = 9,
    Parity = 10,
    Reveal = 11,
    Data = 12,
    Renew = 13,
    Term = 14,
}

impl FrameType {
    pub const ALL: [FrameType; 14] = [
        FrameType::Hello,
        FrameType::Smp1,
        FrameType::Smp2,
        FrameType::Smp3,
        FrameType::Smp4,
        FrameType::Nonce,
        FrameType::Probe,
        FrameType::Echo,
        FrameType::Indices,
        FrameType::Parity,
        FrameType::Reveal,
        FrameType::Data,
        FrameType::Renew,
        FrameType::Term,
    ];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| *t as u8 == v)
            .ok_or_else(|| Error::Malformed(format!("unknown frame type {v}")))
    }

    /// Probe and echo frames are timing datagrams: never retransmitted.
    pub fn is_datagram(self) -> bool {
        matches!(self, FrameType::Probe | FrameType::Echo)
    }

    /// Encrypted under RS3.
    pub fn is_sealed(self) -> bool {
        matches!(self, FrameType::Reveal | FrameType::Data | FrameType::Renew | FrameType::Term)
    }

    /// RSA-encrypted to the peer's ephemeral key.
    pub fn is_asym(self) -> bool {
        matches!(self, FrameType::Smp1 | FrameType::Smp2 | FrameType::Smp3 | FrameType::Smp4 | FrameType::Nonce)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameType, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes exactly one frame.
    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        let (f, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Malformed(format!("{} trailing bytes after frame", bytes.len() - used)));
        }
        Ok(f)
    }

    /// Decodes the frame at the start of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Frame, usize)> {
        let mut r = Reader::new(bytes);
        let kind = FrameType::from_u8(r.u8()?)?;
        let len = r.u32()? as usize;
        let payload = r.take(len)?.to_vec();
        Ok((Frame { kind, payload }, HEADER_LEN + len))
    }
}

pub fn probe_payload(id: u32) -> Vec<u8> {
    id.to_be_bytes().to_vec()
}

pub fn parse_probe(payload: &[u8]) -> Result<u32> {
    let mut r = Reader::new(payload);
    let id = r.u32()?;
    r.finish()?;
    Ok(id)
}

/// Kept probe ids as a bitmap over `first_id..first_id + n_probes`.
/// `n_probes == 0` signals that the sender gave up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicesMsg {
    pub first_id: u32,
    pub n_probes: u32,
    pub kept: Vec<u32>,
}

impl IndicesMsg {
    pub fn give_up() -> Self {
        IndicesMsg { first_id: 0, n_probes: 0, kept: Vec::new() }
    }

    pub fn is_give_up(&self) -> bool {
        self.n_probes == 0
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut flags = vec![false; self.n_probes as usize];
        for &id in &self.kept {
            let off = id
                .checked_sub(self.first_id)
                .filter(|&o| o < self.n_probes)
                .ok_or_else(|| Error::Internal(format!("probe id {id} outside announced range")))?;
            flags[off as usize] = true;
        }
        let mut out = Vec::new();
        out.extend_from_slice(&self.first_id.to_be_bytes());
        out.extend_from_slice(&self.n_probes.to_be_bytes());
        out.extend_from_slice(&pack_bits(&flags));
        Ok(out)
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        let mut r = Reader::new(payload);
        let first_id = r.u32()?;
        let n_probes = r.u32()?;
        if first_id.checked_add(n_probes).is_none() {
            return Err(Error::Malformed("probe id range overflows".into()));
        }
        let flags = unpack_bits(r.rest(), n_probes as usize)?;
        let kept = flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| first_id + i as u32).collect();
        Ok(IndicesMsg { first_id, n_probes, kept })
    }
}

pub fn parity_payload(parities: &[bool]) -> Vec<u8> {
    let mut out = (parities.len() as u32).to_be_bytes().to_vec();
    out.extend_from_slice(&pack_bits(parities));
    out
}

pub fn parse_parity(payload: &[u8]) -> Result<Vec<bool>> {
    let mut r = Reader::new(payload);
    let n = r.u32()? as usize;
    unpack_bits(r.rest(), n)
}

/// Sender side of a sealed channel direction.
pub const DIR_INITIATOR: u8 = 0;
pub const DIR_RESPONDER: u8 = 1;

fn full_nonce(explicit: &[u8; EXPLICIT_NONCE_LEN]) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[4..].copy_from_slice(explicit);
    n
}

pub fn explicit_nonce(direction: u8, counter: u64) -> Result<[u8; EXPLICIT_NONCE_LEN]> {
    if counter > MAX_COUNTER {
        return Err(Error::Internal("sealed-frame counter exhausted".into()));
    }
    let mut n = [0u8; EXPLICIT_NONCE_LEN];
    n[0] = direction;
    n[1..].copy_from_slice(&counter.to_be_bytes()[1..]);
    Ok(n)
}

/// `[direction ∥ 7-byte counter][ciphertext ∥ tag]`; the frame type is the
/// associated data.
pub fn seal(key: &[u8], kind: FrameType, direction: u8, counter: u64, plaintext: &[u8]) -> Result<Vec<u8>> {
    let explicit = explicit_nonce(direction, counter)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    let ct = cipher
        .encrypt(Nonce::from_slice(&full_nonce(&explicit)), Payload { msg: plaintext, aad: &[kind as u8] })
        .map_err(|_| Error::Internal("seal failed".into()))?;
    let mut out = explicit.to_vec();
    out.extend_from_slice(&ct);
    Ok(out)
}

/// Sealed payload after authentication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Opened {
    pub direction: u8,
    pub counter: u64,
    pub plaintext: Vec<u8>,
}

pub fn open(key: &[u8], kind: FrameType, payload: &[u8]) -> Result<Opened> {
    if payload.len() < EXPLICIT_NONCE_LEN + TAG_LEN {
        return Err(Error::FrameRejected("sealed payload too short".into()));
    }
    let explicit: [u8; EXPLICIT_NONCE_LEN] = payload[..EXPLICIT_NONCE_LEN].try_into().expect("length checked");
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    let plaintext = cipher
        .decrypt(
            Nonce::from_slice(&full_nonce(&explicit)),
            Payload { msg: &payload[EXPLICIT_NONCE_LEN..], aad: &[kind as u8] },
        )
        .map_err(|_| Error::FrameRejected("authentication tag mismatch".into()))?;
    let mut c = [0u8; 8];
    c[1..].copy_from_slice(&explicit[1..]);
    Ok(Opened { direction: explicit[0], counter: u64::from_be_bytes(c), plaintext })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_and_layout() {
        let f = Frame::new(FrameType::Probe, probe_payload(0x0102_0304));
        let b = f.encode();
        assert_eq!(b, vec![7, 0, 0, 0, 4, 1, 2, 3, 4]);
        assert_eq!(Frame::decode(&b).unwrap(), f);
        assert!(Frame::decode(&b[..8]).is_err());
        assert!(Frame::decode(&[0, 0, 0, 0, 0]).is_err());
        assert!(Frame::decode(&[15, 0, 0, 0, 0]).is_err());
        let mut two = b.clone();
        two.extend_from_slice(&b);
        assert!(Frame::decode(&two).is_err());
        assert_eq!(Frame::decode_prefix(&two).unwrap().1, 9);
    }

    #[test]
    fn type_codes() {
        for (i, t) in FrameType::ALL.iter().enumerate() {
            assert_eq!(*t as u8, i as u8 + 1);
            assert_eq!(FrameType::from_u8(i as u8 + 1).unwrap(), *t);
        }
    }

    #[test]
    fn indices_round_trip() {
        let m = IndicesMsg { first_id: 1000, n_probes: 13, kept: vec![1000, 1003, 1012] };
        let p = m.encode().unwrap();
        assert_eq!(p.len(), 8 + 2);
        assert_eq!(IndicesMsg::decode(&p).unwrap(), m);
        let bad = IndicesMsg { first_id: 1000, n_probes: 13, kept: vec![999] };
        assert!(bad.encode().is_err());
        let g = IndicesMsg::decode(&IndicesMsg::give_up().encode().unwrap()).unwrap();
        assert!(g.is_give_up());
    }

    #[test]
    fn parity_round_trip() {
        let p = vec![true, false, true, true, false, false, false, false, true];
        assert_eq!(parse_parity(&parity_payload(&p)).unwrap(), p);
    }

    #[test]
    fn seal_open() {
        let key = [7u8; 32];
        let s = seal(&key, FrameType::Data, DIR_RESPONDER, 5, b"hi").unwrap();
        assert_eq!(s.len(), 8 + 2 + TAG_LEN);
        assert_eq!(&s[..8], &[1, 0, 0, 0, 0, 0, 0, 5]);
        let o = open(&key, FrameType::Data, &s).unwrap();
        assert_eq!((o.direction, o.counter, o.plaintext.as_slice()), (1, 5, &b"hi"[..]));
        assert!(open(&key, FrameType::Term, &s).is_err());
        assert!(open(&[8u8; 32], FrameType::Data, &s).is_err());
        assert!(explicit_nonce(0, MAX_COUNTER + 1).is_err());
    }
}
