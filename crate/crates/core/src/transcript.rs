//! Byte-exact capture of one session's public-channel traffic.
//!
//! Binary layout (all integers big-endian):
//!
//! ```text
//! "TSCR" | version u8 | scheme u8 | session u64 | seed u64 | count u32
//! count × ( direction u8 | captured_at u64 | len u32 | bytes )
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{BaselineLoginMessage, BaselineReplyMessage};
use crate::crypto::{Field128, Timestamp};
use crate::improved::{ImprovedLoginMessage, ImprovedReplyMessage};
use crate::scheme::{AuthError, Scheme, WireMessage};

const MAGIC: &[u8; 4] = b"TSCR";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("transcript truncated at byte {0}")]
    Truncated(usize),
    #[error("bad transcript header at byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },
    #[error("unknown field '{0}'")]
    UnknownField(String),
    #[error("transcript has no {0} message")]
    MissingMessage(&'static str),
    #[error(transparent)]
    Message(#[from] AuthError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    UserToServer,
    ServerToUser,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRecord {
    pub direction: Direction,
    pub captured_at: Timestamp,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub session: u64,
    pub scheme: Scheme,
    /// Seed of the generator that drove the session.
    pub seed: u64,
    pub records: Vec<WireRecord>,
}

impl Transcript {
    pub fn new(session: u64, scheme: Scheme, seed: u64) -> Self {
        Transcript { session, scheme, seed, records: Vec::new() }
    }

    pub fn push(&mut self, direction: Direction, captured_at: Timestamp, bytes: &[u8]) {
        self.records.push(WireRecord { direction, captured_at, bytes: bytes.to_vec() });
    }

    fn first(&self, direction: Direction) -> Option<&WireRecord> {
        self.records.iter().find(|r| r.direction == direction)
    }

    pub fn login_bytes(&self) -> Option<&[u8]> {
        self.first(Direction::UserToServer).map(|r| r.bytes.as_slice())
    }

    pub fn reply_bytes(&self) -> Option<&[u8]> {
        self.first(Direction::ServerToUser).map(|r| r.bytes.as_slice())
    }

    pub fn baseline_messages(&self) -> Result<(BaselineLoginMessage, BaselineReplyMessage), TranscriptError> {
        let login = self.login_bytes().ok_or(TranscriptError::MissingMessage("login"))?;
        let reply = self.reply_bytes().ok_or(TranscriptError::MissingMessage("reply"))?;
        Ok((BaselineLoginMessage::from_bytes(login)?, BaselineReplyMessage::from_bytes(reply)?))
    }

    pub fn improved_messages(&self) -> Result<(ImprovedLoginMessage, ImprovedReplyMessage), TranscriptError> {
        let login = self.login_bytes().ok_or(TranscriptError::MissingMessage("login"))?;
        let reply = self.reply_bytes().ok_or(TranscriptError::MissingMessage("reply"))?;
        Ok((ImprovedLoginMessage::from_bytes(login)?, ImprovedReplyMessage::from_bytes(reply)?))
    }

    /// Copy of this transcript with `mask` XORed into the named field of
    /// the first message that carries it.
    pub fn tamper(&self, field: &str, mask: Field128) -> Result<Transcript, TranscriptError> {
        let (direction, offset) = locate_field(self.scheme, field)?;
        let mut out = self.clone();
        let rec = out
            .records
            .iter_mut()
            .find(|r| r.direction == direction)
            .ok_or(TranscriptError::MissingMessage("tampered"))?;
        apply_mask(&mut rec.bytes, offset, mask)?;
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(scheme_tag(self.scheme));
        out.extend_from_slice(&self.session.to_be_bytes());
        out.extend_from_slice(&self.seed.to_be_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_be_bytes());
        for r in &self.records {
            out.push(match r.direction {
                Direction::UserToServer => 0,
                Direction::ServerToUser => 1,
            });
            out.extend_from_slice(&r.captured_at.0.to_be_bytes());
            out.extend_from_slice(&(r.bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&r.bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TranscriptError> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(TranscriptError::BadHeader { offset: 0, reason: "bad magic".into() });
        }
        let version = rd.u8()?;
        if version != VERSION {
            return Err(TranscriptError::BadHeader { offset: 4, reason: format!("version {version}") });
        }
        let scheme = match rd.u8()? {
            0 => Scheme::Baseline,
            1 => Scheme::Improved,
            t => return Err(TranscriptError::BadHeader { offset: 5, reason: format!("scheme tag {t}") }),
        };
        let session = rd.u64()?;
        let seed = rd.u64()?;
        let count = rd.u32()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let at = rd.pos;
            let direction = match rd.u8()? {
                0 => Direction::UserToServer,
                1 => Direction::ServerToUser,
                d => return Err(TranscriptError::BadHeader { offset: at, reason: format!("direction {d}") }),
            };
            let captured_at = Timestamp(rd.u64()?);
            let len = rd.u32()? as usize;
            let bytes = rd.take(len)?.to_vec();
            records.push(WireRecord { direction, captured_at, bytes });
        }
        if rd.pos != bytes.len() {
            return Err(TranscriptError::BadHeader { offset: rd.pos, reason: "trailing bytes".into() });
        }
        Ok(Transcript { session, scheme, seed, records })
    }
}

/// Direction and byte offset of a named wire field.
pub fn locate_field(scheme: Scheme, field: &str) -> Result<(Direction, usize), TranscriptError> {
    let found = match scheme {
        Scheme::Baseline => BaselineLoginMessage::offset_of(field)
            .map(|o| (Direction::UserToServer, o))
            .or_else(|| BaselineReplyMessage::offset_of(field).map(|o| (Direction::ServerToUser, o))),
        Scheme::Improved => ImprovedLoginMessage::offset_of(field)
            .map(|o| (Direction::UserToServer, o))
            .or_else(|| ImprovedReplyMessage::offset_of(field).map(|o| (Direction::ServerToUser, o))),
    };
    found.ok_or_else(|| TranscriptError::UnknownField(field.to_string()))
}

/// All wire field names of a scheme, login message first.
pub fn wire_fields(scheme: Scheme) -> Vec<&'static str> {
    match scheme {
        Scheme::Baseline => [BaselineLoginMessage::FIELDS, BaselineReplyMessage::FIELDS].concat(),
        Scheme::Improved => [ImprovedLoginMessage::FIELDS, ImprovedReplyMessage::FIELDS].concat(),
    }
}

pub(crate) fn apply_mask(bytes: &mut [u8], offset: usize, mask: Field128) -> Result<(), TranscriptError> {
    let slot = bytes
        .get_mut(offset..offset + Field128::BYTES)
        .ok_or(TranscriptError::Truncated(offset))?;
    for (b, m) in slot.iter_mut().zip(mask.as_bytes()) {
        *b ^= m;
    }
    Ok(())
}

fn scheme_tag(s: Scheme) -> u8 {
    match s {
        Scheme::Baseline => 0,
        Scheme::Improved => 1,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TranscriptError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(TranscriptError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TranscriptError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, TranscriptError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TranscriptError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::crypto::encode_hex(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        crate::crypto::decode_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Transcript {
        let mut t = Transcript::new(3, Scheme::Baseline, 77);
        let login = BaselineLoginMessage {
            nid: Field128::from_u128(1),
            a1: Field128::from_u128(2),
            c_i: Field128::from_u128(3),
            t1: Field128::from_u128(4),
        };
        let reply = BaselineReplyMessage {
            cs: Field128::from_u128(5),
            a4: Field128::from_u128(6),
            t3: Field128::from_u128(7),
        };
        t.push(Direction::UserToServer, Timestamp(10), &login.to_bytes());
        t.push(Direction::ServerToUser, Timestamp(20), &reply.to_bytes());
        t
    }

    #[test]
    fn zero_mask_is_identity() {
        let t = sample();
        assert_eq!(t.tamper("C_i", Field128::ZERO).unwrap(), t);
    }

    #[test]
    fn tamper_hits_the_named_field_only() {
        let t = sample();
        let mask = Field128::from_u128(0x80);
        let (login, reply) = t.tamper("A4", mask).unwrap().baseline_messages().unwrap();
        let (l0, r0) = t.baseline_messages().unwrap();
        assert_eq!(login, l0);
        assert_eq!(reply.a4, r0.a4 ^ mask);
        assert_eq!(reply.cs, r0.cs);
        assert!(matches!(t.tamper("nope", mask), Err(TranscriptError::UnknownField(_))));
    }

    #[test]
    fn captured_bytes_reparse() {
        let t = sample();
        let (login, _) = t.baseline_messages().unwrap();
        assert_eq!(login.c_i, Field128::from_u128(3));
    }

    #[test]
    fn corrupt_files_are_reported() {
        let bytes = sample().to_bytes();
        assert!(matches!(Transcript::from_bytes(&bytes[..bytes.len() - 1]), Err(TranscriptError::Truncated(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Transcript::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Transcript::from_bytes(&long).is_err());
    }

    #[test]
    fn field_lists() {
        assert_eq!(wire_fields(Scheme::Baseline).len(), 7);
        assert_eq!(wire_fields(Scheme::Improved).len(), 8);
        assert_eq!(locate_field(Scheme::Improved, "Q2").unwrap(), (Direction::ServerToUser, 48));
    }

    proptest! {
        #[test]
        fn binary_round_trip(session: u64, seed: u64, recs in proptest::collection::vec((any::<bool>(), any::<u64>(), proptest::collection::vec(any::<u8>(), 0..80)), 0..5)) {
            let mut t = Transcript::new(session, Scheme::Improved, seed);
            for (dir, at, bytes) in &recs {
                let d = if *dir { Direction::UserToServer } else { Direction::ServerToUser };
                t.push(d, Timestamp(*at), bytes);
            }
            prop_assert_eq!(Transcript::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
