//! NMEA 0183 `!AIVDM` / `!AIVDO` sentence layer: checksum, field validation,
//! 6-bit payload armoring and multi-fragment reassembly.
//!
//! Accepted line shapes:
//!
//! ```text
//! !AIVDM,1,1,,B,177KQJ5000G?tO`K>RA1wUbN0TKH,0*5C
//! \s:rORBCOMM,c:1700000000*4E\!AIVDM,1,1,,B,...,0*5C     (tag block)
//! !AIVDM,1,1,,B,...,0*5C,1700000000                      (trailing epoch)
//! ```
//!
//! The receive time comes from the tag block `c:` parameter or the trailing
//! epoch column; position reports carry no date of their own.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// XOR of every byte between the leading `!`/`$`/`\` and the `*`.
pub fn checksum(body: &str) -> u8 {
    body.bytes().fold(0u8, |acc, b| acc ^ b)
}

fn armor_value(c: char) -> Option<u8> {
    match c as u32 {
        48..=87 => Some(c as u8 - 48),
        96..=119 => Some(c as u8 - 56),
        _ => None,
    }
}

fn armor_char(v: u8) -> char {
    debug_assert!(v < 64);
    if v < 40 {
        (v + 48) as char
    } else {
        (v + 56) as char
    }
}

/// Payload bits, most significant bit of each 6-bit symbol first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PayloadBits(Vec<bool>);

impl PayloadBits {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn uint(&self, start: usize, len: usize) -> Result<u32> {
        debug_assert!(len <= 32);
        let end = start + len;
        if end > self.0.len() {
            return Err(Error::Parse(format!(
                "payload has {} bits, field needs bits {start}..{end}",
                self.0.len()
            )));
        }
        Ok(self.0[start..end]
            .iter()
            .fold(0u32, |acc, &b| (acc << 1) | b as u32))
    }

    /// Two's-complement signed field.
    pub fn int(&self, start: usize, len: usize) -> Result<i32> {
        let raw = self.uint(start, len)?;
        let shift = 32 - len as u32;
        Ok(((raw << shift) as i32) >> shift)
    }
}

/// Expands armored payload characters into bits (no fill-bit trimming).
pub fn dearmor(payload: &str) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(payload.len() * 6);
    for c in payload.chars() {
        let v = armor_value(c).ok_or_else(|| Error::Parse(format!("invalid payload character {c:?}")))?;
        bits.extend((0..6).rev().map(|k| (v >> k) & 1 == 1));
    }
    Ok(bits)
}

/// Packs bits into armored characters, zero-padding the last symbol.
pub fn armor(bits: &[bool]) -> String {
    bits.chunks(6)
        .map(|chunk| {
            let v = (0..6).fold(0u8, |acc, k| {
                (acc << 1) | chunk.get(k).copied().unwrap_or(false) as u8
            });
            armor_char(v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub total: u8,
    pub index: u8,
    pub seq_id: Option<u8>,
    pub channel: Option<char>,
    pub payload: String,
    pub fill_bits: u8,
    /// Payload bits with fill bits removed.
    pub bits: PayloadBits,
    pub timestamp: Option<i64>,
}

fn split_checksum(s: &str) -> Result<(&str, u8, &str)> {
    let star = s
        .rfind('*')
        .ok_or_else(|| Error::Parse("missing '*' checksum delimiter".into()))?;
    let hex = s
        .get(star + 1..star + 3)
        .ok_or_else(|| Error::Parse("truncated checksum".into()))?;
    let expected =
        u8::from_str_radix(hex, 16).map_err(|_| Error::Parse(format!("invalid checksum digits {hex:?}")))?;
    if !hex
        .bytes()
        .all(|b| b.is_ascii_digit() || b.is_ascii_uppercase() || b.is_ascii_lowercase())
    {
        return Err(Error::Parse(format!("invalid checksum digits {hex:?}")));
    }
    Ok((&s[..star], expected, &s[star + 3..]))
}

fn parse_epoch(s: &str) -> Result<i64> {
    let v: i64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid epoch time {s:?}")))?;
    // millisecond stamps show up in some receiver logs
    Ok(if v > 100_000_000_000 { v / 1000 } else { v })
}

fn parse_tag_block(block: &str) -> Result<Option<i64>> {
    let (body, expected, rest) = split_checksum(block)?;
    if !rest.is_empty() {
        return Err(Error::Parse("trailing data inside tag block".into()));
    }
    let computed = checksum(body);
    if computed != expected {
        return Err(Error::Checksum { expected, computed });
    }
    let mut time = None;
    for param in body.split(',') {
        if let Some(v) = param.strip_prefix("c:") {
            time = Some(parse_epoch(v)?);
        }
    }
    Ok(time)
}

/// Validates one sentence and returns its fragment.
pub fn decode_nmea_line(line: &str) -> Result<Fragment> {
    let line = line.trim_end_matches(['\r', '\n']);
    let mut timestamp = None;
    let mut sentence = line;
    if let Some(rest) = line.strip_prefix('\\') {
        let end = rest
            .find('\\')
            .ok_or_else(|| Error::Parse("unterminated tag block".into()))?;
        timestamp = parse_tag_block(&rest[..end])?;
        sentence = &rest[end + 1..];
    }

    let body_and_sum = sentence
        .strip_prefix('!')
        .or_else(|| sentence.strip_prefix('$'))
        .ok_or_else(|| Error::Parse("sentence must start with '!'".into()))?;
    let (body, expected, trailer) = split_checksum(body_and_sum)?;
    let computed = checksum(body);
    if computed != expected {
        return Err(Error::Checksum { expected, computed });
    }
    if !trailer.is_empty() {
        let epoch = trailer
            .strip_prefix(',')
            .ok_or_else(|| Error::Parse(format!("unexpected data after checksum: {trailer:?}")))?;
        timestamp = Some(parse_epoch(epoch)?);
    }

    let fields: Vec<&str> = body.split(',').collect();
    let talker = fields[0];
    if !sentence.starts_with('!') || !(talker == "AIVDM" || talker == "AIVDO") {
        return Err(Error::UnsupportedSentence(talker.to_string()));
    }
    if fields.len() != 7 {
        return Err(Error::Parse(format!("expected 7 fields, got {}", fields.len())));
    }
    let total: u8 = fields[1]
        .parse()
        .map_err(|_| Error::Parse(format!("bad fragment count {:?}", fields[1])))?;
    let index: u8 = fields[2]
        .parse()
        .map_err(|_| Error::Parse(format!("bad fragment index {:?}", fields[2])))?;
    if !(1..=9).contains(&total) || index == 0 || index > total {
        return Err(Error::Parse(format!("fragment {index} of {total} is invalid")));
    }
    let seq_id = match fields[3] {
        "" => None,
        s => Some(
            s.parse::<u8>()
                .ok()
                .filter(|v| *v <= 9)
                .ok_or_else(|| Error::Parse(format!("bad sequence id {s:?}")))?,
        ),
    };
    let channel = match fields[4] {
        "" => None,
        "A" | "B" | "1" | "2" => fields[4].chars().next(),
        other => return Err(Error::Parse(format!("bad channel {other:?}"))),
    };
    let payload = fields[5];
    if payload.is_empty() {
        return Err(Error::Parse("empty payload".into()));
    }
    let fill_bits: u8 = fields[6]
        .parse()
        .ok()
        .filter(|v| *v <= 5)
        .ok_or_else(|| Error::Parse(format!("bad fill bits {:?}", fields[6])))?;
    let mut bits = dearmor(payload)?;
    if (fill_bits as usize) > bits.len() {
        return Err(Error::Parse("fill bits exceed payload".into()));
    }
    bits.truncate(bits.len() - fill_bits as usize);

    Ok(Fragment {
        total,
        index,
        seq_id,
        channel,
        payload: payload.to_string(),
        fill_bits,
        bits: PayloadBits(bits),
        timestamp,
    })
}

/// A complete message assembled from one or more fragments.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub bits: PayloadBits,
    pub channel: Option<char>,
    pub timestamp: Option<i64>,
}

struct Partial {
    total: u8,
    next: u8,
    payload: String,
    timestamp: Option<i64>,
}

/// Joins multi-sentence messages keyed by `(channel, sequence id)` within
/// one input stream.
#[derive(Default)]
pub struct Reassembler {
    pending: HashMap<(Option<char>, Option<u8>), Partial>,
    dropped: u64,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Partial messages abandoned so far (out-of-order or interrupted).
    pub fn dropped(&self) -> u64 {
        self.dropped + self.pending.len() as u64
    }

    pub fn push(&mut self, frag: Fragment) -> Result<Option<Assembled>> {
        if frag.total == 1 {
            return Ok(Some(Assembled {
                bits: frag.bits,
                channel: frag.channel,
                timestamp: frag.timestamp,
            }));
        }
        let key = (frag.channel, frag.seq_id);
        if frag.index == 1 {
            if self.pending.remove(&key).is_some() {
                self.dropped += 1;
            }
            self.pending.insert(
                key,
                Partial {
                    total: frag.total,
                    next: 2,
                    payload: frag.payload,
                    timestamp: frag.timestamp,
                },
            );
            return Ok(None);
        }
        let Some(mut partial) = self.pending.remove(&key) else {
            self.dropped += 1;
            return Ok(None);
        };
        if partial.total != frag.total || partial.next != frag.index {
            self.dropped += 1;
            return Ok(None);
        }
        partial.payload.push_str(&frag.payload);
        if frag.index < frag.total {
            partial.next += 1;
            self.pending.insert(key, partial);
            return Ok(None);
        }
        let mut bits = dearmor(&partial.payload)?;
        bits.truncate(bits.len().saturating_sub(frag.fill_bits as usize));
        Ok(Some(Assembled {
            bits: PayloadBits(bits),
            channel: frag.channel,
            timestamp: partial.timestamp.or(frag.timestamp),
        }))
    }
}
