//! Cluster provenance carried inside rendered text as zero-width characters.
//!
//! A payload `cluster:choice.choice...` is written as bits (U+200B = 0,
//! U+200C = 1, eight per byte) between two U+2060 delimiters. Tokenizers in
//! this crate drop these characters, so the student never sees them.

use crate::text::is_invisible;

const DELIM: char = '\u{2060}';
const ZERO: char = '\u{200B}';
const ONE: char = '\u{200C}';

/// Which cluster a rendered sample came from and which word each slot drew.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Realization {
    pub cluster: usize,
    pub choices: Vec<usize>,
}

pub fn encode(r: &Realization) -> String {
    let payload = format!("{}:{}", r.cluster, r.choices.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("."));
    let mut out = String::with_capacity(2 + payload.len() * 8 * 3);
    out.push(DELIM);
    for byte in payload.bytes() {
        for bit in (0..8).rev() {
            out.push(if byte >> bit & 1 == 1 { ONE } else { ZERO });
        }
    }
    out.push(DELIM);
    out
}

fn decode_payload(bits: &[bool]) -> Option<Realization> {
    if bits.is_empty() || !bits.len().is_multiple_of(8) {
        return None;
    }
    let bytes: Vec<u8> = bits.chunks(8).map(|c| c.iter().fold(0u8, |acc, &b| acc << 1 | b as u8)).collect();
    let payload = String::from_utf8(bytes).ok()?;
    let (cluster, rest) = payload.split_once(':')?;
    let choices = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split('.').map(|c| c.parse().ok()).collect::<Option<Vec<usize>>>()?
    };
    Some(Realization { cluster: cluster.parse().ok()?, choices })
}

/// Every well-formed fingerprint in `text`, in order of appearance.
pub fn decode_all(text: &str) -> Vec<Realization> {
    let mut found = Vec::new();
    let mut bits: Option<Vec<bool>> = None;
    for c in text.chars().filter(|&c| is_invisible(c)) {
        match (c, bits.as_mut()) {
            (DELIM, None) => bits = Some(Vec::new()),
            (DELIM, Some(b)) => {
                if let Some(r) = decode_payload(b) {
                    found.push(r);
                }
                bits = None;
            }
            (ZERO, Some(b)) => b.push(false),
            (ONE, Some(b)) => b.push(true),
            _ => {}
        }
    }
    found
}

pub fn decode_first(text: &str) -> Option<Realization> {
    decode_all(text).into_iter().next()
}
