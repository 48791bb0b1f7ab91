use super::{BitStream, ModemError};

/// 8 bits per character, most significant bit first.
pub fn encode_ascii(text: &str) -> Result<BitStream, ModemError> {
    let mut bits = Vec::with_capacity(text.len() * 8);
    for (index, ch) in text.chars().enumerate() {
        if !ch.is_ascii() {
            return Err(ModemError::NonAscii { index, ch });
        }
        let byte = ch as u8;
        bits.extend((0..8).rev().map(|s| (byte >> s) & 1));
    }
    Ok(BitStream::from_bits(bits))
}

/// Pads every text with NUL to the longest length.
pub fn pad_messages<S: AsRef<str>>(texts: &[S]) -> Vec<String> {
    let longest = texts.iter().map(|t| t.as_ref().chars().count()).max().unwrap_or(0);
    texts
        .iter()
        .map(|t| {
            let t = t.as_ref();
            let mut s = t.to_owned();
            s.extend(std::iter::repeat_n('\0', longest - t.chars().count()));
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedText {
    pub text: String,
    /// Bits of a trailing partial byte that were dropped.
    pub dropped_bits: usize,
    /// Trailing NUL characters stripped as padding.
    pub padding_chars: usize,
}

/// Inverse of [`encode_ascii`]. Bytes above 127 (possible after bit errors)
/// decode to the Latin-1 character of the same code.
pub fn decode_ascii(bits: &[u8]) -> DecodedText {
    let chunks = bits.chunks_exact(8);
    let dropped_bits = chunks.remainder().len();
    let mut text: String = chunks.map(|c| char::from(c.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))).collect();
    let trimmed_len = text.trim_end_matches('\0').len();
    let padding_chars = text.len() - trimmed_len;
    text.truncate(trimmed_len);
    DecodedText {
        text,
        dropped_bits,
        padding_chars,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_a() {
        assert_eq!(encode_ascii("A").unwrap().bits, vec![0, 1, 0, 0, 0, 0, 0, 1]);
        assert_eq!(decode_ascii(&[0, 1, 0, 0, 0, 0, 0, 1]).text, "A");
    }

    #[test]
    fn empty_text() {
        assert!(encode_ascii("").unwrap().is_empty());
    }

    #[test]
    fn hundred_chars_is_800_bits() {
        let t = "x".repeat(100);
        assert_eq!(encode_ascii(&t).unwrap().len(), 800);
    }

    #[test]
    fn rejects_non_ascii() {
        assert_eq!(encode_ascii("aé"), Err(ModemError::NonAscii { index: 1, ch: 'é' }));
    }

    #[test]
    fn padding_rule() {
        assert_eq!(pad_messages(&["ab", "a"]), vec!["ab", "a\0"]);
        assert_eq!(pad_messages(&["ab", "cd"]), vec!["ab", "cd"]);
        assert_eq!(pad_messages(&["", "xy"]), vec!["\0\0", "xy"]);
    }

    #[test]
    fn partial_byte_dropped() {
        let mut bits = encode_ascii("A").unwrap().bits;
        bits.push(1);
        let d = decode_ascii(&bits);
        assert_eq!(d.text, "A");
        assert_eq!(d.dropped_bits, 1);
    }

    #[test]
    fn trailing_nul_is_padding() {
        let bits = encode_ascii("ab\0").unwrap().bits;
        let d = decode_ascii(&bits);
        assert_eq!(d.text, "ab");
        assert_eq!(d.padding_chars, 1);
    }
}
