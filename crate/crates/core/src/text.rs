//! Whitespace tokenization used by the built-in backend.
//!
//! Input is split on whitespace; inside each chunk, runs of alphanumeric
//! characters (and `_`) form one lowercased token and every other character
//! becomes a token of its own. Bracketed special tokens such as `[MASK]`
//! pass through untouched.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub const MASK: &str = "[MASK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CODE: &str = "[CODE]";

pub const SPECIAL_TOKENS: [&str; 6] = [PAD, UNK, CLS, SEP, MASK, CODE];

pub fn is_special(token: &str) -> bool {
    SPECIAL_TOKENS.contains(&token)
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_special(chunk) {
            out.push(chunk.to_string());
            continue;
        }
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() || c == '_' {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(core::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}
