//! Prompt instances: the hard template with mask slots, the request text,
//! a knowledge prefix and a frozen code-graph slot.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::ReviewRequest;
use crate::knowledge::{KnowledgePrefix, DEFAULT_PREFIX_LEN};
use crate::text::{is_special, tokenize, CLS, CODE, MASK, PAD, SEP, UNK};
use crate::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 300;
pub const DEFAULT_TAG_MASKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    #[serde(rename = "BOS")]
    Bos,
    Template,
    Title,
    Text,
    #[serde(rename = "SEP")]
    Sep,
    KnowledgePrefix,
    CodeGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub tokens: Vec<String>,
    pub trainable: bool,
    pub frozen: bool,
    /// Prefix slots past the knowledge text start from padding.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub uninitialized: bool,
    /// Content hash of the graph whose embedding fills the code slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_hash: Option<u64>,
}

impl Segment {
    fn plain(kind: SegmentKind, tokens: Vec<String>) -> Self {
        Segment {
            kind,
            tokens,
            trainable: false,
            frozen: false,
            uninitialized: false,
            graph_hash: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub segments: Vec<Segment>,
    pub mask_positions: Vec<usize>,
    pub tag_mask_count: usize,
    pub necessity_mask_index: usize,
}

impl PromptInstance {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.segments
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    /// Absolute token range of a segment.
    pub fn range(&self, kind: SegmentKind) -> Option<Range<usize>> {
        let mut start = 0;
        for s in &self.segments {
            if s.kind == kind {
                return Some(start..start + s.tokens.len());
            }
            start += s.tokens.len();
        }
        None
    }

    pub fn tag_mask_positions(&self) -> &[usize] {
        &self.mask_positions[..self.tag_mask_count]
    }

    /// Checks the structural invariants of an instance.
    pub fn validate(&self, max_len: usize) -> Result<()> {
        let len = self.len();
        if len > max_len {
            return Err(Error::invalid("prompt", alloc::format!("{len} tokens exceed {max_len}")));
        }
        if self.mask_positions.len() != self.tag_mask_count + 1 {
            return Err(Error::invalid("prompt", "mask count differs from tag masks + 1"));
        }
        if self.mask_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("prompt", "mask positions not increasing"));
        }
        if self.mask_positions.last() != Some(&self.necessity_mask_index) {
            return Err(Error::invalid("prompt", "necessity mask is not last"));
        }
        let tokens: Vec<&str> = self.tokens().collect();
        if self.mask_positions.iter().any(|&p| tokens.get(p) != Some(&MASK)) {
            return Err(Error::invalid("prompt", "mask position does not hold a mask"));
        }
        for s in &self.segments {
            let expect_trainable = s.kind == SegmentKind::KnowledgePrefix;
            let expect_frozen = s.kind == SegmentKind::CodeGraph;
            if s.trainable != expect_trainable || s.frozen != expect_frozen {
                return Err(Error::invalid("prompt", alloc::format!("bad flags on {:?}", s.kind)));
            }
        }
        Ok(())
    }
}

/// Template tokens with `tag_mask_count` label masks and one necessity
/// mask, ending in the guiding `request :` run that leads into the title.
pub fn build_template(tag_mask_count: usize) -> Result<Vec<String>> {
    if tag_mask_count == 0 {
        return Err(Error::invalid("tag_mask_count", "must be at least 1"));
    }
    let mut t = tokenize("The requested label is");
    t.extend(core::iter::repeat_n(String::from(MASK), tag_mask_count));
    t.extend(tokenize(". Is this request necessary for review ?"));
    t.push(MASK.into());
    t.extend(tokenize("Request :"));
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptLimits {
    pub max_len: usize,
    pub prefix_len: usize,
}

impl Default for PromptLimits {
    fn default() -> Self {
        PromptLimits {
            max_len: DEFAULT_MAX_LEN,
            prefix_len: DEFAULT_PREFIX_LEN,
        }
    }
}

fn request_tokens(s: &str) -> Vec<String> {
    tokenize(s)
        .into_iter()
        .map(|t| if is_special(&t) { UNK.into() } else { t })
        .collect()
}

/// Lays out one request as `[BOS, Template, Title, Text, SEP,
/// KnowledgePrefix, CodeGraph]`.
///
/// The prefix always occupies `prefix_len` slots and the code graph one.
/// When the whole does not fit in `max_len`, text is cut first, then title.
pub fn assemble_prompt(
    request: &ReviewRequest,
    template: &[String],
    prefix: &KnowledgePrefix,
    graph_hash: u64,
    limits: PromptLimits,
) -> Result<PromptInstance> {
    let masks: Vec<usize> = template
        .iter()
        .enumerate()
        .filter(|(_, t)| *t == MASK)
        .map(|(i, _)| i + 1)
        .collect();
    if masks.len() < 2 {
        return Err(Error::invalid("template", "needs at least one tag mask and a necessity mask"));
    }
    if limits.prefix_len == 0 {
        return Err(Error::invalid("prefix_len", "must be at least 1"));
    }
    let fixed = template.len() + 3 + limits.prefix_len;
    if fixed > limits.max_len {
        return Err(Error::invalid(
            "max_len",
            alloc::format!("{} cannot hold the {fixed} fixed tokens", limits.max_len),
        ));
    }
    let room = limits.max_len - fixed;
    let mut title = request_tokens(&request.title);
    let mut text = request_tokens(&request.text);
    title.truncate(room);
    text.truncate(room - title.len());

    let mut prefix_tokens: Vec<String> = prefix.tokens.iter().take(limits.prefix_len).cloned().collect();
    let uninitialized = prefix.uninitialized_tail || prefix_tokens.len() < limits.prefix_len;
    prefix_tokens.resize(limits.prefix_len, PAD.into());

    let segments = vec![
        Segment::plain(SegmentKind::Bos, vec![CLS.into()]),
        Segment::plain(SegmentKind::Template, template.to_vec()),
        Segment::plain(SegmentKind::Title, title),
        Segment::plain(SegmentKind::Text, text),
        Segment::plain(SegmentKind::Sep, vec![SEP.into()]),
        Segment {
            trainable: true,
            uninitialized,
            ..Segment::plain(SegmentKind::KnowledgePrefix, prefix_tokens)
        },
        Segment {
            frozen: true,
            graph_hash: Some(graph_hash),
            ..Segment::plain(SegmentKind::CodeGraph, vec![CODE.into()])
        },
    ];
    Ok(PromptInstance {
        segments,
        tag_mask_count: masks.len() - 1,
        necessity_mask_index: masks[masks.len() - 1],
        mask_positions: masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Necessity;

    fn request(title: &str, text: &str) -> ReviewRequest {
        ReviewRequest {
            id: 1,
            title: title.into(),
            text: text.into(),
            code_snippets: vec![],
            tags: vec![],
            score: 0,
            necessity: Necessity::Necessary,
        }
    }

    fn empty_prefix() -> KnowledgePrefix {
        KnowledgePrefix {
            tokens: vec![],
            uninitialized_tail: true,
        }
    }

    #[test]
    fn template_shape() {
        let t = build_template(3).unwrap();
        assert_eq!(
            t.join(" "),
            "the requested label is [MASK] [MASK] [MASK] . is this request necessary for review ? [MASK] request :"
        );
        assert_eq!(build_template(1).unwrap().iter().filter(|t| *t == MASK).count(), 2);
        assert!(build_template(0).is_err());
    }

    #[test]
    fn short_request_layout() {
        let t = build_template(3).unwrap();
        let p = assemble_prompt(&request("Slow loop", "Please help"), &t, &empty_prefix(), 7, PromptLimits::default()).unwrap();
        p.validate(300).unwrap();
        assert_eq!(p.mask_positions, [5, 6, 7, 16]);
        assert_eq!(p.len(), 1 + t.len() + 2 + 2 + 1 + 50 + 1);
        assert_eq!(p.range(SegmentKind::KnowledgePrefix).unwrap().len(), 50);
        assert!(p.segment(SegmentKind::KnowledgePrefix).unwrap().uninitialized);
    }

    #[test]
    fn text_truncated_before_title() {
        let t = build_template(3).unwrap();
        let long: String = (0..400).map(|i| alloc::format!("w{i} ")).collect();
        let p = assemble_prompt(&request("keep this title", &long), &t, &empty_prefix(), 0, PromptLimits::default()).unwrap();
        assert_eq!(p.len(), 300);
        assert_eq!(p.segment(SegmentKind::Title).unwrap().tokens.len(), 3);
        assert_eq!(p.segment(SegmentKind::Text).unwrap().tokens.len(), 300 - 3 - 71);
        p.validate(300).unwrap();
    }

    #[test]
    fn request_cannot_inject_masks() {
        let t = build_template(3).unwrap();
        let p = assemble_prompt(&request("[MASK]", "[SEP] x"), &t, &empty_prefix(), 0, PromptLimits::default()).unwrap();
        p.validate(300).unwrap();
        assert_eq!(p.segment(SegmentKind::Title).unwrap().tokens, [UNK]);
    }

    #[test]
    fn too_small_budget() {
        let t = build_template(3).unwrap();
        let limits = PromptLimits { max_len: 60, prefix_len: 50 };
        assert!(assemble_prompt(&request("a", "b"), &t, &empty_prefix(), 0, limits).is_err());
    }
}
