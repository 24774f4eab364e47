use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, CLS, PAD, SEP};
use super::MiniMcqError;

/// `[CLS] question [SEP] choice [SEP]` followed by PAD up to the requested length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSequence {
    pub token_ids: Vec<u32>,
    /// 1 on real tokens, 0 on PAD.
    pub attention_mask: Vec<u8>,
}

impl PairSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of non-PAD positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|m| **m == 1).count()
    }

    /// The same sequence with `extra` PAD positions appended.
    pub fn padded(&self, extra: usize) -> PairSequence {
        let mut out = self.clone();
        out.token_ids.extend(std::iter::repeat_n(PAD, extra));
        out.attention_mask.extend(std::iter::repeat_n(0, extra));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Question,
    Choice,
}

/// Builds the pair sequence, truncating longest-first when the two segments
/// do not fit. Ties trim the question; the choice never drops to zero tokens.
pub fn encode_pair(question: &str, choice: &str, vocab: &Vocabulary, max_len: usize) -> Result<PairSequence, MiniMcqError> {
    let mut q = vocab.encode(question);
    let mut c = vocab.encode(choice);
    if q.is_empty() {
        return Err(MiniMcqError::EmptySegment(Segment::Question));
    }
    if c.is_empty() {
        return Err(MiniMcqError::EmptySegment(Segment::Choice));
    }
    let budget = max_len.saturating_sub(3);
    if budget == 0 {
        return Err(MiniMcqError::ChoiceTruncatedAway { max_len });
    }
    while q.len() + c.len() > budget {
        if q.len() >= c.len() {
            q.pop();
        } else {
            c.pop();
        }
    }

    let mut token_ids = Vec::with_capacity(max_len);
    token_ids.push(CLS);
    token_ids.extend_from_slice(&q);
    token_ids.push(SEP);
    token_ids.extend_from_slice(&c);
    token_ids.push(SEP);
    let real = token_ids.len();
    token_ids.resize(max_len, PAD);
    let mut attention_mask = vec![1u8; real];
    attention_mask.resize(max_len, 0);
    Ok(PairSequence { token_ids, attention_mask })
}
