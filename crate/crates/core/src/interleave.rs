//! Interleaved insertion-slot layouts.
//!
//! The layout places an explicit blank slot before each group of K content
//! tokens plus one terminal slot: K=1 gives (ε, x1, ε, x2, ..., ε, xN, ε),
//! which creates N+1 places to insert tokens without shifting the rest of
//! the sequence. Inputs shorter than a configured minimum are right-padded
//! with blank content groups so short utterances keep insertion capacity;
//! trailing padding keeps prefix positions stable.

use crate::{Error, Result, TokenId};

/// Default minimum number of content positions in a layout.
pub const MIN_INPUT_TOKENS: usize = 8;

/// A token layout with explicit insertion slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterleavedSequence {
    /// Content tokens and blanks, in layout order.
    pub tokens: Vec<TokenId>,
    /// One slot per `density` content tokens.
    pub density: usize,
    /// Number of content tokens before padding.
    pub source_len: usize,
    /// Content positions after padding (max(source_len, min_tokens)).
    pub padded_len: usize,
    pub blank: TokenId,
}

impl InterleavedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The original (unpadded) content tokens.
    pub fn content(&self) -> Vec<TokenId> {
        self.tokens
            .iter()
            .copied()
            .filter(|&t| t != self.blank)
            .take(self.source_len)
            .collect()
    }

    /// Maximum number of tokens a single insertion can add: one per slot,
    /// after shifting content into neighboring slots (padded_len + 1).
    pub fn insert_capacity(&self) -> usize {
        self.padded_len + 1
    }
}

/// Build the interleaved layout with the default minimum of 8 content
/// positions.
pub fn build_interleaved(
    tokens: &[TokenId],
    density: usize,
    blank: TokenId,
) -> Result<InterleavedSequence> {
    build_interleaved_with_min(tokens, density, blank, MIN_INPUT_TOKENS)
}

/// Build the interleaved layout, padding the content with trailing blank
/// groups up to `min_tokens` positions. `min_tokens == 0` disables padding
/// and yields the bare layout.
pub fn build_interleaved_with_min(
    tokens: &[TokenId],
    density: usize,
    blank: TokenId,
    min_tokens: usize,
) -> Result<InterleavedSequence> {
    if density == 0 {
        return Err(Error::Config("blank density K must be >= 1".into()));
    }
    if let Some(i) = tokens.iter().position(|&t| t == blank) {
        return Err(Error::Config(format!(
            "content token at index {i} equals the blank symbol"
        )));
    }
    let n = tokens.len();
    let padded = n.max(min_tokens);
    let mut layout = Vec::with_capacity(padded + padded.div_ceil(density) + 1);
    for g in 0..padded.div_ceil(density) {
        layout.push(blank);
        for i in g * density..((g + 1) * density).min(padded) {
            layout.push(if i < n { tokens[i] } else { blank });
        }
    }
    layout.push(blank);
    if padded == 0 {
        // empty content with padding disabled: a single terminal slot
        debug_assert_eq!(layout.len(), 1);
    }
    Ok(InterleavedSequence {
        tokens: layout,
        density,
        source_len: n,
        padded_len: padded,
        blank,
    })
}

/// End-of-sequence padding layout used by the EndPadding ablation: all
/// content first, all slots trailing, same total length as the interleaved
/// layout at the same density.
pub fn build_end_padded(
    tokens: &[TokenId],
    density: usize,
    blank: TokenId,
    min_tokens: usize,
) -> Result<InterleavedSequence> {
    let inter = build_interleaved_with_min(tokens, density, blank, min_tokens)?;
    let total = inter.len();
    let mut layout = Vec::with_capacity(total);
    layout.extend_from_slice(tokens);
    layout.resize(total, blank);
    Ok(InterleavedSequence {
        tokens: layout,
        ..inter
    })
}

/// Re-interleave a decoded sequence for another editing round.
pub fn reinterleave(
    decoded: &[TokenId],
    density: usize,
    blank: TokenId,
) -> Result<InterleavedSequence> {
    build_interleaved(decoded, density, blank)
}

/// Minimum-change relabeling that realizes an insertion.
///
/// Places `insert` between content tokens x_gap and x_{gap+1} (gap 0 inserts
/// before the first token) and returns a full relabeling of the layout that
/// greedy-collapses to the edited sequence while changing as few positions
/// as possible, plus that change count. Requires density 1.
///
/// Implemented exactly: the labelings that collapse to the edited sequence
/// are the CTC alignments of that sequence over the layout's positions, so a
/// min-cost pass over the CTC lattice (cost 1 wherever a position's label
/// differs from the current layout) finds the optimum.
pub fn insertion_oracle(
    seq: &InterleavedSequence,
    gap: usize,
    insert: &[TokenId],
) -> Result<(Vec<TokenId>, usize)> {
    if seq.density != 1 {
        return Err(Error::Config(format!(
            "insertion oracle requires density 1, got {}",
            seq.density
        )));
    }
    let content = seq.content();
    if gap > content.len() {
        return Err(Error::Config(format!(
            "gap {gap} out of range for {} content tokens",
            content.len()
        )));
    }
    if insert.is_empty() {
        return Ok((seq.tokens.clone(), 0));
    }
    if insert.iter().any(|&t| t == seq.blank) {
        return Err(Error::Config("insert contains the blank symbol".into()));
    }
    if insert.len() > seq.insert_capacity() {
        return Err(Error::InfeasibleInsert {
            requested: insert.len(),
            capacity: seq.insert_capacity(),
        });
    }

    let mut edited = Vec::with_capacity(content.len() + insert.len());
    edited.extend_from_slice(&content[..gap]);
    edited.extend_from_slice(insert);
    edited.extend_from_slice(&content[gap..]);

    match min_change_alignment(&seq.tokens, &edited, seq.blank) {
        Some((labels, changed)) => Ok((labels, changed)),
        None => Err(Error::InfeasibleInsert {
            requested: insert.len(),
            capacity: seq.insert_capacity(),
        }),
    }
}

/// Min-cost CTC alignment of `target` over `positions.len()` slots, where
/// each position costs 1 unless its label matches the existing one.
fn min_change_alignment(
    positions: &[TokenId],
    target: &[TokenId],
    blank: TokenId,
) -> Option<(Vec<TokenId>, usize)> {
    let p = positions.len();
    let states = 2 * target.len() + 1;
    let ext = |s: usize| -> TokenId {
        if s % 2 == 0 {
            blank
        } else {
            target[s / 2]
        }
    };
    const INF: usize = usize::MAX / 2;
    let cost = |t: usize, s: usize| -> usize {
        usize::from(positions[t] != ext(s))
    };

    let mut dp = vec![INF; p * states];
    let mut back = vec![usize::MAX; p * states];
    dp[0] = cost(0, 0);
    if states > 1 {
        dp[1] = cost(0, 1);
    }
    for t in 1..p {
        for s in 0..states {
            let lab = ext(s);
            let mut best = INF;
            let mut best_prev = usize::MAX;
            let mut consider = |prev: usize, dp_row: &[usize]| {
                let v = dp_row[prev];
                if v < best {
                    best = v;
                    best_prev = prev;
                }
            };
            let prev_row = &dp[(t - 1) * states..t * states];
            consider(s, prev_row);
            if s >= 1 {
                consider(s - 1, prev_row);
            }
            if s >= 2 && lab != blank && lab != ext(s - 2) {
                consider(s - 2, prev_row);
            }
            if best < INF {
                dp[t * states + s] = best + cost(t, s);
                back[t * states + s] = best_prev;
            }
        }
    }
    let mut end = states - 1;
    let mut best = dp[(p - 1) * states + states - 1];
    if states > 1 && dp[(p - 1) * states + states - 2] < best {
        end = states - 2;
        best = dp[(p - 1) * states + states - 2];
    }
    if best >= INF {
        return None;
    }
    let mut labels = vec![blank; p];
    let mut s = end;
    for t in (0..p).rev() {
        labels[t] = ext(s);
        if t > 0 {
            s = back[t * states + s];
        }
    }
    Some((labels, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::collapse_path;
    use rand::Rng;

    const B: TokenId = 0; // blank

    #[test]
    fn eq1_layout_without_padding() {
        let seq = build_interleaved_with_min(&[5, 6], 1, B, 0).unwrap();
        assert_eq!(seq.tokens, vec![B, 5, B, 6, B]);
        assert_eq!(seq.source_len, 2);
    }

    #[test]
    fn empty_input_pads_to_min_layout() {
        let seq = build_interleaved(&[], 1, B).unwrap();
        assert_eq!(seq.len(), 17);
        assert!(seq.tokens.iter().all(|&t| t == B));
        assert_eq!(seq.padded_len, 8);
    }

    #[test]
    fn density_three_single_group() {
        let seq = build_interleaved_with_min(&[5, 6, 7], 3, B, 0).unwrap();
        assert_eq!(seq.tokens, vec![B, 5, 6, 7, B]);
    }

    #[test]
    fn density_partial_final_group_gets_terminal_slot() {
        let seq = build_interleaved_with_min(&[5, 6, 7, 8], 3, B, 0).unwrap();
        assert_eq!(seq.tokens, vec![B, 5, 6, 7, B, 8, B]);
        // ceil(4/3) + 1 = 3 slots
        assert_eq!(seq.tokens.iter().filter(|&&t| t == B).count(), 3);
    }

    #[test]
    fn k1_layout_law_and_slot_positions() {
        for n in [0usize, 3, 8, 13] {
            let tokens: Vec<TokenId> = (1..=n).collect();
            let seq = build_interleaved(&tokens, 1, B).unwrap();
            assert_eq!(seq.len(), 2 * n.max(8) + 1);
            for (i, &t) in seq.tokens.iter().enumerate() {
                if i % 2 == 0 {
                    assert_eq!(t, B, "even positions are slots");
                } else if i / 2 < n {
                    assert_eq!(t, tokens[i / 2]);
                } else {
                    assert_eq!(t, B, "trailing padding");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_interleaved(&[1, 2], 0, B).is_err());
        assert!(build_interleaved(&[1, B, 2], 1, B).is_err());
    }

    #[test]
    fn collapse_identity_including_adjacent_duplicates() {
        let cases: Vec<Vec<TokenId>> = vec![
            vec![1, 2, 3],
            vec![4, 4],
            vec![1, 1, 1, 2, 2],
            vec![],
            (1..=12).collect(),
        ];
        for x in cases {
            let seq = build_interleaved(&x, 1, B).unwrap();
            assert_eq!(collapse_path(&seq.tokens, B), x, "input {x:?}");
        }
    }

    #[test]
    fn reinterleave_matches_build() {
        let seq = reinterleave(&[3, 4], 1, B).unwrap();
        let built = build_interleaved(&[3, 4], 1, B).unwrap();
        assert_eq!(seq, built);
        let empty = reinterleave(&[], 1, B).unwrap();
        assert_eq!(empty.len(), 17);
        assert!(empty.tokens.iter().all(|&t| t == B));
    }

    #[test]
    fn end_padding_layout_same_length() {
        let tokens: Vec<TokenId> = (1..=10).collect();
        let inter = build_interleaved(&tokens, 1, B).unwrap();
        let endp = build_end_padded(&tokens, 1, B, MIN_INPUT_TOKENS).unwrap();
        assert_eq!(endp.len(), inter.len());
        assert_eq!(&endp.tokens[..10], &tokens[..]);
        assert!(endp.tokens[10..].iter().all(|&t| t == B));
    }

    #[test]
    fn single_token_insert_changes_one_position() {
        let tokens: Vec<TokenId> = (1..=9).collect();
        let seq = build_interleaved(&tokens, 1, B).unwrap();
        for gap in 0..=9 {
            let (labels, changed) = insertion_oracle(&seq, gap, &[11]).unwrap();
            assert_eq!(changed, 1, "gap {gap}");
            let mut want = tokens.clone();
            want.insert(gap, 11);
            assert_eq!(collapse_path(&labels, B), want);
        }
    }

    #[test]
    fn worked_three_token_insert_changes_five() {
        // Insert (a,b,c) between x_4 and x_5: the neighbors shift into their
        // slots and the freed middle positions take a, b, c.
        let tokens: Vec<TokenId> = (1..=9).collect();
        let seq = build_interleaved(&tokens, 1, B).unwrap();
        let (labels, changed) = insertion_oracle(&seq, 4, &[11, 12, 13]).unwrap();
        assert_eq!(changed, 5);
        let mut want = tokens.clone();
        want.splice(4..4, [11, 12, 13]);
        assert_eq!(collapse_path(&labels, B), want);
    }

    #[test]
    fn insert_cost_law_two_m_minus_one() {
        let mut rng = crate::numerics::rng::labeled(17, "interleave_prop");
        for case in 0..200 {
            // hazard-free content: no adjacent duplicates
            let n = rng.gen_range(8..=14);
            let mut tokens: Vec<TokenId> = Vec::with_capacity(n);
            for _ in 0..n {
                loop {
                    let t = rng.gen_range(1..=20);
                    if tokens.last() != Some(&t) {
                        tokens.push(t);
                        break;
                    }
                }
            }
            let seq = build_interleaved(&tokens, 1, B).unwrap();
            let m = rng.gen_range(1..=4);
            let gap = rng.gen_range(0..=n);
            // inserted tokens distinct from each other and from all content
            let insert: Vec<TokenId> = (0..m).map(|i| 30 + i).collect();
            let (labels, changed) = insertion_oracle(&seq, gap, &insert).unwrap();
            assert!(
                changed <= 2 * m - 1,
                "case {case}: changed {changed} > {}",
                2 * m - 1
            );
            let mut want = tokens.clone();
            want.splice(gap..gap, insert.iter().copied());
            assert_eq!(collapse_path(&labels, B), want, "case {case}");
            // interior gaps with fully distinct inserts need the full 2m-1
            if gap > 0 && gap < n {
                assert_eq!(changed, 2 * m - 1, "case {case} gap {gap} m {m}");
            }
        }
    }

    #[test]
    fn capacity_bound_is_n_plus_one() {
        let tokens: Vec<TokenId> = (1..=8).collect();
        let seq = build_interleaved(&tokens, 1, B).unwrap();
        // distinct insert tokens, so feasibility is purely positional
        let at_capacity: Vec<TokenId> = (100..100 + 9).collect();
        let (labels, _) = insertion_oracle(&seq, 4, &at_capacity).unwrap();
        let mut want = tokens.clone();
        want.splice(4..4, at_capacity.iter().copied());
        assert_eq!(collapse_path(&labels, B), want);
        let beyond: Vec<TokenId> = (100..100 + 10).collect();
        assert!(matches!(
            insertion_oracle(&seq, 4, &beyond),
            Err(Error::InfeasibleInsert { requested: 10, capacity: 9 })
        ));
    }

    #[test]
    fn insertion_between_repeat_hazard_still_collapses_right() {
        // inserting a's twin between (a, a) needs extra blank bookkeeping;
        // the oracle still returns a valid (if costlier) relabeling
        let tokens = vec![5, 7, 5];
        let seq = build_interleaved(&tokens, 1, B).unwrap();
        let (labels, changed) = insertion_oracle(&seq, 1, &[7]).unwrap();
        let want = vec![5, 7, 7, 5];
        assert_eq!(collapse_path(&labels, B), want);
        assert!(changed >= 1);
    }
}
