//! Unit-cost edit distance with an insertion/deletion/substitution
//! decomposition from a deterministic backtrace, plus an exhaustive
//! minimal-edit-script oracle for small pairs.

/// Counts relative to the reference: `del` reference tokens dropped, `ins`
/// hypothesis tokens added, `sub` mismatched pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub ins: usize,
    pub del: usize,
    pub sub: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.ins + self.del + self.sub
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    /// reference index, hypothesis index
    Match(usize, usize),
    Substitute(usize, usize),
    /// reference index dropped
    Delete(usize),
    /// hypothesis index added
    Insert(usize),
}

/// Levenshtein DP with backtrace. Ties break substitution > deletion >
/// insertion, so the decomposition is deterministic.
pub fn edit_script<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (Vec<EditOp>, EditCounts) {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dp = vec![0usize; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dp[at(i, 0)] = i;
    }
    for j in 0..=m {
        dp[at(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let diag = dp[at(i - 1, j - 1)] + cost;
            let del = dp[at(i - 1, j)] + 1;
            let ins = dp[at(i, j - 1)] + 1;
            dp[at(i, j)] = diag.min(del).min(ins);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let diag = dp[at(i - 1, j - 1)] + cost;
            if dp[at(i, j)] == diag {
                if cost == 0 {
                    ops.push(EditOp::Match(i - 1, j - 1));
                } else {
                    ops.push(EditOp::Substitute(i - 1, j - 1));
                    counts.sub += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[at(i, j)] == dp[at(i - 1, j)] + 1 {
            ops.push(EditOp::Delete(i - 1));
            counts.del += 1;
            i -= 1;
            continue;
        }
        ops.push(EditOp::Insert(j - 1));
        counts.ins += 1;
        j -= 1;
    }
    ops.reverse();
    (ops, counts)
}

/// Decomposed edit distance (see `edit_script`).
pub fn edit_distance_decompose<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    edit_script(reference, hypothesis).1
}

/// Exhaustive search over every edit script, independent of the DP: returns
/// the minimal total and the set of (ins, del, sub) triples achieving it.
/// Exponential; intended for pairs with combined length <= 10.
pub fn brute_force_min_scripts<T: PartialEq>(
    reference: &[T],
    hypothesis: &[T],
) -> (usize, Vec<EditCounts>) {
    fn go<T: PartialEq>(
        r: &[T],
        h: &[T],
        acc: EditCounts,
        best: &mut usize,
        found: &mut Vec<EditCounts>,
    ) {
        if acc.total() > *best {
            return;
        }
        if r.is_empty() && h.is_empty() {
            let total = acc.total();
            if total < *best {
                *best = total;
                found.clear();
            }
            if total == *best && !found.contains(&acc) {
                found.push(acc);
            }
            return;
        }
        if !r.is_empty() && !h.is_empty() {
            let mut step = acc;
            if r[0] != h[0] {
                step.sub += 1;
            }
            go(&r[1..], &h[1..], step, best, found);
        }
        if !r.is_empty() {
            let mut step = acc;
            step.del += 1;
            go(&r[1..], h, step, best, found);
        }
        if !h.is_empty() {
            let mut step = acc;
            step.ins += 1;
            go(r, &h[1..], step, best, found);
        }
    }
    let mut best = reference.len() + hypothesis.len();
    let mut found = Vec::new();
    go(
        reference,
        hypothesis,
        EditCounts::default(),
        &mut best,
        &mut found,
    );
    (best, found)
}
