//! Exact log-space CTC: loss with gradients, greedy collapse decoding, a
//! max-probability alignment, and a brute-force path-enumeration oracle.
//!
//! The lattice runs over the extended label sequence (blank, t1, blank, t2,
//! ..., blank). Log-zero is the finite sentinel `LOG_ZERO` = -1e30 rather
//! than -inf, so all arithmetic stays finite and tests can compare exactly.

use crate::numerics::scalar::{sc, Scalar};
use crate::numerics::tape::{log_softmax_rows_raw, softmax_rows_raw, Tape, TensorId};
use crate::{Error, Result, TokenId};

/// Finite stand-in for log(0). Anything at or below `LOG_ZERO / 2` is
/// treated as zero probability.
pub const LOG_ZERO: f64 = -1e30;

pub fn log_zero<S: Scalar>() -> S {
    sc::<S>(LOG_ZERO)
}

fn is_log_zero<S: Scalar>(v: S) -> bool {
    v <= sc::<S>(LOG_ZERO / 2.0)
}

fn log_add<S: Scalar>(a: S, b: S) -> S {
    let (m, o) = if a >= b { (a, b) } else { (b, a) };
    if is_log_zero(m) {
        return log_zero();
    }
    m + (S::one() + (o - m).exp()).ln()
}

/// Minimum number of prediction positions needed to emit `target`:
/// its length plus one mandatory blank between each adjacent repeat.
pub fn min_positions(target: &[TokenId]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

fn validate_target(target: &[TokenId], vocab: usize, blank: TokenId) -> Result<()> {
    for (i, &t) in target.iter().enumerate() {
        if t == blank {
            return Err(Error::InvalidTarget(i));
        }
        if t >= vocab {
            return Err(Error::Config(format!(
                "target token {t} out of vocab {vocab}"
            )));
        }
    }
    Ok(())
}

/// Extended label at lattice state `s`: blank on even states, target token on
/// odd states.
fn ext_label(target: &[TokenId], blank: TokenId, s: usize) -> TokenId {
    if s % 2 == 0 {
        blank
    } else {
        target[s / 2]
    }
}

/// CTC negative log-likelihood and its gradient with respect to the logits.
///
/// `logits` is row-major [positions × vocab]. The gradient is the standard
/// softmax-minus-posterior form, verified against finite differences and the
/// enumeration oracle.
pub fn ctc_loss_grad<S: Scalar>(
    logits: &[S],
    positions: usize,
    vocab: usize,
    target: &[TokenId],
    blank: TokenId,
) -> Result<(S, Vec<S>)> {
    validate_target(target, vocab, blank)?;
    let needed = min_positions(target);
    if needed > positions {
        return Err(Error::InfeasibleTarget {
            needed,
            available: positions,
        });
    }
    assert_eq!(logits.len(), positions * vocab);

    let mut lp = vec![S::zero(); positions * vocab];
    log_softmax_rows_raw(logits, positions, vocab, &mut lp);

    let states = 2 * target.len() + 1;
    let zero = log_zero::<S>();

    // Forward lattice; alpha[t][s] includes the emission at t.
    let mut alpha = vec![zero; positions * states];
    alpha[0] = lp[blank];
    if states > 1 {
        alpha[1] = lp[ext_label(target, blank, 1)];
    }
    for t in 1..positions {
        for s in 0..states {
            let lab = ext_label(target, blank, s);
            let mut acc = alpha[(t - 1) * states + s];
            if s >= 1 {
                acc = log_add(acc, alpha[(t - 1) * states + s - 1]);
            }
            if s >= 2 && lab != blank && lab != ext_label(target, blank, s - 2) {
                acc = log_add(acc, alpha[(t - 1) * states + s - 2]);
            }
            alpha[t * states + s] = if is_log_zero(acc) {
                zero
            } else {
                acc + lp[t * vocab + lab]
            };
        }
    }
    let mut log_p = alpha[(positions - 1) * states + states - 1];
    if states > 1 {
        log_p = log_add(log_p, alpha[(positions - 1) * states + states - 2]);
    }
    if is_log_zero(log_p) {
        // Feasibility was pre-checked; reaching here means the logits were
        // degenerate enough to underflow every path.
        return Err(Error::InfeasibleTarget {
            needed,
            available: positions,
        });
    }
    let loss = -log_p;

    // Backward lattice; beta[t][s] also includes the emission at t.
    let mut beta = vec![zero; positions * states];
    beta[(positions - 1) * states + states - 1] =
        lp[(positions - 1) * vocab + ext_label(target, blank, states - 1)];
    if states > 1 {
        beta[(positions - 1) * states + states - 2] =
            lp[(positions - 1) * vocab + ext_label(target, blank, states - 2)];
    }
    for t in (0..positions - 1).rev() {
        for s in 0..states {
            let lab = ext_label(target, blank, s);
            let mut acc = beta[(t + 1) * states + s];
            if s + 1 < states {
                acc = log_add(acc, beta[(t + 1) * states + s + 1]);
            }
            if s + 2 < states {
                let nxt = ext_label(target, blank, s + 2);
                if nxt != blank && nxt != lab {
                    acc = log_add(acc, beta[(t + 1) * states + s + 2]);
                }
            }
            beta[t * states + s] = if is_log_zero(acc) {
                zero
            } else {
                acc + lp[t * vocab + lab]
            };
        }
    }

    // d loss / d logit = softmax - posterior
    let mut grad = vec![S::zero(); positions * vocab];
    softmax_rows_raw(logits, positions, vocab, &mut grad);
    for t in 0..positions {
        // log posterior over vocab entries at position t
        let mut post = vec![zero; vocab];
        for s in 0..states {
            let a = alpha[t * states + s];
            let b = beta[t * states + s];
            if is_log_zero(a) || is_log_zero(b) {
                continue;
            }
            let lab = ext_label(target, blank, s);
            // alpha and beta both count the emission at t once each.
            let gamma = a + b - lp[t * vocab + lab];
            post[lab] = log_add(post[lab], gamma);
        }
        for k in 0..vocab {
            if !is_log_zero(post[k]) {
                grad[t * vocab + k] = grad[t * vocab + k] - (post[k] - log_p).exp();
            }
        }
    }
    Ok((loss, grad))
}

/// Loss only (see `ctc_loss_grad`).
pub fn ctc_loss_value<S: Scalar>(
    logits: &[S],
    positions: usize,
    vocab: usize,
    target: &[TokenId],
    blank: TokenId,
) -> Result<S> {
    ctc_loss_grad(logits, positions, vocab, target, blank).map(|(l, _)| l)
}

/// Differentiable CTC loss over a tape node holding [positions × vocab]
/// logits.
pub fn ctc_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    logits: TensorId,
    target: &[TokenId],
    blank: TokenId,
) -> Result<TensorId> {
    let shape = tape.shape(logits);
    if shape.len() != 2 {
        return Err(Error::Dimension {
            op: "ctc_loss",
            lhs: shape.to_vec(),
            rhs: vec![],
        });
    }
    let (p, v) = (shape[0], shape[1]);
    let (loss, grad) = ctc_loss_grad(tape.data(logits), p, v, target, blank)?;
    tape.scalar_fn(logits, loss, grad)
}

/// Exhaustive-path oracle: enumerates all vocab^positions paths, collapses
/// each, and sums the probability of those that collapse to `target`.
/// Returns +inf when no path reaches the target. Guarded to <= 10^6 paths.
pub fn ctc_oracle(
    logits: &[f64],
    positions: usize,
    vocab: usize,
    target: &[TokenId],
    blank: TokenId,
) -> Result<f64> {
    const GUARD: u64 = 1_000_000;
    let paths = (vocab as u64).checked_pow(positions as u32).unwrap_or(u64::MAX);
    if paths > GUARD {
        return Err(Error::OracleGuard {
            paths,
            limit: GUARD,
        });
    }
    validate_target(target, vocab, blank)?;
    let mut probs = vec![0.0f64; positions * vocab];
    softmax_rows_raw(logits, positions, vocab, &mut probs);

    let mut total = 0.0f64;
    let mut path = vec![0usize; positions];
    for idx in 0..paths {
        let mut rem = idx;
        for t in 0..positions {
            path[t] = (rem % vocab as u64) as usize;
            rem /= vocab as u64;
        }
        if collapse_eq(&path, blank, target) {
            let mut p = 1.0f64;
            for (t, &k) in path.iter().enumerate() {
                p *= probs[t * vocab + k];
            }
            total += p;
        }
    }
    if total <= 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(-total.ln())
    }
}

fn collapse_eq(path: &[usize], blank: TokenId, target: &[TokenId]) -> bool {
    let mut ti = 0;
    let mut prev = usize::MAX;
    for &k in path {
        if k != prev {
            if k != blank {
                if ti >= target.len() || target[ti] != k {
                    return false;
                }
                ti += 1;
            }
            prev = k;
        }
    }
    ti == target.len()
}

/// Greedy decode: per-position argmax (ties to the lowest token id), merge
/// adjacent duplicates, then drop blanks.
pub fn greedy_collapse<S: Scalar>(
    logits: &[S],
    positions: usize,
    vocab: usize,
    blank: TokenId,
) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for t in 0..positions {
        let row = &logits[t * vocab..(t + 1) * vocab];
        let mut best = 0usize;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        if best != prev {
            if best != blank {
                out.push(best);
            }
            prev = best;
        }
    }
    out
}

/// Collapse an explicit label path (dedup adjacent, drop blanks).
pub fn collapse_path(path: &[TokenId], blank: TokenId) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for &k in path {
        if k != prev {
            if k != blank {
                out.push(k);
            }
            prev = k;
        }
    }
    out
}

/// Max-probability alignment of `target` over the positions (Viterbi on the
/// CTC lattice). Returns one label per position (blank or a target token).
/// Ties prefer the blank state, then the lower label index, then the lower
/// state.
pub fn best_alignment<S: Scalar>(
    logits: &[S],
    positions: usize,
    vocab: usize,
    target: &[TokenId],
    blank: TokenId,
) -> Result<Vec<TokenId>> {
    validate_target(target, vocab, blank)?;
    let needed = min_positions(target);
    if needed > positions {
        return Err(Error::InfeasibleTarget {
            needed,
            available: positions,
        });
    }
    let mut lp = vec![S::zero(); positions * vocab];
    log_softmax_rows_raw(logits, positions, vocab, &mut lp);
    let states = 2 * target.len() + 1;
    let zero = log_zero::<S>();

    let mut score = vec![zero; positions * states];
    let mut back = vec![usize::MAX; positions * states];
    score[0] = lp[blank];
    if states > 1 {
        score[1] = lp[ext_label(target, blank, 1)];
    }
    // Preference order on ties: blank label first, then lower label id,
    // then lower state index.
    let pref = |s: usize| -> (u8, TokenId, usize) {
        let lab = ext_label(target, blank, s);
        (u8::from(lab != blank), lab, s)
    };
    for t in 1..positions {
        for s in 0..states {
            let lab = ext_label(target, blank, s);
            let mut cands: Vec<usize> = vec![s];
            if s >= 1 {
                cands.push(s - 1);
            }
            if s >= 2 && lab != blank && lab != ext_label(target, blank, s - 2) {
                cands.push(s - 2);
            }
            let mut best: Option<usize> = None;
            for &c in &cands {
                let v = score[(t - 1) * states + c];
                if is_log_zero(v) {
                    continue;
                }
                best = match best {
                    None => Some(c),
                    Some(b) => {
                        let vb = score[(t - 1) * states + b];
                        if v > vb || (v == vb && pref(c) < pref(b)) {
                            Some(c)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
            if let Some(b) = best {
                score[t * states + s] = score[(t - 1) * states + b] + lp[t * vocab + lab];
                back[t * states + s] = b;
            }
        }
    }
    let mut end = states - 1;
    if states > 1 {
        let v1 = score[(positions - 1) * states + states - 1];
        let v2 = score[(positions - 1) * states + states - 2];
        if !is_log_zero(v2) && (is_log_zero(v1) || v2 > v1) {
            end = states - 2;
        }
        // exact tie keeps states-1, the blank terminal, per the preference
    }
    let mut path = vec![blank; positions];
    let mut s = end;
    for t in (0..positions).rev() {
        path[t] = ext_label(target, blank, s);
        if t > 0 {
            s = back[t * states + s];
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniform_logits(p: usize, v: usize) -> Vec<f64> {
        vec![0.0; p * v]
    }

    #[test]
    fn single_position_single_alignment() {
        // P=1, V=2, target=[1], p(token 1) = 0.7
        let p1: f64 = 0.7;
        let logits = vec![(1.0 - p1).ln(), p1.ln()];
        let loss = ctc_loss_value(&logits, 1, 2, &[1], 0).unwrap();
        assert!((loss - (-p1.ln())).abs() < 1e-12);
    }

    #[test]
    fn two_positions_three_paths() {
        // P=2, V=2, target=[1]: paths {11, 1b, b1} of the 4 collapse to [1].
        let logits = uniform_logits(2, 2);
        let loss = ctc_loss_value(&logits, 2, 2, &[1], 0).unwrap();
        assert!((loss - (-(3.0f64 / 4.0).ln())).abs() < 1e-12);
    }

    #[test]
    fn empty_target_all_blank_path() {
        let logits = uniform_logits(2, 2);
        let loss = ctc_loss_value(&logits, 2, 2, &[], 0).unwrap();
        assert!((loss - (-(0.25f64).ln())).abs() < 1e-12);
        let oracle = ctc_oracle(&logits, 2, 2, &[], 0).unwrap();
        assert!((loss - oracle).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_fixed_instance() {
        // P=4, V=3, target=[a,b] vs enumeration over 3^4 paths.
        let mut rng = crate::numerics::rng::labeled(11, "ctc_fixed");
        let logits: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let loss = ctc_loss_value(&logits, 4, 3, &[1, 2], 0).unwrap();
        let oracle = ctc_oracle(&logits, 4, 3, &[1, 2], 0).unwrap();
        assert!((loss - oracle).abs() < 1e-10, "{loss} vs {oracle}");
    }

    #[test]
    fn oracle_equivalence_randomized() {
        // 200 random small instances, |loss - oracle| < 1e-10.
        let mut rng = crate::numerics::rng::labeled(3, "ctc_oracle_eq");
        for case in 0..200 {
            let p = rng.gen_range(1..=6);
            let v = rng.gen_range(2..=4);
            let tlen = rng.gen_range(0..=3.min(p));
            let target: Vec<usize> = (0..tlen).map(|_| rng.gen_range(1..v)).collect();
            let logits: Vec<f64> = (0..p * v).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
            let want = ctc_oracle(&logits, p, v, &target, 0).unwrap();
            match ctc_loss_value(&logits, p, v, &target, 0) {
                Ok(loss) => {
                    assert!(
                        (loss - want).abs() < 1e-10,
                        "case {case}: {loss} vs {want} (P={p} V={v} target={target:?})"
                    );
                }
                Err(Error::InfeasibleTarget { .. }) => {
                    assert!(want.is_infinite(), "case {case}: feasibility disagreement");
                }
                Err(e) => panic!("case {case}: {e}"),
            }
        }
    }

    #[test]
    fn infeasible_is_typed_and_oracle_agrees() {
        let logits = uniform_logits(1, 3);
        let err = ctc_loss_value(&logits, 1, 3, &[1, 2], 0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTarget { needed: 2, available: 1 }));
        assert!(ctc_oracle(&logits, 1, 3, &[1, 2], 0).unwrap().is_infinite());
        // repeated label needs a separating blank: [1,1] needs 3 positions
        let logits2 = uniform_logits(2, 3);
        assert!(matches!(
            ctc_loss_value(&logits2, 2, 3, &[1, 1], 0),
            Err(Error::InfeasibleTarget { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn blank_in_target_rejected() {
        let logits = uniform_logits(2, 3);
        assert!(matches!(
            ctc_loss_value(&logits, 2, 3, &[0], 0),
            Err(Error::InvalidTarget(0))
        ));
    }

    #[test]
    fn oracle_guard_refuses_large_instances() {
        let logits = vec![0.0; 30 * 10];
        assert!(matches!(
            ctc_oracle(&logits, 30, 10, &[1], 0),
            Err(Error::OracleGuard { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::numerics::rng::labeled(5, "ctc_grad");
        for _ in 0..10 {
            let p = rng.gen_range(2..=5);
            let v = rng.gen_range(2..=4);
            let tlen = rng.gen_range(1..=2.min(p / 2).max(1));
            let target: Vec<usize> = (0..tlen).map(|_| rng.gen_range(1..v)).collect();
            if min_positions(&target) > p {
                continue;
            }
            let logits: Vec<f64> = (0..p * v).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let (_, grad) = ctc_loss_grad(&logits, p, v, &target, 0).unwrap();
            let f = |x: &[f64]| ctc_loss_value(x, p, v, &target, 0).unwrap();
            let numeric = crate::numerics::gradcheck::finite_diff(f, &logits, 1e-6);
            let err = crate::numerics::gradcheck::max_rel_err(&grad, &numeric);
            assert!(err < 1e-4, "rel err {err}");
        }
    }

    #[test]
    fn collapse_mass_partitions_to_one() {
        // Over all targets of length <= P (tiny V, P), probabilities sum to 1.
        let mut rng = crate::numerics::rng::labeled(9, "ctc_partition");
        let (p, v) = (4, 3);
        let logits: Vec<f64> = (0..p * v).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let mut total = 0.0f64;
        // enumerate all targets over non-blank symbols {1, 2} of length 0..=P
        for len in 0..=p {
            let count = (v - 1usize).pow(len as u32);
            for idx in 0..count {
                let mut rem = idx;
                let mut target = Vec::with_capacity(len);
                for _ in 0..len {
                    target.push(1 + rem % (v - 1));
                    rem /= v - 1;
                }
                match ctc_loss_value(&logits, p, v, &target, 0) {
                    Ok(loss) => total += (-loss).exp(),
                    Err(Error::InfeasibleTarget { .. }) => {} // zero mass
                    Err(e) => panic!("{e}"),
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "partition sums to {total}");
    }

    #[test]
    fn loss_is_in_unit_interval_as_probability() {
        let mut rng = crate::numerics::rng::labeled(13, "ctc_unit");
        for _ in 0..50 {
            let p = rng.gen_range(1..=5);
            let v = rng.gen_range(2..=4);
            let tlen = rng.gen_range(0..=2.min(p));
            let target: Vec<usize> = (0..tlen).map(|_| rng.gen_range(1..v)).collect();
            if min_positions(&target) > p {
                continue;
            }
            let logits: Vec<f64> = (0..p * v).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
            let loss = ctc_loss_value(&logits, p, v, &target, 0).unwrap();
            let prob = (-loss).exp();
            assert!(prob > 0.0 && prob <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn greedy_collapse_spec_cases() {
        // argmax path [a,a,b,a,c,c] over labels {b=0 blank, a=1, c=2}
        // -> dedup [a,b,a,c] -> drop blank -> [a,a,c]
        let peaked = |labels: &[usize], v: usize| -> Vec<f64> {
            let mut l = vec![0.0; labels.len() * v];
            for (t, &k) in labels.iter().enumerate() {
                l[t * v + k] = 10.0;
            }
            l
        };
        let logits = peaked(&[1, 1, 0, 1, 2, 2], 3);
        assert_eq!(greedy_collapse(&logits, 6, 3, 0), vec![1, 1, 2]);
        // all-blank -> empty
        let logits = peaked(&[0, 0, 0], 3);
        assert!(greedy_collapse(&logits, 3, 3, 0).is_empty());
        // [b,c,b,c,b] -> [c,c]
        let logits = peaked(&[0, 2, 0, 2, 0], 3);
        assert_eq!(greedy_collapse(&logits, 5, 3, 0), vec![2, 2]);
    }

    #[test]
    fn greedy_collapse_ties_break_to_lowest_id() {
        let logits = vec![1.0f64, 1.0, 0.0]; // tie between 0 (blank) and 1
        assert!(greedy_collapse(&logits, 1, 3, 0).is_empty());
        let logits = vec![0.0f64, 1.0, 1.0]; // tie between 1 and 2
        assert_eq!(greedy_collapse(&logits, 1, 3, 0), vec![1]);
    }

    #[test]
    fn greedy_collapse_invariant_under_row_shift() {
        let mut rng = crate::numerics::rng::labeled(21, "ctc_shift");
        let (p, v) = (6, 4);
        let logits: Vec<f64> = (0..p * v).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let base = greedy_collapse(&logits, p, v, 0);
        let mut shifted = logits.clone();
        for t in 0..p {
            let c = rng.gen::<f64>() * 100.0 - 50.0;
            for k in 0..v {
                shifted[t * v + k] += c;
            }
        }
        assert_eq!(greedy_collapse(&shifted, p, v, 0), base);
    }

    #[test]
    fn best_alignment_peaked_identity() {
        // P == |target| with peaked logits: the alignment is the target.
        let target = vec![1usize, 2, 1];
        let mut logits = vec![0.0f64; 3 * 3];
        for (t, &k) in target.iter().enumerate() {
            logits[t * 3 + k] = 10.0;
        }
        assert_eq!(best_alignment(&logits, 3, 3, &target, 0).unwrap(), target);
    }

    #[test]
    fn best_alignment_centers_on_peak() {
        // P=3, target=[a]; p(a) high only at position 1 -> [blank, a, blank]
        let mut logits = vec![0.0f64; 3 * 2];
        logits[0] = 3.0; // pos 0 prefers blank
        logits[1 * 2 + 1] = 5.0; // pos 1 prefers a
        logits[2 * 2] = 3.0; // pos 2 prefers blank
        assert_eq!(best_alignment(&logits, 3, 2, &[1], 0).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn best_alignment_forces_blank_between_repeats() {
        let logits = vec![0.0f64; 3 * 2];
        assert_eq!(
            best_alignment(&logits, 3, 2, &[1, 1], 0).unwrap(),
            vec![1, 0, 1]
        );
    }

    #[test]
    fn best_alignment_infeasible_errors() {
        let logits = vec![0.0f64; 2 * 2];
        assert!(best_alignment(&logits, 2, 2, &[1, 1], 0).is_err());
    }

    #[test]
    fn tape_hook_grad_flows() {
        let mut tape = Tape::<f64>::new();
        let logits = tape
            .leaf(&[3, 3], vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.5, 0.2, 0.2, 0.1], true)
            .unwrap();
        let loss = ctc_loss_on_tape(&mut tape, logits, &[1, 2], 0).unwrap();
        tape.backward(loss);
        let g = tape.grad(logits).unwrap();
        assert!(g.iter().any(|&v| v != 0.0));
        // Sum of grad per row is ~0 (softmax minus a distribution).
        for t in 0..3 {
            let s: f64 = g[t * 3..(t + 1) * 3].iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }
}
