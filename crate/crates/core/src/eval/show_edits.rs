//! Textual diff rendering for reference/hypothesis/edited triplets.
//!
//! Roles as tags: {err:...} marks words that disagree with the reference,
//! {fix:...} marks edited words that repair a hypothesis error, {del:...}
//! marks reference words the edited output dropped.

use super::levenshtein::{edit_script, EditOp};

fn align_flags(reference: &[&str], other: &[&str]) -> (Vec<bool>, Vec<bool>) {
    // per-reference-word: was it reproduced; per-other-word: is it an error
    let (ops, _) = edit_script(reference, other);
    let mut ref_ok = vec![false; reference.len()];
    let mut other_err = vec![true; other.len()];
    for op in ops {
        match op {
            EditOp::Match(i, j) => {
                ref_ok[i] = true;
                other_err[j] = false;
            }
            EditOp::Substitute(_, _) | EditOp::Insert(_) | EditOp::Delete(_) => {}
        }
    }
    (ref_ok, other_err)
}

/// Render the three annotated lines for one utterance.
pub fn annotate_triplet(reference: &str, hypothesis: &str, edited: &str) -> String {
    let ref_words: Vec<&str> = reference.split_whitespace().collect();
    let hyp_words: Vec<&str> = hypothesis.split_whitespace().collect();
    let edt_words: Vec<&str> = edited.split_whitespace().collect();

    let (_, hyp_err) = align_flags(&ref_words, &hyp_words);
    let (ref_kept, edt_err) = align_flags(&ref_words, &edt_words);
    let (hyp_kept_in_edt, _) = align_flags(&hyp_words, &edt_words);

    let ref_line: Vec<String> = ref_words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if ref_kept[i] {
                (*w).to_string()
            } else {
                format!("{{del:{w}}}")
            }
        })
        .collect();
    let hyp_line: Vec<String> = hyp_words
        .iter()
        .enumerate()
        .map(|(j, w)| {
            if hyp_err[j] {
                format!("{{err:{w}}}")
            } else {
                (*w).to_string()
            }
        })
        .collect();
    let edt_line: Vec<String> = edt_words
        .iter()
        .enumerate()
        .map(|(j, w)| {
            if edt_err[j] {
                format!("{{err:{w}}}")
            } else if !hyp_kept_in_edt.is_empty() && is_fresh_fix(j, w, &hyp_words) {
                format!("{{fix:{w}}}")
            } else {
                (*w).to_string()
            }
        })
        .collect();

    format!(
        "REF: {}\nHYP: {}\nEDT: {}\n",
        ref_line.join(" "),
        hyp_line.join(" "),
        edt_line.join(" ")
    )
}

/// A correct edited word counts as a fix when the hypothesis does not
/// contain it verbatim (i.e. the editor changed something to produce it).
fn is_fresh_fix(_j: usize, word: &str, hyp_words: &[&str]) -> bool {
    !hyp_words.contains(&word)
}
