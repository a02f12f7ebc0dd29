//! Aggregated evaluation reports: WER/CER with error-type decomposition,
//! micro-averaged over utterances (total errors / total reference tokens).

use super::levenshtein::EditCounts;

#[derive(Debug, Clone)]
pub struct UttRecord {
    pub id: u64,
    pub ref_words: usize,
    pub ref_chars: usize,
    pub word_counts: EditCounts,
    pub char_counts: EditCounts,
    pub decoded: Option<String>,
    /// Set when decoding failed; the utterance is excluded from aggregates.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub n_utts: usize,
    pub n_failed: usize,
    pub n_ref_words: usize,
    pub n_ref_chars: usize,
    pub word_counts: EditCounts,
    pub char_counts: EditCounts,
    pub per_utt: Vec<UttRecord>,
}

impl EvalReport {
    pub fn from_records(records: Vec<UttRecord>) -> Self {
        let mut report = EvalReport {
            per_utt: Vec::with_capacity(records.len()),
            ..Default::default()
        };
        for r in records {
            report.n_utts += 1;
            if r.failure.is_some() {
                report.n_failed += 1;
            } else {
                report.n_ref_words += r.ref_words;
                report.n_ref_chars += r.ref_chars;
                report.word_counts.ins += r.word_counts.ins;
                report.word_counts.del += r.word_counts.del;
                report.word_counts.sub += r.word_counts.sub;
                report.char_counts.ins += r.char_counts.ins;
                report.char_counts.del += r.char_counts.del;
                report.char_counts.sub += r.char_counts.sub;
            }
            report.per_utt.push(r);
        }
        report
    }

    pub fn ins_rate(&self) -> f64 {
        self.word_counts.ins as f64 / self.n_ref_words.max(1) as f64
    }

    pub fn del_rate(&self) -> f64 {
        self.word_counts.del as f64 / self.n_ref_words.max(1) as f64
    }

    pub fn sub_rate(&self) -> f64 {
        self.word_counts.sub as f64 / self.n_ref_words.max(1) as f64
    }

    /// WER as the sum of the three rates, so wer == ins + del + sub holds
    /// bit-exactly; the underlying counts come from one shared alignment.
    pub fn wer(&self) -> f64 {
        self.ins_rate() + self.del_rate() + self.sub_rate()
    }

    pub fn cer(&self) -> f64 {
        self.char_counts.total() as f64 / self.n_ref_chars.max(1) as f64
    }

    pub fn char_ins_rate(&self) -> f64 {
        self.char_counts.ins as f64 / self.n_ref_chars.max(1) as f64
    }

    pub fn char_del_rate(&self) -> f64 {
        self.char_counts.del as f64 / self.n_ref_chars.max(1) as f64
    }

    pub fn char_sub_rate(&self) -> f64 {
        self.char_counts.sub as f64 / self.n_ref_chars.max(1) as f64
    }

    pub fn summary(&self, label: &str) -> String {
        format!(
            "{label}: wer={:.4} (ins={:.4} del={:.4} sub={:.4}) cer={:.4} utts={} failed={}",
            self.wer(),
            self.ins_rate(),
            self.del_rate(),
            self.sub_rate(),
            self.cer(),
            self.n_utts,
            self.n_failed
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,ref_words,ins,del,sub,char_ins,char_del,char_sub,failed\n");
        for r in &self.per_utt {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.id,
                r.ref_words,
                r.word_counts.ins,
                r.word_counts.del,
                r.word_counts.sub,
                r.char_counts.ins,
                r.char_counts.del,
                r.char_counts.sub,
                r.failure.is_some() as u8
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wer_is_exactly_the_sum_of_rates() {
        let records = vec![UttRecord {
            id: 0,
            ref_words: 7,
            ref_chars: 30,
            word_counts: EditCounts {
                ins: 1,
                del: 2,
                sub: 3,
            },
            char_counts: EditCounts {
                ins: 2,
                del: 2,
                sub: 5,
            },
            decoded: Some("x".into()),
            failure: None,
        }];
        let rep = EvalReport::from_records(records);
        assert_eq!(rep.wer(), rep.ins_rate() + rep.del_rate() + rep.sub_rate());
        assert_eq!(rep.word_counts.total(), 6);
        // wer may exceed 1
        assert!(rep.wer() < 1.0);
        assert!((rep.cer() - 9.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn failed_utterances_are_excluded_from_aggregates() {
        let ok = UttRecord {
            id: 0,
            ref_words: 4,
            ref_chars: 16,
            word_counts: EditCounts {
                ins: 0,
                del: 0,
                sub: 1,
            },
            char_counts: EditCounts::default(),
            decoded: Some("y".into()),
            failure: None,
        };
        let bad = UttRecord {
            id: 1,
            ref_words: 9,
            ref_chars: 40,
            word_counts: EditCounts::default(),
            char_counts: EditCounts::default(),
            decoded: None,
            failure: Some("undecodable".into()),
        };
        let rep = EvalReport::from_records(vec![ok, bad]);
        assert_eq!(rep.n_failed, 1);
        assert_eq!(rep.n_ref_words, 4);
        assert!((rep.wer() - 0.25).abs() < 1e-15);
    }
}
