//! Text-entry metrics: edit distances, CER, WER, WPM and character accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Average characters per word conventionally used for WPM.
pub const DEFAULT_CHARS_PER_WORD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditDistanceResult {
    pub distance: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
}

/// Unit-cost Levenshtein distance between two token sequences, with the
/// operation counts of one optimal alignment transforming `hyp` into `reference`.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditDistanceResult {
    let (n, m) = (hyp.len(), reference.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        dp[i * w] = i;
        for j in 1..=m {
            let sub = dp[(i - 1) * w + j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + j - 1] + 1;
            dp[i * w + j] = sub.min(del).min(ins);
        }
    }
    // Backtrace; prefer the diagonal so substitutions are counted as such.
    let mut res = EditDistanceResult {
        distance: dp[n * w + m],
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let same = hyp[i - 1] == reference[j - 1];
            if dp[(i - 1) * w + j - 1] + usize::from(!same) == here {
                if !same {
                    res.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            // hypothesis token with no counterpart in the reference
            res.deletions += 1;
            i -= 1;
        } else {
            res.insertions += 1;
            j -= 1;
        }
    }
    res
}

/// Minimum character distance.
pub fn char_distance(a: &str, b: &str) -> EditDistanceResult {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance(&a, &b)
}

/// Words separated by the space character; empty fragments are dropped.
pub fn words(s: &str) -> Vec<&str> {
    s.split(' ').filter(|w| !w.is_empty()).collect()
}

/// Minimum word distance.
pub fn word_distance(a: &str, b: &str) -> EditDistanceResult {
    edit_distance(&words(a), &words(b))
}

/// Character error rate in percent. May exceed 100.
pub fn cer(hyp: &str, reference: &str) -> Result<f64> {
    let len = reference.chars().count();
    if len == 0 {
        return Err(Error::UndefinedMetric("CER of an empty reference"));
    }
    Ok(100.0 * char_distance(hyp, reference).distance as f64 / len as f64)
}

/// Word error rate in percent.
pub fn wer(hyp: &str, reference: &str) -> Result<f64> {
    let len = words(reference).len();
    if len == 0 {
        return Err(Error::UndefinedMetric("WER of a reference with no words"));
    }
    Ok(100.0 * word_distance(hyp, reference).distance as f64 / len as f64)
}

/// Fraction of aligned positions where the characters agree, over the longer length.
pub fn char_accuracy(hyp: &str, reference: &str) -> f64 {
    let h: Vec<char> = hyp.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    let denom = h.len().max(r.len());
    if denom == 0 {
        return 1.0;
    }
    let hits = h.iter().zip(&r).filter(|(a, b)| a == b).count();
    hits as f64 / denom as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpmInput {
    pub chars: usize,
    /// Minutes from the first keystroke to the last.
    pub minutes: f64,
    pub chars_per_word: f64,
}

impl WpmInput {
    pub fn new(text: &str, minutes: f64) -> Self {
        Self {
            chars: text.chars().count(),
            minutes,
            chars_per_word: DEFAULT_CHARS_PER_WORD,
        }
    }
}

pub fn wpm(input: &WpmInput) -> Result<f64> {
    if !(input.minutes > 0.0) || !input.minutes.is_finite() {
        return Err(Error::UndefinedMetric("WPM needs a positive elapsed time"));
    }
    if !(input.chars_per_word > 0.0) {
        return Err(Error::UndefinedMetric("WPM needs a positive word length"));
    }
    let numer = (input.chars as f64 - 1.0).abs();
    if input.chars <= 1 {
        return Ok(0.0);
    }
    Ok(numer / input.minutes / input.chars_per_word)
}

/// Corpus-level (micro-averaged) error rates over aligned hypothesis/reference pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusScores {
    pub cer_pct: f64,
    pub wer_pct: f64,
    pub char_acc: f64,
}

pub fn corpus_scores<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<CorpusScores> {
    let (mut cd, mut cl, mut wd, mut wl) = (0usize, 0usize, 0usize, 0usize);
    let (mut acc_sum, mut n) = (0.0, 0usize);
    for (hyp, reference) in pairs {
        cd += char_distance(hyp, reference).distance;
        cl += reference.chars().count();
        wd += word_distance(hyp, reference).distance;
        wl += words(reference).len();
        acc_sum += char_accuracy(hyp, reference);
        n += 1;
    }
    if cl == 0 {
        return Err(Error::UndefinedMetric("CER of an empty reference"));
    }
    if wl == 0 {
        return Err(Error::UndefinedMetric("WER of a reference with no words"));
    }
    Ok(CorpusScores {
        cer_pct: 100.0 * cd as f64 / cl as f64,
        wer_pct: 100.0 * wd as f64 / wl as f64,
        char_acc: acc_sum / n as f64,
    })
}
