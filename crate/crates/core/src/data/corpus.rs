use super::VocabSpec;

/// Longest sequence kept for language-model pretraining.
pub const MAX_CORPUS_CHARS: usize = 192;

/// Lowercases, replaces every run of out-of-vocabulary characters or
/// whitespace with one space, trims, and caps the length at a word boundary
/// where possible. Returns `None` if nothing remains.
pub fn preprocess_line(line: &str, vocab: &VocabSpec) -> Option<String> {
    let mut out = String::with_capacity(line.len());
    let mut pending_space = false;
    for c in line.chars() {
        let idx = vocab.encode_char(c);
        let keep = idx != vocab.unk_index() && c != ' ' && !c.is_whitespace();
        if keep {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(vocab.char_of(idx).expect("regular index"));
        } else {
            pending_space = true;
        }
    }
    if out.is_empty() {
        return None;
    }
    if out.chars().count() > MAX_CORPUS_CHARS {
        let cut: String = out.chars().take(MAX_CORPUS_CHARS).collect();
        out = match cut.rfind(' ') {
            Some(pos) if pos > 0 => cut[..pos].to_string(),
            _ => cut,
        };
    }
    Some(out)
}

pub fn preprocess_corpus<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    vocab: &VocabSpec,
) -> Vec<String> {
    lines
        .into_iter()
        .filter_map(|l| preprocess_line(l, vocab))
        .collect()
}
