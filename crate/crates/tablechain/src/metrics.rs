//! Scoring: denotation match for short answers, binary accuracy for fact
//! verification, and sentence-level BLEU / ROUGE for free-form answers.
//!
//! BLEU is BLEU-4 over whitespace tokens with clipped modified precisions and
//! a brevity penalty; zero-count higher-order precisions are smoothed add-1,
//! but a candidate with no unigram overlap scores 0. ROUGE-1/2/L are F1
//! scores on whitespace tokens, ROUGE-L via longest common subsequence.

/// Normalization applied to both sides of a denotation comparison:
/// trim, strip one pair of surrounding quotes, strip one trailing period,
/// lowercase, collapse internal whitespace.
pub fn normalize_denotation(text: &str) -> String {
    let mut s = text.trim();
    for quote in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(quote) && s.ends_with(quote) {
            s = &s[1..s.len() - 1];
        }
    }
    let s = s.trim();
    let s = s.strip_suffix('.').unwrap_or(s);
    s.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_denotation_number(s: &str) -> Option<f64> {
    let cleaned = s.replace([',', '%'], "");
    let cleaned = cleaned.trim();
    if cleaned.is_empty() {
        return None;
    }
    cleaned.parse::<f64>().ok()
}

fn numbers_equal(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= 1e-6 * scale
}

/// Set-style denotation accuracy check: the prediction matches if it equals
/// any gold after normalization, or both sides parse as numbers that are
/// equal within 1e-6 relative tolerance.
pub fn denotation_match(pred: &str, golds: &[String]) -> bool {
    let pred_norm = normalize_denotation(pred);
    let pred_num = parse_denotation_number(&pred_norm);
    golds.iter().any(|gold| {
        let gold_norm = normalize_denotation(gold);
        if pred_norm == gold_norm {
            return true;
        }
        match (pred_num, parse_denotation_number(&gold_norm)) {
            (Some(a), Some(b)) => numbers_equal(a, b),
            _ => false,
        }
    })
}

/// Fraction of exact True/False matches. Predictions that are neither
/// "True" nor "False" after normalization count as incorrect.
pub fn binary_accuracy(preds: &[String], golds: &[String]) -> f64 {
    assert_eq!(preds.len(), golds.len());
    if preds.is_empty() {
        return 0.0;
    }
    let correct = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| {
            let p = match p.to_lowercase().as_str() {
                "true" | "yes" => "True",
                "false" | "no" => "False",
                _ => return false,
            };
            p == g.as_str()
        })
        .count();
    correct as f64 / preds.len() as f64
}

fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn ngram_counts<'a>(
    tokens: &[&'a str],
    n: usize,
) -> std::collections::HashMap<Vec<&'a str>, usize> {
    let mut counts = std::collections::HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU-4 of `pred` against one or more references, in [0, 1].
pub fn bleu(pred: &str, refs: &[String]) -> f64 {
    let cand = tokens(pred);
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let refs_tok: Vec<Vec<&str>> = refs.iter().map(|r| tokens(r)).collect();
    let c = cand.len();
    // closest reference length; ties toward the shorter reference
    let r = refs_tok
        .iter()
        .map(|rt| rt.len())
        .min_by_key(|len| ((*len as i64 - c as i64).abs(), *len))
        .unwrap_or(0);
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_ngrams = ngram_counts(&cand, n);
        let hypothesis_total: usize = cand_ngrams.values().sum();
        let mut max_ref: std::collections::HashMap<Vec<&str>, usize> =
            std::collections::HashMap::new();
        for rt in &refs_tok {
            for (gram, count) in ngram_counts(rt, n) {
                let entry = max_ref.entry(gram).or_insert(0);
                *entry = (*entry).max(count);
            }
        }
        let matched: usize = cand_ngrams
            .iter()
            .map(|(gram, count)| (*count).min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        if n == 1 && matched == 0 {
            return 0.0;
        }
        let precision = if hypothesis_total == 0 {
            1.0
        } else if matched == 0 {
            1.0 / (hypothesis_total as f64 + 1.0)
        } else {
            matched as f64 / hypothesis_total as f64
        };
        log_sum += precision.ln();
    }
    let brevity = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    brevity * (log_sum / 4.0).exp()
}

/// ROUGE-N F1 for n in {1, 2}.
pub fn rouge_n(pred: &str, reference: &str, n: usize) -> f64 {
    assert!(n == 1 || n == 2, "rouge_n supports n in {{1, 2}}");
    let cand = ngram_counts(&tokens(pred), n);
    let refc = ngram_counts(&tokens(reference), n);
    let cand_total: usize = cand.values().sum();
    let ref_total: usize = refc.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let matched: usize = cand
        .iter()
        .map(|(gram, count)| (*count).min(refc.get(gram).copied().unwrap_or(0)))
        .sum();
    let precision = matched as f64 / cand_total as f64;
    let recall = matched as f64 / ref_total as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            dp[i][j] = if a[i - 1] == b[j - 1] {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    dp[a.len()][b.len()]
}

/// ROUGE-L F1 (equal-weight harmonic mean), symmetric in its arguments.
pub fn rouge_l(pred: &str, reference: &str) -> f64 {
    let cand = tokens(pred);
    let refs = tokens(reference);
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&cand, &refs);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / cand.len() as f64;
    let recall = lcs as f64 / refs.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
