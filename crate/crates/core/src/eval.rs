//! Evaluation metrics: RMSE over held-out ratings and corpus-level
//! BLEU-1..4 for generated captions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metric report emitted as a single JSON object and appended to the
/// metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: Option<f64>,
    pub bleu: Option<[f64; 4]>,
    pub n_test: usize,
}

/// `sqrt(sum (r - r_hat)^2 / n)`.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no prediction pairs".into()));
    }
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths.iter())
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to the candidate length; ties prefer the
/// shorter reference.
fn effective_ref_len(cand_len: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| {
            let diff = (len as isize - cand_len as isize).abs();
            (diff, len)
        })
        .unwrap_or(0)
}

/// Corpus-level BLEU-1..4 with clipped modified n-gram precisions pooled
/// over the whole corpus and brevity penalty
/// `BP = min(1, exp(1 - ref_len / cand_len))`. A zero precision at any
/// order k <= n makes BLEU-n exactly zero; no smoothing is applied.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<[f64; 4]> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidate captions".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Shape(format!(
            "{} candidates vs {} reference groups",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;

    for (cand, refs) in candidates.iter().zip(references.iter()) {
        cand_len += cand.len();
        ref_len += effective_ref_len(cand.len(), refs);
        for n in 1..=4 {
            let cand_grams = ngram_counts(cand, n);
            let ref_grams: Vec<HashMap<&[String], usize>> =
                refs.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, count) in &cand_grams {
                let clip = ref_grams
                    .iter()
                    .map(|rg| rg.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                matched[n - 1] += (*count).min(clip);
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }

    let bp = if cand_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp().min(1.0)
    };

    let mut scores = [0.0f64; 4];
    for n in 1..=4 {
        let mut log_sum = 0.0;
        let mut zero = false;
        for k in 1..=n {
            if matched[k - 1] == 0 || total[k - 1] == 0 {
                zero = true;
                break;
            }
            log_sum += (matched[k - 1] as f64 / total[k - 1] as f64).ln();
        }
        scores[n - 1] = if zero {
            0.0
        } else {
            bp * (log_sum / n as f64).exp()
        };
    }
    Ok(scores)
}

/// Convenience wrapper for the common one-reference-per-candidate case.
pub fn bleu_single(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<[f64; 4]> {
    let grouped: Vec<Vec<Vec<String>>> = references.iter().map(|r| vec![r.clone()]).collect();
    bleu(candidates, &grouped)
}

/// Per-sentence BLEU-n with add-one smoothing on orders n >= 2. Debug
/// aid only; the corpus-level scores above are the reported metric.
pub fn sentence_bleu_smoothed(candidate: &[String], reference: &[String]) -> [f64; 4] {
    let cand_len = candidate.len();
    let bp = if cand_len == 0 {
        0.0
    } else {
        (1.0 - reference.len() as f64 / cand_len as f64).exp().min(1.0)
    };
    let mut precisions = [0.0f64; 4];
    for n in 1..=4 {
        let cand_grams = ngram_counts(candidate, n);
        let ref_grams = ngram_counts(reference, n);
        let mut matched = 0usize;
        for (gram, count) in &cand_grams {
            matched += (*count).min(ref_grams.get(gram).copied().unwrap_or(0));
        }
        let total = cand_len.saturating_sub(n - 1);
        precisions[n - 1] = if n == 1 {
            if total == 0 { 0.0 } else { matched as f64 / total as f64 }
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
    }
    let mut scores = [0.0f64; 4];
    for n in 1..=4 {
        let mut log_sum = 0.0;
        let mut zero = false;
        for k in 1..=n {
            if precisions[k - 1] == 0.0 {
                zero = true;
                break;
            }
            log_sum += precisions[k - 1].ln();
        }
        scores[n - 1] = if zero { 0.0 } else { bp * (log_sum / n as f64).exp() };
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[4.0], &[3.0]).unwrap(), 1.0);
        let got = rmse(&[2.0, 2.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        // direct summation: (1 + 0 + 4) / 3
        let want = (5.0f64 / 3.0).sqrt();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 1.29099).abs() < 1e-5);
    }

    #[test]
    fn rmse_errors() {
        assert!(matches!(rmse(&[], &[]), Err(Error::EmptyInput(_))));
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn bleu_identical_is_one() {
        let c = vec![toks("a man runs fast today")];
        let r = vec![toks("a man runs fast today")];
        let scores = bleu_single(&c, &r).unwrap();
        for s in scores {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bleu_no_overlap_is_zero() {
        let c = vec![toks("x y z")];
        let r = vec![toks("a b c")];
        let scores = bleu_single(&c, &r).unwrap();
        assert_eq!(scores, [0.0; 4]);
    }

    #[test]
    fn bleu_clipping_hand_case() {
        // candidate "the the the" vs reference "the cat": the unigram
        // count of "the" clips to 1, so p1 = 1/3; BP = min(1, e^{1/3}) = 1
        let c = vec![toks("the the the")];
        let r = vec![toks("the cat")];
        let scores = bleu_single(&c, &r).unwrap();
        assert!((scores[0] - 1.0 / 3.0).abs() < 1e-6);
        assert_eq!(scores[1], 0.0); // no bigram overlap
    }

    #[test]
    fn bleu_brevity_penalty() {
        // short candidate: BP = exp(1 - 4/2)
        let c = vec![toks("a man")];
        let r = vec![toks("a man runs fast")];
        let scores = bleu_single(&c, &r).unwrap();
        let bp = (1.0f64 - 2.0).exp();
        assert!((scores[0] - bp).abs() < 1e-12);
    }

    #[test]
    fn bleu_multi_reference_picks_closest_length() {
        // clipping pools over every reference, so p1 = 1 in both cases;
        // only the brevity penalty distinguishes the length choices
        let c = vec![toks("a b c")];
        // closest length to 3 is 4 (|3-4| = 1 < |3-7| = 4): BP = e^{1-4/3}
        let refs = vec![vec![toks("a b c d e f g"), toks("a b c d")]];
        let scores = bleu(&c, &refs).unwrap();
        let bp = (1.0f64 - 4.0 / 3.0).exp();
        assert!((scores[0] - bp).abs() < 1e-12);

        // a distance tie (2 vs 4) prefers the shorter reference: BP = 1
        let refs_tie = vec![vec![toks("a b c d"), toks("a b")]];
        let tie_scores = bleu(&c, &refs_tie).unwrap();
        assert!((tie_scores[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_empty_corpus_errors() {
        assert!(matches!(bleu(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn sentence_smoothing_nonzero_on_short() {
        let s = sentence_bleu_smoothed(&toks("a b"), &toks("a b"));
        assert!((s[0] - 1.0).abs() < 1e-12);
        // trigram precision is smoothed to 1/(0+1), not a hard zero
        assert!(s[2] > 0.0);
    }

    proptest! {
        #[test]
        fn rmse_permutation_and_scaling(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
            c in -3.0f64..3.0,
            seed in 0u64..100,
        ) {
            let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let truths: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let base = rmse(&preds, &truths).unwrap();

            // shuffle pairs
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            idx.shuffle(&mut rng);
            let preds_p: Vec<f64> = idx.iter().map(|&i| preds[i]).collect();
            let truths_p: Vec<f64> = idx.iter().map(|&i| truths[i]).collect();
            prop_assert!((rmse(&preds_p, &truths_p).unwrap() - base).abs() <= 1e-12);

            // scale every error by c: predictions = truth + c * (pred - truth)
            let scaled: Vec<f64> = preds.iter().zip(truths.iter())
                .map(|(p, t)| t + c * (p - t))
                .collect();
            let scaled_rmse = rmse(&scaled, &truths).unwrap();
            prop_assert!((scaled_rmse - c.abs() * base).abs() <= 1e-9);
        }

        #[test]
        fn bleu_monotone_and_order_invariant(seed in 0u64..200) {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..6);
            let mut cands = Vec::new();
            let mut refs = Vec::new();
            for _ in 0..n {
                let len = rng.gen_range(5..10);
                let r: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..4))).collect();
                // candidate shares a prefix with its reference
                let keep = rng.gen_range(4..=len);
                let c: Vec<String> = r[..keep].to_vec();
                cands.push(c);
                refs.push(r);
            }
            let scores = bleu_single(&cands, &refs).unwrap();
            if scores.iter().all(|s| *s > 0.0) {
                for n in 1..4 {
                    prop_assert!(scores[n] <= scores[n - 1] + 1e-12);
                }
            }
            // candidate order invariance
            let mut rev_c = cands.clone();
            rev_c.reverse();
            let mut rev_r = refs.clone();
            rev_r.reverse();
            let rev_scores = bleu_single(&rev_c, &rev_r).unwrap();
            for (a, b) in scores.iter().zip(rev_scores.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
