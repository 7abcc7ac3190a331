//! Automatic metrics for generated lemma names: character-level BLEU-4 with
//! add-one smoothing on higher-order n-grams, fragment accuracy over
//! underscore-delimited pieces, top-k exact-match accuracy, and paired
//! bootstrap significance testing.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("empty reference")]
    EmptyReference,
    #[error("empty name")]
    EmptyName,
    #[error("paired score lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu4: f64,
    pub frag_acc: f64,
    pub top1: f64,
    pub top5: f64,
    pub n: usize,
}

fn char_ngrams(s: &str, n: usize) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    let chars: Vec<usize> = s.char_indices().map(|(i, _)| i).chain([s.len()]).collect();
    if chars.len() > n {
        for w in chars.windows(n + 1) {
            *counts.entry(&s[w[0]..w[n]]).or_insert(0) += 1;
        }
    }
    counts
}

/// Character-level BLEU with 1..4-grams. p1 is the plain modified precision;
/// for n >= 2 the precision is smoothed to (matches+1)/(total+1). Brevity
/// penalty min(1, exp(1 - |ref|/|cand|)) over character counts.
pub fn bleu4_char(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = char_ngrams(candidate, n);
        let refs = char_ngrams(reference, n);
        let total: usize = cand.values().sum();
        let matches: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            if matches == 0 {
                return Ok(0.0);
            }
            matches as f64 / total as f64
        } else {
            (matches as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let cand_len = candidate.chars().count() as f64;
    let ref_len = reference.chars().count() as f64;
    let bp = (1.0 - ref_len / cand_len).exp().min(1.0);
    Ok(bp * (log_sum / 4.0).exp())
}

fn fragments(name: &str) -> Vec<&str> {
    name.split('_').filter(|f| !f.is_empty()).collect()
}

/// Order-insensitive overlap of underscore-delimited fragments, normalized by
/// the candidate's fragment count. A symmetric variant (normalizing by the
/// larger count) is available behind a flag.
pub fn fragment_accuracy(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    fragment_accuracy_with(candidate, reference, false)
}

pub fn fragment_accuracy_with(
    candidate: &str,
    reference: &str,
    symmetric: bool,
) -> Result<f64, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptyName);
    }
    let cand = fragments(candidate);
    let refs = fragments(reference);
    if cand.is_empty() {
        return Err(MetricError::EmptyName);
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for f in &refs {
        *ref_counts.entry(f).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for f in &cand {
        if let Some(c) = ref_counts.get_mut(f) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let denom = if symmetric { cand.len().max(refs.len()) } else { cand.len() };
    Ok(overlap as f64 / denom as f64)
}

/// 1 iff the reference appears verbatim among the first k suggestions.
pub fn topk_accuracy(suggestions: &[String], reference: &str, k: usize) -> f64 {
    let k = k.min(suggestions.len());
    if suggestions[..k].iter().any(|s| s == reference) {
        1.0
    } else {
        0.0
    }
}

/// Paired bootstrap test, one-sided with system A hypothesized better.
/// Resamples lemma indices with replacement; the p-value is the fraction of
/// resamples whose mean favors B, with exact ties counted as half.
pub fn bootstrap_compare(
    scores_a: &[f64],
    scores_b: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<f64, MetricError> {
    if scores_a.len() != scores_b.len() {
        return Err(MetricError::LengthMismatch(scores_a.len(), scores_b.len()));
    }
    let n = scores_a.len();
    if n == 0 {
        return Err(MetricError::LengthMismatch(0, 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weight = 0.0;
    for _ in 0..resamples {
        let mut diff = 0.0;
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            diff += scores_a[i] - scores_b[i];
        }
        if diff < 0.0 {
            weight += 1.0;
        } else if diff == 0.0 {
            weight += 0.5;
        }
    }
    Ok(weight / resamples as f64)
}

/// Aggregate per-lemma metrics for one evaluation run.
pub fn aggregate(
    per_lemma: &[(f64, f64, f64, f64)], // (bleu4, frag_acc, top1, top5)
) -> MetricReport {
    let n = per_lemma.len();
    if n == 0 {
        return MetricReport::default();
    }
    let mut sums = (0.0, 0.0, 0.0, 0.0);
    for &(b, f, t1, t5) in per_lemma {
        sums.0 += b;
        sums.1 += f;
        sums.2 += t1;
        sums.3 += t5;
    }
    let nf = n as f64;
    MetricReport {
        bleu4: sums.0 / nf,
        frag_acc: sums.1 / nf,
        top1: sums.2 / nf,
        top5: sums.3 / nf,
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: enumerate every n-gram by slicing, count matches
    /// by repeated scanning. Independent of the HashMap-based implementation.
    fn bleu4_oracle(candidate: &str, reference: &str) -> f64 {
        if candidate.is_empty() {
            return 0.0;
        }
        let cand: Vec<char> = candidate.chars().collect();
        let refs: Vec<char> = reference.chars().collect();
        let grams = |s: &[char], n: usize| -> Vec<String> {
            if s.len() < n {
                return vec![];
            }
            (0..=s.len() - n).map(|i| s[i..i + n].iter().collect()).collect()
        };
        let mut log_sum = 0.0;
        for n in 1..=4 {
            let cg = grams(&cand, n);
            let rg = grams(&refs, n);
            let total = cg.len();
            let mut remaining = rg.clone();
            let mut matches = 0usize;
            for g in &cg {
                if let Some(pos) = remaining.iter().position(|r| r == g) {
                    remaining.swap_remove(pos);
                    matches += 1;
                }
            }
            let p = if n == 1 {
                if matches == 0 {
                    return 0.0;
                }
                matches as f64 / total as f64
            } else {
                (matches as f64 + 1.0) / (total as f64 + 1.0)
            };
            log_sum += p.ln();
        }
        let bp = (1.0 - refs.len() as f64 / cand.len() as f64).exp().min(1.0);
        bp * (log_sum / 4.0).exp()
    }

    #[test]
    fn identical_strings_score_one() {
        assert!((bleu4_char("mg_eq_nerode", "mg_eq_nerode").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        assert_eq!(bleu4_char("", "abc").unwrap(), 0.0);
        assert_eq!(bleu4_char("x", ""), Err(MetricError::EmptyReference));
    }

    #[test]
    fn short_candidate_matches_oracle() {
        let got = bleu4_char("ab", "abc").unwrap();
        let want = bleu4_oracle("ab", "abc");
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn random_pairs_match_oracle() {
        // Deterministic pseudo-random identifier pairs.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let alphabet: Vec<char> = "abcdeg_".chars().collect();
        for _ in 0..50 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
                let len = rng.gen_range(1..14);
                (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let got = bleu4_char(&a, &b).unwrap();
            let want = bleu4_oracle(&a, &b);
            assert!((got - want).abs() < 1e-9, "{a} vs {b}: {got} != {want}");
        }
    }

    #[test]
    fn fragment_accuracy_worked_example() {
        let got = fragment_accuracy("map_determinant_mx", "det_map_mx").unwrap();
        assert!((got - 2.0 / 3.0).abs() < 5e-4);
    }

    #[test]
    fn fragment_accuracy_bounds_and_order() {
        assert_eq!(fragment_accuracy("a_b", "a_b").unwrap(), 1.0);
        assert_eq!(fragment_accuracy("a_b", "b_a").unwrap(), 1.0);
        assert_eq!(fragment_accuracy("x_y", "a_b").unwrap(), 0.0);
        // Consecutive underscores produce no empty fragments.
        assert_eq!(fragment_accuracy("a__b", "a_b").unwrap(), 1.0);
        assert_eq!(fragment_accuracy("", "a"), Err(MetricError::EmptyName));
    }

    #[test]
    fn fragment_accuracy_multiset_semantics() {
        // Candidate repeats a fragment that occurs once in the reference.
        assert!((fragment_accuracy("a_a_b", "a_b").unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn topk_semantics() {
        let sugg: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        assert_eq!(topk_accuracy(&sugg, "x", 1), 1.0);
        assert_eq!(topk_accuracy(&sugg, "z", 1), 0.0);
        assert_eq!(topk_accuracy(&sugg, "z", 5), 1.0);
    }

    #[test]
    fn bootstrap_identical_systems_is_half() {
        let a = vec![0.5; 40];
        let p = bootstrap_compare(&a, &a, 2000, 3).unwrap();
        assert!((p - 0.5).abs() <= 0.02, "p = {p}");
    }

    #[test]
    fn bootstrap_dominant_system_is_zero() {
        let b = vec![0.0; 30];
        let a: Vec<f64> = b.iter().map(|x| x + 1.0).collect();
        assert_eq!(bootstrap_compare(&a, &b, 1000, 3).unwrap(), 0.0);
    }

    #[test]
    fn bootstrap_three_sigma_gap_is_significant() {
        // Monte-Carlo oracle: 30 paired points, gap of 3 standard errors.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 30;
        let sigma = 1.0;
        let se = sigma / (n as f64).sqrt();
        let gap = 3.0 * se;
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.732..1.732) * sigma).collect();
        let a: Vec<f64> = b.iter().map(|x| x + gap).collect();
        let p = bootstrap_compare(&a, &b, 10_000, 5).unwrap();
        assert!(p < 0.05, "p = {p}");
    }

    #[test]
    fn bootstrap_length_mismatch() {
        assert_eq!(
            bootstrap_compare(&[1.0], &[1.0, 2.0], 10, 0),
            Err(MetricError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn aggregate_is_the_mean() {
        let report = aggregate(&[(1.0, 1.0, 1.0, 1.0), (0.0, 0.5, 0.0, 1.0)]);
        assert_eq!(report.n, 2);
        assert!((report.bleu4 - 0.5).abs() < 1e-12);
        assert!((report.frag_acc - 0.75).abs() < 1e-12);
        assert!(report.top1 <= report.top5);
    }
}
