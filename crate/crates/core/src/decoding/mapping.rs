use strsim::generic_levenshtein;

use crate::error::{Error, Result};
use crate::plan::ActionInstance;

/// Lowercases and collapses whitespace.
pub fn normalize_text(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_owned).collect()
}

/// Closest vocabulary action by word-level edit distance to the normalized
/// text; ties go to the lexicographically smaller action. Returns the
/// action and its distance.
pub fn map_to_admissible(text: &str, vocab: &[ActionInstance]) -> Result<(ActionInstance, usize)> {
    let words = normalize_text(text);
    let mut best: Option<(&ActionInstance, usize)> = None;
    for a in vocab {
        let d = generic_levenshtein(&words, &a.tokens);
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && a < b),
        };
        if better {
            best = Some((a, d));
        }
    }
    best.map(|(a, d)| (a.clone(), d))
        .ok_or_else(|| Error::contract("cannot map onto an empty vocabulary"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{reset, EnvId, Split};
    use crate::plan::Symbol;

    fn act(text: &str) -> ActionInstance {
        ActionInstance::new(text, Symbol::new("x", Vec::<String>::new()), false).unwrap()
    }

    /// Word-level edit distance by the textbook dynamic program.
    fn dp_distance(a: &[String], b: &[String]) -> usize {
        let mut row: Vec<usize> = (0..=b.len()).collect();
        for i in 1..=a.len() {
            let mut prev = row[0];
            row[0] = i;
            for j in 1..=b.len() {
                let cur = row[j];
                row[j] = (row[j] + 1)
                    .min(row[j - 1] + 1)
                    .min(prev + usize::from(a[i - 1] != b[j - 1]));
                prev = cur;
            }
        }
        row[b.len()]
    }

    #[test]
    fn exact_text_maps_to_itself() {
        let ep = reset(EnvId::Gridworld, 0, Split::Test).unwrap();
        for a in ep.vocabulary() {
            assert_eq!(map_to_admissible(&a.text, &ep.vocabulary()).unwrap(), (a.clone(), 0));
        }
    }

    #[test]
    fn free_text_maps_to_nearest() {
        let vocab = vec![
            act("drop key in void"),
            act("pick up green ball"),
            act("pick up yellow key"),
            act("toggle yellow door"),
        ];
        let (a, d) = map_to_admissible("Pickup  the yellow KEY", &vocab).unwrap();
        assert_eq!(a.text, "pick up yellow key");
        // pickup->pick, the->up
        assert_eq!(d, 2);
        assert_eq!(d, dp_distance(&normalize_text("pickup the yellow key"), &a.tokens));
    }

    #[test]
    fn ties_go_to_the_smaller_text() {
        let vocab = vec![act("pick up red key"), act("pick up blue key")];
        let (a, d) = map_to_admissible("pick up green key", &vocab).unwrap();
        assert_eq!((a.text.as_str(), d), ("pick up blue key", 1));
        assert!(map_to_admissible("x", &[]).is_err());
    }

    #[test]
    fn agrees_with_reference_distance() {
        let ep = reset(EnvId::Blocks, 5, Split::Test).unwrap();
        let vocab = ep.vocabulary();
        for text in [
            "put red block in bowl",
            "place the blue block 1 into gray bowl 2",
            "done",
            "",
        ] {
            let words = normalize_text(text);
            let (a, d) = map_to_admissible(text, &vocab).unwrap();
            let best = vocab.iter().map(|v| dp_distance(&words, &v.tokens)).min().unwrap();
            assert_eq!(d, best);
            assert_eq!(d, dp_distance(&words, &a.tokens));
            let first = vocab
                .iter()
                .filter(|v| dp_distance(&words, &v.tokens) == best)
                .min()
                .unwrap();
            assert_eq!(&a, first);
        }
    }
}
