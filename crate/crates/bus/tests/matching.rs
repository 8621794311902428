//! Exhaustive check of pattern matching against an expansion-based matcher
//! over every topic and pattern of up to four segments on the alphabet {a, b}.

use std::collections::HashSet;

use incubator_bus::Pattern;
use proptest::prelude::*;

const ALPHABET: [&str; 2] = ["a", "b"];
const MAX_SEGMENTS: usize = 4;

fn all_topics() -> Vec<Vec<&'static str>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<&str>> = vec![vec![]];
    for _ in 0..MAX_SEGMENTS {
        layer = layer.iter().flat_map(|t| ALPHABET.iter().map(move |s| [t.clone(), vec![*s]].concat())).collect();
        out.extend(layer.clone());
    }
    out
}

fn all_patterns() -> Vec<Vec<&'static str>> {
    let symbols = ["a", "b", "*"];
    let mut out = Vec::new();
    let mut layer: Vec<Vec<&str>> = vec![vec![]];
    for _ in 0..MAX_SEGMENTS {
        // a trailing '#' may follow any prefix, including the empty one
        for prefix in &layer {
            out.push([prefix.clone(), vec!["#"]].concat());
        }
        layer = layer.iter().flat_map(|t| symbols.iter().map(move |s| [t.clone(), vec![*s]].concat())).collect();
        out.extend(layer.clone());
    }
    out
}

/// Every topic of at most `MAX_SEGMENTS` segments the pattern denotes,
/// built by substituting each wildcard with all of its expansions.
fn expand(pattern: &[&str]) -> HashSet<String> {
    let mut partial: Vec<Vec<String>> = vec![vec![]];
    for seg in pattern {
        partial = match *seg {
            "*" => partial.iter().flat_map(|p| ALPHABET.iter().map(move |s| [p.clone(), vec![s.to_string()]].concat())).collect(),
            "#" => {
                let mut grown = Vec::new();
                for p in &partial {
                    let mut frontier = vec![p.clone()];
                    grown.push(p.clone());
                    while frontier[0].len() < MAX_SEGMENTS {
                        frontier = frontier
                            .iter()
                            .flat_map(|f| ALPHABET.iter().map(move |s| [f.clone(), vec![s.to_string()]].concat()))
                            .collect();
                        grown.extend(frontier.clone());
                    }
                }
                grown
            }
            lit => partial.iter().map(|p| [p.clone(), vec![lit.to_string()]].concat()).collect(),
        };
    }
    partial.into_iter().filter(|t| !t.is_empty() && t.len() <= MAX_SEGMENTS).map(|t| t.join(".")).collect()
}

#[test]
fn matcher_equals_expansion_oracle() {
    let topics = all_topics();
    let patterns = all_patterns();
    assert_eq!(topics.len(), 2 + 4 + 8 + 16);
    let mut checked = 0;
    for pat in &patterns {
        let raw = pat.join(".");
        let compiled = Pattern::parse(&raw).unwrap();
        let denoted = expand(pat);
        for topic in &topics {
            let t = topic.join(".");
            assert_eq!(compiled.matches(&t), denoted.contains(&t), "pattern {raw} topic {t}");
            checked += 1;
        }
    }
    assert!(checked > 3000);
}

proptest! {
    #[test]
    fn literal_pattern_matches_only_itself(a in "[a-c]{1,3}(\\.[a-c]{1,3}){0,3}", b in "[a-c]{1,3}(\\.[a-c]{1,3}){0,3}") {
        let p = Pattern::parse(&a).unwrap();
        prop_assert_eq!(p.matches(&b), a == b);
    }
}
