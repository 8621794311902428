//! Dot-separated topics and subscription patterns.
//!
//! A topic is one or more segments of `[a-z0-9_-]+` joined by dots. A
//! pattern may also use `*` for exactly one segment and, as its last segment
//! only, `#` for zero or more trailing segments.

use std::fmt;

use crate::BusError;

fn valid_segment(seg: &str) -> bool {
    !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topic(String);

impl Topic {
    pub fn parse(s: &str) -> Result<Self, BusError> {
        if s.split('.').all(valid_segment) {
            Ok(Topic(s.to_owned()))
        } else {
            Err(BusError::InvalidTopic(s.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Segment {
    Literal(String),
    One,
    Rest,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    raw: String,
    segments: Vec<Segment>,
}

impl Pattern {
    pub fn parse(s: &str) -> Result<Self, BusError> {
        let parts: Vec<&str> = s.split('.').collect();
        let mut segments = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let seg = match *part {
                "*" => Segment::One,
                "#" if i == parts.len() - 1 => Segment::Rest,
                p if valid_segment(p) => Segment::Literal(p.to_owned()),
                _ => return Err(BusError::InvalidPattern(s.to_owned())),
            };
            segments.push(seg);
        }
        Ok(Pattern { raw: s.to_owned(), segments })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn matches(&self, topic: &str) -> bool {
        let mut segs = topic.split('.');
        for pat in &self.segments {
            match pat {
                Segment::Rest => return true,
                Segment::One => {
                    if segs.next().is_none() {
                        return false;
                    }
                }
                Segment::Literal(lit) => {
                    if segs.next() != Some(lit.as_str()) {
                        return false;
                    }
                }
            }
        }
        segs.next().is_none()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(p: &str, t: &str) -> bool {
        Pattern::parse(p).unwrap().matches(t)
    }

    #[test]
    fn hash_matches_zero_or_more_trailing() {
        assert!(m("incubator.#", "incubator.driver.state"));
        assert!(m("incubator.#", "incubator"));
        assert!(m("#", "a.b.c"));
        assert!(!m("incubator.#", "other.driver"));
    }

    #[test]
    fn star_is_exactly_one_segment() {
        assert!(m("incubator.*.state", "incubator.driver.state"));
        assert!(!m("incubator.*.state", "incubator.state"));
        assert!(!m("incubator.*", "incubator.driver.state"));
    }

    #[test]
    fn literal_patterns_match_exactly() {
        assert!(m("a.b", "a.b"));
        assert!(!m("a.b", "a.b.c"));
        assert!(!m("a.b.c", "a.b"));
    }

    #[test]
    fn grammar_rejections() {
        assert!(Topic::parse("Incubator.x").is_err());
        assert!(Topic::parse("a..b").is_err());
        assert!(Topic::parse("").is_err());
        assert!(Topic::parse("a.*").is_err());
        assert!(Topic::parse("incubator.driver-1.state_x").is_ok());
        assert!(Pattern::parse("a.#.b").is_err());
        assert!(Pattern::parse("a.b*").is_err());
        assert!(Pattern::parse("*.#").is_ok());
    }
}
