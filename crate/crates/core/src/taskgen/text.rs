//! Sentence templates, rendering and the rule-based parser back to triples.

use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::graph::Triple;
use crate::relation::{RelationLabel, NUM_LABELS};

use super::Question;

/// `{a}` holds the relation `label` to `{b}`.
const TEMPLATES: [(RelationLabel, &[&str]); NUM_LABELS] = [
    (
        RelationLabel::Above,
        &[
            "{a} is above {b}.",
            "{a} is placed on top of {b}.",
            "{a} sits directly above {b} in the same column.",
        ],
    ),
    (
        RelationLabel::Below,
        &[
            "{a} is below {b}.",
            "{a} is placed under {b}.",
            "{a} sits directly below {b} in the same column.",
        ],
    ),
    (
        RelationLabel::Left,
        &[
            "{a} is to the left of {b} and is on the same horizontal plane.",
            "{a} is left of {b}.",
            "{a} is placed at the left side of {b}.",
        ],
    ),
    (
        RelationLabel::Right,
        &[
            "{a} is to the right of {b} and is on the same horizontal plane.",
            "{a} is right of {b}.",
            "{a} is placed at the right side of {b}.",
        ],
    ),
    (
        RelationLabel::UpperLeft,
        &[
            "{a} is to the upper left of {b}.",
            "{a} is above and to the left of {b}.",
            "{a} is north west of {b}.",
        ],
    ),
    (
        RelationLabel::UpperRight,
        &[
            "{a} is to the upper right of {b}.",
            "{a} is above and to the right of {b}.",
            "{a} is north east of {b}.",
        ],
    ),
    (
        RelationLabel::LowerLeft,
        &[
            "{a} is to the lower left of {b}.",
            "{a} is below and to the left of {b}.",
            "{a} is south west of {b}.",
        ],
    ),
    (
        RelationLabel::LowerRight,
        &[
            "{a} is to the lower right of {b}.",
            "{a} is below and to the right of {b}.",
            "{a} is south east of {b}.",
        ],
    ),
    (
        RelationLabel::Overlap,
        &[
            "{a} and {b} are at the same location.",
            "{a} is at the same spot as {b}.",
            "{a} overlaps {b}.",
        ],
    ),
];

const QUESTION: &str = "What is the relation of the agent {a} to the agent {b}?";

pub fn templates(label: RelationLabel) -> &'static [&'static str] {
    TEMPLATES[label.index()].1
}

fn fill(template: &str, a: &str, b: &str) -> String {
    template.replace("{a}", a).replace("{b}", b)
}

/// `template` picks among the label's paraphrases, modulo their count.
pub fn render_triple(t: &Triple, template: usize) -> String {
    let ts = templates(t.relation);
    fill(ts[template % ts.len()], &t.src, &t.dst)
}

pub fn render_question(q: &Question) -> String {
    fill(QUESTION, &q.source, &q.target)
}

/// Story sentences followed by the question, one per line.
pub fn render_text(sentences: &[String], q: &Question) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(s);
        out.push('\n');
    }
    out.push_str(&render_question(q));
    out.push('\n');
    out
}

struct Grammar {
    sentences: Vec<(Regex, RelationLabel)>,
    question: Regex,
    splitter: Regex,
}

fn to_regex(template: &str) -> Regex {
    let pattern = regex::escape(template)
        .replace(r"\{a\}", "([A-Z])")
        .replace(r"\{b\}", "([A-Z])");
    Regex::new(&format!("^{pattern}$")).expect("templates are valid patterns")
}

fn grammar() -> &'static Grammar {
    static G: OnceLock<Grammar> = OnceLock::new();
    G.get_or_init(|| Grammar {
        sentences: TEMPLATES
            .iter()
            .flat_map(|(label, ts)| ts.iter().map(move |t| (to_regex(t), *label)))
            .collect(),
        question: to_regex(QUESTION),
        splitter: Regex::new(r"[^.?]+[.?]").expect("valid pattern"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedStory {
    pub triples: Vec<Triple>,
    pub question: Option<Question>,
}

/// Split `text` into sentences on `.` and `?`.
pub fn split_sentences(text: &str) -> Vec<String> {
    grammar()
        .splitter
        .find_iter(text)
        .map(|m| m.as_str().trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Recognize one story sentence.
pub fn parse_sentence(sentence: &str, index: usize) -> Result<Triple> {
    let s = sentence.trim();
    for (re, label) in &grammar().sentences {
        if let Some(c) = re.captures(s) {
            return Ok(Triple::new(&c[1], *label, &c[2]));
        }
    }
    Err(Error::Parse {
        index,
        sentence: s.to_string(),
    })
}

/// Triples in sentence order plus the question, if one is present.
/// Text after the question is rejected.
pub fn parse(text: &str) -> Result<ParsedStory> {
    let sentences = split_sentences(text);
    if sentences.is_empty() {
        return Err(Error::Parse {
            index: 0,
            sentence: text.trim().to_string(),
        });
    }
    let mut triples = Vec::new();
    let mut question = None;
    for (i, s) in sentences.iter().enumerate() {
        if question.is_some() {
            return Err(Error::Parse {
                index: i,
                sentence: s.clone(),
            });
        }
        if let Some(c) = grammar().question.captures(s) {
            question = Some(Question {
                source: c[1].to_string(),
                target: c[2].to_string(),
            });
        } else {
            triples.push(parse_sentence(s, i)?);
        }
    }
    Ok(ParsedStory { triples, question })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_template_strings() {
        let t = Triple::new("A", RelationLabel::Left, "B");
        assert_eq!(
            render_triple(&t, 0),
            "A is to the left of B and is on the same horizontal plane."
        );
        let t = Triple::new("A", RelationLabel::Overlap, "B");
        assert_eq!(render_triple(&t, 0), "A and B are at the same location.");
        let q = Question {
            source: "X".into(),
            target: "Y".into(),
        };
        assert_eq!(
            render_question(&q),
            "What is the relation of the agent X to the agent Y?"
        );
    }

    #[test]
    fn every_template_parses_to_itself_only() {
        for label in RelationLabel::ALL {
            assert!(templates(label).len() >= 3);
            for i in 0..templates(label).len() {
                let t = Triple::new("Q", label, "Z");
                let s = render_triple(&t, i);
                let hits = grammar().sentences.iter().filter(|(re, _)| re.is_match(&s)).count();
                assert_eq!(hits, 1, "{s}");
                assert_eq!(parse_sentence(&s, 0).unwrap(), t);
            }
        }
    }

    #[test]
    fn rejects_sentences_without_entities() {
        let err = parse("A is left of B. the box is left of the ball.").unwrap_err();
        assert!(matches!(err, Error::Parse { index: 1, .. }));
        assert!(parse("").is_err());
    }

    #[test]
    fn parses_question_and_inline_text() {
        let p = parse("K is north west of C. What is the relation of the agent K to the agent C?").unwrap();
        assert_eq!(p.triples, [Triple::new("K", RelationLabel::UpperLeft, "C")]);
        assert_eq!(p.question.unwrap().source, "K");
    }
}
