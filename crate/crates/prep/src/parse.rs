//! Parsers for chat-model responses.
//!
//! The tolerated syntax is narrow on purpose: markdown code fences, `**`
//! emphasis, and either single or double quotes around list items. Anything
//! else is a parse error carrying the raw response.

use serde::{Deserialize, Serialize};

use crate::error::{PrepError, Result};

/// Decomposed request: per-subtask phrases followed by the full sentences,
/// and the per-subtask preserve-form flags followed by the scene flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDraft", into = "RawDraft")]
pub struct PlanDraft {
    source_list: Vec<String>,
    target_list: Vec<String>,
    preserve_form: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct RawDraft {
    source_list: Vec<String>,
    target_list: Vec<String>,
    preserve_form: Vec<bool>,
}

impl TryFrom<RawDraft> for PlanDraft {
    type Error = PrepError;

    fn try_from(r: RawDraft) -> Result<Self> {
        PlanDraft::new(r.source_list, r.target_list, r.preserve_form)
    }
}

impl From<PlanDraft> for RawDraft {
    fn from(d: PlanDraft) -> Self {
        RawDraft {
            source_list: d.source_list,
            target_list: d.target_list,
            preserve_form: d.preserve_form,
        }
    }
}

impl PlanDraft {
    pub fn new(
        source_list: Vec<String>,
        target_list: Vec<String>,
        preserve_form: Vec<bool>,
    ) -> Result<Self> {
        let n = source_list.len();
        if target_list.len() != n || preserve_form.len() != n {
            return Err(PrepError::MalformedPlan(format!(
                "list lengths differ: source {n}, target {}, preserve_form {}",
                target_list.len(),
                preserve_form.len()
            )));
        }
        if n < 2 {
            return Err(PrepError::MalformedPlan(format!(
                "need at least one subtask plus the full sentence, got {n} entries"
            )));
        }
        if let Some(e) = source_list
            .iter()
            .chain(&target_list)
            .find(|s| s.trim().is_empty())
        {
            return Err(PrepError::MalformedPlan(format!("empty entry {e:?}")));
        }
        Ok(Self {
            source_list,
            target_list,
            preserve_form,
        })
    }

    pub fn source_list(&self) -> &[String] {
        &self.source_list
    }

    pub fn target_list(&self) -> &[String] {
        &self.target_list
    }

    pub fn preserve_form(&self) -> &[bool] {
        &self.preserve_form
    }

    pub fn subtask_count(&self) -> usize {
        self.source_list.len() - 1
    }

    /// Per-subtask `(source, target, preserve_form)` triples, excluding the scene entry.
    pub fn subtasks(&self) -> impl Iterator<Item = (&str, &str, bool)> {
        let n = self.subtask_count();
        self.source_list[..n]
            .iter()
            .zip(&self.target_list[..n])
            .zip(&self.preserve_form[..n])
            .map(|((s, t), &p)| (s.as_str(), t.as_str(), p))
    }

    pub fn source_prompt(&self) -> &str {
        self.source_list.last().expect("at least two entries")
    }

    pub fn target_prompt(&self) -> &str {
        self.target_list.last().expect("at least two entries")
    }

    pub fn scene_preserve_form(&self) -> bool {
        *self.preserve_form.last().expect("at least two entries")
    }
}

fn strip_markdown(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
        .replace("**", "")
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    raw: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(text: &str, raw: &'a str) -> Self {
        Self {
            chars: text.chars().collect(),
            pos: 0,
            raw,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn err<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(PrepError::parse(reason, self.raw))
    }

    /// True when the quote at `at` closes an item: the next non-space char is
    /// `,` or `]`.
    fn closes_item(&self, at: usize) -> bool {
        self.chars[at + 1..]
            .iter()
            .find(|c| !c.is_whitespace())
            .is_some_and(|&c| c == ',' || c == ']')
    }

    /// Moves past `key`, an optional closing quote, `:` and `[`.
    fn seek_list(&mut self, key: &str) -> Result<()> {
        let key: Vec<char> = key.chars().collect();
        let mut start = 0;
        while start + key.len() <= self.chars.len() {
            let Some(off) = self.chars[start..]
                .windows(key.len())
                .position(|w| w == key.as_slice())
            else {
                break;
            };
            self.pos = start + off + key.len();
            if matches!(self.peek(), Some('\'' | '"')) {
                self.pos += 1;
            }
            self.skip_ws();
            if self.peek() == Some(':') {
                self.pos += 1;
                self.skip_ws();
                if self.peek() == Some('[') {
                    self.pos += 1;
                    return Ok(());
                }
            }
            start += off + 1;
        }
        self.err(format!("missing '{}' list", key.iter().collect::<String>()))
    }

    /// After `[`; returns the raw items up to the matching `]`.
    fn list_items(&mut self, quoted: bool) -> Result<Vec<String>> {
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return self.err("unterminated list"),
                Some(']') => {
                    self.pos += 1;
                    return Ok(items);
                }
                Some(q @ ('\'' | '"')) => {
                    let begin = self.pos + 1;
                    let Some(end) = (begin..self.chars.len())
                        .find(|&i| self.chars[i] == q && self.closes_item(i))
                    else {
                        return self.err("unterminated quoted item");
                    };
                    items.push(self.chars[begin..end].iter().collect());
                    self.pos = end + 1;
                }
                Some(_) if !quoted => {
                    let begin = self.pos;
                    while self.peek().is_some_and(|c| c != ',' && c != ']') {
                        self.pos += 1;
                    }
                    items.push(
                        self.chars[begin..self.pos]
                            .iter()
                            .collect::<String>()
                            .trim()
                            .to_string(),
                    );
                }
                Some(c) => return self.err(format!("expected a quoted item, found {c:?}")),
            }
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(']') => {}
                Some(c) => return self.err(format!("expected ',' or ']', found {c:?}")),
                None => return self.err("unterminated list"),
            }
        }
    }
}

fn flag(item: &str, raw: &str) -> Result<bool> {
    match item.trim().trim_matches(|c| c == '\'' || c == '"') {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(PrepError::parse(
            format!("preserve_form entries must be 0 or 1, found {other:?}"),
            raw,
        )),
    }
}

/// Parses the `Final answer:` block of a decomposition response.
pub fn parse_plan_response(raw: &str) -> Result<PlanDraft> {
    let text = strip_markdown(raw);
    let lower = text.to_ascii_lowercase();
    let Some(at) = lower.rfind("final answer") else {
        return Err(PrepError::parse("missing 'Final answer' block", raw));
    };
    let block = &text[at + "final answer".len()..];

    let lists: Vec<Vec<String>> = ["source_list", "target_list", "preserve_form"]
        .iter()
        .map(|key| {
            let mut cur = Cursor::new(block, raw);
            cur.seek_list(key)?;
            cur.list_items(*key != "preserve_form")
        })
        .collect::<Result<_>>()?;
    let [sources, targets, flags] = <[Vec<String>; 3]>::try_from(lists).expect("three lists");
    let flags = flags
        .iter()
        .map(|f| flag(f, raw))
        .collect::<Result<Vec<_>>>()?;
    let clean = |v: Vec<String>| v.into_iter().map(|s| s.trim().to_string()).collect();
    PlanDraft::new(clean(sources), clean(targets), flags)
}

/// Parses `change = [change A into B. change C into D. change E into F.]`
/// into exactly three request strings.
pub fn parse_scenario_response(raw: &str) -> Result<Vec<String>> {
    let text = strip_markdown(raw);
    let lower = text.to_ascii_lowercase();
    let mut search = 0;
    let open = loop {
        let Some(i) = lower[search..].find("change") else {
            return Err(PrepError::parse("missing 'change = [...]' line", raw));
        };
        let after = search + i + "change".len();
        let rest = lower[after..].trim_start();
        if let Some(r) = rest.strip_prefix('=') {
            if r.trim_start().starts_with('[') {
                break lower.len() - r.trim_start().len();
            }
        }
        search = after;
    };
    let Some(close) = text[open..].find(']') else {
        return Err(PrepError::parse("unterminated change list", raw));
    };
    let body = &text[open + 1..open + close];
    let items: Vec<String> = body
        .split('.')
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .collect();
    if items.len() != 3 {
        return Err(PrepError::parse(
            format!("expected 3 suggestions, found {}", items.len()),
            raw,
        ));
    }
    for item in &items {
        let l = item.to_ascii_lowercase();
        let ok = l.starts_with("change ")
            && l.find(" into ")
                .is_some_and(|i| i > "change".len() && i + " into ".len() < l.len());
        if !ok {
            return Err(PrepError::parse(
                format!("suggestion {item:?} is not of the form 'change A into B'"),
                raw,
            ));
        }
    }
    Ok(items)
}
