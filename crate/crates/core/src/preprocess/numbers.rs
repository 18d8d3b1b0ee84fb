//! Canonical number rendering.
//!
//! Every numeral, whether written with digits (`110`, `3.5`, `1,000`) or
//! spelled out (`three point five`, `one hundred and ten`), is rewritten to a
//! single hyphen-joined word form (`one-hundred-ten`, `three-point-five`).
//! Spelled phrases are parsed to a value first and re-rendered, so every way
//! of writing the same number collides on one token.

const SMALL: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

const SCALES: [(u64, &str); 3] = [
    (1_000_000_000, "billion"),
    (1_000_000, "million"),
    (1_000, "thousand"),
];

/// Largest integer rendered; longer digit strings are left untouched.
pub const MAX_INTEGER: u64 = 999_999_999_999;

/// A parsed number: integer part plus the literal fractional digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Numeral {
    pub integer: u64,
    pub fraction: Option<Vec<u8>>,
}

impl Numeral {
    pub fn integer(integer: u64) -> Self {
        Numeral {
            integer,
            fraction: None,
        }
    }

    pub fn to_words(&self) -> String {
        let mut parts = integer_parts(self.integer);
        if let Some(digits) = &self.fraction {
            parts.push("point");
            parts.extend(digits.iter().map(|&d| SMALL[d as usize]));
        }
        parts.join("-")
    }
}

fn group_parts(n: u64, out: &mut Vec<&'static str>) {
    debug_assert!(n > 0 && n < 1000);
    let hundreds = n / 100;
    let rest = n % 100;
    if hundreds > 0 {
        out.push(SMALL[hundreds as usize]);
        out.push("hundred");
    }
    if rest >= 20 {
        out.push(TENS[(rest / 10) as usize]);
        if rest % 10 > 0 {
            out.push(SMALL[(rest % 10) as usize]);
        }
    } else if rest > 0 {
        out.push(SMALL[rest as usize]);
    }
}

fn integer_parts(mut n: u64) -> Vec<&'static str> {
    if n == 0 {
        return vec!["zero"];
    }
    let mut parts = Vec::new();
    for (scale, word) in SCALES {
        if n >= scale {
            group_parts(n / scale, &mut parts);
            parts.push(word);
            n %= scale;
        }
    }
    if n > 0 {
        group_parts(n, &mut parts);
    }
    parts
}

/// Renders a non-negative integer in canonical hyphenated form.
pub fn integer_to_words(n: u64) -> String {
    integer_parts(n).join("-")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WordClass {
    Digit(u64),
    Teen(u64),
    Tens(u64),
    Hundred,
    Scale(u64),
    Point,
    And,
}

fn classify(word: &str) -> Option<WordClass> {
    if let Some(i) = SMALL.iter().position(|w| *w == word) {
        let v = i as u64;
        return Some(if v < 10 {
            WordClass::Digit(v)
        } else {
            WordClass::Teen(v)
        });
    }
    if let Some(i) = TENS.iter().position(|w| !w.is_empty() && *w == word) {
        return Some(WordClass::Tens(i as u64 * 10));
    }
    match word {
        "hundred" => Some(WordClass::Hundred),
        "thousand" => Some(WordClass::Scale(1_000)),
        "million" => Some(WordClass::Scale(1_000_000)),
        "billion" => Some(WordClass::Scale(1_000_000_000)),
        "point" => Some(WordClass::Point),
        "and" => Some(WordClass::And),
        _ => None,
    }
}

fn is_number_word(word: &str) -> bool {
    !matches!(classify(word), None | Some(WordClass::And))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Last {
    Start,
    Zero,
    Digit,
    Teen,
    Tens,
    Hundred,
    Scale,
}

#[derive(Debug)]
struct Accumulator {
    total: u64,
    group: u64,
    last: Last,
    prev_scale: u64,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator {
            total: 0,
            group: 0,
            last: Last::Start,
            prev_scale: u64::MAX,
        }
    }

    fn started(&self) -> bool {
        self.last != Last::Start
    }

    fn value(&self) -> u64 {
        self.total + self.group
    }

    /// Tries to extend the number with `class`; returns false when the word
    /// cannot continue it under the canonical grammar.
    fn push(&mut self, class: WordClass) -> bool {
        use Last::*;
        match class {
            WordClass::Digit(0) => {
                if self.last == Start {
                    self.last = Zero;
                    true
                } else {
                    false
                }
            }
            WordClass::Digit(v) => {
                if matches!(self.last, Start | Tens | Hundred | Scale) {
                    self.group += v;
                    self.last = Digit;
                    true
                } else {
                    false
                }
            }
            WordClass::Teen(v) => {
                if matches!(self.last, Start | Hundred | Scale) {
                    self.group += v;
                    self.last = Teen;
                    true
                } else {
                    false
                }
            }
            WordClass::Tens(v) => {
                if matches!(self.last, Start | Hundred | Scale) {
                    self.group += v;
                    self.last = Tens;
                    true
                } else {
                    false
                }
            }
            WordClass::Hundred => {
                if self.last == Digit && self.group < 10 {
                    self.group *= 100;
                    self.last = Hundred;
                    true
                } else {
                    false
                }
            }
            WordClass::Scale(s) => {
                if matches!(self.last, Digit | Teen | Tens | Hundred)
                    && self.group > 0
                    && s < self.prev_scale
                {
                    self.total += self.group * s;
                    self.group = 0;
                    self.prev_scale = s;
                    self.last = Scale;
                    true
                } else {
                    false
                }
            }
            WordClass::Point | WordClass::And => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Item {
    Number(Numeral),
    Literal(String),
}

/// Parses a flat list of lowercase words into numbers and leftover literals.
fn parse_words(words: &[String]) -> Vec<Item> {
    let mut items = Vec::new();
    let mut acc = Accumulator::new();
    let mut i = 0;

    let digit_at = |j: usize| -> Option<u8> {
        match words.get(j).and_then(|w| classify(w)) {
            Some(WordClass::Digit(d)) => Some(d as u8),
            _ => None,
        }
    };

    fn flush(acc: &mut Accumulator, items: &mut Vec<Item>) {
        if acc.started() {
            items.push(Item::Number(Numeral::integer(acc.value())));
        }
        *acc = Accumulator::new();
    }

    while i < words.len() {
        let word = &words[i];
        let Some(class) = classify(word) else {
            flush(&mut acc, &mut items);
            items.push(Item::Literal(word.clone()));
            i += 1;
            continue;
        };
        match class {
            WordClass::Point => {
                if digit_at(i + 1).is_some() {
                    let integer = acc.value();
                    acc = Accumulator::new();
                    let mut digits = Vec::new();
                    let mut j = i + 1;
                    while let Some(d) = digit_at(j) {
                        digits.push(d);
                        j += 1;
                    }
                    items.push(Item::Number(Numeral {
                        integer,
                        fraction: Some(digits),
                    }));
                    i = j;
                } else {
                    flush(&mut acc, &mut items);
                    items.push(Item::Literal(word.clone()));
                    i += 1;
                }
            }
            WordClass::And => {
                let joins = matches!(acc.last, Last::Hundred | Last::Scale)
                    && matches!(
                        words.get(i + 1).and_then(|w| classify(w)),
                        Some(WordClass::Digit(1..) | WordClass::Teen(_) | WordClass::Tens(_))
                    );
                if !joins {
                    flush(&mut acc, &mut items);
                    items.push(Item::Literal(word.clone()));
                }
                i += 1;
            }
            _ => {
                if acc.push(class) {
                    i += 1;
                    continue;
                }
                if acc.started() {
                    flush(&mut acc, &mut items);
                    // retry the same word as the start of a new number
                    continue;
                }
                // cannot start a number (bare scale word)
                items.push(Item::Literal(word.clone()));
                i += 1;
            }
        }
    }
    flush(&mut acc, &mut items);
    items
}

/// Digit-form numeral: `110`, `1,000`, `3.5`.
fn parse_digits(core: &str) -> Option<Numeral> {
    let (int_part, frac_part) = match core.split_once('.') {
        Some((a, b)) => (a, Some(b)),
        None => (core, None),
    };
    if int_part.is_empty() || !int_part.chars().next()?.is_ascii_digit() {
        return None;
    }
    let grouped = int_part.contains(',');
    if grouped {
        let groups: Vec<&str> = int_part.split(',').collect();
        let first_ok = (1..=3).contains(&groups[0].len());
        let rest_ok = groups[1..].iter().all(|g| g.len() == 3);
        if !first_ok || !rest_ok {
            return None;
        }
    }
    let digits: String = int_part.chars().filter(|c| *c != ',').collect();
    if !digits.chars().all(|c| c.is_ascii_digit()) || digits.len() > 12 {
        return None;
    }
    let integer: u64 = digits.parse().ok()?;
    if integer > MAX_INTEGER {
        return None;
    }
    let fraction = match frac_part {
        Some(f) if !f.is_empty() && f.chars().all(|c| c.is_ascii_digit()) => {
            Some(f.bytes().map(|b| b - b'0').collect())
        }
        Some(_) => return None,
        None => None,
    };
    Some(Numeral { integer, fraction })
}

const ORDINAL_SUFFIXES: [&str; 4] = ["st", "nd", "rd", "th"];

/// How a whitespace-delimited token participates in number parsing.
#[derive(Debug)]
enum TokenKind {
    /// Contributes words to a number run; the optional string is a unit
    /// glued to the numeral (`5mg`) and ends the run.
    Numeric(Vec<String>, Option<String>),
    /// A bare `and`, only part of a run when surrounded by numbers.
    And,
    Other,
}

fn split_punct(token: &str) -> (&str, &str, &str) {
    let is_edge = |c: char| !(c.is_alphanumeric());
    let start = token.find(|c: char| !is_edge(c)).unwrap_or(token.len());
    let end = token
        .rfind(|c: char| !is_edge(c))
        .map(|i| i + token[i..].chars().next().map_or(1, |c| c.len_utf8()))
        .unwrap_or(start);
    (&token[..start], &token[start..end], &token[end..])
}

fn classify_token(core: &str) -> TokenKind {
    if core.is_empty() {
        return TokenKind::Other;
    }
    if let Some(n) = parse_digits(core) {
        return TokenKind::Numeric(n.to_words().split('-').map(String::from).collect(), None);
    }
    // numeral glued to a unit, e.g. `5mg`, `3.5ml`
    if core.starts_with(|c: char| c.is_ascii_digit()) {
        if let Some(split) = core.find(|c: char| c.is_alphabetic()) {
            let (num, unit) = core.split_at(split);
            let unit_lower = unit.to_lowercase();
            if unit.chars().all(char::is_alphabetic) && !ORDINAL_SUFFIXES.contains(&unit_lower.as_str()) {
                if let Some(n) = parse_digits(num) {
                    return TokenKind::Numeric(
                        n.to_words().split('-').map(String::from).collect(),
                        Some(unit.to_string()),
                    );
                }
            }
        }
        return TokenKind::Other;
    }
    let lower = core.to_lowercase();
    if lower == "and" {
        return TokenKind::And;
    }
    let parts: Vec<&str> = lower.split('-').collect();
    if parts.iter().all(|p| is_number_word(p)) {
        return TokenKind::Numeric(parts.into_iter().map(String::from).collect(), None);
    }
    TokenKind::Other
}

fn render(items: &[Item]) -> String {
    items
        .iter()
        .map(|it| match it {
            Item::Number(n) => n.to_words(),
            Item::Literal(w) => w.clone(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rewrites every numeral in `text` to canonical hyphenated words.
///
/// Text without numerals is returned unchanged. The transformation is
/// idempotent.
pub fn normalize_numbers(text: &str) -> String {
    // Tokens alternate with the whitespace that separated them.
    let mut tokens: Vec<&str> = Vec::new();
    let mut gaps: Vec<&str> = Vec::new();
    let mut rest = text;
    let lead_len = rest.len() - rest.trim_start().len();
    let leading = &rest[..lead_len];
    rest = &rest[lead_len..];
    while !rest.is_empty() {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        tokens.push(&rest[..end]);
        rest = &rest[end..];
        let ws = rest.len() - rest.trim_start().len();
        gaps.push(&rest[..ws]);
        rest = &rest[ws..];
    }

    let mut out = String::with_capacity(text.len() + 16);
    out.push_str(leading);
    let mut i = 0;
    while i < tokens.len() {
        let (prefix, core, suffix) = split_punct(tokens[i]);
        let kind = classify_token(core);
        let TokenKind::Numeric(first_words, first_unit) = kind else {
            out.push_str(tokens[i]);
            out.push_str(gaps[i]);
            i += 1;
            continue;
        };

        // Grow the run while tokens are bare numerics separated by whitespace.
        let mut words = first_words;
        let mut unit = first_unit;
        let mut last_suffix = suffix;
        let mut j = i;
        while unit.is_none() && last_suffix.is_empty() && j + 1 < tokens.len() {
            let (p, c, s) = split_punct(tokens[j + 1]);
            if !p.is_empty() {
                break;
            }
            match classify_token(c) {
                TokenKind::Numeric(w, u) => {
                    words.extend(w);
                    unit = u;
                    last_suffix = s;
                    j += 1;
                }
                TokenKind::And if s.is_empty() && j + 2 < tokens.len() => {
                    let (p2, c2, _) = split_punct(tokens[j + 2]);
                    if p2.is_empty() && matches!(classify_token(c2), TokenKind::Numeric(_, _)) {
                        words.push("and".to_string());
                        j += 1;
                    } else {
                        break;
                    }
                }
                _ => break,
            }
        }

        out.push_str(prefix);
        out.push_str(&render(&parse_words(&words)));
        if let Some(u) = unit {
            out.push(' ');
            out.push_str(&u);
        }
        out.push_str(last_suffix);
        out.push_str(gaps[j]);
        i = j + 1;
    }
    out
}

/// Parses a single canonical (or spelled) number token such as
/// `three-point-five`; returns `None` unless the whole token is one number.
pub fn parse_number_token(token: &str) -> Option<Numeral> {
    if let Some(n) = parse_digits(token) {
        return Some(n);
    }
    let parts: Vec<String> = token.split('-').map(String::from).collect();
    if !parts.iter().all(|p| is_number_word(p)) {
        return None;
    }
    match parse_words(&parts).as_slice() {
        [Item::Number(n)] => Some(n.clone()),
        _ => None,
    }
}

/// True iff `token` is a number in canonical form.
pub fn is_number_token(token: &str) -> bool {
    parse_number_token(token).is_some_and(|n| n.to_words() == token)
}
