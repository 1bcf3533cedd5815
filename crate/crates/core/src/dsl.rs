//! The `.psys` text format.
//!
//! ```text
//! @psys 1
//! @objects s yes no
//! @labels h
//! @skin h
//! @init h: s
//! @bound 2
//! @rules
//! [s]_h^0 -> []_h^+ yes
//! ```
//!
//! Sections may appear in any order after the header. `#` starts a comment.
//! Rule lines follow `@rules` until the next `@` line. Rendering produces a
//! canonical form: fixed section order, sorted multisets, rules by ordinal.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::model::{
    is_name_char, validate_system, Charge, Label, Location, RawMembrane, RawSystem, Rule, Symbol,
    SystemSpec, ValidationError,
};
use crate::multiset::Multiset;

/// 1-based position in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize) -> Self {
        SourceSpan { line, column }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{span}: syntax error: expected {expected}")]
    Syntax { span: SourceSpan, expected: String },
    #[error("{span}: negative multiplicity")]
    NegativeMultiplicity { span: SourceSpan },
    #[error("{span}: @init must name the skin `{skin}`, found `{label}`")]
    InitNotSkin {
        span: SourceSpan,
        label: Label,
        skin: Label,
    },
    #[error("{span}: {error}")]
    Invalid {
        span: SourceSpan,
        error: ValidationError,
    },
}

impl ParseError {
    pub fn span(&self) -> SourceSpan {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::NegativeMultiplicity { span }
            | ParseError::InitNotSkin { span, .. }
            | ParseError::Invalid { span, .. } => *span,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

struct Cursor<'a> {
    chars: &'a [char],
    pos: usize,
    line: usize,
    /// Column of `chars[0]` in the original line.
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(chars: &'a [char], line: usize, offset: usize) -> Self {
        Cursor {
            chars,
            pos: 0,
            line,
            offset,
        }
    }

    fn span(&self) -> SourceSpan {
        SourceSpan::new(self.line, self.offset + self.pos + 1)
    }

    fn err<T>(&self, expected: impl Into<String>) -> PResult<T> {
        Err(ParseError::Syntax {
            span: self.span(),
            expected: expected.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.pos + 1).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("`{c}`"))
        }
    }

    fn expect_arrow(&mut self) -> PResult<()> {
        self.skip_ws();
        if self.peek() == Some('-') && self.peek2() == Some('>') {
            self.pos += 2;
            Ok(())
        } else {
            self.err("`->`")
        }
    }

    fn name(&mut self, what: &str) -> PResult<String> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if is_name_char(c)) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(what.to_string());
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn int(&mut self) -> PResult<u64> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("integer");
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse().map_err(|_| ParseError::Syntax {
            span: SourceSpan::new(self.line, self.offset + start + 1),
            expected: "integer that fits in 64 bits".into(),
        })
    }

    fn charge(&mut self) -> PResult<Charge> {
        match self.peek().and_then(Charge::from_char) {
            Some(c) => {
                self.pos += 1;
                Ok(c)
            }
            None => self.err("charge `0`, `+` or `-`"),
        }
    }

    /// `]_label^charge` with no interior whitespace.
    fn close_membrane(&mut self) -> PResult<(Label, Charge)> {
        self.skip_ws();
        self.expect(']')?;
        self.expect('_')?;
        let label = Label::new(&self.name("label")?);
        self.expect('^')?;
        let charge = self.charge()?;
        Ok((label, charge))
    }

    /// A multiset, terminated by end of input or by `stop`.
    fn multiset(&mut self, stop: Option<char>) -> PResult<Multiset> {
        self.skip_ws();
        if self.eat('.') {
            return Ok(Multiset::new());
        }
        let mut m = Multiset::new();
        let mut items = 0;
        loop {
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(c) if Some(c) == stop => break,
                _ => {}
            }
            let name = self.name("object symbol")?;
            let mut n = 1;
            if self.eat('*') {
                if self.peek() == Some('-') {
                    return Err(ParseError::NegativeMultiplicity { span: self.span() });
                }
                n = self.int()?;
            }
            m.insert(Symbol::new(&name), n).map_err(|e| ParseError::Invalid {
                span: self.span(),
                error: e.into(),
            })?;
            items += 1;
        }
        if items == 0 {
            return self.err("multiset (use `.` for the empty multiset)");
        }
        Ok(m)
    }
}

fn same_label(c: &Cursor<'_>, expected: &Label, found: &Label) -> PResult<()> {
    if expected == found {
        Ok(())
    } else {
        c.err(format!("label `{expected}` (found `{found}`)"))
    }
}

fn parse_rule(c: &mut Cursor<'_>) -> PResult<Rule> {
    c.skip_ws();
    let rule = if c.eat('[') {
        c.skip_ws();
        let object = Symbol::new(&c.name("object symbol")?);
        c.skip_ws();
        if c.peek() == Some('-') {
            c.expect_arrow()?;
            let product = c.multiset(Some(']'))?;
            let (label, charge) = c.close_membrane()?;
            Rule::Evolve {
                label,
                charge,
                object,
                product,
            }
        } else {
            let (label, charge) = c.close_membrane()?;
            c.expect_arrow()?;
            c.skip_ws();
            c.expect('[')?;
            c.skip_ws();
            if c.peek() == Some(']') {
                let (l2, new_charge) = c.close_membrane()?;
                same_label(c, &label, &l2)?;
                c.skip_ws();
                let product = Symbol::new(&c.name("object symbol")?);
                Rule::SendOut {
                    label,
                    charge,
                    object,
                    new_charge,
                    product,
                }
            } else {
                let first = Symbol::new(&c.name("object symbol")?);
                let (l2, first_charge) = c.close_membrane()?;
                same_label(c, &label, &l2)?;
                c.skip_ws();
                c.expect('[')?;
                c.skip_ws();
                let second = Symbol::new(&c.name("object symbol")?);
                let (l3, second_charge) = c.close_membrane()?;
                same_label(c, &label, &l3)?;
                Rule::Divide {
                    label,
                    charge,
                    object,
                    first_charge,
                    first,
                    second_charge,
                    second,
                }
            }
        }
    } else {
        let object = Symbol::new(&c.name("`[` or object symbol")?);
        c.skip_ws();
        c.expect('[')?;
        c.skip_ws();
        let (label, charge) = c.close_membrane()?;
        c.expect_arrow()?;
        c.skip_ws();
        c.expect('[')?;
        c.skip_ws();
        let product = Symbol::new(&c.name("object symbol")?);
        let (l2, new_charge) = c.close_membrane()?;
        same_label(c, &label, &l2)?;
        Rule::SendIn {
            label,
            charge,
            object,
            new_charge,
            product,
        }
    };
    if !c.at_end() {
        return c.err("end of rule");
    }
    Ok(rule)
}

#[derive(Default)]
struct Spans {
    objects: Option<SourceSpan>,
    labels: Option<SourceSpan>,
    skin: Option<SourceSpan>,
    init: Option<SourceSpan>,
    inner: Vec<SourceSpan>,
    input: Option<SourceSpan>,
    bound: Option<SourceSpan>,
    rules: Vec<SourceSpan>,
}

impl Spans {
    fn locate(&self, at: Option<Location>) -> Option<SourceSpan> {
        match at? {
            Location::Objects => self.objects,
            Location::Labels => self.labels,
            Location::Skin => self.skin,
            Location::SkinInit => self.init,
            Location::Inner(i) => self.inner.get(i).copied(),
            Location::Input => self.input,
            Location::Bound => self.bound,
            Location::Rule(i) => self.rules.get(i).copied(),
        }
    }
}

/// Parses and validates a `.psys` document.
pub fn parse_system(text: &str) -> Result<SystemSpec, ParseError> {
    let mut spans = Spans::default();
    let raw = parse_raw(text, &mut spans)?;
    validate_system(raw).map_err(|error| {
        let span = spans
            .locate(error.location())
            .unwrap_or(SourceSpan::new(1, 1));
        ParseError::Invalid { span, error }
    })
}

fn parse_raw(text: &str, spans: &mut Spans) -> PResult<RawSystem> {
    let mut alphabet = Vec::new();
    let mut labels = Vec::new();
    let mut skin: Option<Label> = None;
    let mut init: Option<(Label, Multiset, SourceSpan)> = None;
    let mut inner = Vec::new();
    let mut input = None;
    let mut bound = None;
    let mut rules = Vec::new();

    let mut saw_header = false;
    let mut in_rules = false;
    let mut last_line = 1;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let content = match raw_line.find('#') {
            Some(i) => &raw_line[..i],
            None => raw_line,
        };
        let chars: Vec<char> = content.chars().collect();
        let mut c = Cursor::new(&chars, line_no, 0);
        if c.at_end() {
            continue;
        }
        let start = c.span();

        if !saw_header {
            if !c.eat('@') {
                return c.err("`@psys 1` header");
            }
            let kw = c.name("`psys`")?;
            if kw != "psys" {
                return Err(ParseError::Syntax {
                    span: start,
                    expected: "`@psys 1` header".into(),
                });
            }
            c.skip_ws();
            let version = c.int()?;
            if version != 1 {
                return Err(ParseError::Syntax {
                    span: start,
                    expected: "format version 1".into(),
                });
            }
            if !c.at_end() {
                return c.err("end of line");
            }
            saw_header = true;
            continue;
        }

        if c.peek() != Some('@') {
            if !in_rules {
                return c.err("section keyword");
            }
            spans.rules.push(start);
            rules.push(parse_rule(&mut c)?);
            continue;
        }

        c.eat('@');
        let kw = c.name("section keyword")?;
        in_rules = false;
        match kw.as_str() {
            "objects" => {
                spans.objects.get_or_insert(start);
                let mut any = false;
                while !c.at_end() {
                    alphabet.push(Symbol::new(&c.name("object symbol")?));
                    any = true;
                }
                if !any {
                    return c.err("object symbol");
                }
            }
            "labels" => {
                spans.labels.get_or_insert(start);
                let mut any = false;
                while !c.at_end() {
                    labels.push(Label::new(&c.name("label")?));
                    any = true;
                }
                if !any {
                    return c.err("label");
                }
            }
            "skin" => {
                if skin.is_some() {
                    return Err(ParseError::Syntax {
                        span: start,
                        expected: "a single @skin section".into(),
                    });
                }
                c.skip_ws();
                skin = Some(Label::new(&c.name("label")?));
                spans.skin = Some(start);
                if !c.at_end() {
                    return c.err("end of line");
                }
            }
            "init" | "inner" => {
                c.skip_ws();
                let label = Label::new(&c.name("label")?);
                c.skip_ws();
                c.expect(':')?;
                let m = c.multiset(None)?;
                if !c.at_end() {
                    return c.err("end of line");
                }
                if kw == "init" {
                    if init.is_some() {
                        return Err(ParseError::Syntax {
                            span: start,
                            expected: "a single @init section".into(),
                        });
                    }
                    spans.init = Some(start);
                    init = Some((label, m, start));
                } else {
                    spans.inner.push(start);
                    inner.push(RawMembrane {
                        label,
                        parent: None,
                        contents: m,
                    });
                }
            }
            "input" => {
                if input.is_some() {
                    return Err(ParseError::Syntax {
                        span: start,
                        expected: "a single @input section".into(),
                    });
                }
                c.skip_ws();
                input = Some(Label::new(&c.name("label")?));
                spans.input = Some(start);
                if !c.at_end() {
                    return c.err("end of line");
                }
            }
            "bound" => {
                if bound.is_some() {
                    return Err(ParseError::Syntax {
                        span: start,
                        expected: "a single @bound section".into(),
                    });
                }
                c.skip_ws();
                let v = c.int()?;
                let v = u32::try_from(v).map_err(|_| ParseError::Syntax {
                    span: start,
                    expected: "bound that fits in 32 bits".into(),
                })?;
                bound = Some(v);
                spans.bound = Some(start);
                if !c.at_end() {
                    return c.err("end of line");
                }
            }
            "rules" => {
                if !c.at_end() {
                    return c.err("end of line after @rules");
                }
                in_rules = true;
            }
            _ => {
                return Err(ParseError::Syntax {
                    span: start,
                    expected: "one of @objects @labels @skin @init @inner @input @bound @rules"
                        .into(),
                })
            }
        }
    }

    let eof = SourceSpan::new(last_line, 1);
    if !saw_header {
        return Err(ParseError::Syntax {
            span: eof,
            expected: "`@psys 1` header".into(),
        });
    }
    let skin = skin.ok_or_else(|| ParseError::Syntax {
        span: eof,
        expected: "@skin section".into(),
    })?;
    let bound = bound.ok_or_else(|| ParseError::Syntax {
        span: eof,
        expected: "@bound section".into(),
    })?;
    let skin_init = match init {
        Some((label, m, span)) => {
            if label != skin {
                return Err(ParseError::InitNotSkin { span, label, skin });
            }
            m
        }
        None => Multiset::new(),
    };

    Ok(RawSystem {
        alphabet,
        labels,
        skin,
        skin_init,
        inner,
        rules,
        bound,
        input_label: input,
    })
}

/// Parses a standalone multiset such as `a*3 b` or `.`.
pub fn parse_multiset(text: &str) -> Result<Multiset, ParseError> {
    let first = text.lines().next().unwrap_or("");
    if text.lines().count() > 1 {
        return Err(ParseError::Syntax {
            span: SourceSpan::new(2, 1),
            expected: "a single-line multiset".into(),
        });
    }
    let chars: Vec<char> = first.chars().collect();
    let mut c = Cursor::new(&chars, 1, 0);
    let m = c.multiset(None)?;
    if !c.at_end() {
        return c.err("end of multiset");
    }
    Ok(m)
}

/// Canonical text for a validated system.
pub fn render_system(spec: &SystemSpec) -> String {
    let mut out = String::new();
    let join = |items: Vec<String>| items.join(" ");
    // Writing into a String cannot fail.
    let _ = writeln!(out, "@psys 1");
    let _ = writeln!(
        out,
        "@objects {}",
        join(spec.alphabet.iter().map(|s| s.to_string()).collect())
    );
    let _ = writeln!(
        out,
        "@labels {}",
        join(spec.labels.iter().map(|l| l.to_string()).collect())
    );
    let _ = writeln!(out, "@skin {}", spec.skin);
    let _ = writeln!(out, "@init {}: {}", spec.skin, spec.skin_init);
    for (label, m) in &spec.inner_init {
        let _ = writeln!(out, "@inner {label}: {m}");
    }
    if let Some(input) = &spec.input_label {
        let _ = writeln!(out, "@input {input}");
    }
    let _ = writeln!(out, "@bound {}", spec.bound);
    let _ = writeln!(out, "@rules");
    for rule in &spec.rules {
        let _ = writeln!(out, "{rule}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYS_A: &str = "@psys 1\n@objects s yes no\n@labels h\n@skin h\n@init h: s\n@bound 2\n@rules\n[s]_h^0 -> []_h^+ yes\n";

    const SYS_D: &str = "\
@psys 1
@objects d e f yes no
@labels h k
@skin h
@init h: .
@inner k: d
@bound 4
@rules
[d]_k^0 -> [e]_k^+ [f]_k^-
[e]_k^+ -> []_k^0 yes   # emits into the skin
[yes]_h^0 -> []_h^+ yes
";

    fn sym(s: &str) -> Symbol {
        Symbol::new(s)
    }

    #[test]
    fn parses_sys_a() {
        let spec = parse_system(SYS_A).unwrap();
        assert_eq!(spec.rules.len(), 1);
        assert!(spec.inner_init.is_empty());
        assert_eq!(spec.bound, 2);
    }

    #[test]
    fn parses_division_charges() {
        let spec = parse_system(SYS_D).unwrap();
        match &spec.rules[0] {
            Rule::Divide {
                charge,
                first_charge,
                second_charge,
                ..
            } => {
                assert_eq!(
                    (*charge, *first_charge, *second_charge),
                    (Charge::Neutral, Charge::Positive, Charge::Negative)
                );
            }
            other => panic!("expected division, got {other:?}"),
        }
    }

    #[test]
    fn bad_charge_is_a_syntax_error() {
        let text = SYS_A.replace("[]_h^+ yes", "[]_h^* yes");
        match parse_system(&text) {
            Err(ParseError::Syntax { span, expected }) => {
                assert_eq!(span, SourceSpan::new(8, 17));
                assert!(expected.contains("charge"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_errors_carry_rule_span() {
        let text = format!("{SYS_A}[s -> s]_z^0\n");
        match parse_system(&text) {
            Err(ParseError::Invalid { span, error }) => {
                assert_eq!(span.line, 9);
                assert!(matches!(error, ValidationError::UnknownLabel { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiset_literals() {
        let m = parse_multiset("a*3 b").unwrap();
        assert_eq!(m.count(&sym("a")), 3);
        assert_eq!(m.count(&sym("b")), 1);
        assert!(parse_multiset(".").unwrap().is_empty());
        assert!(parse_multiset("a*0").unwrap().is_empty());
        assert!(matches!(
            parse_multiset("a*-2"),
            Err(ParseError::NegativeMultiplicity { .. })
        ));
        assert!(matches!(parse_multiset(""), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_multiset("a*"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn renders_sorted_multiset() {
        let m = Multiset::from_counts([(sym("b"), 2), (sym("a"), 1)]).unwrap();
        assert_eq!(m.to_string(), "a b*2");
    }

    #[test]
    fn render_is_canonical() {
        let spec = parse_system(SYS_A).unwrap();
        assert_eq!(
            render_system(&spec),
            "@psys 1\n@objects no s yes\n@labels h\n@skin h\n@init h: s\n@bound 2\n@rules\n[s]_h^0 -> []_h^+ yes\n"
        );
        let again = parse_system(&render_system(&spec)).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn all_rule_forms_round_trip() {
        let text = "\
@psys 1
@objects a b c
@labels h k
@skin h
@init h: a*2 b
@inner k: a
@input k
@bound 3
@rules
[a -> b c*2]_h^0
[a -> .]_k^+
a []_k^0 -> [b]_k^-
[b]_k^- -> []_k^0 c
[a]_k^0 -> [b]_k^+ [c]_k^-
";
        let spec = parse_system(text).unwrap();
        assert_eq!(spec.rules.len(), 5);
        assert_eq!(parse_system(&render_system(&spec)).unwrap(), spec);
    }

    #[test]
    fn structural_syntax_errors() {
        assert!(matches!(
            parse_system("@objects a\n"),
            Err(ParseError::Syntax { .. })
        ));
        let no_skin = "@psys 1\n@objects a\n@labels h\n@bound 1\n";
        assert!(matches!(parse_system(no_skin), Err(ParseError::Syntax { .. })));
        let wrong_init = "@psys 1\n@objects a\n@labels h k\n@skin h\n@init k: a\n@bound 1\n";
        assert!(matches!(
            parse_system(wrong_init),
            Err(ParseError::InitNotSkin { .. })
        ));
        let mismatched = format!("{SYS_A}[s]_h^0 -> []_k^+ yes\n");
        assert!(matches!(
            parse_system(&mismatched),
            Err(ParseError::Syntax { .. })
        ));
        let stray = "@psys 1\n[s]_h^0 -> []_h^+ yes\n";
        assert!(matches!(parse_system(stray), Err(ParseError::Syntax { .. })));
    }
}
