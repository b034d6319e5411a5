use std::collections::HashMap;

use super::{
    Aggregate, Element, GroupPattern, Modifiers, Projection, Query, QueryForm, SparqlError, Term,
    TriplePattern, DEFAULT_PREFIXES, RDF_TYPE,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    Var(String),
    Str(String),
    LangTag(String),
    DtMark,
    Num(String),
    Word(String),
    Punct(&'static str),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    start: usize,
    end: usize,
}

fn err(offset: usize, message: impl Into<String>) -> SparqlError {
    SparqlError {
        offset,
        message: message.into(),
    }
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn tokenize(src: &str) -> Result<Vec<Spanned>, SparqlError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let n = chars.len();
    let at = |i: usize| chars.get(i).map(|&(_, c)| c);
    let off = |i: usize| chars.get(i).map(|&(o, _)| o).unwrap_or(src.len());
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        let start = off(i);
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < n && chars[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        let push = |out: &mut Vec<Spanned>, tok: Tok, end_idx: usize| {
            out.push(Spanned {
                tok,
                start,
                end: off(end_idx),
            })
        };
        match c {
            '<' => {
                let mut j = i + 1;
                let mut ok = false;
                while j < n {
                    let d = chars[j].1;
                    if d == '>' {
                        ok = true;
                        break;
                    }
                    if d.is_whitespace() || matches!(d, '<' | '"' | '{' | '}' | '|' | '^' | '`') {
                        break;
                    }
                    j += 1;
                }
                if ok && j > i + 1 {
                    let iri = src[off(i + 1)..off(j)].to_string();
                    push(&mut out, Tok::Iri(iri), j + 1);
                    i = j + 1;
                } else if at(i + 1) == Some('=') {
                    push(&mut out, Tok::Punct("<="), i + 2);
                    i += 2;
                } else {
                    push(&mut out, Tok::Punct("<"), i + 1);
                    i += 1;
                }
            }
            '?' | '$' => {
                let mut j = i + 1;
                while j < n && is_name_char(chars[j].1) {
                    j += 1;
                }
                if j > i + 1 {
                    push(&mut out, Tok::Var(src[off(i + 1)..off(j)].to_string()), j);
                } else {
                    push(&mut out, Tok::Punct("?"), i + 1);
                }
                i = j.max(i + 1);
            }
            '"' | '\'' => {
                let triple = at(i + 1) == Some(c) && at(i + 2) == Some(c);
                let mut j = if triple { i + 3 } else { i + 1 };
                let mut s = String::new();
                loop {
                    let Some(d) = at(j) else {
                        return Err(err(start, "unterminated string literal"));
                    };
                    if d == '\\' {
                        let e = at(j + 1).ok_or_else(|| err(start, "dangling escape"))?;
                        s.push(match e {
                            'n' => '\n',
                            't' => '\t',
                            'r' => '\r',
                            other => other,
                        });
                        j += 2;
                        continue;
                    }
                    if d == c {
                        if !triple {
                            j += 1;
                            break;
                        }
                        if at(j + 1) == Some(c) && at(j + 2) == Some(c) {
                            j += 3;
                            break;
                        }
                    }
                    if !triple && d == '\n' {
                        return Err(err(start, "newline in string literal"));
                    }
                    s.push(d);
                    j += 1;
                }
                push(&mut out, Tok::Str(s), j);
                i = j;
            }
            '@' => {
                let mut j = i + 1;
                while j < n && (chars[j].1.is_ascii_alphanumeric() || chars[j].1 == '-') {
                    j += 1;
                }
                if j == i + 1 {
                    return Err(err(start, "empty language tag"));
                }
                push(&mut out, Tok::LangTag(src[off(i + 1)..off(j)].to_string()), j);
                i = j;
            }
            '^' => {
                if at(i + 1) == Some('^') {
                    push(&mut out, Tok::DtMark, i + 2);
                    i += 2;
                } else {
                    push(&mut out, Tok::Punct("^"), i + 1);
                    i += 1;
                }
            }
            d if d.is_ascii_digit() => {
                let mut j = i;
                while j < n && chars[j].1.is_ascii_digit() {
                    j += 1;
                }
                if at(j) == Some('.') && at(j + 1).is_some_and(|x| x.is_ascii_digit()) {
                    j += 1;
                    while j < n && chars[j].1.is_ascii_digit() {
                        j += 1;
                    }
                }
                if matches!(at(j), Some('e' | 'E')) {
                    let mut k = j + 1;
                    if matches!(at(k), Some('+' | '-')) {
                        k += 1;
                    }
                    if at(k).is_some_and(|x| x.is_ascii_digit()) {
                        j = k;
                        while j < n && chars[j].1.is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                push(&mut out, Tok::Num(src[start..off(j)].to_string()), j);
                i = j;
            }
            d if is_name_start(d) || d == ':' => {
                let mut j = i;
                let mut colon: Option<usize> = None;
                let mut local = String::new();
                let mut prefix = String::new();
                while j < n {
                    let e = chars[j].1;
                    if e == ':' && colon.is_none() {
                        colon = Some(j);
                        j += 1;
                        continue;
                    }
                    if colon.is_some() && e == '\\' {
                        if let Some(x) = at(j + 1) {
                            local.push(x);
                            j += 2;
                            continue;
                        }
                    }
                    let allowed = is_name_char(e)
                        || (e == '.' && at(j + 1).is_some_and(|x| is_name_char(x) || x == '.'))
                        || (colon.is_some() && (e == '%' || e == ':'));
                    if !allowed {
                        break;
                    }
                    if colon.is_some() {
                        local.push(e);
                    } else {
                        prefix.push(e);
                    }
                    j += 1;
                }
                // A local name never ends with '.'.
                while local.ends_with('.') {
                    local.pop();
                    j -= 1;
                }
                let tok = if colon.is_some() {
                    Tok::PName(prefix, local)
                } else {
                    Tok::Word(prefix)
                };
                push(&mut out, tok, j);
                i = j;
            }
            _ => {
                let two: String = chars[i..n.min(i + 2)].iter().map(|&(_, c)| c).collect();
                let p: &'static str = match two.as_str() {
                    "!=" => "!=",
                    ">=" => ">=",
                    "&&" => "&&",
                    "||" => "||",
                    _ => match c {
                        '{' => "{",
                        '}' => "}",
                        '(' => "(",
                        ')' => ")",
                        '[' => "[",
                        ']' => "]",
                        '.' => ".",
                        ';' => ";",
                        ',' => ",",
                        '*' => "*",
                        '=' => "=",
                        '!' => "!",
                        '>' => ">",
                        '+' => "+",
                        '-' => "-",
                        '/' => "/",
                        '|' => "|",
                        _ => return Err(err(start, format!("unexpected character {c:?}"))),
                    },
                };
                let len = p.chars().count();
                push(&mut out, Tok::Punct(p), i + len);
                i += len;
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Spanned>,
    pos: usize,
    prefixes: HashMap<String, String>,
}

/// Parses one SPARQL query of the supported subset.
pub fn parse_query(src: &str) -> Result<Query, SparqlError> {
    let mut p = Parser {
        src,
        toks: tokenize(src)?,
        pos: 0,
        prefixes: DEFAULT_PREFIXES
            .iter()
            .map(|&(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    };
    let q = p.query()?;
    if let Some(t) = p.toks.get(p.pos) {
        return Err(err(t.start, "trailing input after query"));
    }
    Ok(q)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|s| &s.tok)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|s| s.start).unwrap_or(self.src.len())
    }

    fn next(&mut self) -> Result<Tok, SparqlError> {
        let t = self
            .toks
            .get(self.pos)
            .ok_or_else(|| err(self.src.len(), "unexpected end of query"))?
            .tok
            .clone();
        self.pos += 1;
        Ok(t)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SparqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(err(self.offset(), format!("expected {kw}")))
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), SparqlError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(err(self.offset(), format!("expected '{p}'")))
        }
    }

    /// Skips a balanced `open ... close` run starting at the current
    /// token and returns its source text.
    fn skip_balanced(&mut self, open: &str, close: &str) -> Result<String, SparqlError> {
        let start = self.offset();
        self.expect_punct(open)?;
        let mut depth = 1;
        while depth > 0 {
            match self.next()? {
                Tok::Punct(p) if p == open => depth += 1,
                Tok::Punct(p) if p == close => depth -= 1,
                _ => {}
            }
        }
        let end = self.toks[self.pos - 1].end;
        Ok(self.src[start..end].to_string())
    }

    fn resolve(&self, prefix: &str, local: &str) -> Result<String, SparqlError> {
        self.prefixes
            .get(prefix)
            .map(|ns| format!("{ns}{local}"))
            .ok_or_else(|| err(self.offset(), format!("undeclared prefix '{prefix}:'")))
    }

    fn query(&mut self) -> Result<Query, SparqlError> {
        loop {
            if self.eat_kw("PREFIX") {
                let Tok::PName(prefix, local) = self.next()? else {
                    return Err(err(self.offset(), "expected prefix name"));
                };
                if !local.is_empty() {
                    return Err(err(self.offset(), "malformed PREFIX declaration"));
                }
                let Tok::Iri(iri) = self.next()? else {
                    return Err(err(self.offset(), "expected IRI in PREFIX"));
                };
                self.prefixes.insert(prefix, iri);
            } else if self.eat_kw("BASE") {
                let Tok::Iri(_) = self.next()? else {
                    return Err(err(self.offset(), "expected IRI in BASE"));
                };
            } else {
                break;
            }
        }
        let form = if self.eat_kw("SELECT") {
            let distinct = self.eat_kw("DISTINCT");
            if !distinct {
                self.eat_kw("REDUCED");
            }
            QueryForm::Select {
                distinct,
                projection: self.projection()?,
            }
        } else if self.eat_kw("ASK") {
            QueryForm::Ask
        } else {
            return Err(err(self.offset(), "expected SELECT or ASK"));
        };
        while self.eat_kw("FROM") {
            self.eat_kw("NAMED");
            self.iri_like()?;
        }
        self.eat_kw("WHERE");
        let pattern = self.group()?;
        let modifiers = self.modifiers()?;
        Ok(Query {
            form,
            pattern,
            modifiers,
        })
    }

    fn projection(&mut self) -> Result<Vec<Projection>, SparqlError> {
        if self.eat_punct("*") {
            return Ok(vec![Projection::All]);
        }
        let mut out = Vec::new();
        let mut vars = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Var(v)) => {
                    vars.push(v.clone());
                    self.pos += 1;
                }
                Some(Tok::Punct("(")) => {
                    if !vars.is_empty() {
                        out.push(Projection::Vars(std::mem::take(&mut vars)));
                    }
                    out.push(self.projection_expr()?);
                }
                Some(Tok::Word(w)) if aggregate_from(w).is_some() && self.peek_at(1) == Some(&Tok::Punct("(")) => {
                    // `SELECT COUNT(?x)` without alias, seen in some benchmark queries.
                    if !vars.is_empty() {
                        out.push(Projection::Vars(std::mem::take(&mut vars)));
                    }
                    let (func, distinct, var) = self.aggregate_call()?;
                    out.push(Projection::Aggregate {
                        func,
                        distinct,
                        var,
                        alias: "count".to_string(),
                    });
                }
                _ => break,
            }
        }
        if !vars.is_empty() {
            out.push(Projection::Vars(vars));
        }
        if out.is_empty() {
            return Err(err(self.offset(), "empty projection"));
        }
        Ok(out)
    }

    fn aggregate_call(&mut self) -> Result<(Aggregate, bool, Option<String>), SparqlError> {
        let Tok::Word(w) = self.next()? else {
            unreachable!("caller checked for an aggregate keyword");
        };
        let func = aggregate_from(&w).expect("caller checked aggregate name");
        self.expect_punct("(")?;
        let distinct = self.eat_kw("DISTINCT");
        let var = match self.next()? {
            Tok::Var(v) => Some(v),
            Tok::Punct("*") => None,
            _ => return Err(err(self.offset(), "unsupported aggregate argument")),
        };
        if self.eat_punct(";") {
            // GROUP_CONCAT separator
            while !self.is_punct(")") {
                self.next()?;
            }
        }
        self.expect_punct(")")?;
        Ok((func, distinct, var))
    }

    fn projection_expr(&mut self) -> Result<Projection, SparqlError> {
        let save = self.pos;
        self.expect_punct("(")?;
        if matches!(self.peek(), Some(Tok::Word(w)) if aggregate_from(w).is_some())
            && self.peek_at(1) == Some(&Tok::Punct("("))
        {
            if let Ok((func, distinct, var)) = self.aggregate_call() {
                if self.eat_kw("AS") {
                    if let Tok::Var(alias) = self.next()? {
                        if self.eat_punct(")") {
                            return Ok(Projection::Aggregate {
                                func,
                                distinct,
                                var,
                                alias,
                            });
                        }
                    }
                }
            }
        }
        self.pos = save;
        let raw = self.skip_balanced("(", ")")?;
        Ok(Projection::Expression(raw))
    }

    fn modifiers(&mut self) -> Result<Modifiers, SparqlError> {
        let mut m = Modifiers::default();
        loop {
            if self.eat_kw("GROUP") {
                self.expect_kw("BY")?;
                m.group_by = true;
                self.skip_conditions()?;
            } else if self.eat_kw("HAVING") {
                m.having = true;
                self.skip_conditions()?;
            } else if self.eat_kw("ORDER") {
                self.expect_kw("BY")?;
                m.order_by = true;
                self.skip_conditions()?;
            } else if self.eat_kw("LIMIT") {
                m.limit = Some(self.integer()?);
            } else if self.eat_kw("OFFSET") {
                m.offset = Some(self.integer()?);
            } else {
                break;
            }
        }
        Ok(m)
    }

    fn skip_conditions(&mut self) -> Result<(), SparqlError> {
        let mut any = false;
        loop {
            match self.peek() {
                Some(Tok::Var(_)) => {
                    self.pos += 1;
                }
                Some(Tok::Punct("(")) => {
                    self.skip_balanced("(", ")")?;
                }
                Some(Tok::Word(w))
                    if !["GROUP", "HAVING", "ORDER", "LIMIT", "OFFSET"]
                        .iter()
                        .any(|k| w.eq_ignore_ascii_case(k)) =>
                {
                    self.pos += 1;
                    if self.is_punct("(") {
                        self.skip_balanced("(", ")")?;
                    }
                }
                _ => break,
            }
            any = true;
        }
        if any {
            Ok(())
        } else {
            Err(err(self.offset(), "expected condition"))
        }
    }

    fn integer(&mut self) -> Result<u64, SparqlError> {
        let off = self.offset();
        match self.next()? {
            Tok::Num(n) => n.parse().map_err(|_| err(off, "expected integer")),
            _ => Err(err(off, "expected integer")),
        }
    }

    fn iri_like(&mut self) -> Result<String, SparqlError> {
        match self.next()? {
            Tok::Iri(i) => Ok(i),
            Tok::PName(p, l) => self.resolve(&p, &l),
            _ => Err(err(self.offset(), "expected IRI")),
        }
    }

    fn group(&mut self) -> Result<GroupPattern, SparqlError> {
        self.expect_punct("{")?;
        let mut g = GroupPattern::default();
        if self.is_kw("SELECT") {
            // Sub-select: keep as opaque element.
            let mut depth = 1;
            while depth > 0 {
                match self.next()? {
                    Tok::Punct("{") => depth += 1,
                    Tok::Punct("}") => depth -= 1,
                    _ => {}
                }
            }
            g.elements.push(Element::Other("SELECT".into()));
            return Ok(g);
        }
        loop {
            if self.eat_punct("}") {
                return Ok(g);
            }
            if self.eat_punct(".") {
                continue;
            }
            if self.eat_kw("OPTIONAL") {
                g.elements.push(Element::Optional(self.group()?));
            } else if self.is_punct("{") {
                let first = self.group()?;
                if self.is_kw("UNION") {
                    let mut branches = vec![first];
                    while self.eat_kw("UNION") {
                        branches.push(self.group()?);
                    }
                    g.elements.push(Element::Union(branches));
                } else {
                    g.elements.push(Element::Group(first));
                }
            } else if self.eat_kw("FILTER") {
                g.elements.push(Element::Filter(self.filter_body()?));
            } else if self.is_kw("MINUS") || self.is_kw("GRAPH") || self.is_kw("SERVICE") {
                let Tok::Word(kw) = self.next()? else { unreachable!() };
                while !self.is_punct("{") {
                    self.next()?;
                }
                self.skip_balanced("{", "}")?;
                g.elements.push(Element::Other(kw.to_ascii_uppercase()));
            } else if self.is_kw("BIND") {
                self.pos += 1;
                self.skip_balanced("(", ")")?;
                g.elements.push(Element::Other("BIND".into()));
            } else if self.eat_kw("VALUES") {
                while !self.is_punct("{") {
                    self.next()?;
                }
                self.skip_balanced("{", "}")?;
                g.elements.push(Element::Other("VALUES".into()));
            } else {
                self.triples_same_subject(&mut g)?;
            }
        }
    }

    fn filter_body(&mut self) -> Result<String, SparqlError> {
        let start = self.offset();
        if self.is_punct("(") {
            self.skip_balanced("(", ")")?;
        } else {
            // function call, EXISTS or NOT EXISTS
            while let Some(Tok::Word(_)) = self.peek() {
                self.pos += 1;
            }
            if self.is_punct("(") {
                self.skip_balanced("(", ")")?;
            } else if self.is_punct("{") {
                self.skip_balanced("{", "}")?;
            } else {
                return Err(err(self.offset(), "malformed FILTER"));
            }
        }
        let end = self.toks[self.pos - 1].end;
        Ok(self.src[start..end].to_string())
    }

    fn triples_same_subject(&mut self, g: &mut GroupPattern) -> Result<(), SparqlError> {
        let subject = self.term()?;
        loop {
            let predicate = self.verb()?;
            loop {
                let object = self.term()?;
                g.elements.push(Element::Triple(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                }));
                if !self.eat_punct(",") {
                    break;
                }
            }
            if !self.eat_punct(";") {
                break;
            }
            // trailing ';' before '.' or '}'
            if self.is_punct(".") || self.is_punct("}") {
                break;
            }
        }
        Ok(())
    }

    fn verb(&mut self) -> Result<Term, SparqlError> {
        let start = self.offset();
        if let Some(Tok::Var(v)) = self.peek() {
            let v = v.clone();
            self.pos += 1;
            return Ok(Term::Var(v));
        }
        let mut elements = 0;
        let mut simple: Option<String>;
        loop {
            let inverse = self.eat_punct("^");
            match self.next()? {
                Tok::Iri(i) => simple = Some(i),
                Tok::PName(p, l) => simple = Some(self.resolve(&p, &l)?),
                Tok::Word(w) if w == "a" => simple = Some(RDF_TYPE.to_string()),
                Tok::Punct("(") => {
                    self.pos -= 1;
                    self.skip_balanced("(", ")")?;
                    simple = None;
                }
                _ => return Err(err(start, "expected predicate")),
            }
            elements += 1;
            let modified = self.eat_punct("*") || self.eat_punct("+") || self.eat_punct("?");
            if inverse || modified {
                simple = None;
            }
            if !(self.eat_punct("/") || self.eat_punct("|")) {
                break;
            }
        }
        match simple {
            Some(iri) if elements == 1 => Ok(Term::Iri(iri)),
            _ => {
                let end = self.toks[self.pos - 1].end;
                Ok(Term::Path(self.src[start..end].to_string()))
            }
        }
    }

    fn term(&mut self) -> Result<Term, SparqlError> {
        let off = self.offset();
        match self.next()? {
            Tok::Var(v) => Ok(Term::Var(v)),
            Tok::Iri(i) => Ok(Term::Iri(i)),
            Tok::PName(p, l) if p == "_" => Ok(Term::Var(format!("_:{l}"))),
            Tok::PName(p, l) => Ok(Term::Iri(self.resolve(&p, &l)?)),
            Tok::Str(s) => {
                let mut lang = None;
                let mut datatype = None;
                match self.peek() {
                    Some(Tok::LangTag(t)) => {
                        lang = Some(t.clone());
                        self.pos += 1;
                    }
                    Some(Tok::DtMark) => {
                        self.pos += 1;
                        datatype = Some(self.iri_like()?);
                    }
                    _ => {}
                }
                Ok(Term::Literal {
                    lexical: s,
                    lang,
                    datatype,
                })
            }
            Tok::Num(n) => {
                let dt = if n.contains(['e', 'E']) {
                    "double"
                } else if n.contains('.') {
                    "decimal"
                } else {
                    "integer"
                };
                Ok(Term::Literal {
                    lexical: n,
                    lang: None,
                    datatype: Some(format!("http://www.w3.org/2001/XMLSchema#{dt}")),
                })
            }
            Tok::Punct(sign @ ("+" | "-")) => match self.next()? {
                Tok::Num(n) => Ok(Term::Literal {
                    lexical: format!("{sign}{n}"),
                    lang: None,
                    datatype: Some("http://www.w3.org/2001/XMLSchema#integer".into()),
                }),
                _ => Err(err(off, "expected number after sign")),
            },
            Tok::Word(w) if w == "true" || w == "false" => Ok(Term::Literal {
                lexical: w,
                lang: None,
                datatype: Some("http://www.w3.org/2001/XMLSchema#boolean".into()),
            }),
            Tok::Punct("[") if self.eat_punct("]") => Ok(Term::Var(format!("_:anon{off}"))),
            other => Err(err(off, format!("expected RDF term, found {other:?}"))),
        }
    }
}

fn aggregate_from(w: &str) -> Option<Aggregate> {
    Some(match w.to_ascii_uppercase().as_str() {
        "COUNT" => Aggregate::Count,
        "MIN" => Aggregate::Min,
        "MAX" => Aggregate::Max,
        "SUM" => Aggregate::Sum,
        "AVG" => Aggregate::Avg,
        "SAMPLE" => Aggregate::Sample,
        "GROUP_CONCAT" => Aggregate::GroupConcat,
        _ => return None,
    })
}
