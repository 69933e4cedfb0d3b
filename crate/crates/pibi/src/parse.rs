//! Lexer and recursive-descent parsers for processes, types, bunches, and
//! functional terms. Line comments start with `--`.

use crate::alphalambda::Term;
use crate::bunch::{Bunch, Canon};
use crate::names::{FreshSupply, Name};
use crate::spawn::SpawnBinding;
use crate::syntax::{rename_apart, Process};
use crate::types::Type;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    macro_rules! push {
        ($tok:expr, $l:expr, $c:expr) => {
            out.push(Lexed { tok: $tok, line: $l, col: $c })
        };
    }
    while let Some(&c) = chars.peek() {
        let (l0, c0) = (line, col);
        let bump = |ch: char, line: &mut usize, col: &mut usize| {
            if ch == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        if c.is_whitespace() {
            chars.next();
            bump(c, &mut line, &mut col);
            continue;
        }
        if c.is_alphanumeric() || c == '_' || c == '\'' {
            let mut w = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_alphanumeric() || ch == '_' || ch == '\'' {
                    w.push(ch);
                    chars.next();
                    bump(ch, &mut line, &mut col);
                } else {
                    break;
                }
            }
            push!(Tok::Word(w), l0, c0);
            continue;
        }
        chars.next();
        bump(c, &mut line, &mut col);
        let two = |chars: &mut std::iter::Peekable<std::str::Chars>, want: char| -> bool {
            if chars.peek() == Some(&want) {
                chars.next();
                true
            } else {
                false
            }
        };
        match c {
            '-' => {
                if two(&mut chars, '-') {
                    col += 1;
                    while let Some(&ch) = chars.peek() {
                        chars.next();
                        bump(ch, &mut line, &mut col);
                        if ch == '\n' {
                            break;
                        }
                    }
                } else if two(&mut chars, '*') {
                    col += 1;
                    push!(Tok::Sym("-*"), l0, c0);
                } else if two(&mut chars, '>') {
                    col += 1;
                    push!(Tok::Sym("->"), l0, c0);
                } else {
                    return Err(ParseError { line: l0, col: c0, msg: "stray '-'".into() });
                }
            }
            '<' => {
                if two(&mut chars, '-') {
                    col += 1;
                    push!(Tok::Sym("<-"), l0, c0);
                } else {
                    push!(Tok::Sym("<"), l0, c0);
                }
            }
            '|' => {
                if two(&mut chars, '|') {
                    col += 1;
                    push!(Tok::Sym("||"), l0, c0);
                } else {
                    return Err(ParseError { line: l0, col: c0, msg: "stray '|'".into() });
                }
            }
            '/' => {
                if two(&mut chars, '\\') {
                    col += 1;
                    push!(Tok::Sym("/\\"), l0, c0);
                } else {
                    return Err(ParseError { line: l0, col: c0, msg: "stray '/'".into() });
                }
            }
            '\\' => {
                if two(&mut chars, '/') {
                    col += 1;
                    push!(Tok::Sym("\\/"), l0, c0);
                } else {
                    push!(Tok::Sym("\\"), l0, c0);
                }
            }
            '!' => push!(Tok::Sym("!"), l0, c0),
            '?' => push!(Tok::Sym("?"), l0, c0),
            '(' => push!(Tok::Sym("("), l0, c0),
            ')' => push!(Tok::Sym(")"), l0, c0),
            '[' => push!(Tok::Sym("["), l0, c0),
            ']' => push!(Tok::Sym("]"), l0, c0),
            '{' => push!(Tok::Sym("{"), l0, c0),
            '}' => push!(Tok::Sym("}"), l0, c0),
            '.' => push!(Tok::Sym("."), l0, c0),
            ';' => push!(Tok::Sym(";"), l0, c0),
            ',' => push!(Tok::Sym(","), l0, c0),
            ':' => push!(Tok::Sym(":"), l0, c0),
            '*' => push!(Tok::Sym("*"), l0, c0),
            '@' => push!(Tok::Sym("@"), l0, c0),
            '^' => push!(Tok::Sym("^"), l0, c0),
            '>' => push!(Tok::Sym(">"), l0, c0),
            '=' => push!(Tok::Sym("="), l0, c0),
            other => {
                return Err(ParseError {
                    line: l0,
                    col: c0,
                    msg: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: lex(text)?, pos: 0 })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|l| (l.line, l.col))
            .unwrap_or_else(|| {
                self.toks
                    .last()
                    .map(|l| (l.line, l.col + 1))
                    .unwrap_or((1, 1))
            })
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError { line, col, msg: msg.into() })
    }

    fn eat_sym(&mut self, s: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Sym(t)) if *t == s => {
                self.pos += 1;
                Ok(())
            }
            other => self.err(format!("expected '{s}', found {other:?}")),
        }
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(t)) if *t == s)
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(t)) if t == w)
    }

    fn eat_word(&mut self, w: &str) -> Result<(), ParseError> {
        if self.at_word(w) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{w}'"))
        }
    }

    fn ident(&mut self) -> Result<Name, ParseError> {
        match self.peek() {
            Some(Tok::Word(w))
                if w.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_') =>
            {
                let w = w.clone();
                self.pos += 1;
                Ok(Name::plain(w))
            }
            other => self.err(format!("expected identifier, found {other:?}")),
        }
    }

    fn finished(&mut self) -> Result<(), ParseError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            self.err("trailing input")
        }
    }

    // -- processes ---------------------------------------------------------

    fn process(&mut self) -> Result<Process, ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) if w == "new" => {
                self.pos += 1;
                let x = self.ident()?;
                self.eat_sym(".")?;
                self.eat_sym("(")?;
                let p = self.process()?;
                self.eat_sym("||")?;
                let q = self.process()?;
                self.eat_sym(")")?;
                Ok(Process::cut(x, p, q))
            }
            Some(Tok::Word(w)) if w == "fwd" => {
                self.pos += 1;
                let provided = self.ident()?;
                self.eat_sym("<-")?;
                let used = self.ident()?;
                Ok(Process::Fwd { provided, used })
            }
            Some(Tok::Word(w)) if w == "case" => {
                self.pos += 1;
                let chan = self.ident()?;
                self.eat_sym("{")?;
                self.eat_word("inl")?;
                self.eat_sym(":")?;
                let left = self.process()?;
                self.eat_sym(";")?;
                self.eat_word("inr")?;
                self.eat_sym(":")?;
                let right = self.process()?;
                self.eat_sym("}")?;
                Ok(Process::Branch { chan, left: Box::new(left), right: Box::new(right) })
            }
            Some(Tok::Word(w)) if w == "spawn" => {
                self.pos += 1;
                self.eat_sym("{")?;
                let mut map: BTreeMap<Name, BTreeSet<Name>> = BTreeMap::new();
                if !self.at_sym("}") {
                    loop {
                        let key = self.ident()?;
                        self.eat_sym("->")?;
                        self.eat_sym("{")?;
                        let mut image = BTreeSet::new();
                        if !self.at_sym("}") {
                            loop {
                                image.insert(self.ident()?);
                                if self.at_sym(",") {
                                    self.pos += 1;
                                } else {
                                    break;
                                }
                            }
                        }
                        self.eat_sym("}")?;
                        if map.insert(key.clone(), image).is_some() {
                            return self.err(format!("duplicate spawn key {key}"));
                        }
                        if self.at_sym(";") {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.eat_sym("}")?;
                self.eat_sym(".")?;
                let body = self.process()?;
                let binding = match SpawnBinding::new(map) {
                    Ok(b) => b,
                    Err(e) => return self.err(format!("invalid spawn binding: {e}")),
                };
                Ok(Process::spawn(binding, body))
            }
            Some(Tok::Word(_)) => {
                let chan = self.ident()?;
                match self.peek() {
                    Some(Tok::Sym("!")) => {
                        self.pos += 1;
                        if self.at_sym("[") {
                            self.pos += 1;
                            let payload = self.ident()?;
                            self.eat_sym("]")?;
                            self.eat_sym(".")?;
                            self.eat_sym("(")?;
                            let body = self.process()?;
                            self.eat_sym("||")?;
                            let cont = self.process()?;
                            self.eat_sym(")")?;
                            Ok(Process::Output {
                                chan,
                                payload,
                                body: Box::new(body),
                                cont: Box::new(cont),
                            })
                        } else {
                            self.eat_sym("(")?;
                            self.eat_sym(")")?;
                            Ok(Process::Close { chan })
                        }
                    }
                    Some(Tok::Sym("?")) => {
                        self.pos += 1;
                        self.eat_sym("(")?;
                        if self.at_sym(")") {
                            self.pos += 1;
                            self.eat_sym(".")?;
                            let body = self.process()?;
                            Ok(Process::Wait { chan, body: Box::new(body) })
                        } else {
                            let bound = self.ident()?;
                            self.eat_sym(")")?;
                            self.eat_sym(".")?;
                            let body = self.process()?;
                            Ok(Process::Input { chan, bound, body: Box::new(body) })
                        }
                    }
                    Some(Tok::Sym(".")) => {
                        self.pos += 1;
                        let which = match self.peek() {
                            Some(Tok::Word(w)) if w == "inl" => true,
                            Some(Tok::Word(w)) if w == "inr" => false,
                            _ => return self.err("expected 'inl' or 'inr' after selector dot"),
                        };
                        self.pos += 1;
                        self.eat_sym(".")?;
                        let body = self.process()?;
                        Ok(if which {
                            Process::SelL { chan, body: Box::new(body) }
                        } else {
                            Process::SelR { chan, body: Box::new(body) }
                        })
                    }
                    _ => self.err("expected '!', '?', or '.' after channel"),
                }
            }
            other => self.err(format!("expected process, found {other:?}")),
        }
    }

    // -- types --------------------------------------------------------------

    fn ty(&mut self) -> Result<Type, ParseError> {
        let left = self.ty_prod()?;
        if self.at_sym("-*") {
            self.pos += 1;
            let right = self.ty()?;
            Ok(Type::wand(left, right))
        } else if self.at_sym("->") {
            self.pos += 1;
            let right = self.ty()?;
            Ok(Type::impl_(left, right))
        } else {
            Ok(left)
        }
    }

    fn ty_prod(&mut self) -> Result<Type, ParseError> {
        let mut acc = self.ty_atom()?;
        loop {
            if self.at_sym("*") {
                self.pos += 1;
                acc = Type::sep(acc, self.ty_atom()?);
            } else if self.at_sym("/\\") {
                self.pos += 1;
                acc = Type::conj(acc, self.ty_atom()?);
            } else if self.at_sym("\\/") {
                self.pos += 1;
                acc = Type::disj(acc, self.ty_atom()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn ty_atom(&mut self) -> Result<Type, ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) if w == "1m" => {
                self.pos += 1;
                Ok(Type::OneM)
            }
            Some(Tok::Word(w)) if w == "1a" => {
                self.pos += 1;
                Ok(Type::OneA)
            }
            Some(Tok::Sym("@")) => {
                self.pos += 1;
                let n = self.ident()?;
                Ok(Type::Atom(n.base))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let t = self.ty()?;
                self.eat_sym(")")?;
                Ok(t)
            }
            other => self.err(format!("expected type, found {other:?}")),
        }
    }

    // -- bunches -------------------------------------------------------------

    fn bunch(&mut self) -> Result<Bunch, ParseError> {
        let mut acc = self.bunch_item()?;
        loop {
            if self.at_sym(";") {
                self.pos += 1;
                acc = Bunch::Semi(Box::new(acc), Box::new(self.bunch_item()?));
            } else if self.at_sym(",") {
                self.pos += 1;
                acc = Bunch::Comma(Box::new(acc), Box::new(self.bunch_item()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn bunch_item(&mut self) -> Result<Bunch, ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) if w == "0m" => {
                self.pos += 1;
                Ok(Bunch::UnitM)
            }
            Some(Tok::Word(w)) if w == "0a" => {
                self.pos += 1;
                Ok(Bunch::UnitA)
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let b = self.bunch()?;
                self.eat_sym(")")?;
                Ok(b)
            }
            Some(Tok::Word(_)) => {
                let n = self.ident()?;
                self.eat_sym(":")?;
                let t = self.ty()?;
                Ok(Bunch::Leaf(n, t))
            }
            other => self.err(format!("expected bunch, found {other:?}")),
        }
    }

    // -- functional terms ----------------------------------------------------

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Some(Tok::Sym("\\")) => {
                self.pos += 1;
                let x = self.ident()?;
                self.eat_sym(".")?;
                let body = self.term()?;
                Ok(Term::LamWand(x, Box::new(body)))
            }
            Some(Tok::Sym("^")) => {
                self.pos += 1;
                let x = self.ident()?;
                self.eat_sym(".")?;
                let body = self.term()?;
                Ok(Term::LamImpl(x, Box::new(body)))
            }
            Some(Tok::Word(w)) if w == "let" => {
                self.pos += 1;
                if self.at_sym("<") {
                    self.pos += 1;
                    let x = self.ident()?;
                    self.eat_sym(",")?;
                    let y = self.ident()?;
                    self.eat_sym(">")?;
                    self.eat_sym("=")?;
                    let m = self.term()?;
                    self.eat_word("in")?;
                    let n = self.term()?;
                    Ok(Term::LetPairSep(x, y, Box::new(m), Box::new(n)))
                } else {
                    self.eat_sym("*")?;
                    let mult = match self.peek() {
                        Some(Tok::Word(w)) if w == "m" => true,
                        Some(Tok::Word(w)) if w == "a" => false,
                        _ => return self.err("expected 'm' or 'a' after '*' in let"),
                    };
                    self.pos += 1;
                    self.eat_sym("=")?;
                    let m = self.term()?;
                    self.eat_word("in")?;
                    let n = self.term()?;
                    Ok(if mult {
                        Term::LetUnitM(Box::new(m), Box::new(n))
                    } else {
                        Term::LetUnitA(Box::new(m), Box::new(n))
                    })
                }
            }
            _ => self.term_app(),
        }
    }

    fn term_app(&mut self) -> Result<Term, ParseError> {
        let mut acc = self.term_prefix()?;
        loop {
            if self.at_sym("@") {
                self.pos += 1;
                let rhs = self.term_prefix()?;
                acc = Term::AppImpl(Box::new(acc), Box::new(rhs));
            } else if self.starts_atom() {
                let rhs = self.term_prefix()?;
                acc = Term::AppWand(Box::new(acc), Box::new(rhs));
            } else {
                return Ok(acc);
            }
        }
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Some(Tok::Sym("(")) | Some(Tok::Sym("<")) | Some(Tok::Sym("*")) => true,
            Some(Tok::Word(w)) => {
                !matches!(w.as_str(), "in" | "let")
                    && w.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
            }
            _ => false,
        }
    }

    fn term_prefix(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) if w == "pi1" || w == "pi2" => {
                let first = w == "pi1";
                self.pos += 1;
                let arg = self.term_atom()?;
                Ok(Term::Proj(if first { 1 } else { 2 }, Box::new(arg)))
            }
            Some(Tok::Word(w)) if w == "inj1" || w == "inj2" => {
                let first = w == "inj1";
                self.pos += 1;
                let arg = self.term_atom()?;
                Ok(Term::Inj(if first { 1 } else { 2 }, Box::new(arg)))
            }
            _ => self.term_atom(),
        }
    }

    fn term_atom(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) if w == "case" => {
                self.pos += 1;
                let scrutinee = self.term()?;
                self.eat_sym("{")?;
                let x1 = self.ident()?;
                self.eat_sym("->")?;
                let n1 = self.term()?;
                self.eat_sym(";")?;
                let x2 = self.ident()?;
                self.eat_sym("->")?;
                let n2 = self.term()?;
                self.eat_sym("}")?;
                Ok(Term::Case(Box::new(scrutinee), x1, Box::new(n1), x2, Box::new(n2)))
            }
            Some(Tok::Sym("*")) => {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Word(w)) if w == "m" => {
                        self.pos += 1;
                        Ok(Term::UnitM)
                    }
                    Some(Tok::Word(w)) if w == "a" => {
                        self.pos += 1;
                        Ok(Term::UnitA)
                    }
                    _ => self.err("expected 'm' or 'a' after '*'"),
                }
            }
            Some(Tok::Sym("<")) => {
                self.pos += 1;
                let m = self.term()?;
                self.eat_sym(",")?;
                let n = self.term()?;
                self.eat_sym(">")?;
                Ok(Term::PairSep(Box::new(m), Box::new(n)))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let m = self.term()?;
                if self.at_sym(",") {
                    self.pos += 1;
                    let n = self.term()?;
                    self.eat_sym(")")?;
                    Ok(Term::PairConj(Box::new(m), Box::new(n)))
                } else {
                    self.eat_sym(")")?;
                    Ok(m)
                }
            }
            Some(Tok::Word(_)) => Ok(Term::Var(self.ident()?)),
            other => self.err(format!("expected term, found {other:?}")),
        }
    }
}

/// Parse a process and rename bound names apart. Duplicate binders are legal
/// input; they are reported back as warnings after renaming.
pub fn parse_process_full(text: &str) -> Result<(Process, Vec<String>), ParseError> {
    let mut p = Parser::new(text)?;
    let raw = p.process()?;
    p.finished()?;
    let mut supply = FreshSupply::new();
    let (proc, renamed) = rename_apart(&raw, &mut supply, &BTreeSet::new());
    let warnings = renamed
        .iter()
        .map(|(old, new)| format!("duplicate binder {old} renamed to {new}"))
        .collect();
    Ok((proc, warnings))
}

pub fn parse_process(text: &str) -> Result<Process, ParseError> {
    parse_process_full(text).map(|(p, _)| p)
}

pub fn parse_type(text: &str) -> Result<Type, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.ty()?;
    p.finished()?;
    Ok(t)
}

pub fn parse_bunch(text: &str) -> Result<Canon, ParseError> {
    let mut p = Parser::new(text)?;
    let b = p.bunch()?;
    p.finished()?;
    Ok(Canon::canon(&b))
}

pub fn parse_bunch_raw(text: &str) -> Result<Bunch, ParseError> {
    let mut p = Parser::new(text)?;
    let b = p.bunch()?;
    p.finished()?;
    Ok(b)
}

pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.term()?;
    p.finished()?;
    let mut supply = FreshSupply::new();
    Ok(crate::alphalambda::rename_term_apart(&t, &mut supply))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::Name;
    use crate::syntax::alpha_eq;

    #[test]
    fn parse_cut_close_wait() {
        let p = parse_process("new x.(x!() || x?().z!())").unwrap();
        match &p {
            Process::Cut { provider, user, .. } => {
                assert!(matches!(**provider, Process::Close { .. }));
                assert!(matches!(**user, Process::Wait { .. }));
            }
            _ => panic!("expected cut"),
        }
        let q = parse_process("new w.(w!() || w?().z!())").unwrap();
        assert!(alpha_eq(&p, &q));
    }

    #[test]
    fn parse_spawn() {
        let p = parse_process("spawn{x -> {x1,x2}}.x1?().x2?().v!()").unwrap();
        match &p {
            Process::Spawn { binding, .. } => {
                assert_eq!(binding.domain(), [Name::plain("x")].into_iter().collect());
                assert_eq!(binding.restrictions().len(), 2);
            }
            _ => panic!("expected spawn"),
        }
    }

    #[test]
    fn parse_fwd() {
        let p = parse_process("fwd z <- x").unwrap();
        assert_eq!(
            p,
            Process::Fwd { provided: Name::plain("z"), used: Name::plain("x") }
        );
    }

    #[test]
    fn duplicate_binders_renamed_with_warning() {
        let (p, warnings) =
            parse_process_full("new x.(x!() || x?().new x.(x!() || x?().z!()))").unwrap();
        assert_eq!(warnings.len(), 1);
        let bound = p.bound_names();
        assert_eq!(bound.len(), 2);
    }

    #[test]
    fn parse_types() {
        let t = parse_type("@A -* (@A -> @A -> @B) -> @B").unwrap();
        match &t {
            Type::Wand(a, rest) => {
                assert_eq!(**a, Type::atom("A"));
                assert!(matches!(**rest, Type::Impl(..)));
            }
            _ => panic!("expected wand"),
        }
        let prod = parse_type("1m * 1a /\\ @s").unwrap();
        assert_eq!(prod, Type::conj(Type::sep(Type::OneM, Type::OneA), Type::atom("s")));
    }

    #[test]
    fn parse_terms() {
        let t = parse_term("\\a.^y.(y@a)a").unwrap();
        match t {
            Term::LamWand(_, body) => match *body {
                Term::LamImpl(_, inner) => {
                    assert!(matches!(*inner, Term::AppWand(..)));
                }
                _ => panic!("expected impl lambda"),
            },
            _ => panic!("expected wand lambda"),
        }
        let t2 = parse_term("let <x,y> = <*m, *a> in (x, y)").unwrap();
        assert!(matches!(t2, Term::LetPairSep(..)));
    }

    #[test]
    fn comments_are_skipped() {
        let p = parse_process("-- a comment\nz!() -- trailing").unwrap();
        assert_eq!(p, Process::Close { chan: Name::plain("z") });
    }
}
