use std::collections::{BTreeMap, BTreeSet};

use super::{record_arity, Atom, Fact, Literal, Program, ProgramError, Rule, Term};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    /// Lowercase- or digit-initial identifier.
    Ident(String),
    Var(String),
    Quoted(String),
    Not,
    LParen,
    RParen,
    Comma,
    Dot,
    Arrow,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> ProgramError {
        ProgramError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn skip_blank(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == '%' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn tokenize(mut self) -> Result<Vec<Token>, ProgramError> {
        let mut out = Vec::new();
        loop {
            self.skip_blank();
            let (line, column) = (self.line, self.column);
            let Some(&c) = self.chars.peek() else {
                return Ok(out);
            };
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '.' => {
                    self.bump();
                    Tok::Dot
                }
                ':' | '<' => {
                    self.bump();
                    match self.bump() {
                        Some('-') => Tok::Arrow,
                        _ => return Err(self.error(line, column, "expected `:-` or `<-`")),
                    }
                }
                '←' => {
                    self.bump();
                    Tok::Arrow
                }
                '"' => {
                    self.bump();
                    Tok::Quoted(self.quoted(line, column)?)
                }
                c if c.is_ascii_uppercase() => Tok::Var(self.word()),
                c if c.is_ascii_lowercase() || c.is_ascii_digit() => {
                    let w = self.word();
                    // `not` followed by whitespace negates the next atom.
                    if w == "not" && self.chars.peek().is_some_and(|c| c.is_whitespace()) {
                        Tok::Not
                    } else {
                        Tok::Ident(w)
                    }
                }
                other => return Err(self.error(line, column, format!("unexpected character `{other}`"))),
            };
            out.push(Token { tok, line, column });
        }
    }

    fn quoted(&mut self, line: usize, column: usize) -> Result<String, ProgramError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(self.error(line, column, "unterminated string")),
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some(c @ ('"' | '\\')) => s.push(c),
                    _ => return Err(self.error(self.line, self.column, "invalid escape")),
                },
                Some(c) => s.push(c),
            }
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.tokens
            .get(self.pos)
            .map(|t| (t.line, t.column))
            .unwrap_or(self.end)
    }

    fn error(&self, message: impl Into<String>) -> ProgramError {
        let (line, column) = self.here();
        ProgramError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ProgramError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn clause(&mut self) -> Result<(usize, Rule), ProgramError> {
        let line = self.here().0;
        let head = self.atom()?;
        let mut body = Vec::new();
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            loop {
                body.push(self.literal()?);
                match self.peek() {
                    Some(Tok::Comma) => self.pos += 1,
                    _ => break,
                }
            }
        }
        self.expect(Tok::Dot, "`.` at end of clause")?;
        Ok((line, Rule { head, body }))
    }

    fn literal(&mut self) -> Result<Literal, ProgramError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            Ok(Literal::negative(self.atom()?))
        } else {
            Ok(Literal::positive(self.atom()?))
        }
    }

    fn atom(&mut self) -> Result<Atom, ProgramError> {
        let predicate = match self.peek() {
            Some(Tok::Ident(name)) if name.starts_with(|c: char| c.is_ascii_lowercase()) => {
                let name = name.clone();
                self.pos += 1;
                name
            }
            _ => return Err(self.error("expected a predicate name")),
        };
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            if self.peek() == Some(&Tok::RParen) {
                self.pos += 1;
                return Ok(Atom::new(predicate, args));
            }
            loop {
                args.push(self.term()?);
                match self.next() {
                    Some(Tok::Comma) => {}
                    Some(Tok::RParen) => break,
                    _ => {
                        self.pos -= 1;
                        return Err(self.error("expected `,` or `)`"));
                    }
                }
            }
        }
        Ok(Atom::new(predicate, args))
    }

    fn term(&mut self) -> Result<Term, ProgramError> {
        let term = match self.peek() {
            Some(Tok::Var(v)) => Term::Var(v.clone()),
            Some(Tok::Ident(c)) | Some(Tok::Quoted(c)) => Term::Const(c.clone()),
            _ => return Err(self.error("expected a variable or constant")),
        };
        self.pos += 1;
        Ok(term)
    }
}

/// Parses clauses with their starting line, without validation.
pub(crate) fn parse_rules(text: &str) -> Result<Vec<(usize, Rule)>, ProgramError> {
    let tokens = Lexer::new(text).tokenize()?;
    let end = text
        .lines()
        .enumerate()
        .last()
        .map(|(i, l)| (i + 1, l.chars().count() + 1))
        .unwrap_or((1, 1));
    let mut parser = Parser { tokens, pos: 0, end };
    let mut rules = Vec::new();
    while parser.peek().is_some() {
        rules.push(parser.clause()?);
    }
    Ok(rules)
}

/// Parses and validates a program. Unsafe rules are rejected, naming every
/// offending variable.
pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    Program::validate(parse_rules(text)?)
}

/// Parses a facts file: ground atoms terminated by `.`, typically one per line.
pub fn parse_facts(text: &str) -> Result<BTreeSet<Fact>, ProgramError> {
    let mut signatures = BTreeMap::new();
    let mut facts = BTreeSet::new();
    for (line, rule) in parse_rules(text)? {
        if !rule.is_fact() {
            return Err(ProgramError::NotAFact { line });
        }
        let Some(fact) = Fact::from_atom(&rule.head) else {
            return Err(ProgramError::NonGround {
                line,
                atom: rule.head.to_string(),
            });
        };
        record_arity(&mut signatures, &fact.predicate, fact.arity(), line)?;
        facts.insert(fact);
    }
    Ok(facts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::SafetyViolation;

    #[test]
    fn parses_rule_with_two_negative_subgoals() {
        let p = parse_program("p(X,Y) <- a(X,Z), b(Z,Y), not c(X,Z), not d(Z,Y).").unwrap();
        assert_eq!(p.rules().len(), 1);
        let r = &p.rules()[0];
        assert_eq!(r.positive().count(), 2);
        assert_eq!(r.negative().count(), 2);
        assert_eq!(r.to_string(), "p(X,Y) :- a(X,Z), b(Z,Y), not c(X,Z), not d(Z,Y).");
    }

    #[test]
    fn unsafe_rule_names_variable() {
        let err = parse_program("p(X,Y) <- a(X,Y), not b(Y,Z).").unwrap_err();
        match err {
            ProgramError::Unsafe(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].variables, vec!["Z".to_string()]);
                assert_eq!(v[0].line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_unsafe_rules_are_reported() {
        let err =
            parse_program("p(X,Y) :- a(X,Y), not b(Y,Z).\nq(X,Y) :- c(X,U), not d(W,U), not e(U,Y).").unwrap_err();
        let ProgramError::Unsafe(v) = err else { panic!() };
        let vars: Vec<_> = v
            .iter()
            .flat_map(|SafetyViolation { variables, .. }| variables.clone())
            .collect();
        assert_eq!(vars, ["Z", "Y", "W"]);
        assert_eq!(v[1].line, 2);
    }

    #[test]
    fn empty_input_is_empty_program() {
        assert!(parse_program("").unwrap().is_empty());
        assert!(parse_program("% only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn both_arrows_and_comments() {
        let p = parse_program("a(X) :- b(X). % trailing\nc(X) <- b(X).\n").unwrap();
        assert_eq!(p.rules().len(), 2);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_program("p(X) :- q(X)\nr(Y).").unwrap_err();
        assert_eq!(
            err,
            ProgramError::Syntax {
                line: 2,
                column: 1,
                message: "expected `.` at end of clause".into()
            }
        );
        let err = parse_program("p(X) :- q(X), .").unwrap_err();
        assert!(matches!(
            err,
            ProgramError::Syntax {
                line: 1,
                column: 15,
                ..
            }
        ));
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let err = parse_program("p(X) :- q(X).\nr(X) :- q(X,X).").unwrap_err();
        assert!(matches!(
            err,
            ProgramError::ArityMismatch { ref predicate, expected: 1, found: 2, line: 2 } if predicate == "q"
        ));
    }

    #[test]
    fn not_as_predicate_name_without_space() {
        let p = parse_program("p(X) :- q(X), not(X).").unwrap();
        assert!(p.rules()[0].is_definite());
        assert_eq!(p.rules()[0].body[1].atom.predicate, "not");
    }

    #[test]
    fn facts_are_deduplicated() {
        let facts = parse_facts("a(1,2).\na(1,3).\nb(2,4).\nb(3,5).").unwrap();
        assert_eq!(facts.len(), 4);
        assert_eq!(parse_facts("a(1,2).\na(1,2).").unwrap().len(), 1);
        let j = parse_facts("c(1,2).\nd(2,3).").unwrap();
        assert!(j.contains(&Fact::new("c", ["1", "2"])));
        assert!(j.contains(&Fact::new("d", ["2", "3"])));
    }

    #[test]
    fn facts_must_be_ground_facts() {
        assert_eq!(
            parse_facts("a(1).\na(X).").unwrap_err(),
            ProgramError::NonGround {
                line: 2,
                atom: "a(X)".into()
            }
        );
        assert_eq!(
            parse_facts("a(1) :- b(1).").unwrap_err(),
            ProgramError::NotAFact { line: 1 }
        );
        assert!(matches!(
            parse_facts("a(1).\na(1,2).").unwrap_err(),
            ProgramError::ArityMismatch { .. }
        ));
    }

    #[test]
    fn propositional_atoms() {
        let p = parse_program("p.\nq :- p, not r.\nr() :- p.").unwrap();
        assert_eq!(p.arity("q"), Some(0));
        assert_eq!(p.arity("r"), Some(0));
        assert_eq!(p.rules()[2].to_string(), "r :- p.");
    }
}
