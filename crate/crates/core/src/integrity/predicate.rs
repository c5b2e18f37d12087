//! Verification predicates: a tiny query language evaluated against a
//! profile store to decide whether a task's goal state already holds.
//!
//! Grammar:
//!
//! ```text
//! pred      := assertion
//! assertion := "count(" table [where] ")" cmp INT
//!            | "field(" table "." field [where] ")" cmp literal
//! where     := "where" cond {"and" cond}
//! cond      := field cmp literal
//! cmp       := ">=" | "<=" | "=" | ">" | "<"
//! literal   := "quoted string" | number | true | false | {{template}}
//! ```
//!
//! Template literals are resolved against the store at evaluation time.

use crate::integrity::constraint::{record_matches, Cmp, FieldCond};
use crate::integrity::store::ProfileStore;
use crate::integrity::template::{parse_template, resolve_expr};
use crate::integrity::value::Value;
use crate::integrity::IntegrityError;

/// A comparison operand: a concrete value or a template resolved later.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Value(Value),
    Template(String),
}

/// One `field cmp literal` clause.
#[derive(Debug, Clone, PartialEq)]
pub struct Cond {
    pub field: String,
    pub cmp: Cmp,
    pub value: Literal,
}

/// What the assertion measures.
#[derive(Debug, Clone, PartialEq)]
pub enum Subject {
    /// Number of records matching the conditions.
    Count { table: String, conds: Vec<Cond> },
    /// A field of the first record matching the conditions.
    Field {
        table: String,
        field: String,
        conds: Vec<Cond>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateAst {
    pub subject: Subject,
    pub cmp: Cmp,
    pub rhs: Literal,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Template(String),
    Symbol(&'static str),
}

fn parse_err(position: usize, message: impl Into<String>) -> IntegrityError {
    IntegrityError::PredicateParse {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, IntegrityError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
            }
            b'(' => {
                tokens.push((Tok::Symbol("("), start));
                i += 1;
            }
            b')' => {
                tokens.push((Tok::Symbol(")"), start));
                i += 1;
            }
            b'.' => {
                tokens.push((Tok::Symbol("."), start));
                i += 1;
            }
            b'>' | b'<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push((Tok::Symbol(if b == b'>' { ">=" } else { "<=" }), start));
                    i += 2;
                } else {
                    tokens.push((Tok::Symbol(if b == b'>' { ">" } else { "<" }), start));
                    i += 1;
                }
            }
            b'=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    return Err(parse_err(start, "equality is written '=' not '=='"));
                }
                tokens.push((Tok::Symbol("="), start));
                i += 1;
            }
            b'"' => {
                let mut out = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => return Err(parse_err(start, "unterminated string literal")),
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(b'\\') => match bytes.get(i + 1) {
                            Some(&c @ (b'"' | b'\\')) => {
                                out.push(c as char);
                                i += 2;
                            }
                            _ => return Err(parse_err(i, "bad escape in string literal")),
                        },
                        Some(_) => {
                            // Strings are UTF-8; copy the whole code point.
                            let ch = text[i..].chars().next().expect("in bounds");
                            out.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                tokens.push((Tok::Str(out), start));
            }
            b'{' => {
                if bytes.get(i + 1) != Some(&b'{') {
                    return Err(parse_err(start, "templates open with '{{'"));
                }
                match text[i + 2..].find("}}") {
                    None => return Err(parse_err(start, "unterminated template literal")),
                    Some(end) => {
                        tokens.push((Tok::Template(text[i + 2..i + 2 + end].to_string()), start));
                        i += end + 4;
                    }
                }
            }
            b'-' | b'0'..=b'9' => {
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                let number: f64 = text[i..j]
                    .parse()
                    .map_err(|_| parse_err(start, format!("bad number '{}'", &text[i..j])))?;
                tokens.push((Tok::Num(number), start));
                i = j;
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let mut j = i + 1;
                while j < bytes.len()
                    && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                tokens.push((Tok::Ident(text[i..j].to_string()), start));
                i = j;
            }
            _ => {
                return Err(parse_err(
                    start,
                    format!("unexpected character '{}'", text[start..].chars().next().unwrap()),
                ))
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.idx).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.end, |(_, p)| *p)
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let item = self.tokens.get(self.idx).cloned();
        self.idx += 1;
        item
    }

    fn expect_symbol(&mut self, symbol: &str) -> Result<(), IntegrityError> {
        let position = self.position();
        match self.next() {
            Some((Tok::Symbol(s), _)) if s == symbol => Ok(()),
            _ => Err(parse_err(position, format!("expected '{symbol}'"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, IntegrityError> {
        let position = self.position();
        match self.next() {
            Some((Tok::Ident(name), _)) => Ok(name),
            _ => Err(parse_err(position, format!("expected {what}"))),
        }
    }

    fn expect_cmp(&mut self) -> Result<Cmp, IntegrityError> {
        let position = self.position();
        match self.next() {
            Some((Tok::Symbol(s), _)) if Cmp::from_symbol(s).is_some() => {
                Ok(Cmp::from_symbol(s).expect("checked"))
            }
            _ => Err(parse_err(position, "expected a comparison operator")),
        }
    }

    fn expect_literal(&mut self) -> Result<Literal, IntegrityError> {
        let position = self.position();
        match self.next() {
            Some((Tok::Num(n), _)) => Ok(Literal::Value(Value::Num(n))),
            Some((Tok::Str(s), _)) => Ok(Literal::Value(Value::Str(s))),
            Some((Tok::Template(t), _)) => Ok(Literal::Template(t)),
            Some((Tok::Ident(word), _)) if word == "true" => {
                Ok(Literal::Value(Value::Bool(true)))
            }
            Some((Tok::Ident(word), _)) if word == "false" => {
                Ok(Literal::Value(Value::Bool(false)))
            }
            _ => Err(parse_err(
                position,
                "expected a literal (string, number, boolean, or template)",
            )),
        }
    }

    fn parse_where(&mut self) -> Result<Vec<Cond>, IntegrityError> {
        let mut conds = Vec::new();
        if !matches!(self.peek(), Some(Tok::Ident(w)) if w == "where") {
            return Ok(conds);
        }
        self.next();
        loop {
            let field = self.expect_ident("a field name")?;
            let cmp = self.expect_cmp()?;
            let value = self.expect_literal()?;
            conds.push(Cond { field, cmp, value });
            if matches!(self.peek(), Some(Tok::Ident(w)) if w == "and") {
                self.next();
            } else {
                return Ok(conds);
            }
        }
    }
}

/// Parses a predicate; errors carry the byte offset of the offending token.
pub fn parse_predicate(text: &str) -> Result<PredicateAst, IntegrityError> {
    let mut parser = Parser {
        tokens: lex(text)?,
        idx: 0,
        end: text.len(),
    };
    let head_position = parser.position();
    let head = parser.expect_ident("'count' or 'field'")?;
    let subject = match head.as_str() {
        "count" => {
            parser.expect_symbol("(")?;
            let table = parser.expect_ident("a table name")?;
            let conds = parser.parse_where()?;
            parser.expect_symbol(")")?;
            Subject::Count { table, conds }
        }
        "field" => {
            parser.expect_symbol("(")?;
            let table = parser.expect_ident("a table name")?;
            parser.expect_symbol(".")?;
            let field = parser.expect_ident("a field name")?;
            let conds = parser.parse_where()?;
            parser.expect_symbol(")")?;
            Subject::Field {
                table,
                field,
                conds,
            }
        }
        other => {
            return Err(parse_err(
                head_position,
                format!("expected 'count' or 'field', found '{other}'"),
            ))
        }
    };
    let cmp = parser.expect_cmp()?;
    let rhs_position = parser.position();
    let rhs = parser.expect_literal()?;
    if matches!(subject, Subject::Count { .. }) {
        match &rhs {
            Literal::Value(Value::Num(n)) if n.fract() == 0.0 && *n >= 0.0 => {}
            _ => {
                return Err(parse_err(
                    rhs_position,
                    "count compares against a nonnegative integer",
                ))
            }
        }
    }
    if parser.peek().is_some() {
        return Err(parse_err(parser.position(), "unexpected trailing input"));
    }
    Ok(PredicateAst { subject, cmp, rhs })
}

fn resolve_literal(literal: &Literal, store: &ProfileStore) -> Result<Value, IntegrityError> {
    match literal {
        Literal::Value(v) => Ok(v.clone()),
        Literal::Template(token) => {
            let expr = parse_template(token)?;
            resolve_expr(&expr, store).map_err(|message| IntegrityError::BadTemplate {
                token: token.clone(),
                message,
            })
        }
    }
}

fn resolve_conds(
    conds: &[Cond],
    store: &ProfileStore,
) -> Result<Vec<FieldCond>, IntegrityError> {
    conds
        .iter()
        .map(|c| {
            Ok(FieldCond {
                field: c.field.clone(),
                cmp: c.cmp,
                value: resolve_literal(&c.value, store)?,
            })
        })
        .collect()
}

/// Evaluates a predicate against one store.
///
/// A missing table counts zero rows for `count(...)` and simply fails a
/// `field(...)` assertion; so do a missing field, no matching record, and a
/// type-mismatched comparison. Unresolvable templates are hard errors.
pub fn eval_predicate(ast: &PredicateAst, store: &ProfileStore) -> Result<bool, IntegrityError> {
    let rhs = resolve_literal(&ast.rhs, store)?;
    match &ast.subject {
        Subject::Count { table, conds } => {
            let conds = resolve_conds(conds, store)?;
            let records = store.table(table).unwrap_or(&[]);
            let count = records.iter().filter(|r| record_matches(r, &conds)).count();
            let target = rhs.as_num().expect("validated at parse time");
            Ok(ast.cmp.holds_f64(count as f64, target))
        }
        Subject::Field {
            table,
            field,
            conds,
        } => {
            let conds = resolve_conds(conds, store)?;
            let Some(records) = store.table(table) else {
                return Ok(false);
            };
            let Some(record) = records.iter().find(|r| record_matches(r, &conds)) else {
                return Ok(false);
            };
            let Some(value) = record.get(field) else {
                return Ok(false);
            };
            Ok(value
                .compare(&rhs)
                .is_some_and(|ord| ast.cmp.holds(ord)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_store() -> ProfileStore {
        ProfileStore::from_json(&serde_json::json!({
            "profile_id": "p1",
            "user_meta": {"email": "sam@example.com", "limit": 450},
            "tables": {
                "transfers": [
                    {"amount": 500, "status": "done", "at": "2024-02-01T09:00:00"},
                    {"amount": 120, "status": "pending", "at": "2024-02-02T09:00:00"}
                ],
                "wallets": [{"balance": 300.0, "currency": "eur"}]
            }
        }))
        .unwrap()
    }

    #[test]
    fn parses_count_and_field_forms() {
        let ast = parse_predicate(r#"count(transfers where amount=500) >= 1"#).unwrap();
        assert_eq!(
            ast,
            PredicateAst {
                subject: Subject::Count {
                    table: "transfers".into(),
                    conds: vec![Cond {
                        field: "amount".into(),
                        cmp: Cmp::Eq,
                        value: Literal::Value(Value::Num(500.0)),
                    }],
                },
                cmp: Cmp::Ge,
                rhs: Literal::Value(Value::Num(1.0)),
            }
        );
        let ast = parse_predicate(
            r#"field(wallets.balance where currency="eur" and balance>0) >= 250.5"#,
        )
        .unwrap();
        match ast.subject {
            Subject::Field {
                table,
                field,
                conds,
            } => {
                assert_eq!(table, "wallets");
                assert_eq!(field, "balance");
                assert_eq!(conds.len(), 2);
            }
            other => panic!("wrong subject {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_byte_positions() {
        let cases: Vec<(&str, usize, &str)> = vec![
            ("blah(t) = 1", 0, "count' or 'field"),
            ("count(t) > x", 11, "literal"),
            ("count(t) == 1", 9, "'=' not '=='"),
            ("count(t) >= 1.5", 12, "integer"),
            ("count(t) >= 1 extra", 14, "trailing"),
            ("count(t", 7, "')'"),
            (r#"field(t.f) = "oops"#, 13, "unterminated"),
        ];
        for (text, position, fragment) in cases {
            match parse_predicate(text) {
                Err(IntegrityError::PredicateParse {
                    position: p,
                    message,
                }) => {
                    assert_eq!(p, position, "position for {text:?}: {message}");
                    assert!(
                        message.contains(fragment),
                        "message for {text:?}: {message}"
                    );
                }
                other => panic!("{text:?} should fail to parse, got {other:?}"),
            }
        }
    }

    #[test]
    fn count_treats_missing_tables_as_empty() {
        let store = demo_store();
        let solved = parse_predicate("count(transfers where amount=500) >= 1").unwrap();
        assert!(eval_predicate(&solved, &store).unwrap());
        let unsolved = parse_predicate("count(transfers where amount=999) >= 1").unwrap();
        assert!(!eval_predicate(&unsolved, &store).unwrap());
        let missing = parse_predicate("count(meetings) >= 1").unwrap();
        assert!(!eval_predicate(&missing, &store).unwrap());
        let vacuous = parse_predicate("count(meetings) <= 0").unwrap();
        assert!(eval_predicate(&vacuous, &store).unwrap());
    }

    #[test]
    fn field_reads_the_first_matching_record() {
        let store = demo_store();
        let first = parse_predicate("field(transfers.amount) = 500").unwrap();
        assert!(eval_predicate(&first, &store).unwrap());
        let filtered =
            parse_predicate(r#"field(transfers.amount where status="pending") = 120"#).unwrap();
        assert!(eval_predicate(&filtered, &store).unwrap());
        // Missing table, no matching record, missing field, and mismatched
        // types all evaluate false rather than erroring.
        for text in [
            "field(meetings.title) = \"x\"",
            r#"field(transfers.amount where status="failed") = 120"#,
            "field(transfers.nonexistent) = 1",
            r#"field(transfers.amount) = "five hundred""#,
        ] {
            let ast = parse_predicate(text).unwrap();
            assert!(!eval_predicate(&ast, &store).unwrap(), "{text}");
        }
    }

    #[test]
    fn string_literals_coerce_against_timestamps() {
        let store = demo_store();
        let before = parse_predicate(r#"field(transfers.at) < "2024-03-01""#).unwrap();
        assert!(eval_predicate(&before, &store).unwrap());
        let after = parse_predicate(r#"field(transfers.at) > "2024-03-01""#).unwrap();
        assert!(!eval_predicate(&after, &store).unwrap());
    }

    #[test]
    fn template_literals_resolve_at_evaluation_time() {
        let store = demo_store();
        let ast =
            parse_predicate("field(wallets.balance) < {{current_user_limit}}").unwrap();
        assert!(eval_predicate(&ast, &store).unwrap(), "300 < 450");
        let broken = parse_predicate("field(wallets.balance) < {{current_user_nope}}").unwrap();
        assert!(matches!(
            eval_predicate(&broken, &store),
            Err(IntegrityError::BadTemplate { .. })
        ));
    }
}
