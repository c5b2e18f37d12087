//! Mock-data templates: `{{...}}` tokens that pull live values out of a
//! profile store when task instances are materialized.
//!
//! Three families:
//!
//! * identity — `{{current_user_<key>}}` reads the profile's user metadata;
//! * relational — `{{first_<entity>_<field>}}` / `{{last_<entity>_<field>}}`
//!   read a field from the first or last record of a table in stored order;
//! * positioning — `{{beginning_<entity>_<field>}}`, `{{middle_...}}`,
//!   `{{end_...}}` read order statistics of the field's values: minimum,
//!   median (midpoint of the two central values on even counts), maximum.
//!
//! `<entity>` is singular and is pluralized to the table name. An optional
//! `:<field>=<literal>` suffix filters the records first.

use serde::Serialize;

use crate::integrity::store::{ProfileStore, Record};
use crate::integrity::value::Value;
use crate::integrity::IntegrityError;

/// Which record or order statistic a selection template asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Position {
    /// First record in stored order.
    First,
    /// Last record in stored order.
    Last,
    /// Smallest field value.
    Beginning,
    /// Median field value.
    Middle,
    /// Largest field value.
    End,
}

impl Position {
    fn from_keyword(word: &str) -> Option<Position> {
        Some(match word {
            "first" => Position::First,
            "last" => Position::Last,
            "beginning" => Position::Beginning,
            "middle" => Position::Middle,
            "end" => Position::End,
            _ => return None,
        })
    }

    /// Record-order positions pick a record; value-order positions rank the
    /// field's values.
    fn uses_record_order(self) -> bool {
        matches!(self, Position::First | Position::Last)
    }
}

/// A parsed template token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TemplateExpr {
    Identity {
        key: String,
    },
    Selection {
        position: Position,
        singular: String,
        field: String,
        /// Optional equality filter on another field.
        filter: Option<(String, Value)>,
    },
}

impl TemplateExpr {
    /// Table a selection template reads, if any.
    pub fn table(&self) -> Option<String> {
        match self {
            TemplateExpr::Identity { .. } => None,
            TemplateExpr::Selection { singular, .. } => Some(pluralize(singular)),
        }
    }

    pub fn has_filter(&self) -> bool {
        matches!(
            self,
            TemplateExpr::Selection {
                filter: Some(_),
                ..
            }
        )
    }
}

/// Singular table entity to table name: -s/-x/-z/-ch/-sh take "es",
/// consonant + "y" becomes "ies", everything else takes "s".
pub fn pluralize(singular: &str) -> String {
    let lower = singular.to_ascii_lowercase();
    if lower.ends_with('s')
        || lower.ends_with('x')
        || lower.ends_with('z')
        || lower.ends_with("ch")
        || lower.ends_with("sh")
    {
        return format!("{singular}es");
    }
    if let Some(stem) = singular.strip_suffix('y') {
        let before = stem.chars().last();
        if before.is_some_and(|c| !"aeiou".contains(c.to_ascii_lowercase())) {
            return format!("{stem}ies");
        }
    }
    format!("{singular}s")
}

fn bad(token: &str, message: impl Into<String>) -> IntegrityError {
    IntegrityError::BadTemplate {
        token: token.to_string(),
        message: message.into(),
    }
}

/// Parses the inside of a `{{...}}` token.
pub fn parse_template(token: &str) -> Result<TemplateExpr, IntegrityError> {
    if let Some(key) = token.strip_prefix("current_user_") {
        if key.is_empty() {
            return Err(bad(token, "identity template needs a metadata key"));
        }
        if key.contains(':') {
            return Err(bad(token, "identity templates take no filter"));
        }
        return Ok(TemplateExpr::Identity {
            key: key.to_string(),
        });
    }
    let (head, filter_text) = match token.split_once(':') {
        Some((head, filter)) => (head, Some(filter)),
        None => (token, None),
    };
    let mut segments = head.splitn(3, '_');
    let keyword = segments.next().unwrap_or_default();
    let position = Position::from_keyword(keyword).ok_or_else(|| {
        bad(
            token,
            format!(
                "unknown selector '{keyword}' (expected current_user, first, last, \
                 beginning, middle, or end)"
            ),
        )
    })?;
    let singular = segments
        .next()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(token, "missing entity name"))?;
    let field = segments
        .next()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(token, "missing field name"))?;
    let filter = match filter_text {
        None => None,
        Some(text) => {
            let (f, v) = text
                .split_once('=')
                .ok_or_else(|| bad(token, "filter must look like field=value"))?;
            if f.is_empty() {
                return Err(bad(token, "filter field must be non-empty"));
            }
            Some((f.to_string(), Value::parse_literal(v)))
        }
    };
    Ok(TemplateExpr::Selection {
        position,
        singular: singular.to_string(),
        field: field.to_string(),
        filter,
    })
}

/// Extracts the inner text of every well-formed `{{...}}` token, in order.
pub fn find_templates(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                tokens.push(after[..end].to_string());
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    tokens
}

/// Resolves one parsed template against a store.
pub fn resolve_expr(expr: &TemplateExpr, store: &ProfileStore) -> Result<Value, String> {
    match expr {
        TemplateExpr::Identity { key } => store
            .user_meta
            .get(key)
            .cloned()
            .ok_or_else(|| format!("user metadata has no key '{key}'")),
        TemplateExpr::Selection {
            position,
            singular,
            field,
            filter,
        } => {
            let table = pluralize(singular);
            // The pluralized name is canonical; a table stored under the
            // literal singular still resolves.
            let records = store
                .table(&table)
                .or_else(|| store.table(singular))
                .ok_or_else(|| format!("store has no table '{table}'"))?;
            let matching: Vec<&Record> = records
                .iter()
                .filter(|record| match filter {
                    None => true,
                    Some((f, literal)) => record
                        .get(f)
                        .and_then(|v| v.compare(literal))
                        .is_some_and(std::cmp::Ordering::is_eq),
                })
                .collect();
            if matching.is_empty() {
                return Err(format!("no records of '{table}' match"));
            }
            if position.uses_record_order() {
                let record = match position {
                    Position::First => matching.first().expect("non-empty"),
                    _ => matching.last().expect("non-empty"),
                };
                return record
                    .get(field)
                    .cloned()
                    .ok_or_else(|| format!("record has no field '{field}'"));
            }
            let mut values: Vec<Value> = matching
                .iter()
                .filter_map(|record| record.get(field).cloned())
                .collect();
            if values.is_empty() {
                return Err(format!("no '{table}' record carries field '{field}'"));
            }
            let mut comparable = true;
            values.sort_by(|a, b| {
                a.compare(b).unwrap_or_else(|| {
                    comparable = false;
                    std::cmp::Ordering::Equal
                })
            });
            if !comparable {
                return Err(format!(
                    "field '{field}' mixes value types and cannot be ordered"
                ));
            }
            let n = values.len();
            Ok(match position {
                Position::Beginning => values[0].clone(),
                Position::End => values[n - 1].clone(),
                Position::Middle => {
                    if n % 2 == 1 {
                        values[n / 2].clone()
                    } else {
                        let lo = &values[n / 2 - 1];
                        let hi = &values[n / 2];
                        // Falls back to the lower central value for types
                        // without a midpoint.
                        lo.midpoint(hi).unwrap_or_else(|| lo.clone())
                    }
                }
                Position::First | Position::Last => unreachable!("record-order handled above"),
            })
        }
    }
}

/// Replaces every template in a JSON document with its resolved value.
///
/// A string that is exactly one token takes the resolved value's own type;
/// tokens embedded in longer strings substitute their display form. Tokens
/// that fail to parse or resolve stay in place and are reported.
pub fn resolve_templates(
    json: &serde_json::Value,
    store: &ProfileStore,
) -> (serde_json::Value, Vec<String>) {
    let mut issues = Vec::new();
    let resolved = walk(json, store, &mut issues);
    (resolved, issues)
}

fn walk(
    json: &serde_json::Value,
    store: &ProfileStore,
    issues: &mut Vec<String>,
) -> serde_json::Value {
    match json {
        serde_json::Value::Object(map) => serde_json::Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), walk(v, store, issues)))
                .collect(),
        ),
        serde_json::Value::Array(items) => serde_json::Value::Array(
            items.iter().map(|v| walk(v, store, issues)).collect(),
        ),
        serde_json::Value::String(text) => rewrite_string(text, store, issues),
        other => other.clone(),
    }
}

fn rewrite_string(
    text: &str,
    store: &ProfileStore,
    issues: &mut Vec<String>,
) -> serde_json::Value {
    let tokens = find_templates(text);
    if tokens.is_empty() {
        return serde_json::Value::String(text.to_string());
    }
    // Whole-token strings keep the resolved value's type.
    if tokens.len() == 1 && text == format!("{{{{{}}}}}", tokens[0]) {
        match resolve_token(&tokens[0], store) {
            Ok(value) => return value.to_json(),
            Err(message) => {
                issues.push(format!("{{{{{}}}}}: {message}", tokens[0]));
                return serde_json::Value::String(text.to_string());
            }
        }
    }
    let mut rendered = text.to_string();
    for token in tokens {
        let needle = format!("{{{{{token}}}}}");
        match resolve_token(&token, store) {
            Ok(value) => {
                rendered = rendered.replace(&needle, &value.to_string());
            }
            Err(message) => issues.push(format!("{needle}: {message}")),
        }
    }
    serde_json::Value::String(rendered)
}

fn resolve_token(token: &str, store: &ProfileStore) -> Result<Value, String> {
    let expr = parse_template(token).map_err(|e| e.to_string())?;
    resolve_expr(&expr, store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_store() -> ProfileStore {
        ProfileStore::from_json(&serde_json::json!({
            "profile_id": "p1",
            "user_meta": {"name": "Sam", "email": "sam@example.com", "home_city": "Lisbon"},
            "tables": {
                "emails": [
                    {"subject": "first-sub", "folder": "inbox",
                     "received_at": "2024-01-03T08:00:00"},
                    {"subject": "mid-sub", "folder": "archive",
                     "received_at": "2024-01-01T08:00:00"},
                    {"subject": "last-sub", "folder": "inbox",
                     "received_at": "2024-01-02T08:00:00"}
                ],
                "payments": [
                    {"amount": 10.0, "payee": "acme"},
                    {"amount": 40.0, "payee": "acme"},
                    {"amount": 20.0, "payee": "globex"},
                    {"amount": 30.0, "payee": "acme"}
                ]
            }
        }))
        .unwrap()
    }

    #[test]
    fn pluralize_covers_the_usual_endings() {
        for (singular, plural) in [
            ("room", "rooms"),
            ("email", "emails"),
            ("address", "addresses"),
            ("box", "boxes"),
            ("church", "churches"),
            ("dish", "dishes"),
            ("city", "cities"),
            ("day", "days"),
            ("bus", "buses"),
        ] {
            assert_eq!(pluralize(singular), plural, "pluralize({singular})");
        }
    }

    #[test]
    fn parses_each_template_family() {
        assert_eq!(
            parse_template("current_user_email").unwrap(),
            TemplateExpr::Identity { key: "email".into() }
        );
        assert_eq!(
            parse_template("current_user_home_city").unwrap(),
            TemplateExpr::Identity { key: "home_city".into() }
        );
        assert_eq!(
            parse_template("first_email_subject").unwrap(),
            TemplateExpr::Selection {
                position: Position::First,
                singular: "email".into(),
                field: "subject".into(),
                filter: None,
            }
        );
        // Fields keep their internal underscores.
        assert_eq!(
            parse_template("end_email_received_at").unwrap(),
            TemplateExpr::Selection {
                position: Position::End,
                singular: "email".into(),
                field: "received_at".into(),
                filter: None,
            }
        );
        assert_eq!(
            parse_template("middle_payment_amount:payee=acme").unwrap(),
            TemplateExpr::Selection {
                position: Position::Middle,
                singular: "payment".into(),
                field: "amount".into(),
                filter: Some(("payee".into(), Value::Str("acme".into()))),
            }
        );
    }

    #[test]
    fn rejects_malformed_templates() {
        for token in [
            "nonsense_email_subject",
            "first_email",
            "first__subject",
            "current_user_",
            "middle_payment_amount:payee",
            "first_email_subject:=x",
        ] {
            assert!(parse_template(token).is_err(), "{token} should fail");
        }
    }

    #[test]
    fn finds_embedded_tokens_in_order() {
        let text = "To {{current_user_email}} re {{first_email_subject}} {{broken";
        assert_eq!(
            find_templates(text),
            vec!["current_user_email".to_string(), "first_email_subject".to_string()]
        );
        assert!(find_templates("no tokens here").is_empty());
    }

    #[test]
    fn first_and_last_follow_record_order() {
        let store = demo_store();
        let first = resolve_token("first_email_subject", &store).unwrap();
        assert_eq!(first, Value::Str("first-sub".into()));
        let last = resolve_token("last_email_subject", &store).unwrap();
        assert_eq!(last, Value::Str("last-sub".into()));
        // With a filter, order is evaluated after filtering.
        let last_inbox = resolve_token("last_email_subject:folder=inbox", &store).unwrap();
        assert_eq!(last_inbox, Value::Str("last-sub".into()));
        let first_archive = resolve_token("first_email_subject:folder=archive", &store).unwrap();
        assert_eq!(first_archive, Value::Str("mid-sub".into()));
    }

    #[test]
    fn positioning_ranks_field_values() {
        let store = demo_store();
        // Timestamps rank chronologically regardless of record order.
        let earliest = resolve_token("beginning_email_received_at", &store).unwrap();
        assert_eq!(earliest.to_string(), "2024-01-01T08:00:00");
        let latest = resolve_token("end_email_received_at", &store).unwrap();
        assert_eq!(latest.to_string(), "2024-01-03T08:00:00");
        // Odd count: exact median. 10, 20, 30, 40 -> filter acme: 10, 30, 40.
        let median_acme = resolve_token("middle_payment_amount:payee=acme", &store).unwrap();
        assert_eq!(median_acme, Value::Num(30.0));
        // Even count: midpoint of the two central values.
        let median_all = resolve_token("middle_payment_amount", &store).unwrap();
        assert_eq!(median_all, Value::Num(25.0));
    }

    #[test]
    fn resolution_failures_are_reported_not_fatal() {
        let store = demo_store();
        for (token, fragment) in [
            ("current_user_missing", "no key"),
            ("first_meeting_title", "no table 'meetings'"),
            ("first_email_subject:folder=spam", "no records"),
            ("first_email_nope", "no field"),
        ] {
            let err = resolve_token(token, &store).unwrap_err();
            assert!(err.contains(fragment), "{token}: {err}");
        }
    }

    #[test]
    fn document_rewrite_preserves_types_and_reports_issues() {
        let store = demo_store();
        let doc = serde_json::json!({
            "to": "{{current_user_email}}",
            "amount": "{{middle_payment_amount}}",
            "note": "re: {{first_email_subject}} from {{current_user_name}}",
            "broken": "{{first_meeting_title}}",
            "untouched": ["plain", 7, null]
        });
        let (resolved, issues) = resolve_templates(&doc, &store);
        assert_eq!(resolved["to"], serde_json::json!("sam@example.com"));
        // Whole-token numeric template becomes a JSON number.
        assert_eq!(resolved["amount"], serde_json::json!(25.0));
        assert_eq!(
            resolved["note"],
            serde_json::json!("re: first-sub from Sam")
        );
        // Failed token stays put and is reported.
        assert_eq!(resolved["broken"], serde_json::json!("{{first_meeting_title}}"));
        assert_eq!(issues.len(), 1);
        assert!(issues[0].contains("meetings"));
        assert_eq!(resolved["untouched"], serde_json::json!(["plain", 7, null]));
    }
}
