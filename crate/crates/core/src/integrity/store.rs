//! Profile-backed data stores: per-user metadata plus named record tables.

use std::collections::BTreeMap;
use std::path::Path;

use crate::integrity::value::Value;
use crate::integrity::IntegrityError;

/// One table row: field name to typed value. Null and nested JSON fields are
/// dropped on ingest.
pub type Record = BTreeMap<String, Value>;

/// The synthetic data belonging to one user profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileStore {
    pub profile_id: String,
    /// Identity metadata (name, email, ...), addressed by identity templates.
    pub user_meta: BTreeMap<String, Value>,
    /// Record tables in insertion order per table.
    pub tables: BTreeMap<String, Vec<Record>>,
}

impl ProfileStore {
    /// Parses the JSON layout:
    /// `{"profile_id": "...", "user_meta": {...}, "tables": {"emails": [...]}}`.
    pub fn from_json(json: &serde_json::Value) -> Result<ProfileStore, IntegrityError> {
        let bad = |message: String| IntegrityError::BadStore {
            store: json
                .get("profile_id")
                .and_then(|v| v.as_str())
                .unwrap_or("<unknown>")
                .to_string(),
            message,
        };
        let object = json
            .as_object()
            .ok_or_else(|| bad("store must be a JSON object".into()))?;
        let profile_id = object
            .get("profile_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("missing string field 'profile_id'".into()))?
            .to_string();
        let mut user_meta = BTreeMap::new();
        if let Some(user) = object.get("user_meta") {
            let user = user
                .as_object()
                .ok_or_else(|| bad("'user_meta' must be an object".into()))?;
            for (key, value) in user {
                if let Some(v) = Value::from_json(value) {
                    user_meta.insert(key.clone(), v);
                }
            }
        }
        let mut tables = BTreeMap::new();
        if let Some(raw_tables) = object.get("tables") {
            let raw_tables = raw_tables
                .as_object()
                .ok_or_else(|| bad("'tables' must be an object".into()))?;
            for (name, rows) in raw_tables {
                let rows = rows.as_array().ok_or_else(|| {
                    bad(format!("table '{name}' must be an array of objects"))
                })?;
                let mut records = Vec::with_capacity(rows.len());
                for (idx, row) in rows.iter().enumerate() {
                    let row = row.as_object().ok_or_else(|| {
                        bad(format!("table '{name}' row {idx} must be an object"))
                    })?;
                    let mut record = Record::new();
                    for (field, value) in row {
                        if let Some(v) = Value::from_json(value) {
                            record.insert(field.clone(), v);
                        }
                    }
                    records.push(record);
                }
                tables.insert(name.clone(), records);
            }
        }
        Ok(ProfileStore {
            profile_id,
            user_meta,
            tables,
        })
    }

    pub fn from_json_str(text: &str) -> Result<ProfileStore, IntegrityError> {
        let json: serde_json::Value = serde_json::from_str(text)?;
        ProfileStore::from_json(&json)
    }

    /// Loads either a single store object or an array of them.
    pub fn load_many(path: impl AsRef<Path>) -> Result<Vec<ProfileStore>, IntegrityError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| IntegrityError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let json: serde_json::Value = serde_json::from_str(&text)?;
        match &json {
            serde_json::Value::Array(items) => {
                items.iter().map(ProfileStore::from_json).collect()
            }
            _ => Ok(vec![ProfileStore::from_json(&json)?]),
        }
    }

    pub fn table(&self, name: &str) -> Option<&[Record]> {
        self.tables.get(name).map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_json() -> serde_json::Value {
        serde_json::json!({
            "profile_id": "p1",
            "user_meta": {"name": "Sam", "email": "sam@example.com", "age": 30},
            "tables": {
                "emails": [
                    {"subject": "hello", "folder": "inbox",
                     "received_at": "2024-01-02T08:00:00"},
                    {"subject": "later", "folder": "archive",
                     "received_at": "2024-01-05T08:00:00", "attachment": null}
                ],
                "payments": []
            }
        })
    }

    #[test]
    fn parses_users_tables_and_types() {
        let store = ProfileStore::from_json(&demo_json()).unwrap();
        assert_eq!(store.profile_id, "p1");
        assert_eq!(store.user_meta["name"], Value::Str("Sam".into()));
        assert_eq!(store.user_meta["age"], Value::Num(30.0));
        let emails = store.table("emails").unwrap();
        assert_eq!(emails.len(), 2);
        assert!(matches!(emails[0]["received_at"], Value::Timestamp(_)));
        // Null fields are dropped, empty tables kept.
        assert!(!emails[1].contains_key("attachment"));
        assert_eq!(store.table("payments").unwrap().len(), 0);
        assert!(store.table("missing").is_none());
    }

    #[test]
    fn record_order_is_preserved() {
        let store = ProfileStore::from_json(&demo_json()).unwrap();
        let emails = store.table("emails").unwrap();
        assert_eq!(emails[0]["subject"], Value::Str("hello".into()));
        assert_eq!(emails[1]["subject"], Value::Str("later".into()));
    }

    #[test]
    fn malformed_stores_are_rejected() {
        for bad in [
            serde_json::json!([1, 2]),
            serde_json::json!({"user_meta": {}}),
            serde_json::json!({"profile_id": "p", "tables": {"t": {"not": "array"}}}),
            serde_json::json!({"profile_id": "p", "tables": {"t": [42]}}),
        ] {
            assert!(ProfileStore::from_json(&bad).is_err(), "{bad}");
        }
    }
}
