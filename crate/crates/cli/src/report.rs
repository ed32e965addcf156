use serde_json::{Map, Value};

use crate::data::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// `key=value` lines.
    Text,
    Json,
}

#[derive(Debug, Clone)]
enum Field {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

/// Ordered flat report.
#[derive(Debug, Clone, Default)]
pub struct Report {
    fields: Vec<(String, Field)>,
}

impl Report {
    pub fn float(&mut self, key: &str, v: f64) -> &mut Self {
        self.fields.push((key.into(), Field::Float(v)));
        self
    }

    pub fn int(&mut self, key: &str, v: impl TryInto<i64>) -> &mut Self {
        self.fields.push((key.into(), Field::Int(v.try_into().unwrap_or(i64::MAX))));
        self
    }

    pub fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        self.fields.push((key.into(), Field::Bool(v)));
        self
    }

    pub fn text(&mut self, key: &str, v: impl Into<String>) -> &mut Self {
        self.fields.push((key.into(), Field::Text(v.into())));
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.to_text(),
            Format::Json => serde_json::to_string_pretty(&self.to_json()).expect("report is valid json") + "\n",
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.fields {
            let s = match v {
                Field::Float(f) => fmt_f64(*f),
                Field::Int(i) => i.to_string(),
                Field::Bool(b) => b.to_string(),
                Field::Text(t) => t.clone(),
            };
            out.push_str(k);
            out.push('=');
            out.push_str(&s);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (k, v) in &self.fields {
            let val = match v {
                Field::Float(f) => Value::from(*f),
                Field::Int(i) => Value::from(*i),
                Field::Bool(b) => Value::from(*b),
                Field::Text(t) => Value::from(t.clone()),
            };
            map.insert(k.clone(), val);
        }
        Value::Object(map)
    }
}

/// Parses `key=value` report text back into pairs.
pub fn parse_text_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}
