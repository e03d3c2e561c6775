//! Name-keyed registries of strategy trait objects.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Strategies of one kind, registered under unique names and looked up at
/// runtime from configuration or command-line flags.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Box<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Register `strategy` under `name`. Re-registering a name is a configuration error.
    pub fn register(&mut self, name: &str, strategy: Box<T>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Config(format!(
                "{} `{name}` registered twice",
                self.kind
            )));
        }
        self.entries.insert(name.to_owned(), strategy);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_owned(),
                known: self.names().collect::<Vec<_>>().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}
