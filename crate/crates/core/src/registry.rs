//! Name-keyed factories for interchangeable strategies.

use std::collections::BTreeMap;

use crate::{Error, Result};

type Factory<T, O> = Box<dyn Fn(&O) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized, O> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T, O>>,
}

impl<T: ?Sized, O> Registry<T, O> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, factories: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, factory: impl Fn(&O) -> Result<Box<T>> + Send + Sync + 'static) {
        self.factories.insert(name.to_owned(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, options: &O) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(f) => f(options),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_owned(),
                available: self.names().join(", "),
            }),
        }
    }
}
