//! Name-keyed lookup of interchangeable strategies.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Anything that can be registered under a stable name.
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Box<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers a strategy; a later entry with the same name replaces the earlier one.
    pub fn register(&mut self, strategy: Box<T>) -> &mut Self {
        self.entries.insert(strategy.name(), strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Named {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Named for Hello {
        fn name(&self) -> &'static str {
            "hello"
        }
    }
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[test]
    fn lookup_by_name() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register(Box::new(Hello));
        assert_eq!(reg.get("hello").unwrap().greet(), "hi");
        let err = reg.get("bye").err().unwrap().to_string();
        assert!(err.contains("known: hello"), "{err}");
        assert_eq!(reg.names(), vec!["hello"]);
    }
}
