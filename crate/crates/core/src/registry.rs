//! Name-keyed registries of interchangeable strategies.

use crate::error::{Error, Result};

/// Anything selectable by name at runtime.
pub trait Named {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str {
        ""
    }
}

/// An ordered collection of trait objects registered under unique names.
pub struct Registry<T: ?Sized + Named> {
    items: Vec<Box<T>>,
}

impl<T: ?Sized + Named> Default for Registry<T> {
    fn default() -> Self {
        Registry { items: Vec::new() }
    }
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, item: Box<T>) -> Result<()> {
        if self.items.iter().any(|i| i.name() == item.name()) {
            return Err(Error::domain(format!("duplicate registration `{}`", item.name())));
        }
        self.items.push(item);
        Ok(())
    }

    pub fn with(mut self, item: Box<T>) -> Self {
        self.register(item).expect("static registration");
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.items
            .iter()
            .find(|i| i.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| {
                Error::domain(format!(
                    "unknown name `{name}`; available: {}",
                    self.names().join(", ")
                ))
            })
    }

    /// Removes and returns the item registered under `name`.
    pub fn take(&mut self, name: &str) -> Result<Box<T>> {
        self.get(name)?;
        let i = self.items.iter().position(|i| i.name() == name).unwrap();
        Ok(self.items.remove(i))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.items.iter().map(|i| i.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter().map(|b| b.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct A;
    struct B;
    trait Thing: Named {}
    impl Named for A {
        fn name(&self) -> &'static str {
            "a"
        }
    }
    impl Named for B {
        fn name(&self) -> &'static str {
            "b"
        }
    }
    impl Thing for A {}
    impl Thing for B {}

    #[test]
    fn lookup_and_duplicates() {
        let mut r: Registry<dyn Thing> = Registry::<dyn Thing>::new().with(Box::new(A)).with(Box::new(B));
        assert_eq!(r.names(), vec!["a", "b"]);
        assert_eq!(r.get("b").unwrap().name(), "b");
        assert!(r.get("c").is_err());
        assert!(r.register(Box::new(A)).is_err());
    }
}
