use std::collections::BTreeMap;

use super::BankRef;
use crate::engine::ParamId;
use crate::error::{Error, Result};

/// Named feature banks that several layers may reference.
#[derive(Debug, Clone, Default)]
pub struct SharedBankRegistry {
    banks: BTreeMap<String, (ParamId, usize)>,
}

impl SharedBankRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, id: ParamId) -> Result<()> {
        if self.banks.contains_key(name) {
            return Err(Error::DuplicateBank(name.to_string()));
        }
        self.banks.insert(name.to_string(), (id, 0));
        Ok(())
    }

    /// Returns a reference to a registered bank and counts the new user.
    pub fn resolve(&mut self, name: &str) -> Result<BankRef> {
        let (id, refs) = self
            .banks
            .get_mut(name)
            .ok_or_else(|| Error::UnknownBank(name.to_string()))?;
        *refs += 1;
        Ok(BankRef::Shared {
            name: name.to_string(),
            id: *id,
        })
    }

    pub fn ref_count(&self, name: &str) -> Option<usize> {
        self.banks.get(name).map(|&(_, n)| n)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.banks.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_resolve_count() {
        let mut reg = SharedBankRegistry::new();
        reg.register("token-features", ParamId(4)).unwrap();
        let a = reg.resolve("token-features").unwrap();
        let b = reg.resolve("token-features").unwrap();
        assert_eq!(a.id(), b.id());
        assert_eq!(reg.ref_count("token-features"), Some(2));
    }

    #[test]
    fn duplicate_and_unknown() {
        let mut reg = SharedBankRegistry::new();
        reg.register("f", ParamId(0)).unwrap();
        assert!(matches!(reg.register("f", ParamId(1)), Err(Error::DuplicateBank(_))));
        assert!(matches!(reg.resolve("g"), Err(Error::UnknownBank(_))));
    }
}
