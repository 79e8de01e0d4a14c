//! Accounts with salted SHA-256 password hashes and opaque bearer tokens.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub username: String,
    pub admin: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredAccount {
    username: String,
    salt: String,
    hash: String,
    admin: bool,
}

fn digest(salt: &[u8], password: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(password.as_bytes());
    hex::encode(h.finalize())
}

fn random_hex(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    rand::rng().fill_bytes(&mut buf);
    hex::encode(buf)
}

#[derive(Default)]
struct Inner {
    accounts: HashMap<String, StoredAccount>,
    tokens: HashMap<String, String>,
    log: Option<File>,
}

/// Account store; registrations are appended to `accounts.jsonl` when a
/// data directory is given. Tokens live in memory only.
pub struct Accounts {
    inner: Mutex<Inner>,
    admins: Vec<String>,
}

impl Accounts {
    pub fn in_memory(admins: Vec<String>) -> Self {
        Self {
            inner: Mutex::new(Inner::default()),
            admins,
        }
    }

    pub fn open(dir: &Path, admins: Vec<String>) -> std::io::Result<Self> {
        let path = dir.join("accounts.jsonl");
        let mut inner = Inner::default();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let acc: StoredAccount = serde_json::from_str(&line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                inner.accounts.insert(acc.username.clone(), acc);
            }
        }
        inner.log = Some(OpenOptions::new().create(true).append(true).open(&path)?);
        Ok(Self {
            inner: Mutex::new(inner),
            admins,
        })
    }

    pub fn register(&self, username: &str, password: &str) -> Result<String, ApiError> {
        if username.is_empty() || username.len() > 64 || username.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Err(ApiError::bad_request("username must be 1-64 visible characters"));
        }
        if password.len() < 4 {
            return Err(ApiError::bad_request("password must have at least 4 characters"));
        }
        let mut inner = self.inner.lock();
        if inner.accounts.contains_key(username) {
            return Err(ApiError::conflict(format!("username {username:?} is taken")));
        }
        let salt = random_hex(16);
        let acc = StoredAccount {
            username: username.into(),
            hash: digest(salt.as_bytes(), password),
            salt,
            admin: self.admins.iter().any(|a| a == username),
        };
        if let Some(log) = inner.log.as_mut() {
            writeln!(log, "{}", serde_json::to_string(&acc).expect("accounts serialise"))
                .and_then(|_| log.flush())
                .map_err(|e| ApiError::internal(e.to_string()))?;
        }
        inner.accounts.insert(acc.username.clone(), acc);
        Ok(Self::issue(&mut inner, username))
    }

    pub fn login(&self, username: &str, password: &str) -> Result<String, ApiError> {
        let mut inner = self.inner.lock();
        let ok = inner
            .accounts
            .get(username)
            .is_some_and(|a| digest(a.salt.as_bytes(), password) == a.hash);
        if !ok {
            return Err(ApiError::unauthorized("unknown user or wrong password"));
        }
        Ok(Self::issue(&mut inner, username))
    }

    fn issue(inner: &mut Inner, username: &str) -> String {
        let token = random_hex(32);
        inner.tokens.insert(token.clone(), username.into());
        token
    }

    pub fn authenticate(&self, token: &str) -> Result<Account, ApiError> {
        let inner = self.inner.lock();
        let acc = inner
            .tokens
            .get(token)
            .and_then(|u| inner.accounts.get(u))
            .ok_or_else(|| ApiError::unauthorized("invalid or expired token"))?;
        Ok(Account {
            username: acc.username.clone(),
            admin: acc.admin,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_login_and_persist() {
        let dir = tempfile::tempdir().unwrap();
        let acc = Accounts::open(dir.path(), vec!["boss".into()]).unwrap();
        let t = acc.register("boss", "secret").unwrap();
        assert!(acc.authenticate(&t).unwrap().admin);
        let p = acc.register("ann", "pass1").unwrap();
        assert!(!acc.authenticate(&p).unwrap().admin);
        assert_eq!(acc.register("ann", "other").unwrap_err().code, "conflict");
        assert!(acc.login("ann", "wrong").is_err());
        drop(acc);

        let text = std::fs::read_to_string(dir.path().join("accounts.jsonl")).unwrap();
        assert!(!text.contains("pass1"));
        let again = Accounts::open(dir.path(), vec![]).unwrap();
        assert!(again.authenticate(&p).is_err());
        let t2 = again.login("ann", "pass1").unwrap();
        assert_eq!(again.authenticate(&t2).unwrap().username, "ann");
    }
}
