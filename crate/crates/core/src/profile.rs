use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("shell profile needs at least one shell")]
    Empty,
    #[error("shell {k} is empty (D_k must be >= 1)")]
    EmptyShell { k: usize },
}

/// Breadth-first shell counts `D_1..D_L` around a root. The root shell
/// `D_0 = 1` is implicit, so `total_n = 1 + sum(D_k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShellProfile {
    shells: Vec<u64>,
}

impl ShellProfile {
    pub fn new(shells: Vec<u64>) -> Result<Self, ProfileError> {
        if shells.is_empty() {
            return Err(ProfileError::Empty);
        }
        if let Some(pos) = shells.iter().position(|&d| d == 0) {
            return Err(ProfileError::EmptyShell { k: pos + 1 });
        }
        Ok(Self { shells })
    }

    /// `D_1..D_L`.
    pub fn shells(&self) -> &[u64] {
        &self.shells
    }

    pub fn depth(&self) -> usize {
        self.shells.len()
    }

    pub fn total_n(&self) -> u64 {
        1 + self.shells.iter().sum::<u64>()
    }

    /// `D_k` with `D_0 = 1` and zero beyond the last shell.
    pub fn count(&self, k: usize) -> u64 {
        match k {
            0 => 1,
            k => self.shells.get(k - 1).copied().unwrap_or(0),
        }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.shells.iter().map(|&d| d as f64).collect()
    }
}
