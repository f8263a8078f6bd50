use std::fmt;

use serde::{Deserialize, Serialize};

/// Participant index. The server is 0, data providers are `1..=M` and the
/// data consumer is `M + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartyId(pub u16);

impl PartyId {
    pub const SERVER: PartyId = PartyId(0);

    pub fn provider(i: u16) -> PartyId {
        PartyId(i)
    }

    pub fn consumer(providers: u16) -> PartyId {
        PartyId(providers + 1)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// Data provider ids `1..=count`.
pub fn providers(count: u16) -> Vec<PartyId> {
    (1..=count).map(PartyId).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleKind {
    Provider,
    Server,
    Consumer,
}

impl RoleKind {
    pub fn of(id: PartyId, providers: u16) -> Option<RoleKind> {
        match id.0 {
            0 => Some(RoleKind::Server),
            i if i <= providers => Some(RoleKind::Provider),
            i if i == providers + 1 => Some(RoleKind::Consumer),
            _ => None,
        }
    }
}
