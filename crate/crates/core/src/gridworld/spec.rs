use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::env::GridEnv;
use super::generate::{generate_keycorridor, generate_multiroom};
use crate::error::{Error, Result};

/// Environment family addressed by ids such as `multiroom-N2-S5` or
/// `keycorridor-S3-R3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvSpec {
    MultiRoom {
        n_rooms: usize,
        max_room_size: usize,
    },
    KeyCorridor {
        room_size: usize,
        rows: usize,
    },
}

impl EnvSpec {
    pub fn generate(&self, seed: u64) -> Result<GridEnv> {
        match *self {
            EnvSpec::MultiRoom {
                n_rooms,
                max_room_size,
            } => generate_multiroom(seed, n_rooms, max_room_size),
            EnvSpec::KeyCorridor { room_size, rows } => generate_keycorridor(seed, room_size, rows),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvSpec::MultiRoom {
                n_rooms,
                max_room_size,
            } if n_rooms < 2 || max_room_size < 4 => Err(Error::InvalidConfig(format!(
                "{self}: needs N >= 2 and S >= 4"
            ))),
            EnvSpec::KeyCorridor { room_size, rows } if room_size < 3 || rows < 1 => Err(
                Error::InvalidConfig(format!("{self}: needs S >= 3 and R >= 1")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::MultiRoom {
                n_rooms,
                max_room_size,
            } => write!(f, "multiroom-N{n_rooms}-S{max_room_size}"),
            EnvSpec::KeyCorridor { room_size, rows } => {
                write!(f, "keycorridor-S{room_size}-R{rows}")
            }
        }
    }
}

fn parse_field(part: Option<&str>, prefix: char, id: &str) -> Result<usize> {
    part.and_then(|p| p.strip_prefix(prefix))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::InvalidConfig(format!("malformed environment id {id:?}")))
}

impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(id: &str) -> Result<Self> {
        let mut parts = id.split('-');
        let family = parts.next().unwrap_or_default().to_ascii_lowercase();
        let spec = match family.as_str() {
            "multiroom" => {
                let n_rooms = parse_field(parts.next(), 'N', id)?;
                let max_room_size = parse_field(parts.next(), 'S', id)?;
                EnvSpec::MultiRoom {
                    n_rooms,
                    max_room_size,
                }
            }
            "keycorridor" => {
                let room_size = parse_field(parts.next(), 'S', id)?;
                let rows = parse_field(parts.next(), 'R', id)?;
                EnvSpec::KeyCorridor { room_size, rows }
            }
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown environment id {id:?}"
                )))
            }
        };
        if parts.next().is_some() {
            return Err(Error::InvalidConfig(format!(
                "malformed environment id {id:?}"
            )));
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for EnvSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EnvSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in ["multiroom-N2-S5", "keycorridor-S3-R3", "multiroom-N7-S8"] {
            let spec: EnvSpec = id.parse().unwrap();
            assert_eq!(spec.to_string(), id);
        }
    }

    #[test]
    fn bad_ids_rejected() {
        for id in [
            "multiroom-N2",
            "maze-N2-S5",
            "multiroom-N1-S5",
            "keycorridor-S3-R3-x",
            "multiroom-S5-N2",
        ] {
            assert!(id.parse::<EnvSpec>().is_err(), "{id}");
        }
    }
}
