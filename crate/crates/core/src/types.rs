//! Identifiers and channel names shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(HelmetId);
string_id!(ZoneId);
string_id!(OperatorId);

/// An environmental measurement channel carried in telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Co,
    Ch4,
    Lpg,
    Temperature,
    Humidity,
    Noise,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Co,
        Channel::Ch4,
        Channel::Lpg,
        Channel::Temperature,
        Channel::Humidity,
        Channel::Noise,
    ];

    pub const GASES: [Channel; 3] = [Channel::Co, Channel::Ch4, Channel::Lpg];

    pub fn unit(self) -> &'static str {
        match self {
            Channel::Co | Channel::Lpg => "ppm",
            Channel::Ch4 => "%vol",
            Channel::Temperature => "degC",
            Channel::Humidity => "%RH",
            Channel::Noise => "dB",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Co => "co",
            Channel::Ch4 => "ch4",
            Channel::Lpg => "lpg",
            Channel::Temperature => "temperature",
            Channel::Humidity => "humidity",
            Channel::Noise => "noise",
        }
    }

    pub fn from_name(name: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn is_gas(self) -> bool {
        matches!(self, Channel::Co | Channel::Ch4 | Channel::Lpg)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
