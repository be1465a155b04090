//! Listening-place presets. The numbers are harness constants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Lounge,
    Office,
    Car,
    Cafe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaceProfile {
    /// Background noise rms (full scale 1).
    pub background_rms: f64,
    /// Probability that a non-reaction run carries nearby speech.
    pub chatter_prob: f64,
    /// Probability that a non-reaction run is motionless.
    pub still_prob: f64,
    /// Probability that a non-reaction run is large motion.
    pub large_prob: f64,
    /// Movement level (g) while motionless; a car never gets below the
    /// low threshold.
    pub still_level_g: (f64, f64),
    /// Rate at which the tagger reports non-reaction audio as a vocal class.
    pub confusion: f64,
}

impl Place {
    pub const ALL: [Place; 4] = [Place::Lounge, Place::Office, Place::Car, Place::Cafe];

    pub fn as_str(self) -> &'static str {
        match self {
            Place::Lounge => "lounge",
            Place::Office => "office",
            Place::Car => "car",
            Place::Cafe => "cafe",
        }
    }

    pub fn profile(self) -> PlaceProfile {
        match self {
            Place::Lounge => PlaceProfile {
                background_rms: 0.0004,
                chatter_prob: 0.05,
                still_prob: 0.6,
                large_prob: 0.02,
                still_level_g: (0.002, 0.008),
                confusion: 0.02,
            },
            Place::Office => PlaceProfile {
                background_rms: 0.0008,
                chatter_prob: 0.15,
                still_prob: 0.55,
                large_prob: 0.03,
                still_level_g: (0.002, 0.008),
                confusion: 0.08,
            },
            Place::Car => PlaceProfile {
                background_rms: 0.008,
                chatter_prob: 0.1,
                still_prob: 0.6,
                large_prob: 0.0,
                still_level_g: (0.012, 0.04),
                confusion: 0.1,
            },
            Place::Cafe => PlaceProfile {
                background_rms: 0.0025,
                chatter_prob: 0.35,
                still_prob: 0.55,
                large_prob: 0.03,
                still_level_g: (0.002, 0.008),
                confusion: 0.25,
            },
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Place {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Place::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown place {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cafe_confuses_more_than_lounge() {
        assert!(Place::Cafe.profile().confusion > Place::Lounge.profile().confusion);
        assert!(Place::Cafe.profile().chatter_prob > Place::Lounge.profile().chatter_prob);
    }

    #[test]
    fn names_round_trip() {
        for p in Place::ALL {
            assert_eq!(p.as_str().parse::<Place>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert!("beach".parse::<Place>().is_err());
    }

    #[test]
    fn still_ranges_respect_thresholds() {
        for p in [Place::Lounge, Place::Office, Place::Cafe] {
            assert!(p.profile().still_level_g.1 < 0.0092);
        }
        let car = Place::Car.profile().still_level_g;
        assert!(car.0 > 0.0104 && car.1 < 0.114);
    }
}
