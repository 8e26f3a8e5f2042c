//! Minute-granular simulation time.

use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MINUTES_PER_DAY: u32 = 1440;

/// Absolute simulation minute, counted from midnight of the start date.
pub type Tick = u32;

/// Time of day in minutes since midnight. Values up to 24:00 inclusive are accepted so a
/// plan can say "until midnight".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockTime(u32);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid time of day `{0}` (expected HH:MM within 00:00-24:00)")]
pub struct ClockParseError(pub String);

impl ClockTime {
    pub fn from_minutes(m: u32) -> Option<Self> {
        (m <= MINUTES_PER_DAY).then_some(ClockTime(m))
    }

    pub fn hm(h: u32, m: u32) -> Self {
        ClockTime::from_minutes(h * 60 + m).expect("valid clock time")
    }

    pub fn minutes(self) -> u32 {
        self.0
    }

    /// Saturating shift, clamped into the day.
    pub fn shifted(self, delta: i64) -> Self {
        let m = (self.0 as i64 + delta).clamp(0, MINUTES_PER_DAY as i64);
        ClockTime(m as u32)
    }

    pub fn from_tick(tick: Tick) -> Self {
        ClockTime(tick % MINUTES_PER_DAY)
    }
}

impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}

impl FromStr for ClockTime {
    type Err = ClockParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (h, m) = t.split_once(':').ok_or_else(|| ClockParseError(s.to_string()))?;
        let h: u32 = h.trim().parse().map_err(|_| ClockParseError(s.to_string()))?;
        let m: u32 = m.trim().parse().map_err(|_| ClockParseError(s.to_string()))?;
        if m >= 60 {
            return Err(ClockParseError(s.to_string()));
        }
        ClockTime::from_minutes(h * 60 + m).ok_or_else(|| ClockParseError(s.to_string()))
    }
}

impl Serialize for ClockTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Converts an absolute tick (minutes since `start` midnight) to a timestamp.
pub fn tick_to_datetime(start: NaiveDate, tick: Tick) -> NaiveDateTime {
    start.and_time(NaiveTime::MIN) + Duration::minutes(tick as i64)
}

/// Inverse of [`tick_to_datetime`]; times before `start` clamp to 0.
pub fn datetime_to_tick(start: NaiveDate, t: NaiveDateTime) -> Tick {
    let d = t - start.and_time(NaiveTime::MIN);
    d.num_minutes().max(0) as Tick
}

pub fn day_index(tick: Tick) -> u32 {
    tick / MINUTES_PER_DAY
}

pub fn date_of_tick(start: NaiveDate, tick: Tick) -> NaiveDate {
    start + Duration::days(day_index(tick) as i64)
}

/// Minutes since midnight of a timestamp.
pub fn minute_of_day(t: NaiveDateTime) -> u32 {
    t.time().hour() * 60 + t.time().minute()
}

pub fn format_stamp(t: NaiveDateTime) -> String {
    t.format("%a %Y-%m-%d %H:%M").to_string()
}
