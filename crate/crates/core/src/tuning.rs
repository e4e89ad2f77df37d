//! Named tuning presets for the avoidance maneuver.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::band::BandParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Default,
    /// Quicker lane change, less comfort.
    Fast,
    /// Gentler lane change.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningParams {
    pub node_spacing: f64,
    pub ks: f64,
    pub ke: f64,
    /// Added to lane width and ego half-width to form the force threshold.
    pub r0_margin: f64,
    /// Distance ahead of the obstacle at which the maneuver is planned.
    pub lead: f64,
    /// Band length kept past the obstacle for merging back.
    pub trail: f64,
    /// Scale of the maneuver time estimate when no band is active.
    pub k_preset: f64,
}

impl TuningParams {
    pub fn band_params(&self, lane_width: f64, ego_half_width: f64) -> BandParams {
        BandParams {
            node_spacing: self.node_spacing,
            ks: self.ks,
            ke: self.ke,
            r0: lane_width + ego_half_width + self.r0_margin,
            refine: false,
        }
    }
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Default, Preset::Fast, Preset::Smooth];

    pub fn params(self) -> TuningParams {
        match self {
            Preset::Default => TuningParams {
                node_spacing: 1.0,
                ks: 1.0,
                ke: 0.0015,
                r0_margin: 0.5,
                lead: 50.0,
                trail: 30.0,
                k_preset: 6.0,
            },
            Preset::Fast => TuningParams {
                node_spacing: 1.0,
                ks: 1.0,
                ke: 0.002,
                r0_margin: 0.2,
                lead: 45.0,
                trail: 18.0,
                k_preset: 4.0,
            },
            Preset::Smooth => TuningParams {
                node_spacing: 1.0,
                ks: 1.0,
                ke: 0.001,
                r0_margin: 1.0,
                lead: 60.0,
                trail: 60.0,
                k_preset: 8.0,
            },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Fast => "fast",
            Preset::Smooth => "smooth",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown preset {s:?} (expected default, fast or smooth)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_and_smooth_bracket_default() {
        let (d, f, s) = (Preset::Default.params(), Preset::Fast.params(), Preset::Smooth.params());
        assert!(f.ke > d.ke && d.ke > s.ke);
        assert!(f.r0_margin < d.r0_margin && d.r0_margin < s.r0_margin);
    }

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.as_str().parse::<Preset>(), Ok(p));
        }
        assert!("quick".parse::<Preset>().is_err());
    }
}
