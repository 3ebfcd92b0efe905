//! RULA grand score from an angle set. The band and lookup tables are data
//! (`config/rula_tables.json`) so they can be overridden.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ergonomics::{AngleSet, Measure};

const DEFAULT_TABLES: &str = include_str!("../config/rula_tables.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RulaError {
    #[error("score unavailable: {0} was not measured")]
    ScoreUnavailable(Measure),
    #[error("angle {angle} deg falls in no {table} band")]
    NoBand { table: &'static str, angle: f64 },
    #[error("invalid RULA tables: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub min: f64,
    pub max: f64,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulaTables {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub upper_arm_bands: Vec<Band>,
    pub lower_arm_bands: Vec<Band>,
    pub neck_bands: Vec<Band>,
    pub trunk_bands: Vec<Band>,
    pub wrist_score: u8,
    pub wrist_twist_score: u8,
    pub legs_score: u8,
    pub muscle_use_score: u8,
    pub force_load_score: u8,
    /// `[upper_arm][lower_arm][wrist][wrist_twist]`
    pub table_a: Vec<Vec<Vec<Vec<u8>>>>,
    /// `[neck][trunk][legs]`
    pub table_b: Vec<Vec<Vec<u8>>>,
    /// `[score_a][score_b]`, indices clamped to the last row/column.
    pub table_c: Vec<Vec<u8>>,
}

/// Intermediate scores, useful for reports and for checking the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubScores {
    pub upper_arm: u8,
    pub lower_arm: u8,
    pub neck: u8,
    pub trunk: u8,
}

fn band_score(bands: &[Band], angle: f64, table: &'static str) -> Result<u8, RulaError> {
    bands
        .iter()
        .find(|b| b.min <= angle && angle <= b.max)
        .map(|b| b.score)
        .ok_or(RulaError::NoBand { table, angle })
}

fn lookup<T>(v: &[T], score: u8) -> &T {
    let i = (score.max(1) as usize - 1).min(v.len() - 1);
    &v[i]
}

impl RulaTables {
    pub fn shipped() -> &'static RulaTables {
        static T: OnceLock<RulaTables> = OnceLock::new();
        T.get_or_init(|| RulaTables::from_json(DEFAULT_TABLES).expect("shipped RULA tables are valid"))
    }

    pub fn from_json(s: &str) -> Result<Self, RulaError> {
        let t: RulaTables = serde_json::from_str(s).map_err(|e| RulaError::Config(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), RulaError> {
        let bad = |m: &str| Err(RulaError::Config(m.to_string()));
        for (name, bands) in [
            ("upper_arm_bands", &self.upper_arm_bands),
            ("lower_arm_bands", &self.lower_arm_bands),
            ("neck_bands", &self.neck_bands),
            ("trunk_bands", &self.trunk_bands),
        ] {
            if bands.is_empty() || bands.iter().any(|b| b.min > b.max || b.score == 0) {
                return bad(name);
            }
            // every angle in [0, 180] must land in some band
            let mut edges: Vec<f64> = bands.iter().flat_map(|b| [b.min, b.max]).collect();
            edges.extend([0.0, 180.0]);
            edges.sort_by(f64::total_cmp);
            let probes = edges
                .windows(2)
                .map(|w| (w[0] + w[1]) / 2.0)
                .chain(edges.iter().copied())
                .filter(|a| (0.0..=180.0).contains(a));
            for a in probes {
                if band_score(bands, a, "config").is_err() {
                    return bad(name);
                }
            }
        }
        if self.table_a.is_empty()
            || self.table_a.iter().any(|la| {
                la.is_empty() || la.iter().any(|w| w.is_empty() || w.iter().any(|t| t.is_empty()))
            })
        {
            return bad("table_a has an empty dimension");
        }
        if self.table_b.is_empty() || self.table_b.iter().any(|t| t.is_empty() || t.iter().any(|l| l.is_empty())) {
            return bad("table_b has an empty dimension");
        }
        if self.table_c.is_empty() || self.table_c.iter().any(|r| r.is_empty()) {
            return bad("table_c has an empty dimension");
        }
        Ok(())
    }

    /// Worse of the two arms for the upper/lower arm sub-scores.
    pub fn sub_scores(&self, a: &AngleSet) -> Result<SubScores, RulaError> {
        let need = |v: Option<f64>, m: Measure| v.ok_or(RulaError::ScoreUnavailable(m));
        let ual = need(a.upper_arm_l_deg, Measure::UpperArmL)?;
        let uar = need(a.upper_arm_r_deg, Measure::UpperArmR)?;
        let lal = need(a.lower_arm_l_deg, Measure::LowerArmL)?;
        let lar = need(a.lower_arm_r_deg, Measure::LowerArmR)?;
        let neck = need(a.neck_flexion_deg, Measure::Neck)?;
        let trunk = need(a.trunk_flexion_deg, Measure::Trunk)?;
        Ok(SubScores {
            upper_arm: band_score(&self.upper_arm_bands, ual, "upper_arm")?
                .max(band_score(&self.upper_arm_bands, uar, "upper_arm")?),
            lower_arm: band_score(&self.lower_arm_bands, lal, "lower_arm")?
                .max(band_score(&self.lower_arm_bands, lar, "lower_arm")?),
            neck: band_score(&self.neck_bands, neck, "neck")?,
            trunk: band_score(&self.trunk_bands, trunk, "trunk")?,
        })
    }

    /// Table A/B/C combination of already-banded sub-scores.
    pub fn combine(&self, s: SubScores) -> u8 {
        let by_upper = lookup(&self.table_a, s.upper_arm);
        let by_lower = lookup(by_upper, s.lower_arm);
        let by_wrist = lookup(by_lower, self.wrist_score);
        let posture_a = lookup(by_wrist, self.wrist_twist_score);
        let score_a = *posture_a + self.muscle_use_score + self.force_load_score;

        let by_neck = lookup(&self.table_b, s.neck);
        let by_trunk = lookup(by_neck, s.trunk);
        let posture_b = lookup(by_trunk, self.legs_score);
        let score_b = *posture_b + self.muscle_use_score + self.force_load_score;

        *lookup(lookup(&self.table_c, score_a), score_b)
    }

    pub fn grand_score(&self, a: &AngleSet) -> Result<u8, RulaError> {
        Ok(self.combine(self.sub_scores(a)?))
    }
}

/// RULA grand score (1..=7) with the shipped tables.
pub fn rula_grand_score(a: &AngleSet) -> Result<u8, RulaError> {
    RulaTables::shipped().grand_score(a)
}
