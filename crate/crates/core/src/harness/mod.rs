//! Scenario execution and message-complexity comparison against two earlier
//! CAN group-key schemes, which are modeled by their closed-form counts only.

mod params_file;
mod scenario;

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::bus::{LatencyProfile, NodeClass, OpTally};
use crate::error::DomainError;

pub use params_file::{ParamFile, ProvisionedKey, SIMULATION_ONLY_NOTICE};
pub use scenario::{run_scenario, Check, Report, ScenarioConfig, ScenarioRun, ScenarioSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeModel {
    Ours,
    CarvajalRoca,
    Musuroi,
}

impl SchemeModel {
    pub const ALL: [SchemeModel; 3] = [
        SchemeModel::Ours,
        SchemeModel::CarvajalRoca,
        SchemeModel::Musuroi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeModel::Ours => "Ours",
            SchemeModel::CarvajalRoca => "CarvajalRoca",
            SchemeModel::Musuroi => "Musuroi",
        }
    }

    /// Closed-form key-establishment message count for a group of `n` ECUs.
    pub fn messages(self, n: u64) -> Result<u64, DomainError> {
        if n < 1 {
            return Err(DomainError::GroupSize(n));
        }
        Ok(match self {
            SchemeModel::Ours => 2 * n + 1,
            SchemeModel::CarvajalRoca => 5 * n + 1,
            SchemeModel::Musuroi => 4 * (2 * n - 1),
        })
    }

    /// Per-scheme operation tally at N=2 used for the cost comparison: public-key operations,
    /// hashes, HKDF, HMAC, symmetric encryptions and signatures.
    pub fn computation_tally(self) -> OpTally {
        match self {
            SchemeModel::Ours => OpTally::new(5, 4, 6, 4, 2),
            SchemeModel::CarvajalRoca => OpTally::new(6, 2, 0, 0, 4),
            SchemeModel::Musuroi => OpTally {
                sign: 1,
                verify: 2,
                ..OpTally::new(4, 0, 0, 0, 4)
            },
        }
    }

    /// The tally priced with the ECU costs of `profile`.
    pub fn computation_us(self, profile: &LatencyProfile) -> u64 {
        profile.cost_us(NodeClass::Ecu, &self.computation_tally())
    }
}

impl fmt::Display for SchemeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn expected_messages(scheme: SchemeModel, n: u64) -> Result<u64, DomainError> {
    scheme.messages(n)
}

/// Our message count as a fraction of each competitor's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComparisonRatios {
    pub vs_carvajal: Ratio<u64>,
    pub vs_musuroi: Ratio<u64>,
}

pub fn percent(r: Ratio<u64>) -> f64 {
    100.0 * *r.numer() as f64 / *r.denom() as f64
}

impl ComparisonRatios {
    pub fn percent_vs_carvajal(&self) -> f64 {
        percent(self.vs_carvajal)
    }

    pub fn percent_vs_musuroi(&self) -> f64 {
        percent(self.vs_musuroi)
    }
}

pub fn comparison_ratios(n: u64) -> Result<ComparisonRatios, DomainError> {
    let ours = SchemeModel::Ours.messages(n)?;
    Ok(ComparisonRatios {
        vs_carvajal: Ratio::new(ours, SchemeModel::CarvajalRoca.messages(n)?),
        vs_musuroi: Ratio::new(ours, SchemeModel::Musuroi.messages(n)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: SchemeModel,
    pub n: u64,
    pub messages: u64,
    /// Our count as a percentage of this scheme's.
    pub percent_of_ours: f64,
}

impl ComparisonRow {
    pub const CSV_HEADER: &'static str = "scheme,N,messages,percent_of_ours";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.2}",
            self.scheme, self.n, self.messages, self.percent_of_ours
        )
    }
}

/// Rows grouped by N, schemes in [`SchemeModel::ALL`] order.
pub fn comparison_table(ns: &[u64]) -> Result<Vec<ComparisonRow>, DomainError> {
    let mut rows = Vec::with_capacity(ns.len() * SchemeModel::ALL.len());
    for &n in ns {
        let ours = SchemeModel::Ours.messages(n)?;
        for scheme in SchemeModel::ALL {
            let messages = scheme.messages(n)?;
            rows.push(ComparisonRow {
                scheme,
                n,
                messages,
                percent_of_ours: percent(Ratio::new(ours, messages)),
            });
        }
    }
    Ok(rows)
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(ComparisonRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Least-squares line through `(x, y)` points; returns `(slope, intercept, max
/// relative residual)`.
pub fn affine_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let worst = points
        .iter()
        .map(|&(x, y)| {
            let fit = slope * x + intercept;
            if y == 0.0 {
                fit.abs()
            } else {
                ((y - fit) / y).abs()
            }
        })
        .fold(0.0, f64::max);
    (slope, intercept, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(expected_messages(SchemeModel::Ours, 2).unwrap(), 5);
        assert_eq!(expected_messages(SchemeModel::Musuroi, 1).unwrap(), 4);
        assert_eq!(
            expected_messages(SchemeModel::CarvajalRoca, 35).unwrap(),
            176
        );
        for s in SchemeModel::ALL {
            assert_eq!(s.messages(0), Err(DomainError::GroupSize(0)));
        }
    }

    #[test]
    fn worst_case_ratios() {
        let r = comparison_ratios(35).unwrap();
        assert_eq!(r.vs_carvajal, Ratio::new(71, 176));
        assert_eq!(r.vs_musuroi, Ratio::new(71, 276));
        assert!((r.percent_vs_carvajal() - 40.34).abs() < 0.01);
        assert!((r.percent_vs_musuroi() - 25.72).abs() < 0.01);
        assert_eq!(comparison_ratios(1).unwrap().vs_carvajal, Ratio::new(1, 2));
    }

    #[test]
    fn csv_rows() {
        let rows = comparison_table(&[2, 15, 25, 35]).unwrap();
        assert_eq!(rows.len(), 12);
        let csv = comparison_csv(&comparison_table(&[1]).unwrap());
        assert_eq!(
            csv,
            "scheme,N,messages,percent_of_ours\nOurs,1,3,100.00\nCarvajalRoca,1,6,50.00\nMusuroi,1,4,75.00\n"
        );
    }

    #[test]
    fn stm32_tallies() {
        let p = LatencyProfile::stm32();
        // 5·3000 + 4·40 + 6·300 + 4·80 + 2·40
        assert_eq!(SchemeModel::Ours.computation_us(&p), 17_360);
        assert_eq!(SchemeModel::CarvajalRoca.computation_us(&p), 18_240);
        // 2870 + 2·4460 + 4·3000 + 4·40
        assert_eq!(SchemeModel::Musuroi.computation_us(&p), 23_950);
    }

    #[test]
    fn fit_of_a_line_is_exact() {
        let pts: Vec<_> = [2.0, 15.0, 25.0, 35.0]
            .iter()
            .map(|&x| (x, 3.0 * x + 7.0))
            .collect();
        let (m, b, r) = affine_fit(&pts);
        assert!((m - 3.0).abs() < 1e-9 && (b - 7.0).abs() < 1e-9 && r < 1e-12);
    }
}
