//! The JSON run report.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{CertificateParams, MonitorSummary};
use crate::kinetics::AssumptionReport;

use super::config::RunConfig;
use super::mms::{MmsConfig, MmsReport};
use super::output::{OutputError, write_file};

/// Every report lists these, in this order.
pub const CERTIFICATES: [&str; 11] = [
    "completed",
    "conservation",
    "mass_monotone",
    "w_max_principle",
    "v_positivity",
    "v_floor",
    "v_upper_bound",
    "identity_residuals",
    "u_plateau",
    "equilibrium",
    "mms_order",
];

/// Relative drift of `∫u + α∫w` allowed after removing the clamped mass.
pub const CONSERVATION_RTOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
    NotApplicable,
}

impl Outcome {
    pub fn from_bool(ok: bool) -> Self {
        if ok { Self::Pass } else { Self::Fail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateResult {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Completed,
    Aborted,
}

/// Headline numbers. `None` where the run produced no value.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Headline {
    pub final_t: Option<f64>,
    pub final_u_linf: Option<f64>,
    pub u_star: Option<f64>,
    pub eq_du: Option<f64>,
    pub eq_dv: Option<f64>,
    pub eq_dw: Option<f64>,
    /// `max(0, -min slack)` over the snapshots.
    pub max_certificate_violation: Option<f64>,
    pub conservation_drift: Option<f64>,
    pub clamped_mass: Option<f64>,
    pub v_floor: Option<f64>,
    pub steps: Option<u64>,
    pub min_dt: Option<f64>,
    pub max_dt: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub status: Status,
    pub abort_reason: Option<String>,
    pub certificates: Vec<CertificateResult>,
    pub headline: Headline,
    pub wall_seconds: f64,
    /// The configuration with all defaults filled in.
    pub config: Option<RunConfig>,
    pub mms_config: Option<MmsConfig>,
    pub assumptions: Option<AssumptionReport>,
    pub certificate_params: Option<CertificateParams>,
    pub summary: Option<MonitorSummary>,
    pub mms: Option<MmsReport>,
    pub artifacts: Vec<PathBuf>,
}

impl ScenarioReport {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            status: Status::Completed,
            abort_reason: None,
            certificates: CERTIFICATES
                .iter()
                .map(|n| CertificateResult {
                    name: n.to_string(),
                    outcome: Outcome::NotApplicable,
                    detail: String::new(),
                })
                .collect(),
            headline: Headline::default(),
            wall_seconds: 0.0,
            config: None,
            mms_config: None,
            assumptions: None,
            certificate_params: None,
            summary: None,
            mms: None,
            artifacts: Vec::new(),
        }
    }

    /// Sets a listed certificate.
    pub fn set(&mut self, name: &str, outcome: Outcome, detail: impl Into<String>) {
        let c = self
            .certificates
            .iter_mut()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("unlisted certificate {name}"));
        c.outcome = outcome;
        c.detail = detail.into();
    }

    pub fn certificate(&self, name: &str) -> Option<&CertificateResult> {
        self.certificates.iter().find(|c| c.name == name)
    }

    pub fn abort(&mut self, reason: impl Into<String>) {
        let reason = reason.into();
        self.status = Status::Aborted;
        self.set("completed", Outcome::Fail, reason.clone());
        self.abort_reason = Some(reason);
    }

    pub fn failures(&self) -> Vec<&CertificateResult> {
        self.certificates
            .iter()
            .filter(|c| c.outcome == Outcome::Fail)
            .collect()
    }

    /// 0 when nothing failed, 1 on a certificate failure, 2 on abort.
    pub fn exit_code(&self) -> i32 {
        match (self.status, self.failures().is_empty()) {
            (Status::Aborted, _) => 2,
            (_, false) => 1,
            _ => 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf, OutputError> {
        let path = dir.join("report.json");
        if !self.artifacts.contains(&path) {
            self.artifacts.push(path.clone());
        }
        write_file(&path, self.to_json())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_report_lists_every_certificate() {
        let r = ScenarioReport::new("x");
        let names: Vec<_> = r.certificates.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, CERTIFICATES);
        assert!(
            r.certificates
                .iter()
                .all(|c| c.outcome == Outcome::NotApplicable)
        );
        assert_eq!(r.exit_code(), 0);
    }

    #[test]
    fn exit_codes() {
        let mut r = ScenarioReport::new("x");
        r.set("conservation", Outcome::Fail, "drift");
        assert_eq!(r.exit_code(), 1);
        r.abort("NaN in u");
        assert_eq!(r.exit_code(), 2);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["status"], "aborted");
        assert_eq!(json["abort_reason"], "NaN in u");
        assert_eq!(json["certificates"][1]["outcome"], "fail");
        assert_eq!(json["certificates"][2]["outcome"], "not-applicable");
    }
}
