//! JSON design document shared by every subcommand.

use leaky_regression::network::NetworkMatrices;
use leaky_regression::response::{bandwidth, group_delay_dc};
use leaky_regression::variance::StationaryPoint;
use leaky_regression::{
    build_realization, DesignSpec, Error, FilterRealization, Matrix, TransformSet, WeightSpec,
};
use serde::{Deserialize, Serialize};

/// Row-major matrix with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix<f64>> for MatrixDoc {
    fn from(m: &Matrix<f64>) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl MatrixDoc {
    fn to_matrix(&self, name: &str) -> Result<Matrix<f64>, Error> {
        Matrix::from_row_major(self.rows, self.cols, self.data.clone()).ok_or_else(|| {
            Error::InvalidDesign(format!(
                "matrix `{name}` declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// Requested delay: `"auto"` or a number of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelaySetting {
    Auto(Auto),
    Fixed(f64),
}

impl std::str::FromStr for DelaySetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto(Auto::Auto));
        }
        s.parse::<f64>()
            .map(Self::Fixed)
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

/// Frozen network, transform and normalizer values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationDoc {
    pub g1: MatrixDoc,
    pub h1: Vec<f64>,
    pub g2: MatrixDoc,
    pub h2: Vec<f64>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    pub gamma: f64,
    pub residual_normalizer: f64,
    pub overlap: MatrixDoc,
    pub psi_from_phi: MatrixDoc,
    pub phi_from_psi: MatrixDoc,
    pub synthesis: MatrixDoc,
    pub coefficient_output: MatrixDoc,
    pub output: MatrixDoc,
    pub second_moment_output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub kappa: usize,
    pub p: f64,
    pub model_order: usize,
    pub derivatives: usize,
    pub delay: DelaySetting,
    pub sample_period: f64,
    /// Delay actually used, in samples.
    pub q: f64,
    pub vrf: MatrixDoc,
    pub f_c: Option<f64>,
    pub group_delay_dc: f64,
    /// Stationary points of the smoother VRF; empty for a fixed delay.
    #[serde(default)]
    pub candidates: Vec<StationaryPoint<f64>>,
    pub realization: RealizationDoc,
}

impl DesignDocument {
    pub fn design(
        kappa: usize,
        p: f64,
        model_order: usize,
        derivatives: usize,
        delay: DelaySetting,
        sample_period: f64,
    ) -> Result<Self, Error> {
        let weight = WeightSpec::new(kappa, p)?;
        let (spec, candidates) = match delay {
            DelaySetting::Auto(_) => {
                let (spec, report) = DesignSpec::with_optimal_delay(
                    weight,
                    model_order,
                    derivatives,
                    sample_period,
                )?;
                (spec, report.candidates)
            }
            DelaySetting::Fixed(q) => (
                DesignSpec::new(weight, model_order, derivatives, q, sample_period)?,
                Vec::new(),
            ),
        };
        let real = build_realization(&spec)?;
        let f_c = match bandwidth(&real) {
            Ok(f) => Some(f),
            Err(Error::NoCrossing) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            kappa,
            p,
            model_order,
            derivatives,
            delay,
            sample_period,
            q: spec.delay(),
            vrf: real.vrf().into(),
            f_c,
            group_delay_dc: group_delay_dc(&real),
            candidates,
            realization: RealizationDoc::from(&real),
        })
    }

    /// Reassembles the stored realization without redoing the design math.
    pub fn realization(&self) -> Result<FilterRealization<f64>, Error> {
        let r = &self.realization;
        let spec = DesignSpec::new(
            WeightSpec::new(self.kappa, self.p)?,
            self.model_order,
            self.derivatives,
            self.q,
            self.sample_period,
        )?;
        let net1 = NetworkMatrices::from_parts(r.g1.to_matrix("g1")?, r.h1.clone())?;
        let net2 = NetworkMatrices::from_parts(r.g2.to_matrix("g2")?, r.h2.clone())?;
        if net1.p() != self.p || net2.p() != self.p {
            return Err(Error::InvalidDesign(
                "network pole does not match the document's p".into(),
            ));
        }
        let transforms = TransformSet {
            overlap: r.overlap.to_matrix("overlap")?,
            psi_from_phi: r.psi_from_phi.to_matrix("psi_from_phi")?,
            phi_from_psi: r.phi_from_psi.to_matrix("phi_from_psi")?,
            synthesis: r.synthesis.to_matrix("synthesis")?,
            coefficient_output: r.coefficient_output.to_matrix("coefficient_output")?,
            output: r.output.to_matrix("output")?,
            second_moment_output: r.second_moment_output.clone(),
        };
        FilterRealization::from_parts(
            spec,
            net1,
            net2,
            transforms,
            r.rho1.clone(),
            r.rho2.clone(),
            r.gamma,
            r.residual_normalizer,
            self.vrf.to_matrix("vrf")?,
        )
    }
}

impl From<&FilterRealization<f64>> for RealizationDoc {
    fn from(real: &FilterRealization<f64>) -> Self {
        let t = real.transforms();
        Self {
            g1: real.first_moment_network().g().into(),
            h1: real.first_moment_network().h().to_vec(),
            g2: real.second_moment_network().g().into(),
            h2: real.second_moment_network().h().to_vec(),
            rho1: real.rho1().to_vec(),
            rho2: real.rho2().to_vec(),
            gamma: real.gamma(),
            residual_normalizer: real.residual_normalizer(),
            overlap: (&t.overlap).into(),
            psi_from_phi: (&t.psi_from_phi).into(),
            phi_from_psi: (&t.phi_from_psi).into(),
            synthesis: (&t.synthesis).into(),
            coefficient_output: (&t.coefficient_output).into(),
            output: (&t.output).into(),
            second_moment_output: t.second_moment_output.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rebuilds_identical_realization() {
        let doc =
            DesignDocument::design(2, 0.8, 3, 3, DelaySetting::Auto(Auto::Auto), 0.5).unwrap();
        let json = serde_json::to_string_pretty(&doc).unwrap();
        let back: DesignDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
        let spec = DesignSpec::new(WeightSpec::new(2, 0.8).unwrap(), 3, 3, doc.q, 0.5).unwrap();
        assert_eq!(
            back.realization().unwrap(),
            build_realization(&spec).unwrap()
        );
    }

    #[test]
    fn delay_setting_parses_and_serializes() {
        assert_eq!(
            "auto".parse::<DelaySetting>().unwrap(),
            DelaySetting::Auto(Auto::Auto)
        );
        assert_eq!(
            "8.5".parse::<DelaySetting>().unwrap(),
            DelaySetting::Fixed(8.5)
        );
        assert!("soon".parse::<DelaySetting>().is_err());
        let json = serde_json::to_string(&DelaySetting::Auto(Auto::Auto)).unwrap();
        assert_eq!(json, "\"auto\"");
    }

    #[test]
    fn truncated_matrix_is_rejected() {
        let mut doc = DesignDocument::design(0, 0.8, 2, 1, DelaySetting::Fixed(8.5), 1.0).unwrap();
        doc.realization.output.data.pop();
        assert!(doc.realization().is_err());
    }
}
