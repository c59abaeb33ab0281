//! Test statistics on estimator output and thresholded event declaration.
//!
//! Each contiguous run of samples beyond the threshold yields one event, placed
//! at the sample where |Z| is largest within the run.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::{build_realization, DesignSpec, FilterRealization};
use crate::error::{Error, Result};
use crate::estimator::{
    frame_from_states, initial_state, EstimateFrame, Estimator, EstimatorState, VARIANCE_FLOOR,
};
use crate::network::steady_state_vector;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    RisingEdge,
    FallingEdge,
    Peak,
    BreakUp,
    BreakDown,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::RisingEdge => "rising-edge",
            EventKind::FallingEdge => "falling-edge",
            EventKind::Peak => "peak",
            EventKind::BreakUp => "break-up",
            EventKind::BreakDown => "break-down",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Edge,
    Peak,
    Change,
}

impl DetectorKind {
    /// Event declared for `z` at threshold `lambda`, if any.
    pub fn classify<T: Scalar>(self, z: T, lambda: T) -> Option<EventKind> {
        let (up, down) = match self {
            DetectorKind::Edge => (Some(EventKind::RisingEdge), Some(EventKind::FallingEdge)),
            DetectorKind::Peak => (Some(EventKind::Peak), None),
            DetectorKind::Change => (Some(EventKind::BreakUp), Some(EventKind::BreakDown)),
        };
        if z > lambda {
            up
        } else if z < -lambda {
            down
        } else {
            None
        }
    }

    fn min_derivatives(self) -> usize {
        match self {
            DetectorKind::Edge => 2,
            DetectorKind::Peak => 3,
            DetectorKind::Change => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DetectorKind::Edge => "edge",
            DetectorKind::Peak => "peak",
            DetectorKind::Change => "change",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutput<T> {
    pub n: u64,
    pub z: T,
    pub event: Option<EventKind>,
}

fn ratio<T: Scalar>(num: T, variance: T) -> T {
    if variance <= T::lit(VARIANCE_FLOOR) {
        T::zero()
    } else {
        num / variance.sqrt()
    }
}

fn require(kind: DetectorKind, got: usize) -> Result<()> {
    let needed = kind.min_derivatives();
    if got < needed {
        return Err(Error::IncompatibleDerivatives {
            kind: kind.name(),
            needed,
            got,
        });
    }
    Ok(())
}

/// `X̂⁽¹⁾ / σ̂₁`.
pub fn edge_statistic<T: Scalar>(frame: &EstimateFrame<T>) -> Result<T> {
    require(DetectorKind::Edge, frame.estimates.len())?;
    Ok(ratio(frame.estimates[1], frame.variance(1)))
}

/// `-X̂⁽²⁾ / σ̂₂`; positive at a maximum.
pub fn peak_statistic<T: Scalar>(frame: &EstimateFrame<T>) -> Result<T> {
    require(DetectorKind::Peak, frame.estimates.len())?;
    Ok(ratio(-frame.estimates[2], frame.variance(2)))
}

/// `(Â - B̂) / √(â² + b̂²)` on the smoother outputs.
pub fn change_statistic<T: Scalar>(a: &EstimateFrame<T>, b: &EstimateFrame<T>) -> T {
    ratio(
        a.estimates[0] - b.estimates[0],
        a.variance(0) + b.variance(0),
    )
}

/// Buffers the samples of an open threshold run so the event can be attached
/// to its extremum once the run closes.
#[derive(Debug, Clone)]
pub struct EventAnnotator<T> {
    kind: DetectorKind,
    threshold: T,
    run: Vec<DetectorOutput<T>>,
    run_event: Option<EventKind>,
}

impl<T: Scalar> EventAnnotator<T> {
    pub fn new(kind: DetectorKind, threshold: T) -> Self {
        Self {
            kind,
            threshold,
            run: Vec::new(),
            run_event: None,
        }
    }

    /// Returns the rows that are final, in input order.
    pub fn push(&mut self, n: u64, z: T) -> Vec<DetectorOutput<T>> {
        let event = self.kind.classify(z, self.threshold);
        let mut ready = Vec::new();
        if event != self.run_event {
            ready = self.close();
        }
        let row = DetectorOutput { n, z, event: None };
        if event.is_some() {
            self.run_event = event;
            self.run.push(row);
        } else {
            ready.push(row);
        }
        ready
    }

    /// Flushes any open run.
    pub fn finish(&mut self) -> Vec<DetectorOutput<T>> {
        self.close()
    }

    fn close(&mut self) -> Vec<DetectorOutput<T>> {
        let mut rows = std::mem::take(&mut self.run);
        if let Some(event) = self.run_event.take() {
            let mut best = 0;
            for (i, r) in rows.iter().enumerate() {
                if r.z.abs() > rows[best].z.abs() {
                    best = i;
                }
            }
            if let Some(r) = rows.get_mut(best) {
                r.event = Some(event);
            }
        }
        rows
    }
}

/// Common streaming interface of the detectors.
pub trait Detector<T: Scalar> {
    fn push(&mut self, x: T) -> Result<Vec<DetectorOutput<T>>>;

    fn finish(&mut self) -> Vec<DetectorOutput<T>>;

    /// Runs a whole sequence and returns one row per sample.
    fn run(&mut self, samples: impl IntoIterator<Item = T>) -> Result<Vec<DetectorOutput<T>>>
    where
        Self: Sized,
    {
        let mut out = Vec::new();
        for x in samples {
            out.extend(self.push(x)?);
        }
        out.extend(self.finish());
        Ok(out)
    }
}

/// Edge or peak detector on a single design.
#[derive(Debug, Clone)]
pub struct StatisticDetector<T> {
    kind: DetectorKind,
    estimator: Estimator<T>,
    annotator: EventAnnotator<T>,
}

impl<T: Scalar> StatisticDetector<T> {
    pub fn edge(
        realization: impl Into<Arc<FilterRealization<T>>>,
        threshold: T,
        sigma0_sq: T,
    ) -> Result<Self> {
        Self::new(DetectorKind::Edge, realization.into(), threshold, sigma0_sq)
    }

    pub fn peak(
        realization: impl Into<Arc<FilterRealization<T>>>,
        threshold: T,
        sigma0_sq: T,
    ) -> Result<Self> {
        Self::new(DetectorKind::Peak, realization.into(), threshold, sigma0_sq)
    }

    fn new(
        kind: DetectorKind,
        realization: Arc<FilterRealization<T>>,
        threshold: T,
        sigma0_sq: T,
    ) -> Result<Self> {
        require(kind, realization.spec().derivatives())?;
        check_threshold(threshold)?;
        Ok(Self {
            kind,
            estimator: Estimator::new(realization, sigma0_sq)?,
            annotator: EventAnnotator::new(kind, threshold),
        })
    }
}

fn check_threshold<T: Scalar>(threshold: T) -> Result<()> {
    if threshold.is_nan() || threshold < T::zero() {
        return Err(Error::InvalidDesign(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    Ok(())
}

impl<T: Scalar> Detector<T> for StatisticDetector<T> {
    fn push(&mut self, x: T) -> Result<Vec<DetectorOutput<T>>> {
        let frame = self.estimator.push(x)?;
        let z = match self.kind {
            DetectorKind::Edge => edge_statistic(&frame)?,
            _ => peak_statistic(&frame)?,
        };
        Ok(self.annotator.push(frame.n, z))
    }

    fn finish(&mut self) -> Vec<DetectorOutput<T>> {
        self.annotator.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeDetectorConfig<T> {
    /// Emphasizes recent data (small κ).
    pub filter_a: DesignSpec<T>,
    /// Emphasizes older data (larger κ).
    pub filter_b: DesignSpec<T>,
    pub common_q: T,
    pub threshold: T,
}

/// Two smoothers evaluated at a common delay off one shared integrator bank.
#[derive(Debug, Clone)]
pub struct ChangeDetector<T> {
    a: Arc<FilterRealization<T>>,
    b: Arc<FilterRealization<T>>,
    rho1: Vec<T>,
    rho2: Vec<T>,
    sigma0_sq: T,
    state: Option<EstimatorState<T>>,
    annotator: EventAnnotator<T>,
}

impl<T: Scalar> ChangeDetector<T> {
    pub fn new(config: &ChangeDetectorConfig<T>, sigma0_sq: T) -> Result<Self> {
        let a = build_realization(&config.filter_a.with_delay(config.common_q)?)?;
        let b = build_realization(&config.filter_b.with_delay(config.common_q)?)?;
        Self::from_realizations(a, b, config.threshold, sigma0_sq)
    }

    /// Pairs two prebuilt designs; they must share p, K_X, T_s and q and
    /// differ in κ.
    pub fn from_realizations(
        a: impl Into<Arc<FilterRealization<T>>>,
        b: impl Into<Arc<FilterRealization<T>>>,
        threshold: T,
        sigma0_sq: T,
    ) -> Result<Self> {
        let (a, b) = (a.into(), b.into());
        let (sa, sb) = (a.spec(), b.spec());
        let mismatch = if sa.p() != sb.p() {
            Some("smoothing parameters differ")
        } else if sa.model_order() != sb.model_order() {
            Some("model orders differ")
        } else if sa.sample_period() != sb.sample_period() {
            Some("sampling periods differ")
        } else if sa.delay() != sb.delay() {
            Some("delays differ; both filters must be evaluated at the common q")
        } else if sa.kappa() == sb.kappa() {
            Some("shape parameters are equal, so the filters cannot disagree")
        } else {
            None
        };
        if let Some(reason) = mismatch {
            return Err(Error::IncompatiblePair(reason.into()));
        }
        check_threshold(threshold)?;
        if !(sigma0_sq >= T::zero()) {
            return Err(Error::NegativeVariance(sigma0_sq.as_f64()));
        }
        let kappa = sa.kappa().max(sb.kappa());
        let rho1 = steady_state_vector(kappa + sa.model_order(), sa.p())?;
        let rho2 = steady_state_vector(kappa + 1, sa.p())?;
        Ok(Self {
            a,
            b,
            rho1,
            rho2,
            sigma0_sq,
            state: None,
            annotator: EventAnnotator::new(DetectorKind::Change, threshold),
        })
    }

    /// Frames of both filters for the current shared state.
    pub fn frames(&self) -> Option<(EstimateFrame<T>, EstimateFrame<T>)> {
        self.state.as_ref().map(|s| {
            (
                frame_from_states(&self.a, &s.w1, &s.w2, s.n),
                frame_from_states(&self.b, &s.w1, &s.w2, s.n),
            )
        })
    }

    /// Shared bank orders `(K_1, K_2)`.
    pub fn bank_orders(&self) -> (usize, usize) {
        (self.rho1.len(), self.rho2.len())
    }
}

impl<T: Scalar> Detector<T> for ChangeDetector<T> {
    fn push(&mut self, x: T) -> Result<Vec<DetectorOutput<T>>> {
        match &mut self.state {
            Some(state) => {
                if !x.is_finite() {
                    return Err(Error::NonFiniteSample {
                        index: state.n + 1,
                        value: x.as_f64(),
                    });
                }
                state.advance(self.a.first_moment_network().p(), x);
            }
            None => {
                self.state = Some(initial_state(&self.rho1, &self.rho2, x, self.sigma0_sq)?);
            }
        }
        let (fa, fb) = self.frames().expect("state initialized above");
        Ok(self.annotator.push(fa.n, change_statistic(&fa, &fb)))
    }

    fn finish(&mut self) -> Vec<DetectorOutput<T>> {
        self.annotator.finish()
    }
}

/// Groups event rows into clusters separated by more than `gap` samples.
pub fn event_clusters<T>(rows: &[DetectorOutput<T>], gap: u64) -> Vec<Vec<u64>> {
    let mut clusters: Vec<Vec<u64>> = Vec::new();
    for r in rows.iter().filter(|r| r.event.is_some()) {
        match clusters.last_mut() {
            Some(c) if r.n - c[c.len() - 1] <= gap => c.push(r.n),
            _ => clusters.push(vec![r.n]),
        }
    }
    clusters
}
