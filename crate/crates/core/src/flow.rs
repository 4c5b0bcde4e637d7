//! Density-to-flow laws.
//!
//! Every law is strictly increasing on `[0, rho_max)`, vanishes at `0` and
//! drops discontinuously to `0` at `rho_max`. Internally laws are evaluated
//! through the gap `rho_max - rho`, which keeps full relative precision for
//! nearly saturated links.

use libm::{exp, expm1, log1p};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("density {rho} outside [0, {rho_max}]")]
    DensityOutOfRange { rho: f64, rho_max: f64 },
    #[error("invalid flow-function parameter: {0}")]
    InvalidParameter(&'static str),
}

/// A density-to-flow law `mu` on `[0, rho_max]`.
pub trait FlowLaw {
    fn rho_max(&self) -> f64;

    /// Left limit of the flow at `rho_max`.
    fn f_max(&self) -> f64;

    /// Flow at density `rho_max - gap`, continuously extended to `f_max`
    /// for `gap <= 0`. The saturation drop is not applied here.
    fn flow_at_gap(&self, gap: f64) -> f64;

    /// `d mu / d rho` at density `rho_max - gap`; zero for `gap <= 0`.
    fn slope_at_gap(&self, gap: f64) -> f64;

    /// Density in `[0, rho_max)` carrying `flow`, for `0 <= flow < f_max`.
    fn inverse(&self, flow: f64) -> Option<f64>;

    /// `mu(rho)`, exactly `0` at `rho_max`.
    fn eval(&self, rho: f64) -> Result<f64, FlowError> {
        let rho_max = self.rho_max();
        if !(0.0..=rho_max).contains(&rho) {
            return Err(FlowError::DensityOutOfRange { rho, rho_max });
        }
        if rho == rho_max {
            return Ok(0.0);
        }
        Ok(self.flow_at_gap(rho_max - rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowShape {
    /// `mu(rho) = f_max * rho / rho_max`.
    Linear,
    /// `mu(rho) = f_max * (1 - exp(-alpha * rho / (rho_max - rho)))`.
    RationalExponential { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowFunction {
    shape: FlowShape,
    rho_max: f64,
    f_max: f64,
}

impl FlowFunction {
    pub fn new(shape: FlowShape, f_max: f64, rho_max: f64) -> Result<Self, FlowError> {
        if !(rho_max > 0.0 && rho_max.is_finite()) {
            return Err(FlowError::InvalidParameter("rho_max must be positive"));
        }
        if !(f_max > 0.0 && f_max.is_finite()) {
            return Err(FlowError::InvalidParameter("f_max must be positive"));
        }
        if let FlowShape::RationalExponential { alpha } = shape {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(FlowError::InvalidParameter("alpha must be positive"));
            }
        }
        Ok(Self {
            shape,
            rho_max,
            f_max,
        })
    }

    pub fn linear(f_max: f64, rho_max: f64) -> Result<Self, FlowError> {
        Self::new(FlowShape::Linear, f_max, rho_max)
    }

    pub fn rational_exponential(f_max: f64, rho_max: f64, alpha: f64) -> Result<Self, FlowError> {
        Self::new(FlowShape::RationalExponential { alpha }, f_max, rho_max)
    }

    pub fn shape(&self) -> FlowShape {
        self.shape
    }
}

impl FlowLaw for FlowFunction {
    fn rho_max(&self) -> f64 {
        self.rho_max
    }

    fn f_max(&self) -> f64 {
        self.f_max
    }

    fn flow_at_gap(&self, gap: f64) -> f64 {
        if gap <= 0.0 {
            return self.f_max;
        }
        let gap = gap.min(self.rho_max);
        match self.shape {
            FlowShape::Linear => self.f_max * (self.rho_max - gap) / self.rho_max,
            FlowShape::RationalExponential { alpha } => {
                let u = (self.rho_max - gap) / gap;
                -self.f_max * expm1(-alpha * u)
            }
        }
    }

    fn slope_at_gap(&self, gap: f64) -> f64 {
        if gap <= 0.0 {
            return 0.0;
        }
        match self.shape {
            FlowShape::Linear => self.f_max / self.rho_max,
            FlowShape::RationalExponential { alpha } => {
                let gap = gap.min(self.rho_max);
                let u = (self.rho_max - gap) / gap;
                self.f_max * alpha * exp(-alpha * u) * self.rho_max / (gap * gap)
            }
        }
    }

    fn inverse(&self, flow: f64) -> Option<f64> {
        if !(0.0..self.f_max).contains(&flow) {
            return None;
        }
        let rho = match self.shape {
            FlowShape::Linear => self.rho_max * flow / self.f_max,
            FlowShape::RationalExponential { alpha } => {
                let u = -log1p(-flow / self.f_max) / alpha;
                self.rho_max * u / (1.0 + u)
            }
        };
        (rho < self.rho_max).then_some(rho)
    }
}

/// How a perturbation reduces a base law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reduction {
    /// `mu~ = s * mu`, `0 < s <= 1`.
    Scale(f64),
    /// `mu~ = max(mu - c, 0)`, `c >= 0`.
    Clip(f64),
}

/// A reduced flow law `mu~ <= mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedFlow {
    pub base: FlowFunction,
    pub reduction: Reduction,
}

impl PerturbedFlow {
    pub fn unperturbed(base: FlowFunction) -> Self {
        Self {
            base,
            reduction: Reduction::Scale(1.0),
        }
    }

    /// `sup_rho (mu - mu~)`, in closed form.
    pub fn sup_gap(&self) -> f64 {
        match self.reduction {
            Reduction::Scale(s) => (1.0 - s) * self.base.f_max,
            Reduction::Clip(c) => c.min(self.base.f_max),
        }
    }
}

impl FlowLaw for PerturbedFlow {
    fn rho_max(&self) -> f64 {
        self.base.rho_max
    }

    fn f_max(&self) -> f64 {
        match self.reduction {
            Reduction::Scale(s) => s * self.base.f_max,
            Reduction::Clip(c) => (self.base.f_max - c).max(0.0),
        }
    }

    fn flow_at_gap(&self, gap: f64) -> f64 {
        let mu = self.base.flow_at_gap(gap);
        match self.reduction {
            Reduction::Scale(s) => s * mu,
            Reduction::Clip(c) => (mu - c).max(0.0),
        }
    }

    fn slope_at_gap(&self, gap: f64) -> f64 {
        match self.reduction {
            Reduction::Scale(s) => s * self.base.slope_at_gap(gap),
            Reduction::Clip(c) => {
                if self.base.flow_at_gap(gap) > c {
                    self.base.slope_at_gap(gap)
                } else {
                    0.0
                }
            }
        }
    }

    fn inverse(&self, flow: f64) -> Option<f64> {
        if !(0.0..self.f_max()).contains(&flow) {
            return None;
        }
        match self.reduction {
            Reduction::Scale(s) => self.base.inverse(flow / s),
            Reduction::Clip(_) if flow == 0.0 => Some(0.0),
            Reduction::Clip(c) => self.base.inverse(flow + c),
        }
    }
}
