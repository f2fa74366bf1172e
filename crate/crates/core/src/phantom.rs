//! Analytic ground-truth body used as the simulated patient.
//!
//! The surface is a curved base with Gaussian rib ridges on top; elasticity
//! and viscosity are a baseline plus the same ridges. Everything has a closed
//! form so estimators can be checked against exact values anywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_beta, ViscoelasticParams};

pub const PHANTOM_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Base surface `h0 + s·(p − c) − a_x (x − c_x)² − a_y (y − c_y)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseSurface {
    pub height: f64,
    #[serde(default)]
    pub slope: [f64; 2],
    #[serde(default)]
    pub curvature: [f64; 2],
    pub center: [f64; 2],
}

/// A straight ridge through `center`, running along `orientation` (radians
/// from the x axis), with a Gaussian cross-section of standard deviation
/// `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rib {
    pub center: [f64; 2],
    pub orientation: f64,
    pub width: f64,
    pub kappa_amplitude: f64,
    #[serde(default)]
    pub lambda_amplitude: f64,
    pub height_amplitude: f64,
}

impl Rib {
    fn normal(&self) -> (f64, f64) {
        (-self.orientation.sin(), self.orientation.cos())
    }

    /// Signed distance from the ridge line.
    fn distance(&self, x: f64, y: f64) -> f64 {
        let (nx, ny) = self.normal();
        (x - self.center[0]) * nx + (y - self.center[1]) * ny
    }

    fn profile(&self, x: f64, y: f64) -> f64 {
        let u = self.distance(x, y) / self.width;
        (-0.5 * u * u).exp()
    }

    fn profile_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let d = self.distance(x, y);
        let g = self.profile(x, y);
        let (nx, ny) = self.normal();
        let s = -d / (self.width * self.width) * g;
        (s * nx, s * ny)
    }
}

/// On-disk phantom description (`format: 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub format: u32,
    pub bounds: Bounds,
    pub surface: BaseSurface,
    pub kappa0: f64,
    pub lambda0: f64,
    pub beta: f64,
    pub indenter_mass: f64,
    #[serde(default)]
    pub ribs: Vec<Rib>,
    /// A point known to be free of rib influence, used as the soft-tissue
    /// reference in reports.
    #[serde(default)]
    pub soft_reference: Option<[f64; 2]>,
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format != PHANTOM_FORMAT {
            return Err(Error::invalid(
                "format",
                format!("unsupported version {} (expected {PHANTOM_FORMAT})", self.format),
            ));
        }
        let b = &self.bounds;
        let finite = [b.x_min, b.x_max, b.y_min, b.y_max].iter().all(|v| v.is_finite());
        if !finite || b.x_max <= b.x_min || b.y_max <= b.y_min {
            return Err(Error::invalid("bounds", "must be finite with min < max on both axes"));
        }
        if !(self.kappa0.is_finite() && self.kappa0 > 0.0) {
            return Err(Error::invalid("kappa0", "must be > 0"));
        }
        if !(self.lambda0.is_finite() && self.lambda0 > 0.0) {
            return Err(Error::invalid("lambda0", "must be > 0"));
        }
        validate_beta(self.beta)?;
        if !(self.indenter_mass.is_finite() && self.indenter_mass >= 0.0) {
            return Err(Error::invalid("indenter_mass", "must be >= 0"));
        }
        for rib in &self.ribs {
            if !(rib.width.is_finite() && rib.width > 0.0) {
                return Err(Error::invalid("ribs.width", "must be > 0"));
            }
            // Negative amplitudes are allowed (softer bands) but the fields
            // must stay strictly positive.
            if self.kappa0 + rib.kappa_amplitude.min(0.0) <= 0.0 {
                return Err(Error::invalid("ribs.kappa_amplitude", "would make kappa non-positive"));
            }
            if self.lambda0 + rib.lambda_amplitude.min(0.0) <= 0.0 {
                return Err(Error::invalid("ribs.lambda_amplitude", "would make lambda non-positive"));
            }
        }
        if let Some([x, y]) = self.soft_reference {
            if !b.contains(x, y) {
                return Err(Error::invalid("soft_reference", "outside bounds"));
            }
        }
        Ok(())
    }
}

impl Default for PhantomConfig {
    /// A 33 cm × 33 cm chest patch: four transverse ribs along x (the last one
    /// weaker, as if under muscle), gentle curvature across y.
    fn default() -> Self {
        let rib = |x: f64, kappa: f64, height: f64| Rib {
            center: [x, 0.165],
            orientation: std::f64::consts::FRAC_PI_2,
            width: 0.01,
            kappa_amplitude: kappa,
            lambda_amplitude: 1500.0,
            height_amplitude: height,
        };
        Self {
            format: PHANTOM_FORMAT,
            bounds: Bounds {
                x_min: 0.0,
                x_max: 0.33,
                y_min: 0.0,
                y_max: 0.33,
            },
            surface: BaseSurface {
                height: 0.1,
                slope: [0.0, 0.0],
                curvature: [0.0, 0.8],
                center: [0.165, 0.165],
            },
            kappa0: 2000.0,
            lambda0: 3000.0,
            beta: 1.35,
            indenter_mass: 0.2,
            ribs: vec![
                rib(0.09, 13_000.0, 0.006),
                rib(0.15, 13_000.0, 0.006),
                rib(0.21, 13_000.0, 0.006),
                rib(0.27, 6_000.0, 0.004),
            ],
            soft_reference: Some([0.03, 0.165]),
        }
    }
}

/// Ground truth at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSample {
    pub surface: f64,
    pub kappa: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    config: PhantomConfig,
}

impl Phantom {
    pub fn new(config: PhantomConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: PhantomConfig = serde_json::from_str(text)?;
        Self::new(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("phantom config serializes")
    }

    pub fn config(&self) -> &PhantomConfig {
        &self.config
    }

    pub fn bounds(&self) -> Bounds {
        self.config.bounds
    }

    pub fn beta(&self) -> f64 {
        self.config.beta
    }

    pub fn indenter_mass(&self) -> f64 {
        self.config.indenter_mass
    }

    pub fn ribs(&self) -> &[Rib] {
        &self.config.ribs
    }

    pub fn query(&self, x: f64, y: f64) -> Result<PhantomSample> {
        if !self.config.bounds.contains(x, y) {
            return Err(Error::OutOfWorkspace { x, y });
        }
        Ok(self.sample(x, y))
    }

    /// Like [`Phantom::query`] but without the workspace check. The analytic
    /// fields extend smoothly past the bounds, which the plant relies on when
    /// a transient carries the probe slightly outside.
    pub fn sample(&self, x: f64, y: f64) -> PhantomSample {
        let c = &self.config;
        let mut out = PhantomSample {
            surface: self.base_surface(x, y),
            kappa: c.kappa0,
            lambda: c.lambda0,
        };
        for rib in &c.ribs {
            let g = rib.profile(x, y);
            out.surface += rib.height_amplitude * g;
            out.kappa += rib.kappa_amplitude * g;
            out.lambda += rib.lambda_amplitude * g;
        }
        out
    }

    pub fn params_at(&self, x: f64, y: f64) -> ViscoelasticParams {
        let s = self.sample(x, y);
        ViscoelasticParams {
            kappa: s.kappa,
            lambda: s.lambda,
            beta: self.config.beta,
        }
    }

    pub fn surface_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let s = &self.config.surface;
        let (dx, dy) = (x - s.center[0], y - s.center[1]);
        let mut gx = s.slope[0] - 2.0 * s.curvature[0] * dx;
        let mut gy = s.slope[1] - 2.0 * s.curvature[1] * dy;
        for rib in &self.config.ribs {
            let (rx, ry) = rib.profile_gradient(x, y);
            gx += rib.height_amplitude * rx;
            gy += rib.height_amplitude * ry;
        }
        (gx, gy)
    }

    fn base_surface(&self, x: f64, y: f64) -> f64 {
        let s = &self.config.surface;
        let (dx, dy) = (x - s.center[0], y - s.center[1]);
        s.height + s.slope[0] * dx + s.slope[1] * dy
            - s.curvature[0] * dx * dx
            - s.curvature[1] * dy * dy
    }
}

impl Default for Phantom {
    fn default() -> Self {
        Self::new(PhantomConfig::default()).expect("default phantom is valid")
    }
}
