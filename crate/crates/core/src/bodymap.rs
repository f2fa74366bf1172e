use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::PointEstimate;
use crate::gpr::{gpr_fit, GprModel, GprSettings, GprSpec, Prediction};
use crate::phantom::Bounds;
use crate::surface::{fit_grid, linspace, HeightGrid, DEFAULT_SMOOTHNESS};

pub const BODYMAP_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSettings {
    /// Target node spacing, m. The actual spacing divides the extent evenly.
    pub spacing: f64,
    pub smoothness: f64,
    /// Grid extent; the hull of the survey nodes when `None`.
    pub bounds: Option<Bounds>,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            spacing: 0.005,
            smoothness: DEFAULT_SMOOTHNESS,
            bounds: None,
        }
    }
}

/// Surface geometry plus elasticity and viscosity maps.
#[derive(Debug, Clone)]
pub struct BodyMap {
    pub grid: HeightGrid,
    pub kappa: GprModel,
    pub lambda: GprModel,
    pub beta: f64,
}

/// Everything the controller needs at one point of the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSample {
    pub surface: f64,
    pub gradient: (f64, f64),
    pub kappa: f64,
    pub lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct BodyMapFile {
    format: u32,
    beta: f64,
    grid_path: PathBuf,
    kappa: GprSpec,
    lambda: GprSpec,
}

fn axis(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = (((hi - lo) / spacing).round() as usize).max(1) + 1;
    linspace(lo, hi, n)
}

/// Fits the height grid and both GPRs from the usable survey nodes. Nodes
/// whose viscosity was not identifiable still contribute geometry and
/// elasticity.
pub fn build_body_map(
    survey: &[PointEstimate],
    beta: f64,
    grid: &GridSettings,
    gpr: &GprSettings,
) -> Result<BodyMap> {
    if survey.is_empty() {
        return Err(Error::Precondition("survey is empty".into()));
    }
    let usable: Vec<&PointEstimate> = survey
        .iter()
        .filter(|p| p.flag.usable() && p.fit.is_some() && p.surface_z.is_finite())
        .collect();
    if usable.is_empty() {
        return Err(Error::Precondition("every survey node is flagged".into()));
    }
    if !(grid.spacing.is_finite() && grid.spacing > 0.0) {
        return Err(Error::invalid("spacing", "grid spacing must be > 0"));
    }

    let b = grid.bounds.unwrap_or_else(|| {
        let fold = |f: fn(&PointEstimate) -> f64| {
            usable.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(f(p)), hi.max(f(p)))
            })
        };
        let (x_min, x_max) = fold(|p| p.x);
        let (y_min, y_max) = fold(|p| p.y);
        // A single row or column of nodes still needs a two-node axis.
        let pad = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - grid.spacing, hi + grid.spacing) };
        let (x_min, x_max) = pad(x_min, x_max);
        let (y_min, y_max) = pad(y_min, y_max);
        Bounds { x_min, x_max, y_min, y_max }
    });
    let points: Vec<[f64; 3]> = usable.iter().map(|p| [p.x, p.y, p.surface_z]).collect();
    let height = fit_grid(
        &points,
        &axis(b.x_min, b.x_max, grid.spacing),
        &axis(b.y_min, b.y_max, grid.spacing),
        grid.smoothness,
    )?;

    let xy: Vec<[f64; 2]> = usable.iter().map(|p| [p.x, p.y]).collect();
    let kappa: Vec<f64> = usable.iter().map(|p| p.fit.unwrap().params.kappa).collect();
    let kappa = gpr_fit(&xy, &kappa, gpr)?;

    let (lxy, lam): (Vec<[f64; 2]>, Vec<f64>) = usable
        .iter()
        .filter(|p| p.fit.unwrap().lambda_identifiable)
        .map(|p| ([p.x, p.y], p.fit.unwrap().params.lambda))
        .unzip();
    if lam.is_empty() {
        return Err(Error::Precondition("no survey node has an identifiable viscosity".into()));
    }
    let lambda = gpr_fit(&lxy, &lam, gpr)?;

    Ok(BodyMap {
        grid: height,
        kappa,
        lambda,
        beta,
    })
}

impl BodyMap {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.grid.contains(x, y)
    }

    /// Surface, gradient and posterior means. Fails outside the height grid.
    pub fn sample(&self, x: f64, y: f64) -> Result<MapSample> {
        Ok(MapSample {
            surface: self.grid.height(x, y)?,
            gradient: self.grid.gradient(x, y)?,
            kappa: self.kappa.predict_mean(x, y).max(0.0),
            lambda: self.lambda.predict_mean(x, y).max(0.0),
        })
    }

    pub fn kappa_at(&self, x: f64, y: f64) -> Prediction {
        self.kappa.predict(x, y)
    }

    pub fn lambda_at(&self, x: f64, y: f64) -> Prediction {
        self.lambda.predict(x, y)
    }

    /// Writes the grid CSV to `grid_path` and the map document to `path`.
    /// The grid path is stored relative to the document's directory when
    /// possible.
    pub fn save(&self, path: impl AsRef<Path>, grid_path: impl AsRef<Path>) -> Result<()> {
        let (path, grid_path) = (path.as_ref(), grid_path.as_ref());
        self.grid.save(grid_path)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let stored = grid_path
            .strip_prefix(dir)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| grid_path.to_path_buf());
        let doc = BodyMapFile {
            format: BODYMAP_FORMAT,
            beta: self.beta,
            grid_path: stored,
            kappa: self.kappa.spec(),
            lambda: self.lambda.spec(),
        };
        let text = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: BodyMapFile = serde_json::from_str(&text)?;
        if doc.format != BODYMAP_FORMAT {
            return Err(Error::invalid(
                "format",
                format!("unsupported body map format {}", doc.format),
            ));
        }
        let grid_path = if doc.grid_path.is_absolute() {
            doc.grid_path
        } else {
            path.parent().unwrap_or(Path::new("")).join(doc.grid_path)
        };
        Ok(Self {
            grid: HeightGrid::load(&grid_path)?,
            kappa: GprModel::from_spec(&doc.kappa)?,
            lambda: GprModel::from_spec(&doc.lambda)?,
            beta: doc.beta,
        })
    }
}
