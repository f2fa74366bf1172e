//! Linear least-squares identification of contact parameters at fixed β.
//!
//! Once β is fixed the sensor model is linear in the unknowns:
//! `F_sensor + m_I z̈ = κ·ε^β + λ·(−ż ε^β)` for Hunt-Crossley and
//! `F_sensor + m_I z̈ = k·ε + d·(−ż)` for Kelvin-Voigt, so each fit is a
//! two-column regression solved through column-scaled normal equations.

use serde::{Deserialize, Serialize};

use super::protocol::ProbeSample;
use crate::error::{Error, Result};
use crate::model::{validate_beta, ViscoelasticParams};

/// Above this the two regressors are treated as collinear.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactModel {
    HuntCrossley,
    KelvinVoigt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ContactModel,
    /// For Kelvin-Voigt fits `kappa` holds the spring constant, `lambda` the
    /// damper and `beta` is 1.
    pub params: ViscoelasticParams,
    /// `‖r‖₂ / √n`, N.
    pub residual: f64,
    pub n_samples: usize,
    /// Condition number of the column-scaled normal matrix.
    pub condition_estimate: f64,
    /// False when the rate regressor vanishes or is collinear with the
    /// elastic one; `lambda` is then reported as 0.
    pub lambda_identifiable: bool,
}

struct Row {
    target: f64,
    elastic: f64,
    viscous: f64,
}

fn rows(
    samples: &[ProbeSample],
    surface_z: f64,
    m_i: f64,
    regressors: impl Fn(f64, f64) -> (f64, f64),
) -> Vec<Row> {
    samples
        .iter()
        .filter_map(|s| {
            let eps = surface_z - s.z_ee;
            (eps > 0.0).then(|| {
                let (elastic, viscous) = regressors(eps, s.zd_ee);
                Row {
                    target: s.f_sensor + m_i * s.zdd_ee,
                    elastic,
                    viscous,
                }
            })
        })
        .collect()
}

fn solve(model: ContactModel, beta: f64, rows: &[Row]) -> Result<FitResult> {
    if rows.len() < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 samples in contact, got {}",
            rows.len()
        )));
    }
    let (mut aa, mut bb, mut ab, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        aa += r.elastic * r.elastic;
        bb += r.viscous * r.viscous;
        ab += r.elastic * r.viscous;
        ay += r.elastic * r.target;
        by += r.viscous * r.target;
    }
    let (sa, sb) = (aa.sqrt(), bb.sqrt());
    if sa == 0.0 {
        return Err(Error::Precondition("elastic regressor is identically zero".into()));
    }

    let rho = if sb > 0.0 { ab / (sa * sb) } else { 1.0 };
    let condition = if rho.abs() < 1.0 {
        (1.0 + rho.abs()) / (1.0 - rho.abs())
    } else {
        f64::INFINITY
    };

    let (kappa, lambda, identifiable) = if sb > 0.0 && condition < MAX_CONDITION {
        // Scaled system [[1, ρ], [ρ, 1]] · (sa κ, sb λ) = (a·y / sa, b·y / sb).
        let (ua, ub) = (ay / sa, by / sb);
        let det = 1.0 - rho * rho;
        let k = (ua - rho * ub) / det;
        let l = (ub - rho * ua) / det;
        (k / sa, l / sb, true)
    } else {
        (ay / aa, 0.0, false)
    };

    let sq: f64 = rows
        .iter()
        .map(|r| {
            let e = r.target - kappa * r.elastic - lambda * r.viscous;
            e * e
        })
        .sum();
    let n = rows.len();
    Ok(FitResult {
        model,
        params: ViscoelasticParams { kappa, lambda, beta },
        residual: (sq / n as f64).sqrt(),
        n_samples: n,
        condition_estimate: condition,
        lambda_identifiable: identifiable,
    })
}

/// Hunt-Crossley fit of `(κ, λ)` at fixed `beta`. Samples out of contact
/// (`ε ≤ 0` relative to `surface_z`) are ignored.
pub fn fit_hc(samples: &[ProbeSample], surface_z: f64, beta: f64, m_i: f64) -> Result<FitResult> {
    validate_beta(beta)?;
    let rows = rows(samples, surface_z, m_i, |eps, zd| {
        let eb = eps.powf(beta);
        (eb, -zd * eb)
    });
    solve(ContactModel::HuntCrossley, beta, &rows)
}

/// Kelvin-Voigt spring-damper fit.
pub fn fit_kv(samples: &[ProbeSample], surface_z: f64, m_i: f64) -> Result<FitResult> {
    let rows = rows(samples, surface_z, m_i, |eps, zd| (eps, -zd));
    solve(ContactModel::KelvinVoigt, 1.0, &rows)
}

/// One Hunt-Crossley fit per exponent.
pub fn beta_sweep(
    samples: &[ProbeSample],
    surface_z: f64,
    m_i: f64,
    betas: &[f64],
) -> Result<Vec<(f64, Result<FitResult>)>> {
    if betas.is_empty() {
        return Err(Error::invalid("betas", "sweep needs at least one exponent"));
    }
    for &b in betas {
        validate_beta(b)?;
    }
    Ok(betas
        .iter()
        .map(|&b| (b, fit_hc(samples, surface_z, b, m_i)))
        .collect())
}

/// Exponent with the smallest residual among the successful fits.
pub fn best_beta(sweep: &[(f64, Result<FitResult>)]) -> Option<(f64, FitResult)> {
    sweep
        .iter()
        .filter_map(|(b, r)| r.as_ref().ok().map(|f| (*b, *f)))
        .min_by(|a, b| a.1.residual.total_cmp(&b.1.residual))
}

/// Minimises the Hunt-Crossley residual over the surface height inside
/// `[lo, hi]` (golden-section search; κ and λ are eliminated linearly at each
/// trial height).
pub fn refine_surface(
    samples: &[ProbeSample],
    lo: f64,
    hi: f64,
    beta: f64,
    m_i: f64,
    tol: f64,
) -> Result<(f64, FitResult)> {
    let cost = |s: f64| fit_hc(samples, s, beta, m_i).map(|f| f.residual).unwrap_or(f64::INFINITY);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d);
        }
    }
    let s = 0.5 * (a + b);
    let fit = fit_hc(samples, s, beta, m_i)?;
    Ok((s, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::protocol::{
        generate_load_unload, generate_palpation, LoadUnloadProtocol, PalpationProtocol,
    };
    use crate::model::{hc_force, kv_force, ContactState};
    use crate::phantom::Phantom;
    use approx::assert_relative_eq;

    /// Forward model at fixed parameters, independent of the phantom.
    fn synth(
        kappa: f64,
        lambda: f64,
        beta: f64,
        m_i: f64,
        surface: f64,
        proto: &PalpationProtocol,
    ) -> Vec<ProbeSample> {
        let p = ViscoelasticParams::new(kappa, lambda, beta).unwrap();
        let w = 2.0 * std::f64::consts::PI * proto.frequency;
        (0..proto.sample_count())
            .map(|k| {
                let t = k as f64 / proto.sample_rate;
                let z = surface - proto.contact_bias + proto.amplitude * (w * t).cos();
                let zd = -proto.amplitude * w * (w * t).sin();
                let zdd = -proto.amplitude * w * w * (w * t).cos();
                let f = hc_force(&p, ContactState::new(surface - z, -zd)) - m_i * zdd;
                ProbeSample { t, x: 0.0, y: 0.0, z_ee: z, zd_ee: zd, zdd_ee: zdd, f_sensor: f }
            })
            .collect()
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let proto = PalpationProtocol::default();
        let data = synth(1200.0, 300.0, 1.35, 0.2, 0.1, &proto);
        let fit = fit_hc(&data, 0.1, 1.35, 0.2).unwrap();
        assert!(fit.lambda_identifiable);
        assert!(fit.condition_estimate < 1e8);
        assert_relative_eq!(fit.params.kappa, 1200.0, max_relative = 1e-6);
        assert_relative_eq!(fit.params.lambda, 300.0, max_relative = 1e-6);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn zero_forces_give_zero_parameters() {
        let proto = PalpationProtocol::default();
        let mut data = synth(1200.0, 300.0, 1.35, 0.0, 0.1, &proto);
        data.iter_mut().for_each(|s| s.f_sensor = 0.0);
        let fit = fit_hc(&data, 0.1, 1.35, 0.0).unwrap();
        assert_eq!(fit.params.kappa, 0.0);
        assert_eq!(fit.params.lambda, 0.0);
    }

    #[test]
    fn static_data_flags_viscosity() {
        let proto = PalpationProtocol {
            amplitude: 0.0,
            ..Default::default()
        };
        let data = synth(1500.0, 200.0, 1.35, 0.2, 0.1, &proto);
        let hc = fit_hc(&data, 0.1, 1.35, 0.2).unwrap();
        assert!(!hc.lambda_identifiable);
        assert_relative_eq!(hc.params.kappa, 1500.0, max_relative = 1e-9);
        let kv = fit_kv(&data, 0.1, 0.2).unwrap();
        assert!(!kv.lambda_identifiable);
    }

    #[test]
    fn kv_recovers_kv_data() {
        let proto = PalpationProtocol::default();
        let w = 2.0 * std::f64::consts::PI;
        let data: Vec<ProbeSample> = (0..proto.sample_count())
            .map(|k| {
                let t = k as f64 / proto.sample_rate;
                let z = 0.1 - 0.008 + 0.005 * (w * t).cos();
                let zd = -0.005 * w * (w * t).sin();
                let f = kv_force(450.0, 12.0, ContactState::new(0.1 - z, -zd));
                ProbeSample { t, x: 0.0, y: 0.0, z_ee: z, zd_ee: zd, zdd_ee: 0.0, f_sensor: f }
            })
            .collect();
        let fit = fit_kv(&data, 0.1, 0.0).unwrap();
        assert_relative_eq!(fit.params.kappa, 450.0, max_relative = 1e-9);
        assert_relative_eq!(fit.params.lambda, 12.0, max_relative = 1e-9);
    }

    #[test]
    fn too_few_contact_samples() {
        let proto = PalpationProtocol::default();
        let data = synth(1200.0, 300.0, 1.35, 0.2, 0.1, &proto);
        // Surface far below the probe: nothing is in contact.
        assert!(matches!(fit_hc(&data, 0.0, 1.35, 0.2), Err(Error::Precondition(_))));
    }

    #[test]
    fn hc_beats_kv_on_load_unload() {
        let ph = Phantom::default();
        let rec = generate_load_unload(&ph, 0.03, 0.165, &LoadUnloadProtocol::default(), 0).unwrap();
        let s = ph.query(0.03, 0.165).unwrap().surface;
        let hc = fit_hc(&rec, s, 1.35, 0.0).unwrap();
        let kv = fit_kv(&rec, s, 0.0).unwrap();
        assert!(hc.residual < kv.residual);
    }

    #[test]
    fn sweep_picks_generating_beta() {
        let proto = PalpationProtocol {
            noise_sigma: 0.05,
            ..Default::default()
        };
        let ph = Phantom::default();
        let data = generate_palpation(&ph, 0.03, 0.165, &proto, 4).unwrap();
        let s = ph.query(0.03, 0.165).unwrap().surface;
        let sweep = beta_sweep(&data, s, 0.2, &[1.1, 1.35, 1.5]).unwrap();
        assert_eq!(best_beta(&sweep).unwrap().0, 1.35);
        for (_, r) in &sweep {
            let f = r.as_ref().unwrap();
            assert!(f.residual.is_finite() && f.residual >= 0.0);
        }
        let single = beta_sweep(&data, s, 0.2, &[1.35]).unwrap();
        assert_eq!(single[0].1.as_ref().unwrap(), &fit_hc(&data, s, 1.35, 0.2).unwrap());
        assert!(beta_sweep(&data, s, 0.2, &[]).is_err());
        assert!(beta_sweep(&data, s, 0.2, &[0.5]).is_err());
    }

    #[test]
    fn refine_surface_finds_true_height() {
        let proto = PalpationProtocol::default();
        let data = synth(1800.0, 2500.0, 1.35, 0.2, 0.1, &proto);
        let (s, fit) = refine_surface(&data, 0.0985, 0.1025, 1.35, 0.2, 1e-9).unwrap();
        assert!((s - 0.1).abs() < 1e-7, "{s}");
        assert_relative_eq!(fit.params.kappa, 1800.0, max_relative = 1e-4);
    }
}
