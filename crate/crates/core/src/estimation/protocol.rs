use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hc_force, ContactState};
use crate::phantom::Phantom;

/// One force-sensor sample of a vertical palpation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z_ee: f64,
    pub zd_ee: f64,
    pub zdd_ee: f64,
    pub f_sensor: f64,
}

/// Sinusoidal vertical palpation around a mean indentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PalpationProtocol {
    /// m
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    /// s
    pub duration: f64,
    /// Hz
    pub sample_rate: f64,
    /// Mean penetration, m. Must exceed the amplitude so contact is never lost.
    pub contact_bias: f64,
    /// Standard deviation of additive force noise, N.
    pub noise_sigma: f64,
}

impl Default for PalpationProtocol {
    fn default() -> Self {
        Self {
            amplitude: 0.005,
            frequency: 1.0,
            duration: 5.0,
            sample_rate: 500.0,
            contact_bias: 0.008,
            noise_sigma: 0.0,
        }
    }
}

impl PalpationProtocol {
    pub fn sample_count(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::invalid("amplitude", "must be >= 0"));
        }
        if !positive(self.frequency) {
            return Err(Error::invalid("frequency", "must be > 0"));
        }
        if !positive(self.duration) || !positive(self.sample_rate) {
            return Err(Error::invalid("duration", "duration and sample_rate must be > 0"));
        }
        if self.sample_count() < 10 {
            return Err(Error::invalid("duration", "duration * sample_rate must give >= 10 samples"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be >= 0"));
        }
        if !(self.contact_bias > self.amplitude) {
            return Err(Error::Precondition(format!(
                "contact_bias {} must exceed amplitude {} to keep the probe in contact",
                self.contact_bias, self.amplitude
            )));
        }
        Ok(())
    }
}

pub(crate) fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates a palpation at `(x, y)`. Kinematics are analytic; the sensor
/// sees the tissue force minus the indenter's inertial load plus noise.
pub fn generate_palpation(
    ph: &Phantom,
    x: f64,
    y: f64,
    proto: &PalpationProtocol,
    seed: u64,
) -> Result<Vec<ProbeSample>> {
    generate_palpation_stream(ph, x, y, proto, seed, 0)
}

pub(crate) fn generate_palpation_stream(
    ph: &Phantom,
    x: f64,
    y: f64,
    proto: &PalpationProtocol,
    seed: u64,
    stream: u64,
) -> Result<Vec<ProbeSample>> {
    proto.validate()?;
    let truth = ph.query(x, y)?;
    let params = ph.params_at(x, y);
    let m_i = ph.indenter_mass();
    let omega = 2.0 * std::f64::consts::PI * proto.frequency;
    let mut rng = noise_rng(seed, stream);
    let noise = Normal::new(0.0, proto.noise_sigma).expect("sigma validated");

    let samples = (0..proto.sample_count())
        .map(|k| {
            let t = k as f64 / proto.sample_rate;
            let (s, c) = (omega * t).sin_cos();
            let z = truth.surface - proto.contact_bias + proto.amplitude * c;
            let zd = -proto.amplitude * omega * s;
            let zdd = -proto.amplitude * omega * omega * c;
            let contact = ContactState::new(truth.surface - z, -zd);
            let f = hc_force(&params, contact) - m_i * zdd + noise.sample(&mut rng);
            ProbeSample {
                t,
                x,
                y,
                z_ee: z,
                zd_ee: zd,
                zdd_ee: zdd,
                f_sensor: f,
            }
        })
        .collect();
    Ok(samples)
}

/// Constant-velocity load, hold and unload test used to compare contact
/// models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadUnloadProtocol {
    pub load_speed: f64,
    pub load_time: f64,
    pub hold_time: f64,
    pub unload_speed: f64,
    pub unload_time: f64,
    pub sample_rate: f64,
    pub noise_sigma: f64,
}

impl Default for LoadUnloadProtocol {
    fn default() -> Self {
        Self {
            load_speed: 0.03,
            load_time: 0.75,
            hold_time: 10.0,
            unload_speed: 0.015,
            unload_time: 1.5,
            sample_rate: 500.0,
            noise_sigma: 0.0,
        }
    }
}

impl LoadUnloadProtocol {
    pub fn duration(&self) -> f64 {
        self.load_time + self.hold_time + self.unload_time
    }

    /// Depth below the surface and the end-effector velocity at `t`.
    fn kinematics(&self, t: f64) -> (f64, f64) {
        let depth_max = self.load_speed * self.load_time;
        if t < self.load_time {
            (self.load_speed * t, -self.load_speed)
        } else if t < self.load_time + self.hold_time {
            (depth_max, 0.0)
        } else {
            let tu = t - self.load_time - self.hold_time;
            (depth_max - self.unload_speed * tu, self.unload_speed)
        }
    }
}

/// Position-controlled load/unload record at `(x, y)`, starting at the
/// contact onset. Velocities are piecewise constant, so the recorded
/// acceleration is zero within each phase.
pub fn generate_load_unload(
    ph: &Phantom,
    x: f64,
    y: f64,
    proto: &LoadUnloadProtocol,
    seed: u64,
) -> Result<Vec<ProbeSample>> {
    if !(proto.sample_rate > 0.0 && proto.load_speed > 0.0 && proto.unload_speed > 0.0) {
        return Err(Error::invalid("load_unload", "speeds and sample rate must be > 0"));
    }
    let truth = ph.query(x, y)?;
    let params = ph.params_at(x, y);
    let mut rng = noise_rng(seed, 0);
    let noise = Normal::new(0.0, proto.noise_sigma)
        .map_err(|_| Error::invalid("noise_sigma", "must be >= 0"))?;
    let n = (proto.duration() * proto.sample_rate).round() as usize;
    Ok((0..=n)
        .map(|k| {
            let t = k as f64 / proto.sample_rate;
            let (depth, zd) = proto.kinematics(t);
            let z = truth.surface - depth;
            let f = hc_force(&params, ContactState::new(depth, -zd)) + noise.sample(&mut rng);
            ProbeSample {
                t,
                x,
                y,
                z_ee: z,
                zd_ee: zd,
                zdd_ee: 0.0,
                f_sensor: f,
            }
        })
        .collect())
}

/// Descends from `clearance` above the surface at `speed` and returns the
/// sampled approach. Stops once `depth` of penetration is reached.
pub(crate) fn generate_approach(
    ph: &Phantom,
    x: f64,
    y: f64,
    clearance: f64,
    speed: f64,
    depth: f64,
    sample_rate: f64,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ProbeSample>> {
    let truth = ph.query(x, y)?;
    let params = ph.params_at(x, y);
    let noise = Normal::new(0.0, noise_sigma).map_err(|_| Error::invalid("noise_sigma", "must be >= 0"))?;
    let n = ((clearance + depth) / speed * sample_rate).ceil() as usize;
    Ok((0..=n)
        .map(|k| {
            let t = k as f64 / sample_rate;
            let z = truth.surface + clearance - speed * t;
            let f = hc_force(&params, ContactState::new(truth.surface - z, speed))
                + noise.sample(rng);
            ProbeSample {
                t,
                x,
                y,
                z_ee: z,
                zd_ee: -speed,
                zdd_ee: 0.0,
                f_sensor: f,
            }
        })
        .collect())
}
