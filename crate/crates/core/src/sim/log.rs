use std::io::{Read, Write};
use std::path::Path;

use crate::control::{CycleStatus, Mode, Vec3};
use crate::error::{Error, Result};
use crate::estimation::io::sci;

/// One control cycle. Energies are cumulative from the start of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub pos: Vec3,
    pub vel: Vec3,
    pub x_tilde: Vec3,
    /// Model force `Λẍ̃ + Dẋ̃ + Kx̃` with the applied gains.
    pub f_model: Vec3,
    /// True upward tissue force.
    pub f_tissue: f64,
    pub f_desired: f64,
    pub f_ceiling: f64,
    pub k: Vec3,
    pub d: Vec3,
    /// Tank energy at cycle entry.
    pub tank_energy: f64,
    pub tank_power: f64,
    pub status: CycleStatus,
    pub qp_iterations: usize,
    /// True penetration and its rate.
    pub eps: f64,
    pub eps_rate: f64,
    pub contact: bool,
    pub lift: f64,
    pub kappa_map: f64,
    pub kappa_std: f64,
    pub e_kinetic: f64,
    pub e_spring: f64,
    pub w_damper: f64,
    pub w_tissue: f64,
    pub w_stiffness: f64,
    pub w_frame: f64,
}

pub const SCANLOG_HEADER: [&str; 38] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "xt_x", "xt_y", "xt_z", "fm_x", "fm_y", "fm_z", "f_tissue", "f_desired",
    "f_ceiling", "kx", "ky", "kz", "dx", "dy", "dz", "tank_energy", "tank_power", "qp_status", "qp_iterations", "eps",
    "eps_rate", "contact", "lift", "kappa_map", "kappa_std", "e_kinetic", "e_spring", "w_damper", "w_tissue",
    "w_stiffness", "w_frame",
];

const NCOLS: usize = SCANLOG_HEADER.len();

fn header() -> &'static [&'static str] {
    &SCANLOG_HEADER
}

/// Per-cycle record of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanLog {
    pub mode: Mode,
    /// Control period, s.
    pub dt: f64,
    pub rows: Vec<LogRow>,
}

impl LogRow {
    fn fields(&self) -> Vec<String> {
        let mut f: Vec<String> = Vec::with_capacity(NCOLS);
        f.push(sci(self.t));
        for v in [self.pos, self.vel, self.x_tilde, self.f_model] {
            f.extend(v.iter().map(|&x| sci(x)));
        }
        f.extend([self.f_tissue, self.f_desired, self.f_ceiling].map(sci));
        for v in [self.k, self.d] {
            f.extend(v.iter().map(|&x| sci(x)));
        }
        f.extend([self.tank_energy, self.tank_power].map(sci));
        f.push(self.status.as_str().to_string());
        f.push(self.qp_iterations.to_string());
        f.extend([self.eps, self.eps_rate].map(sci));
        f.push(u8::from(self.contact).to_string());
        f.extend(
            [
                self.lift,
                self.kappa_map,
                self.kappa_std,
                self.e_kinetic,
                self.e_spring,
                self.w_damper,
                self.w_tissue,
                self.w_stiffness,
                self.w_frame,
            ]
            .map(sci),
        );
        f
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self> {
        let line = rec.position().map_or(0, |p| p.line());
        let err = |i: usize| Error::format("scan log", format!("line {line}: bad `{}`", header()[i]));
        let num = |i: usize| -> Result<f64> { rec.get(i).unwrap_or("").parse::<f64>().map_err(|_| err(i)) };
        let v3 = |i: usize| -> Result<Vec3> { Ok([num(i)?, num(i + 1)?, num(i + 2)?]) };
        Ok(Self {
            t: num(0)?,
            pos: v3(1)?,
            vel: v3(4)?,
            x_tilde: v3(7)?,
            f_model: v3(10)?,
            f_tissue: num(13)?,
            f_desired: num(14)?,
            f_ceiling: num(15)?,
            k: v3(16)?,
            d: v3(19)?,
            tank_energy: num(22)?,
            tank_power: num(23)?,
            status: CycleStatus::parse(rec.get(24).unwrap_or(""))?,
            qp_iterations: rec.get(25).unwrap_or("").parse().map_err(|_| err(25))?,
            eps: num(26)?,
            eps_rate: num(27)?,
            contact: match rec.get(28) {
                Some("1") => true,
                Some("0") => false,
                _ => return Err(err(28)),
            },
            lift: num(29)?,
            kappa_map: num(30)?,
            kappa_std: num(31)?,
            e_kinetic: num(32)?,
            e_spring: num(33)?,
            w_damper: num(34)?,
            w_tissue: num(35)?,
            w_stiffness: num(36)?,
            w_frame: num(37)?,
        })
    }

    /// Total rendered storage.
    pub fn stored(&self) -> f64 {
        self.e_kinetic + self.e_spring
    }
}

impl ScanLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Energy balance residual between rows `i` and `j`, J.
    pub fn energy_residual(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.rows[i], &self.rows[j]);
        (b.stored() - a.stored()) + (b.w_damper - a.w_damper)
            - (b.w_tissue - a.w_tissue)
            - (b.w_stiffness - a.w_stiffness)
            - (b.w_frame - a.w_frame)
    }

    /// Writes `# mode,…` and `# dt,…` comment lines, the header and rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut out = String::with_capacity(self.rows.len() * 600 + 512);
        out.push_str(&format!("# mode,{}\n# dt,{}\n", self.mode, sci(self.dt)));
        out.push_str(&header().join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.fields().join(","));
            out.push('\n');
        }
        w.write_all(out.as_bytes()).map_err(|e| Error::io("<scan log writer>", e))
    }

    pub fn read_csv(mut r: impl Read) -> Result<Self> {
        const WHAT: &str = "scan log";
        let mut text = String::new();
        r.read_to_string(&mut text).map_err(|e| Error::io("<scan log reader>", e))?;
        let mut lines = text.splitn(3, '\n');
        let meta = |line: Option<&str>, key: &str| -> Result<String> {
            line.and_then(|l| l.strip_prefix(&format!("# {key},")))
                .map(|s| s.trim().to_string())
                .ok_or_else(|| Error::format(WHAT, format!("missing `# {key}` line")))
        };
        let mode = Mode::parse(&meta(lines.next(), "mode")?)?;
        let dt: f64 = meta(lines.next(), "dt")?
            .parse()
            .map_err(|_| Error::format(WHAT, "bad dt"))?;
        let body = lines.next().unwrap_or("");
        let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let h = rdr.headers().map_err(|e| Error::format(WHAT, e.to_string()))?;
        if h.iter().ne(header().iter().copied()) {
            return Err(Error::format(WHAT, "unexpected header"));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::format(WHAT, e.to_string()))?;
            rows.push(LogRow::parse(&rec)?);
        }
        Ok(Self { mode, dt, rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}
