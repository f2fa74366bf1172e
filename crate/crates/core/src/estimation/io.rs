//! CSV import/export for palpation records and survey results.

use std::io::{Read, Write};
use std::path::Path;

use super::fit::{ContactModel, FitResult};
use super::protocol::ProbeSample;
use super::survey::{NodeFlag, PointEstimate};
use crate::error::{Error, Result};
use crate::model::ViscoelasticParams;

pub const PALPATION_HEADER: [&str; 7] = ["t", "x", "y", "z_ee", "zd_ee", "zdd_ee", "f_sensor"];
pub const SURVEY_HEADER: [&str; 7] = ["x", "y", "s", "kappa", "lambda", "residual", "flag"];

pub(crate) fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

fn csv_err(what: &'static str) -> impl Fn(csv::Error) -> Error {
    move |e| Error::format(what, e.to_string())
}

fn check_header(
    rdr: &mut csv::Reader<impl Read>,
    expected: &[&str],
    what: &'static str,
) -> Result<()> {
    let header = rdr.headers().map_err(csv_err(what))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::format(
            what,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    Ok(())
}

fn num(rec: &csv::StringRecord, i: usize, what: &'static str) -> Result<f64> {
    let field = rec.get(i).unwrap_or("");
    field.trim().parse().map_err(|_| {
        let line = rec.position().map_or(0, |p| p.line());
        Error::format(what, format!("line {line}: `{field}` is not a number"))
    })
}

pub fn write_palpation(mut w: impl Write, samples: &[ProbeSample]) -> Result<()> {
    let mut out = String::with_capacity(samples.len() * 112 + 48);
    out.push_str(&PALPATION_HEADER.join(","));
    out.push('\n');
    for s in samples {
        let row = [s.t, s.x, s.y, s.z_ee, s.zd_ee, s.zdd_ee, s.f_sensor].map(sci);
        out.push_str(&row.join(","));
        out.push('\n');
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::io("<palpation writer>", e))
}

pub fn read_palpation(r: impl Read) -> Result<Vec<ProbeSample>> {
    const WHAT: &str = "palpation csv";
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &PALPATION_HEADER, WHAT)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(WHAT))?;
        let v = |i| num(&rec, i, WHAT);
        out.push(ProbeSample {
            t: v(0)?,
            x: v(1)?,
            y: v(2)?,
            z_ee: v(3)?,
            zd_ee: v(4)?,
            zdd_ee: v(5)?,
            f_sensor: v(6)?,
        });
    }
    if out.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::format(WHAT, "time column must be strictly increasing"));
    }
    Ok(out)
}

/// Failed nodes are written with empty numeric fields.
pub fn write_survey(mut w: impl Write, survey: &[PointEstimate]) -> Result<()> {
    let mut out = SURVEY_HEADER.join(",");
    out.push('\n');
    for p in survey {
        let s = if p.surface_z.is_finite() {
            sci(p.surface_z)
        } else {
            String::new()
        };
        let (k, l, r) = match &p.fit {
            Some(f) => (
                sci(f.params.kappa),
                sci(f.params.lambda),
                sci(f.residual),
            ),
            None => Default::default(),
        };
        out.push_str(&format!(
            "{},{},{s},{k},{l},{r},{}\n",
            sci(p.x),
            sci(p.y),
            p.flag.as_str()
        ));
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::io("<survey writer>", e))
}

/// Reads a survey written by [`write_survey`]. Only the columns of the file
/// are restored: sample counts and conditioning are not stored.
pub fn read_survey(r: impl Read, beta: f64) -> Result<Vec<PointEstimate>> {
    const WHAT: &str = "survey csv";
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &SURVEY_HEADER, WHAT)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(WHAT))?;
        let flag = NodeFlag::parse(rec.get(6).unwrap_or("").trim())
            .ok_or_else(|| Error::format(WHAT, format!("unknown flag in `{}`", rec.iter().collect::<Vec<_>>().join(","))))?;
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec.get(i).map_or(true, |f| f.trim().is_empty()) {
                Ok(None)
            } else {
                num(&rec, i, WHAT).map(Some)
            }
        };
        let fit = match (opt(3)?, opt(4)?, opt(5)?) {
            (Some(kappa), Some(lambda), Some(residual)) => Some(FitResult {
                model: ContactModel::HuntCrossley,
                params: ViscoelasticParams { kappa, lambda, beta },
                residual,
                n_samples: 0,
                condition_estimate: f64::NAN,
                lambda_identifiable: flag != NodeFlag::LambdaUnidentifiable,
            }),
            _ => None,
        };
        out.push(PointEstimate {
            x: num(&rec, 0, WHAT)?,
            y: num(&rec, 1, WHAT)?,
            surface_z: opt(2)?.unwrap_or(f64::NAN),
            fit,
            flag,
        });
    }
    Ok(out)
}

pub fn save_palpation(path: impl AsRef<Path>, samples: &[ProbeSample]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_palpation(std::io::BufWriter::new(f), samples)
}

pub fn load_palpation(path: impl AsRef<Path>) -> Result<Vec<ProbeSample>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_palpation(f)
}

pub fn save_survey(path: impl AsRef<Path>, survey: &[PointEstimate]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_survey(std::io::BufWriter::new(f), survey)
}

pub fn load_survey(path: impl AsRef<Path>, beta: f64) -> Result<Vec<PointEstimate>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_survey(f, beta)
}
