//! CSV output and decay-curve ingestion.

use std::path::Path;

use flipflop_core::kinetics::DecayCurve;
use flipflop_core::rates::{FieldRegime, LogHistogram, RateTriple};
use flipflop_core::spinham::Manifold;

use crate::CliError;

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

pub fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(header).map_err(|e| write_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

pub fn write_rates(path: &Path, triples: &[RateTriple]) -> Result<(), CliError> {
    write_table(
        path,
        &["ion_id", "R_ab_Hz", "R_bc_Hz", "R_ac_Hz"],
        triples.iter().map(|t| {
            vec![
                t.ion_id.to_string(),
                t.r_ab.to_string(),
                t.r_bc.to_string(),
                t.r_ac.to_string(),
            ]
        }),
    )
}

pub fn write_histogram(path: &Path, h: &LogHistogram) -> Result<(), CliError> {
    write_table(
        path,
        &["bin_center_log10Hz", "count"],
        h.bins
            .iter()
            .map(|(c, n)| vec![c.to_string(), n.to_string()]),
    )
}

/// `time_s`, then `pop_x` for each present level, then `sd_x` for each present weight column.
pub fn write_decay(path: &Path, curve: &DecayCurve) -> Result<(), CliError> {
    let mut header = vec!["time_s".to_string()];
    for l in Manifold::ALL {
        if curve.populations[l.index()].is_some() {
            header.push(format!("pop_{}", l.name()));
        }
    }
    for l in Manifold::ALL {
        if curve.weights[l.index()].is_some() {
            header.push(format!("sd_{}", l.name()));
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..curve.times.len()).map(|i| {
        let mut row = vec![curve.times[i].to_string()];
        for col in curve
            .populations
            .iter()
            .chain(curve.weights.iter())
            .flatten()
        {
            row.push(col[i].to_string());
        }
        row
    });
    write_table(path, &header_refs, rows)
}

pub fn write_spectrum(path: &Path, detunings: &[f64], absorption: &[f64]) -> Result<(), CliError> {
    write_table(
        path,
        &["detuning_MHz", "absorption_au"],
        detunings
            .iter()
            .zip(absorption)
            .map(|(d, a)| vec![d.to_string(), a.to_string()]),
    )
}

pub fn write_ions(
    path: &Path,
    ensemble: &flipflop_core::crystal::DopedEnsemble,
) -> Result<(), CliError> {
    write_table(
        path,
        &["ion_id", "x_nm", "y_nm", "z_nm", "orientation_class"],
        ensemble.ions.iter().map(|i| {
            vec![
                i.id.to_string(),
                i.position.x.to_string(),
                i.position.y.to_string(),
                i.position.z.to_string(),
                i.orientation_class.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IngestOptions {
    /// Points up to this time are replaced by their average, ms.
    pub moving_average_ms: Option<f64>,
    /// Divide every column by its value at this time, s. Without it, a moving
    /// average implies normalization at the averaged point.
    pub normalize_at: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub curve: DecayCurve,
    /// Time the populations were divided by, s.
    pub normalized_at: Option<f64>,
    pub warnings: Vec<String>,
}

/// Read a decay CSV written by [`write_decay`] or by hand.
pub fn ingest_decay(
    path: &Path,
    regime: FieldRegime,
    options: &IngestOptions,
) -> Result<Ingested, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: bad header: {e}", path.display())))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let time_col = find("time_s")
        .ok_or_else(|| CliError::Input(format!("{}: missing time_s column", path.display())))?;
    let pop_cols: Vec<Option<usize>> = Manifold::ALL
        .iter()
        .map(|l| find(&format!("pop_{}", l.name())))
        .collect();
    let sd_cols: Vec<Option<usize>> = Manifold::ALL
        .iter()
        .map(|l| find(&format!("sd_{}", l.name())))
        .collect();
    for h in headers.iter() {
        let known = h == "time_s"
            || ["pop_", "sd_"].iter().any(|p| {
                h.strip_prefix(p)
                    .is_some_and(|rest| ["a", "b", "c"].contains(&rest))
            });
        if !known {
            return Err(CliError::Input(format!(
                "{}: unknown column {h:?}",
                path.display()
            )));
        }
    }
    if pop_cols.iter().all(Option::is_none) {
        return Err(CliError::Input(format!(
            "{}: no pop_a, pop_b or pop_c column",
            path.display()
        )));
    }
    let mut times = Vec::new();
    let mut pops: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut sds: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Input(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| -> Result<f64, CliError> {
            let text = record.get(col).unwrap_or("");
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::Input(format!(
                        "{}: line {line}: {text:?} is not a number",
                        path.display()
                    ))
                })
        };
        times.push(field(time_col)?);
        for k in 0..3 {
            if let Some(c) = pop_cols[k] {
                pops[k].push(field(c)?);
            }
            if let Some(c) = sd_cols[k] {
                sds[k].push(field(c)?);
            }
        }
    }
    let bad: Vec<usize> = (1..times.len())
        .filter(|&i| times[i] <= times[i - 1])
        .collect();
    if !bad.is_empty() {
        return Err(CliError::Input(format!(
            "{}: times are not strictly increasing at data rows {bad:?}",
            path.display()
        )));
    }
    let mut warnings = Vec::new();
    let mut curve = DecayCurve::new(times, regime);
    for k in 0..3 {
        if pop_cols[k].is_some() {
            curve.populations[k] = Some(std::mem::take(&mut pops[k]));
            if sd_cols[k].is_some() {
                curve.weights[k] = Some(std::mem::take(&mut sds[k]));
            } else {
                warnings.push(format!(
                    "{}: no sd_{} column, using uniform weights",
                    path.display(),
                    Manifold::ALL[k].name()
                ));
            }
        }
    }
    let normalized_at = preprocess(&mut curve, options)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    curve.validate()?;
    Ok(Ingested {
        curve,
        normalized_at,
        warnings,
    })
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let k = times.partition_point(|x| *x < t);
    if k < times.len() && times[k] == t {
        return Some(values[k]);
    }
    if k == 0 || k == times.len() {
        return None;
    }
    let (t0, t1) = (times[k - 1], times[k]);
    Some(values[k - 1] + (values[k] - values[k - 1]) * (t - t0) / (t1 - t0))
}

/// Moving average over the early points, then normalization. Returns the normalization time.
pub fn preprocess(curve: &mut DecayCurve, options: &IngestOptions) -> Result<Option<f64>, String> {
    let mut normalize_at = options.normalize_at;
    if let Some(ms) = options.moving_average_ms {
        if !(ms > 0.0) {
            return Err("moving-average window must be positive".into());
        }
        let limit = ms * 1e-3;
        let m = curve.times.partition_point(|t| *t <= limit);
        if m == 0 {
            return Err(format!("no points within the first {ms} ms"));
        }
        let at = curve.times[m - 1];
        let avg = |v: &mut Vec<f64>| {
            let mean = v[..m].iter().sum::<f64>() / m as f64;
            v.splice(..m, [mean]);
        };
        curve.times.splice(..m, [at]);
        for col in curve
            .populations
            .iter_mut()
            .chain(curve.weights.iter_mut())
            .flatten()
        {
            avg(col);
        }
        normalize_at.get_or_insert(at);
    }
    if let Some(t) = normalize_at {
        for k in 0..3 {
            let Some(p) = curve.populations[k].as_mut() else {
                continue;
            };
            let scale = interpolate(&curve.times, p, t)
                .ok_or_else(|| format!("normalization time {t} s is outside the data"))?;
            if scale == 0.0 {
                return Err(format!(
                    "level {} is zero at the normalization time",
                    Manifold::ALL[k].name()
                ));
            }
            p.iter_mut().for_each(|v| *v /= scale);
            if let Some(w) = curve.weights[k].as_mut() {
                w.iter_mut().for_each(|v| *v /= scale.abs());
            }
        }
    }
    Ok(normalize_at)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| write_err(path, e))
}

/// Header and numeric rows of a CSV file; every field must parse as a number.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    CliError::Input(format!(
                        "{}: line {line}: {f:?} is not a number",
                        path.display()
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((headers, rows))
}

fn expect_header(path: &Path, got: &[String], want: &[&str]) -> Result<(), CliError> {
    if got != want {
        return Err(CliError::Input(format!(
            "{}: expected columns {want:?}, found {got:?}",
            path.display()
        )));
    }
    Ok(())
}

pub fn read_rates(path: &Path) -> Result<Vec<RateTriple>, CliError> {
    let (h, rows) = read_table(path)?;
    expect_header(path, &h, &["ion_id", "R_ab_Hz", "R_bc_Hz", "R_ac_Hz"])?;
    Ok(rows
        .iter()
        .map(|r| RateTriple::new(r[0] as usize, r[1], r[2], r[3]))
        .collect())
}

/// Bins of a histogram CSV as (center, count).
pub fn read_histogram(path: &Path) -> Result<Vec<(f64, usize)>, CliError> {
    let (h, rows) = read_table(path)?;
    expect_header(path, &h, &["bin_center_log10Hz", "count"])?;
    Ok(rows.iter().map(|r| (r[0], r[1] as usize)).collect())
}

pub fn read_spectrum(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (h, rows) = read_table(path)?;
    expect_header(path, &h, &["detuning_MHz", "absorption_au"])?;
    Ok(rows.iter().map(|r| (r[0], r[1])).unzip())
}
