use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::diagnostics::{MetricRow, MetricSeries};
use crate::error::{Error, Result};
use crate::model::{Datum, SaturationSpec};

pub const SERIES_COLUMNS: [&str; 9] = [
    "k",
    "param_err",
    "param_err_bar",
    "regret_avg",
    "pred_err_avg",
    "lambda_min",
    "lambda_max",
    "rate_ratio",
    "lyapunov",
];

const THRESHOLD_COLUMNS: [&str; 5] = ["y", "L", "l", "u", "U"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    let msg = match e.into_kind() {
        csv::ErrorKind::Io(io) => return Error::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        other => format!("{other:?}"),
    };
    match line {
        Some(l) => Error::data(format!("line {l}: {msg}")),
        None => Error::data(msg),
    }
}

/// Expected dataset header for dimension `dim`.
pub fn dataset_header(dim: usize, with_weight: bool) -> Vec<String> {
    let mut h: Vec<String> = (0..dim).map(|i| format!("phi_{i}")).collect();
    h.extend(THRESHOLD_COLUMNS.iter().map(|s| s.to_string()));
    if with_weight {
        h.push("b".to_string());
    }
    h
}

/// Parses a dataset from any reader. The header fixes the dimension and
/// whether a weight column `b` is present.
pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<Datum>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let with_weight = header.last().is_some_and(|h| h == "b");
    let dim = header.len().saturating_sub(THRESHOLD_COLUMNS.len() + usize::from(with_weight));
    if dim == 0 || header != dataset_header(dim, with_weight) {
        return Err(Error::data(format!(
            "line 1: header must be phi_0..phi_{{d-1}},y,L,l,u,U[,b], got {}",
            header.join(",")
        )));
    }

    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut vals = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(&header) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::data(format!("line {line}: column {name}: cannot parse '{field}'")))?;
            if !v.is_finite() {
                return Err(Error::data(format!("line {line}: column {name}: value must be finite")));
            }
            vals.push(v);
        }
        let spec = SaturationSpec::new(vals[dim + 1], vals[dim + 2], vals[dim + 3], vals[dim + 4])
            .map_err(|e| match e {
                Error::Config(m) => Error::data(format!("line {line}: {m}")),
                other => other,
            })?;
        let datum = Datum {
            regressor: DVector::from_column_slice(&vals[..dim]),
            observation: vals[dim],
            spec,
            weight: with_weight.then(|| vals[dim + 5]),
        };
        datum.validate().map_err(|e| e.context(format!("line {line}")))?;
        data.push(datum);
    }
    Ok(data)
}

/// Loads a censored dataset with header `phi_0..phi_{d-1},y,L,l,u,U[,b]`.
/// When `dim` is given the file must match it.
pub fn load_dataset(path: &Path, dim: Option<usize>) -> Result<Vec<Datum>> {
    let file = File::open(path).map_err(|e| Error::from(e).context(path.display()))?;
    let data = read_dataset(file).map_err(|e| e.context(path.display()))?;
    if let (Some(d), Some(first)) = (dim, data.first()) {
        if first.dim() != d {
            return Err(Error::data(format!(
                "{}: dataset has dimension {}, expected {d}",
                path.display(),
                first.dim()
            )));
        }
    }
    Ok(data)
}

/// Writes data in the dataset format. A weight column is written when every
/// datum carries a weight.
pub fn write_dataset<W: Write>(data: &[Datum], writer: W) -> Result<()> {
    let dim = data.first().map_or(0, Datum::dim);
    let with_weight = !data.is_empty() && data.iter().all(|d| d.weight.is_some());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(dataset_header(dim, with_weight)).map_err(csv_error)?;
    for d in data {
        if d.dim() != dim {
            return Err(Error::data("all data must share one dimension"));
        }
        let s = &d.spec;
        let mut row: Vec<String> = d.regressor.iter().map(|v| format!("{v:e}")).collect();
        for v in [d.observation, s.lower_clip, s.lower_threshold, s.upper_threshold, s.upper_clip] {
            row.push(format!("{v:e}"));
        }
        if with_weight {
            row.push(format!("{:e}", d.weight.unwrap_or(1.0)));
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_dataset(data: &[Datum], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::from(e).context(path.display()))?;
    write_dataset(data, BufWriter::new(file))
}

/// Writes a metric series, floats with 17 significant digits.
pub fn write_series<W: Write>(series: &[MetricRow], mut writer: W) -> Result<()> {
    writeln!(writer, "{}", SERIES_COLUMNS.join(","))?;
    for r in series {
        writeln!(
            writer,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.k,
            r.param_err,
            r.param_err_bar,
            r.regret_avg,
            r.pred_err_avg,
            r.lambda_min,
            r.lambda_max,
            r.rate_ratio,
            r.lyapunov
        )?;
    }
    writer.flush()?;
    Ok(())
}

pub fn emit_csv(series: &[MetricRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::from(e).context(path.display()))?;
    write_series(series, BufWriter::new(file))
}

pub fn read_series<R: Read>(reader: R) -> Result<MetricSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header != SERIES_COLUMNS {
        return Err(Error::data(format!("line 1: unexpected series header {}", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |name: &str| Error::data(format!("line {line}: column {name}: cannot parse"));
        let k: usize = rec[0].parse().map_err(|_| bad("k"))?;
        let mut v = [0.0; 8];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = rec[i + 1].parse().map_err(|_| bad(SERIES_COLUMNS[i + 1]))?;
        }
        out.push(MetricRow {
            k,
            param_err: v[0],
            param_err_bar: v[1],
            regret_avg: v[2],
            pred_err_avg: v[3],
            lambda_min: v[4],
            lambda_max: v[5],
            rate_ratio: v[6],
            lyapunov: v[7],
        });
    }
    Ok(out)
}

pub fn load_series(path: &Path) -> Result<MetricSeries> {
    let file = File::open(path).map_err(|e| Error::from(e).context(path.display()))?;
    read_series(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ROWS: &str = "phi_0,phi_1,y,L,l,u,U\n1.0,2.0,3.0,0,0,10,10\n-1,0.5,0,0,0,10,10\n";

    #[test]
    fn two_row_file_gives_two_data() {
        let data = read_dataset(TWO_ROWS.as_bytes()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].regressor.as_slice(), &[1.0, 2.0]);
        assert_eq!(data[1].observation, 0.0);
        assert_eq!(data[0].weight, None);
    }

    #[test]
    fn weight_column_is_read() {
        let text = "phi_0,y,L,l,u,U,b\n1,2,0,0,10,10,0.5\n";
        let data = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(data[0].weight, Some(0.5));
    }

    #[test]
    fn observation_above_upper_clip_reports_line() {
        let text = "phi_0,y,L,l,u,U\n1,2,0,0,10,10\n1,11,0,0,10,10\n";
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "phi_0,y,L,l,u,U\n1,2,0,0,10,10\n1,abc,0,0,10,10\n";
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let short = "phi_0,y,L,l,u,U\n1,2,0,0,10\n";
        let err = read_dataset(short.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn bad_header_is_rejected() {
        let err = read_dataset("x,y,L,l,u,U\n1,2,0,0,10,10\n".as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn bad_thresholds_are_data_errors() {
        let err = read_dataset("phi_0,y,L,l,u,U\n1,2,0,5,3,10\n".as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn dataset_round_trip() {
        let data = read_dataset(TWO_ROWS.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }

    fn row(k: usize) -> MetricRow {
        MetricRow {
            k,
            param_err: 0.1 + k as f64 / 3.0,
            param_err_bar: 1.0 / 7.0,
            regret_avg: 2e-300,
            pred_err_avg: 0.8,
            lambda_min: 1.0,
            lambda_max: 1e6,
            rate_ratio: f64::NAN,
            lyapunov: 12.5,
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let mut buf = Vec::new();
        write_series(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", SERIES_COLUMNS.join(",")));
    }

    #[test]
    fn one_row_series_has_two_lines_with_17_digits() {
        let mut buf = Vec::new();
        write_series(&[row(1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let second = lines[1].split(',').nth(2).unwrap();
        assert_eq!(second, "1.4285714285714285e-1");
    }

    #[test]
    fn series_round_trip_is_exact() {
        let rows = vec![row(1), row(10), row(100)];
        let mut buf = Vec::new();
        write_series(&rows, &mut buf).unwrap();
        let back = read_series(buf.as_slice()).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.k, b.k);
            assert_eq!(a.param_err.to_bits(), b.param_err.to_bits());
            assert_eq!(a.regret_avg.to_bits(), b.regret_avg.to_bits());
            assert!(b.rate_ratio.is_nan());
        }
    }
}
