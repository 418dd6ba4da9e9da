//! CSV forms of the analysis outputs. Reals are written in Rust's shortest
//! round-trip notation, so parsing an emitted table restores it exactly.

use std::io::{Read, Write};

use crate::numerics::Tensor;

use super::{AnalysisError, Histogram, PerClassDelta};

fn csv_err(e: impl std::fmt::Display) -> AnalysisError {
    AnalysisError::Csv(e.to_string())
}

fn num<T: std::str::FromStr>(field: &str, what: &str) -> Result<T, AnalysisError> {
    field
        .parse()
        .map_err(|_| AnalysisError::Csv(format!("invalid {what} `{field}`")))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(input)
}

/// Header `unit,0,1,…`; one row per row unit, led by its id.
pub fn write_correlation_csv<W: Write>(out: W, values: &Tensor) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["unit".to_string()];
    header.extend((0..values.cols()).map(|j| j.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..values.rows() {
        let mut rec = vec![i.to_string()];
        rec.extend(values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn parse_correlation_csv<R: Read>(input: R) -> Result<Tensor, AnalysisError> {
    let mut r = reader(input);
    let cols = r.headers().map_err(csv_err)?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let id: usize = num(&rec[0], "unit id")?;
        if id != rows {
            return Err(AnalysisError::Csv(format!("row unit {id} out of order")));
        }
        for f in rec.iter().skip(1) {
            data.push(num::<f64>(f, "correlation")?);
        }
        rows += 1;
    }
    Tensor::new(vec![rows, cols], data).map_err(csv_err)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopWordsRow {
    pub unit: usize,
    /// 1-based.
    pub rank: usize,
    pub surface: String,
    pub activation: f64,
}

/// `unit,rank,surface,activation`.
pub fn write_top_words_csv<W: Write>(out: W, rows: &[TopWordsRow]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit", "rank", "surface", "activation"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.unit.to_string(),
            r.rank.to_string(),
            r.surface.clone(),
            r.activation.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn parse_top_words_csv<R: Read>(input: R) -> Result<Vec<TopWordsRow>, AnalysisError> {
    reader(input)
        .records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            Ok(TopWordsRow {
                unit: num(&rec[0], "unit")?,
                rank: num(&rec[1], "rank")?,
                surface: rec[2].to_string(),
                activation: num(&rec[3], "activation")?,
            })
        })
        .collect()
}

/// `block,bin_lo,bin_hi,count`, one row per bin.
pub fn write_histogram_csv<W: Write>(out: W, hists: &[Histogram]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["block", "bin_lo", "bin_hi", "count"])
        .map_err(csv_err)?;
    for h in hists {
        for (b, c) in h.counts.iter().enumerate() {
            w.write_record([
                h.block.clone(),
                h.edges[b].to_string(),
                h.edges[b + 1].to_string(),
                c.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

pub fn parse_histogram_csv<R: Read>(input: R) -> Result<Vec<Histogram>, AnalysisError> {
    let mut out: Vec<Histogram> = Vec::new();
    for rec in reader(input).records() {
        let rec = rec.map_err(csv_err)?;
        let (lo, hi): (f64, f64) = (num(&rec[1], "bin_lo")?, num(&rec[2], "bin_hi")?);
        let count: usize = num(&rec[3], "count")?;
        match out.last_mut() {
            Some(h) if h.block == rec[0] => {
                h.edges.push(hi);
                h.counts.push(count);
            }
            _ => out.push(Histogram {
                block: rec[0].to_string(),
                edges: vec![lo, hi],
                counts: vec![count],
            }),
        }
    }
    Ok(out)
}

/// `class,delta`, in the stored (descending) order. Excluded classes are
/// not written.
pub fn write_per_class_csv<W: Write>(out: W, d: &PerClassDelta) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "delta"]).map_err(csv_err)?;
    for (c, v) in &d.deltas {
        w.write_record([c.clone(), v.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn parse_per_class_csv<R: Read>(input: R) -> Result<Vec<(String, f64)>, AnalysisError> {
    reader(input)
        .records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            Ok((rec[0].to_string(), num(&rec[1], "delta")?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_round_trip() {
        let t = Tensor::matrix(2, 3, vec![1.0, -0.1 + 0.2, 1.0 / 3.0, 0.0, -1.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        write_correlation_csv(&mut buf, &t).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("unit,0,1,2\n0,"));
        assert_eq!(parse_correlation_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn surfaces_with_commas_and_quotes_survive() {
        let rows = vec![TopWordsRow {
            unit: 3,
            rank: 1,
            surface: "\"a,b\"".into(),
            activation: 0.25,
        }];
        let mut buf = Vec::new();
        write_top_words_csv(&mut buf, &rows).unwrap();
        assert_eq!(parse_top_words_csv(&buf[..]).unwrap(), rows);
    }
}
