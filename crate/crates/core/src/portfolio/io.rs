use std::io::{BufRead, BufReader, Read};

use nalgebra::{DMatrix, DVector};

use super::returns::{PriceSeries, ReturnStats};
use crate::error::{GeoError, Result};

fn parse_err(line: usize, message: impl Into<String>) -> GeoError {
    GeoError::Parse {
        line,
        message: message.into(),
    }
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
        && matches!(s[5..7].parse::<u32>(), Ok(1..=12))
        && matches!(s[8..10].parse::<u32>(), Ok(1..=31))
}

/// Reads a price table: a header of `date,<asset id>...` followed by one row
/// per period whose first cell is an ISO `YYYY-MM-DD` date.
pub fn read_price_csv<R: Read>(reader: R, period_label: &str) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(parse_err(1, "header needs a date column and at least one asset"));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("expected {} cells, found {}", header.len(), rec.len())));
        }
        if !is_iso_date(&rec[0]) {
            return Err(parse_err(line, format!("'{}' is not an ISO date", &rec[0])));
        }
        for cell in rec.iter().skip(1) {
            if cell.is_empty() {
                return Err(parse_err(line, "missing price"));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("'{cell}' is not a number")))?;
            data.push(v);
        }
        rows += 1;
    }
    let prices = DMatrix::from_row_slice(rows, ids.len(), &data);
    PriceSeries::new(ids, prices, period_label)
}

/// Reads an OR-Library `port` file: the asset count, then one
/// `mean stddev` line per asset, then `i j correlation` triples (1-based).
/// The covariance is `corr_ij * s_i * s_j`; pairs that are not listed are
/// uncorrelated and the diagonal correlation defaults to 1.
pub fn read_orlib_port<R: Read>(reader: R) -> Result<ReturnStats> {
    let mut lines = BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty()));
    let mut next = || -> Result<Option<(usize, Vec<String>)>> {
        match lines.next() {
            None => Ok(None),
            Some(r) => {
                let (no, l) = r?;
                Ok(Some((no, l.split_whitespace().map(str::to_owned).collect())))
            }
        }
    };
    let (no, first) = next()?.ok_or_else(|| parse_err(1, "empty file"))?;
    let n: usize = match first.as_slice() {
        [n] => n.parse().map_err(|_| parse_err(no, format!("'{n}' is not an asset count")))?,
        _ => return Err(parse_err(no, "first line must hold the asset count")),
    };
    if n == 0 {
        return Err(parse_err(no, "asset count must be positive"));
    }
    let num = |no: usize, s: &str| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(no, format!("'{s}' is not a number")))
    };
    let mut mean = DVector::zeros(n);
    let mut sd = DVector::zeros(n);
    for i in 0..n {
        let (no, f) = next()?.ok_or_else(|| parse_err(0, format!("expected {n} asset lines, found {i}")))?;
        if f.len() != 2 {
            return Err(parse_err(no, "asset lines hold a mean and a standard deviation"));
        }
        mean[i] = num(no, &f[0])?;
        sd[i] = num(no, &f[1])?;
        if sd[i] < 0.0 {
            return Err(parse_err(no, "negative standard deviation"));
        }
    }
    let mut corr = DMatrix::identity(n, n);
    while let Some((no, f)) = next()? {
        if f.len() != 3 {
            return Err(parse_err(no, "correlation lines hold 'i j value'"));
        }
        let idx = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(i) if (1..=n).contains(&i) => Ok(i - 1),
                _ => Err(parse_err(no, format!("'{s}' is not an asset index in 1..={n}"))),
            }
        };
        let (i, j) = (idx(&f[0])?, idx(&f[1])?);
        let c = num(no, &f[2])?;
        corr[(i, j)] = c;
        corr[(j, i)] = c;
    }
    let cov = DMatrix::from_fn(n, n, |i, j| corr[(i, j)] * sd[i] * sd[j]);
    let ids = (1..=n).map(|i| format!("asset{i}")).collect();
    ReturnStats::new(ids, mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn price_csv_round_trip() {
        let text = "date,AAA,BBB\n2020-01-01,100,50\n2020-01-02,110,55\n2020-01-03,99,60\n";
        let p = read_price_csv(text.as_bytes(), "daily").unwrap();
        assert_eq!(p.asset_ids, vec!["AAA", "BBB"]);
        assert_eq!(p.prices.nrows(), 3);
        assert_eq!(p.prices[(1, 0)], 110.0);
    }

    #[test]
    fn price_csv_errors_carry_lines() {
        let bad_date = "date,A\n2020-01-01,1\n01/02/2020,2\n";
        assert!(matches!(read_price_csv(bad_date.as_bytes(), "d"), Err(GeoError::Parse { line: 3, .. })));
        let missing = "date,A,B\n2020-01-01,1,\n";
        assert!(matches!(read_price_csv(missing.as_bytes(), "d"), Err(GeoError::Parse { line: 2, .. })));
        let zero = "date,A\n2020-01-01,1\n2020-01-02,0\n";
        assert!(matches!(read_price_csv(zero.as_bytes(), "d"), Err(GeoError::InvalidData(_))));
    }

    #[test]
    fn orlib_port_covariance() {
        let text = "3\n0.01 0.1\n0.02 0.2\n0.03 0.3\n1 1 1.0\n1 2 0.5\n1 3 0.0\n2 2 1.0\n2 3 -0.25\n3 3 1.0\n";
        let s = read_orlib_port(text.as_bytes()).unwrap();
        assert_eq!(s.mean_returns[2], 0.03);
        assert!((s.covariance[(0, 1)] - 0.5 * 0.1 * 0.2).abs() < 1e-18);
        assert!((s.covariance[(2, 1)] + 0.25 * 0.2 * 0.3).abs() < 1e-18);
        assert!((s.covariance[(2, 2)] - 0.09).abs() < 1e-17);
    }

    #[test]
    fn orlib_port_rejects_bad_index() {
        let text = "2\n0.01 0.1\n0.02 0.2\n1 3 0.5\n";
        assert!(matches!(read_orlib_port(text.as_bytes()), Err(GeoError::Parse { line: 4, .. })));
    }
}
