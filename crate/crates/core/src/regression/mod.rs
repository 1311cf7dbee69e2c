//! Macro indicator ingestion, monthly alignment and simple OLS with
//! significance statistics.

pub mod report;
pub mod student_t;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::aspect::AspectLabel;
use crate::error::{Error, Result};
use crate::month::YearMonth;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSeries {
    pub indicator: String,
    /// Strictly increasing dates with finite values.
    pub observations: Vec<(NaiveDate, f64)>,
}

impl MacroSeries {
    pub fn by_month(&self) -> BTreeMap<YearMonth, f64> {
        self.observations
            .iter()
            .map(|&(d, v)| (YearMonth::of(d), v))
            .collect()
    }
}

/// Reads a `date,value` CSV. Rows are sorted by date; duplicates are rejected.
pub fn load_macro_csv(path: &Path, indicator: &str) -> Result<MacroSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut observations = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        let line = line.trim();
        if i == 0 {
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            if header != ["date", "value"] {
                return Err(parse_err(1, format!("expected header `date,value`, found {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (date, value) = line
            .split_once(',')
            .ok_or_else(|| parse_err(lineno, format!("expected `date,value`, found {line:?}")))?;
        let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
            .map_err(|e| parse_err(lineno, format!("bad date {date:?}: {e}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad value {value:?}: {e}")))?;
        if !value.is_finite() {
            return Err(parse_err(lineno, format!("non-finite value {value}")));
        }
        observations.push((date, value));
    }
    observations.sort_by_key(|&(d, _)| d);
    if let Some(w) = observations.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0.to_string()));
    }
    Ok(MacroSeries {
        indicator: indicator.to_string(),
        observations,
    })
}

/// One observation per calendar month: the mean of that month's values,
/// dated on the first of the month.
pub fn aggregate_monthly(series: &MacroSeries) -> MacroSeries {
    let mut groups: BTreeMap<YearMonth, (f64, usize)> = BTreeMap::new();
    for &(d, v) in &series.observations {
        let g = groups.entry(YearMonth::of(d)).or_default();
        g.0 += v;
        g.1 += 1;
    }
    MacroSeries {
        indicator: series.indicator.clone(),
        observations: groups
            .into_iter()
            .map(|(m, (sum, n))| (m.first_day(), sum / n as f64))
            .collect(),
    }
}

/// Pairs sentiment at month `m` with the macro value at `m + lead`, ordered
/// by sentiment month.
pub fn align(
    sentiment: &BTreeMap<YearMonth, f64>,
    macro_monthly: &BTreeMap<YearMonth, f64>,
    lead: u32,
) -> Result<Vec<(f64, f64)>> {
    let pairs: Vec<(f64, f64)> = sentiment
        .iter()
        .filter_map(|(m, &x)| macro_monthly.get(&m.add_months(lead as i64)).map(|&y| (x, y)))
        .collect();
    if pairs.len() < 3 {
        return Err(Error::InsufficientOverlap);
    }
    Ok(pairs)
}

/// Simple OLS `y = alpha + beta·x` with classical standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit<T> {
    pub n: usize,
    pub alpha: T,
    pub beta: T,
    pub se_alpha: T,
    pub se_beta: T,
    pub t_beta: T,
    pub p_beta: T,
    pub r_squared: T,
    /// The response had zero variance; `r_squared` was set to 0.
    pub degenerate_response: bool,
}

pub fn ols_fit<T: Scalar>(pairs: &[(T, T)]) -> Result<OlsFit<T>> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::TooFewObservations(n));
    }
    let nf = T::from_usize_lossy(n);
    let x_mean = pairs.iter().map(|p| p.0).sum::<T>() / nf;
    let y_mean = pairs.iter().map(|p| p.1).sum::<T>() / nf;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in pairs {
        let (dx, dy) = (x - x_mean, y - y_mean);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if !(sxx > T::zero()) {
        return Err(Error::DegenerateRegressor);
    }
    let beta = sxy / sxx;
    let alpha = y_mean - beta * x_mean;
    let ssr: T = pairs
        .iter()
        .map(|&(x, y)| {
            let r = y - alpha - beta * x;
            r * r
        })
        .sum();
    let df = T::from_usize_lossy(n - 2);
    let sigma2 = ssr / df;
    let se_beta = (sigma2 / sxx).sqrt();
    let se_alpha = (sigma2 * (T::one() / nf + x_mean * x_mean / sxx)).sqrt();

    let degenerate_response = !(syy > T::zero());
    let r_squared = if degenerate_response {
        warn!("constant response in OLS fit (n = {n}); r_squared set to 0");
        T::zero()
    } else {
        (T::one() - ssr / syy).max(T::zero()).min(T::one())
    };

    let (t_beta, p_beta) = if se_beta > T::zero() {
        let t = beta / se_beta;
        (t, student_t::two_sided_p(t, df))
    } else if beta == T::zero() {
        (T::zero(), T::one())
    } else {
        (beta.signum() * T::infinity(), T::zero())
    };

    Ok(OlsFit {
        n,
        alpha,
        beta,
        se_alpha,
        se_beta,
        t_beta,
        p_beta,
        r_squared,
        degenerate_response,
    })
}

/// OLS result tagged with the indicator, aspect and lead it was fitted for.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub indicator: String,
    pub aspect: AspectLabel,
    pub lead: u32,
    pub fit: OlsFit<f64>,
}

/// Aligns one aspect's sentiment with a monthly-aggregated indicator and fits OLS.
pub fn regress(
    sentiment: &BTreeMap<YearMonth, f64>,
    macro_series: &MacroSeries,
    aspect: &AspectLabel,
    lead: u32,
) -> Result<(RegressionResult, Vec<(f64, f64)>)> {
    let monthly = aggregate_monthly(macro_series).by_month();
    let pairs = align(sentiment, &monthly, lead)?;
    let fit = ols_fit(&pairs)?;
    Ok((
        RegressionResult {
            indicator: macro_series.indicator.clone(),
            aspect: aspect.clone(),
            lead,
            fit,
        },
        pairs,
    ))
}
