//! Result rows, their CSV form, seed aggregation and the plot script.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use semopt_core::config::SweepParameter;
use semopt_core::Scheme;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("row {row}, column `{column}`: {message}")]
    Field {
        row: usize,
        column: &'static str,
        message: String,
    },
}

/// Outcome class of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Ok,
    Infeasible,
    NumericalFailure,
    /// The scenario itself was rejected (e.g. a sweep value out of range).
    Invalid,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Infeasible => "infeasible",
            Status::NumericalFailure => "numerical_failure",
            Status::Invalid => "invalid",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Status::Ok, Status::Infeasible, Status::NumericalFailure, Status::Invalid]
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

/// One evaluated (scheme, swept value, seed) point.
///
/// Rate and power fields are `None` unless the run succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub parameter: Option<SweepParameter>,
    pub value: Option<f64>,
    pub seed: u64,
    pub status: Status,
    pub sum_semantic_rate_bps: Option<f64>,
    pub semantic_rates_bps: Vec<f64>,
    pub transmit_power_w: Option<f64>,
    pub computation_power_w: Option<f64>,
    pub outer_iterations: Option<usize>,
    /// Error message for failed runs, empty otherwise.
    pub detail: String,
}

impl ResultRow {
    /// Sort key of the written files: scheme, swept value, seed.
    pub fn order(a: &ResultRow, b: &ResultRow) -> std::cmp::Ordering {
        a.scheme
            .cmp(&b.scheme)
            .then(a.value.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.value.unwrap_or(f64::NEG_INFINITY)))
            .then(a.seed.cmp(&b.seed))
    }
}

/// Column order of `results.csv`.
pub const RESULTS_HEADER: [&str; 11] = [
    "scheme",
    "parameter",
    "value",
    "seed",
    "status",
    "sum_semantic_rate_bps",
    "semantic_rates_bps",
    "transmit_power_w",
    "computation_power_w",
    "outer_iterations",
    "detail",
];

pub const MEANS_HEADER: [&str; 9] = [
    "scheme",
    "parameter",
    "value",
    "runs",
    "ok_runs",
    "mean_sum_semantic_rate_bps",
    "mean_transmit_power_w",
    "mean_computation_power_w",
    "mean_outer_iterations",
];

pub const TIMINGS_HEADER: [&str; 5] = ["scheme", "parameter", "value", "seed", "wall_time_ms"];

// `Display` for f64 prints the shortest string that parses back to the
// same bits.
fn real(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn param(p: Option<SweepParameter>) -> &'static str {
    p.map(|p| p.as_str()).unwrap_or("")
}

fn row_record(r: &ResultRow) -> [String; 11] {
    [
        r.scheme.to_string(),
        param(r.parameter).to_string(),
        real(r.value),
        r.seed.to_string(),
        r.status.to_string(),
        real(r.sum_semantic_rate_bps),
        r.semantic_rates_bps.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
        real(r.transmit_power_w),
        real(r.computation_power_w),
        r.outer_iterations.map(|n| n.to_string()).unwrap_or_default(),
        r.detail.clone(),
    ]
}

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record(row_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn results_to_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_results(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is UTF-8")
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>, CsvError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(CsvError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let err = |c: usize, m: String| CsvError::Field {
            row: i + 1,
            column: RESULTS_HEADER[c],
            message: m,
        };
        let opt_real = |c: usize| -> Result<Option<f64>, CsvError> {
            match field(c) {
                "" => Ok(None),
                v => v.parse().map(Some).map_err(|e| err(c, format!("{e}"))),
            }
        };
        let parameter = match field(1) {
            "" => None,
            v => Some(v.parse().map_err(|e| err(1, e))?),
        };
        let semantic_rates_bps = match field(6) {
            "" => Vec::new(),
            v => v
                .split(';')
                .map(|x| x.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| err(6, format!("{e}")))?,
        };
        rows.push(ResultRow {
            scheme: field(0).parse().map_err(|e| err(0, e))?,
            parameter,
            value: opt_real(2)?,
            seed: field(3).parse().map_err(|e| err(3, format!("{e}")))?,
            status: field(4).parse().map_err(|e| err(4, e))?,
            sum_semantic_rate_bps: opt_real(5)?,
            semantic_rates_bps,
            transmit_power_w: opt_real(7)?,
            computation_power_w: opt_real(8)?,
            outer_iterations: match field(9) {
                "" => None,
                v => Some(v.parse().map_err(|e| err(9, format!("{e}")))?),
            },
            detail: field(10).to_string(),
        });
    }
    Ok(rows)
}

/// Seed average of one (scheme, swept value) group over its `ok` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRow {
    pub scheme: Scheme,
    pub parameter: Option<SweepParameter>,
    pub value: Option<f64>,
    pub runs: usize,
    pub ok_runs: usize,
    pub mean_sum_semantic_rate_bps: Option<f64>,
    pub mean_transmit_power_w: Option<f64>,
    pub mean_computation_power_w: Option<f64>,
    pub mean_outer_iterations: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Groups rows by (scheme, value) in first-seen order; `rows` should
/// already be sorted.
pub fn aggregate(rows: &[ResultRow]) -> Vec<MeanRow> {
    let mut groups: Vec<(Scheme, Option<f64>, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        let key_bits = r.value.map(f64::to_bits);
        match groups
            .iter_mut()
            .find(|(s, v, _)| *s == r.scheme && v.map(f64::to_bits) == key_bits)
        {
            Some(g) => g.2.push(r),
            None => groups.push((r.scheme, r.value, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(scheme, value, members)| {
            let ok: Vec<&ResultRow> = members.iter().copied().filter(|r| r.status == Status::Ok).collect();
            MeanRow {
                scheme,
                parameter: members[0].parameter,
                value,
                runs: members.len(),
                ok_runs: ok.len(),
                mean_sum_semantic_rate_bps: mean(ok.iter().filter_map(|r| r.sum_semantic_rate_bps)),
                mean_transmit_power_w: mean(ok.iter().filter_map(|r| r.transmit_power_w)),
                mean_computation_power_w: mean(ok.iter().filter_map(|r| r.computation_power_w)),
                mean_outer_iterations: mean(ok.iter().filter_map(|r| r.outer_iterations.map(|n| n as f64))),
            }
        })
        .collect()
}

pub fn write_means<W: Write>(out: W, means: &[MeanRow]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MEANS_HEADER)?;
    for m in means {
        w.write_record([
            m.scheme.to_string(),
            param(m.parameter).to_string(),
            real(m.value),
            m.runs.to_string(),
            m.ok_runs.to_string(),
            real(m.mean_sum_semantic_rate_bps),
            real(m.mean_transmit_power_w),
            real(m.mean_computation_power_w),
            real(m.mean_outer_iterations),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock time of one run; kept out of `results.csv` so that file is
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub scheme: Scheme,
    pub parameter: Option<SweepParameter>,
    pub value: Option<f64>,
    pub seed: u64,
    pub wall_time_ms: f64,
}

pub fn write_timings<W: Write>(out: W, timings: &[Timing]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMINGS_HEADER)?;
    for t in timings {
        w.write_record([
            t.scheme.to_string(),
            param(t.parameter).to_string(),
            real(t.value),
            t.seed.to_string(),
            format!("{:.3}", t.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn axis_label(p: Option<SweepParameter>) -> &'static str {
    match p {
        Some(SweepParameter::CompPowerCoeff) => "computation power coefficient p0 (W)",
        Some(SweepParameter::MaxPowerDbm) => "maximum transmit power (dBm)",
        Some(SweepParameter::BandwidthHz) => "bandwidth (MHz)",
        Some(SweepParameter::NoisePowerDbm) => "noise power (dBm)",
        None => "value",
    }
}

fn title(s: Scheme) -> &'static str {
    match s {
        Scheme::PscRsma => "PSC-RSMA",
        Scheme::PscSdma => "PSC-SDMA",
        Scheme::NonSemantic => "Non-semantic",
    }
}

/// Gnuplot script drawing mean sum semantic rate against the swept value,
/// one line per scheme, from `means.csv` in the same directory.
pub fn plot_script(parameter: Option<SweepParameter>, schemes: &[Scheme]) -> String {
    let x = if parameter == Some(SweepParameter::BandwidthHz) {
        "(column(3)/1e6)"
    } else {
        "3"
    };
    let mut s = String::new();
    s.push_str("# gnuplot -c plot.gp   (reads means.csv, writes sum_rate.png)\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 800,560\n");
    s.push_str("set output 'sum_rate.png'\n");
    s.push_str(&format!("set xlabel '{}'\n", axis_label(parameter)));
    s.push_str("set ylabel 'mean sum semantic rate (Mbit/s)'\n");
    s.push_str("set key best\nset grid\n");
    let lines: Vec<String> = schemes
        .iter()
        .map(|sc| {
            format!(
                "'means.csv' skip 1 using {x}:(strcol(1) eq \"{}\" ? column(6)/1e6 : 1/0) with linespoints title '{}'",
                sc.as_str(),
                title(*sc)
            )
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&lines.join(", \\\n     "));
    s.push('\n');
    s
}
