use semopt_bench::results::{
    aggregate, plot_script, read_results, results_to_string, write_means, ResultRow, Status, MEANS_HEADER,
    RESULTS_HEADER,
};
use semopt_bench::runner::{batch_exit_code, sweep_points};
use semopt_core::config::{parse_config, SweepParameter, DEFAULT_CONFIG};
use semopt_core::Scheme;

fn row(scheme: Scheme, value: f64, seed: u64, rate: Option<f64>) -> ResultRow {
    ResultRow {
        scheme,
        parameter: Some(SweepParameter::CompPowerCoeff),
        value: Some(value),
        seed,
        status: if rate.is_some() { Status::Ok } else { Status::Infeasible },
        sum_semantic_rate_bps: rate,
        semantic_rates_bps: rate.map(|r| vec![0.25 * r; 4]).unwrap_or_default(),
        transmit_power_w: rate.map(|_| 0.4),
        computation_power_w: rate.map(|_| 0.6),
        outer_iterations: rate.map(|_| 3),
        detail: if rate.is_some() { String::new() } else { "sca stage failed".into() },
    }
}

#[test]
fn header_is_fixed() {
    let text = results_to_string(&[]);
    assert_eq!(
        text.trim_end(),
        "scheme,parameter,value,seed,status,sum_semantic_rate_bps,semantic_rates_bps,\
         transmit_power_w,computation_power_w,outer_iterations,detail"
    );
    assert_eq!(RESULTS_HEADER.len(), 11);
    assert_eq!(MEANS_HEADER[5], "mean_sum_semantic_rate_bps");
}

#[test]
fn round_trip_preserves_bits() {
    let mut rows = vec![
        row(Scheme::PscRsma, 0.1 + 0.2, u64::MAX, Some(4573610435.244112)),
        row(Scheme::PscSdma, 1e-300, 0, None),
        row(Scheme::NonSemantic, -60.0, 7, Some(1.0 / 3.0)),
    ];
    rows[1].detail = "quoted \"x\", comma\nnewline".into();
    rows[2].parameter = None;
    rows[2].value = None;
    let text = results_to_string(&rows);
    let back = read_results(text.as_bytes()).unwrap();
    assert_eq!(back, rows);
    assert_eq!(back[0].value.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
    assert_eq!(results_to_string(&back), text);
}

#[test]
fn rejects_a_foreign_header() {
    assert!(read_results("a,b\n1,2\n".as_bytes()).is_err());
    let bad = results_to_string(&[row(Scheme::PscRsma, 1.0, 1, Some(1.0))]).replace(",ok,", ",fine,");
    assert!(read_results(bad.as_bytes()).unwrap_err().to_string().contains("status"));
}

#[test]
fn means_average_ok_rows_only() {
    let rows = vec![
        row(Scheme::PscRsma, 1.0, 1, Some(1.0)),
        row(Scheme::PscRsma, 1.0, 2, Some(2.0)),
        row(Scheme::PscRsma, 1.0, 3, None),
        row(Scheme::PscRsma, 2.0, 1, None),
        row(Scheme::NonSemantic, 1.0, 1, Some(0.1)),
    ];
    let m = aggregate(&rows);
    assert_eq!(m.len(), 3);
    assert_eq!((m[0].runs, m[0].ok_runs), (3, 2));
    assert_eq!(m[0].mean_sum_semantic_rate_bps, Some(1.5));
    assert_eq!(m[1].mean_sum_semantic_rate_bps, None);
    assert_eq!(m[2].mean_sum_semantic_rate_bps, Some(0.1));
    let mut buf = Vec::new();
    write_means(&mut buf, &m).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("psc_rsma,comp_power_coeff,1,3,2,1.5,"));
    assert!(text.lines().nth(2).unwrap().contains(",2,1,0,,,,"));
}

#[test]
fn rows_sort_by_scheme_value_seed() {
    let mut rows = vec![
        row(Scheme::NonSemantic, 1.0, 1, None),
        row(Scheme::PscRsma, 2.0, 1, None),
        row(Scheme::PscRsma, 1.0, 2, None),
        row(Scheme::PscRsma, 1.0, 1, None),
    ];
    rows.sort_by(ResultRow::order);
    let keys: Vec<(Scheme, f64, u64)> = rows.iter().map(|r| (r.scheme, r.value.unwrap(), r.seed)).collect();
    assert_eq!(
        keys,
        vec![
            (Scheme::PscRsma, 1.0, 1),
            (Scheme::PscRsma, 1.0, 2),
            (Scheme::PscRsma, 2.0, 1),
            (Scheme::NonSemantic, 1.0, 1)
        ]
    );
}

#[test]
fn plot_script_reads_means() {
    let s = plot_script(Some(SweepParameter::BandwidthHz), &Scheme::ALL);
    assert!(s.contains("'means.csv'"));
    assert!(s.contains("MHz"));
    for sc in Scheme::ALL {
        assert!(s.contains(&format!("\"{}\"", sc.as_str())));
    }
}

#[test]
fn p0_sweep_of_ten_seeds_has_120_rows() {
    let exp = parse_config(
        DEFAULT_CONFIG,
        &[r#"experiment.sweep={"parameter":"comp_power_coeff","values":[0.5,1,2,4]}"#.to_string()],
    )
    .unwrap();
    let seeds: Vec<u64> = (1..=10).collect();
    assert_eq!(sweep_points(&exp, &seeds).len(), 120);
}

#[test]
fn exit_code_reflects_total_failure_only() {
    let ok = row(Scheme::PscRsma, 1.0, 1, Some(1.0));
    let inf = row(Scheme::PscRsma, 1.0, 2, None);
    let mut num = inf.clone();
    num.status = Status::NumericalFailure;
    assert_eq!(batch_exit_code(&[ok.clone(), inf.clone(), num.clone()]), 0);
    assert_eq!(batch_exit_code(&[inf.clone(), inf.clone()]), 2);
    assert_eq!(batch_exit_code(&[inf, num]), 3);
}
