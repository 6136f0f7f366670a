use proptest::prelude::*;
use tactix_core::activity::Participant::{self, A, B};
use tactix_core::trace::analysis::{resample, tandem_fraction};
use tactix_core::trace::{
    quantize, read_events, read_trace, session_summary, write_events, write_plot_csvs, write_trace, SummaryOptions,
    TraceError, TraceSample,
};

fn s(t: u64, who: Participant, x: f64, y: f64, zone: &str) -> TraceSample {
    TraceSample::new(t, who, x, y, 0.0, zone)
}

fn csv_of(samples: &[TraceSample], digest: Option<&str>) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, samples, digest).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn single_row_format() {
    let text = csv_of(&[s(1500, A, 102.3, 88.0, "nucleus")], None);
    assert_eq!(text, "t_ms,robot_id,x_mm,y_mm,theta_rad,zone_id\n1500,A,102.300,88.000,0.000,nucleus\n");
}

#[test]
fn digest_line_survives() {
    let text = csv_of(&[s(0, A, 1.0, 2.0, "cytosol")], Some("abc123"));
    let (samples, digest) = read_trace(text.as_bytes()).unwrap();
    assert_eq!(digest.as_deref(), Some("abc123"));
    assert_eq!(samples.len(), 1);
}

#[test]
fn out_of_order_rejected_both_ways() {
    let mut buf = Vec::new();
    let err = write_trace(&mut buf, &[s(20, A, 0.0, 0.0, "cytosol"), s(10, A, 0.0, 0.0, "cytosol")], None).unwrap_err();
    assert!(err.to_string().contains("non-monotone timestamp"), "{err}");

    let text = "t_ms,robot_id,x_mm,y_mm,theta_rad,zone_id\n20,B,0,0,0,cytosol\n10,B,0,0,0,cytosol\n";
    assert!(matches!(read_trace(text.as_bytes()), Err(TraceError::NonMonotone { robot: B, .. })));
    // Interleaved robots are each checked on their own clock.
    let ok = "t_ms,robot_id,x_mm,y_mm,theta_rad,zone_id\n20,A,0,0,0,cytosol\n10,B,0,0,0,cytosol\n";
    assert!(read_trace(ok.as_bytes()).is_ok());
}

#[test]
fn wrong_header_is_malformed() {
    let text = "t,robot,x,y,theta,zone\n0,A,0,0,0,cytosol\n";
    assert!(matches!(read_trace(text.as_bytes()), Err(TraceError::Malformed(_))));
}

#[test]
fn on_grid_samples_pass_through() {
    let trace: Vec<_> = (0..11)
        .flat_map(|i| [s(i * 100, A, i as f64, 2.0 * i as f64, "cytosol"), s(i * 100, B, 5.0, 7.5, "nucleus")])
        .collect();
    let al = resample(&trace, 10.0).unwrap();
    assert_eq!(al.len(), 11);
    for i in 0..11 {
        assert_eq!(al.t_ms[i], i as f64 * 100.0);
        assert_eq!(al.x1[i], i as f64);
        assert_eq!(al.y1[i], 2.0 * i as f64);
        assert_eq!(al.x2[i], 5.0);
    }
}

#[test]
fn midpoint_interpolation() {
    let trace = [s(0, A, 0.0, 0.0, "cytosol"), s(0, B, 0.0, 0.0, "cytosol"), s(1000, A, 10.0, 0.0, "cytosol"), s(1000, B, 0.0, 4.0, "cytosol")];
    let al = resample(&trace, 2.0).unwrap();
    assert_eq!(al.t_ms, [0.0, 500.0, 1000.0]);
    assert_eq!(al.x1[1], 5.0);
    assert_eq!(al.y2[1], 2.0);
}

#[test]
fn resample_guards() {
    let disjoint = [s(0, A, 0.0, 0.0, "cytosol"), s(100, A, 1.0, 0.0, "cytosol"), s(200, B, 0.0, 0.0, "cytosol"), s(300, B, 1.0, 0.0, "cytosol")];
    assert!(matches!(resample(&disjoint, 10.0), Err(TraceError::NoOverlap)));
    let only_a = [s(0, A, 0.0, 0.0, "cytosol"), s(100, A, 1.0, 0.0, "cytosol")];
    assert!(matches!(resample(&only_a, 10.0), Err(TraceError::MissingRobot)));
    assert!(matches!(resample(&disjoint, 0.0), Err(TraceError::BadRate)));
    assert!(matches!(resample(&[], 10.0), Err(TraceError::NoOverlap)));
}

/// Ten grid points; zones agree on exactly the first five.
fn half_tandem() -> Vec<TraceSample> {
    (0..10)
        .flat_map(|i| {
            let zb = if i < 5 { "nucleus" } else { "golgi" };
            [s(i * 100, A, i as f64, (i * i) as f64, "nucleus"), s(i * 100, B, (i % 3) as f64, i as f64, zb)]
        })
        .collect()
}

#[test]
fn tandem_fraction_fixtures() {
    assert_eq!(tandem_fraction(&resample(&half_tandem(), 10.0).unwrap()), 0.5);
    let same: Vec<_> = half_tandem().into_iter().map(|mut x| {
        x.zone_id = "nucleus".into();
        x
    }).collect();
    assert_eq!(tandem_fraction(&resample(&same, 10.0).unwrap()), 1.0);
    let never: Vec<_> = half_tandem().into_iter().map(|mut x| {
        x.zone_id = if x.robot_id == A { "nucleus".into() } else { "golgi".into() };
        x
    }).collect();
    assert_eq!(tandem_fraction(&resample(&never, 10.0).unwrap()), 0.0);
}

#[test]
fn summary_without_quiz_warns() {
    let opts = SummaryOptions {
        n_perm: 50,
        ..SummaryOptions::default()
    };
    let report = session_summary(&half_tandem(), &[], &opts).unwrap();
    assert!(report.quiz_duration_s.is_none());
    assert!(report.warnings.iter().any(|w| w.contains("quiz not finished")));
    assert_eq!(report.tandem_fraction, 0.5);
    assert_eq!(report.n_trace_samples, 20);
    let a_dwell = &report.dwell_s["A"];
    assert!((a_dwell["nucleus"] - 0.9).abs() < 1e-12);
    let json = serde_json::to_value(&report).unwrap();
    assert!(json.get("quiz_duration_s").is_none());
}

#[test]
fn plot_csvs_written() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_plot_csvs(dir.path(), &half_tandem()).unwrap();
    assert_eq!(paths.len(), 2);
    let a = std::fs::read_to_string(dir.path().join("A_xy.csv")).unwrap();
    assert_eq!(a.lines().count(), 11);
    assert!(a.lines().nth(2).unwrap().starts_with("100,1"));
}

#[test]
fn empty_event_log_round_trips() {
    let mut buf = Vec::new();
    write_events(&mut buf, &[]).unwrap();
    assert!(read_events(buf.as_slice()).unwrap().is_empty());
}

fn sample() -> impl Strategy<Value = (u64, bool, f64, f64, f64, usize)> {
    (0u64..1000, any::<bool>(), -1e4..1e4f64, -1e4..1e4f64, -3.2..3.2f64, 0usize..5)
}

proptest! {
    #[test]
    fn csv_round_trip_is_lossless(rows in prop::collection::vec(sample(), 0..80)) {
        const ZONES: [&str; 5] = ["nucleus", "golgi", "mitochondrion", "lysosome", "cytosol"];
        let mut t = [0u64; 2];
        let samples: Vec<_> = rows
            .into_iter()
            .map(|(dt, is_b, x, y, th, z)| {
                let who = if is_b { B } else { A };
                t[who as usize] += dt;
                TraceSample::new(t[who as usize], who, x, y, th, ZONES[z])
            })
            .collect();
        let text = csv_of(&samples, Some("d"));
        let (back, digest) = read_trace(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &samples);
        prop_assert_eq!(digest.as_deref(), Some("d"));
        for s in &back {
            prop_assert_eq!(s.x_mm, quantize(s.x_mm));
        }
    }
}
