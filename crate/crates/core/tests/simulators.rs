use kinetic1d::environment::{sample_environment, Environment, GapDistSpec};
use kinetic1d::exact::{simulate_exact, simulate_exact_with, EventKind, ExactOptions};
use kinetic1d::model::ModelParams;
use kinetic1d::modified::simulate_modified;
use kinetic1d::oracle::fixed_step_events;

fn params(p: f64) -> ModelParams {
    ModelParams::new(1.0, p, GapDistSpec::exponential(1.0).unwrap()).unwrap()
}

#[test]
fn pruning_matches_full_scan_on_200_media() {
    for (k, p) in [0.2, 0.5, 0.8, 0.05].iter().enumerate() {
        let prm = params(*p);
        for idx in 0..50 {
            let env = sample_environment(&prm, 400, 1000 + k as u64, idx).unwrap();
            let a = simulate_exact_with(&env, &prm, 400, ExactOptions { pruning: true }).unwrap();
            let b = simulate_exact_with(&env, &prm, 400, ExactOptions { pruning: false }).unwrap();
            assert_eq!(a, b, "p={p} medium {idx}");
        }
    }
}

#[test]
fn exact_agrees_with_fixed_step_oracle() {
    let prm = params(0.4);
    for idx in 0..8 {
        let env = sample_environment(&prm, 8, 31, idx).unwrap();
        let rec = simulate_exact(&env, &prm, 8).unwrap();
        let oracle = fixed_step_events(&env, &prm, 8, 1e-5).unwrap();
        assert_eq!(rec.events.len(), oracle.len(), "medium {idx}");
        for (a, b) in rec.events.iter().zip(&oracle) {
            assert_eq!((a.kind, a.particle_id), (b.kind, b.particle_id));
            assert!((a.time - b.time).abs() < 1e-3);
        }
    }
}

#[test]
fn all_sticky_medium_gives_identical_dynamics() {
    let prm = params(1.0);
    let env = sample_environment(&prm, 20_000, 4, 0).unwrap();
    let rec = simulate_exact(&env, &prm, env.len()).unwrap();
    let m = simulate_modified(&env, &prm);
    assert!(rec.events.iter().all(|e| e.kind == EventKind::FirstSticky));
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    for k in 0..env.len() {
        assert!(rel(rec.first_contact_times[k], m.t_bar[k]) <= 1e-10);
        assert!(rel(rec.v_at_contact[k].powi(2), m.v2_in[k]) <= 1e-10);
        assert!(rel(rec.v_after_contact[k].powi(2), m.v2_out[k]) <= 1e-10);
        assert_eq!(rec.mass[k], m.mass[k]);
    }
}

#[test]
fn event_log_round_trips_through_csv() {
    let prm = params(0.3);
    let env = sample_environment(&prm, 200, 2, 0).unwrap();
    let rec = simulate_exact(&env, &prm, 200).unwrap();
    let mut buf = Vec::new();
    rec.write_events_csv(&mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "event_seq",
            "time",
            "kind",
            "particle_id",
            "V_before",
            "V_after",
            "v_neutral_before",
            "v_neutral_after",
            "mass_after",
            "Q"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), rec.events.len());
    for (row, e) in rows.iter().zip(&rec.events) {
        assert_eq!(row[1].parse::<f64>().unwrap(), e.time);
        assert_eq!(&row[2], e.kind.as_str());
    }
}

#[test]
fn environment_csv_feeds_the_simulators() {
    let prm = params(0.5);
    let env = sample_environment(&prm, 300, 8, 1).unwrap();
    let mut buf = Vec::new();
    env.write_csv(&mut buf).unwrap();
    let back = Environment::read_csv(buf.as_slice()).unwrap();
    assert_eq!(
        simulate_modified(&env, &prm).v2_out,
        simulate_modified(&back, &prm).v2_out
    );
}

#[test]
fn exact_times_increase_and_velocities_stay_positive() {
    let prm = params(0.5);
    let env = sample_environment(&prm, 5000, 12, 0).unwrap();
    let rec = simulate_exact(&env, &prm, 5000).unwrap();
    for w in rec.events.windows(2) {
        assert!(w[1].time >= w[0].time);
    }
    assert!(rec.events.iter().all(|e| e.v_after > 0.0));
    for r in &rec.recollisions {
        assert!(r.v_before_tracer > r.v_neutral);
        assert!(r.v_after_tracer < r.v_before_tracer);
    }
}
