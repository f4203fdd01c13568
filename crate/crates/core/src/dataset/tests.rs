use super::*;
use std::io::Write;

fn sample(env: Environment, obstacle: Obstacle, label: f64) -> CirSample {
    let mut cir = vec![0.0; WINDOW_LEN];
    cir[PRE_PEAK] = 1.0;
    CirSample::new(
        cir,
        5.0 + label,
        5.0,
        env,
        obstacle,
        obstacle == Obstacle::None,
    )
    .unwrap()
}

#[test]
fn window_impulse() {
    let mut raw = vec![0.0; 300];
    raw[30] = 1.0;
    let w = window_cir(&raw, 0.4).unwrap();
    assert_eq!(w.len(), 157);
    assert_eq!(w[5], 1.0);
    assert_eq!(w.iter().filter(|&&v| v != 0.0).count(), 1);
    // covers raw indices 25..=181
    let ramp: Vec<f64> = (0..300)
        .map(|i| if i >= 30 { 1.0 + i as f64 } else { 0.0 })
        .collect();
    let w = window_cir(&ramp, 1e-9).unwrap();
    assert_eq!(w[5], 31.0);
    assert_eq!(w[156], 182.0);
}

#[test]
fn window_pads_left() {
    let mut raw = vec![0.0; 100];
    raw[2] = 1.0;
    let w = window_cir(&raw, 0.4).unwrap();
    assert_eq!(&w[..3], &[0.0, 0.0, 0.0]);
    assert_eq!(w[5], 1.0);
}

#[test]
fn window_pads_right() {
    let mut raw = vec![0.0; 50];
    raw[45] = 2.0;
    raw[49] = 1.0;
    let w = window_cir(&raw, 0.4).unwrap();
    assert_eq!(w[9], 1.0);
    assert!(w[10..].iter().all(|&v| v == 0.0));
}

#[test]
fn window_anchors_on_first_crossing() {
    let mut raw = vec![0.0; 300];
    raw[40] = 0.5;
    raw[90] = 1.0;
    let w = window_cir(&raw, 0.4).unwrap();
    assert_eq!(w[5], 0.5);
    assert_eq!(w[55], 1.0);
}

#[test]
fn window_rejects_zero_trace() {
    assert!(window_cir(&[0.0; 20], 0.4).is_err());
    assert!(window_cir(&[1.0; 20], 0.0).is_err());
}

#[test]
fn normalize_examples() {
    let mut s = sample(Environment::BigRoom, Obstacle::None, 0.1);
    s.cir[10] = 2.0;
    let n = normalize(&s).unwrap();
    assert_eq!(n.cir[10], 1.0);
    assert_eq!(n.cir[5], 0.5);
    assert_eq!(normalize(&n).unwrap(), n);
    let mut z = s.clone();
    z.cir.iter_mut().for_each(|v| *v = 0.0);
    assert!(normalize(&z).is_err());
}

#[test]
fn truncate_examples() {
    let cir: Vec<f64> = (0..157).map(|i| i as f64).collect();
    assert_eq!(truncate_to_k(&cir, 157).unwrap(), cir);
    assert_eq!(truncate_to_k(&cir, 128).unwrap(), cir[..128].to_vec());
    assert_eq!(
        truncate_to_k(&cir, 8).unwrap(),
        (0..8).map(|i| i as f64).collect::<Vec<_>>()
    );
    assert!(truncate_to_k(&cir, 0).is_err());
    assert!(truncate_to_k(&cir, 158).is_err());
}

#[test]
fn sample_invariants() {
    let cir = vec![0.5; WINDOW_LEN];
    let mk = |cir: Vec<f64>, dm, dt| {
        CirSample::new(cir, dm, dt, Environment::Outdoor, Obstacle::None, true)
    };
    assert!(mk(cir.clone(), 1.0, 1.0).is_ok());
    assert!(mk(cir.clone(), 1.0, 0.0).is_err());
    assert!(mk(cir.clone(), 12.0, 1.0).is_err());
    assert!(mk(vec![0.5; 156], 1.0, 1.0).is_err());
    let mut neg = cir;
    neg[3] = -0.1;
    assert!(mk(neg, 1.0, 1.0).is_err());
    assert!((sample(Environment::BigRoom, Obstacle::Wood, 0.25).label() - 0.25).abs() < 1e-12);
}

fn mixed() -> Vec<CirSample> {
    let mut v = Vec::new();
    for (i, env) in Environment::ALL.into_iter().enumerate() {
        for j in 0..10 {
            let obs = Obstacle::ALL[(i + j) % 6];
            v.push(sample(env, obs, 0.01 * j as f64));
        }
    }
    v
}

#[test]
fn paper_default_split() {
    let data = mixed();
    let s = split(&data, SplitPolicy::PaperDefault);
    assert!(s
        .test
        .iter()
        .all(|x| x.environment == Environment::MediumRoom));
    assert!(s
        .train
        .iter()
        .all(|x| matches!(x.environment, Environment::BigRoom | Environment::SmallRoom)));
    assert_eq!(s.train.len() + s.test.len(), 30);
    assert_eq!(s.test.len(), 10);
}

#[test]
fn environment_and_obstacle_splits() {
    let data = mixed();
    let s = split(&data, SplitPolicy::ByEnvironment(Environment::Outdoor));
    assert_eq!(s.train.len(), 10);
    assert_eq!(s.test.len(), 40);
    assert!(s.test.iter().all(|x| x.environment != Environment::Outdoor));
    let s = split(&data, SplitPolicy::ByObstacle(Obstacle::Glass));
    assert!(s.train.iter().all(|x| x.obstacle == Obstacle::Glass));
    assert_eq!(s.train.len() + s.test.len(), data.len());
}

#[test]
fn stratified_split_is_deterministic_partition() {
    let data = mixed();
    let p = SplitPolicy::Stratified { frac: 0.8, seed: 3 };
    let a = split(&data, p);
    let b = split(&data, p);
    assert_eq!(a, b);
    assert_eq!(a.train.len() + a.test.len(), data.len());
    assert_ne!(
        split(&data, SplitPolicy::Stratified { frac: 0.8, seed: 4 }).train,
        a.train
    );
    // each (env, los) stratum keeps its proportion
    for env in Environment::ALL {
        let n = a.train.iter().filter(|x| x.environment == env).count();
        assert!((7..=9).contains(&n), "{env}: {n}");
    }
}

#[test]
fn split_policy_parsing() {
    assert_eq!(
        "paper_default".parse::<SplitPolicy>().unwrap(),
        SplitPolicy::PaperDefault
    );
    assert_eq!(
        "env:outdoor".parse::<SplitPolicy>().unwrap(),
        SplitPolicy::ByEnvironment(Environment::Outdoor)
    );
    assert_eq!(
        "obstacle:wood".parse::<SplitPolicy>().unwrap(),
        SplitPolicy::ByObstacle(Obstacle::Wood)
    );
    assert_eq!(
        "stratified:0.7:9".parse::<SplitPolicy>().unwrap(),
        SplitPolicy::Stratified { frac: 0.7, seed: 9 }
    );
    assert!("stratified:1.5".parse::<SplitPolicy>().is_err());
    assert!("random".parse::<SplitPolicy>().is_err());
}

fn csv_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn canonical_header() -> String {
    let mut h = "d_meas,d_true,env,obstacle,los".to_string();
    for i in 0..157 {
        h.push_str(&format!(",cir_{i}"));
    }
    h
}

fn canonical_row(dm: f64, dt: f64, env: &str, obs: &str, los: u8) -> String {
    let mut r = format!("{dm},{dt},{env},{obs},{los}");
    for i in 0..157 {
        r.push_str(&format!(",{}", if i == 5 { 1.0 } else { 0.01 }));
    }
    r
}

#[test]
fn import_well_formed() {
    let text = format!(
        "{}\n{}\n{}\n{}\n",
        canonical_header(),
        canonical_row(5.1, 5.0, "big_room", "none", 1),
        canonical_row(3.4, 3.0, "medium_room", "wood", 0),
        canonical_row(2.0, 2.05, "ttw", "other", 0)
    );
    let f = csv_file(&text);
    let rep = import_csv(f.path(), &ColumnMap::default()).unwrap();
    assert_eq!(rep.samples.len(), 3);
    assert!(rep.rejected.is_empty());
    assert!(!rep.windowed);
    assert_eq!(rep.samples[1].obstacle, Obstacle::Wood);
    assert!((rep.samples[1].label() - 0.4).abs() < 1e-12);
}

#[test]
fn import_rejects_bad_rows_with_line_numbers() {
    let mut bad_cell = canonical_row(5.0, 5.0, "big_room", "none", 1);
    bad_cell = bad_cell.replacen(",0.01", ",abc", 1);
    let text = format!(
        "{}\n{}\n{}\n{}\n{}\n",
        canonical_header(),
        canonical_row(5.1, 5.0, "big_room", "none", 1),
        canonical_row(1.0, 0.0, "big_room", "none", 1),
        bad_cell,
        canonical_row(1.0, 1.0, "attic", "none", 1)
    );
    let f = csv_file(&text);
    let rep = import_csv(f.path(), &ColumnMap::default()).unwrap();
    assert_eq!(rep.samples.len(), 1);
    let lines: Vec<u64> = rep.rejected.iter().map(|e| e.line).collect();
    assert_eq!(lines, vec![3, 4, 5]);
    assert!(rep.rejected[0].reason.contains("true range"));
    assert!(rep.rejected[1].reason.contains("not a number"));
    assert!(rep.error_text().contains("line 5"));
}

#[test]
fn import_missing_column_is_an_error() {
    let f = csv_file("d_meas,env,obstacle,los,cir_0\n1,big_room,none,1,0.5\n");
    assert!(matches!(
        import_csv(f.path(), &ColumnMap::default()),
        Err(Error::Data(_))
    ));
}

#[test]
fn import_windows_raw_traces_and_maps_columns() {
    let mut text = "meas,truth,room,material".to_string();
    for i in 0..200 {
        text.push_str(&format!(",amp{i}"));
    }
    text.push('\n');
    text.push_str("4.3,4.0,small_room,aluminium");
    for i in 0..200 {
        text.push_str(if i == 60 { ",2.0" } else { ",0.0" });
    }
    text.push('\n');
    let f = csv_file(&text);
    let map = ColumnMap {
        measured_range: "meas".into(),
        true_range: "truth".into(),
        environment: "room".into(),
        obstacle: "material".into(),
        los: None,
        cir_prefix: "amp".into(),
        ..ColumnMap::default()
    };
    let rep = import_csv(f.path(), &map).unwrap();
    assert!(rep.windowed);
    let s = &rep.samples[0];
    assert_eq!(s.cir[5], 2.0);
    assert!(!s.los);
}

#[test]
fn csv_round_trip() {
    let data = synthesize(&SynthConfig {
        per_environment: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    write_csv(&p, &data).unwrap();
    let back = import_csv(&p, &ColumnMap::default()).unwrap();
    assert!(back.rejected.is_empty());
    assert_eq!(back.samples, data);
}

#[test]
fn synth_is_deterministic_and_valid() {
    let cfg = SynthConfig {
        per_environment: 40,
        seed: 5,
        ..SynthConfig::default()
    };
    let a = synthesize(&cfg).unwrap();
    assert_eq!(a, synthesize(&cfg).unwrap());
    assert_eq!(a.len(), 200);
    for s in &a {
        s.validate().unwrap();
        assert!(
            s.cir[PRE_PEAK] >= DEFAULT_PEAK_FRAC * s.cir.iter().cloned().fold(0.0, f64::max) * 0.5
        );
    }
    let nlos_mean = a
        .iter()
        .filter(|s| !s.los && s.environment != Environment::Ttw)
        .map(|s| s.label())
        .sum::<f64>()
        / a.iter()
            .filter(|s| !s.los && s.environment != Environment::Ttw)
            .count() as f64;
    assert!(nlos_mean > 0.1, "NLoS is positively biased: {nlos_mean}");
}

#[test]
fn pca_rank_one() {
    let dir: Vec<f64> = (0..157).map(|i| ((i as f64) * 0.1).sin()).collect();
    let data: Vec<Vec<f64>> = (0..50)
        .map(|n| dir.iter().map(|d| d * (n as f64 - 20.0)).collect())
        .collect();
    let p = pca_project(&data, 3).unwrap();
    assert!(p.explained_variance[0] >= 0.999);
    assert!(p
        .explained_variance
        .windows(2)
        .all(|w| w[0] >= w[1] - 1e-12));
}

#[test]
fn pca_isotropic() {
    let mut r = rng::seeded(17);
    let data: Vec<Vec<f64>> = (0..10_000)
        .map(|_| (0..157).map(|_| rng::normal(&mut r)).collect())
        .collect();
    let p = pca_project(&data, 3).unwrap();
    for f in &p.explained_variance {
        assert!(*f < 0.02, "{f}");
    }
}

#[test]
fn pca_order_invariant() {
    let mut r = rng::seeded(2);
    let data: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            (0..10)
                .map(|j| rng::normal(&mut r) * (10 - j) as f64)
                .collect()
        })
        .collect();
    let a = pca_project(&data, 3).unwrap();
    let rev: Vec<Vec<f64>> = data.iter().rev().cloned().collect();
    let b = pca_project(&rev, 3).unwrap();
    for (pa, pb) in a.projections.iter().zip(b.projections.iter().rev()) {
        for (x, y) in pa.iter().zip(pb) {
            assert!((x.abs() - y.abs()).abs() < 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn pca_errors() {
    assert!(pca_project(&[vec![1.0, 2.0, 3.0]], 3).is_err());
    assert!(pca_project(&[vec![1.0], vec![2.0]], 2).is_err());
    let z = pca_project(&vec![vec![1.0; 4]; 5], 2).unwrap();
    assert!(z.explained_variance.iter().all(|v| *v == 0.0));
}

#[test]
fn examples_are_normalised_and_truncated() {
    let mut s = sample(Environment::BigRoom, Obstacle::None, 0.1);
    s.cir[20] = 4.0;
    let ex = to_examples(&[s], 16).unwrap();
    assert_eq!(ex[0].input.len(), 16);
    assert_eq!(ex[0].input[5], 0.25);
    assert!((ex[0].target - 0.1).abs() < 1e-12);
}

#[test]
fn names_round_trip() {
    for e in Environment::ALL {
        assert_eq!(e.name().parse::<Environment>().unwrap(), e);
    }
    for o in Obstacle::ALL {
        assert_eq!(o.name().parse::<Obstacle>().unwrap(), o);
    }
    assert_eq!("LoS".parse::<Obstacle>().unwrap(), Obstacle::None);
}
