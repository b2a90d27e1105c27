use thinstrip_core::scenario::{Geometry, PressureMode, TimeStep};
use thinstrip_core::{Checkpoint, ModelKind, ScenarioConfig, Simulation, Snapshot};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn curve_diff(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| match (p, q) {
            (Some(p), Some(q)) => (p - q).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

fn snapshot_diff(a: &Snapshot, b: &Snapshot) -> f64 {
    [
        curve_diff(&a.y_ff, &b.y_ff),
        curve_diff(&a.y_fs, &b.y_fs),
        max_diff(&a.c, &b.c),
        max_diff(&a.p, &b.p),
        max_diff(&a.k_f, &b.k_f),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn small_pf() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("bump_source").unwrap();
    cfg.params.eps_bar = 0.06;
    cfg.params.delta = 0.06;
    cfg.nx = 8;
    cfg.ny = 128;
    cfg.dt = TimeStep::Fixed(1e-3);
    cfg.t_end = 0.02;
    cfg.snapshots = vec![0.0, 0.01, 0.02];
    cfg
}

fn resume_matches(cfg: &ScenarioConfig, kind: ModelKind, t_split: f64) -> f64 {
    let full = Simulation::new(cfg, kind).unwrap().run().unwrap();
    let mut first = Simulation::new(cfg, kind).unwrap();
    first.run_until(t_split).unwrap();
    let json = serde_json::to_string(&first.checkpoint()).unwrap();
    let checkpoint: Checkpoint = serde_json::from_str(&json).unwrap();
    let rest = Simulation::resume(&checkpoint, None).unwrap().run().unwrap();
    let a = full.snapshots.last().unwrap();
    let b = rest.snapshots.last().unwrap();
    assert_eq!(a.t, b.t);
    snapshot_diff(a, b)
}

#[test]
fn sharp_resume_reproduces_the_uninterrupted_run() {
    let mut cfg = ScenarioConfig::preset("nwave").unwrap();
    cfg.nx = 64;
    cfg.t_end = 0.2;
    cfg.snapshots = vec![0.0, 0.1, 0.2];
    assert!(resume_matches(&cfg, ModelKind::Sharp, 0.1) <= 1e-12);
}

#[test]
fn phase_field_resume_reproduces_the_uninterrupted_run() {
    assert!(resume_matches(&small_pf(), ModelKind::PhaseField, 0.01) <= 1e-12);
}

#[test]
fn single_column_without_flow_keeps_its_masses() {
    let mut cfg = ScenarioConfig::preset("layered").unwrap();
    cfg.params.eps_bar = 0.06;
    cfg.params.delta = 0.06;
    cfg.params.da_bar = 0.0;
    cfg.nx = 1;
    cfg.ny = 128;
    cfg.pressure = PressureMode::Flux { q_f: 0.0 };
    cfg.dt = TimeStep::Fixed(1e-2);
    cfg.t_end = 0.5;
    cfg.snapshots = vec![0.0, 0.5];
    let out = Simulation::new(&cfg, ModelKind::PhaseField).unwrap().run().unwrap();
    let first = out.diagnostics.first().unwrap().mass;
    for d in &out.diagnostics {
        assert_eq!(d.q_f, 0.0);
        for i in 0..3 {
            assert!((d.mass[i] - first[i]).abs() <= 1e-10, "{:?} {:?}", d.mass, first);
        }
    }
    let last = out.snapshots.last().unwrap();
    assert!((last.y_ff[0].unwrap() + 0.3).abs() < cfg.params.eps_bar);
    assert!((last.y_fs[0].unwrap() + 0.7).abs() < cfg.params.eps_bar);
}

#[test]
fn phase_field_balances_close_with_a_source() {
    let out = Simulation::new(&small_pf(), ModelKind::PhaseField).unwrap().run().unwrap();
    assert_eq!(out.diagnostics.len(), 20);
    for d in &out.diagnostics {
        assert!(d.mass_defect.unwrap() <= 1e-10, "{d:?}");
        assert!(d.ion_defect.unwrap() <= 1e-10, "{d:?}");
        assert!(d.sum_defect <= 1e-12);
    }
}

#[test]
fn sharp_layered_equilibrium_is_stationary() {
    let mut cfg = ScenarioConfig::preset("layered").unwrap();
    cfg.nx = 32;
    cfg.t_end = 0.5;
    cfg.snapshots = vec![0.0, 0.5];
    let out = Simulation::new(&cfg, ModelKind::Sharp).unwrap().run().unwrap();
    assert!(snapshot_diff(&out.snapshots[0], &out.snapshots[1]) <= 1e-14);
    assert!(out.diagnostics.iter().all(|d| d.ion_defect.unwrap() <= 1e-12));
}

#[test]
fn sharp_widths_change_only_through_oversaturation() {
    let mut cfg = ScenarioConfig::preset("bump_source").unwrap();
    cfg.nx = 100;
    cfg.t_end = 0.02;
    cfg.snapshots = vec![0.0, 0.02];
    let mut sim = Simulation::new(&cfg, ModelKind::Sharp).unwrap();
    let s0 = sim.snapshot().unwrap();
    let mut prev = s0.clone();
    let mut exposure = vec![0.0; cfg.nx];
    let mut steps = 0;
    while sim.t() < cfg.t_end - 1e-12 {
        let d = sim.step(cfg.t_end).unwrap();
        let next = sim.snapshot().unwrap();
        for k in 0..cfg.nx {
            exposure[k] += d.dt * (prev.c[k] - 0.5);
            let shrink = next.y_fs[k].unwrap() - s0.y_fs[k].unwrap();
            assert!((shrink - cfg.params.da_bar * exposure[k]).abs() <= 1e-12);
            assert!(next.y_fs[k] >= prev.y_fs[k]);
            if steps == 0 {
                assert!(shrink.abs() <= 1e-10);
            }
        }
        prev = next;
        steps += 1;
    }
    let change = |lo: f64, hi: f64| {
        (0..cfg.nx)
            .filter(|k| (lo..hi).contains(&s0.x[*k]))
            .map(|k| prev.y_fs[k].unwrap() - s0.y_fs[k].unwrap())
            .fold(0.0, f64::max)
    };
    assert!(change(0.1, 0.3) > 5.0 * change(0.6, 0.95), "{} {}", change(0.1, 0.3), change(0.6, 0.95));
}

#[test]
fn nwave_shock_time_lies_in_the_expected_window() {
    let cfg = ScenarioConfig::preset("nwave").unwrap();
    let sim = Simulation::new(&cfg, ModelKind::Sharp).unwrap();
    let t_star = sim.t_star().unwrap();
    assert!(t_star > 0.3 && t_star <= 0.6, "{t_star}");
    assert!(matches!(cfg.geometry, Geometry::NWave { .. }));
}

#[test]
fn strict_mode_stops_past_the_shock() {
    let mut cfg = ScenarioConfig::preset("nwave").unwrap();
    cfg.nx = 50;
    cfg.strict = true;
    cfg.t_end = 0.6;
    cfg.snapshots = vec![0.0, 0.6];
    let err = Simulation::new(&cfg, ModelKind::Sharp).unwrap().run().unwrap_err();
    assert!(matches!(err.root(), thinstrip_core::Error::ValidityExceeded { .. }), "{err}");
}
