use std::path::Path;
use std::process::{Command, Output};

use flsbathy::encoding::Bounds2;
use flsbathy::raster::HeightRaster;

fn flsbathy(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flsbathy")).args(args.iter().map(|a| a.as_ref())).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_bump_grid(path: &Path) {
    HeightRaster::from_fn(&Bounds2::new(0.0, 0.0, 4.0, 4.0), 0.1, |x, y| (-((x - 2.0).powi(2) + (y - 2.0).powi(2))).exp()).unwrap().save(path).unwrap();
}

#[test]
fn eval_of_identical_grids_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("x.grid");
    write_bump_grid(&g);
    let o = flsbathy(&[&"eval", &g, &g]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("MAE\tSTD\tSSIM"));
    let v: Vec<f64> = lines.next().unwrap().split('\t').map(|t| t.parse().unwrap()).collect();
    assert_eq!(v, vec![0.0, 0.0, 1.0]);

    let o = flsbathy(&[&"eval", &g, &g, &"--inner", &"1.0"]);
    assert_eq!(o.status.code(), Some(0));
    let o = flsbathy(&[&"eval", &g, &g, &"--inner", &"3.0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(flsbathy(&[&"frobnicate"]).status.code(), Some(2));
    assert_eq!(flsbathy(&[]).status.code(), Some(2));
    let o = flsbathy(&[&"eval", &"/nonexistent/a.grid", &"/nonexistent/b.grid"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/a.grid"));
    let o = flsbathy(&[&"grid", &"/nonexistent/m.ckpt", &"0,0,1,1", &"0.1", &"/tmp/never.grid"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[sonar]\nn_beams = \"many\"\n").unwrap();
    let o = flsbathy(&[&"simulate", &cfg, &dir.path().join("ds")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(flsbathy(&[&"--help"]).status.success());
}

const RUN_CONFIG: &str = r#"
seed = 2

[sonar]
r_max = 10.0
n_beams = 16
n_bins = 32

[scene]
kind = "minirocks"
n_bumps = 3

[survey]
spacing = 10.0
frame_rate = 0.5

[synth]
fan_rays = 16

[sampling]
n_arc_stratified = 4
n_arc_importance = 4
n_ray = 8

[encoding]
levels = 4
log2_table_size = 10
n_min = 4
n_max = 32

[network]
height_width = 16
radiance_width = 16

[beam]
k_theta = 4
k_phi = 3

[train]
total_steps = 20
batch_frames = 2
checkpoint_every = 10
"#;

#[test]
fn simulate_train_grid_eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("run.toml");
    std::fs::write(&cfg, RUN_CONFIG).unwrap();
    let ds = root.join("ds");
    let o = flsbathy(&[&"simulate", &cfg, &ds]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["intrinsics.txt", "poses.txt", "altimeter.txt", "truth.grid", "frames/000000.img"] {
        assert!(ds.join(f).exists(), "{f}");
    }

    let run = root.join("run");
    let o = flsbathy(&[&"train", &cfg, &ds, &run]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = run.join("model.ckpt");
    assert!(ckpt.exists() && run.join("checkpoints/step_000020.ckpt").exists());
    assert_eq!(std::fs::read_to_string(run.join("loss.csv")).unwrap().lines().count(), 21);

    let est = root.join("est.grid");
    let o = flsbathy(&[&"grid", &ckpt, &"0,0,20,20", &"0.1", &est, &"--dataset", &ds]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = flsbathy(&[&"eval", &est, &ds.join("truth.grid"), &"--inner", &"3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let row: Vec<f64> = stdout(&o).lines().nth(1).unwrap().split('\t').map(|t| t.parse().unwrap()).collect();
    assert!(row.iter().all(|v| v.is_finite()) && row[0] >= 0.0 && row[1] >= 0.0);

    let img = root.join("f.img");
    let o = flsbathy(&[&"render", &ckpt, &ds, &"1", &img, &"--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let frame = flsbathy::dataset::SonarFrame::load(&img).unwrap();
    assert_eq!((frame.n_bins, frame.n_beams), (32, 16));
    assert_eq!(flsbathy(&[&"render", &ckpt, &ds, &"99999", &img]).status.code(), Some(2));

    let csv = root.join("beam.csv");
    assert!(flsbathy(&[&"beampattern", &ckpt, &csv]).status.success());
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("axis,angle_deg,beta\n"));
    let csv = root.join("grad.csv");
    assert!(flsbathy(&[&"gradmap", &ckpt, &"2,2,4,4", &"0.5", &csv]).status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 16);
}

#[test]
fn shipped_config_matches_the_desk_setup() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/minirocks.toml");
    let c = flsbathy::evalcli::RunConfig::load(&path).unwrap();
    assert_eq!(c.simulate.survey.frame_rate, 8.0);
    assert_eq!(c.trainer.train.total_steps, 3000);
    assert_eq!(c.trainer.losses.w_reg, 0.01);
    assert_eq!(c.trainer.train.lr.interval, 300);
}
