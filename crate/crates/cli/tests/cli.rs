use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GEOMETRY: &str = "[geometry]\nlength = 140.0\nr_in = 10.0\nr_out = 50.0\n";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isotherm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cloak(extra: &str) -> String {
    format!(
        "{GEOMETRY}\n[mesh]\nlevel = 2\n\n[materials]\ninner = \"insulator\"\ndesign = \"emt\"\nouter = \"iron\"\n{extra}"
    )
}

/// Point coordinates and one scalar field from a legacy VTK file.
fn vtk_scalar(text: &str, name: &str) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut lines = text.lines();
    let mut pts = Vec::new();
    while let Some(l) = lines.next() {
        if let Some(n) = l.strip_prefix("POINTS ") {
            let n: usize = n.split_whitespace().next().unwrap().parse().unwrap();
            for _ in 0..n {
                let v: Vec<f64> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
                pts.push([v[0], v[1]]);
            }
        }
        if l == format!("SCALARS {name} double 1") {
            lines.next();
            let vals = (0..pts.len()).map(|_| lines.next().unwrap().parse().unwrap()).collect();
            return (pts, vals);
        }
    }
    panic!("field {name} missing");
}

#[test]
fn reference_plate_exports_linear_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "plate.toml",
        &format!("{GEOMETRY}\n[materials]\ninner = 67.0\ndesign = {{ law = \"constant\", kappa = 67.0 }}\nouter = 67.0\n"),
    );
    let out = dir.path().join("out");
    // rational patches are integrated inexactly, so a linear field is only
    // reproduced to round-off once the mesh is fine enough
    let o = run(&["solve", "--config", s(&cfg), "--out", s(&out), "--levels", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("fields.vtk")).unwrap();
    let (pts, t) = vtk_scalar(&text, "T");
    let (mut e, mut n) = (0.0, 0.0);
    for (p, v) in pts.iter().zip(&t) {
        let exact = 300.0 - 100.0 * (p[0] + 70.0) / 140.0;
        e += (v - exact).powi(2);
        n += exact * exact;
    }
    assert!((e / n).sqrt() < 1e-8, "{}", (e / n).sqrt());
    assert!(out.join("density.csv").exists());
}

#[test]
fn insulator_prints_unit_cloak_objective() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{GEOMETRY}\n[materials]\ninner = \"insulator\"\ndesign = {{ law = \"constant\", kappa = 67.0 }}\nouter = \"iron\"\n"
    );
    let cfg = config(dir.path(), "ins.toml", &body);
    let o = run(&["solve", "--config", s(&cfg), "--out", s(&dir.path().join("o")), "--levels", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l == "J_cloak = 1"), "{}", stdout(&o));
}

#[test]
fn invalid_radii_exit_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let body = cloak("").replace("r_in = 10.0", "r_in = 60.0");
    let cfg = config(dir.path(), "bad.toml", &body);
    let out = dir.path().join("out");
    let o = run(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert!(!out.exists());
}

#[test]
fn unknown_key_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = cloak("\n[optimizer]\nmax_iteration = 3\n");
    let line = body.lines().position(|l| l.starts_with("max_iteration")).unwrap() + 1;
    let cfg = config(dir.path(), "bad.toml", &body);
    let o = run(&["optimize", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(&format!("line {line}")));
}

#[test]
fn optimize_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", &cloak("\n[optimizer]\nmax_iterations = 8\n"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["optimize", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("stop: "));
        assert!(stdout(&o).contains("J_cloak = "));
    }
    for f in ["run.csv", "density.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let run_csv = fs::read_to_string(a.join("run.csv")).unwrap();
    assert!(run_csv.starts_with("iteration,J,J_cloak,projected_gradient_norm,step_norm,primal_solves\n"));

    // restart from the written density reproduces the final objective
    let final_j = run_csv.lines().last().unwrap().split(',').nth(1).unwrap().to_string();
    let restart = format!(
        "{}\n[design]\nrestart = \"{}\"\n",
        cloak(""),
        a.join("density.csv").display()
    );
    let cfg2 = config(dir.path(), "r.toml", &restart);
    let o = run(&["solve", "--config", s(&cfg2), "--out", s(&dir.path().join("r"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(&format!("J_cloak = {final_j}")), "{} vs {final_j}", stdout(&o));
    assert_eq!(
        fs::read(a.join("density.csv")).unwrap(),
        fs::read(dir.path().join("r/density.csv")).unwrap()
    );

    // and reconstruction accepts it
    let rec = dir.path().join("rec");
    let o = run(&["reconstruct", "--config", s(&cfg), "--density", s(&a.join("density.csv")), "--voxel", "20", "--out", s(&rec)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mask.pgm", "tessellation.pgm", "trimmed.pgm", "contours.csv", "voxels.csv"] {
        assert!(rec.join(f).exists(), "{f}");
    }
}

#[test]
fn concentrator_reports_psi() {
    let dir = tempfile::tempdir().unwrap();
    let body = cloak("\n[objective]\nkind = \"concentrator\"\n[optimizer]\nmax_iterations = 3\n")
        .replace("inner = \"insulator\"", "inner = \"iron\"");
    let cfg = config(dir.path(), "c.toml", &body);
    let o = run(&["optimize", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("Psi_cntr = ") && out.contains("J_cntr = "), "{out}");
}

#[test]
fn bidirectional_solves_twice_per_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let body = cloak(
        "reference_inclusion = \"insulator\"\n[bc2]\npreset = \"vertical\"\n[objective]\nkind = \"bidirectional\"\n[optimizer]\nmax_iterations = 4\n",
    )
    .replace("inner = \"insulator\"", "inner = \"iron\"");
    let cfg = config(dir.path(), "b.toml", &body);
    let out = dir.path().join("o");
    let o = run(&["optimize", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("run.csv")).unwrap();
    let solves: Vec<usize> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(solves[0], 2);
    assert!(solves.iter().all(|n| n % 2 == 0));
}

#[test]
fn gradcheck_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", &cloak(""));
    let o = run(&["gradcheck", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("max discrepancy"));
    let o = run(&["gradcheck", "--config", s(&cfg), "--epsilon", "0.2"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["gradcheck", "--config", s(&cfg), "--epsilon", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", &cloak("\n[optimizer]\nmax_iterations = 30\n"));
    let out = dir.path().join("o");
    let o = run(&["convergence", "--config", s(&cfg), "--levels", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = stdout(&o);
    assert!(t.starts_with("level\tdofs\tJ\tstop\terror\twithin_2pct\n"));
    let last = t.lines().nth(2).unwrap();
    assert!(last.starts_with("2\t") && last.contains("\t0e0\t"), "{t}");
    assert!(out.join("convergence.tsv").exists());
}

#[test]
fn reconstruct_rejects_empty_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", &cloak(""));
    let empty = config(dir.path(), "d.csv", "coefficient,x,y,value\n");
    let out = dir.path().join("o");
    let o = run(&["reconstruct", "--config", s(&cfg), "--density", s(&empty), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}
