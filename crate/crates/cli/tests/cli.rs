use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use online_spo::verify::VerifyHooks;
use online_spo::CostVector;
use online_spo_cli::cmd_verify;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn column(header: &str, name: &str) -> usize {
    header.split(',').position(|h| h == name).unwrap()
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_online-spo"));
    c.env_remove(online_spo_cli::WORKERS_ENV);
    c
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

const ONE_ARM: &str = r#"
horizons = [40]
trials = 1
seed = 11

[instance]
family = "knapsack"

[[arms]]
loss = "spo_plus"
predictor = "linear"
"#;

#[test]
fn single_arm_single_trial_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", ONE_ARM);
    let out = dir.path().join("r.csv");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "instance,arm,loss,predictor,T,trial,seed,tau,obj,obj_hindsight,rel_regret,infeasibility,dv_measured,wall_ms"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("knapsack,spo_plus/linear,spo_plus,linear,40,0,"));
}

const GRID: &str = r#"
horizons = [30, 60]
trials = 3
seed = 5

[instance]
family = "longest_path"

[[arms]]
loss = "ls_cost"
predictor = "linear"

[[arms]]
predictor = "saa"

[[arms]]
predictor = "hindsight"
"#;

#[test]
fn rerun_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", GRID);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    assert!(run(&cfg, &a, &["--workers", "1"]).status.success());
    assert!(run(&cfg, &b, &["--workers", "1"]).status.success());
    assert!(run(&cfg, &c, &["--workers", "3"]).status.success());
    let a = fs::read(&a).unwrap();
    assert_eq!(a, fs::read(&b).unwrap());
    assert_eq!(a, fs::read(&c).unwrap());
    // 3 arms x 2 horizons x 3 trials
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 18);
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", ONE_ARM);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(run(&cfg, &a, &[]).status.success());
    assert!(run(&cfg, &b, &["--seed", "12"]).status.success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn hindsight_arm_has_zero_regret_and_soft_rows_have_infeasibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", GRID);
    let out = dir.path().join("r.csv");
    assert!(run(&cfg, &out, &[]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let (arm, rr, inf) = (column(header, "arm"), column(header, "rel_regret"), column(header, "infeasibility"));
    let mut hindsight = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert!(!f[inf].is_empty());
        if f[arm] == "hindsight" {
            hindsight += 1;
            assert_eq!(f[rr].parse::<f64>().unwrap(), 0.0);
        }
    }
    assert_eq!(hindsight, 6);
}

#[test]
fn hard_rows_leave_infeasibility_empty_and_timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", ONE_ARM);
    let out = dir.path().join("r.csv");
    assert!(run(&cfg, &out, &[]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let row = text.lines().nth(1).unwrap();
    let f: Vec<&str> = row.split(',').collect();
    assert_eq!(f[11], "");
    assert_eq!(f[13], "");

    let timed = write(dir.path(), "t.toml", &format!("record_timing = true\n{ONE_ARM}"));
    assert!(run(&timed, &out, &[]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let f: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(f[13].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn malformed_config_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "horizons = [10]\ntrials = \"many\"\n");
    let o = run(&cfg, &dir.path().join("r.csv"), &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&dir.path().join("nope.toml"), &dir.path().join("r.csv"), &[]);
    assert!(!o.status.success());
}

fn csv_with(rows: &[(&str, usize, f64)]) -> String {
    let mut s = String::from("instance,arm,loss,predictor,T,trial,seed,tau,obj,obj_hindsight,rel_regret,infeasibility,dv_measured,wall_ms\n");
    for (i, (arm, t, rr)) in rows.iter().enumerate() {
        s.push_str(&format!("knapsack,{arm},,saa,{t},{i},0,{t},1e0,1e0,{rr:.8e},,1e0,\n"));
    }
    s
}

fn plot(dir: &Path, csv: &str) -> (Output, String) {
    let csv_path = write(dir, "r.csv", csv);
    let svg = dir.join("r.svg");
    let o = bin().arg("plot").arg(&csv_path).arg(&svg).output().unwrap();
    let text = fs::read_to_string(&svg).unwrap_or_default();
    (o, text)
}

fn attr<'a>(tag: &'a str, name: &str) -> &'a str {
    let key = format!("{name}=\"");
    let start = tag.find(&key).unwrap() + key.len();
    let end = start + tag[start..].find('"').unwrap();
    &tag[start..end]
}

fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(|l| {
            attr(l, "points")
                .split(' ')
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn one_arm_three_horizons_gives_one_three_point_polyline() {
    let dir = tempfile::tempdir().unwrap();
    let (o, svg) = plot(dir.path(), &csv_with(&[("saa", 10, 0.5), ("saa", 20, 0.4), ("saa", 30, 0.3)]));
    assert!(o.status.success());
    let lines = polylines(&svg);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0].len(), 3);
    assert!(svg.contains(r#"class="axis-label""#));
    assert!(svg.contains(">T</text>"));
    assert!(svg.contains(">relative regret</text>"));
    assert_eq!(svg.matches("<polygon class=\"band\"").count(), 1);
}

#[test]
fn two_arms_give_two_legend_entries() {
    let dir = tempfile::tempdir().unwrap();
    let (o, svg) = plot(dir.path(), &csv_with(&[("saa", 10, 0.5), ("spo_plus/linear", 10, 0.3)]));
    assert!(o.status.success());
    assert_eq!(svg.matches("class=\"legend-entry\"").count(), 2);
}

#[test]
fn constant_regret_is_horizontal_at_its_value() {
    let dir = tempfile::tempdir().unwrap();
    let (o, svg) = plot(dir.path(), &csv_with(&[("saa", 10, 0.2), ("saa", 20, 0.2), ("saa", 40, 0.2)]));
    assert!(o.status.success());
    let panel = svg.lines().find(|l| l.starts_with("<g class=\"panel\"")).unwrap();
    let num = |n: &str| attr(panel, n).parse::<f64>().unwrap();
    let (ymin, ymax, top, bottom) = (num("data-ymin"), num("data-ymax"), num("data-top"), num("data-bottom"));
    let expected = bottom - (0.2 - ymin) / (ymax - ymin) * (bottom - top);
    let line = &polylines(&svg)[0];
    for &(_, y) in line {
        assert!((y - expected).abs() < 0.01, "{y} vs {expected}");
    }
    assert!(line.windows(2).all(|w| w[0].0 < w[1].0));
}

#[test]
fn soft_results_get_infeasibility_panel() {
    let dir = tempfile::tempdir().unwrap();
    let csv_text = "instance,arm,T,rel_regret,infeasibility\nlongest_path,saa,10,1e-1,5e-2\nlongest_path,saa,20,1e-1,2e-2\n";
    let (o, svg) = plot(dir.path(), csv_text);
    assert!(o.status.success());
    assert_eq!(svg.matches("class=\"panel\"").count(), 2);
    assert!(svg.contains("<polyline class=\"infeasibility\""));
}

#[test]
fn empty_csv_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = plot(dir.path(), "instance,arm,T,rel_regret,infeasibility\n");
    assert!(!o.status.success());
}

#[test]
fn run_then_plot_writes_svg_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", GRID);
    let out = dir.path().join("r.csv");
    assert!(run(&cfg, &out, &[]).status.success());
    let svg = dir.path().join("r.svg");
    let o = bin().arg("plot").arg(&out).arg(&svg).output().unwrap();
    assert!(o.status.success());
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("class=\"legend-entry\"").count(), 3);
    assert_eq!(polylines(&text).len(), 6);
}

#[test]
fn verify_passes_quickly() {
    let start = Instant::now();
    let o = bin().arg("verify").output().unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{table}");
    assert!(table.lines().all(|l| l.starts_with("PASS")));
    assert!(elapsed < 60.0, "{elapsed} s");
}

fn flipped(
    c_hat: &CostVector,
    c: &CostVector,
    oracle: &dyn online_spo::DecisionOracle,
) -> online_spo::Result<nalgebra::DVector<f64>> {
    online_spo::losses::spo_plus_subgrad_cost(c_hat, c, oracle).map(|g| -g)
}

#[test]
fn verify_catches_sign_flip() {
    let (ok, table) = cmd_verify(&VerifyHooks { spo_plus_subgrad: flipped });
    assert!(!ok);
    assert!(table.lines().any(|l| l.starts_with("FAIL") && l.contains("subgradient")));
}

#[test]
fn readme_config_example_parses() {
    let readme = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let start = readme.find("```toml\n").unwrap() + "```toml\n".len();
    let end = start + readme[start..].find("```").unwrap();
    let config = online_spo_cli::RunConfig::parse(&readme[start..end]).unwrap();
    assert_eq!(config.horizons, vec![500, 1000, 2000]);
    assert!(config.plan(1).is_ok());
}
