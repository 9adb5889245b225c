use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hybridaug::cli::run_with;
use hybridaug::plot::parse_loss_csv;
use hybridaug_core::sampler::{build_epoch_schedule, Strategy};
use hybridaug_core::stream::decode_stream;
use hybridaug_core::synthesis::HybridProvenance;
use hybridaug_core::tradaug::{AugRecord, TradAugConfig};
use hybridaug_core::Manifest;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: Vec<u8>,
    stderr: String,
}

impl Run {
    fn text(&self) -> String {
        String::from_utf8(self.stdout.clone()).unwrap()
    }
}

fn run(args: &[&str]) -> Run {
    let argv = std::iter::once("hybridaug").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(argv, &mut out, &mut err);
    Run {
        code,
        stdout: out,
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small phantom corpus under `dir/corpus`.
fn corpus(dir: &Path, per_target: &str, nt: &str) -> PathBuf {
    let out = dir.join("corpus");
    let r = run(&[
        "gen-phantom", "--out", p(&out), "--per-target", per_target, "--nt", nt, "--image-size", "64", "--seed", "3",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stderr.contains("seed=3"));
    out
}

#[test]
fn ttest_prints_p() {
    let r = run(&["ttest", "--two-sample", "95.63", "0.20", "3", "95.11", "0.08", "3"]);
    assert_eq!((r.code, r.text().as_str()), (0, "p=0.0139\n"));
    assert!(r.stderr.contains("df=4"));
    let r = run(&["ttest", "--one-sample", "97.33", "0.87", "3", "97.80"]);
    assert_eq!(r.text(), "p=0.4482\n");
    let r = run(&["ttest", "--one-sample", "90", "0", "3", "90"]);
    assert_eq!((r.code, r.text().as_str()), (0, "p=1.0000\n"));
    assert_eq!(run(&["ttest", "--two-sample", "1", "2", "3"]).code, 1);
    assert_eq!(run(&["ttest", "--one-sample", "1", "2", "2.5", "0"]).code, 1);
    assert_eq!(run(&["ttest", "--one-sample", "1", "2", "1", "0"]).code, 2);
}

#[test]
fn plan_prints_table() {
    let dir = TempDir::new().unwrap();
    let r = run(&[
        "plan", "--donors", "297,439,570,469,475,633", "--originals", "700,700,700,700,700,3500", "--out", p(dir.path()),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = std::str::from_utf8(&r.stdout).unwrap().lines().collect();
    assert_eq!(lines[0], "view\tdonors\tmultiplicity\thybrids\toriginals_sampled\ttotal\thybrid_pct");
    assert_eq!(lines[1], "3VT\t297\t22\t6534\t700\t7234\t90.3");
    assert_eq!(lines[6], "NT\t633\t50\t31650\t3500\t35150\t90.0");
    assert_eq!(fs::read_to_string(dir.path().join("plan.tsv")).unwrap(), r.text());
    assert_eq!(run(&["plan", "--donors", "1,2", "--originals", "1,2"]).code, 1);
    assert_eq!(run(&["plan", "--donors", "0,1,1,1,1,1", "--originals", "1,1,1,1,1,1"]).code, 2);
}

#[test]
fn stats_from_counts() {
    let r = run(&[
        "stats", "--counts", "3192:2721,6178:5482,6029:5612,6735:5770,5970:5206,25082:10239", "--overall", "52423:35030",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = r.text();
    assert!(text.contains("3VT\t3192\t2721\t85.24\n"));
    assert!(text.contains("TOTAL\t52423\t35030\t66.82\n"));
    assert_eq!(run(&["stats", "--counts", "1:2,1:1,1:1,1:1,1:1,1:1"]).code, 2);
    assert_eq!(run(&["stats", "--counts", "1-2"]).code, 1);
    assert_eq!(run(&["stats"]).code, 1);
}

#[test]
fn stats_on_phantom_matches_generator_flags() {
    let dir = TempDir::new().unwrap();
    let c = corpus(dir.path(), "12", "40");
    let r = run(&[
        "stats",
        "--manifest",
        p(&c.join("manifest.jsonl")),
        "--ground-truth",
        p(&c.join("ground_truth.jsonl")),
        "--out",
        p(&dir.path().join("stats")),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let truth: Vec<serde_json::Value> = fs::read_to_string(c.join("ground_truth.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for t in &truth {
        let e = per_class.entry(t["label"].as_str().unwrap().to_string()).or_default();
        e.0 += 1;
        e.1 += usize::from(t["eligible"].as_bool().unwrap());
    }
    for line in r.text().lines().skip(1).filter(|l| !l.starts_with("TOTAL")) {
        let cols: Vec<&str> = line.split('\t').collect();
        let (total, eligible) = per_class[cols[0]];
        assert_eq!(cols[1].parse::<usize>().unwrap(), total, "{line}");
        assert_eq!(cols[2].parse::<usize>().unwrap(), eligible, "{line}");
    }
    assert!(r.stderr.contains("ground-truth agreement 100/100"), "{}", r.stderr);
    assert!(dir.path().join("stats/rejections.jsonl").exists());
}

#[test]
fn extract_then_synth_offline() {
    let dir = TempDir::new().unwrap();
    let c = corpus(dir.path(), "6", "20");
    let manifest = c.join("manifest.jsonl");
    let store = dir.path().join("store");
    let r = run(&["extract", "--manifest", p(&manifest), "--out", p(&store)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let donors = fs::read_dir(store.join("donors")).unwrap().count() / 2;
    assert!(donors > 0);
    assert_eq!(fs::read_dir(store.join("acceptors")).unwrap().count() / 2, donors);

    let off = dir.path().join("offline");
    let r = run(&[
        "synth-offline", "--manifest", p(&manifest), "--store", p(&store), "--originals", "2,2,2,2,2,4", "--out", p(&off),
        "--seed", "7",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let plan = r.text();
    let mut multiplicity = BTreeMap::new();
    for line in plan.lines().skip(1).filter(|l| !l.starts_with("TOTAL")) {
        let cols: Vec<&str> = line.split('\t').collect();
        multiplicity.insert(cols[0].to_string(), cols[2].parse::<usize>().unwrap());
    }
    let mut usage: BTreeMap<String, usize> = BTreeMap::new();
    for e in fs::read_dir(off.join("hybrids")).unwrap() {
        let path = e.unwrap().path();
        if path.extension().unwrap() == "json" {
            let prov: HybridProvenance = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
            assert!((10.0..=350.0).contains(&prov.rotation_deg));
            *usage.entry(prov.donor_id).or_default() += 1;
        }
    }
    assert_eq!(usage.len(), donors);
    let m = Manifest::from_jsonl(&fs::read_to_string(off.join("offline.jsonl")).unwrap(), "offline").unwrap();
    for (donor, n) in &usage {
        let label = m.records().iter().find(|r| r.patient_id == *donor).unwrap().label;
        assert_eq!(*n, multiplicity[label.as_str()], "{donor}");
    }
    let originals = m.records().iter().filter(|r| !r.id.starts_with("hyb_")).count();
    assert_eq!(originals, 14);
    for r in m.records() {
        let path = if Path::new(&r.path).is_absolute() {
            PathBuf::from(&r.path)
        } else {
            off.join(&r.path)
        };
        assert!(path.exists(), "{}", r.path);
    }
    // same seed, same bytes
    let again = dir.path().join("offline2");
    let r2 = run(&[
        "synth-offline", "--manifest", p(&manifest), "--originals", "2,2,2,2,2,4", "--out", p(&again), "--seed", "7",
    ]);
    assert_eq!(r2.code, 0, "{}", r2.stderr);
    assert_eq!(
        fs::read(off.join("offline.jsonl")).unwrap(),
        fs::read(again.join("offline.jsonl")).unwrap()
    );
    let first = m.records()[0].id.clone();
    assert_eq!(
        fs::read(off.join(format!("hybrids/{first}.png"))).unwrap(),
        fs::read(again.join(format!("hybrids/{first}.png"))).unwrap()
    );
}

fn serve_bytes(manifest: &Path, extra: &[&str]) -> Vec<u8> {
    let mut args = vec!["serve", "--manifest", p(manifest), "--size", "32"];
    args.extend_from_slice(extra);
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    r.stdout
}

#[test]
fn serve_stream_matches_schedule_and_is_thread_independent() {
    let dir = TempDir::new().unwrap();
    let c = corpus(dir.path(), "8", "30");
    let manifest = c.join("manifest.jsonl");
    let one = serve_bytes(&manifest, &["--epochs", "2", "--seed", "5", "--threads", "1"]);
    let four = serve_bytes(&manifest, &["--epochs", "2", "--seed", "5", "--threads", "4"]);
    assert!(one == four, "stream differs between 1 and 4 threads");
    assert_eq!(one, serve_bytes(&manifest, &["--epochs", "2", "--seed", "5"]));
    assert_ne!(one, serve_bytes(&manifest, &["--epochs", "2", "--seed", "6"]));

    let (meta, frames) = decode_stream(&one).unwrap();
    assert_eq!((meta.image_width, meta.image_height, meta.epochs), (32, 32, 2));
    assert_eq!(meta.strategy, "cut-paste-balanced");
    let m = Manifest::from_jsonl(&fs::read_to_string(&manifest).unwrap(), "phantom").unwrap();
    let truth: BTreeMap<String, bool> = fs::read_to_string(c.join("ground_truth.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v["eligible"].as_bool().unwrap())
        })
        .collect();
    for epoch in 0..2 {
        let sched = build_epoch_schedule(&m, &truth, Strategy::CutPasteBalanced, 5, epoch, 32).unwrap();
        let of_epoch: Vec<_> = frames.iter().filter(|f| f.epoch == epoch).collect();
        assert_eq!(of_epoch.len(), sched.batches.len());
        let images: usize = of_epoch.iter().map(|f| f.count()).sum();
        assert_eq!(images, sched.entry_count());
        for (f, b) in of_epoch.iter().zip(&sched.batches) {
            let labels: Vec<u8> = b
                .entries
                .iter()
                .map(|e| m.get(&e.record_id).unwrap().label.index() as u8)
                .collect();
            assert_eq!(f.labels, labels);
        }
    }

    let empty = serve_bytes(&manifest, &["--epochs", "0"]);
    let (_, frames) = decode_stream(&empty).unwrap();
    assert!(frames.is_empty());

    let sink = dir.path().join("stream.bin");
    let r = run(&["serve", "--manifest", p(&manifest), "--size", "32", "--epochs", "2", "--seed", "5", "--sink", p(&sink)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.is_empty());
    assert_eq!(fs::read(&sink).unwrap(), one);

    let store = dir.path().join("store");
    assert_eq!(run(&["extract", "--manifest", p(&manifest), "--out", p(&store)]).code, 0);
    let from_store = serve_bytes(&manifest, &["--epochs", "2", "--seed", "5", "--store", p(&store)]);
    assert!(from_store == one, "store-backed stream differs");
}

#[test]
fn serve_over_tcp() {
    use std::io::{BufRead, Read};
    let dir = TempDir::new().unwrap();
    let c = corpus(dir.path(), "3", "6");
    let manifest = c.join("manifest.jsonl");
    let expected = serve_bytes(&manifest, &["--seed", "2"]);
    let bin = env!("CARGO_BIN_EXE_hybridaug");
    let mut child = std::process::Command::new(bin)
        .args(["serve", "--manifest", p(&manifest), "--size", "32", "--seed", "2", "--listen", "127.0.0.1:0"])
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = std::io::BufReader::new(child.stderr.take().unwrap());
    let addr = loop {
        let mut line = String::new();
        assert!(err.read_line(&mut line).unwrap() > 0, "server exited early");
        if let Some(a) = line.trim().strip_prefix("listening on ") {
            break a.to_string();
        }
    };
    let mut got = Vec::new();
    std::net::TcpStream::connect(addr).unwrap().read_to_end(&mut got).unwrap();
    assert!(child.wait().unwrap().success());
    assert!(got == expected, "tcp stream differs from stdout stream");
}

#[test]
fn augment_dump_and_files() {
    let r = run(&["augment", "--dump-config"]);
    assert_eq!(r.code, 0);
    let cfg: TradAugConfig = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(cfg, TradAugConfig::default());

    let dir = TempDir::new().unwrap();
    let c = corpus(dir.path(), "1", "1");
    let manifest = c.join("manifest.jsonl");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = run(&["augment", "--manifest", p(&manifest), "--out", p(out), "--seed", "4"]);
        assert_eq!((r.code, r.text().as_str()), (0, "augmented=6\n"), "{}", r.stderr);
    }
    let one = "3vt_00000";
    assert_eq!(fs::read(a.join(format!("{one}.png"))).unwrap(), fs::read(b.join(format!("{one}.png"))).unwrap());
    let rec: AugRecord = serde_json::from_str(&fs::read_to_string(a.join(format!("{one}.json"))).unwrap()).unwrap();
    let _ = rec;

    let off = dir.path().join("off.json");
    fs::write(&off, serde_json::to_string(&TradAugConfig::disabled()).unwrap()).unwrap();
    let img = c.join(format!("images/{one}.png"));
    let plain = dir.path().join("plain");
    let r = run(&["augment", p(&img), "--aug-config", p(&off), "--out", p(&plain)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let orig = image::open(&img).unwrap().into_luma8();
    let same = image::open(plain.join(format!("{one}.png"))).unwrap().into_luma8();
    assert_eq!(orig, same);
    assert_eq!(run(&["augment", "--out", p(&plain)]).code, 1);
}

#[test]
fn evaluate_writes_report() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("preds.csv");
    fs::write(&csv, "id,true,pred\na,3VT,3VT\nb,nt,NT\nc,A4C,NT\nd,lvot,LVOT\n").unwrap();
    let out = dir.path().join("report");
    let r = run(&["evaluate", p(&csv), "--out", p(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.text().starts_with("accuracy    75.00\n"), "{}", r.text());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["accuracy"], 75.0);
    let confusion = fs::read_to_string(out.join("confusion.csv")).unwrap();
    assert_eq!(confusion.lines().next().unwrap(), "true\\pred,3VT,3VV,A4C,LVOT,ABDO,NT");
    assert_eq!(confusion.lines().nth(3).unwrap(), "A4C,0,0,0,0,0,1");
    assert!(out.join("report.txt").exists());

    fs::write(&csv, "id,true,pred\na,3VT,3VT\nb,XYZ,NT\n").unwrap();
    let r = run(&["evaluate", p(&csv)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 3"), "{}", r.stderr);
    fs::write(&csv, "id,true,pred\na,3VT,3VT\na,NT,NT\n").unwrap();
    assert_eq!(run(&["evaluate", p(&csv)]).code, 2);
    fs::write(&csv, "id,true,pred\n").unwrap();
    assert_eq!(run(&["evaluate", p(&csv)]).code, 2);
}

fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(points_attr)
        .collect()
}

fn points_attr(line: &str) -> Vec<(f64, f64)> {
    let start = line.find("points=\"").unwrap() + 8;
    let end = start + line[start..].find('"').unwrap();
    line[start..end]
        .split(' ')
        .map(|pt| {
            let (x, y) = pt.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn plot_loss_two_series() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("loss.csv");
    let mut text = String::from("series,epoch,loss\n");
    for e in 0..10 {
        text.push_str(&format!("train,{e},{}\nval,{e},{}\n", 1.0 / (e + 1) as f64, 0.5 + 0.01 * e as f64));
    }
    fs::write(&csv, text).unwrap();
    let r = run(&["plot-loss", p(&csv)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let svg = r.text();
    assert!(svg.starts_with("<svg"));
    let lines = polylines(&svg);
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.len() == 10));
    assert!(!svg.contains("class=\"band\""));
    assert!(svg.contains("class=\"legend\""));
    let out = dir.path().join("plots");
    assert_eq!(run(&["plot-loss", p(&csv), "--out", p(&out)]).code, 0);
    assert_eq!(fs::read_to_string(out.join("loss.svg")).unwrap(), svg);
}

#[test]
fn plot_loss_constant_series_is_flat_with_padding() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("flat.csv");
    fs::write(&csv, "series,epoch,loss\nx,0,0.3\nx,1,0.3\nx,2,0.3\n").unwrap();
    let svg = run(&["plot-loss", p(&csv)]).text();
    let line = &polylines(&svg)[0];
    assert!(line.iter().all(|pt| (pt.1 - line[0].1).abs() < 1e-9));
    // strictly inside the plot area, so the y-range was padded
    assert!(line[0].1 > 20.0 && line[0].1 < 420.0 - 44.0);
}

#[test]
fn plot_loss_band_is_one_sd() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("reps.csv");
    let reps = [[0.9, 1.1, 1.0], [0.5, 0.7, 0.9], [0.3, 0.3, 0.6], [0.2, 0.25, 0.15]];
    let mut text = String::from("series,epoch,loss,loss2,loss3\n");
    for (e, r) in reps.iter().enumerate() {
        text.push_str(&format!("val,{e},{},{},{}\n", r[0], r[1], r[2]));
    }
    fs::write(&csv, &text).unwrap();
    let svg = run(&["plot-loss", p(&csv)]).text();
    let band_line = svg.lines().find(|l| l.starts_with("<polygon class=\"band\"")).unwrap();
    let band = points_attr(band_line);
    let line = &polylines(&svg)[0];
    let n = reps.len();
    assert_eq!(band.len(), 2 * n);
    // pixels per loss unit, from two polyline points
    let series = parse_loss_csv(&text, Path::new("reps.csv")).unwrap();
    let pts = &series[0].points;
    let scale = (line[0].1 - line[1].1) / (pts[1].mean - pts[0].mean);
    for e in [0, 1, 3] {
        let r = reps[e];
        let mean = r.iter().sum::<f64>() / 3.0;
        let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        let upper = band[e].1;
        let lower = band[2 * n - 1 - e].1;
        assert!(((lower - upper) / 2.0 - sd * scale.abs()).abs() < 0.02, "epoch {e}");
        assert!(((lower + upper) / 2.0 - line[e].1).abs() < 0.02);
    }
}

#[test]
fn plot_loss_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "series,epoch,loss\n").unwrap();
    let r = run(&["plot-loss", p(&csv)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("empty input"));
    fs::write(&csv, "series,epoch,loss\na,0,1\na,x,2\n").unwrap();
    let r = run(&["plot-loss", p(&csv)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 3"), "{}", r.stderr);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[]).code, 1);
    assert_eq!(run(&["frobnicate"]).code, 1);
    assert_eq!(run(&["--help"]).code, 0);
    let r = run(&["evaluate", "/nonexistent/preds.csv"]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("/nonexistent/preds.csv"));
    assert_eq!(run(&["plan", "--donors", "1,1,1,1,1,1", "--originals", "1,1,1,1,1,1", "--threads", "0"]).code, 1);
    assert_eq!(run(&["gen-phantom"]).code, 1);
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("m.jsonl");
    fs::write(&bad, "{not json}\n").unwrap();
    let r = run(&["stats", "--manifest", p(&bad)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 1"), "{}", r.stderr);
}

#[test]
fn config_file_supplies_missing_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"donors": [297, 439, 570, 469, 475, 633], "originals": "700,700,700,700,700,3500", "fraction": 0.5}"#,
    )
    .unwrap();
    let r = run(&["plan", "--config", p(&cfg)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.text().contains("3VT\t297\t3\t891\t700\t1591\t56.0\n"), "{}", r.text());
    let r = run(&["plan", "--config", p(&cfg), "--fraction", "0.9"]);
    assert!(r.text().contains("3VT\t297\t22\t6534"));
    fs::write(&cfg, "[1, 2]").unwrap();
    assert_eq!(run(&["plan", "--config", p(&cfg)]).code, 2);
    assert_eq!(run(&["plan", "--config", p(&dir.path().join("none.json"))]).code, 3);
}

#[test]
fn gen_phantom_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (ca, cb) = (corpus(a.path(), "2", "4"), corpus(b.path(), "2", "4"));
    for f in ["manifest.jsonl", "ground_truth.jsonl", "images/nt_00003.png", "masks/a4c_00001.png"] {
        assert_eq!(fs::read(ca.join(f)).unwrap(), fs::read(cb.join(f)).unwrap(), "{f}");
    }
    let m = Manifest::from_jsonl(&fs::read_to_string(ca.join("manifest.jsonl")).unwrap(), "x").unwrap();
    assert_eq!(m.len(), 14);
}
