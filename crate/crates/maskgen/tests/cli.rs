use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use maskgen_core::mask::{BinaryMask, RgbImage};

fn maskgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskgen"))
        .args(args)
        .env_remove("MASKGEN_CACHE")
        .output()
        .expect("maskgen runs")
}

fn ok(args: &[&str]) -> Output {
    let out = maskgen(args);
    assert!(
        out.status.success(),
        "maskgen {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn e2e_reports_are_byte_identical_and_reruns_hit_the_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["e2e", "--smoke", "--cache-dir", s(&a.join("cache")), "--out", s(&a)]);
    ok(&["e2e", "--smoke", "--cache-dir", s(&b.join("cache")), "--out", s(&b)]);
    let ra = fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("report.csv")).unwrap(), fs::read(b.join("report.csv")).unwrap());

    let again = ok(&["e2e", "--smoke", "--cache-dir", s(&a.join("cache")), "--out", s(&a)]);
    let log = String::from_utf8_lossy(&again.stderr);
    assert_eq!(log.matches("cache hit").count(), 6, "{log}");
    assert!(!log.contains("building"));
    assert_eq!(fs::read(a.join("report.json")).unwrap(), ra);

    let report: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    let manifest = report["manifest"].as_str().unwrap();
    assert_eq!(manifest.len(), 64);
    let eval_dirs: Vec<_> = fs::read_dir(a.join("cache/eval")).unwrap().flatten().filter(|e| e.path().is_dir()).collect();
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(eval_dirs[0].path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["hash"], manifest);
}

#[test]
fn changing_the_decode_strategy_reuses_the_trained_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let cfg = tmp.path().join("c.toml");
    let mut base = maskgen::Config::smoke();
    fs::write(&cfg, base.to_toml()).unwrap();
    ok(&["--config", s(&cfg), "e2e", "--cache-dir", s(&cache)]);
    base.decode.strategy = "topk:3".parse().unwrap();
    fs::write(&cfg, base.to_toml()).unwrap();
    let out = ok(&["--config", s(&cfg), "e2e", "--cache-dir", s(&cache)]);
    let log = String::from_utf8_lossy(&out.stderr);
    for stage in ["data", "codebook", "encode", "train"] {
        assert!(log.contains(&format!("[{stage}] cache hit")), "{log}");
    }
    assert!(log.contains("[infer] building") && log.contains("[eval] building"), "{log}");
}

#[test]
fn stepwise_commands_chain_together() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n);
    let cfg = p("tiny.toml");
    fs::write(
        &cfg,
        "seed = 3\n[codebook]\nk = 16\nsamples = 12\n[model]\nlayers = 1\nhidden = 32\nheads = 2\n[train]\nepochs = 1\n",
    )
    .unwrap();
    let c = s(&cfg);
    ok(&["--config", c, "gen-data", "--n", "12", "--out", s(&p("train"))]);
    ok(&["--config", c, "gen-data", "--n", "4", "--seed0", "100", "--out", s(&p("eval"))]);
    assert_eq!(fs::read_to_string(p("train/manifest.jsonl")).unwrap().lines().count(), 12);

    ok(&["--config", c, "codebook", "--data", s(&p("train")), "--out", s(&p("cb.bin"))]);
    assert!(p("cb.bin.manifest.json").is_file());
    ok(&["--config", c, "encode", "--data", s(&p("eval")), "--codebook", s(&p("cb.bin")), "--out", s(&p("tok.jsonl"))]);
    let first: serde_json::Value =
        serde_json::from_str(fs::read_to_string(p("tok.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!((first["h"].as_u64(), first["w"].as_u64()), (Some(4), Some(4)));

    ok(&["--config", c, "train", "--data", s(&p("train")), "--codebook", s(&p("cb.bin")), "--preset", "finetune", "--out", s(&p("m.ckpt"))]);
    ok(&["--config", c, "infer", "--ckpt", s(&p("m.ckpt")), "--data", s(&p("eval")), "--decode", "beam:3", "--out", s(&p("pred"))]);
    assert_eq!(fs::read_dir(p("pred/masks")).unwrap().count(), 4);
    let table = ok(&["--config", c, "eval", "--data", s(&p("eval")), "--pred", s(&p("pred")), "--decode", "beam:3", "--out", s(&p("report"))]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("decode beam:3"));
    let csv = fs::read_to_string(p("report/report.csv")).unwrap();
    assert!(csv.starts_with("metric,threshold,count,value\nciou,NA,4,"), "{csv}");

    let image = fs::read_dir(p("eval/images")).unwrap().next().unwrap().unwrap().path();
    ok(&["--config", c, "infer", "--ckpt", s(&p("m.ckpt")), "--image", s(&image), "--text", "segment the red circle", "--out", s(&p("one.pgm"))]);
    let m = BinaryMask::load_pgm(p("one.pgm")).unwrap();
    assert_eq!(m.dims(), (64, 64));

    ok(&["attn", "--ckpt", s(&p("m.ckpt")), "--data", s(&p("eval")), "--layer", "last", "--out", s(&p("heat.pgm"))]);
    assert!(fs::read(p("heat.pgm")).unwrap().starts_with(b"P5\n"));
    let probe = ok(&["attn", "--ckpt", s(&p("m.ckpt")), "--data", s(&p("eval")), "--probe"]);
    let r: serde_json::Value = serde_json::from_slice(&probe.stdout).unwrap();
    assert_eq!(r["trials"], 4 * 3 * 4);
}

#[test]
fn exit_codes_separate_validation_from_runtime_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[model]\nheads = 3\n").unwrap();
    assert_eq!(maskgen(&["--config", s(&bad), "e2e"]).status.code(), Some(2));
    fs::write(&bad, "[nope]\n").unwrap();
    assert_eq!(maskgen(&["--config", s(&bad), "e2e"]).status.code(), Some(2));
    assert_eq!(maskgen(&["infer", "--decode", "nucleus"]).status.code(), Some(2));
    assert_eq!(maskgen(&["eval", "--data", "/nonexistent", "--pred", "/nonexistent", "--out", s(tmp.path())]).status.code(), Some(2));

    let file = tmp.path().join("plain-file");
    fs::write(&file, b"x").unwrap();
    let out = maskgen(&["e2e", "--smoke", "--cache-dir", s(&file.join("cache"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

fn write_annotation_inputs(root: &Path) {
    let mut img = RgbImage::new(64, 64, [255, 255, 255]).unwrap();
    for r in 4..20 {
        for c in 4..20 {
            img.put(r, c, [220, 30, 30]);
        }
        for c in 40..56 {
            img.put(r, c, [220, 30, 30]);
        }
    }
    fs::create_dir_all(root.join("images")).unwrap();
    img.save_ppm(root.join("images/scene.ppm")).unwrap();
    let dir = root.join("masks/scene");
    fs::create_dir_all(&dir).unwrap();
    let rect = |c0: usize| BinaryMask::from_fn(64, 64, |r, c| (4..20).contains(&r) && (c0..c0 + 16).contains(&c)).unwrap();
    rect(4).save_pgm(dir.join("left.pgm")).unwrap();
    rect(40).save_pgm(dir.join("right.pgm")).unwrap();
    fs::write(dir.join("index.json"), r#"{"m0": "left.pgm", "m1": "right.pgm"}"#).unwrap();
    fs::write(
        root.join("det.jsonl"),
        concat!(
            r#"{"image": "scene.ppm", "label": "square", "box": [4, 4, 20, 20], "confidence": 0.9}"#,
            "\n",
            r#"{"image": "scene.ppm", "label": "square", "box": [40, 4, 56, 20], "confidence": 0.8}"#,
            "\n",
            r#"{"image": "scene.ppm", "label": "ghost", "box": [30, 40, 34, 44], "confidence": 0.1}"#,
            "\n"
        ),
    )
    .unwrap();
}

#[test]
fn annotate_records_then_replays_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    write_annotation_inputs(root);
    let t = root.join("t.json");
    let common = |out: &str, client: String| -> Vec<String> {
        [
            "annotate",
            "--detections",
            s(&root.join("det.jsonl")),
            "--masks",
            s(&root.join("masks")),
            "--images",
            s(&root.join("images")),
            "--client",
            &client,
            "--out",
            s(&root.join(out)),
        ]
        .map(String::from)
        .to_vec()
    };
    let run = |args: Vec<String>| maskgen(&args.iter().map(String::as_str).collect::<Vec<_>>());

    let rec = run(common("rec", format!("record:{}", s(&t))));
    assert!(rec.status.success(), "{}", String::from_utf8_lossy(&rec.stderr));
    let rep = run(common("rep", format!("replay:{}", s(&t))));
    assert!(rep.status.success(), "{}", String::from_utf8_lossy(&rep.stderr));
    let a = fs::read_to_string(root.join("rec/instances.jsonl")).unwrap();
    assert_eq!(a, fs::read_to_string(root.join("rep/instances.jsonl")).unwrap());

    let kinds: Vec<String> = a
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds.iter().filter(|k| *k == "instance").count(), 2);
    assert_eq!(kinds.iter().filter(|k| *k == "semantic").count(), 1);
    let semantic = BinaryMask::load_pgm(root.join("rec/semantic/scene/semantic_square.pgm")).unwrap();
    assert_eq!(semantic.count(), 2 * 16 * 16);
    let rejections = fs::read_to_string(root.join("rec/rejections.jsonl")).unwrap();
    assert!(rejections.contains(r#""reason":"low_confidence""#), "{rejections}");

    fs::write(&t, "[]").unwrap();
    let empty = run(common("empty", format!("replay:{}", s(&t))));
    assert!(empty.status.success());
    let recs = fs::read_to_string(root.join("empty/rejections.jsonl")).unwrap();
    assert!(recs.contains("client_failure"), "{recs}");
}
