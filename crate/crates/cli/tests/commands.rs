use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cgtf_cli::io::{load_graph, load_labels, load_tensor};

const SMALL: &str = r#"
seed = 4

[solver]
max_iters = 20000

[synth]
dims = [10, 8, 6]
rank = 2
communities = [2, 0, 0]
tensor_missing = 0.3
graph_missing = [0.4, 0.0, 0.0]
"#;

fn cgtf(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cgtf"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("CGTF_THREADS", t),
        None => cmd.env_remove("CGTF_THREADS"),
    };
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn impute_exit_codes_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("a");
    let o = cgtf(
        &["impute", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let t = load_tensor(&out.join("imputed_tensor.csv")).unwrap();
    assert_eq!(t.dims(), [10, 8, 6]);
    assert_eq!(t.mask().count_observed(), 480);
    for n in 0..3 {
        let g = load_graph(&out.join(format!("imputed_graph_{n}.csv")), [10, 8, 6][n]).unwrap();
        assert_eq!(g.count_observed(), g.n() * g.n());
    }
    let report = fs::read_to_string(out.join("fit_report.csv")).unwrap();
    assert!(report.starts_with("iteration,objective,max_primal,max_dual,"));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let nmse: f64 = metrics
        .lines()
        .find_map(|l| l.strip_prefix("nmse_missing,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(nmse < 1e-3, "{nmse}");

    let capped = tmp.path().join("b");
    let o = cgtf(
        &[
            "impute",
            "--config",
            &cfg,
            "--out",
            capped.to_str().unwrap(),
            "--max-iters",
            "3",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(capped.join("imputed_tensor.csv").exists());
    assert_eq!(
        fs::read_to_string(capped.join("fit_report.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
}

#[test]
fn errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_key = write_config(tmp.path(), "bad.toml", "[solver]\nrnak = 2\n");
    assert_eq!(
        cgtf(&["impute", "--config", &bad_key], None).status.code(),
        Some(1)
    );
    let roc = write_config(tmp.path(), "roc.toml", &format!("kind = \"roc\"\n{SMALL}"));
    assert_eq!(
        cgtf(&["impute", "--config", &roc], None).status.code(),
        Some(1)
    );
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    assert_eq!(
        cgtf(&["impute", "--config", &cfg, "--rho", "-1"], None)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        cgtf(&["impute", "--config", "missing.toml"], None)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(cgtf(&["impute", "--bogus"], None).status.code(), Some(1));
    assert_eq!(cgtf(&["impute"], None).status.code(), Some(1));
    let broken = tmp.path().join("data.txt");
    fs::write(&broken, "# dims 2 2 2\n0 0 0 -1\n").unwrap();
    let data = write_config(
        tmp.path(),
        "data.toml",
        "[solver]\nrank = 1\n[data]\ntensor = \"data.txt\"\n",
    );
    let o = cgtf(&["impute", "--config", &data], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn synth_output_feeds_other_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", &format!("{SMALL}snr_db = 20.0\n"));
    let ds = tmp.path().join("ds");
    assert_eq!(
        cgtf(
            &["synth", "--config", &cfg, "--out", ds.to_str().unwrap()],
            None
        )
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        load_labels(&ds.join("labels_0.csv"))
            .unwrap()
            .num_communities(),
        2
    );
    let dataset = ds.join("dataset.toml");
    let dataset = dataset.to_str().unwrap();

    let com = tmp.path().join("com");
    let o = cgtf(
        &[
            "communities",
            "--config",
            dataset,
            "--out",
            com.to_str().unwrap(),
            "--max-iters",
            "20000",
        ],
        None,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for n in 0..3 {
        assert_eq!(
            load_labels(&com.join(format!("labels_{n}.csv")))
                .unwrap()
                .num_nodes(),
            [10, 8, 6][n]
        );
        let cov = fs::read_to_string(com.join(format!("coverage_{n}.csv"))).unwrap();
        assert_eq!(cov.lines().count(), 12);
    }
    let nmi = fs::read_to_string(com.join("nmi.csv")).unwrap();
    assert!(nmi.starts_with("mode,num_communities,nmi\n0,2,"));

    let roc = tmp.path().join("roc");
    let o = cgtf(
        &["roc", "--config", dataset, "--out", roc.to_str().unwrap()],
        None,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(roc.join("roc_tensor.csv")).unwrap();
    assert!(text.starts_with("threshold,tpr,fpr\ninf,0.0,0.0\n"));
    assert!(text.ends_with("-inf,1.0,1.0\n"));
    assert!(roc.join("roc_graph_0.csv").exists());
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = format!("{SMALL}snr_db = 20.0\n[sweep]\nsnr_db = [10.0, 30.0]\nreplicates = 2\n");
    let sweep = sweep.replace("max_iters = 20000", "max_iters = 300");
    let cfg = write_config(tmp.path(), "sweep.toml", &sweep);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let o = cgtf(
            &[
                "snr-sweep",
                "--config",
                &cfg,
                "--out",
                dir.to_str().unwrap(),
            ],
            Some(threads),
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        let o = cgtf(
            &["impute", "--config", &cfg, "--out", dir.to_str().unwrap()],
            Some(threads),
        );
        assert!(o.status.code() == Some(0) || o.status.code() == Some(2));
    }
    let files = read_dir_sorted(&a);
    assert_eq!(files.len(), 8);
    assert_eq!(files, read_dir_sorted(&b));
    let summary = String::from_utf8(
        files
            .iter()
            .find(|f| f.0 == "snr_sweep.csv")
            .unwrap()
            .1
            .clone(),
    )
    .unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("snr_db,nmse_cgtf,nmse_parafac_baseline\n10.0,"));

    let c = tmp.path().join("c");
    let o = cgtf(
        &[
            "snr-sweep",
            "--config",
            &cfg,
            "--out",
            c.to_str().unwrap(),
            "--seed",
            "5",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(
        fs::read(c.join("snr_sweep.csv")).unwrap(),
        fs::read(a.join("snr_sweep.csv")).unwrap()
    );
}
