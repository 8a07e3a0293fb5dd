//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always printed.

#![allow(clippy::needless_range_loop)]

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{adjacency, conditioning, dag_from_pairs, moral_dsep, subsets_up_to, transitive_closure, upper_pairs};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semcausal::dataset::{
    format_jsonl, generate_adversarial_tagged, generate_suite, AdversarialKind, AdversarialSpec, GenerationSpec,
    RejectReason, Suite, Task,
};
use semcausal::eval::{
    aggregate_metrics, compute_confusion, compute_metrics, detect_collapse, predict_dataset, ConfusionMatrix, Metrics,
};
use semcausal::graph::{d_separated, find_path, generate_chain, generate_dag_with, ChainConfig, ConditioningSet, Dag};
use semcausal::model::{init_model, ModelConfig};
use semcausal::semantic::{lambda_at, LambdaSchedule};
use semcausal::text::{
    parse_hypothesis, parse_premise, parse_premise_graph, render_hypothesis, render_premise, Example, Label, Query,
};
use semcausal::trainer::{gradient_check, train, TrainConfig};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// ------------------------------------------------------------------ 1

fn dsep_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut queries = 0u64;
    let mut disagreements = Vec::new();
    let mut check = |g: &Dag| {
        let adj = adjacency(g);
        let n = g.node_count();
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let pool: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                for z in subsets_up_to(&pool, 3) {
                    let got = d_separated(g, &g.nodes()[x], &g.nodes()[y], &conditioning(g, &z)).unwrap();
                    queries += 1;
                    if got != moral_dsep(&adj, x, y, &z) && disagreements.len() < 5 {
                        disagreements.push(format!("{} x={x} y={y} z={z:?}", g.serialize()));
                    }
                }
            }
        }
    };
    // Every DAG on up to five nodes, up to relabelling: all subsets of the
    // forward pairs of a fixed topological order.
    for n in 2..=5 {
        let pairs = upper_pairs(n);
        for mask in 0u32..(1 << pairs.len()) {
            let chosen: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            check(&dag_from_pairs(n, &chosen));
        }
    }
    // Plus the generator's own output at those sizes.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let n = rng.gen_range(3..=5);
        let rho = rng.gen_range(0.2..=1.2);
        check(&generate_dag_with(n, rho, &(1..=3), &mut rng).unwrap());
    }
    let elapsed = start.elapsed();
    let pass = disagreements.is_empty() && queries >= 50_000 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "{queries} queries, {} disagreements{}, {}",
            disagreements.len(),
            disagreements
                .first()
                .map(|d| format!(" (first: {d})"))
                .unwrap_or_default(),
            secs(elapsed)
        ),
    )
}

// ------------------------------------------------------------------ 2

fn reachability_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pairs_checked = 0u64;
    let mut wrong = 0u64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=10);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let p = rng.gen_range(0.1..0.7);
        let edges: Vec<(usize, usize)> = upper_pairs(n)
            .into_iter()
            .filter(|_| rng.gen_bool(p))
            .map(|(i, j)| (perm[i], perm[j]))
            .collect();
        let g = dag_from_pairs(n, &edges);
        let closure = transitive_closure(&adjacency(&g));
        for a in 0..n {
            for b in 0..n {
                pairs_checked += 1;
                if find_path(&g, &g.nodes()[a], &g.nodes()[b]).unwrap() != closure[a][b] {
                    wrong += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        wrong == 0 && elapsed < Duration::from_secs(10),
        format!(
            "1000 DAGs, {pairs_checked} pairs, {wrong} disagreements, {}",
            secs(elapsed)
        ),
    )
}

// ------------------------------------------------------------------ 3

fn random_query(g: &Dag, rng: &mut ChaCha8Rng) -> Query {
    let mut idx: Vec<usize> = (0..g.node_count()).collect();
    idx.shuffle(rng);
    let name = |i: usize| g.nodes()[i].clone();
    if rng.gen_bool(0.5) {
        Query::transitivity(name(idx[0]), name(idx[1])).unwrap()
    } else {
        let k = rng.gen_range(0..=3usize.min(idx.len() - 2));
        let z = ConditioningSet::new(idx[2..2 + k].iter().map(|&i| name(i))).unwrap();
        Query::d_separation(name(idx[0]), name(idx[1]), z).unwrap()
    }
}

fn names_in(ex: &Example) -> Vec<String> {
    let mut out: Vec<String> = parse_premise(&ex.premise)
        .unwrap()
        .into_iter()
        .flat_map(|e| [e.source.as_str().to_string(), e.target.as_str().to_string()])
        .collect();
    let q = parse_hypothesis(&ex.hypothesis).unwrap();
    out.push(q.a().as_str().to_string());
    out.push(q.b().as_str().to_string());
    out.extend(q.z().iter().map(|n| n.as_str().to_string()));
    out
}

fn round_trip_and_conformance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0usize;
    for i in 0..10_000 {
        let g = if i % 2 == 0 {
            let cfg = ChainConfig {
                length_range: 2..=15,
                name_len_range: 1..=10,
                p_flip: rng.gen_range(0.0..=1.0),
            };
            generate_chain(&cfg, &mut rng).unwrap()
        } else {
            let n = rng.gen_range(3..=15);
            generate_dag_with(n, rng.gen_range(0.1..=1.2), &(1..=10), &mut rng).unwrap()
        };
        let mut order: Vec<usize> = (0..g.edge_count()).collect();
        order.shuffle(&mut rng);
        let premise_ok = parse_premise_graph(&render_premise(&g, &order).unwrap())
            .map(|back| back.edge_set() == g.edge_set())
            .unwrap_or(false);
        let q = random_query(&g, &mut rng);
        let hypothesis_ok = parse_hypothesis(&render_hypothesis(&q))
            .map(|back| back == q)
            .unwrap_or(false);
        if !(premise_ok && hypothesis_ok) {
            failures += 1;
        }
    }

    let mut length_bad = 0;
    let mut length_seen = (usize::MAX, 0);
    for task in [Task::Transitivity, Task::DSeparation] {
        let (examples, _) = generate_suite(&GenerationSpec::new(task, Suite::Length, 300, 31)).unwrap();
        for ex in &examples {
            let n = parse_premise_graph(&ex.premise).unwrap().node_count();
            length_seen = (length_seen.0.min(n), length_seen.1.max(n));
            if !(7..=15).contains(&n) {
                length_bad += 1;
            }
        }
    }

    let mut names_bad = 0;
    for task in [Task::Transitivity, Task::DSeparation] {
        let (examples, _) = generate_suite(&GenerationSpec::new(task, Suite::LongNames, 300, 32)).unwrap();
        names_bad += examples
            .iter()
            .flat_map(names_in)
            .filter(|s| !(8..=10).contains(&s.len()))
            .count();
    }

    let (examples, kinds, _) = generate_adversarial_tagged(&AdversarialSpec::new(1000, 33)).unwrap();
    let mut extended_bad = 0;
    let mut extended_seen = (usize::MAX, 0);
    for (ex, kind) in examples.iter().zip(&kinds) {
        if *kind != AdversarialKind::ExtendedTransitivity {
            continue;
        }
        let g = parse_premise_graph(&ex.premise).unwrap();
        let q = parse_hypothesis(&ex.hypothesis).unwrap();
        let ell = g.node_count();
        extended_seen = (extended_seen.0.min(ell), extended_seen.1.max(ell));
        let a = g.index_of(q.a()).unwrap();
        let b = g.index_of(q.b()).unwrap();
        let is_chain = g.edge_count() == ell - 1 && g.undirected_distance(a, b) == Some(ell - 1);
        if !((7..=12).contains(&ell) && is_chain && ex.label == Label::Yes) {
            extended_bad += 1;
        }
    }

    outcome(
        failures == 0 && length_bad == 0 && names_bad == 0 && extended_bad == 0,
        format!(
            "10000 round trips, {failures} failures; length suites {}..={} nodes ({length_bad} out of range); \
             long names {names_bad} out of range; extended chains {}..={} nodes ({extended_bad} malformed)",
            length_seen.0, length_seen.1, extended_seen.0, extended_seen.1
        ),
    )
}

// ------------------------------------------------------------------ 4

fn run_cli(dir: &Path, args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_semcausal"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn validation_self_consistency() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut problems = Vec::new();
    let mut files = 0;
    for task in [Task::Transitivity, Task::DSeparation] {
        for suite in Suite::ALL {
            if task == Task::DSeparation && suite == Suite::Adversarial {
                continue;
            }
            let name = format!("{task}-{suite}.jsonl");
            let (code, err) = run_cli(
                d,
                &[
                    "gen",
                    "--task",
                    &task.to_string(),
                    "--suite",
                    &suite.to_string(),
                    "--count",
                    "300",
                    "--seed",
                    "41",
                    "--out",
                    &name,
                ],
            );
            if code != 0 {
                problems.push(format!("gen {name}: {err}"));
                continue;
            }
            files += 1;
            let (code, err) = run_cli(d, &["validate", "--in", &name, "--out", "v.json"]);
            if code != 0 {
                problems.push(format!("validate {name}: {err}"));
            }
        }
    }

    let (examples, _) = generate_suite(&GenerationSpec::new(Task::DSeparation, Suite::Train, 300, 42)).unwrap();
    let mut flipped = examples.clone();
    flipped[123].label = flipped[123].label.flipped();
    fs::write(d.join("flipped.jsonl"), format_jsonl(&flipped)).unwrap();
    let (code, _) = run_cli(d, &["validate", "--in", "flipped.jsonl", "--out", "flipped.json"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("flipped.json")).unwrap()).unwrap();
    let label_key = RejectReason::LabelMismatch.to_string();
    let rejections = report["rejections"].as_object().unwrap();
    let total: u64 = rejections.values().map(|v| v.as_u64().unwrap()).sum();
    let single =
        code == 2 && total == 1 && report["rejections"][&label_key] == 1 && report["failures"][0]["line"] == 124;
    if !single {
        problems.push(format!("flipped label: exit {code}, rejections {rejections:?}"));
    }
    outcome(
        problems.is_empty(),
        format!(
            "{files} generated files validated clean; injected flip gives {} label-mismatch rejection(s){}",
            report["rejections"][&label_key],
            problems.first().map(|p| format!("; {p}")).unwrap_or_default()
        ),
    )
}

// ------------------------------------------------------------------ 5

fn metric_fixtures() -> Outcome {
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let m1 = compute_metrics(&ConfusionMatrix::new(708, 0, 292, 0)).unwrap();
    let ok1 = close(m1.accuracy, 0.708, 0.001)
        && close(m1.precision, 0.708, 0.001)
        && close(m1.recall, 1.0, 0.001)
        && close(m1.f1, 0.829, 0.001);
    let m2 = compute_metrics(&ConfusionMatrix::new(247, 183, 109, 461)).unwrap();
    let ok2 = close(m2.accuracy, 0.430, 0.001) && close(m2.precision, 0.694, 0.001) && close(m2.recall, 0.349, 0.001);
    let row = [64.6, 97.9, 56.9, 69.7, 62.8].map(|a| Metrics {
        accuracy: a,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    });
    let agg = aggregate_metrics(&row).unwrap().accuracy;
    let ok3 = close(agg, 70.4, 0.05);
    // The same numbers reached through label vectors.
    let mut preds = vec![Label::Yes; 1000];
    let mut gold = vec![Label::Yes; 708];
    gold.extend(vec![Label::No; 292]);
    preds.truncate(1000);
    let ok4 = compute_confusion(&preds, &gold).unwrap() == ConfusionMatrix::new(708, 0, 292, 0);
    outcome(
        ok1 && ok2 && ok3 && ok4,
        format!(
            "(708,0,292,0) -> acc {:.1}% prec {:.1}% rec {:.1}% F1 {:.1}%; (247,183,109,461) -> acc {:.1}% prec {:.1}% rec {:.1}% F1 {:.1}%; aggregate {:.2}",
            m1.accuracy * 100.0,
            m1.precision * 100.0,
            m1.recall * 100.0,
            m1.f1 * 100.0,
            m2.accuracy * 100.0,
            m2.precision * 100.0,
            m2.recall * 100.0,
            m2.f1 * 100.0,
            agg
        ),
    )
}

// ------------------------------------------------------------------ 6

fn labels(yes: usize, no: usize) -> Vec<Label> {
    let mut v = vec![Label::Yes; yes];
    v.extend(vec![Label::No; no]);
    v
}

fn collapse_fixtures() -> Outcome {
    let cases = [
        ((10_000, 0), true),
        ((9_600, 400), true),
        ((5_000, 5_000), false),
        ((9_500, 500), false),
        ((9_501, 499), true),
    ];
    let mut wrong = Vec::new();
    for ((yes, no), expected) in cases {
        let got = detect_collapse(&labels(yes, no), 0.95).unwrap().collapsed;
        if got != expected {
            wrong.push(format!("{yes}/{no} -> {got}"));
        }
    }
    outcome(
        wrong.is_empty(),
        format!("{} fixtures, {} misclassified {:?}", cases.len(), wrong.len(), wrong),
    )
}

// ------------------------------------------------------------------ 7

fn lambda_schedule() -> Outcome {
    let s = LambdaSchedule::default_ramp(10_000);
    let first = lambda_at(0, &s).lambda;
    let last = lambda_at(10_000, &s).lambda;
    let mid = lambda_at(5_000, &s).lambda;
    let d0 = lambda_at(1, &s).lambda - first;
    let worst = (0..10_000)
        .map(|t| (lambda_at(t + 1, &s).lambda - lambda_at(t, &s).lambda - d0).abs())
        .fold(0.0, f64::max);
    let endpoints = (first - 0.05).abs() <= 1e-12 && (last - 0.30).abs() <= 1e-12;

    // The trainer logs the same endpoints on its first and last step.
    let (data, _) = generate_suite(&GenerationSpec::new(Task::Transitivity, Suite::Train, 37, 70)).unwrap();
    let config = TrainConfig {
        epochs: 2,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (_, log) = train(&data, &config, None).unwrap();
    let logged = (log.steps.first().unwrap().lambda, log.steps.last().unwrap().lambda);
    let logged_ok = (logged.0 - 0.05).abs() <= 1e-12 && (logged.1 - 0.30).abs() <= 1e-12;

    outcome(
        endpoints && (mid - 0.175).abs() <= 1e-12 && worst <= 1e-12 && logged_ok,
        format!(
            "lambda(0)={first} lambda(T)={last} lambda(T/2)={mid}; max step deviation {worst:.1e}; trainer log {} -> {}",
            logged.0, logged.1
        ),
    )
}

// ------------------------------------------------------------------ 8

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (trans, _) = generate_suite(&GenerationSpec::new(Task::Transitivity, Suite::Train, 50, 80)).unwrap();
    let (dsep, _) = generate_suite(&GenerationSpec::new(Task::DSeparation, Suite::Train, 50, 81)).unwrap();
    let lambdas = [0.0, 0.175, 0.30];
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let config = ModelConfig {
            d_embed: rng.gen_range(2..=16),
            d_hidden: rng.gen_range(2..=32),
            ..ModelConfig::default()
        };
        let model = init_model(config, &mut rng).unwrap();
        let pool = if i % 2 == 0 { &trans } else { &dsep };
        let example = pool.choose(&mut rng).unwrap();
        let lambda = if i < 99 {
            lambdas[i % 3]
        } else {
            rng.gen_range(0.0..=0.3)
        };
        worst = worst.max(gradient_check(&model, example, lambda, &mut rng).unwrap());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "100 configurations, worst relative error {worst:.2e}, {}",
            secs(elapsed)
        ),
    )
}

// ------------------------------------------------------------------ 9

struct RunResult {
    collapsed: bool,
    bias: f64,
    f1: f64,
}

fn probe_run(data: &[Example], probe: &[Example], seed: u64, scheduled: bool) -> RunResult {
    let config = TrainConfig {
        seed,
        semantic_enabled: scheduled,
        ..TrainConfig::default()
    };
    let (model, _) = train(data, &config, None).unwrap();
    let preds = predict_dataset(&model, probe);
    let predicted = preds.labels();
    let collapse = detect_collapse(&predicted, 0.95).unwrap();
    let cm = compute_confusion(&predicted, &preds.gold(probe)).unwrap();
    RunResult {
        collapsed: collapse.collapsed,
        bias: collapse.bias_fraction,
        f1: compute_metrics(&cm).unwrap().f1,
    }
}

fn desk_scale_collapse() -> Outcome {
    let start = Instant::now();
    let mut baseline = Vec::new();
    let mut semantic = Vec::new();
    let mut no_fraction: f64 = 1.0;
    for seed in 0..5u64 {
        let (data, _) =
            generate_suite(&GenerationSpec::new(Task::DSeparation, Suite::Train, 5000, 900 + seed)).unwrap();
        let (probe, _) = generate_suite(&GenerationSpec::new(
            Task::DSeparation,
            Suite::Train,
            1000,
            9_900 + seed,
        ))
        .unwrap();
        let no = data.iter().filter(|e| e.label == Label::No).count() as f64 / data.len() as f64;
        no_fraction = no_fraction.min(no);
        baseline.push(probe_run(&data, &probe, seed, false));
        semantic.push(probe_run(&data, &probe, seed, true));
    }
    let elapsed = start.elapsed();
    let base_collapsed: Vec<&RunResult> = baseline.iter().filter(|r| r.collapsed).collect();
    let sem_collapsed = semantic.iter().filter(|r| r.collapsed).count();
    let collapsed_f1 = if base_collapsed.is_empty() {
        f64::NAN
    } else {
        base_collapsed.iter().map(|r| r.f1).sum::<f64>() / base_collapsed.len() as f64
    };
    let sem_f1 = semantic.iter().map(|r| r.f1).sum::<f64>() / semantic.len() as f64;
    let pass = no_fraction >= 0.70
        && base_collapsed.len() >= 4
        && sem_collapsed <= 1
        && sem_f1 - collapsed_f1 >= 0.10
        && elapsed < Duration::from_secs(600);
    let fmt = |runs: &[RunResult]| {
        runs.iter()
            .map(|r| format!("{:.3}/{:.3}", r.bias, r.f1))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        pass,
        format!(
            "min No fraction {:.3}; lambda=0 collapsed {}/5 (bias/F1 {}); scheduled collapsed {sem_collapsed}/5 (bias/F1 {}); \
             scheduled mean F1 {sem_f1:.3} vs collapsed mean F1 {collapsed_f1:.3}; {}",
            no_fraction,
            base_collapsed.len(),
            fmt(&baseline),
            fmt(&semantic),
            secs(elapsed)
        ),
    )
}

// ------------------------------------------------------------------ 10

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let runs = [dir.path().join("one"), dir.path().join("two")];
    let mut failures = Vec::new();
    for d in &runs {
        fs::create_dir(d).unwrap();
        let steps: [&[&str]; 7] = [
            &[
                "gen",
                "--task",
                "dsep",
                "--suite",
                "train",
                "--count",
                "400",
                "--seed",
                "5",
                "--out",
                "train.jsonl",
            ],
            &[
                "gen",
                "--task",
                "dsep",
                "--suite",
                "branching",
                "--count",
                "100",
                "--seed",
                "6",
                "--out",
                "branching.jsonl",
            ],
            &[
                "gen",
                "--task",
                "transitivity",
                "--suite",
                "adversarial",
                "--count",
                "100",
                "--seed",
                "7",
                "--out",
                "adv.jsonl",
            ],
            &[
                "train",
                "--data",
                "train.jsonl",
                "--probe",
                "branching.jsonl",
                "--epochs",
                "2",
                "--seed",
                "5",
                "--out",
                "model.bin",
            ],
            &[
                "eval",
                "--model",
                "model.bin",
                "--data",
                "train.jsonl,branching.jsonl,adv.jsonl",
                "--out",
                "report.json",
            ],
            &[
                "eval",
                "--model",
                "model.bin",
                "--data",
                "train.jsonl,branching.jsonl,adv.jsonl",
                "--format",
                "csv",
                "--out",
                "report.csv",
            ],
            &["validate", "--in", "train.jsonl", "--out", "validation.json"],
        ];
        for args in steps {
            let (code, err) = run_cli(d, args);
            if code != 0 {
                failures.push(format!("{} exited {code}: {err}", args[0]));
            }
        }
    }
    let files = [
        "train.jsonl",
        "branching.jsonl",
        "adv.jsonl",
        "train.jsonl.report.json",
        "model.bin",
        "model.bin.log.csv",
        "model.bin.summary.json",
        "report.json",
        "report.csv",
        "validation.json",
    ];
    for f in files {
        let a = fs::read(runs[0].join(f));
        let b = fs::read(runs[1].join(f));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => failures.push(format!("{f} differs or is missing")),
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} artifacts compared across two runs{}",
            files.len(),
            failures.first().map(|f| format!("; {f}")).unwrap_or_default()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("d-separation matches moralization oracle", dsep_oracle_equivalence),
        (
            "reachability matches transitive closure",
            reachability_oracle_equivalence,
        ),
        (
            "render/parse round trip and suite conformance",
            round_trip_and_conformance,
        ),
        (
            "generated data validates; one flip gives one rejection",
            validation_self_consistency,
        ),
        ("metric fixtures", metric_fixtures),
        ("collapse detector fixtures", collapse_fixtures),
        ("lambda schedule endpoints and affinity", lambda_schedule),
        ("analytic gradients match finite differences", gradient_checks),
        ("desk-scale collapse and its prevention", desk_scale_collapse),
        ("repeated runs are byte-identical", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut passed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("C{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| x == &id) {
            continue;
        }
        ran += 1;
        let o = f();
        if o.pass {
            passed += 1;
        }
        println!("{} {id:>3} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {passed}/{ran} criteria passed");
    if passed != ran {
        std::process::exit(1);
    }
}
