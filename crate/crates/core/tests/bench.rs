use std::fs;

use vtbench::attacks::Method;
use vtbench::bench::*;
use vtbench::diffnet::{save_model, Arch, Model, TrainConfig};
use vtbench::tensor::{Rng, Tensor};
use vtbench::Error;

const SIDE: usize = 12;
const CLASSES: usize = 4;

fn data(n: usize, seed: u64) -> Dataset {
    gen_blobs(n, CLASSES, SIDE, 8.0, &mut Rng::new(seed, 0)).unwrap()
}

fn zoo() -> Vec<(String, Model)> {
    let train = data(400, 1);
    let cfg = TrainConfig {
        epochs: 4,
        lr: 0.05,
        batch: 16,
    };
    Arch::ALL
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            (
                a.name().to_string(),
                train_model(a, &train, 10 + i as u64, cfg).unwrap().0,
            )
        })
        .collect()
}

fn experiment(zoo: &[(String, Model)], attacks: &[AttackSpec], n_images: usize) -> Experiment {
    Experiment {
        sources: vec![
            Source {
                name: "cnn".into(),
                members: vec![zoo[2].1.clone()],
            },
            Source {
                name: "cnn+mlp".into(),
                members: vec![zoo[2].1.clone(), zoo[1].1.clone()],
            },
        ],
        targets: zoo
            .iter()
            .map(|(n, m)| Target {
                name: n.clone(),
                model: m.clone(),
            })
            .collect(),
        attacks: attacks.iter().map(|a| a.plan().unwrap()).collect(),
        dataset: data(120, 77),
        n_images,
        master_seed: 5,
        filter_correct: true,
        quantize: false,
    }
}

fn attack(method: Method, samples: usize, steps: usize) -> AttackSpec {
    let mut a = AttackSpec::new(method);
    a.steps = Some(steps);
    if method.is_variance_tuned() {
        a.samples = Some(samples);
    }
    a
}

#[test]
fn idx_round_trip_is_exact() {
    let n = 6;
    let bytes: Vec<f64> = (0..n * SIDE * SIDE)
        .map(|i| ((i * 37) % 256) as f64 / 255.0)
        .collect();
    let ds = Dataset::new(
        Tensor::new(vec![n, 1, SIDE, SIDE], bytes).unwrap(),
        vec![0, 1, 2, 3, 0, 9],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    write_idx(&ds, &img, &lab).unwrap();
    let back = load_idx(&img, &lab).unwrap();
    assert_eq!(back, ds);
    assert_eq!(&fs::read(&img).unwrap()[..4], &[0, 0, 8, 3]);
    assert_eq!(&fs::read(&lab).unwrap()[..4], &[0, 0, 8, 1]);
}

#[test]
fn idx_errors_report_offsets() {
    let ds = data(8, 3);
    let (img, lab) = encode_idx(&ds).unwrap();
    let err = parse_idx(&img[..img.len() - 1], &lab).unwrap_err();
    assert!(
        matches!(&err, Error::Parse(m) if m.contains("offset")),
        "{err}"
    );
    let err = parse_idx(&img, &lab[..lab.len() - 2]).unwrap_err();
    assert!(matches!(err, Error::Parse(_)));
    let mut bad = img.clone();
    bad[3] = 1;
    assert!(matches!(parse_idx(&bad, &lab), Err(Error::Parse(m)) if m.contains("offset 0")));
}

#[test]
fn blobs_are_deterministic_and_in_range() {
    let a = data(40, 9);
    assert_eq!(a, data(40, 9));
    assert_ne!(a, data(40, 10));
    assert!(a.images().data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(a.labels().iter().filter(|&&l| l == 3).count(), 10);
}

#[test]
fn matrix_invariants() {
    let zoo = zoo();
    let attacks = [attack(Method::Ifgsm, 0, 5), attack(Method::Vmifgsm, 3, 5)];
    let exp = experiment(&zoo, &attacks, 40);
    let run = run_experiment(&exp).unwrap();
    assert_eq!(run.table.rows.len(), 2 * 2 * 3);

    // success rates agree with the stored outcomes
    for (si, s) in exp.sources.iter().enumerate() {
        for (ai, a) in exp.attacks.iter().enumerate() {
            for (ti, t) in exp.targets.iter().enumerate() {
                let hits: Vec<_> = run
                    .outcomes
                    .iter()
                    .filter(|o| o.source == si && o.attack == ai && o.target == ti)
                    .collect();
                let fooled = hits.iter().filter(|o| o.misclassified).count();
                let row = run.table.find(&s.name, &a.label, &t.name).unwrap();
                assert_eq!(row.success_rate, fooled as f64 / hits.len() as f64);
                assert_eq!(row.n_eval, run.eval_images.len());
            }
        }
    }
    // every eligible image is classified correctly by every model
    for &i in &run.eval_images {
        for (_, m) in &zoo {
            assert_eq!(
                m.predict(&exp.dataset.image(i)).unwrap(),
                exp.dataset.labels()[i]
            );
        }
    }
    let vmi = run.table.find("cnn", "vmifgsm", "mlp").unwrap();
    assert_eq!(vmi.queries_mean, 5.0 * 4.0);

    // reversing the targets permutes rows but changes no rate
    let mut rev = exp.clone();
    rev.targets.reverse();
    let rerun = run_experiment(&rev).unwrap();
    for row in &run.table.rows {
        assert_eq!(
            rerun.table.find(&row.source, &row.attack, &row.target),
            Some(row)
        );
    }
}

#[test]
fn zero_budget_fools_nobody() {
    let zoo = zoo();
    let mut a = AttackSpec::new(Method::Mifgsm);
    a.epsilon_255 = Some(0.0);
    let mut v = AttackSpec::new(Method::Vmifgsm);
    v.epsilon_255 = Some(0.0);
    v.samples = Some(2);
    let run = run_experiment(&experiment(&zoo, &[a, v], 30)).unwrap();
    assert!(run.table.rows.iter().all(|r| r.success_rate == 0.0));
}

#[test]
fn results_are_identical_across_thread_counts() {
    let zoo = zoo();
    let attacks = [attack(Method::Mifgsm, 0, 4), attack(Method::Vnifgsm, 3, 4)];
    let exp = experiment(&zoo, &attacks, 30);
    let csv = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_experiment(&exp).unwrap().table.to_csv().unwrap())
    };
    let one = csv(1);
    assert_eq!(one, csv(4));
    assert_eq!(one, csv(4));
}

#[test]
fn sweep_zero_rows_match_baseline() {
    let zoo = zoo();
    let attacks = [attack(Method::Mifgsm, 0, 4), attack(Method::Vmifgsm, 3, 4)];
    let exp = experiment(&zoo, &attacks, 25);
    let beta = ablation_sweep_experiment(&exp, SweepParam::Beta, &[0.0, 0.75]).unwrap();
    let samples = ablation_sweep_experiment(&exp, SweepParam::Samples, &[0.0, 2.0]).unwrap();
    for sweep in [&beta, &samples] {
        let zero = &sweep.entries[0].table;
        for row in zero.rows.iter().filter(|r| r.attack == "vmifgsm") {
            let base = zero.find(&row.source, "mifgsm", &row.target).unwrap();
            assert_eq!(
                (row.success_rate, row.n_eval, row.queries_mean),
                (base.success_rate, base.n_eval, base.queries_mean)
            );
        }
        // plain attacks never change
        let a: Vec<_> = sweep.entries[0]
            .table
            .rows
            .iter()
            .filter(|r| r.attack == "mifgsm")
            .collect();
        let b: Vec<_> = sweep.entries[1]
            .table
            .rows
            .iter()
            .filter(|r| r.attack == "mifgsm")
            .collect();
        assert_eq!(a, b);
    }
    let csv = String::from_utf8(beta.to_csv().unwrap()).unwrap();
    assert!(csv.starts_with(
        "param,value,source,attack,target,success_rate,n_eval,queries_mean,seed\nbeta,0,"
    ));
    assert!(ablation_sweep_experiment(&exp, SweepParam::Beta, &[]).is_err());
    assert!(ablation_sweep_experiment(&exp, SweepParam::Samples, &[1.5]).is_err());
}

#[test]
fn mismatched_models_fail_before_attacking() {
    let zoo = zoo();
    let other = Arch::Mlp
        .build([1, 8, 8], CLASSES, &mut Rng::new(1, 0))
        .unwrap();
    let mut exp = experiment(&zoo, &[attack(Method::Ifgsm, 0, 2)], 10);
    exp.targets.push(Target {
        name: "small".into(),
        model: other,
    });
    assert!(matches!(
        run_experiment(&exp),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn spec_file_resolves_relative_paths() {
    let zoo = zoo();
    let dir = tempfile::tempdir().unwrap();
    for (name, m) in &zoo {
        save_model(m, dir.path().join(format!("{name}.json"))).unwrap();
    }
    let spec = format!(
        r#"{{"source_models": ["cnn.json", ["cnn.json", "mlp.json"]], "target_models": ["logreg.json", "mlp.json"],
            "attacks": [{{"method": "ifgsm", "steps": 3}}, {{"method": "vmifgsm", "name": "vmi-ctm", "steps": 3, "samples": 2,
                          "transforms": {{"dim_prob": 0.5, "tim_k": 3, "sim_copies": 2}}}}],
            "n_images": 15, "master_seed": 3,
            "data": {{"kind": "blobs", "n": 80, "classes": {CLASSES}, "side": {SIDE}, "separation": 8.0, "seed": 4}}}}"#
    );
    let path = dir.path().join("spec.json");
    fs::write(&path, spec).unwrap();
    let (spec, base) = ExperimentSpec::load(&path).unwrap();
    let table = run_matrix(&spec, &base).unwrap();
    assert_eq!(table.rows.len(), 8);
    let ctm = table.find("cnn+mlp", "vmi-ctm", "logreg").unwrap();
    assert_eq!(ctm.queries_mean, 3.0 * 3.0 * 2.0);

    let out = dir.path().join("r.json");
    write_results(&table, &out, ResultFormat::from_path(&out)).unwrap();
    assert_eq!(
        ResultTable::from_json(&fs::read_to_string(&out).unwrap()).unwrap(),
        table
    );
    assert_eq!(
        run_matrix(&spec, &base).unwrap().to_csv().unwrap(),
        table.to_csv().unwrap()
    );
}

#[test]
fn spec_errors() {
    assert!(matches!(
        ExperimentSpec::from_json("{"),
        Err(Error::Parse(_))
    ));
    let unknown = r#"{"source_models": [], "target_models": [], "attacks": [], "bogus": 1}"#;
    assert!(
        matches!(ExperimentSpec::from_json(unknown), Err(Error::Parse(m)) if m.contains("bogus"))
    );
    let empty = ExperimentSpec::from_json(
        r#"{"source_models": [], "target_models": ["a.json"], "attacks": [{"method": "fgsm"}]}"#,
    )
    .unwrap();
    assert!(empty.resolve(std::path::Path::new("/nonexistent")).is_err());
}
