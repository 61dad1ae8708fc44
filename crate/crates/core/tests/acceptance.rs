//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs without the libtest harness so the lines are always printed.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scmkit::clustering::{
    agglom_scm, average_linkage, calinski_harabasz, is_novel_label, wsi_cluster, AgglomConfig, DistanceMatrix,
};
use scmkit::corpus::{Dataset, TargetWordRecord};
use scmkit::metrics::{adjusted_rand_index, average_precision, axolotl_f1, evaluate};
use scmkit::nsd::{gradient, objective, train_logreg, NsdTrainConfig};
use scmkit::pipeline::{nsd_rows, nsd_scores, predict, train_nsd, Method, PredictOptions};
use scmkit::scm::{write_predictions, PredictionSet, RelabelMode, Spaces};
use scmkit::synth::{generate, SynthConfig, SynthData};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- oracles

/// Rand statistics from explicit pair enumeration.
fn pair_counting_ari(gold: &[usize], pred: &[usize]) -> f64 {
    let n = gold.len();
    let (mut both, mut only_gold, mut only_pred, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let g = gold[i] == gold[j];
            let p = pred[i] == pred[j];
            both += f64::from(u8::from(g && p));
            only_gold += f64::from(u8::from(g && !p));
            only_pred += f64::from(u8::from(!g && p));
            pairs += 1.0;
        }
    }
    if pairs == 0.0 {
        return 1.0;
    }
    let expected = (both + only_gold) * (both + only_pred) / pairs;
    let max = (2.0 * both + only_gold + only_pred) / 2.0;
    if max == expected {
        1.0
    } else {
        (both - expected) / (max - expected)
    }
}

/// Average linkage by recomputing every cluster-pair average from scratch.
fn naive_average_linkage(d: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = d.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in 0..clusters.len() {
                let (ka, kb) = (clusters[a][0], clusters[b][0]);
                if ka >= kb {
                    continue;
                }
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += d[i][j];
                    }
                }
                let avg = sum / (clusters[a].len() * clusters[b].len()) as f64;
                let better = match best {
                    None => true,
                    Some((bd, bka, bkb, _, _)) => avg < bd || (avg == bd && (ka, kb) < (bka, bkb)),
                };
                if better {
                    best = Some((avg, ka, kb, a, b));
                }
            }
        }
        let (_, _, _, a, b) = best.unwrap();
        let moved = clusters.remove(b);
        let a = if b < a { a - 1 } else { a };
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    let mut labels = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            labels[i] = c;
        }
    }
    labels
}

fn plain_objective(w: &[f64], b: f64, x: &[Vec<f64>], y: &[bool], c: f64) -> (f64, Vec<f64>, f64) {
    let mut loss = w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c);
    let mut gw: Vec<f64> = w.iter().map(|v| v / c).collect();
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let s = if label { 1.0 } else { -1.0 };
        let z = b + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let m = s * z;
        loss += if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
        let coef = -s / (1.0 + m.exp());
        for (g, v) in gw.iter_mut().zip(row) {
            *g += coef * v;
        }
        gb += coef;
    }
    (loss, gw, gb)
}

/// Fixed-step gradient descent with step 1/L from a global smoothness bound.
fn gradient_descent_oracle(x: &[Vec<f64>], y: &[bool], c: f64) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let lipschitz = 0.25 * x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() + 1.0 / c;
    let step = 1.0 / lipschitz;
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    for _ in 0..2_000_000 {
        let (_, gw, gb) = plain_objective(&w, b, x, y, c);
        let norm = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if norm < 1e-11 {
            break;
        }
        w.iter_mut().zip(&gw).for_each(|(v, g)| *v -= step * g);
        b -= step * gb;
    }
    (w, b)
}

fn random_problem(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<bool>) {
    loop {
        let n = rng.gen_range(10..=50);
        let d = rng.gen_range(1..=13);
        let truth: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let y: Vec<bool> = x
            .iter()
            .map(|r| {
                let z: f64 = r.iter().zip(&truth).map(|(a, b)| a * b).sum();
                rng.gen::<f64>() < 1.0 / (1.0 + (-z).exp())
            })
            .collect();
        if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
            return (x, y);
        }
    }
}

// -------------------------------------------------------------- criteria

fn ari_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=10);
        let kg = rng.gen_range(1..=4);
        let kp = rng.gen_range(1..=4);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kg)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kp)).collect();
        let got = adjusted_rand_index(&gold, &pred).map_err(|e| e.to_string())?;
        worst = worst.max((got - pair_counting_ari(&gold, &pred)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-12 && secs < 5.0, format!("max |diff| {worst:e}, {secs:.3}s"))
}

fn linkage_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut runs = 0;
    for m in 0..200 {
        let n = rng.gen_range(1..=12);
        let mut d = vec![vec![0.0; n]; n];
        for (i, j) in (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))) {
            // Half the matrices use small integers to force ties.
            let v = if m % 2 == 0 { f64::from(rng.gen_range(1u8..=4)) } else { rng.gen_range(0.0..2.0) };
            d[i][j] = v;
            d[j][i] = v;
        }
        let dm = DistanceMatrix::new(n, d.concat()).map_err(|e| e.to_string())?;
        for k in 1..=n {
            let got = average_linkage(&dm, k).map_err(|e| e.to_string())?;
            let want = naive_average_linkage(&d, k);
            if got != want {
                return Err(format!("matrix {m} (n={n}) k={k}: {got:?} vs {want:?}"));
            }
            runs += 1;
        }
    }
    Ok(format!("200 matrices, {runs} (matrix, k) partitions identical"))
}

fn ch_example() -> Outcome {
    let pts = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
    let ch = calinski_harabasz(&pts, &[0, 0, 1, 1]).map_err(|e| e.to_string())?;
    check((ch - 200.0).abs() <= 1e-9, format!("CH = {ch}"))
}

fn logreg_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (x, y) = random_problem(&mut rng);
    let d = x[0].len();
    let mut worst_fd: f64 = 0.0;
    for _ in 0..20 {
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = rng.gen_range(-2.0..2.0);
        let (gw, gb) = gradient(&w, b, &x, &y, 1.0);
        let h = 1e-5;
        for i in 0..=d {
            let eval = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if i < d {
                    w2[i] += delta;
                } else {
                    b2 += delta;
                }
                objective(&w2, b2, &x, &y, 1.0)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = if i < d { gw[i] } else { gb };
            worst_fd = worst_fd.max((fd - an).abs() / an.abs().max(fd.abs()).max(1.0));
        }
    }
    let mut worst_w: f64 = 0.0;
    let cfg = NsdTrainConfig { tol: 1e-10, max_iters: 100_000, ..NsdTrainConfig::default() };
    for _ in 0..10 {
        let (x, y) = random_problem(&mut rng);
        let (ow, ob) = gradient_descent_oracle(&x, &y, 1.0);
        let m = train_logreg(&x, &y, &cfg).map_err(|e| e.to_string())?;
        let diff = m.weights.iter().zip(&ow).fold((m.bias - ob).abs(), |acc, (a, b)| acc.max((a - b).abs()));
        worst_w = worst_w.max(diff);
    }
    check(
        worst_fd <= 1e-6 && worst_w <= 1e-4,
        format!("finite-difference rel err {worst_fd:e}, weights vs GD oracle {worst_w:e}"),
    )
}

fn f1_word(rows: &[(&str, &str, &str)]) -> TargetWordRecord {
    let mut tsv = String::from("word\tusage_id\tperiod\ttext\tstart\tend\tsense_id\tgloss\n");
    for (id, period, sense) in rows {
        let gloss = if *period == "old" { "a gloss" } else { "" };
        tsv.push_str(&format!("w\t{id}\t{period}\tx\t\t\t{sense}\t{gloss}\n"));
    }
    scmkit::corpus::parse_dataset_str(&tsv).unwrap().words.remove(0)
}

fn labels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn f1_novel_flip_penalty() -> Outcome {
    let w =
        f1_word(&[("o1", "old", "A"), ("n1", "new", "A"), ("n2", "new", "A"), ("n3", "new", "A"), ("n4", "new", "A")]);
    let f =
        axolotl_f1(&w, &labels(&[("n1", "A"), ("n2", "A"), ("n3", "A"), ("n4", "A")])).map_err(|e| e.to_string())?.0;
    let f2 = axolotl_f1(&w, &labels(&[("n1", "A"), ("n2", "A"), ("n3", "A"), ("n4", "novel:0")]))
        .map_err(|e| e.to_string())?
        .0;
    check(
        f == 1.0 && (f2 - 3.0 / 7.0).abs() < 1e-15 && f / f2 > 2.0,
        format!("F = {f}, F' = {f2:.6}, F/F' = {:.6}", f / f2),
    )
}

fn f1_edge_cases() -> Outcome {
    let w = f1_word(&[("o1", "old", "A"), ("n1", "new", "G"), ("n2", "new", "G")]);
    let all_novel = axolotl_f1(&w, &labels(&[("n1", "novel:0"), ("n2", "novel:0")])).map_err(|e| e.to_string())?.0;
    let one_old = axolotl_f1(&w, &labels(&[("n1", "novel:0"), ("n2", "A")])).map_err(|e| e.to_string())?.0;
    check(all_novel == 1.0 && one_old == 0.0, format!("all-novel {all_novel}, one old-sense prediction {one_old}"))
}

fn subset(data: &Dataset, range: std::ops::Range<usize>) -> Dataset {
    Dataset { words: data.words[range].to_vec() }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let data = generate(&SynthConfig { n_words: 50, new_usages: 40, seed: 2024, ..SynthConfig::default() })
        .map_err(|e| e.to_string())?;
    let spaces = Spaces { fine_tuned: &data.space_a, base: &data.space_b };
    let train = subset(&data.dataset, 0..25);
    let test = subset(&data.dataset, 25..50);
    let model = train_nsd(&train, spaces, &NsdTrainConfig::default(), 0).map_err(|e| e.to_string())?;
    let rows = nsd_rows(&test, spaces, 0).map_err(|e| e.to_string())?;
    let truth: Vec<bool> = rows.iter().map(|r| r.novel).collect();
    let ap = average_precision(&nsd_scores(&model, &rows), &truth).map_err(|e| e.to_string())?;
    let opts = PredictOptions { mode: RelabelMode::WithWsi, jobs: 0, ..PredictOptions::new(Method::Outlier2Cluster) };
    let preds = predict(&test, spaces, Some(&model), &opts).map_err(|e| e.to_string())?;
    let report = evaluate(&test, &preds).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        report.mean_ari >= 0.9 && ap >= 0.95 && secs < 60.0,
        format!("held-out ARI {:.4}, F1 {:.4}, NSD AP {ap:.4}, {secs:.2}s", report.mean_ari, report.mean_f1),
    )
}

fn tsv(p: &PredictionSet) -> Vec<u8> {
    let mut buf = Vec::new();
    write_predictions(p, &mut buf).unwrap();
    buf
}

fn degenerate_gates(data: &SynthData) -> Outcome {
    let spaces = Spaces { fine_tuned: &data.space_a, base: &data.space_b };
    let model = train_nsd(&data.dataset, spaces, &NsdTrainConfig::default(), 0)
        .and_then(|m| m.with_threshold(1.0))
        .map_err(|e| e.to_string())?;
    let wsd = predict(&data.dataset, spaces, None, &PredictOptions::new(Method::Wsd)).map_err(|e| e.to_string())?;
    let gated = predict(&data.dataset, spaces, Some(&model), &PredictOptions::new(Method::Outlier2Cluster))
        .map_err(|e| e.to_string())?;
    let same_bytes = tsv(&wsd) == tsv(&gated);

    let mut agglom_old_only = true;
    for word in &data.dataset.words {
        let out = agglom_scm(word, &data.space_b, AgglomConfig { k_extra: 0 }).map_err(|e| e.to_string())?;
        agglom_old_only &= out.values().all(|l| !is_novel_label(l) && word.is_old_sense(l));
    }

    let v1 = [1.0, 0.0];
    let v2 = [0.0, 1.0];
    let one = wsi_cluster(&[("a", &v1[..])]).map_err(|e| e.to_string())?;
    let two = wsi_cluster(&[("a", &v1[..]), ("b", &v2[..])]).map_err(|e| e.to_string())?;
    let wsi_single = one.k == 1 && two.k == 1 && two.labels.values().all(|&c| c == 0);

    check(
        same_bytes && agglom_old_only && wsi_single,
        format!("threshold 1.0 == WSD bytes: {same_bytes}; k_extra=0 old senses only: {agglom_old_only}; n<=2 one cluster: {wsi_single}"),
    )
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_scmkit");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).display().to_string();
    let run = |args: &[&str], envs: &[(&str, &str)]| -> Result<(), String> {
        let out = Command::new(bin).args(args).envs(envs.iter().copied()).output().map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    run(&["synth", "--words", "50", "--usages", "40", "--seed", "5", "--out-dir", &p("")], &[])?;
    let common = ["--dataset", &p("dataset.tsv"), "--emb-a", &p("emb_a.tsv"), "--emb-b", &p("emb_b.tsv")];
    run(&[&["train-nsd"], &common[..], &["--out", &p("nsd.model")]].concat(), &[])?;
    let mut compared = Vec::new();
    for method in ["outlier2cluster", "cluster2sense", "agglom"] {
        let predict = |jobs: &str, out: &str| -> Result<Vec<u8>, String> {
            let (model, out) = (p("nsd.model"), p(out));
            let args = [
                &["predict", "--method", method, "--k-extra", "2", "--nsd-model", &model],
                &common[..],
                &["--jobs", jobs, "--out", &out],
            ]
            .concat();
            run(&args, &[])?;
            std::fs::read(&out).map_err(|e| e.to_string())
        };
        let a = predict("1", "j1.tsv")?;
        let b = predict("8", "j8.tsv")?;
        if a != b || a.is_empty() {
            return Err(format!("{method}: --jobs 1 and --jobs 8 differ"));
        }
        compared.push(format!("{method} ({} bytes)", a.len()));
    }
    Ok(format!("identical for {}", compared.join(", ")))
}

fn main() -> ExitCode {
    let gate_data = generate(&SynthConfig { n_words: 12, new_usages: 20, seed: 9, ..SynthConfig::default() }).unwrap();
    let criteria: Vec<Criterion> = vec![
        ("ARI matches pair counting on 500 random labelings", Box::new(ari_oracle)),
        ("average linkage matches naive reference on 200 matrices", Box::new(linkage_oracle)),
        ("Calinski-Harabasz worked example is 200", Box::new(ch_example)),
        ("logistic regression gradient and optimum oracles", Box::new(logreg_oracles)),
        ("F1 drops to 3/7 after one novel flip", Box::new(f1_novel_flip_penalty)),
        ("F1 disjoint-senses edge cases", Box::new(f1_edge_cases)),
        ("end-to-end synthetic outlier2cluster", Box::new(end_to_end)),
        ("degenerate gates", Box::new(move || degenerate_gates(&gate_data))),
        ("CLI output independent of --jobs", Box::new(cli_determinism)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
