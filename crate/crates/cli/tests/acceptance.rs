//! Primary acceptance criteria, one line each. Exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use blockmc::graph::{build_graph, predict_at, Dist, PredictOptions, PredictionDag};
use blockmc::kernels::{ffbs_hmm, gibbs_normal_mean, hmm_log_marginal};
use blockmc::model::{ModelSampler, SamplerConfig, StatefulModel};
use blockmc::spec::{assign_blocks, load_template, parse_spec, DataSet, TEMPLATES};
use blockmc::stateful::{substream, McRng, Value};
use blockmc::validation::ppc::posterior_predictive_check;
use blockmc::validation::{
    ess_bulk, ess_tail, gradient_audit, psis_loo, rank_normalized_rhat, run_validation, ValidationConfig,
};
use common::densities::{gradient_error, random_case};
use common::diagnostics::{self as diag, reference};
use common::hmm::{enumerate_paths, random_hmm};
use common::nuts::nuts_chain;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value as Json;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn conjugate() -> Outcome {
    let mut rng = substream(2024, 0);
    let n = 20_000;
    let xs: Vec<f64> = (0..n).map(|_| gibbs_normal_mean(0.0, 1.0, 2.0, 1, 1.0, &mut rng).unwrap()).collect();
    let (m, v) = (mean(&xs), var(&xs));
    let tol = 3.0 * (0.5 / n as f64).sqrt();
    check(
        (m - 1.0).abs() < tol && (v / 0.5 - 1.0).abs() < 0.05,
        format!("mean {m:.4} (|err| < {tol:.4}), variance {v:.4} (target 0.5)"),
    )
}

fn gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut rng = substream(7, 0);
    for d in Dist::ALL {
        for _ in 0..25 {
            let e = gradient_error(d, &random_case(d, &mut rng));
            worst = worst.max(e);
            if e >= 1e-6 {
                failures.push(d.name().to_string());
            }
        }
    }
    let mut audited = 0;
    for t in TEMPLATES {
        let (spec, tpl) = load_template(t.name).map_err(|e| e.to_string())?;
        let g = build_graph(&spec, &tpl.generate(1)).map_err(|e| e.to_string())?;
        let plan = assign_blocks(&spec, &g).map_err(|d| format!("{d:?}"))?;
        let audit = gradient_audit(&g, &plan, 7);
        for b in &audit.blocks {
            worst = worst.max(b.max_rel_error);
            audited += 1;
        }
        if !audit.pass {
            failures.push(t.name.to_string());
        }
    }
    failures.dedup();
    check(
        failures.is_empty(),
        format!(
            "{} factor kinds and {audited} template blocks at 25 points, max rel error {worst:.1e}{}",
            Dist::ALL.len(),
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    )
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ffbs() -> Outcome {
    let mut rng = substream(31, 0);
    let mut worst_lm: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=3);
        let t = rng.random_range(1..=5);
        let (init, trans, emit) = random_hmm(&mut rng, k, t);
        let brute = log_sum_exp(&enumerate_paths(&init, &trans, &emit, k, t));
        let fwd = hmm_log_marginal(&init, &trans, &emit).map_err(|e| e.to_string())?;
        worst_lm = worst_lm.max((fwd - brute).abs());
    }
    let mut worst_marg: f64 = 0.0;
    for _ in 0..5 {
        worst_marg = worst_marg.max(ffbs_marginal_error(&mut rng, 3, 4)?);
    }
    check(
        worst_lm < 1e-10 && worst_marg < 0.01,
        format!("log-marginal max |err| {worst_lm:.1e} over 100 HMMs; state marginals max |err| {worst_marg:.4} at 100k draws"),
    )
}

fn ffbs_marginal_error(rng: &mut McRng, k: usize, t: usize) -> Result<f64, String> {
    let (init, trans, emit) = random_hmm(rng, k, t);
    let joint = enumerate_paths(&init, &trans, &emit, k, t);
    let z = log_sum_exp(&joint);
    let mut exact = vec![0.0; t * k];
    for (code, lp) in joint.iter().enumerate() {
        let mut c = code;
        for i in (0..t).rev() {
            exact[i * k + c % k] += (lp - z).exp();
            c /= k;
        }
    }
    let n = 100_000;
    let mut freq = vec![0.0; t * k];
    for _ in 0..n {
        for (i, s) in ffbs_hmm(&init, &trans, &emit, rng).map_err(|e| e.to_string())?.into_iter().enumerate() {
            freq[i * k + s] += 1.0 / n as f64;
        }
    }
    Ok(freq.iter().zip(&exact).map(|(f, e)| (f - e).abs()).fold(0.0, f64::max))
}

fn nuts() -> Outcome {
    let runs: Vec<_> = (0..2).map(|c| nuts_chain(0.9, 41, c, 1000, 4000)).collect();
    let frozen = runs.iter().all(|r| r.frozen);
    let mut rhat_max: f64 = 0.0;
    for d in 0..2 {
        let per: Vec<&[f64]> = runs.iter().map(|r| r.draws[d].as_slice()).collect();
        rhat_max = rhat_max.max(rank_normalized_rhat(&per).map_err(|e| e.to_string())?.value);
    }
    let x: Vec<f64> = runs.iter().flat_map(|r| r.draws[0].clone()).collect();
    let y: Vec<f64> = runs.iter().flat_map(|r| r.draws[1].clone()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64;
    let rel = [var(&x) - 1.0, var(&y) - 1.0, cov / 0.9 - 1.0].map(f64::abs);
    let worst = rel.iter().copied().fold(0.0, f64::max);
    check(
        rhat_max < 1.01 && worst < 0.15 && frozen,
        format!("max R-hat {rhat_max:.4}, worst covariance rel error {worst:.3}, adaptation frozen: {frozen}"),
    )
}

fn bit_rows(m: &ModelSampler) -> Vec<Vec<u64>> {
    m.get_history().rows().map(|r| r.iter().map(|x| x.to_bits()).collect()).collect()
}

fn statefulness() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["eight_schools_noncentered", "eight_schools_centered", "normal_mixture"] {
        let mk = || ModelSampler::from_template(name, 1, &SamplerConfig::seeded(9)).map_err(|e| e.to_string());
        let (mut a, mut b) = (mk()?, mk()?);
        a.step(10).map_err(|e| e.to_string())?;
        a.step(100).map_err(|e| e.to_string())?;
        b.step(110).map_err(|e| e.to_string())?;
        let same = bit_rows(&a) == bit_rows(&b) && a.snapshot() == b.snapshot();
        ok &= same;

        let y = a.sampler().pool().get("y").map_err(|e| e.to_string())?.to_flat();
        let perturbed = Value::RealVec(y.iter().map(|v| v + 1.5).collect());
        a.set_current(&BTreeMap::from([("y".to_string(), perturbed)])).map_err(|e| e.to_string())?;
        a.step(1).map_err(|e| e.to_string())?;
        let it = a.get_history().iterations();
        let continued = it.len() == 111 && it[110] == 111 && it.windows(2).all(|w| w[0] < w[1]);
        ok &= continued;
        notes.push(format!("{name}: split==whole {same}, 110->111 {continued}"));
    }
    check(ok, notes.join("; "))
}

fn prediction_dag() -> Outcome {
    let mut m = ModelSampler::from_template("meta_regression", 2, &SamplerConfig::seeded(8)).map_err(|e| e.to_string())?;
    m.step(200).map_err(|e| e.to_string())?;
    let dag = PredictionDag::from_graph(m.graph());
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let stochastic = |names: Vec<String>| {
        names.into_iter().filter(|n| n != "f").map(|n| format!("{n}_new")).collect::<Vec<_>>()
    };
    let cases = [
        (&["X", "s2"][..], vec!["mu_new", "y_new"]),
        (&["X"], vec!["mu_new"]),
        (&["s2"], vec![]),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (supplied, want) in &cases {
        let got = stochastic(dag.predictable(&set(supplied), "N"));
        ok &= got == *want;

        let x = Value::RealMat { rows: 2, cols: 2, data: vec![1.0, 0.0, 1.0, 1.5] };
        let s2 = Value::RealVec(vec![0.1, 0.2]);
        let mut inputs = BTreeMap::new();
        if supplied.contains(&"X") {
            inputs.insert("X_new".to_string(), x);
        }
        if supplied.contains(&"s2") {
            inputs.insert("s2_new".to_string(), s2);
        }
        let before = m.snapshot();
        let p = m.predict_at(&inputs, &PredictOptions::default()).map_err(|e| e.to_string())?;
        let pure = m.snapshot() == before;
        let outputs: Vec<&str> = p.outputs.keys().map(String::as_str).collect();
        ok &= pure && outputs == *want;
        let slots: Vec<String> = supplied.iter().map(|s| format!("{s}_new")).collect();
        notes.push(format!("{{{}}} -> {{{}}}", slots.join(","), outputs.join(",")));
        if !pure {
            notes.push("state changed".into());
        }
    }
    // The same result through the free function on a copy of the draws.
    let mut rng = substream(8, 1);
    let only_x = BTreeMap::from([("X_new".to_string(), Value::RealMat { rows: 1, cols: 2, data: vec![1.0, 0.0] })]);
    let p = predict_at(m.graph(), m.get_history(), &only_x, &PredictOptions::default(), &mut rng)
        .map_err(|e| e.to_string())?;
    ok &= p.unpredictable == ["y_new"];
    check(ok, format!("{}; state byte-identical", notes.join(", ")))
}

fn refs(c: &[Vec<f64>]) -> Vec<&[f64]> {
    c.iter().map(Vec::as_slice).collect()
}

fn diagnostics_oracle() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let fixtures = [diag::small_fixture(), diag::ar1(2024, 4, 501, 0.7, 0.05), diag::ar1(5, 3, 200, 0.3, 0.0)];
    for c in &fixtures {
        let r = refs(c);
        let got = [
            rank_normalized_rhat(&r).unwrap().value,
            ess_bulk(&r).unwrap().value,
            ess_tail(&r).unwrap().value,
        ];
        let want = [reference::rhat(c), reference::ess_bulk(c), reference::ess_tail(c)];
        for (g, w) in got.iter().zip(&want) {
            ok &= close(*g, *w);
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    let small = diag::small_fixture();
    ok &= close(rank_normalized_rhat(&refs(&small)).unwrap().value, diag::SMALL_RHAT);
    let ar = diag::ar1(2024, 4, 501, 0.7, 0.05);
    ok &= close(ess_bulk(&refs(&ar)).unwrap().value, diag::AR_BULK);

    let base = rank_normalized_rhat(&refs(&ar)).unwrap().value;
    let maps: [fn(f64) -> f64; 3] = [f64::exp, |x| x * x * x, |x| 5.0 - 2.0 * x];
    let mut invariance: f64 = 0.0;
    for f in maps {
        let mapped: Vec<Vec<f64>> = ar.iter().map(|c| c.iter().map(|&x| f(x)).collect()).collect();
        invariance = invariance.max((rank_normalized_rhat(&refs(&mapped)).unwrap().value - base).abs());
    }
    ok &= invariance <= 1e-12;

    let flat = vec![vec![2.5; 50]; 2];
    let r = rank_normalized_rhat(&refs(&flat)).unwrap();
    let e = ess_bulk(&refs(&flat)).unwrap();
    let sentinel = r.value == f64::INFINITY && r.degenerate && e.value == 0.0 && e.degenerate;
    ok &= sentinel;
    check(
        ok,
        format!("reference max rel diff {worst:.1e}, monotone-map drift {invariance:.1e}, constant chains -> (inf, 0): {sentinel}"),
    )
}

fn full_checklist() -> Outcome {
    let names = [
        "eight_schools_noncentered",
        "linear_regression",
        "normal_mixture",
        "hmm_gaussian_2state",
        "meta_regression",
        "dp_mixture_truncated",
    ];
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for name in names {
        let (spec, t) = load_template(name).map_err(|e| e.to_string())?;
        let r = run_validation(&spec, &t.generate(1), &ValidationConfig::seeded(1)).map_err(|e| e.to_string())?;
        let rhat = r.rhat.as_ref().map_or(f64::NAN, |s| s.max);
        let extended = r.rhat.as_ref().is_some_and(|s| s.extended);
        let ppc = r.ppc.as_ref().is_some_and(|p| p.pass);
        let pass = r.smoke.pass && rhat < 1.05 && ppc;
        ok &= pass;
        notes.push(format!("{name} R-hat {rhat:.3}{}{}", if extended { " (extended)" } else { "" }, if pass { "" } else { " FAIL" }));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    check(ok, format!("{}; {secs:.0}s total", notes.join(", ")))
}

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn normal_lpdf(x: f64, m: f64) -> f64 {
    -0.5 * (x - m).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn psis() -> Outcome {
    let loglik = |y: &[f64]| -> Vec<Vec<f64>> {
        let n = y.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let mut rng = substream(6, 0);
        (0..4000)
            .map(|_| {
                let mu = ybar + rng.sample::<f64, _>(StandardNormal) / n.sqrt();
                y.iter().map(|&v| normal_lpdf(v, mu)).collect()
            })
            .collect()
    };
    let y = normals(30, 5);
    let clean = psis_loo(&loglik(&y)).map_err(|e| e.to_string())?;
    let clean_max = clean.pareto_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut dirty_y = y.clone();
    dirty_y[17] = 15.0;
    let dirty = psis_loo(&loglik(&dirty_y)).map_err(|e| e.to_string())?;
    let dirty_max = dirty.pareto_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    check(
        clean_max < 0.5 && dirty_max >= 0.7,
        format!("iid max k {clean_max:.3}; with outlier max k {dirty_max:.3}"),
    )
}

const NORMAL_MODEL: &str = "\
model normal
size N
data y : real[N]
param mu : real ~ normal(0, 10)
param sigma : real<lower=0> ~ half_cauchy(0, 5)
y[i] ~ normal(mu, sigma)
";

fn ppc_max(y: Vec<f64>) -> Result<(bool, bool), String> {
    let spec = parse_spec(NORMAL_MODEL).map_err(|d| format!("{d:?}"))?;
    let data = DataSet::new().with("y", Value::RealVec(y));
    let mut m = ModelSampler::new(&spec, &data, &SamplerConfig::seeded(12)).map_err(|e| e.to_string())?;
    m.step(3000).map_err(|e| e.to_string())?;
    let draws = m.get_history().skip(1000);
    let r = posterior_predictive_check(m.graph(), &draws, "y", None, false, &mut substream(12, 1))
        .map_err(|e| e.to_string())?;
    let max_inside = r.checks.iter().find(|c| c.statistic == "max").is_some_and(|c| c.inside);
    Ok((max_inside, r.pass))
}

fn ppc() -> Outcome {
    let clean = normals(50, 21);
    let mut dirty = clean.clone();
    dirty[0] = 50.0;
    let (dirty_max, _) = ppc_max(dirty)?;
    let (_, clean_pass) = ppc_max(clean)?;
    check(
        !dirty_max && clean_pass,
        format!("50-sigma outlier: max inside interval {dirty_max}; clean refit passes every statistic {clean_pass}"),
    )
}

fn blockmc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_blockmc")).args(args).output().expect("binary runs")
}

fn cli_golden() -> Outcome {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let common = ["--spec", "eight_schools_noncentered", "--seed", "3", "--burnin", "1000", "--keep", "1000"];
    let run = |out: &Path| {
        let mut args = vec!["run".to_string(), "--out".into(), p(out)];
        args.extend(common.iter().map(|s| s.to_string()));
        blockmc(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let (a, b) = (d.join("a"), d.join("b"));
    let ok_runs = run(&a).status.code() == Some(0) && run(&b).status.code() == Some(0);
    let identical = ["chain_1.csv", "chain_2.csv"]
        .iter()
        .all(|f| fs::read(a.join(f)).ok().is_some() && fs::read(a.join(f)).ok() == fs::read(b.join(f)).ok());

    let report = d.join("report.json");
    let mut args = vec!["validate".to_string(), "--short".into(), "--out".into(), p(&report)];
    args.extend(common.iter().map(|s| s.to_string()));
    let validate = blockmc(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let diag_out = d.join("diag.json");
    let diagnose = blockmc(&["diagnose", &p(&a.join("chain_1.csv")), &p(&a.join("chain_2.csv")), "--out", &p(&diag_out)]);
    let mut agree = validate.status.code().is_some_and(|c| c == 0 || c == 3) && diagnose.status.code() == Some(0);
    let mut worst: f64 = 0.0;
    if agree {
        let read = |f: &Path| serde_json::from_str::<Json>(&fs::read_to_string(f).unwrap()).unwrap();
        let (dj, rj) = (read(&diag_out), read(&report));
        for (dk, rk) in [("rhat", &rj["rhat"]["params"]), ("ess_bulk", &rj["ess"]["bulk"]), ("ess_tail", &rj["ess"]["tail"])] {
            let (dv, rv) = (dj[dk].as_array().unwrap(), rk.as_array().unwrap());
            agree &= dv.len() == rv.len() && !dv.is_empty();
            for (x, y) in dv.iter().zip(rv) {
                agree &= x["name"] == y["name"];
                let (x, y) = (x["value"].as_f64().unwrap(), y["value"].as_f64().unwrap());
                worst = worst.max((x - y).abs() / y.abs().max(1.0));
            }
        }
        agree &= worst <= 1e-12;
    }

    let empty = d.join("empty.txt");
    fs::write(&empty, "").map_err(|e| e.to_string())?;
    let blow = d.join("blow.txt");
    fs::write(&blow, "model m\nsize N\ndata y : real[N]\nparam mu : real ~ normal(0, 1)\ny[i] ~ normal(mu, 1)\nblock mu : normal_gibbs\n")
        .map_err(|e| e.to_string())?;
    let blow_data = d.join("blow.json");
    fs::write(&blow_data, r#"{"y": [1e308, 1e308]}"#).map_err(|e| e.to_string())?;
    let codes = [
        blockmc(&["templates"]).status.code(),
        blockmc(&["run", "--spec", &p(&empty), "--out", &p(&d.join("x"))]).status.code(),
        blockmc(&["run", "--spec", &p(&blow), "--data", &p(&blow_data), "--burnin", "2", "--keep", "2", "--out", &p(&d.join("y"))])
            .status
            .code(),
        blockmc(&[
            "validate", "--spec", "eight_schools_centered", "--short", "--burnin", "200", "--keep", "1000",
            "--inject-gradient-fault", "tau ~ half_cauchy", "--out", &p(&d.join("f.json")),
        ])
        .status
        .code(),
    ];
    let exits = codes == [Some(0), Some(1), Some(2), Some(3)];
    check(
        ok_runs && identical && agree && exits,
        format!("reruns byte-identical {identical}; diagnose vs validate max rel diff {worst:.1e}; exit codes {codes:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("conjugate exactness", conjugate),
        ("gradient audit", gradients),
        ("FFBS oracle", ffbs),
        ("NUTS correctness", nuts),
        ("statefulness", statefulness),
        ("prediction DAG", prediction_dag),
        ("diagnostics oracle", diagnostics_oracle),
        ("full checklist", full_checklist),
        ("PSIS-LOO behaviour", psis),
        ("PPC sensitivity", ppc),
        ("CLI golden files", cli_golden),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail} [{:.1}s]", i + 1, t.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed in {:.0}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
