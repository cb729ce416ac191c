//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use masque::config::RunConfig;
use masque::data::{encode_example, expand_instances, read_jsonl, synth_corpus, RawExample, SynthSpec, Vocabulary};
use masque::decoder::{combined_passage_attention, final_distribution};
use masque::eval::{bleu_1, map_mrr, pr_curve_max_f1, rouge_l, Normalize};
use masque::reader::dual_attention;
use masque::training::{decoder_loss, load_checkpoint, lr_at_step, save_checkpoint, smooth_label};
use masque::{Graph, Masque, RankerSource, Tensor};
use masque_cli::Prediction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIST_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-6;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

struct Suite {
    dir: PathBuf,
    outcomes: Vec<Outcome>,
}

impl Suite {
    fn record(&mut self, id: usize, name: &'static str, start: Instant, pass: bool, detail: String) {
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {id:>2} ({name}): {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
        self.outcomes.push(Outcome { id, name, pass, detail, secs });
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn cli(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("masque").chain(args.iter().copied()).map(String::from).collect();
    masque_cli::run(argv)
}

fn cli_ok(args: &[&str]) {
    let code = cli(args);
    assert_eq!(code, 0, "masque {} exited with {code}", args.join(" "));
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// `metric -> (value, compare value, delta)` from an eval report.
fn read_report(path: &Path) -> HashMap<String, Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let vals = cols[1..].iter().map(|c| c.parse().unwrap_or(f64::NAN)).collect::<Vec<_>>();
            // drop the item counts: columns are n, value[, compare_n, compare_value, delta]
            let vals = match vals.len() {
                2 => vec![vals[1]],
                5 => vec![vals[1], vals[3], vals[4]],
                _ => panic!("unexpected report row {line:?}"),
            };
            (cols[0].to_string(), vals)
        })
        .collect()
}

/// Mean answer length per style from a trace summary.
fn read_lengths(path: &Path) -> HashMap<String, f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("length,"))
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[1].to_string(), cols[4].parse().unwrap())
        })
        .collect()
}

fn rand_dist(n: usize, r: &mut ChaCha8Rng, peaky: bool) -> Vec<f64> {
    let w: Vec<f64> = (0..n)
        .map(|_| if peaky { r.gen_range(-8.0f64..8.0).exp() } else { r.gen_range(0.0..1.0) })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn desk(cfg: &mut Vec<String>, extra: &[(&str, &str)]) {
    for (k, v) in extra {
        cfg.push("--set".into());
        cfg.push(format!("{k}={v}"));
    }
}

// ---------------------------------------------------------------- criterion 1

fn gradient_suite(s: &mut Suite) {
    let start = Instant::now();
    let cfg = RunConfig::from_json(masque_cli::TOY_PRESET).unwrap();
    let report = masque_cli::gradient_report(&cfg, 2, 3, 1e-3).unwrap();
    let code = cli(&["gradcheck"]);
    let secs = start.elapsed().as_secs_f64();
    let pass = cfg.model.d == 16 && cfg.data.k == 2 && report.max_rel_err < 1e-4 && code == 0 && secs < 120.0;
    s.record(
        1,
        "gradient suite",
        start,
        pass,
        format!(
            "d={} K={} max rel. err {:.3e} over {} coords (< 1e-4), gradcheck exit {code}",
            cfg.model.d, cfg.data.k, report.max_rel_err, report.checked
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

struct DistStats {
    slices: usize,
    worst_sum: f64,
    min_entry: f64,
}

impl DistStats {
    fn rows(&mut self, t: &Tensor) {
        for r in 0..t.rows() {
            self.slice(t.row(r));
        }
    }

    fn columns(&mut self, t: &Tensor) {
        for c in 0..t.cols() {
            let col: Vec<f64> = (0..t.rows()).map(|r| t.get2(r, c)).collect();
            self.slice(&col);
        }
    }

    fn slice(&mut self, xs: &[f64]) {
        let sum: f64 = xs.iter().sum();
        self.slices += 1;
        self.worst_sum = self.worst_sum.max((sum - 1.0).abs());
        self.min_entry = xs.iter().copied().fold(self.min_entry, f64::min);
    }
}

fn distribution_invariants(s: &mut Suite) {
    let start = Instant::now();
    let mut stats = DistStats { slices: 0, worst_sum: 0.0, min_entry: f64::INFINITY };
    let mut instances = 0;
    let mut bounded = true;
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for m in 0..10u64 {
        let mut cfg = RunConfig::from_json(masque_cli::TOY_PRESET).unwrap();
        cfg.data.k = 2 + (m as usize % 3);
        cfg.model.init_std = r.gen_range(0.1..1.5);
        let spec = SynthSpec { k: cfg.data.k, n_keys: 20, unanswerable_frac: 0.3, ..SynthSpec::default() };
        let corpus = synth_corpus(100, 100 + m, &spec);
        let vocab = Vocabulary::build(&corpus, 40, &["qa", "nlg"]).unwrap();
        let (model, ps) = Masque::new::<f64>(&cfg.model, vocab.common_size(), cfg.data.k, m).unwrap();
        for raw in &corpus {
            let style = if r.gen_bool(0.5) { "qa" } else { "nlg" };
            let ex = encode_example(raw, &vocab, style, &cfg.data.limits()).unwrap();
            let mut g = Graph::new(false);
            let out = model.forward(&mut g, &ps, &ex, RankerSource::Live).unwrap();
            instances += 1;
            for (a, b) in out.reader.dual.a.iter().zip(&out.reader.dual.b) {
                stats.rows(g.value(*a));
                stats.columns(g.value(*b));
            }
            let mix = &out.mixture;
            for v in [mix.alpha_q, mix.alpha_p_word, mix.alpha_p, mix.lambda, mix.p_v, mix.p] {
                stats.rows(g.value(v));
            }
            let in_unit = |x: f64| (0.0..=1.0).contains(&x);
            bounded &= g.value(out.beta).data().iter().all(|&x| in_unit(x));
            bounded &= in_unit(g.value(out.answer_prob).data()[0]);
        }
    }
    let pass = instances == 1000 && stats.worst_sum <= DIST_TOL && stats.min_entry >= 0.0 && bounded;
    s.record(
        2,
        "distribution invariants",
        start,
        pass && start.elapsed().as_secs_f64() < 60.0,
        format!(
            "{instances} instances, {} slices, max |sum-1| {:.2e} (<= 1e-9), min entry {:.2e}, scores in [0,1]: {bounded}",
            stats.slices, stats.worst_sum, stats.min_entry
        ),
    );
}

// ---------------------------------------------------------------- criterion 3

fn pointer_generator_oracle(s: &mut Suite) {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_final, mut worst_comb, mut worst_equal) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let t = r.gen_range(1..4);
        let v_ext = r.gen_range(2..=40);
        let j = r.gen_range(1..8);
        let k = r.gen_range(1..5);
        let per = r.gen_range(1..6);
        let l = k * per;
        let q_ids: Vec<usize> = (0..j).map(|_| r.gen_range(0..v_ext)).collect();
        let p_ids: Vec<usize> = (0..l).map(|_| r.gen_range(0..v_ext)).collect();
        let k_of_l: Vec<usize> = (0..l).map(|i| i / per).collect();
        let peaky = r.gen_bool(0.5);
        let rows = |n: usize, r: &mut ChaCha8Rng| (0..t).flat_map(|_| rand_dist(n, r, peaky)).collect::<Vec<_>>();
        let (pv, aq, ap, lam) = (rows(v_ext, &mut r), rows(j, &mut r), rows(l, &mut r), rows(3, &mut r));
        let beta: Vec<f64> = (0..k).map(|_| r.gen_range(0.01..1.0)).collect();

        let mut g = Graph::new(false);
        let pv_v = g.constant(tensor(&[t, v_ext], pv.clone()));
        let aq_v = g.constant(tensor(&[t, j], aq.clone()));
        let ap_v = g.constant(tensor(&[t, l], ap.clone()));
        let lam_v = g.constant(tensor(&[t, 3], lam.clone()));
        let out = final_distribution(&mut g, pv_v, aq_v, &q_ids, ap_v, &p_ids, lam_v).unwrap();
        let got = g.value(out);
        for row in 0..t {
            for w in 0..v_ext {
                let mut want = lam[row * 3] * pv[row * v_ext + w];
                for (jj, &id) in q_ids.iter().enumerate() {
                    if id == w {
                        want += lam[row * 3 + 1] * aq[row * j + jj];
                    }
                }
                for (ll, &id) in p_ids.iter().enumerate() {
                    if id == w {
                        want += lam[row * 3 + 2] * ap[row * l + ll];
                    }
                }
                worst_final = worst_final.max((got.get2(row, w) - want).abs());
            }
        }

        let beta_v = g.constant(tensor(&[k], beta.clone()));
        let comb = combined_passage_attention(&mut g, ap_v, beta_v, &k_of_l).unwrap();
        let comb = g.value(comb).clone();
        for row in 0..t {
            let denom = (0..l).map(|ll| ap[row * l + ll] * beta[k_of_l[ll]]).sum::<f64>().max(1e-12);
            for ll in 0..l {
                let want = ap[row * l + ll] * beta[k_of_l[ll]] / denom;
                worst_comb = worst_comb.max((comb.get2(row, ll) - want).abs());
            }
        }
        let c = r.gen_range(0.05..1.0);
        let equal = g.constant(tensor(&[k], vec![c; k]));
        let same = combined_passage_attention(&mut g, ap_v, equal, &k_of_l).unwrap();
        for (x, y) in g.value(same).data().iter().zip(&ap) {
            worst_equal = worst_equal.max((x - y).abs());
        }
    }
    let pass = worst_final <= ORACLE_TOL && worst_comb <= ORACLE_TOL && worst_equal <= ORACLE_TOL;
    s.record(
        3,
        "pointer-generator oracle",
        start,
        pass,
        format!(
            "200 cases, V_ext <= 40: final P err {worst_final:.2e}, combined attention err {worst_comb:.2e}, equal-beta identity err {worst_equal:.2e} (<= 1e-12)"
        ),
    );
}

// ---------------------------------------------------------------- criterion 4

type Mat = Vec<Vec<f64>>;

fn softmax_masked(xs: &[f64], keep: &[bool]) -> Vec<f64> {
    let m = xs.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().zip(keep).map(|(x, &k)| if k { (x - m).exp() } else { 0.0 }).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `X Y` for column lists: `x` is d×n, `y` is n×m, result d×m.
fn mm(x: &Mat, y: &Mat) -> Mat {
    let d = x[0].len();
    y.iter()
        .map(|col| (0..d).map(|r| col.iter().enumerate().map(|(i, w)| w * x[i][r]).sum()).collect())
        .collect()
}

fn had(x: &Mat, y: &Mat) -> Mat {
    x.iter().zip(y).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u * v).collect()).collect()
}

fn vcat(parts: &[&Mat]) -> Mat {
    (0..parts[0].len()).map(|c| parts.iter().flat_map(|p| p[c].clone()).collect()).collect()
}

/// Returns the fused passage representations and the fused question representation.
fn dual_oracle(w: &[f64], eq: &Mat, qmask: &[bool], eps: &[Mat], pmasks: &[Vec<bool>]) -> (Vec<Mat>, Mat) {
    let d = eq[0].len();
    let j = eq.len();
    let (mut g_qp, mut bbar_all, mut bbar2_all) = (Vec::new(), Vec::new(), Vec::new());
    for (ep, pm) in eps.iter().zip(pmasks) {
        let l = ep.len();
        let u: Mat = (0..l)
            .map(|li| {
                (0..j)
                    .map(|ji| {
                        (0..d)
                            .map(|r| w[r] * ep[li][r] + w[d + r] * eq[ji][r] + w[2 * d + r] * ep[li][r] * eq[ji][r])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let a: Mat = (0..l).map(|li| softmax_masked(&u[li], qmask)).collect();
        let b: Mat = (0..j).map(|ji| softmax_masked(&(0..l).map(|li| u[li][ji]).collect::<Vec<_>>(), pm)).collect();
        let abar = mm(eq, &a);
        let bbar = mm(ep, &b);
        let abar2 = mm(&bbar, &a);
        let bbar2 = mm(&abar, &b);
        g_qp.push(vcat(&[ep, &abar, &abar2, &had(ep, &abar), &had(ep, &abar2)]));
        bbar_all.push(bbar);
        bbar2_all.push(bbar2);
    }
    let maxk = |all: &Vec<Mat>| -> Mat {
        (0..j)
            .map(|c| (0..d).map(|r| all.iter().map(|m| m[c][r]).fold(f64::NEG_INFINITY, f64::max)).collect())
            .collect()
    };
    let (bb, bb2) = (maxk(&bbar_all), maxk(&bbar2_all));
    (g_qp, vcat(&[eq, &bb, &bb2, &had(eq, &bb), &had(eq, &bb2)]))
}

fn columns(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn max_diff(t: &Tensor, m: &Mat) -> f64 {
    columns(t)
        .iter()
        .zip(m)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn random_mask(n: usize, r: &mut ChaCha8Rng) -> Vec<bool> {
    let mut m: Vec<bool> = (0..n).map(|_| r.gen_bool(0.8)).collect();
    let i = r.gen_range(0..n);
    m[i] = true;
    m
}

fn dual_attention_oracle(s: &mut Suite) {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let d = r.gen_range(2..7);
        let j = r.gen_range(1..6);
        let k = r.gen_range(1..4);
        let l = r.gen_range(1..7);
        let mut rand_t = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            tensor(shape, (0..n).map(|_| r.gen_range(-1.5..1.5)).collect())
        };
        let eq = rand_t(&[j, d]);
        let eps: Vec<Tensor> = (0..k).map(|_| rand_t(&[l, d])).collect();
        let w = rand_t(&[3 * d]);
        let qmask = random_mask(j, &mut r);
        let pmasks: Vec<Vec<bool>> = (0..k).map(|_| random_mask(l, &mut r)).collect();

        let mut g = Graph::new(false);
        let wv = g.constant(w.clone());
        let qv = g.constant(eq.clone());
        let pv: Vec<_> = eps.iter().map(|e| g.constant(e.clone())).collect();
        let out = dual_attention(&mut g, wv, qv, &qmask, &pv, &pmasks).unwrap();
        let (g_qp, g_pq) = dual_oracle(w.data(), &columns(&eq), &qmask, &eps.iter().map(columns).collect::<Vec<_>>(), &pmasks);
        for (v, m) in out.g_q_to_p.iter().zip(&g_qp) {
            worst = worst.max(max_diff(g.value(*v), m));
        }
        worst = worst.max(max_diff(g.value(out.g_p_to_q), &g_pq));
    }
    s.record(
        4,
        "dual-attention oracle",
        start,
        worst <= ORACLE_TOL,
        format!("50 cases, max |module - transcription| {worst:.2e} (<= 1e-12)"),
    );
}

// ---------------------------------------------------------------- criterion 5

/// Settings shared by the trained runs; the toy configuration is the desk
/// default with dropout off and a 40-token vocabulary.
const DESK: [(&str, &str); 5] = [
    ("data.vocab_size", "40"),
    ("model.dropout", "0"),
    ("train.peak_lr", "2e-3"),
    ("train.ema_decay", "0.99"),
    ("train.seed", "0"),
];

fn train(data: &Path, out: &Path, extra: &[(&str, &str)]) {
    let mut args: Vec<String> = ["train", "--data", p(data), "--out", p(out), "--log-every", "0"]
        .iter()
        .map(|x| x.to_string())
        .collect();
    desk(&mut args, &DESK);
    desk(&mut args, extra);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    cli_ok(&refs);
}

fn decode(out: &Path, ckpt: &Path, data: &Path, style: &str, extra: &[&str]) {
    let mut args = vec!["decode", "--ckpt", p(ckpt), "--data", p(data), "--style", style, "--out", p(out)];
    args.extend_from_slice(extra);
    cli_ok(&args);
}

fn eval(out: &Path, pred: &Path, data: &Path, metrics: &str, compare: Option<&Path>) -> HashMap<String, Vec<f64>> {
    let mut args = vec!["eval", "--pred", p(pred), "--data", p(data), "--metrics", metrics, "--out", p(out)];
    if let Some(c) = compare {
        args.extend_from_slice(&["--compare", p(c)]);
    }
    cli_ok(&args);
    read_report(out)
}

/// Teacher-forced decoder loss of the shadow parameters over every training instance.
fn training_set_l_dec(ckpt: &Path, data: &Path) -> f64 {
    let c = load_checkpoint::<f64>(ckpt).unwrap();
    let vocab: Vocabulary = serde_json::from_str(&fs::read_to_string(ckpt.join("vocab.json")).unwrap()).unwrap();
    let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(ckpt.join("config.json")).unwrap()).unwrap();
    let corpus: Vec<RawExample> = read_jsonl(data).unwrap();
    let instances = expand_instances(&corpus, &vocab, &cfg.data.limits(), &cfg.data.mixing()).unwrap();
    let params = c.state.ema_params(&c.params);
    let mut g = Graph::new(false);
    let mut items = Vec::new();
    for ex in &instances {
        let out = c.model.forward(&mut g, &params, ex, RankerSource::Live).unwrap();
        items.push((out.mixture.p, ex));
    }
    let loss = decoder_loss(&mut g, &items).unwrap().unwrap();
    g.value(loss).data()[0]
}

fn overfit(s: &mut Suite) {
    let start = Instant::now();
    let data = s.path("overfit.jsonl");
    cli_ok(&["synth", "--n", "40", "--seed", "1", "--n-keys", "20", "--out", p(&data)]);
    let ckpt = s.path("overfit");
    train(&data, &ckpt, &[("train.total_steps", "1000"), ("train.warmup_steps", "100"), ("train.batch_size", "8")]);
    let l_dec = training_set_l_dec(&ckpt, &data);
    let mut em = Vec::new();
    for style in ["qa", "nlg"] {
        let pred = s.path(&format!("overfit-{style}.jsonl"));
        decode(&pred, &ckpt, &data, style, &[]);
        let report = eval(&s.path(&format!("overfit-{style}.csv")), &pred, &data, "em", None);
        em.push((style, report["exact_match"][0]));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = l_dec < 0.05 && em.iter().all(|(_, v)| *v >= 0.95) && secs < 900.0;
    s.record(
        5,
        "overfit",
        start,
        pass,
        format!(
            "40 examples, 1000 steps: training-set L_dec {l_dec:.4} (< 0.05), exact match qa {:.3} nlg {:.3} (>= 0.95)",
            em[0].1, em[1].1
        ),
    );
}

// ---------------------------------------------------------- criteria 6, 7, 8

struct Trained {
    main: PathBuf,
    ablation: PathBuf,
    held: PathBuf,
    mixed: PathBuf,
}

fn train_models(s: &mut Suite) -> Trained {
    let train_data = s.path("train.jsonl");
    let held = s.path("held.jsonl");
    let mixed = s.path("mixed.jsonl");
    cli_ok(&["synth", "--n", "1000", "--seed", "11", "--unanswerable-frac", "0.3", "--n-keys", "20", "--out", p(&train_data)]);
    cli_ok(&["synth", "--n", "200", "--seed", "12", "--n-keys", "20", "--id-prefix", "h", "--out", p(&held)]);
    cli_ok(&[
        "synth", "--n", "300", "--seed", "13", "--unanswerable-frac", "0.3", "--n-keys", "20", "--id-prefix", "m", "--out",
        p(&mixed),
    ]);
    let schedule = [("train.total_steps", "1000"), ("train.warmup_steps", "100"), ("train.batch_size", "16")];
    let main = s.path("main");
    let mut with_snapshot = schedule.to_vec();
    with_snapshot.push(("train.checkpoint_every", "500"));
    train(&train_data, &main, &with_snapshot);
    let ablation = s.path("ablation");
    let mut abl = schedule.to_vec();
    abl.extend([("train.gamma_rank", "0"), ("train.gamma_cls", "0")]);
    train(&train_data, &ablation, &abl);
    Trained { main, ablation, held, mixed }
}

fn val_of(raw: &RawExample) -> String {
    raw.reference("qa").expect("answerable held-out example").to_string()
}

fn style_control(s: &mut Suite, t: &Trained, start: Instant) {
    let held: Vec<RawExample> = read_jsonl(&t.held).unwrap();
    let vocab: Vocabulary = serde_json::from_str(&fs::read_to_string(t.main.join("vocab.json")).unwrap()).unwrap();
    let oov = held.iter().filter(|r| vocab.id(&val_of(r)).is_none()).count();
    let by_id: HashMap<&str, &RawExample> = held.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let mut shape = HashMap::new();
    let mut copy = HashMap::new();
    let mut lengths = HashMap::new();
    for style in ["qa", "nlg"] {
        let pred = s.path(&format!("held-{style}.jsonl"));
        let trace = s.path(&format!("held-{style}-trace.jsonl"));
        decode(&pred, &t.main, &t.held, style, &["--trace", p(&trace)]);
        let preds: Vec<Prediction> = read_jsonl(&pred).unwrap();
        let matches = preds
            .iter()
            .filter(|pr| {
                let toks: Vec<&str> = pr.answer.split_whitespace().collect();
                match style {
                    "qa" => toks.len() == 1,
                    _ => {
                        toks.len() == 7
                            && toks[..3] == ["the", "value", "of"]
                            && toks[4] == "is"
                            && toks[6] == "."
                            && toks[3].starts_with('k')
                            && toks[5].starts_with("v_")
                    }
                }
            })
            .count();
        let val_ok = preds
            .iter()
            .filter(|pr| pr.answer.split_whitespace().any(|w| w == val_of(by_id[pr.query_id.as_str()])))
            .count();
        shape.insert(style, matches as f64 / preds.len() as f64);
        copy.insert(style, val_ok as f64 / preds.len() as f64);
        let summary = s.path(&format!("held-{style}-trace.csv"));
        cli_ok(&["trace", "--in", p(&trace), "--out", p(&summary)]);
        lengths.insert(style, read_lengths(&summary)[style]);
    }
    let diff = lengths["nlg"] - lengths["qa"];
    let pass = shape.values().all(|&v| v >= 0.9) && copy.values().all(|&v| v >= 0.8) && (diff - 6.0).abs() <= 0.5;
    s.record(
        6,
        "style control",
        start,
        pass,
        format!(
            "200 held-out ({oov} VALs outside V): template qa {:.3} nlg {:.3} (>= 0.9), VAL copied qa {:.3} nlg {:.3} (>= 0.8), mean length nlg {:.2} - qa {:.2} = {diff:.2} (6 +/- 0.5)",
            shape["qa"], shape["nlg"], copy["qa"], copy["nlg"], lengths["nlg"], lengths["qa"]
        ),
    );
}

fn multi_task(s: &mut Suite, t: &Trained) {
    let start = Instant::now();
    let pred = s.path("mixed-qa.jsonl");
    decode(&pred, &t.main, &t.mixed, "qa", &[]);
    let report = eval(&s.path("mixed-qa.csv"), &pred, &t.mixed, "map,mrr,f1", None);
    let (map, mrr, f1) = (report["map"][0], report["mrr"][0], report["max_f1"][0]);

    let abl_pred = s.path("ablation-held-nlg.jsonl");
    decode(&abl_pred, &t.ablation, &t.held, "nlg", &["--answerable-threshold", "0"]);
    let preds: Vec<Prediction> = read_jsonl(&abl_pred).unwrap();
    let answered = preds.iter().filter(|p| !p.answer.is_empty()).count();
    let abl = eval(&s.path("ablation-held-nlg.csv"), &abl_pred, &t.held, "rouge,copy", None);
    let pass = map >= 0.95 && f1 >= 0.95 && answered == preds.len();
    s.record(
        7,
        "multi-task heads",
        start,
        pass,
        format!(
            "held-out 300 (30% unanswerable): MAP {map:.4} MRR {mrr:.4} (>= 0.95), max F1 {f1:.4} (>= 0.95); ablation gamma=0 decodes {answered}/{} non-empty, ROUGE-L {:.3}, VAL copy {:.3}",
            preds.len(),
            abl["rouge_l"][0],
            abl["copy_accuracy"][0]
        ),
    );
}

fn gold_ranker(s: &mut Suite, t: &Trained) {
    let start = Instant::now();
    let halfway = t.main.join("step-000500");
    let mut deltas = Vec::new();
    for (name, ckpt, threshold) in [("main", &t.main, "0.5"), ("main@500", &halfway, "0.5"), ("ablation", &t.ablation, "0")] {
        let live = s.path(&format!("{name}-live-nlg.jsonl"));
        let gold = s.path(&format!("{name}-gold-nlg.jsonl"));
        decode(&live, ckpt, &t.held, "nlg", &["--answerable-threshold", threshold]);
        decode(&gold, ckpt, &t.held, "nlg", &["--gold-ranker", "--answerable-threshold", threshold]);
        let report = eval(&s.path(&format!("{name}-gold.csv")), &live, &t.held, "copy,rouge", Some(&gold));
        let row = &report["copy_accuracy"];
        deltas.push((name, row[0], row[1], row[2]));
    }
    let measurable = deltas.iter().any(|d| d.3.abs() >= 1.0 / 200.0 - 1e-12);
    let detail = deltas
        .iter()
        .map(|(n, live, gold, d)| format!("{n}: live {live:.3} -> gold {gold:.3} ({d:+.3})"))
        .collect::<Vec<_>>()
        .join("; ");
    s.record(8, "gold-ranker diagnostic", start, measurable, format!("VAL copy accuracy {detail}; margin >= 1 example"));
}

// ---------------------------------------------------------------- criterion 9

fn metric_oracles(s: &mut Suite) {
    let start = Instant::now();
    let n = Normalize::default();
    let refs = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let close = |a: f64, b: f64| (a - b).abs() <= METRIC_TOL;
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let f = rouge_l("a b c d", &refs(&["a c d"]), n);
    let b2 = 1.2f64 * 1.2;
    checks.push(("rouge_l lcs 3 of 4/3", close(f, (1.0 + b2) * 1.0 * 0.75 / (1.0 + b2 * 0.75))));
    checks.push(("rouge_l identity", rouge_l("the cat sat", &refs(&["the cat sat"]), n) == 1.0));
    checks.push(("rouge_l disjoint", rouge_l("x y", &refs(&["a b"]), n) == 0.0));

    let clipped = bleu_1(&[("a a".into(), refs(&["a b c"]))], n).unwrap();
    checks.push(("bleu_1 clipping + BP", close(clipped, 0.5 * (1.0f64 - 1.5).exp())));
    let same = bleu_1(&[("a b".into(), refs(&["a b"])), ("c".into(), refs(&["c"]))], n).unwrap();
    checks.push(("bleu_1 identity", same == 1.0));

    let (map, mrr) = map_mrr(&[(vec![0.1, 0.9, 0.5], vec![true, false, false])]).unwrap();
    checks.push(("map/mrr rank 3", close(map, 1.0 / 3.0) && close(mrr, 1.0 / 3.0)));
    let (map2, _) = map_mrr(&[(vec![0.9, 0.5, 0.4], vec![true, false, true])]).unwrap();
    checks.push(("map two relevant", close(map2, 5.0 / 6.0)));
    let perfect = map_mrr(&[(vec![0.9, 0.1], vec![true, false]), (vec![0.2, 0.8], vec![false, true])]).unwrap();
    checks.push(("map/mrr identity", perfect == (1.0, 1.0)));

    let sep = pr_curve_max_f1(&[0.9, 0.8, 0.2], &[true, true, false]);
    checks.push(("max F1 separable", sep.max_f1 == 1.0 && sep.best_threshold == 0.8));
    let c = pr_curve_max_f1(&[0.9, 0.6, 0.4, 0.1], &[true, true, false, true]);
    checks.push(("max F1 6/7", close(c.max_f1, 6.0 / 7.0) && c.best_threshold == 0.1));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    s.record(
        9,
        "metric oracles",
        start,
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} hand-derived cases within 1e-6", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
}

// --------------------------------------------------------------- criterion 10

fn recipe_checks(s: &mut Suite) {
    let start = Instant::now();
    let cfg = masque::config::TrainConfig::default();
    let lrs: Vec<f64> = [0, 1000, 2000, cfg.total_steps].iter().map(|&t| lr_at_step(t, &cfg).unwrap()).collect();
    let lr_ok = lrs[0] == 0.0 && (lrs[1] - 1.25e-4).abs() < 1e-15 && (lrs[2] - 2.5e-4).abs() < 1e-15 && lrs[3].abs() < 1e-15;
    let smooth_ok = smooth_label(true, cfg.label_smooth_pos) == 0.9 && smooth_label(false, cfg.label_smooth_pos) == 0.0;

    let data = s.path("overfit.jsonl");
    let run = |name: &str| {
        let out = s.path(name);
        train(&data, &out, &[("train.total_steps", "20"), ("train.warmup_steps", "2"), ("model.dropout", "0.1"), ("train.seed", "5")]);
        out
    };
    let (a, b) = (run("seeded-a"), run("seeded-b"));
    let bytes = |dir: &Path, f: &str| fs::read(dir.join(f)).unwrap();
    let identical = ["params.bin", "metrics.csv", "manifest.json"].iter().all(|f| bytes(&a, f) == bytes(&b, f));

    let loaded = load_checkpoint::<f64>(&a).unwrap();
    let copy = s.path("roundtrip");
    save_checkpoint(&copy, &loaded.model, &loaded.manifest.train, &loaded.params, &loaded.state, loaded.manifest.extra.clone())
        .unwrap();
    let again = load_checkpoint::<f64>(&copy).unwrap();
    let roundtrip = bytes(&a, "params.bin") == bytes(&copy, "params.bin")
        && again.params == loaded.params
        && again.state == loaded.state;

    s.record(
        10,
        "recipe checks",
        start,
        lr_ok && smooth_ok && identical && roundtrip,
        format!(
            "lr at 0/1000/2000/{} = {:.3e}/{:.3e}/{:.3e}/{:.1e}: {lr_ok}; smoothing 1 -> 0.9: {smooth_ok}; checkpoint round-trip bit-exact: {roundtrip}; seeded runs bit-identical: {identical}",
            cfg.total_steps, lrs[0], lrs[1], lrs[2], lrs[3]
        ),
    );
}

fn main() {
    std::env::set_var("RUST_LOG", "warn");
    let dir = tempfile::tempdir().unwrap();
    let mut suite = Suite { dir: dir.path().to_path_buf(), outcomes: Vec::new() };
    let total = Instant::now();

    gradient_suite(&mut suite);
    distribution_invariants(&mut suite);
    pointer_generator_oracle(&mut suite);
    dual_attention_oracle(&mut suite);
    overfit(&mut suite);
    let start = Instant::now();
    let trained = train_models(&mut suite);
    style_control(&mut suite, &trained, start);
    multi_task(&mut suite, &trained);
    gold_ranker(&mut suite, &trained);
    metric_oracles(&mut suite);
    recipe_checks(&mut suite);

    suite.outcomes.sort_by_key(|o| o.id);
    let secs = total.elapsed().as_secs_f64();
    let failed: Vec<&Outcome> = suite.outcomes.iter().filter(|o| !o.pass).collect();
    println!();
    println!("acceptance summary ({secs:.0}s total, budget 1800s):");
    for o in &suite.outcomes {
        println!("  {} {:>2} {:<26} {:>7.1}s  {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.secs, o.detail);
    }
    if !failed.is_empty() || secs >= 1800.0 {
        println!("{} criteria failed", failed.len());
        std::process::exit(1);
    }
}
