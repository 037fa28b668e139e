//! Acceptance suite. Criteria run one after another inside a single test so
//! the timed ones are not competing with each other for CPU. Each prints a
//! `PASS` / `FAIL` line; run with `--nocapture` to see them.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wavclip_cli::{cmd_eval, cmd_synth, cmd_train};
use wavclip_core::data::{decode_embeddings, encode_embeddings, make_synthetic};
use wavclip_core::nn::{bce_with_logits, finite_diff_grad};
use wavclip_core::wavelet::{analysis_operators, dwt1d, dwt2d, idwt1d, idwt2d};
use wavclip_core::{
    auc, make_filter_bank, read_checkpoint, roc_curve, BaselineHeadParams, EmbeddingDataset, Family, Head, MlpParams,
    TrainConfig, WaveletHeadParams,
};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;
type Transform = fn(f64) -> f64;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn families_for(n: usize) -> Vec<Family> {
    [Family::Haar, Family::Db2]
        .into_iter()
        .filter(|&f| make_filter_bank(f).taps() <= n)
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn sum_sq<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum()
}

const LENGTHS: [usize; 4] = [2, 4, 8, 768];

/// Shared corpus for the reconstruction and energy criteria.
fn corpus() -> (Vec<Vec<f64>>, Vec<Array2<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut vectors = Vec::new();
    for n in LENGTHS {
        for _ in 0..1000 {
            vectors.push(random_vec(&mut rng, n));
        }
    }
    let matrices = (0..100).map(|_| random_matrix(&mut rng, 8, 8)).collect();
    (vectors, matrices)
}

fn perfect_reconstruction() -> Outcome {
    let (vectors, matrices) = corpus();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for x in &vectors {
        for family in families_for(x.len()) {
            let fb = make_filter_bank(family);
            let y = idwt1d(&fb, &dwt1d(&fb, x).unwrap()).unwrap();
            for (a, b) in x.iter().zip(&y) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    for m in &matrices {
        for family in families_for(8) {
            let fb = make_filter_bank(family);
            let y = idwt2d(&fb, &dwt2d(&fb, m.view()).unwrap()).unwrap();
            worst = worst.max((&y - m).iter().fold(0.0, |w, d| w.max(d.abs())));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(5),
        format!("max |idwt(dwt(x)) - x| = {worst:.2e} (tol 1e-10), {:.3} s (limit 5 s)", elapsed.as_secs_f64()),
    )
}

fn energy_conservation() -> Outcome {
    let (vectors, matrices) = corpus();
    let mut worst: f64 = 0.0;
    let rel = |parts: f64, whole: f64| (parts - whole).abs() / whole;
    for x in &vectors {
        for family in families_for(x.len()) {
            let sb = dwt1d(&make_filter_bank(family), x).unwrap();
            worst = worst.max(rel(sum_sq(&sb.low) + sum_sq(&sb.high), sum_sq(x)));
        }
    }
    for m in &matrices {
        for family in families_for(8) {
            let sb = dwt2d(&make_filter_bank(family), m.view()).unwrap();
            let parts = sum_sq(&sb.ll) + sum_sq(&sb.lh) + sum_sq(&sb.hl) + sum_sq(&sb.hh);
            worst = worst.max(rel(parts, sum_sq(m)));
        }
    }
    outcome(worst <= 1e-10, format!("max relative energy error = {worst:.2e} (tol 1e-10)"))
}

fn operator_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    let max_dev = |a: &Array2<f64>, b: &Array2<f64>| (a - b).iter().fold(0.0f64, |w, d| w.max(d.abs()));
    for n in LENGTHS {
        for family in families_for(n) {
            let ops = analysis_operators(&make_filter_bank(family), n).unwrap();
            let (l, h) = (&ops.low, &ops.high);
            let half = Array2::<f64>::eye(n / 2);
            let zero = Array2::<f64>::zeros((n / 2, n / 2));
            worst = worst
                .max(max_dev(&l.dot(&l.t()), &half))
                .max(max_dev(&h.dot(&h.t()), &half))
                .max(max_dev(&l.dot(&h.t()), &zero))
                .max(max_dev(&(l.t().dot(l) + h.t().dot(h)), &Array2::eye(n)));
        }
    }
    outcome(worst <= 1e-10, format!("max entry error = {worst:.2e} over n in {LENGTHS:?} (tol 1e-10)"))
}

fn max_relative_grad_error<H: Head>(
    head: &H,
    z: &Array2<f64>,
    labels: &[u8],
    rebuild: impl Fn(usize, &MlpParams) -> H,
) -> f64 {
    let (_, analytic) = head.loss_and_grads(z.view(), labels, None).unwrap();
    let mut worst: f64 = 0.0;
    for (k, (params, grads)) in head.mlps().into_iter().zip(&analytic).enumerate() {
        let numeric = finite_diff_grad(params, 1e-5, |q| {
            let logits = rebuild(k, q).forward(z.view()).unwrap();
            bce_with_logits(logits.view(), labels).unwrap()
        })
        .unwrap();
        for (a, n) in grads.iter().zip(numeric.iter()) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
        }
    }
    worst
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let dim = [4, 6, 8][rng.random_range(0..3)];
        let family = if i % 2 == 0 { Family::Haar } else { Family::Db2 };
        let head = WaveletHeadParams::init(dim, rng.random_range(2..7), rng.random_range(2..7), family, i).unwrap();
        let rows = rng.random_range(3..9);
        let z = random_matrix(&mut rng, rows, dim) * 2.0;
        let labels: Vec<u8> = (0..rows).map(|r| (r % 2) as u8).collect();
        worst = worst.max(max_relative_grad_error(&head, &z, &labels, |k, q| {
            let mut h = head.clone();
            if k == 0 {
                h.low_mlp = q.clone();
            } else {
                h.cls_mlp = q.clone();
            }
            h
        }));
    }
    outcome(worst <= 1e-4, format!("max relative error = {worst:.2e} over 20 heads, h = 1e-5 (tol 1e-4)"))
}

fn identity_collapse() -> Outcome {
    let dim = 768;
    let baseline = BaselineHeadParams::init(dim, 256, 5).unwrap();
    let mut worst: f64 = 0.0;
    for family in [Family::Haar, Family::Db2] {
        let wavelet =
            WaveletHeadParams::new(MlpParams::identity(dim / 2), baseline.cls_mlp.clone(), make_filter_bank(family))
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let z = random_matrix(&mut rng, 1000, dim) * 3.0;
        let a = wavelet.forward(z.view()).unwrap();
        let b = baseline.forward(z.view()).unwrap();
        worst = worst.max((&a - &b).iter().fold(0.0, |w, d| w.max(d.abs())));
    }
    outcome(worst <= 1e-10, format!("max |wavelet - baseline| = {worst:.2e} on 1000 embeddings (tol 1e-10)"))
}

/// Pairwise count doubled: 2 per correctly ordered pair, 1 per tie.
fn brute_force_twice_u(scores: &[f64], labels: &[u8]) -> u64 {
    let mut twice = 0;
    for (i, &sp) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sn) in scores.iter().enumerate() {
            if labels[j] == 0 {
                twice += match sp.partial_cmp(&sn).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice
}

fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..=max_n);
    let levels = rng.random_range(1..=50);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.37 - 4.0).collect();
    (scores, labels)
}

fn counts(labels: &[u8]) -> (u64, u64) {
    let p = labels.iter().filter(|&&l| l == 1).count() as u64;
    (p, labels.len() as u64 - p)
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut mismatches = 0;
    let mut ties = 0;
    for _ in 0..100 {
        let (scores, labels) = random_instance(&mut rng, 1000);
        let (p, n) = counts(&labels);
        let oracle = brute_force_twice_u(&scores, &labels) as f64 / (2.0 * p as f64 * n as f64);
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        ties += usize::from(sorted.len() < scores.len());
        let ranked = auc(&scores, &labels).unwrap();
        let swept = roc_curve(&scores, &labels).unwrap().auc;
        if ranked != oracle || swept != oracle {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0 && ties > 0,
        format!("{mismatches} mismatches in 100 instances ({ties} with tied scores), exact equality"),
    )
}

/// Recover the integer Mann-Whitney count from a computed AUC.
fn twice_u_of(value: f64, p: u64, n: u64) -> u64 {
    (value * 2.0 * p as f64 * n as f64).round() as u64
}

fn metric_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let transforms: [(&str, Transform); 3] =
        [("2x+5", |x| 2.0 * x + 5.0), ("x^3", |x| x * x * x), ("exp(x/10)", |x| (x / 10.0).exp())];
    for case in 0..100 {
        let n = rng.random_range(2..=400);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-40..=40) as f64).collect();
        let base = roc_curve(&scores, &labels).unwrap();
        for (name, f) in transforms {
            let mapped: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            let r = roc_curve(&mapped, &labels).unwrap();
            if r.auc != base.auc || r.eer != base.eer || auc(&mapped, &labels).unwrap() != base.auc {
                failures.push(format!("case {case}: {name} changed AUC/EER"));
            }
        }
        let (p, q) = counts(&labels);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let k = twice_u_of(auc(&scores, &labels).unwrap(), p, q);
        let k_neg = twice_u_of(auc(&negated, &labels).unwrap(), p, q);
        if k + k_neg != 2 * p * q || k != brute_force_twice_u(&scores, &labels) {
            failures.push(format!("case {case}: AUC(-s) != 1 - AUC(s)"));
        }
    }
    let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
    let separable: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| f64::from(l) * 10.0 + i as f64 * 1e-3).collect();
    let inverted: Vec<f64> = separable.iter().map(|s| -s).collect();
    let sep = roc_curve(&separable, &labels).unwrap();
    let inv = roc_curve(&inverted, &labels).unwrap();
    if sep.eer != 0.0 || sep.auc != 1.0 {
        failures.push(format!("separable: AUC {} EER {}", sep.auc, sep.eer));
    }
    if inv.eer != 1.0 || inv.auc != 0.0 {
        failures.push(format!("inverted: AUC {} EER {}", inv.auc, inv.eer));
    }
    let detail = if failures.is_empty() {
        "monotone invariance and complement symmetry exact on 100 cases; EER 0 separable, 1 inverted".to_string()
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn pipeline(dir: &Path, n_per_class: usize, separation: f64, seed: u64) -> (f64, f64, String) {
    let data = dir.join("synthetic.wemb");
    cmd_synth(n_per_class, 768, separation, seed, &data).unwrap();
    let cfg = TrainConfig {
        seed,
        epochs: 10,
        train_fraction: 0.8,
        train_path: data.display().to_string(),
        checkpoint_path: dir.join("head.wchk").display().to_string(),
        trace_path: dir.join("trace.csv").display().to_string(),
        heldout_path: dir.join("heldout.wemb").display().to_string(),
        ..TrainConfig::default()
    };
    cmd_train(&cfg).unwrap();
    let report = cmd_eval(Path::new(&cfg.checkpoint_path), &[dir.join("heldout.wemb")], None).unwrap();
    let row = &report.rows[0];
    (row.roc.auc, row.roc.eer, report.to_csv())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (auc8, eer8, _) = pipeline(dir.path(), 2000, 8.0, 0);
    let elapsed = start.elapsed().as_secs_f64();
    let control = tempfile::tempdir().unwrap();
    let (auc0, _, _) = pipeline(control.path(), 2000, 0.0, 0);
    outcome(
        auc8 >= 0.99 && eer8 <= 0.05 && elapsed < 60.0 && (0.4..=0.6).contains(&auc0),
        format!(
            "separation 8: held-out AUC {auc8:.4} (>= 0.99), EER {eer8:.4} (<= 0.05), {elapsed:.1} s (< 60 s); \
             separation 0: AUC {auc0:.4} (in [0.4, 0.6])"
        ),
    )
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, _, csv_a) = pipeline(a.path(), 300, 4.0, 11);
    let (_, _, csv_b) = pipeline(b.path(), 300, 4.0, 11);
    // Checkpoints embed the config text, whose paths differ between the two
    // directories, so heads are compared after decoding.
    let same_files = ["synthetic.wemb", "trace.csv", "heldout.wemb"]
        .iter()
        .all(|f| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap())
        && read_checkpoint(a.path().join("head.wchk")).unwrap().head
            == read_checkpoint(b.path().join("head.wchk")).unwrap().head;
    outcome(
        csv_a == csv_b && same_files,
        format!(
            "CSV reports byte-identical: {}; data, checkpoint, trace, held-out identical: {same_files}",
            csv_a == csv_b
        ),
    )
}

// ---------------------------------------------------------------------------
// WEMB fuzzing

struct Layout {
    rows: Vec<RowLayout>,
    tags: Vec<(usize, usize)>,
}

struct RowLayout {
    id: (usize, usize),
    tag: usize,
    label: usize,
    values: usize,
}

const HEADER: usize = 24;

fn layout(ds: &EmbeddingDataset) -> Layout {
    let mut at = HEADER;
    let mut tags = Vec::new();
    for t in ds.tags() {
        tags.push((at + 4, t.len()));
        at += 4 + t.len();
    }
    let mut rows = Vec::new();
    for id in ds.ids() {
        let id_span = (at + 4, id.len());
        at += 4 + id.len();
        rows.push(RowLayout {
            id: id_span,
            tag: at,
            label: at + 4,
            values: at + 5,
        });
        at += 5 + 4 * ds.dim();
    }
    Layout { rows, tags }
}

fn fuzz_source() -> EmbeddingDataset {
    let base = make_synthetic(6, 8, 2.0, 3).unwrap();
    let mut ds = EmbeddingDataset::new(8);
    for i in 0..base.len() {
        let tag = format!("video-{}/{}", i / 3, i % 3);
        ds.push(&base.ids()[i], &tag, base.labels()[i], base.embedding(i)).unwrap();
    }
    ds
}

/// One structured corruption. Every operator yields a file the reader must reject.
fn mutate(rng: &mut ChaCha8Rng, good: &[u8], lay: &Layout, dim: usize) -> (&'static str, Vec<u8>) {
    let mut b = good.to_vec();
    let row = &lay.rows[rng.random_range(0..lay.rows.len())];
    let put_u32 = |b: &mut Vec<u8>, at: usize, v: u32| b[at..at + 4].copy_from_slice(&v.to_le_bytes());
    let kind = match rng.random_range(0..13) {
        0 => {
            b.truncate(rng.random_range(0..good.len()));
            "truncate"
        }
        1 => {
            let extra = rng.random_range(1..16);
            b.extend((0..extra).map(|_| rng.random::<u8>()));
            "trailing bytes"
        }
        2 => {
            let i = rng.random_range(0..4);
            b[i] ^= rng.random_range(1..=255u8);
            "magic"
        }
        3 => {
            let v = loop {
                let v: u16 = rng.random();
                if v != 1 {
                    break v;
                }
            };
            b[4..6].copy_from_slice(&v.to_le_bytes());
            "version"
        }
        4 => {
            b[6..8].copy_from_slice(&rng.random_range(1..=u16::MAX).to_le_bytes());
            "flags"
        }
        5 => {
            let n = lay.rows.len() as u64;
            let bumped = if rng.random() { n + rng.random_range(1..1 << 40) } else { rng.random_range(0..n) };
            b[8..16].copy_from_slice(&bumped.to_le_bytes());
            "record count"
        }
        6 => {
            b[row.label] = rng.random_range(2..=255);
            "label"
        }
        7 => {
            put_u32(&mut b, row.tag, rng.random_range(lay.tags.len() as u32..=u32::MAX));
            "tag index"
        }
        8 => {
            let at = row.values + 4 * rng.random_range(0..dim);
            let bad = [f32::NAN, f32::INFINITY, f32::NEG_INFINITY][rng.random_range(0..3)];
            b[at..at + 4].copy_from_slice(&bad.to_le_bytes());
            "non-finite value"
        }
        9 => {
            b[row.id.0 + rng.random_range(0..row.id.1)] = 0xFF;
            "id utf-8"
        }
        10 => {
            let other = &lay.rows[0];
            let target = &lay.rows[rng.random_range(1..lay.rows.len())];
            let src = good[other.id.0..other.id.0 + other.id.1].to_vec();
            b[target.id.0..target.id.0 + target.id.1].copy_from_slice(&src);
            "duplicate id"
        }
        11 => {
            let (at, len) = lay.tags[rng.random_range(0..lay.tags.len())];
            b[at + rng.random_range(0..len)] = 0xC0;
            "tag utf-8"
        }
        _ => {
            b[16..20].copy_from_slice(&0u32.to_le_bytes());
            "zero dim"
        }
    };
    (kind, b)
}

fn format_robustness() -> Outcome {
    let ds = fuzz_source();
    let good = encode_embeddings(&ds);
    assert_eq!(decode_embeddings(&good).unwrap(), ds);
    let lay = layout(&ds);
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut accepted = Vec::new();
    let mut panics = 0;
    let cases = 2000;
    for _ in 0..cases {
        let (kind, bytes) = mutate(&mut rng, &good, &lay, ds.dim());
        match catch_unwind(|| decode_embeddings(&bytes).is_ok()) {
            Ok(true) => accepted.push(kind),
            Ok(false) => {}
            Err(_) => panics += 1,
        }
    }
    // Unstructured bit flips may land in a float and still be a valid file;
    // here only the absence of panics is checked.
    let mut flip_panics = 0;
    for _ in 0..2000 {
        let mut bytes = good.clone();
        for _ in 0..rng.random_range(1..8) {
            let i = rng.random_range(0..bytes.len());
            bytes[i] ^= 1 << rng.random_range(0..8);
        }
        if catch_unwind(|| decode_embeddings(&bytes)).is_err() {
            flip_panics += 1;
        }
    }
    outcome(
        accepted.is_empty() && panics == 0 && flip_panics == 0,
        format!(
            "{cases} structured mutations: {} accepted {:?}, {panics} panics; 2000 bit-flip cases: {flip_panics} panics",
            accepted.len(),
            accepted.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

#[test]
fn primary_criteria() {
    let criteria: [(&str, Check); 10] = [
        ("perfect reconstruction", perfect_reconstruction),
        ("energy conservation", energy_conservation),
        ("operator identities", operator_identities),
        ("gradient correctness", gradient_check),
        ("identity collapse", identity_collapse),
        ("AUC oracle equivalence", auc_oracle),
        ("metric sanity", metric_sanity),
        ("end-to-end synthetic run", end_to_end),
        ("determinism", determinism),
        ("format robustness", format_robustness),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {:?}", e.downcast_ref::<String>())));
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        if !result.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
