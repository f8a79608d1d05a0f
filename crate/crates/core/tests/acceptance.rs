//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zsfuse::eval::{auroc, evaluate_matrix};
use zsfuse::fusion::{
    confidence, fuse, softmax_rows, ConfidenceScheme, ConfidenceVector, FusionWeights, ProbMatrix,
    ProbSource, DEFAULT_EPSILON,
};
use zsfuse::pipeline::{resolve_split, run_on_bundle, score_stage};
use zsfuse::store::{read_matrix, write_matrix, zseb};
use zsfuse::{
    generate_synthetic_bundle, run_pipeline, DatasetBundle, EmbeddingMatrix, Error, FusionConfig,
    FusionScheme, Method, PipelineConfig, ScoreMatrix, SynthParams,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
// (row, H, W_inv, W_exp); None where no weight is checked.
type TableRow<'a> = (&'a [f64], f64, Option<f64>, Option<f64>);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

// Brute-force Mann-Whitney: every pair, ties counted half.
fn auroc_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0u64;
    let mut ties = 0u64;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1;
            } else if p == n {
                ties += 1;
            }
        }
    }
    (wins as f64 + 0.5 * ties as f64) / (pos.len() * neg.len()) as f64
}

fn auroc_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA0C);
    let mut worst = 0.0f64;
    let mut tied_instances = 0;
    for case in 0..500 {
        let np = rng.random_range(1..=200);
        let nq = rng.random_range(1..=200);
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            match case % 3 {
                0 => rng.random_range(0..6) as f64 / 5.0,
                1 => rng.random::<f64>(),
                _ => (rng.random::<f64>() * 40.0).round() / 40.0,
            }
        };
        let pos: Vec<f64> = (0..np).map(|_| draw(&mut rng)).collect();
        let neg: Vec<f64> = (0..nq).map(|_| draw(&mut rng)).collect();
        if pos.iter().any(|p| neg.contains(p)) {
            tied_instances += 1;
        }
        let got = auroc(&pos, &neg).map_err(|e| e.to_string())?;
        let want = auroc_oracle(&pos, &neg);
        worst = worst.max((got - want).abs());
    }
    ensure(worst <= 1e-12, || format!("max |delta| {worst:e} > 1e-12"))?;
    within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "500 instances ({tied_instances} with cross ties), max |delta| {worst:e}"
    ))
}

fn random_scores(rng: &mut ChaCha8Rng, rows: usize, cols: usize, method: Method) -> ScoreMatrix {
    let values = (0..rows * cols)
        .map(|_| match rng.random_range(0..4) {
            0 => 1.0,
            1 => -1.0,
            _ => rng.random_range(-1.0..=1.0),
        })
        .collect();
    ScoreMatrix::new(rows, cols, values, method).unwrap()
}

fn max_row_error(p: &ProbMatrix) -> f64 {
    p.iter_rows()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn probability_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC045);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..1000 {
        let rows = rng.random_range(1..=16);
        let cols = rng.random_range(2..=32);
        let scores: Vec<ScoreMatrix> = Method::ALL
            .iter()
            .map(|&m| random_scores(&mut rng, rows, cols, m))
            .collect();
        for tau in [1.0, 100.0] {
            let probs: Vec<ProbMatrix> = scores
                .iter()
                .map(|s| softmax_rows(s, tau))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let refs: Vec<&ProbMatrix> = probs.iter().collect();
            for p in &probs {
                worst = worst.max(max_row_error(p));
            }
            for scheme in ConfidenceScheme::ALL {
                let conf: Vec<ConfidenceVector> = probs
                    .iter()
                    .map(|p| confidence(p, scheme, DEFAULT_EPSILON).unwrap())
                    .collect();
                let fused =
                    fuse(&refs, FusionWeights::PerSample(&conf)).map_err(|e| e.to_string())?;
                worst = worst.max(max_row_error(&fused));
            }
            for w in [[1.0, 1.0, 1.0], [3.0, 3.0, 4.0]] {
                let fused = fuse(&refs, FusionWeights::Fixed(&w)).map_err(|e| e.to_string())?;
                worst = worst.max(max_row_error(&fused));
            }
            checked += 1;
        }
    }
    ensure(worst <= 1e-9, || {
        format!("max row-sum error {worst:e} > 1e-9")
    })?;
    Ok(format!(
        "{checked} calibrations, 5 fusions each, max row-sum error {worst:e}"
    ))
}

fn entropy_confidence_table() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let table: [TableRow; 3] = [
        (&[0.0, 1.0, 0.0, 0.0], 0.0, Some(1e6), Some(1.0)),
        (&[0.25; 4], 2.0 * ln2, Some(0.721347), Some(0.25)),
        (&[0.5, 0.25, 0.25], 1.5 * ln2, None, None),
    ];
    let mut lines = 0;
    for (row, h, w_inv, w_exp) in table {
        let p = ProbMatrix::new(1, row.len(), row.to_vec(), ProbSource::Fused, None)
            .map_err(|e| e.to_string())?;
        let got_h = zsfuse::fusion::entropy(p.row(0)).map_err(|e| e.to_string())?;
        ensure((got_h - h).abs() <= 1e-5, || {
            format!("H{row:?} = {got_h}, want {h}")
        })?;
        let inv = confidence(&p, ConfidenceScheme::InvEntropy, DEFAULT_EPSILON)
            .unwrap()
            .values[0];
        let exp = confidence(&p, ConfidenceScheme::NegExpEntropy, DEFAULT_EPSILON)
            .unwrap()
            .values[0];
        if let Some(w) = w_inv {
            ensure((inv - w).abs() <= 1e-5, || {
                format!("W_inv{row:?} = {inv}, want {w}")
            })?;
        }
        if let Some(w) = w_exp {
            ensure((exp - w).abs() <= 1e-5, || {
                format!("W_exp{row:?} = {exp}, want {w}")
            })?;
        }
        lines += 1;
    }
    Ok(format!("{lines} rows match within 1e-5"))
}

fn fusion_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE6);
    let (rows, cols) = (40, 7);
    let probs: Vec<ProbMatrix> = Method::ALL
        .iter()
        .map(|&m| softmax_rows(&random_scores(&mut rng, rows, cols, m), 10.0).unwrap())
        .collect();
    let refs: Vec<&ProbMatrix> = probs.iter().collect();

    for j in 0..3 {
        let mut w = [0.0; 3];
        w[j] = rng.random_range(0.1..5.0);
        let fused = fuse(&refs, FusionWeights::Fixed(&w)).map_err(|e| e.to_string())?;
        ensure(fused.values() == probs[j].values(), || {
            format!("fixed weight on method {j} does not reproduce it exactly")
        })?;
    }
    // Per-sample concentration on a different method in each row.
    let owner: Vec<usize> = (0..rows).map(|t| t % 3).collect();
    let conf: Vec<ConfidenceVector> = (0..3)
        .map(|j| ConfidenceVector {
            values: owner
                .iter()
                .map(|&o| if o == j { 1e6 } else { 0.0 })
                .collect(),
            scheme: ConfidenceScheme::InvEntropy,
        })
        .collect();
    let fused = fuse(&refs, FusionWeights::PerSample(&conf)).map_err(|e| e.to_string())?;
    for t in 0..rows {
        ensure(fused.row(t) == probs[owner[t]].row(t), || {
            format!("row {t} does not reproduce method {}", owner[t])
        })?;
    }

    let equal = fuse(&refs, FusionWeights::Fixed(&[1.0, 1.0, 1.0])).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, &v) in equal.values().iter().enumerate() {
        let mean = (probs[0].values()[i] + probs[1].values()[i] + probs[2].values()[i]) / 3.0;
        worst = worst.max((v - mean).abs());
    }
    ensure(worst <= 1e-12, || {
        format!("1:1:1 differs from mean by {worst:e}")
    })?;

    // The two fixed-weight baselines run as configs on the fixture.
    let mut labels = Vec::new();
    for (file, expect_scheme) in [
        ("config_1_1_1.json", FusionScheme::equal()),
        ("config_3_3_4.json", FusionScheme::three_three_four()),
    ] {
        let cfg = PipelineConfig::load(fixtures().join(file)).map_err(|e| e.to_string())?;
        ensure(cfg.fusion.scheme == expect_scheme, || {
            format!("{file} parses to {:?}", cfg.fusion.scheme)
        })?;
        let report = run_pipeline(&cfg).map_err(|e| format!("{file}: {e}"))?;
        labels.push(report.config.scheme.clone());
        if file == "config_1_1_1.json" {
            let expected = mean_fused_row(&cfg)?;
            ensure(report.fused == expected, || {
                format!(
                    "1:1:1 config report {:?} != mean oracle {:?}",
                    report.fused, expected
                )
            })?;
        }
    }
    Ok(format!(
        "exact single-method reproduction, 1:1:1 vs mean {worst:e}, configs ran as {}",
        labels.join(" and ")
    ))
}

// Metrics of the plain average of the calibrated method outputs, built without
// the fusion code path.
fn mean_fused_row(cfg: &PipelineConfig) -> Result<zsfuse::eval::MetricRow, String> {
    let bundle = DatasetBundle::load(&cfg.bundle).map_err(|e| e.to_string())?;
    let scores = score_stage(&bundle, &cfg.methods).map_err(|e| e.to_string())?;
    let probs: Vec<ProbMatrix> = scores
        .iter()
        .map(|s| softmax_rows(s, cfg.fusion.temperature(s.method())).unwrap())
        .collect();
    let n = probs.len() as f64;
    let values: Vec<f64> = (0..probs[0].values().len())
        .map(|i| probs.iter().map(|p| p.values()[i]).sum::<f64>() / n)
        .collect();
    let mean = ProbMatrix::new(
        probs[0].rows(),
        probs[0].cols(),
        values,
        ProbSource::Fused,
        None,
    )
    .map_err(|e| e.to_string())?;
    let split =
        resolve_split(&cfg.split, &bundle.catalog, &cfg.dataset).map_err(|e| e.to_string())?;
    let closed = split.closed_indices(&bundle.catalog);
    evaluate_matrix("fused", &mean, &bundle.test_labels, &closed, &closed)
        .map_err(|e| e.to_string())
}

const SEEDS: u64 = 20;

fn benchmark_params(seed: u64) -> SynthParams {
    SynthParams {
        n_classes: 10,
        samples_per_class: 50,
        dim: 64,
        noise: [0.6, 0.9, 0.5],
        seed,
        ..SynthParams::default()
    }
}

fn fusion_beats_singles() -> Outcome {
    let start = Instant::now();
    let mut config = PipelineConfig::new("synthetic");
    config.fusion = FusionConfig::with_scheme(FusionScheme::InvEntropy);
    let mut top1 = [0.0f64; 4];
    let mut area = [0.0f64; 4];
    for seed in 0..SEEDS {
        let bundle =
            generate_synthetic_bundle(&benchmark_params(seed)).map_err(|e| e.to_string())?;
        let report = run_on_bundle(&bundle, &config).map_err(|e| e.to_string())?;
        for (i, row) in report.methods.iter().chain([&report.fused]).enumerate() {
            top1[i] += row.top1.get() / SEEDS as f64;
            area[i] += row.auroc.get() / SEEDS as f64;
        }
    }
    let best_single_auroc = area[..3].iter().copied().fold(f64::MIN, f64::max);
    let summary = format!(
        "mean top1 M1 {:.4} M2 {:.4} M3 {:.4} fused {:.4}; mean auroc M1 {:.4} M2 {:.4} M3 {:.4} fused {:.4}",
        top1[0], top1[1], top1[2], top1[3], area[0], area[1], area[2], area[3]
    );
    ensure(top1[..3].iter().all(|&s| top1[3] > s), || {
        format!("fused top1 does not beat every single method: {summary}")
    })?;
    ensure(area[3] >= best_single_auroc - 0.005, || {
        format!("fused auroc below best single - 0.005: {summary}")
    })?;
    within_time(start, Duration::from_secs(60))?;
    Ok(summary)
}

fn multiple_references() -> Outcome {
    let config = PipelineConfig::new("synthetic");
    let mut means = [[0.0f64; 2]; 2];
    for (slot, refs) in [1usize, 5].into_iter().enumerate() {
        for seed in 0..SEEDS {
            let params = SynthParams {
                refs_per_class: refs,
                ..benchmark_params(seed)
            };
            let bundle = generate_synthetic_bundle(&params).map_err(|e| e.to_string())?;
            let report = run_on_bundle(&bundle, &config).map_err(|e| e.to_string())?;
            for (k, m) in [Method::ImageImageClip, Method::ImageImageDino]
                .into_iter()
                .enumerate()
            {
                means[slot][k] += report.method(m).unwrap().top1.get() / SEEDS as f64;
            }
        }
    }
    let summary = format!(
        "image-image top1 M=1 ({:.4}, {:.4}) vs M=5 ({:.4}, {:.4})",
        means[0][0], means[0][1], means[1][0], means[1][1]
    );
    ensure(
        means[1][0] >= means[0][0] && means[1][1] >= means[0][1],
        || format!("more references did not help: {summary}"),
    )?;
    Ok(summary)
}

fn determinism() -> Outcome {
    let cfg = PipelineConfig::load(fixtures().join("config.json")).map_err(|e| e.to_string())?;
    let first = run_pipeline(&cfg)
        .and_then(|r| r.to_json())
        .map_err(|e| e.to_string())?;
    let second = run_pipeline(&cfg)
        .and_then(|r| r.to_json())
        .map_err(|e| e.to_string())?;
    ensure(first == second, || "two runs differ".into())?;
    let golden = std::fs::read_to_string(fixtures().join("golden_report.json"))
        .map_err(|e| e.to_string())?;
    ensure(first == golden, || {
        "report differs from the committed golden report".into()
    })?;
    Ok(format!(
        "two runs and the golden file agree byte for byte ({} bytes)",
        golden.len()
    ))
}

fn random_matrix(rng: &mut ChaCha8Rng, normalized: bool) -> EmbeddingMatrix {
    let rows = rng.random_range(1..=64);
    let dim = rng.random_range(1..=128);
    let data: Vec<f32> = (0..rows * dim)
        .map(|_| match rng.random_range(0..20) {
            0 => -0.0,
            1 => f32::MIN_POSITIVE / 4.0,
            2 => f32::MAX,
            _ => rng.random_range(-1.0f32..1.0) + 1e-3,
        })
        .collect();
    let m = EmbeddingMatrix::new(rows, dim, data, false).unwrap();
    if normalized {
        m.l2_normalize_rows().unwrap()
    } else {
        m
    }
}

fn format_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x25EB);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut corruptions = 0;
    for case in 0..100 {
        let m = random_matrix(&mut rng, case % 2 == 0);
        let path = dir.path().join(format!("case{case}.zseb"));
        write_matrix(&m, &path).map_err(|e| e.to_string())?;
        let back = read_matrix(&path).map_err(|e| format!("case {case}: {e}"))?;
        let same_bits = back.rows() == m.rows()
            && back.dim() == m.dim()
            && back.is_normalized() == m.is_normalized()
            && back
                .data()
                .iter()
                .zip(m.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same_bits, || {
            format!("case {case}: roundtrip not bit-exact")
        })?;

        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        let mut positions = vec![zseb::HEADER_LEN, bytes.len() - 1];
        positions.extend((0..20).map(|_| rng.random_range(zseb::HEADER_LEN..bytes.len())));
        for pos in positions {
            let mut bad = bytes.clone();
            bad[pos] ^= rng.random_range(1..=255u8);
            match EmbeddingMatrix::from_bytes(&bad) {
                Err(Error::Corruption(_)) => corruptions += 1,
                other => return Err(format!("case {case}: flipped byte {pos} gave {other:?}")),
            }
        }
    }
    Ok(format!(
        "100 roundtrips bit-exact, {corruptions} single-byte payload/checksum corruptions all detected"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("AUROC oracle equivalence", auroc_oracle_equivalence),
        ("probability conservation", probability_conservation),
        ("entropy/confidence table", entropy_confidence_table),
        (
            "fusion degeneracy and fixed-weight baselines",
            fusion_degeneracy,
        ),
        ("fusion beats single methods", fusion_beats_singles),
        ("multiple references help", multiple_references),
        ("golden report determinism", determinism),
        ("ZSEB format integrity", format_integrity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name} [{took:.2?}]: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {name} [{took:.2?}]: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
