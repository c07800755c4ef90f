//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any fails.

mod common;

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{chi2_sf_oracle, replay_bic, Enumerated, RandomInstance};
use gragra::eval::{median, score, GroupScore};
use gragra::maxent::{FitOptions, ModelSet};
use gragra::model::{GraphGroupDataset, SupportIndex, SupportThreshold};
use gragra::search::{heuristic_h, mine, MineConfig, MiningResult, Variant};
use gragra::stats::chi2_sf;
use gragra::synth::{self, generate, PlantKind, PlantedPattern, SizeReading, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: u32, name: &str, o: &Outcome) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

struct Run {
    dataset: GraphGroupDataset,
    result: MiningResult,
    scores: Vec<GroupScore>,
}

fn run_seed(preset: &str, seed: u64, variant: Variant) -> Run {
    let out = generate(&synth::preset(preset, seed).unwrap()).unwrap();
    let mut dataset = out.dataset;
    dataset.sparsify(SupportThreshold::MinSupport(2)).unwrap();
    let cfg = MineConfig {
        variant,
        seed,
        ..MineConfig::default()
    };
    let result = mine(&dataset, &cfg).unwrap();
    let scores = score(&result, &out.truth).unwrap();
    Run {
        dataset,
        result,
        scores,
    }
}

fn run_config(preset: &str, variant: Variant) -> (Vec<Run>, Duration) {
    let start = Instant::now();
    let runs = (0..SEEDS).map(|s| run_seed(preset, s, variant)).collect();
    (runs, start.elapsed())
}

fn pooled(runs: &[Run], f: impl Fn(&GroupScore) -> f64) -> Vec<f64> {
    runs.iter().flat_map(|r| r.scores.iter().map(&f)).collect()
}

fn criterion_1_and_2() -> (Outcome, f64) {
    let start = Instant::now();
    let instances = 60;
    let mut worst: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut queries = 0;
    for seed in 0..instances {
        let inst = RandomInstance::draw(1000 + seed, 10, 3);
        let oracle = Enumerated::fit(inst.m, &inst.edge_targets, &inst.patterns);
        let model = inst.model();
        residual = residual.max(model.max_residual());
        let singles = (0..inst.m as u32).map(|e| vec![e]);
        for y in singles.chain(inst.patterns.iter().map(|(x, _)| x.clone())) {
            worst = worst.max((model.query(&y) - oracle.query(&y)).abs());
            queries += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        Outcome {
            pass: worst <= 1e-4 && secs < 60.0,
            detail: format!("{instances} instances, {queries} queries, max |diff| {worst:.2e}, {secs:.2}s"),
        },
        residual,
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for df in [1u32, 2, 3, 4, 5, 7, 10, 15, 25, 40] {
        for x in [0.05, 0.5, 1.0, 2.0, 3.841, 7.815, 12.0, 25.0, 60.0, 120.0] {
            let got = chi2_sf(x, df).unwrap();
            let want = chi2_sf_oracle(x, df);
            worst = worst.max(((got - want) / want).abs());
            cases += 1;
        }
    }
    let anchor_a = chi2_sf(2.0, 2).unwrap();
    let anchor_b = chi2_sf(7.815, 3).unwrap();
    let anchors = ((anchor_a - (-1f64).exp()) / (-1f64).exp()).abs() <= 1e-6 && (anchor_b - 0.05).abs() < 1e-4;
    Outcome {
        pass: worst <= 1e-6 && anchors,
        detail: format!(
            "{cases} grid points, max rel err {worst:.2e}; sf(2,2) = {anchor_a:.12}, sf(7.815,3) = {anchor_b:.6}"
        ),
    }
}

fn criterion_4(configs: &[(&str, &[Run], Duration)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, runs, took) in configs {
        let f1 = median(&pooled(runs, |s| s.f1)).unwrap();
        let precision = median(&pooled(runs, |s| s.precision)).unwrap();
        let ok = f1 >= 0.9 && precision >= 0.9 && took.as_secs() <= 600;
        pass &= ok;
        parts.push(format!("{name}: median F1 {f1:.3}, precision {precision:.3}, {:.1}s", took.as_secs_f64()));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_5() -> Outcome {
    let runs: Vec<usize> = (0..SEEDS)
        .map(|s| run_seed("synthetic/1g/noise", s, Variant::Test).result.patterns.len())
        .collect();
    let empty = runs.iter().filter(|&&n| n == 0).count();
    Outcome {
        pass: empty >= 9,
        detail: format!("{empty}/{SEEDS} seeds with zero patterns (counts {runs:?})"),
    }
}

fn criterion_6(test: &[Run], bic: &[Run]) -> Outcome {
    let pt = median(&pooled(test, |s| s.precision)).unwrap();
    let pb = median(&pooled(bic, |s| s.precision)).unwrap();
    Outcome {
        pass: pt >= pb,
        detail: format!("synthetic/1g/2 median precision test {pt:.3} vs bic {pb:.4}"),
    }
}

fn criterion_7(configs: &[(&str, &[Run])]) -> (Outcome, f64) {
    let mut violations = 0;
    let mut accepted = 0;
    let mut least_drop = f64::INFINITY;
    let mut residual: f64 = 0.0;
    for (_, runs) in configs {
        for run in runs.iter() {
            let (bics, res) = replay_bic(&run.dataset, &run.result);
            residual = residual.max(res);
            for w in bics.windows(2) {
                accepted += 1;
                let drop = w[0] - w[1];
                least_drop = least_drop.min(drop);
                if !(drop > 0.0) {
                    violations += 1;
                }
            }
        }
    }
    (
        Outcome {
            pass: violations == 0 && accepted > 0,
            detail: format!(
                "{accepted} acceptances over {} runs, {violations} non-decreasing steps, smallest drop {least_drop:.3e}",
                configs.iter().map(|c| c.1.len()).sum::<usize>()
            ),
        },
        residual,
    )
}

/// Small two-group instance: `G(5, p)` noise plus one planted pattern.
fn small_instance(rng: &mut ChaCha8Rng, seed: u64, min_gap: f64, max_gap: f64) -> (SynthConfig, f64) {
    let (kind, size) = match rng.gen_range(0..3) {
        0 => (PlantKind::Clique, 3),
        1 => (PlantKind::Star, 4),
        _ => (PlantKind::Biclique, 4),
    };
    let position = rng.gen_range(0..=(5 - size));
    let gap = rng.gen_range(min_gap..max_gap);
    let low = rng.gen_range(0.0..(1.0 - gap));
    let prevalence = if rng.gen_bool(0.5) { vec![low + gap, low] } else { vec![low, low + gap] };
    let cfg = SynthConfig {
        k: 2,
        n: 5,
        graphs_per_group: 100,
        p: rng.gen_range(0.1..0.4),
        plants: vec![PlantedPattern {
            kind,
            size,
            position,
            prevalence,
        }],
        seed,
        size_reading: SizeReading::TotalNodes,
    };
    (cfg, gap)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut strong = (0, 0);
    let mut weak = (0, 0);
    for i in 0..50u64 {
        let (lo, hi) = if i < 30 { (0.3, 0.9) } else { (0.0, 0.3) };
        let (cfg, gap) = small_instance(&mut rng, 500 + i, lo, hi);
        let plant = &cfg.plants[0];
        let x_keys = synth::pattern_edges(plant.kind, plant.size, plant.position, cfg.size_reading, cfg.n).unwrap();
        let mut ds = generate(&cfg).unwrap().dataset;
        ds.sparsify(SupportThreshold::MinSupport(1)).unwrap();
        assert!(ds.universe.len() <= 10);
        let index = SupportIndex::build(&ds);
        let Some(x) = index.ids_of(&x_keys) else { continue };
        let models = ModelSet::baseline(&index, FitOptions::default());
        let h = heuristic_h(&index, &models, &x);
        let delta = models.delta_exact(&x, &index.frequencies(&x)).unwrap();
        let bucket = if gap >= 0.3 { &mut strong } else { &mut weak };
        bucket.0 += 1;
        if (h > 0.0) != (delta > 0.0) {
            bucket.1 += 1;
        }
    }
    let total = strong.0 + weak.0;
    let disagree = strong.1 + weak.1;
    Outcome {
        pass: strong.0 >= 20 && strong.1 == 0,
        detail: format!(
            "gap >= 0.3: {}/{} sign disagreements; all gaps: disagreement rate {:.3} ({disagree}/{total})",
            strong.1,
            strong.0,
            disagree as f64 / total as f64
        ),
    }
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bin = env!("CARGO_BIN_EXE_gragra");
    let ok = |c: &mut Command| c.status().map(|s| s.success()).unwrap_or(false);
    let mut pass = ok(Command::new(bin).args(["synth", "--preset", "synthetic/1g/2", "--seed", "0", "--out"]).arg(d));
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = d.join(name);
        pass &= ok(Command::new(bin)
            .args(["mine", "--threads", "2", "--seed", "0", "--input"])
            .arg(d.join("dataset.txt"))
            .arg("--out")
            .arg(&out));
        outputs.push(std::fs::read(&out).unwrap_or_default());
    }
    let same = !outputs[0].is_empty() && outputs[0] == outputs[1];
    Outcome {
        pass: pass && same,
        detail: format!("result.json {} ({} bytes)", if same { "byte-identical" } else { "differs" }, outputs[0].len()),
    }
}

fn main() {
    let mut all = true;
    let mut record = |n: u32, name: &str, o: Outcome| {
        report(n, name, &o);
        all &= o.pass;
    };

    let (c1, fit_residual) = criterion_1_and_2();
    record(1, "maxent oracle equivalence", c1);
    record(3, "chi-squared accuracy", criterion_3());
    record(5, "noise guard", criterion_5());
    record(8, "heuristic sign agreement", criterion_8());
    record(9, "determinism", criterion_9());

    let (row2_test, row2_took) = run_config("synthetic/1g/2", Variant::Test);
    let (con_test, con_took) = run_config("synthetic/2g/contrastive", Variant::Test);
    record(
        4,
        "ground-truth recovery",
        criterion_4(&[
            ("synthetic/1g/2", &row2_test, row2_took),
            ("synthetic/2g/contrastive", &con_test, con_took),
        ]),
    );

    let (row2_bic, _) = run_config("synthetic/1g/2", Variant::Bic);
    let (con_bic, _) = run_config("synthetic/2g/contrastive", Variant::Bic);
    record(6, "ablation ordering", criterion_6(&row2_test, &row2_bic));
    let (c7, replay_residual) = criterion_7(&[("synthetic/1g/2", &row2_bic), ("synthetic/2g/contrastive", &con_bic)]);
    record(7, "BIC monotonicity", c7);

    let end_to_end = [&row2_test, &con_test, &row2_bic, &con_bic]
        .iter()
        .flat_map(|runs| runs.iter())
        .flat_map(|r| r.result.diagnostics.iter().map(|d| d.max_residual))
        .fold(0.0f64, f64::max);
    let worst = fit_residual.max(end_to_end).max(replay_residual);
    record(
        2,
        "constraint reproduction",
        Outcome {
            pass: worst <= 1e-6,
            detail: format!(
                "max residual: oracle fits {fit_residual:.2e}, end-to-end {end_to_end:.2e}, replayed {replay_residual:.2e}"
            ),
        },
    );

    if !all {
        std::process::exit(1);
    }
}
