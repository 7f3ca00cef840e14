//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use evlink::encode::{encode_frequency, encode_stacking, encode_stream, encode_time_surface, EncoderConfig, Method};
use evlink::event::{window, BinSpec, EventStream, Polarity, SensorGeometry};
use evlink::ingest::{simulate_dvs, IntensityFrame, MotionTrajectory, SimulatorConfig};
use evlink::neural::{loss_contrastive, loss_discriminator, loss_identity, Embedding, Group, Model, Tensor};
use evlink::par::Exec;
use evlink::retrieval::{average_precision, evaluate_embeddings, EmbeddingIndex, Query};
use evlink::train::{probe_modality_accuracy, sample_batch, ProbeConfig, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, n: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let res = f();
        let took = start.elapsed();
        let (mut ok, mut msg) = match res {
            Ok(m) => (true, m),
            Err(m) => (false, m),
        };
        if took > limit {
            ok = false;
            msg = format!("{msg}; over the {}s budget", limit.as_secs());
        }
        if !ok {
            self.failed += 1;
        }
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {n} {name}: {msg} ({:.1}s)", took.as_secs_f64());
    }
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Expected normalized planes of every complete bin, built from the raw events.
fn oracle_stream(s: &EventStream, cfg: &EncoderConfig) -> Vec<Vec<f64>> {
    // bins start at the stream's own t = 0
    let Some(last) = s.events().last().map(|e| e.t) else {
        return Vec::new();
    };
    let (w, h) = (s.geometry().width, s.geometry().height);
    let bins = (last + 1) / 90_000;
    (0..bins)
        .map(|k| {
            let mut img = Vec::new();
            for j in 0..3 {
                let t0 = k * 90_000 + j * 30_000;
                let t1 = t0 + 30_000;
                let plane: Vec<f64> = match cfg.method {
                    Method::Stacking => oracle_counts(s.events(), w, h, t0, t1)
                        .into_iter()
                        .map(|n| n.min(8) as f64 / 8.0)
                        .collect(),
                    Method::TimeSurface => oracle_time_surface(s.events(), w, h, t0, t1, cfg.tau_e),
                    Method::Frequency => oracle_counts(s.events(), w, h, t0, t1)
                        .into_iter()
                        .map(oracle_frequency)
                        .collect(),
                };
                img.extend(plane);
            }
            img
        })
        .collect()
}

fn encoder_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (mut worst, mut images) = (0.0f64, 0);
    for trial in 0..100 {
        let s = random_stream(&mut rng, 64, 64, 10_000, 400_000);
        let (t0, t1) = (50_000, 140_000);
        let sub = window(&s, t0, t1).map_err(|e| e.to_string())?;
        let counts = oracle_counts(s.events(), 64, 64, t0, t1);
        let es = encode_stacking(&sub);
        if es.values.iter().zip(&counts).any(|(a, &b)| *a != b as f64) {
            return Err(format!("stream {trial}: ES counts differ"));
        }
        let ef = encode_frequency(&sub);
        for (a, &n) in ef.values.iter().zip(&counts) {
            worst = worst.max((a - oracle_frequency(n)).abs());
        }
        let ts = encode_time_surface(&sub, 30_000.0, t1).map_err(|e| e.to_string())?;
        for (a, b) in ts.values.iter().zip(oracle_time_surface(s.events(), 64, 64, t0, t1, 30_000.0)) {
            worst = worst.max((a - b).abs());
        }
        for m in Method::ALL {
            let cfg = EncoderConfig {
                output_size: 64,
                ..EncoderConfig::with_method(m)
            };
            let got = encode_stream(&s, BinSpec::default(), &cfg, true, Exec::default()).map_err(|e| e.to_string())?;
            let want = oracle_stream(&s, &cfg);
            if got.len() != want.len() {
                return Err(format!("stream {trial} {m}: {} bins, oracle {}", got.len(), want.len()));
            }
            for (g, o) in got.iter().zip(&want) {
                for (a, b) in g.data.iter().zip(o) {
                    let d = (a - b).abs();
                    if m == Method::Stacking && d != 0.0 {
                        return Err(format!("stream {trial}: ES image differs"));
                    }
                    worst = worst.max(d);
                }
                images += 1;
            }
        }
    }
    check(worst <= 1e-12, format!("100 streams, {images} bin images, max |TS/EF error| {worst:.1e}"))
}

fn gradient_correctness() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in [LossKind::Discriminator, LossKind::Identity, LossKind::Contrastive, LossKind::Total] {
        let (worst, n) = grad_check(kind);
        ok &= worst < 1e-3;
        parts.push(format!("{kind:?} {worst:.1e} over {n}"));
    }
    check(ok, format!("max relative error: {}", parts.join(", ")))
}

fn closed_forms() -> Outcome {
    let half = vec![0.5; 4];
    let dis = loss_discriminator(&half, &half).map_err(|e| e.to_string())?;
    let e = Tensor::new(vec![1, 2], vec![0.0, 0.0]);
    let r = Tensor::new(vec![1, 2], vec![0.4, 0.0]);
    let ct = loss_contrastive(&e, &r, &[0.0], 1.0).map_err(|e| e.to_string())?;
    let uni = Tensor::new(vec![3, 4], vec![0.25; 12]);
    let id = loss_identity(&uni, &uni, &[0, 1, 3], &[2, 1, 0]).map_err(|e| e.to_string())?;
    let errs = [
        (dis - 2.0 * 2f64.ln()).abs(),
        (ct - 0.18).abs(),
        (id - 2.0 * 4f64.ln()).abs(),
    ];
    check(
        errs.iter().all(|e| *e <= 1e-9),
        format!("L_dis {dis:.12}, L_ct {ct:.12}, L_id {id:.12}"),
    )
}

fn random_index_map(rng: &mut ChaCha8Rng) -> f64 {
    let d = 64;
    let mut v = || Embedding((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mut index = EmbeddingIndex::new(d);
    for i in 0..10 {
        for j in 0..3 {
            index.push(format!("inst{i}/img{j}"), format!("inst{i}"), v()).unwrap();
        }
    }
    let queries: Vec<Query> = (0..10)
        .map(|i| Query {
            id: format!("inst{i}#bin0"),
            instance_id: format!("inst{i}"),
            embedding: v(),
        })
        .collect();
    evaluate_embeddings(&index, &queries, Exec::Seq).unwrap().map
}

const RANDOM_DRAWS: usize = 200;

fn metrics(baseline: f64) -> Outcome {
    let pattern = [true, false, true, true];
    let ap = average_precision(&pattern, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mean = (0..RANDOM_DRAWS).map(|_| random_index_map(&mut rng)).sum::<f64>() / RANDOM_DRAWS as f64;
    check(
        (ap - 0.805556).abs() <= 1e-6 && (mean - baseline).abs() <= 0.02,
        format!(
            "AP {ap:.6}; random-embedding mAP {mean:.4} over {RANDOM_DRAWS} draws vs permutation oracle {baseline:.4}"
        ),
    )
}

fn partition(run: &ToyRun) -> Outcome {
    let cfg = run.checkpoint.config.clone();
    let model = Model::init(cfg.network_spec(run.pool.num_classes()), 21).unwrap();
    let mut t = Trainer::new(model, cfg.clone(), Exec::default());
    let steps = 20;
    for s in 0..steps {
        let batch = sample_batch(&run.pool, cfg.batch_size, cfg.pos_ratio, s).map_err(|e| e.to_string())?;
        let snap = |t: &Trainer, g| t.model().params().group_values(g);
        let before = [Group::Generator, Group::Classifier, Group::Discriminator].map(|g| snap(&t, g));
        t.discriminator_phase(&batch).map_err(|e| e.to_string())?;
        let mid = [Group::Generator, Group::Classifier, Group::Discriminator].map(|g| snap(&t, g));
        if before[0] != mid[0] || before[1] != mid[1] || before[2] == mid[2] {
            return Err(format!("step {s}: phase 1 touched the wrong groups"));
        }
        t.generator_phase(&batch).map_err(|e| e.to_string())?;
        let after = [Group::Generator, Group::Classifier, Group::Discriminator].map(|g| snap(&t, g));
        if mid[2] != after[2] || mid[0] == after[0] || mid[1] == after[1] {
            return Err(format!("step {s}: phase 2 touched the wrong groups"));
        }
    }
    Ok(format!("{steps} steps, phase 1 only moved D, phase 2 only moved G and C"))
}

fn toy_retrieval(run: &ToyRun, baseline: f64) -> Outcome {
    let r = &run.report;
    let steps: usize = run.checkpoint.history.iter().map(|h| h.steps).sum();
    check(
        steps >= 200 && r.acc_at_1 >= 0.8 && r.map >= 3.0 * baseline,
        format!(
            "{steps} steps, acc@1 {:.3}, mAP {:.4} (3x random {:.4})",
            r.acc_at_1,
            r.map,
            3.0 * baseline
        ),
    )
}

const PROBE_SEEDS: u64 = 5;

fn adversarial_effect(adv: &ToyRun, nal: &ToyRun) -> Outcome {
    let cfg = ProbeConfig::default();
    let acc = |run: &ToyRun| -> Result<f64, String> {
        let mut sum = 0.0;
        for s in 0..PROBE_SEEDS {
            sum += probe_modality_accuracy(&run.checkpoint.model, &run.pool, &cfg, s, Exec::default())
                .map_err(|e| e.to_string())?;
        }
        Ok(sum / PROBE_SEEDS as f64)
    };
    let (a, n) = (acc(adv)?, acc(nal)?);
    check(
        a < n,
        format!("probe modality accuracy gamma=0.01 {a:.4} vs NAL {n:.4} (mean of {PROBE_SEEDS} probes)"),
    )
}

fn determinism(a: &ToyRun, b: &ToyRun) -> Outcome {
    let same_ck = a.checkpoint.to_parts() == b.checkpoint.to_parts();
    let same_idx = a.index.to_parts() == b.index.to_parts();
    let same_rep = a.report.to_json() == b.report.to_json();
    check(
        same_ck && same_idx && same_rep,
        format!("checkpoint {same_ck}, index {same_idx}, report {same_rep}"),
    )
}

fn simulator() -> Outcome {
    let frame = |w: u32, h: u32, px: Vec<f64>| IntensityFrame::new(SensorGeometry::new(w, h).unwrap(), px).unwrap();
    let cfg = SimulatorConfig::default();
    let traj = MotionTrajectory::circular(290_000, 2.0, 90_000).unwrap();
    let silent = simulate_dvs(&frame(16, 16, vec![0.5; 256]), &traj, &cfg).map_err(|e| e.to_string())?;

    let px = (0..32 * 8).map(|i| if i % 32 < 10 { 0.2 } else { 0.8 }).collect();
    let sweep = MotionTrajectory::linear(100_000, 12.0, 0.0).unwrap();
    let edge = simulate_dvs(&frame(32, 8, px), &sweep, &cfg).map_err(|e| e.to_string())?;
    let near = edge
        .events()
        .iter()
        .filter(|e| (e.x as f64 - 9.5 - sweep.offset_at(e.t as f64).0).abs() <= 1.0)
        .count();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatched = 0;
    let grids = 20;
    for g in 0..grids {
        let img: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..1.0)).collect();
        let traj = if g % 2 == 0 {
            MotionTrajectory::circular(90_000, 2.0, 45_000).unwrap()
        } else {
            MotionTrajectory::linear(60_000, -2.0, 3.0).unwrap()
        };
        let s = simulate_dvs(&frame(16, 16, img.clone()), &traj, &cfg).map_err(|e| e.to_string())?;
        let offsets: Vec<(f64, f64)> = traj.sample_times(cfg.frame_rate).into_iter().map(|t| traj.offset_at(t)).collect();
        let oracle = oracle_sim_counts(&img, 16, 16, &offsets, cfg.threshold, cfg.epsilon);
        let mut got = vec![(0u32, 0u32); 256];
        for e in s.events() {
            let slot = &mut got[(e.y * 16 + e.x) as usize];
            match e.p {
                Polarity::On => slot.0 += 1,
                Polarity::Off => slot.1 += 1,
            }
        }
        mismatched += (got != oracle) as usize;
    }
    check(
        silent.is_empty() && !edge.is_empty() && near == edge.len() && mismatched == 0,
        format!(
            "constant image {} events; edge {near}/{} within 1 px; {}/{grids} grids match the oracle",
            silent.len(),
            edge.len(),
            grids - mismatched
        ),
    )
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0 };
    let min = |m: u64| Duration::from_secs(60 * m);
    let baseline = permutation_ap(30, 3, 1000, 17);

    suite.run(1, "encoder oracle equivalence", Duration::from_secs(30), encoder_equivalence);
    suite.run(2, "gradient correctness", min(2), gradient_correctness);
    suite.run(3, "closed-form losses", Duration::from_secs(1), closed_forms);
    suite.run(4, "metric correctness", Duration::from_secs(60), || metrics(baseline));

    let cfg = TrainConfig {
        max_epochs: TOY_EPOCHS,
        ..TrainConfig::toy()
    };
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let start = Instant::now();
    let adv = toy_pipeline(dirs[0].path(), &cfg);
    let toy_time = start.elapsed();

    suite.run(5, "two-phase partition", Duration::from_secs(60), || partition(&adv));
    suite.run(6, "toy retrieval", min(15), || {
        let out = toy_retrieval(&adv, baseline);
        let t = toy_time.as_secs_f64();
        out.map(|m| format!("{m}, pipeline {t:.0}s")).map_err(|m| format!("{m}, pipeline {t:.0}s"))
    });
    suite.run(7, "adversarial effect", min(30), || {
        let mut nal_cfg = cfg.clone();
        nal_cfg.ablations.no_adversarial = true;
        let nal = toy_pipeline(dirs[1].path(), &nal_cfg);
        adversarial_effect(&adv, &nal)
    });
    suite.run(8, "determinism", min(15), || {
        let again = toy_pipeline(dirs[2].path(), &cfg);
        determinism(&adv, &again)
    });
    suite.run(9, "simulator sanity", Duration::from_secs(60), simulator);

    println!("{} of 9 criteria passed", 9 - suite.failed);
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
