//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Criterion 9 reruns 1 to 6 and compares artifact digests.

mod common;

use std::f64::consts::TAU;
use std::hash::Hasher;
use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{contour_dice, flat_image, oracle_rollout, pair_dice, random_seeds, HashWriter};
use dpm_core::agent::{init_state, rollout, AgentState, Policy, RolloutConfig};
use dpm_core::field::{build_dynamic, distance_transform, extract_boundary};
use dpm_core::geometry::Contour;
use dpm_core::metrics::{aggregate, apd, evaluate_case, mask_dice, rasterize, MeanStd, MetricsReport, Confusion, Report};
use dpm_core::model::{
    init_model, loss_mse, train_with, write_checkpoint, Architecture, Layer, Model, PolicyModel, TrainConfig,
};
use dpm_core::patches::{build_dataset, DatasetConfig};
use dpm_core::poincare::{PoincareConfig, PoincareTracker};
use dpm_core::raster::{BinaryMask, GrayImage, QuarterTurn};
use dpm_core::synth::{gen_dataset, gen_pair, Family, ShapeSpec, SynthPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
    digest: u64,
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn digest_of(f: impl FnOnce(&mut HashWriter)) -> u64 {
    let mut h = HashWriter::default();
    f(&mut h);
    h.finish()
}

fn contour_bytes(h: &mut HashWriter, c: &Contour) {
    c.write_csv(&mut *h).unwrap();
}

// 1. EDT exactness

fn brute_force_d2(mask: &BinaryMask) -> (Vec<u64>, Vec<usize>) {
    let w = mask.width();
    let boundary = extract_boundary(mask).unwrap();
    let mut d2 = Vec::with_capacity(w * mask.height());
    let mut nearest = Vec::with_capacity(w * mask.height());
    for y in 0..mask.height() {
        for x in 0..w {
            let mut best = (u64::MAX, usize::MAX);
            for &b in &boundary {
                let dx = (b % w) as i64 - x as i64;
                let dy = (b / w) as i64 - y as i64;
                let d = (dx * dx + dy * dy) as u64;
                if d < best.0 {
                    best = (d, b);
                }
            }
            d2.push(best.0);
            nearest.push(best.1);
        }
    }
    (d2, nearest)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatched = 0;
    let mut h = HashWriter::default();
    let mut done = 0;
    while done < 100 {
        let p: f64 = rng.gen_range(0.05..0.95);
        let bits: Vec<u8> = (0..32 * 32).map(|_| u8::from(rng.gen_bool(p))).collect();
        if bits.iter().all(|&b| b == 1) || bits.iter().all(|&b| b == 0) {
            continue;
        }
        let mask = BinaryMask::new(32, 32, bits).unwrap();
        let df = distance_transform(&mask).unwrap();
        let (d2, nearest) = brute_force_d2(&mask);
        let exact = df.squared() == &d2[..]
            && df.nearest() == &nearest[..]
            && df.d().iter().zip(&d2).all(|(&d, &e)| d == (e as f64).sqrt());
        if !exact {
            mismatched += 1;
        }
        for (&d, &n) in df.squared().iter().zip(df.nearest()) {
            h.write_all(&d.to_le_bytes()).unwrap();
            h.write_all(&(n as u64).to_le_bytes()).unwrap();
        }
        done += 1;
    }
    let el = t0.elapsed();
    Outcome {
        pass: mismatched == 0 && within(el, 10.0),
        detail: format!("{mismatched}/100 masks differ from brute force, {:.2}s", el.as_secs_f64()),
        digest: h.finish(),
    }
}

// 2. Field correctness on the r = 50 circle

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let c = [128.0, 128.0];
    let mask = BinaryMask::disk(256, 256, c, 50.0);
    let fb = build_dynamic(&mask).unwrap();
    let normal = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 - c[0], y as f64 - c[1]);
        let n = dx.hypot(dy);
        (n > 0.0).then(|| [dx / n, dy / n])
    };
    let boundary = extract_boundary(&mask).unwrap();
    let dots: Vec<f64> = boundary
        .iter()
        .map(|&i| {
            let v = fb.v_at(i % 256, i / 256);
            let n = normal(i % 256, i / 256).unwrap();
            (v[0] * n[0] + v[1] * n[1]).abs()
        })
        .collect();
    let mean_dot = dots.iter().sum::<f64>() / dots.len() as f64;
    let (mut sign_bad, mut norm_bad) = (0, 0);
    for y in 0..256 {
        for x in 0..256 {
            let i = y * 256 + x;
            if fb.singular()[i] {
                continue;
            }
            let v = fb.v_at(x, y);
            if (v[0].hypot(v[1]) - 1.0).abs() > 1e-6 {
                norm_bad += 1;
            }
            let s = fb.s()[i];
            if let Some(n) = normal(x, y) {
                let radial = v[0] * n[0] + v[1] * n[1];
                if (s < -2.0 && radial >= 0.0) || (s > 2.0 && radial <= 0.0) {
                    sign_bad += 1;
                }
            }
        }
    }
    let el = t0.elapsed();
    let digest = digest_of(|h| fb.write_to(h).unwrap());
    Outcome {
        pass: mean_dot <= 0.1 && sign_bad == 0 && norm_bad == 0 && within(el, 5.0),
        detail: format!(
            "mean |v.n| {mean_dot:.4} (<= 0.1), sign violations {sign_bad}, norm violations {norm_bad}, {:.2}s",
            el.as_secs_f64()
        ),
        digest,
    }
}

// 3. Oracle limit-cycle convergence

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let cfg = RolloutConfig::default();
    let mut cases: Vec<BinaryMask> = vec![BinaryMask::disk(256, 256, [128.0, 128.0], 50.0)];
    let spec = ShapeSpec {
        family: Family::Blob,
        seed: 303,
        ..ShapeSpec::default()
    };
    cases.extend((0..20).map(|i| gen_pair(&spec, i).unwrap().mask));

    let (mut failed, mut worst_truth, mut worst_pair) = (0, 1.0f64, 1.0f64);
    let mut h = HashWriter::default();
    for (k, mask) in cases.iter().enumerate() {
        let img = flat_image(mask);
        let fb = build_dynamic(mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
        let mut contours = Vec::new();
        for init in random_seeds(mask, &img, 10, 64, &mut rng) {
            match rollout(&Policy::Oracle(&fb), &img, init, &cfg) {
                Ok(r) => contours.push(r.contour),
                Err(_) => failed += 1,
            }
        }
        for c in &contours {
            worst_truth = worst_truth.min(contour_dice(c, mask));
            contour_bytes(&mut h, c);
        }
        for i in 0..contours.len() {
            for j in i + 1..contours.len() {
                worst_pair = worst_pair.min(pair_dice(&contours[i], &contours[j], 256, 256));
            }
        }
    }
    let el = t0.elapsed();
    Outcome {
        pass: failed == 0 && worst_truth >= 0.95 && worst_pair >= 0.95 && within(el, 120.0),
        detail: format!(
            "210 rollouts, {failed} not converged, min Dice vs mask {worst_truth:.4}, min pairwise {worst_pair:.4}, {:.1}s",
            el.as_secs_f64()
        ),
        digest: h.finish(),
    }
}

// 4. Poincaré contraction

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mask = BinaryMask::disk(256, 256, [128.0, 128.0], 50.0);
    let img = flat_image(&mask);
    let fb = build_dynamic(&mask).unwrap();
    let cfg = RolloutConfig::default();
    let init = AgentState {
        position: [133.0, 128.0],
        heading: [0.0, 1.0],
        t: 0,
        pinned: 0,
    };
    let r = oracle_rollout(&fb, &img, init, &cfg);
    let m = &r.magnitudes;
    let circle_ok = m.windows(2).all(|w| w[1] <= w[0]) && m.last().is_some_and(|&x| x <= cfg.poincare.eps);

    // r_n = r0 + 8 * 0.5^n sampled 90 times per revolution
    let q = 0.5f64;
    let pts: Vec<[f64; 2]> = (0..12 * 90)
        .map(|i| {
            let th = TAU * i as f64 / 90.0;
            let rad = 40.0 + 8.0 * q.powf(th / TAU);
            [100.0 + rad * th.cos(), 100.0 + rad * th.sin()]
        })
        .collect();
    let mut tracker = PoincareTracker::new(PoincareConfig {
        eps: 1e-9,
        ..PoincareConfig::default()
    });
    for n in 1..=pts.len() {
        tracker.observe(&pts[..n]);
    }
    let sm = tracker.magnitudes();
    let worst_ratio = sm
        .windows(2)
        .map(|w| ((w[1] / w[0] - q) / q).abs())
        .fold(0.0, f64::max);
    let spiral_ok = sm.len() >= 5 && worst_ratio <= 0.05;
    let el = t0.elapsed();
    let digest = digest_of(|h| {
        for &x in m.iter().chain(sm) {
            h.write_all(&x.to_bits().to_le_bytes()).unwrap();
        }
        contour_bytes(h, &r.contour);
    });
    Outcome {
        pass: circle_ok && spiral_ok && within(el, 10.0),
        detail: format!(
            "circle magnitudes {:?}, spiral ratio error {:.2}% over {} magnitudes, {:.2}s",
            m.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
            100.0 * worst_ratio,
            sm.len(),
            el.as_secs_f64()
        ),
        digest,
    }
}

// 5. Gradient check

fn random_arch(rng: &mut ChaCha8Rng) -> Architecture {
    loop {
        let input_size = rng.gen_range(7..=11);
        let mut layers = Vec::new();
        for _ in 0..rng.gen_range(1..=2) {
            layers.push(Layer::Conv {
                kernel: rng.gen_range(2..=3),
                stride: rng.gen_range(1..=2),
                channels: rng.gen_range(2..=4),
            });
            layers.push(Layer::Relu);
            if rng.gen_bool(0.3) {
                layers.push(Layer::MaxPool2);
            }
        }
        layers.push(Layer::Flatten);
        if rng.gen_bool(0.5) {
            layers.push(Layer::Dense {
                units: rng.gen_range(3..=6),
            });
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Dense { units: 2 });
        let arch = Architecture { input_size, layers };
        if arch.plan().is_ok() {
            return arch;
        }
    }
}

fn numeric_gradient(model: &Model<f64>, input: &[f64], target: [f64; 2], step: f64) -> Vec<f64> {
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(model.params().len());
    for i in 0..model.params().len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let up = loss_mse(probe.forward(input).unwrap(), target);
        probe.params_mut()[i] = orig - step;
        let down = loss_mse(probe.forward(input).unwrap(), target);
        probe.params_mut()[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    out
}

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let mut h = HashWriter::default();
    let mut sizes = Vec::new();
    for k in 0..5u64 {
        let arch = random_arch(&mut rng);
        let model = init_model::<f64>(&arch, 50 + k).unwrap();
        let input: Vec<f64> = (0..model.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let analytic = model.backward(&input, target).unwrap().0;
        let numeric = numeric_gradient(&model, &input, target, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-7));
            h.write_all(&a.to_bits().to_le_bytes()).unwrap();
        }
        sizes.push(analytic.len());
    }
    let el = t0.elapsed();
    Outcome {
        pass: worst <= 1e-4 && within(el, 60.0),
        detail: format!(
            "5 random architectures ({sizes:?} parameters), max relative error {worst:.2e}, {:.2}s",
            el.as_secs_f64()
        ),
        digest: h.finish(),
    }
}

// 6. Learned end-to-end on half-resolution blobs

const E2E_SIZE: usize = 128;
const E2E_PATCH: usize = 32;

fn e2e_spec() -> ShapeSpec {
    ShapeSpec {
        family: Family::Blob,
        width: E2E_SIZE,
        height: E2E_SIZE,
        r_min: 18.0,
        r_max: 26.0,
        amplitude: 0.3,
        patch_size: E2E_PATCH,
        seed: 7,
        ..ShapeSpec::default()
    }
}

fn e2e_rollout_cfg() -> RolloutConfig {
    let mut cfg = RolloutConfig::default();
    cfg.step.patch_size = E2E_PATCH;
    cfg
}

struct Experiment {
    model: PolicyModel,
    test: Vec<SynthPair>,
    /// Seed heading and Dice of each held-out case; Dice 0 if not converged.
    runs: Vec<([f64; 2], f64)>,
}

fn learned_dice(model: &PolicyModel, img: &GrayImage, mask: &BinaryMask, init: AgentState) -> Option<(f64, Contour)> {
    let r = rollout(&Policy::Learned(model), img, init, &e2e_rollout_cfg()).ok()?;
    Some((contour_dice(&r.contour, mask), r.contour))
}

fn criterion_6() -> (Outcome, Experiment) {
    let t0 = Instant::now();
    let pairs = gen_dataset(400, &e2e_spec()).unwrap();
    let (test, train): (Vec<SynthPair>, Vec<SynthPair>) = pairs.into_iter().partition(|p| p.is_test());
    let test: Vec<SynthPair> = test.into_iter().take(50).collect();
    let train: Vec<_> = train.into_iter().map(|p| (p.image, p.mask)).collect();

    let dcfg = DatasetConfig {
        rho: 0.05,
        band_px: 24.0,
        offsets: vec![-45f64.to_radians(), 45f64.to_radians()],
        patch_size: E2E_PATCH,
        seed: 11,
        ..DatasetConfig::default()
    };
    let ds = build_dataset(&train, &dcfg).unwrap();
    drop(train);
    let ds_digest = digest_of(|h| ds.write_to(h).unwrap());
    let n_samples = ds.len();

    let mut model = init_model::<f32>(&Architecture::default_for(E2E_PATCH), 1).unwrap();
    let tcfg = TrainConfig {
        epochs: 10,
        batch: 64,
        seed: 2,
        ..TrainConfig::default()
    };
    let history = train_with(&mut model, &ds, &tcfg, |e, l| {
        eprintln!("  epoch {:>2}: loss {l:.4} ({:.0}s)", e + 1, t0.elapsed().as_secs_f64())
    })
    .unwrap();
    drop(ds);
    let ckpt_digest = digest_of(|h| write_checkpoint(&model, h).unwrap());
    let descent = history[9] < 0.5 * history[0];

    let mut runs = Vec::new();
    let mut reports = Vec::new();
    let mut contours = HashWriter::default();
    let mut converged = 0;
    for p in &test {
        let mut rng = ChaCha8Rng::seed_from_u64(p.index as u64);
        let init = init_state(&p.image, p.mask.centroid().unwrap(), None, E2E_PATCH, &mut rng).unwrap();
        let dice = match learned_dice(&model, &p.image, &p.mask, init) {
            Some((d, c)) => {
                converged += 1;
                reports.push(evaluate_case(&c, &p.mask, 1.0).unwrap());
                contour_bytes(&mut contours, &c);
                d
            }
            None => 0.0,
        };
        runs.push((init.heading, dice));
    }
    let converged_dice: Vec<f64> = runs.iter().map(|r| r.1).filter(|&d| d > 0.0).collect();
    let mean = converged_dice.iter().sum::<f64>() / converged_dice.len().max(1) as f64;
    let report_json = Report::new(reports).map(|r| r.to_json()).unwrap_or_default();
    let el = t0.elapsed();

    let mut h = std::collections::hash_map::DefaultHasher::new();
    for d in [ds_digest, ckpt_digest, contours.finish()] {
        h.write_u64(d);
    }
    h.write(report_json.as_bytes());
    let outcome = Outcome {
        pass: converged >= 45 && mean >= 0.90 && descent && el.as_secs_f64() <= 1800.0,
        detail: format!(
            "{n_samples} training patches, loss epoch 1 {:.4} -> epoch 10 {:.4}, {converged}/50 converged, mean Dice {mean:.4}, {:.0}s",
            history[0],
            history[9],
            el.as_secs_f64()
        ),
        digest: h.finish(),
    };
    (outcome, Experiment { model, test, runs })
}

// 7. Rotational invariance

fn rotated_state(init: AgentState, turn: QuarterTurn, w: usize, h: usize) -> AgentState {
    let p = turn.apply_point(init.position, w, h);
    let q = turn.apply_point([init.position[0] + init.heading[0], init.position[1] + init.heading[1]], w, h);
    AgentState {
        position: p,
        heading: [q[0] - p[0], q[1] - p[1]],
        ..init
    }
}

fn criterion_7(exp: &Experiment) -> Outcome {
    let t0 = Instant::now();
    let (mut base, mut turned) = (Vec::new(), Vec::new());
    for (p, &(heading, dice)) in exp.test.iter().zip(&exp.runs).take(20) {
        base.push(dice);
        let init = AgentState {
            position: p.mask.centroid().unwrap(),
            heading,
            t: 0,
            pinned: 0,
        };
        for turn in QuarterTurn::all() {
            let img = p.image.rotate(turn);
            let mask = p.mask.rotate(turn);
            let rinit = rotated_state(init, turn, E2E_SIZE, E2E_SIZE);
            turned.push(learned_dice(&exp.model, &img, &mask, rinit).map_or(0.0, |r| r.0));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let learned_drop = mean(&base) - mean(&turned);

    // oracle: circles whose center is rotated about the image center
    let cfg = RolloutConfig::default();
    let c0 = [128.0, 128.0];
    let (mut obase, mut oturned) = (Vec::new(), Vec::new());
    for (k, (r, off)) in [(40.0, [22.0, -9.0]), (52.5, [-15.0, 12.0]), (33.0, [30.0, 25.0])].into_iter().enumerate() {
        for (j, alpha) in [0.0f64, 0.3, 1.1, 2.0, 2.9, 4.4, 5.6].into_iter().enumerate() {
            let (s, c) = alpha.sin_cos();
            let center = [c0[0] + c * off[0] - s * off[1], c0[1] + s * off[0] + c * off[1]];
            let mask = BinaryMask::disk(256, 256, center, r);
            let img = flat_image(&mask);
            let fb = build_dynamic(&mask).unwrap();
            let start = [center[0] + 0.4 * r * (alpha + 0.7).cos(), center[1] + 0.4 * r * (alpha + 0.7).sin()];
            let mut rng = ChaCha8Rng::seed_from_u64((10 * k + j) as u64);
            let init = init_state(&img, start, Some([(alpha + 2.0).cos(), (alpha + 2.0).sin()]), 64, &mut rng).unwrap();
            let d = rollout(&Policy::Oracle(&fb), &img, init, &cfg)
                .map_or(0.0, |r| contour_dice(&r.contour, &mask));
            if j == 0 {
                obase.push(d);
            } else {
                oturned.push(d);
            }
        }
    }
    let oracle_drop = mean(&obase) - mean(&oturned);
    let el = t0.elapsed();
    Outcome {
        pass: learned_drop <= 0.03 && oracle_drop <= 0.01,
        detail: format!(
            "learned mean Dice {:.4} -> {:.4} rotated (drop {learned_drop:.4} <= 0.03), oracle drop {oracle_drop:.4} <= 0.01, {:.1}s",
            mean(&base),
            mean(&turned),
            el.as_secs_f64()
        ),
        digest: 0,
    }
}

// 8. Metrics sanity

fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Contour {
    Contour::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
}

fn criterion_8() -> Outcome {
    let t0 = Instant::now();
    let mut failures: Vec<&str> = Vec::new();
    let mut check = |ok: bool, name: &'static str| {
        if !ok {
            failures.push(name);
        }
    };

    let sq = rasterize(&square(10.0, 10.0, 20.0, 20.0), 32, 32).unwrap();
    check(sq.count_foreground() == 121, "square rasterizes to 121 pixels");
    check(
        rasterize(&Contour::new(vec![[1.0, 1.0], [5.0, 5.0], [9.0, 9.0]]), 16, 16).is_err(),
        "zero-area triangle is degenerate",
    );
    let disk = BinaryMask::disk(128, 128, [64.0, 64.0], 40.0);
    let poly = rasterize(&Contour::circle([64.0, 64.0], 40.0, 400), 128, 128).unwrap();
    check(mask_dice(&poly, &disk).unwrap().unwrap() >= 0.99, "circle polygon vs disk Dice");

    let a = BinaryMask::from_fn(40, 40, |x, y| x < 10 && y < 10);
    let b = BinaryMask::from_fn(40, 40, |x, y| (5..15).contains(&x) && y < 10);
    let far = BinaryMask::from_fn(40, 40, |x, y| x >= 30 && y >= 30);
    check(mask_dice(&a, &a).unwrap() == Some(1.0), "identical masks Dice 1");
    check(mask_dice(&a, &far).unwrap() == Some(0.0), "disjoint masks Dice 0");
    check(mask_dice(&a, &b).unwrap() == Some(0.5), "half overlap Dice 0.5");

    let c40 = Contour::circle([64.0, 64.0], 40.0, 720);
    let c43 = Contour::circle([64.0, 64.0], 43.0, 720);
    check(apd(&c40, &c40, 1.0).unwrap() == 0.0, "identical contours APD 0");
    check((apd(&c40, &c43, 1.0).unwrap() - 3.0).abs() <= 0.05, "concentric APD 3.0");
    check((apd(&c40, &c43, 1.25).unwrap() - 3.75).abs() <= 0.07, "concentric APD 3.75");

    let c = Confusion { tp: 50, fp: 0, tn: 50, fn_: 0 };
    let single = aggregate(&[MetricsReport::new(&c, 1.0)]).unwrap();
    check(single.dice.unwrap().std == 0.0, "single report std 0");
    let pair = MeanStd::of(&[0.9, 0.94]).unwrap();
    check(
        (pair.mean - 0.92).abs() < 1e-12 && (pair.std - 0.02).abs() < 1e-12 && pair.format(2) == "0.92(0.02)",
        "{0.9, 0.94} formats as 0.92(0.02)",
    );
    let reports: Vec<MetricsReport> = [1.0, 2.0, 3.0, 7.0].iter().map(|&d| MetricsReport::new(&c, d)).collect();
    check(aggregate(&reports).unwrap().good_rate_pct == 75.0, "3 of 4 good is 75%");

    let el = t0.elapsed();
    let n = failures.len();
    Outcome {
        pass: n == 0 && within(el, 1.0),
        detail: if n == 0 {
            format!("13 examples hold, {:.3}s", el.as_secs_f64())
        } else {
            format!("failed: {}", failures.join("; "))
        },
        digest: 0,
    }
}

fn report(n: usize, name: &str, o: &Outcome) -> bool {
    println!("criterion {n} [{name}]: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

fn main() -> ExitCode {
    let names = [
        "EDT exactness",
        "field correctness",
        "limit-cycle convergence",
        "Poincaré contraction",
        "gradient check",
        "learned end-to-end",
        "rotational invariance",
        "metrics sanity",
        "determinism",
    ];
    let run_1_to_6 = || {
        let mut outs = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5()];
        let (o6, exp) = criterion_6();
        outs.push(o6);
        (outs, exp)
    };

    let (first, exp) = run_1_to_6();
    let mut all = true;
    for (i, o) in first.iter().enumerate() {
        all &= report(i + 1, names[i], o);
    }
    all &= report(7, names[6], &criterion_7(&exp));
    all &= report(8, names[7], &criterion_8());
    drop(exp);

    let t0 = Instant::now();
    let (second, _) = run_1_to_6();
    let differing: Vec<usize> = first
        .iter()
        .zip(&second)
        .enumerate()
        .filter(|(_, (a, b))| a.digest != b.digest)
        .map(|(i, _)| i + 1)
        .collect();
    let det = Outcome {
        pass: differing.is_empty(),
        detail: format!(
            "criteria 1-6 rerun, artifacts differ for {differing:?}, {:.0}s",
            t0.elapsed().as_secs_f64()
        ),
        digest: 0,
    };
    all &= report(9, names[8], &det);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
