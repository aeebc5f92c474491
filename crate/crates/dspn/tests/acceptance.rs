//! Acceptance criteria, one line per criterion. Every numeric check uses an
//! oracle written here rather than the library's own helpers.

#![allow(clippy::needless_range_loop, clippy::type_complexity, clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use dspn::report::RunReport;
use dspn_core::dsp::{design_butterworth, filter_in_place, notch_powerline, FilterKind, PreprocessConfig};
use dspn_core::features::{self, extract_features, FeatureConfig, FeatureKind};
use dspn_core::learn::ensemble::bootstrap_counts;
use dspn_core::learn::metrics::{ConfusionMatrix, MetricsReport};
use dspn_core::learn::tree::argmax;
use dspn_core::learn::{
    evaluate_cv, smote_balance, train_adaboost_m2, train_bagged_forest, CvConfig, SmotePlacement, TrainerSpec,
    TreeParams,
};
use dspn_core::matrix::FeatureMatrix;
use dspn_core::model::{grade_from_fuzzy_score, ChannelFamily, ChannelKind, SeverityGrade, Unit};
use dspn_core::pipeline::{segment_dataset, SegmentationConfig};
use dspn_core::selection::{assemble_channel_study, prune_correlated, relieff_rank, SelectionConfig};
use dspn_core::synth::{generate_dataset, SynthSpec, SYNTH_SCHEME};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn grade(i: usize) -> SeverityGrade {
    SeverityGrade::ALL[i]
}

fn matrix(cols: usize, rows: &[(Vec<f64>, SeverityGrade)]) -> FeatureMatrix {
    let names = (0..cols).map(|j| format!("f{j}")).collect();
    let data = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let labels = rows.iter().map(|r| r.1).collect();
    let keys = (0..rows.len()).map(|i| format!("r{i:05}")).collect();
    FeatureMatrix::new(names, data, labels, keys).unwrap()
}

fn blobs(per_class: usize, spread: f64, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = Normal::new(0.0, spread).unwrap();
    let centres = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0], [4.0, 4.0]];
    let mut rows = Vec::new();
    for (c, ctr) in centres.iter().enumerate() {
        for _ in 0..per_class {
            let v = vec![ctr[0] + nd.sample(&mut rng), ctr[1] + nd.sample(&mut rng), nd.sample(&mut rng)];
            rows.push((v, grade(c)));
        }
    }
    matrix(3, &rows)
}

// ---------------------------------------------------------------- 1 and 10

struct Runs {
    dir: tempfile::TempDir,
}

fn dspn(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_dspn"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| format!("cannot start dspn: {e}"))
}

fn write_config(dir: &Path, name: &str, channels: &str) -> std::path::PathBuf {
    let p = dir.join(format!("{name}.toml"));
    let text = format!(
        "seed = 1\ndataset = \"data/manifest.json\"\nscheme = \"{SYNTH_SCHEME}\"\n\
         channels = [{channels}]\noutput = \"out/{name}\"\n"
    );
    fs::write(&p, text).unwrap();
    p
}

fn timed_run(cfg: &Path, extra: &[&str]) -> Result<(RunReport, f64), String> {
    let mut args = vec!["run", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    let t0 = Instant::now();
    let o = dspn(&args)?;
    let secs = t0.elapsed().as_secs_f64();
    ensure!(o.status.success(), "run failed: {}", String::from_utf8_lossy(&o.stderr));
    let cfg_dir = cfg.parent().unwrap();
    let name = cfg.file_stem().unwrap().to_str().unwrap();
    let out = extra
        .windows(2)
        .find(|w| w[0] == "--output")
        .map_or_else(|| cfg_dir.join("out").join(name), |w| Path::new(w[1]).to_path_buf());
    let report = RunReport::read(&out.join("report.json")).map_err(|e| e.to_string())?;
    Ok((report, secs))
}

fn end_to_end(runs: &Runs) -> Outcome {
    let dir = runs.dir.path();
    let data = dir.join("data");
    let o = dspn(&["synth", "--seed", "1", "--out", data.to_str().unwrap()])?;
    ensure!(o.status.success(), "synth failed: {}", String::from_utf8_lossy(&o.stderr));

    let emg = write_config(dir, "emg", "\"GM\", \"TA\", \"VL\"");
    let grf = write_config(dir, "grf", "\"GRFx\", \"GRFy\", \"GRFz\"");
    let mut lines = Vec::new();
    for (cfg, expect) in [
        (&emg, TrainerSpec::AdaboostM2 { cycles: 305, learn_rate: 0.96, max_splits: 71 }),
        (&grf, TrainerSpec::Bag { cycles: 305, learn_rate: 0.96, max_splits: 430, vars_per_split: 5 }),
    ] {
        let (r, secs) = timed_run(cfg, &["--threads", "1"])?;
        ensure!(r.trainer == expect, "{}: trainer {:?}", r.combo, r.trainer);
        ensure!(r.n_rows == 392 && r.class_counts == [142, 93, 85, 72], "{}: rows {:?}", r.combo, r.class_counts);
        ensure!(r.cv.folds == 10 && r.cv.smote == SmotePlacement::InsideFolds, "{}: cv {:?}", r.combo, r.cv);
        let acc = r.best.metrics.accuracy;
        ensure!(r.best.metrics.auc.is_some(), "{}: best entry lacks AUC", r.combo);
        ensure!(acc.mean >= 85.0, "{}: best accuracy {:.2} < 85", r.combo, acc.mean);
        ensure!(secs <= 300.0, "{}: run took {secs:.0} s", r.combo);
        lines.push(format!("{} {:.2}±{:.2}% at K={} in {secs:.0}s", r.family, acc.mean, acc.std, r.best.k));
    }
    Ok(lines.join("; "))
}

fn determinism(runs: &Runs) -> Outcome {
    let dir = runs.dir.path();
    let emg = dir.join("emg.toml");
    ensure!(emg.is_file(), "end-to-end run did not leave a configuration behind");
    let first = fs::read(dir.join("out/emg/report.json")).map_err(|e| e.to_string())?;
    let again = dir.join("again");
    timed_run(&emg, &["--threads", "4", "--output", again.to_str().unwrap()])?;
    let second = fs::read(again.join("report.json")).map_err(|e| e.to_string())?;
    ensure!(first == second, "report JSON differs between 1 and 4 threads");
    for f in ["metrics.csv", "features.csv", "ranking.csv", "model.json"] {
        let a = fs::read(dir.join("out/emg").join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(again.join(f)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{f} differs between 1 and 4 threads");
    }
    Ok(format!("report.json identical ({} bytes) at 1 and 4 threads", first.len()))
}

// ---------------------------------------------------------------- 2

fn channel_shapes() -> Outcome {
    let spec = SynthSpec { subjects_per_class: [2; 4], trials_per_class: [6; 4], ..SynthSpec::with_seed(3) };
    let ds = generate_dataset(&spec).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (family, chans) in [(ChannelFamily::Emg, ChannelKind::EMG), (ChannelFamily::Grf, ChannelKind::GRF)] {
        for mask in 1..8u32 {
            let combo: Vec<ChannelKind> = (0..3).filter(|b| mask & (1 << b) != 0).map(|b| chans[b]).collect();
            let set = segment_dataset(&ds, SYNTH_SCHEME, &combo, &SegmentationConfig::default(), &[])
                .map_err(|e| e.to_string())?;
            let study = assemble_channel_study(
                &set.trials,
                family,
                &combo,
                &FeatureConfig::default(),
                &SelectionConfig::default(),
            )
            .map_err(|e| e.to_string())?;
            let want = 19 * combo.len();
            ensure!(study.full.n_cols() == want, "{combo:?}: {} columns, want {want}", study.full.n_cols());
            for ch in &combo {
                let n = study.full.columns().iter().filter(|c| c.starts_with(&format!("{}.", ch.name()))).count();
                ensure!(n == 19, "{combo:?}: {n} columns for {ch}");
            }
            checked += 1;
        }
    }
    ensure!(
        assemble_channel_study(
            &[],
            ChannelFamily::Emg,
            &[ChannelKind::EmgGm, ChannelKind::GrfX],
            &FeatureConfig::default(),
            &SelectionConfig::default()
        )
        .is_err(),
        "mixed combination accepted"
    );
    Ok(format!("{checked} combinations give 19/38/57 columns"))
}

// ---------------------------------------------------------------- 3

fn amplitude_at(x: &[f64], bin: usize) -> f64 {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf[bin].norm()
}

fn filters() -> Outcome {
    let fs = 2000.0;
    let bp = design_butterworth(FilterKind::Bandpass, 4, &[4.0, 500.0], fs).map_err(|e| e.to_string())?;
    // Impulse response long enough to decay fully; 1 mHz bins put both cutoffs on a bin.
    let n = 2_000_000;
    let mut h = vec![0.0; n];
    h[0] = 1.0;
    filter_in_place(&bp.sections, &mut h, false);
    let mut spec: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut spec);
    let db = |f: f64| 20.0 * spec[(f * n as f64 / fs).round() as usize].norm().log10();
    let (lo, hi, dc) = (db(4.0), db(500.0), db(0.0));
    ensure!(close(lo, -3.0103, 0.5), "gain at 4 Hz {lo:.3} dB");
    ensure!(close(hi, -3.0103, 0.5), "gain at 500 Hz {hi:.3} dB");
    ensure!(dc <= -40.0, "gain at DC {dc:.1} dB");

    let cfg = PreprocessConfig::default();
    let len = 40_000;
    let tone = |f: f64| (0..len).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect::<Vec<_>>();
    // 8 s from the middle: whole cycles of both tones, away from edge transients.
    let (a, b, win) = (12_000, 28_000, 16_000);
    let mut change = Vec::new();
    for f in [60.0, 35.0] {
        let x = tone(f);
        let t = dspn_core::model::SignalTrace::new(x.clone(), fs, Unit::Volt).unwrap();
        let y = notch_powerline(&t, cfg.notch_fundamental_hz, cfg.notch_q, cfg.notch_max_harmonics, cfg.zero_phase)
            .map_err(|e| e.to_string())?;
        let bin = (f * win as f64 / fs) as usize;
        change.push(20.0 * (amplitude_at(&y.samples()[a..b], bin) / amplitude_at(&x[a..b], bin)).log10());
    }
    ensure!(change[0] <= -40.0, "60 Hz attenuated by only {:.1} dB", -change[0]);
    ensure!(change[1].abs() <= 1.0, "35 Hz changed by {:.3} dB", change[1]);
    Ok(format!(
        "band-pass {lo:.3}/{hi:.3} dB at 4/500 Hz, {dc:.0} dB at DC; notch 60 Hz {:.1} dB, 35 Hz {:.4} dB",
        change[0], change[1]
    ))
}

// ---------------------------------------------------------------- 4

/// Yule-Walker by Gaussian elimination on the Toeplitz system.
fn yule_walker(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let r: Vec<f64> = (0..=order).map(|k| (0..n - k).map(|i| x[i] * x[i + k]).sum::<f64>() / n as f64).collect();
    let mut a: Vec<Vec<f64>> = (0..order)
        .map(|i| {
            let mut row: Vec<f64> = (0..order).map(|j| r[i.abs_diff(j)]).collect();
            row.push(r[i + 1]);
            row
        })
        .collect();
    for c in 0..order {
        let p = (c..order).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        for i in c + 1..order {
            let f = a[i][c] / a[c][c];
            for j in c..=order {
                a[i][j] -= f * a[c][j];
            }
        }
    }
    let mut phi = vec![0.0; order];
    for i in (0..order).rev() {
        let s: f64 = (i + 1..order).map(|j| a[i][j] * phi[j]).sum();
        phi[i] = (a[i][order] - s) / a[i][i];
    }
    phi
}

fn population_variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

fn feature_oracles() -> Outcome {
    use FeatureKind as K;
    ensure!(features::wl(&[0.0, 1.0, 0.0, 1.0]) == 3.0, "WL of [0,1,0,1]");
    ensure!(features::ac1(&[0.0, 1.0, 0.0, 1.0]) == 1.0, "AC1 of [0,1,0,1]");
    let e = [std::f64::consts::E; 16];
    ensure!(close(features::mav(&e), std::f64::consts::E, 1e-15), "MAV of constant e");
    ensure!(close(features::lmav(&e), 1.0, 1e-11), "LMAV of constant e");
    ensure!(features::wl(&e) == 0.0 && features::moments(&e)[1] == 0.0, "WL/M2 of a constant");
    ensure!(features::zc(&[1.0, -1.0, 1.0, -1.0], 0.0) == 3.0, "ZC of alternating signs");
    ensure!(features::ssc(&[0.0, 1.0, 0.0, 1.0, 0.0], 0.0) == 3.0, "SSC of [0,1,0,1,0]");
    ensure!(features::moments(&[1.0, 2.0])[0] == 5.0, "M0 of [1,2]");
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let half: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..3.0)).collect();
    let sym: Vec<f64> = half.iter().copied().chain(half.iter().map(|v| -v)).collect();
    ensure!(features::skewness(&sym).abs() <= 1e-9, "SKW of symmetric data");

    let white = Normal::new(0.0, 1.0).unwrap();
    let mut x = vec![0.0; 4096];
    for i in 1..x.len() {
        x[i] = 0.9 * x[i - 1] + white.sample(&mut rng);
    }
    let ar = features::ar_coefficients(&x, 4);
    let oracle = yule_walker(&x, 4);
    for k in 0..4 {
        ensure!(close(ar[k], oracle[k], 1e-9), "AR{} {} vs Yule-Walker {}", k + 1, ar[k], oracle[k]);
    }
    ensure!(close(ar[0], 0.9, 0.05) && ar[1..].iter().all(|a| a.abs() <= 0.05), "AR(1) fit {ar:?}");

    let (f, fs) = (10.0, 1000.0);
    let s: Vec<f64> = (0..4000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect();
    let d: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    let brute = (population_variance(&d) / population_variance(&s)).sqrt();
    let analytic = 2.0 * (std::f64::consts::PI * f / fs).sin();
    let mob = features::mobility(&s);
    ensure!(close(mob, analytic, 1e-3) && close(mob, brute, 1e-9), "MOB {mob} vs {analytic} / {brute}");

    let cfg = FeatureConfig::default();
    let linear = [K::Wl, K::Ac1, K::Ac2];
    let invariant = [K::Zc, K::Ssc, K::Wamp];
    let scale_free = [K::Mob, K::Com, K::Skw];
    let quadratic = [K::M0, K::M2, K::M4, K::M6];
    let reversal = [K::Mob, K::Com, K::Zc, K::M0];
    for seg in 0..1000 {
        let len = rng.random_range(16..512);
        let amp = 10f64.powf(rng.random_range(-2.0..3.0));
        let offset = if seg % 3 == 0 { rng.random_range(-1.0..1.0) * amp } else { 0.0 };
        let x: Vec<f64> = (0..len).map(|_| offset + amp * white.sample(&mut rng)).collect();
        let c = 10f64.powf(rng.random_range(-2.0..2.0));
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let a = extract_features(&x, &cfg).map_err(|e| format!("segment {seg}: {e}"))?;
        let b = extract_features(&cx, &cfg).map_err(|e| format!("segment {seg}: {e}"))?;
        for k in linear {
            ensure!(rel_close(b.get(k), c * a.get(k), 1e-9), "segment {seg}: {k} not linear in scale");
        }
        for k in invariant {
            ensure!(b.get(k) == a.get(k), "segment {seg}: {k} changed under scaling");
        }
        for k in scale_free {
            ensure!(close(b.get(k), a.get(k), 1e-9 * a.get(k).abs().max(1.0)), "segment {seg}: {k} not scale-free");
        }
        for k in quadratic {
            ensure!(rel_close(b.get(k), c * c * a.get(k), 1e-9), "segment {seg}: {k} not quadratic in scale");
        }
        let mav = features::mav(&x);
        let tol = 2e-12 / (mav * c.min(1.0)) + 1e-12;
        ensure!(close(b.get(K::Lmav) - a.get(K::Lmav), c.ln(), tol), "segment {seg}: LMAV shift");
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let r = extract_features(&rev, &cfg).map_err(|e| e.to_string())?;
        ensure!(rel_close(features::mav(&rev), mav, 1e-12), "segment {seg}: MAV under reversal");
        for k in reversal {
            ensure!(close(r.get(k), a.get(k), 1e-9 * a.get(k).abs().max(1.0)), "segment {seg}: {k} under reversal");
        }
        let tiny: Vec<f64> = x.iter().map(|v| v * 1e-150 / amp).collect();
        let t = extract_features(&tiny, &cfg).map_err(|e| format!("near-zero segment {seg}: {e}"))?;
        ensure!(t.values.iter().all(|v| v.is_finite()), "near-zero segment {seg} not finite");
    }
    let zero = extract_features(&[0.0; 32], &cfg).map_err(|e| e.to_string())?;
    ensure!(zero.values.iter().all(|v| v.is_finite()) && zero.degenerate, "all-zero segment");
    Ok(format!("identities exact; AR1 {:.4}; MOB {mob:.6} vs {analytic:.6}; 1000 scaled segments", ar[0]))
}

// ---------------------------------------------------------------- 5

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

fn greedy_oracle(cols: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    let mut partner = vec![None; cols.len()];
    for i in 0..cols.len() {
        if partner[i].is_some() {
            continue;
        }
        for j in i + 1..cols.len() {
            if partner[j].is_none() && pearson(&cols[i], &cols[j]).abs() >= threshold {
                partner[j] = Some(i);
            }
        }
    }
    partner
}

/// Multiclass ReliefF written from the update rule: k nearest hits and k
/// nearest misses of every other class, Manhattan distance on min-max
/// scaled features, misses weighted by P(C) / (1 - P(class)).
fn relieff_oracle(rows: &[(Vec<f64>, SeverityGrade)], keys: &[String], k: usize) -> Vec<f64> {
    let n = rows.len();
    let p = rows[0].0.len();
    let lo: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r.0[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r.0[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let diff = |j: usize, a: &[f64], b: &[f64]| if hi[j] > lo[j] { (a[j] - b[j]).abs() / (hi[j] - lo[j]) } else { 0.0 };
    let scaled = |r: &[f64]| -> Vec<f64> {
        (0..p).map(|j| if hi[j] > lo[j] { (r[j] - lo[j]) / (hi[j] - lo[j]) } else { 0.0 }).collect()
    };
    let sc: Vec<Vec<f64>> = rows.iter().map(|r| scaled(&r.0)).collect();
    let prior = |g: SeverityGrade| rows.iter().filter(|r| r.1 == g).count() as f64 / n as f64;
    let mut w = vec![0.0; p];
    for i in 0..n {
        let mut others: Vec<(f64, &String, usize)> = (0..n)
            .filter(|&o| o != i)
            .map(|o| ((0..p).fold(0.0, |acc, j| acc + (sc[i][j] - sc[o][j]).abs()), &keys[o], o))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        for g in SeverityGrade::ALL {
            let near: Vec<usize> = others.iter().filter(|t| rows[t.2].1 == g).take(k).map(|t| t.2).collect();
            if near.is_empty() {
                continue;
            }
            let factor = if g == rows[i].1 { -1.0 } else { prior(g) / (1.0 - prior(rows[i].1)) };
            for j in 0..p {
                let s: f64 = near.iter().map(|&o| diff(j, &rows[i].0, &rows[o].0)).sum();
                w[j] += factor * s / (near.len() * n) as f64;
            }
        }
    }
    w
}

fn selection_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let nd = Normal::new(0.0, 1.0).unwrap();
    let mut pruned_total = 0;
    for fixture in 0..50 {
        let n = 40;
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for j in 0..10 {
            let col: Vec<f64> = if j > 0 && rng.random_bool(0.5) {
                let src = cols[rng.random_range(0..j)].clone();
                let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
                let noise = 10f64.powf(rng.random_range(-2.0..0.3));
                src.iter().map(|v| a * v + b + noise * nd.sample(&mut rng)).collect()
            } else {
                (0..n).map(|_| nd.sample(&mut rng)).collect()
            };
            cols.push(col);
        }
        let rows: Vec<(Vec<f64>, SeverityGrade)> =
            (0..n).map(|i| ((0..10).map(|j| cols[j][i]).collect(), grade(i % 4))).collect();
        let m = matrix(10, &rows);
        let got = prune_correlated(&m, 0.9).map_err(|e| e.to_string())?;
        let oracle = greedy_oracle(&cols, 0.9);
        let want_kept: Vec<String> = (0..10).filter(|&j| oracle[j].is_none()).map(|j| format!("f{j}")).collect();
        let want_pairs: Vec<(String, String)> =
            (0..10).filter_map(|j| oracle[j].map(|i| (format!("f{j}"), format!("f{i}")))).collect();
        ensure!(
            got.kept.columns() == want_kept.as_slice(),
            "fixture {fixture}: kept {:?} vs {want_kept:?}",
            got.kept.columns()
        );
        ensure!(got.pruned == want_pairs, "fixture {fixture}: pruned pairs differ");
        let again = prune_correlated(&got.kept, 0.9).map_err(|e| e.to_string())?;
        ensure!(again.pruned.is_empty(), "fixture {fixture}: pruning not idempotent");
        pruned_total += want_pairs.len();
    }

    let rows: Vec<(Vec<f64>, SeverityGrade)> = (0..200)
        .map(|i| {
            let g = if i % 2 == 0 { SeverityGrade::Absent } else { SeverityGrade::Mild };
            (vec![rng.random::<f64>(), if i % 2 == 0 { 0.0 } else { 1.0 }, rng.random::<f64>()], g)
        })
        .collect();
    let m = matrix(3, &rows);
    let ranked = relieff_rank(&m, 10).map_err(|e| e.to_string())?;
    let oracle = relieff_oracle(&rows, m.row_keys(), 10);
    ensure!(ranked.order[0] == "f1", "separating feature ranked {:?}", ranked.order);
    let mut max_dev: f64 = 0.0;
    for (name, w) in ranked.order.iter().zip(&ranked.weights) {
        let j: usize = name[1..].parse().unwrap();
        max_dev = max_dev.max((w - oracle[j]).abs());
    }
    ensure!(max_dev <= 1e-9, "ReliefF weights differ from the oracle by {max_dev:e}");
    for (name, w) in ranked.order.iter().zip(&ranked.weights) {
        ensure!(name == "f1" || w.abs() <= 0.1, "noise feature {name} weight {w}");
    }
    Ok(format!("50 pruning fixtures ({pruned_total} prunes) match; ReliefF max |Δw| {max_dev:.1e}"))
}

// ---------------------------------------------------------------- 6

fn smote_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let nd = Normal::new(0.0, 1.0).unwrap();
    let mut synthetic = 0;
    for fixture in 0..100u64 {
        let p = rng.random_range(2..6);
        let counts: Vec<usize> = (0..4).map(|_| rng.random_range(2..30)).collect();
        let mut rows = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                rows.push((
                    (0..p).map(|j| c as f64 * 2.0 + (j as f64 + 1.0) * nd.sample(&mut rng)).collect(),
                    grade(c),
                ));
            }
        }
        let m = matrix(p, &rows);
        let b = smote_balance(&m, 5, fixture).map_err(|e| e.to_string())?.matrix;
        let target = *counts.iter().max().unwrap();
        ensure!(b.class_counts() == [target; 4], "fixture {fixture}: counts {:?}", b.class_counts());
        for r in 0..m.n_rows() {
            ensure!(
                b.row(r) == m.row(r) && b.labels()[r] == m.labels()[r] && b.row_keys()[r] == m.row_keys()[r],
                "fixture {fixture}: original row {r} altered"
            );
        }
        for s in m.n_rows()..b.n_rows() {
            ensure!(b.is_synthetic(s), "fixture {fixture}: row {s} not flagged synthetic");
            let g = b.labels()[s];
            let real: Vec<&[f64]> = (0..m.n_rows()).filter(|&r| m.labels()[r] == g).map(|r| m.row(r)).collect();
            let y = b.row(s);
            let on_segment = real.iter().any(|x| {
                real.iter().any(|z| {
                    let between = (0..p).all(|j| y[j] >= x[j].min(z[j]) - 1e-12 && y[j] <= x[j].max(z[j]) + 1e-12);
                    let j0 = (0..p).max_by(|&a, &c| (z[a] - x[a]).abs().total_cmp(&(z[c] - x[c]).abs())).unwrap();
                    let span = z[j0] - x[j0];
                    let u = if span == 0.0 { 0.0 } else { (y[j0] - x[j0]) / span };
                    between && (0.0..=1.0).contains(&u) && (0..p).all(|j| close(y[j], x[j] + u * (z[j] - x[j]), 1e-9))
                })
            });
            ensure!(on_segment, "fixture {fixture}: synthetic row {s} off every same-class segment");
            synthetic += 1;
        }
        let again = smote_balance(&m, 5, fixture).map_err(|e| e.to_string())?.matrix;
        ensure!(again == b, "fixture {fixture}: not deterministic");
    }
    Ok(format!("100 fixtures, {synthetic} synthetic rows checked"))
}

// ---------------------------------------------------------------- 7

fn ensemble_internals() -> Outcome {
    let m = blobs(100, 1.6, 70);
    let n = m.n_rows();
    let lr = 0.96;
    let model = train_adaboost_m2(&m, 60, lr, &TreeParams::new(7), 71).map_err(|e| e.to_string())?;
    ensure!(model.learners.len() == model.trace.len() && !model.learners.is_empty(), "trace length");
    // Replay the pair distribution from the retained learners.
    let mut dist = vec![[0.0; 4]; n];
    for i in 0..n {
        for c in 0..4 {
            if c != m.labels()[i].index() {
                dist[i][c] = 1.0 / (n * 3) as f64;
            }
        }
    }
    let mut worst_sum: f64 = 0.0;
    let mut max_eps: f64 = 0.0;
    for (t, (tree, step)) in model.learners.iter().zip(&model.trace).enumerate() {
        let post: Vec<[f64; 4]> = (0..n).map(|i| *tree.posterior(m.row(i))).collect();
        let mut eps = 0.0;
        for i in 0..n {
            let y = m.labels()[i].index();
            for c in (0..4).filter(|&c| c != y) {
                eps += 0.5 * dist[i][c] * (1.0 - post[i][y] + post[i][c]);
            }
        }
        ensure!(eps < 0.5, "cycle {t}: pseudo-loss {eps}");
        ensure!(close(eps, step.pseudo_loss, 1e-12), "cycle {t}: pseudo-loss {} vs replay {eps}", step.pseudo_loss);
        let beta = (eps / (1.0 - eps)).max(1e-10);
        ensure!(close(model.learner_weights[t], lr * (1.0 / beta).ln(), 1e-9), "cycle {t}: learner weight");
        for i in 0..n {
            let y = m.labels()[i].index();
            for c in (0..4).filter(|&c| c != y) {
                dist[i][c] *= beta.powf(lr * 0.5 * (1.0 + post[i][y] - post[i][c]));
            }
        }
        let z: f64 = dist.iter().flatten().sum();
        dist.iter_mut().flatten().for_each(|d| *d /= z);
        let sum: f64 = dist.iter().flatten().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs()).max((step.distribution_sum - 1.0).abs());
        max_eps = max_eps.max(eps);
    }
    ensure!(worst_sum <= 1e-12, "distribution sum off by {worst_sum:e}");

    let m = blobs(50, 0.8, 72);
    let n = m.n_rows();
    let cycles = 40;
    let params = TreeParams { vars_per_split: Some(2), ..TreeParams::new(430) };
    let forest = train_bagged_forest(&m, cycles, 1.0, &params, 73).map_err(|e| e.to_string())?;
    let oob = forest.oob_predictions(&m).map_err(|e| e.to_string())?;
    let mut votes = vec![[0.0; 4]; n];
    let mut post = vec![[0.0; 4]; n];
    let mut seen = vec![0usize; n];
    let mut oob_rows = 0usize;
    for (t, tree) in forest.learners.iter().enumerate() {
        let counts = bootstrap_counts(forest.seed, t, n);
        ensure!(counts.iter().sum::<u32>() as usize == n, "tree {t}: bootstrap size");
        ensure!(counts == bootstrap_counts(forest.seed, t, n), "tree {t}: bootstrap not reproducible");
        for i in 0..n {
            if counts[i] > 0 {
                continue;
            }
            oob_rows += 1;
            let p = tree.posterior(m.row(i));
            votes[i][argmax(p)] += 1.0;
            for c in 0..4 {
                post[i][c] += p[c];
            }
            seen[i] += 1;
        }
    }
    let mut correct = 0;
    let mut covered = 0;
    for i in 0..n {
        let direct = (seen[i] > 0).then(|| {
            let s: [f64; 4] = std::array::from_fn(|c| votes[i][c] + 0.5 * post[i][c] / seen[i] as f64);
            grade(argmax(&s))
        });
        ensure!(direct == oob[i], "row {i}: OOB {:?} vs recomputed {direct:?}", oob[i]);
        if let Some(g) = direct {
            covered += 1;
            correct += usize::from(g == m.labels()[i]);
        }
    }
    let frac = oob_rows as f64 / (n * cycles) as f64;
    ensure!(close(frac, (1.0 - 1.0 / n as f64).powi(n as i32), 0.03), "OOB fraction {frac}");
    let acc = correct as f64 / covered as f64;
    ensure!(acc >= 0.95, "OOB accuracy {acc}");
    Ok(format!(
        "{} boosting cycles, max ε {max_eps:.3}, |Σd−1| ≤ {worst_sum:.1e}; OOB on 200 rows matches, accuracy {:.1}%",
        model.learners.len(),
        100.0 * acc
    ))
}

// ---------------------------------------------------------------- 8

fn metrics_exactness() -> Outcome {
    use SeverityGrade::*;
    // Truth row, predicted column: 10 correct, Absent->Mild and Moderate->Severe errors.
    let mut cm = ConfusionMatrix::default();
    for (t, p, k) in [
        (Absent, Absent, 3),
        (Absent, Mild, 1),
        (Mild, Mild, 2),
        (Moderate, Moderate, 3),
        (Moderate, Severe, 1),
        (Severe, Severe, 2),
    ] {
        for _ in 0..k {
            cm.add(t, p);
        }
    }
    let r = MetricsReport::from_folds(&[cm], &[]);
    let want = [
        ("accuracy", r.accuracy.mean, 100.0 * 10.0 / 12.0),
        ("sensitivity", r.sensitivity.mean, 87.5),
        ("specificity", r.specificity.mean, 95.0),
        ("precision", r.precision.mean, 100.0 * 5.0 / 6.0),
        ("f1", r.f1.mean, 100.0 * 29.0 / 35.0),
    ];
    for (name, got, exp) in want {
        ensure!(close(got, exp, 1e-12), "{name}: {got} vs hand value {exp}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let mut perfect = ConfusionMatrix::default();
    let mut scored = Vec::new();
    for i in 0..100 {
        let g = grade(i % 4);
        perfect.add(g, g);
        let mut s = [0.0; 4];
        s[g.index()] = 0.7 + 0.3 * rng.random::<f64>();
        scored.push((g, s));
    }
    let r = MetricsReport::from_folds(&[perfect], &scored);
    for (name, v) in [
        ("accuracy", r.accuracy.mean),
        ("sensitivity", r.sensitivity.mean),
        ("specificity", r.specificity.mean),
        ("precision", r.precision.mean),
        ("f1", r.f1.mean),
    ] {
        ensure!(v == 100.0, "perfect classifier {name} = {v}");
    }
    ensure!(r.auc == Some(1.0), "perfect classifier AUC {:?}", r.auc);

    let scored: Vec<(SeverityGrade, [f64; 4])> =
        (0..2000).map(|_| (grade(rng.random_range(0..4)), std::array::from_fn(|_| rng.random::<f64>()))).collect();
    let r = MetricsReport::from_folds(&[ConfusionMatrix::default()], &scored);
    let auc = r.auc.ok_or("random scores gave no AUC")?;
    let pos: Vec<f64> = scored.iter().filter(|s| s.0 == Absent).map(|s| s.1[0]).collect();
    let neg: Vec<f64> = scored.iter().filter(|s| s.0 != Absent).map(|s| s.1[0]).collect();
    let wins: f64 = pos
        .iter()
        .map(|p| {
            neg.iter()
                .map(|q| {
                    if p > q {
                        1.0
                    } else if p == q {
                        0.5
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        })
        .sum();
    let mann_whitney = wins / (pos.len() * neg.len()) as f64;
    ensure!(close(auc, mann_whitney, 1e-12), "trapezoid AUC {auc} vs Mann-Whitney {mann_whitney}");
    ensure!(close(auc, 0.5, 0.05), "random AUC {auc}");
    Ok(format!("hand fixture exact; perfect = 100%/AUC 1; random AUC {auc:.4}"))
}

// ---------------------------------------------------------------- 9

fn leakage() -> Outcome {
    let counts = [142, 93, 85, 72];
    let mut gaps = Vec::new();
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(90 + seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<(Vec<f64>, SeverityGrade)> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |_| c))
            .map(|c| ((0..8).map(|_| nd.sample(&mut rng)).collect(), grade(c)))
            .collect();
        let m = matrix(8, &rows);
        for spec in [
            TrainerSpec::Knn { k: 1 },
            TrainerSpec::Bag { cycles: 40, learn_rate: 1.0, max_splits: 430, vars_per_split: 3 },
        ] {
            let acc = |smote| -> Result<f64, String> {
                let cfg = CvConfig { seed, smote, ..CvConfig::default() };
                Ok(evaluate_cv(&m, &spec, &cfg).map_err(|e| e.to_string())?.report.accuracy.mean)
            };
            let (clean, leaky) = (acc(SmotePlacement::InsideFolds)?, acc(SmotePlacement::BeforeCv)?);
            ensure!(leaky > clean, "seed {seed} {}: before-CV {leaky:.2} vs inside-folds {clean:.2}", spec.name());
            gaps.push((spec.name(), clean, leaky));
        }
    }
    let summary: Vec<String> = gaps.iter().map(|(n, c, l)| format!("{n} {c:.1}→{l:.1}")).collect();
    Ok(format!("SMOTE before CV inflates accuracy on noise: {}", summary.join(", ")))
}

// ---------------------------------------------------------------- 11

fn grading_map() -> Outcome {
    let hundredths = |i: u32| match i {
        0..=250 => SeverityGrade::Absent,
        251..=499 => SeverityGrade::Mild,
        500..=799 => SeverityGrade::Moderate,
        _ => SeverityGrade::Severe,
    };
    let mut prev = SeverityGrade::Absent;
    let mut seen = [false; 4];
    for i in 0..=2000u32 {
        let x = f64::from(i) / 100.0;
        let g = grade_from_fuzzy_score(x).map_err(|e| format!("{x}: {e}"))?;
        ensure!(g == hundredths(i), "{x} → {g}, want {}", hundredths(i));
        ensure!(g >= prev, "not monotone at {x}");
        seen[g.index()] = true;
        prev = g;
    }
    ensure!(seen.iter().all(|&s| s), "not onto all four grades");
    for (x, g) in [
        (2.5, SeverityGrade::Absent),
        (3.7, SeverityGrade::Mild),
        (9.1, SeverityGrade::Severe),
        (8.0, SeverityGrade::Severe),
        (5.0, SeverityGrade::Moderate),
        (0.0, SeverityGrade::Absent),
    ] {
        ensure!(grade_from_fuzzy_score(x).ok() == Some(g), "{x} should be {g}");
    }
    ensure!(
        grade_from_fuzzy_score(f64::from_bits(2.5f64.to_bits() + 1)).ok() == Some(SeverityGrade::Mild),
        "just above 2.5"
    );
    ensure!(
        grade_from_fuzzy_score(f64::from_bits(8.0f64.to_bits() - 1)).ok() == Some(SeverityGrade::Moderate),
        "just below 8.0"
    );
    for bad in [-0.01, f64::NAN, f64::INFINITY] {
        ensure!(grade_from_fuzzy_score(bad).is_err(), "{bad} accepted");
    }

    let config =
        proptest::test_runner::Config { failure_persistence: None, ..proptest::test_runner::Config::default() };
    let mut runner = proptest::test_runner::TestRunner::new_with_rng(
        config,
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner
        .run(&(0.0f64..=20.0, 0.0f64..=20.0), |(a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(grade_from_fuzzy_score(lo).unwrap() <= grade_from_fuzzy_score(hi).unwrap());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("2001 grid points match the interval oracle; boundaries and random pairs monotone".into())
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let runs = Runs { dir: tempfile::tempdir().expect("temporary directory") };
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "end-to-end synthetic pipeline", Box::new(|| end_to_end(&runs))),
        (2, "channel-combination shapes", Box::new(channel_shapes)),
        (3, "filter correctness", Box::new(filters)),
        (4, "feature oracles", Box::new(feature_oracles)),
        (5, "selection oracles", Box::new(selection_oracles)),
        (6, "SMOTE invariants", Box::new(smote_invariants)),
        (7, "ensemble internals", Box::new(ensemble_internals)),
        (8, "metrics exactness", Box::new(metrics_exactness)),
        (9, "leakage demonstration", Box::new(leakage)),
        (10, "determinism across thread counts", Box::new(|| determinism(&runs))),
        (11, "grading map", Box::new(grading_map)),
    ];
    let only: Option<Vec<u32>> = std::env::var("DSPN_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, check) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(id)) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:>2} {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
