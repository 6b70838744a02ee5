//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.
//!
//! ```text
//! cargo test --test acceptance
//! ```

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stylenet::corpus::{curate, train_count, GenreLabel, Split};
use stylenet::midi::{
    extract_notes, parse_midi, vlq_decode, vlq_encode, write_midi, EventKind, MidiEvent, MidiFile, NoteSpan,
};
use stylenet::model::{
    encode_file, evaluate, make_windows, optimizer_step, predict_performance, run_gradcheck_suite, Checkpoint,
    ModelDims, StyleNetParams, TrainConfig, Window,
};
use stylenet::nn::{clip_by_global_norm, ParamSet, Tensor};
use stylenet::roll::{decode_velocities, denormalize_velocity, encode, GridSpec, LOWEST_PITCH, NUM_KEYS};
use stylenet::synth::{performance, score_with_velocities, SynthOptions};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let results = run_gradcheck_suite(0, 20, false);
    let elapsed = start.elapsed();
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    for r in &results {
        ensure!(r.max_rel_error < 1e-4, "{} max rel err {:.3e} at {}", r.layer, r.max_rel_error, r.worst_tensor);
    }
    ensure!(elapsed < Duration::from_secs(60), "suite took {elapsed:.1?}");
    Ok(format!("20 seeds, {} checks, worst rel err {worst:.3e}, {elapsed:.1?}", results.len()))
}

fn overfit_window(seed: u64) -> Window {
    let file = performance(&SynthOptions { seed, bars: 13, ..Default::default() });
    let enc = encode_file(&file);
    make_windows(&enc.roll, &enc.velocities, 200).unwrap().swap_remove(0)
}

fn overfit_sanity() -> Outcome {
    let config = TrainConfig { batch_size: 1, ..TrainConfig::default() };
    ensure!(
        config.lr == 1e-3 && config.clip_norm == 10.0 && config.keep_prob == 0.8 && config.window == 200,
        "defaults drifted: {config:?}"
    );
    let genres = [GenreLabel::classical(), GenreLabel::jazz()];
    let windows = [overfit_window(1), overfit_window(2)];
    let mut state = Checkpoint::fresh(config, &genres).unwrap();
    let mut grads = state.params.zeros_like();
    let start = Instant::now();
    let mut losses = [f64::INFINITY; 2];
    for step in 1..=2000 {
        let k = (step - 1) % 2;
        optimizer_step(&mut state, &mut grads, &genres[k], &[&windows[k]]).map_err(|e| e.to_string())?;
        if step % 50 == 0 {
            for k in 0..2 {
                losses[k] = evaluate(&state.params, &genres[k], std::slice::from_ref(&windows[k]), false).unwrap();
            }
            if losses.iter().all(|&l| l < 1e-3) {
                let elapsed = start.elapsed();
                ensure!(elapsed < Duration::from_secs(600), "reached target but took {elapsed:.1?}");
                return Ok(format!(
                    "train MSE {:.2e}/{:.2e} after {step} steps, {elapsed:.1?}, {} params",
                    losses[0],
                    losses[1],
                    state.params.num_params()
                ));
            }
        }
    }
    Err(format!("train MSE still {:.2e}/{:.2e} after 2000 steps", losses[0], losses[1]))
}

fn sharing_isolation() -> Outcome {
    let genres = [GenreLabel::classical(), GenreLabel::jazz()];
    let mut state = Checkpoint::fresh(TrainConfig { batch_size: 1, ..TrainConfig::default() }, &genres).unwrap();
    let before = state.params.clone();
    let adam_before = state.adam.clone();
    let mut grads = state.params.zeros_like();
    optimizer_step(&mut state, &mut grads, &GenreLabel::jazz(), &[&overfit_window(3)]).map_err(|e| e.to_string())?;
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let classical = &GenreLabel::classical();
    for ((name, a), b) in before.branches[classical]
        .names()
        .iter()
        .zip(before.branches[classical].tensors())
        .zip(state.params.branches[classical].tensors())
    {
        ensure!(bits(a) == bits(b), "classical tensor {name} changed");
    }
    for ((name, a), b) in
        before.interpretation.names().iter().zip(before.interpretation.tensors()).zip(state.params.interpretation.tensors())
    {
        ensure!(bits(a) != bits(b), "interpretation tensor {name} did not change");
    }
    let jazz_changed = before.branches[&GenreLabel::jazz()]
        .tensors()
        .iter()
        .zip(state.params.branches[&GenreLabel::jazz()].tensors())
        .all(|(a, b)| bits(a) != bits(b));
    ensure!(jazz_changed, "some jazz tensor did not change");
    let names = state.params.names();
    for (i, name) in names.iter().enumerate() {
        if name.starts_with("branch.classical.") {
            ensure!(state.adam.slots[i] == adam_before.slots[i], "adam state of {name} changed");
        }
    }
    let classical_count = names.iter().filter(|n| n.starts_with("branch.classical.")).count();
    Ok(format!("{classical_count} classical tensors bit-identical, 6 interpretation tensors changed"))
}

fn clipping_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 2000;
    let mut clipped = 0;
    for trial in 0..trials {
        let n = rng.gen_range(1..6);
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let mut tensors: Vec<Tensor> = (0..n)
            .map(|_| {
                let shape = [rng.gen_range(1..8), rng.gen_range(1..8)];
                let mut t = Tensor::uniform(&shape, scale, &mut rng);
                if rng.gen_bool(0.1) {
                    t.fill_zero();
                }
                t
            })
            .collect();
        let input = tensors.clone();
        let oracle = input.iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt();
        let mut refs: Vec<&mut Tensor> = tensors.iter_mut().collect();
        let pre = clip_by_global_norm(&mut refs, 10.0).map_err(|e| e.to_string())?;
        ensure!((pre - oracle).abs() <= 1e-12 * oracle.max(1.0), "trial {trial}: pre-norm {pre} vs {oracle}");
        let post = tensors.iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt();
        ensure!((post - oracle.min(10.0)).abs() <= 1e-12, "trial {trial}: post-norm {post} vs min({oracle}, 10)");
        let s = if pre > 10.0 {
            clipped += 1;
            10.0 / pre
        } else {
            1.0
        };
        for (a, b) in input.iter().zip(&tensors) {
            ensure!(
                a.data().iter().zip(b.data()).all(|(x, y)| (x * s).to_bits() == y.to_bits()),
                "trial {trial}: output is not exactly {s} times the input"
            );
        }
    }
    Ok(format!("{trials} random collections, {clipped} clipped"))
}

/// Random non-colliding, grid-aligned notes over the full keyboard.
fn random_score(rng: &mut ChaCha8Rng, division: u16) -> MidiFile {
    let step = (division / 4) as u64;
    let mut timed: Vec<(u64, u8, EventKind)> = Vec::new();
    for key in 0..NUM_KEYS {
        let pitch = LOWEST_PITCH + key as u8;
        let mut t = rng.gen_range(0..8) * step;
        while rng.gen_bool(0.7) && t < 64 * step {
            let dur = rng.gen_range(1..6) * step;
            let velocity = rng.gen_range(1..=127);
            timed.push((t, 1, EventKind::NoteOn { channel: 0, pitch, velocity }));
            timed.push((t + dur, 0, EventKind::NoteOff { channel: 0, pitch, velocity: 0 }));
            t += dur + rng.gen_range(0..3) * step;
        }
    }
    timed.sort_by_key(|(t, order, _)| (*t, *order));
    let mut last = 0;
    let events = timed
        .into_iter()
        .map(|(t, _, kind)| {
            let e = MidiEvent::new((t - last) as u32, kind);
            last = t;
            e
        })
        .collect();
    MidiFile::format0(division, events)
}

fn timing(spans: &[NoteSpan]) -> Vec<(u8, u64, u64)> {
    spans.iter().map(|s| (s.pitch, s.onset_tick, s.duration_ticks)).collect()
}

fn codec_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = StyleNetParams::init(&ModelDims::new(4, 6), &[GenreLabel::jazz()], &mut rng);
    let mut notes = 0;
    for case in 0..50 {
        let division = [96u16, 120, 480, 960][case % 4];
        let file = random_score(&mut rng, division);
        let spans = extract_notes(&file).spans;
        let grid = GridSpec::new(division);
        let enc = encode(&spans, &grid);
        ensure!(enc.dropped == 0, "case {case}: {} notes dropped", enc.dropped);
        let decoded = decode_velocities(&enc.roll, &enc.velocities, &spans, &grid).map_err(|e| e.to_string())?;
        let original: Vec<u8> = spans.iter().map(|s| s.velocity).collect();
        ensure!(decoded == original, "case {case}: velocities differ after encode/decode");
        notes += spans.len();

        let performed = predict_performance(&params, &file, &GenreLabel::jazz(), 32).map_err(|e| e.to_string())?;
        let out_spans = extract_notes(&performed).spans;
        ensure!(timing(&out_spans) == timing(&spans), "case {case}: rendered timing differs");
        let bytes = write_midi(&performed).map_err(|e| e.to_string())?;
        ensure!(parse_midi(&bytes).map_err(|e| e.to_string())? == performed, "case {case}: render does not reparse");
    }
    let v127 = encode_file(&score_with_velocities(&SynthOptions::default(), &[127])).velocities;
    let v1 = encode_file(&score_with_velocities(&SynthOptions::default(), &[1])).velocities;
    let (hi, lo) = (v127.data.get(0, 60 - LOWEST_PITCH as usize), v1.data.get(0, 60 - LOWEST_PITCH as usize));
    ensure!(hi == 1.0 && denormalize_velocity(hi) == 127, "127 -> {hi} -> {}", denormalize_velocity(hi));
    ensure!(lo == 1.0 / 127.0 && denormalize_velocity(lo) == 1, "1 -> {lo} -> {}", denormalize_velocity(lo));
    Ok(format!("50 random scores, {notes} notes, velocities and timing exact"))
}

fn running_status_fixture() -> Vec<u8> {
    let mut bytes = b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0MTrk".to_vec();
    let track: &[u8] = &[
        0x00, 0x90, 0x3C, 0x40, // note on
        0x78, 0x3C, 0x00, // running status, velocity 0
        0x00, 0x3E, 0x50, //
        0x81, 0x70, 0x3E, 0x00, //
        0x00, 0xFF, 0x2F, 0x00,
    ];
    bytes.extend((track.len() as u32).to_be_bytes());
    bytes.extend(track);
    bytes
}

fn fixtures() -> Vec<(String, Vec<u8>)> {
    let mut out = vec![("running-status".to_string(), running_status_fixture())];
    let boundary = MidiFile::format0(
        480,
        vec![
            MidiEvent::note_on(0x00, 0, 60, 90),
            MidiEvent::note_off(0x7F, 0, 60),
            MidiEvent::note_on(0x80, 1, 61, 1),
            MidiEvent::note_off(0x0FFF_FFFF, 1, 61),
        ],
    );
    out.push(("vlq-boundaries".into(), write_midi(&boundary).unwrap()));
    let multi = MidiFile {
        format: 1,
        division: 96,
        tracks: vec![
            vec![
                MidiEvent::new(0, EventKind::Tempo { usec_per_quarter: 600_000 }),
                MidiEvent::time_signature(0, 3, 2),
                MidiEvent::new(0, EventKind::MetaOther { meta_type: 0x03, data: b"piano".to_vec() }),
                MidiEvent::end_of_track(0),
            ],
            vec![
                MidiEvent::new(0, EventKind::Other { status: 0xF0, data: vec![0x7E, 0x7F, 0x09, 0x01, 0xF7] }),
                MidiEvent::new(0, EventKind::Other { status: 0xB0, data: vec![64, 127] }),
                MidiEvent::note_on(10, 0, 64, 70),
                MidiEvent::note_on(0, 0, 64, 0),
                MidiEvent::end_of_track(5),
            ],
        ],
    };
    out.push(("multi-track".into(), write_midi(&multi).unwrap()));
    for seed in 0..5 {
        let opts = SynthOptions { seed, timing_jitter: 7 * seed as u16, ..Default::default() };
        out.push((format!("performance-{seed}"), write_midi(&performance(&opts)).unwrap()));
    }
    out
}

fn midi_io() -> Outcome {
    let all = fixtures();
    for (name, bytes) in &all {
        let first = parse_midi(bytes).map_err(|e| format!("{name}: {e}"))?;
        let written = write_midi(&first).map_err(|e| format!("{name}: {e}"))?;
        let second = parse_midi(&written).map_err(|e| format!("{name}: {e}"))?;
        ensure!(first == second, "{name}: parse/write/parse is not a fixpoint");
        ensure!(write_midi(&second).unwrap() == written, "{name}: second write differs");
    }
    let rs = parse_midi(&running_status_fixture()).unwrap();
    let spans = extract_notes(&rs).spans;
    ensure!(
        timing(&spans) == vec![(60, 0, 120), (62, 120, 240)],
        "running-status notes decoded as {:?}",
        timing(&spans)
    );
    let deltas: Vec<u32> = parse_midi(&all[1].1).unwrap().tracks[0].iter().map(|e| e.delta_ticks).collect();
    ensure!(deltas[..4] == [0x00, 0x7F, 0x80, 0x0FFF_FFFF], "boundary deltas read back as {deltas:?}");
    for v in 0..=65535u32 {
        let enc = vlq_encode(v).map_err(|e| e.to_string())?;
        ensure!(vlq_decode(&enc, 0) == Ok((v, enc.len())), "vlq {v} does not round trip");
    }
    for (v, enc) in [(0u32, vec![0x00]), (0x7F, vec![0x7F]), (0x80, vec![0x81, 0x00]), (0x0FFF_FFFF, vec![0xFF, 0xFF, 0xFF, 0x7F])] {
        ensure!(vlq_encode(v).unwrap() == enc, "vlq {v:#x} encoded as {:?}", vlq_encode(v).unwrap());
    }
    ensure!(vlq_encode(0x1000_0000).is_err(), "vlq above the maximum accepted");
    Ok(format!("{} fixtures are fixpoints, vlq 0..=65535 exact", all.len()))
}

fn write_file(path: &Path, file: &MidiFile) {
    std::fs::write(path, write_midi(file).unwrap()).unwrap();
}

fn distinct(n: usize) -> Vec<u8> {
    (0..n).map(|i| 20 + 3 * i as u8).collect()
}

fn corpus_filters() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut expected = Vec::new();
    let mut sizes = Vec::new();
    for (genre, accepted) in [("classical", 23usize), ("jazz", 41)] {
        let root = dir.path().join(genre);
        std::fs::create_dir_all(&root).unwrap();
        for i in 0..accepted {
            let opts = SynthOptions { seed: i as u64, time_signature: if i % 3 == 0 { None } else { Some((4, 2)) }, ..Default::default() };
            write_file(&root.join(format!("ok{i:02}.mid")), &score_with_velocities(&opts, &distinct(20 + i % 5)));
        }
        let three_four = SynthOptions { time_signature: Some((3, 2)), ..Default::default() };
        let mut f1 = score_with_velocities(&three_four, &distinct(5));
        f1.format = 1;
        write_file(&root.join("bad_format.mid"), &f1);
        expected.push((root.join("bad_format.mid"), "format"));
        write_file(&root.join("bad_meter.mid"), &score_with_velocities(&three_four, &distinct(5)));
        expected.push((root.join("bad_meter.mid"), "time-signature"));
        let six_eight = SynthOptions { time_signature: Some((6, 3)), ..Default::default() };
        write_file(&root.join("bad_meter_rich.mid"), &score_with_velocities(&six_eight, &distinct(30)));
        expected.push((root.join("bad_meter_rich.mid"), "time-signature"));
        write_file(&root.join("bad_velocity.mid"), &score_with_velocities(&SynthOptions::default(), &distinct(19)));
        expected.push((root.join("bad_velocity.mid"), "velocity-range"));
        sizes.push((GenreLabel::new(genre).unwrap(), root, accepted));
    }
    let roots: Vec<(GenreLabel, std::path::PathBuf)> = sizes.iter().map(|(g, r, _)| (g.clone(), r.clone())).collect();
    let manifest = curate(&roots, 20, 0.95, 11).map_err(|e| e.to_string())?;
    for (path, reason) in &expected {
        let entry = manifest.entries.iter().find(|e| &e.path == path).ok_or(format!("{path:?} missing"))?;
        ensure!(!entry.accepted && entry.rejection_reason.as_deref() == Some(*reason),
            "{path:?}: expected {reason}, got {:?}", entry.rejection_reason);
    }
    for (genre, _, n) in &sizes {
        let train = manifest.files(genre, Split::Train).count();
        let val = manifest.files(genre, Split::Validation).count();
        let want = (*n as f64 * 0.95).round() as usize;
        ensure!(train == want && train == train_count(*n, 0.95) && train + val == *n,
            "{genre}: {train} train / {val} validation, expected {want} of {n}");
    }
    let again = curate(&roots, 20, 0.95, 11).map_err(|e| e.to_string())?;
    ensure!(manifest.to_json().unwrap() == again.to_json().unwrap(), "manifest bytes differ under the same seed");
    Ok(format!(
        "{} rejections with correct first reason, splits {}/{} and {}/{}, manifest byte-stable",
        expected.len(),
        train_count(23, 0.95),
        23,
        train_count(41, 0.95),
        41
    ))
}

fn stylenet_cmd(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stylenet")).args(args).env("RUST_LOG", "warn").output().unwrap();
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("stylenet {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    for (genre, offset) in [("classical", 0u64), ("jazz", 100)] {
        std::fs::create_dir_all(p(genre)).unwrap();
        for i in 0..4 {
            let opts = SynthOptions { seed: offset + i, bars: 6, timing_jitter: 10, ..Default::default() };
            write_file(&dir.path().join(genre).join(format!("{i}.mid")), &performance(&opts));
        }
    }
    stylenet_cmd(&["curate", "--classical", &p("classical"), "--jazz", &p("jazz"), "--out", &p("manifest.json"), "--split", "0.75", "--seed", "3"])?;
    let train = |out: &str, epochs: &str, resume: Option<&str>| {
        let manifest = p("manifest.json");
        let out = p(out);
        let mut args = vec!["train", "--manifest", &manifest, "--out", &out, "--epochs", epochs];
        let resume_path;
        match resume {
            Some(r) => {
                resume_path = p(r);
                args.extend(["--resume", resume_path.as_str()]);
            }
            None => args.extend([
                "--window", "32", "--interp-hidden", "5", "--genre-hidden", "6", "--batch-size", "2", "--seed", "9",
            ]),
        }
        stylenet_cmd(&args)
    };
    train("a.ckpt", "4", None)?;
    train("b.ckpt", "4", None)?;
    train("half.ckpt", "2", None)?;
    train("resumed.ckpt", "4", Some("half.ckpt"))?;
    let read = |name: &str| std::fs::read(p(name)).unwrap();
    ensure!(read("a.ckpt") == read("b.ckpt"), "checkpoints of identical runs differ");
    ensure!(read("a.ckpt.losses.csv") == read("b.ckpt.losses.csv"), "loss logs of identical runs differ");
    ensure!(read("a.ckpt") == read("resumed.ckpt"), "resumed checkpoint differs from the uninterrupted run");
    ensure!(read("a.ckpt.losses.csv") == read("resumed.ckpt.losses.csv"), "resumed loss log differs");
    let rows = String::from_utf8(read("a.ckpt.losses.csv")).unwrap().lines().count() - 1;
    ensure!(rows == 8, "loss log has {rows} rows, expected 4 epochs x 2 genres");
    Ok(format!("identical reruns and 2+2 resume byte-equal ({} byte checkpoint)", read("a.ckpt").len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient correctness", gradient_correctness),
        ("overfit sanity", overfit_sanity),
        ("parameter-sharing isolation", sharing_isolation),
        ("clipping contract", clipping_contract),
        ("codec/renderer round trip", codec_round_trip),
        ("midi i/o", midi_io),
        ("corpus filters", corpus_filters),
        ("determinism", determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS  {}. {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL  {}. {name}: {why}", i + 1);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
