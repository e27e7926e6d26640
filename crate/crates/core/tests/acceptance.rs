//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use canvault_core::bus::{AdversaryAction, SimReport};
use canvault_core::group::{GroupId, GroupParams};
use canvault_core::harness::{
    affine_fit, comparison_ratios, expected_messages, run_scenario, ScenarioConfig, SchemeModel,
};
use canvault_core::kem::{
    decapsulate, encapsulate, encapsulate_with, keygen, EcuKeyPair, KemCiphertext, TcrHash,
};
use canvault_core::primitives::{
    aes128_encrypt_block, hash_to_key, hash_to_scalar, hkdf_session, hkdf_sha256, hmac, sha256,
    sym_encrypt, CipherKey, MacKey,
};
use canvault_core::protocol::{
    EcuState, MessageKind, Outcome, ProtocolConfig, SecuState, WireMessage,
};
use num_traits::ToPrimitive;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, t: Duration) -> Result<(), String> {
    if t > limit {
        Err(format!("took {t:.2?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

/// Honest schnorr256 runs with the stm32 profile, shared by criteria 1 and 7.
struct Runs(BTreeMap<u16, SimReport>);

impl Runs {
    const SIZES: [u16; 5] = [1, 2, 15, 25, 35];

    fn collect() -> Result<Self, String> {
        let mut out = BTreeMap::new();
        for n in Self::SIZES {
            let cfg = ScenarioConfig::new(GroupId::Schnorr256, n, 0x5eed + u64::from(n));
            let run = run_scenario(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
            ensure!(
                run.report.passed,
                "N={n}: checks failed: {:?}",
                run.report.checks
            );
            out.insert(n, run.report.sim);
        }
        Ok(Self(out))
    }
}

fn message_complexity(runs: &Result<Runs, String>, t: Duration) -> Verdict {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let mut seen = Vec::new();
    for (&n, sim) in &runs.0 {
        let want = expected_messages(SchemeModel::Ours, u64::from(n)).unwrap();
        ensure!(
            sim.logical_messages == want,
            "N={n}: {} messages, expected {want}",
            sim.logical_messages
        );
        seen.push(format!("{n}->{want}"));
    }
    within(Duration::from_secs(5), t)?;
    Ok(format!("2N+1 exact for N in {{{}}}", seen.join(", ")))
}

fn ratios() -> Verdict {
    let r = comparison_ratios(35).unwrap();
    let (c, m) = (r.percent_vs_carvajal(), r.percent_vs_musuroi());
    ensure!((c - 40.34).abs() <= 0.01, "vs CarvajalRoca {c:.4}%");
    ensure!((m - 25.72).abs() <= 0.01, "vs Musuroi {m:.4}%");
    Ok(format!(
        "N=35: {} = {c:.2}%, {} = {m:.2}%",
        r.vs_carvajal, r.vs_musuroi
    ))
}

fn small(e: &num_bigint::BigUint) -> u64 {
    e.to_u64().expect("toy values fit in u64")
}

/// `base^e mod p` by repeated multiplication.
fn naive_pow(base: u64, e: u64, p: u64) -> u64 {
    (0..e).fold(1, |acc, _| acc * base % p)
}

fn kem_correctness() -> Verdict {
    let toy = GroupParams::toy23();
    let (p, q, g) = (23u64, 11u64, 2u64);
    let mut exhaustive = 0;
    for x in 1..q {
        for y in 1..q {
            let kp = EcuKeyPair::from_secret(&toy, 1, toy.scalar(x), toy.scalar(y));
            for r in 1..q {
                let (k, ct) = encapsulate_with(&toy, &kp.public, &toy.scalar(r), &TcrHash);
                let k2 =
                    decapsulate(&toy, &kp, &ct).map_err(|e| format!("x={x} y={y} r={r}: {e}"))?;
                // shared element is g^(x·r), computed without the group code
                let shared = toy.element(naive_pow(g, x * r, p)).unwrap();
                ensure!(
                    k == k2 && k.0 == hash_to_key(&toy, &shared),
                    "x={x} y={y} r={r}: keys differ"
                );
                exhaustive += 1;
            }
        }
    }

    let prod = GroupParams::schnorr256();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let trials = 1000;
    for i in 0..trials {
        let kp = keygen(&prod, 1, &mut rng);
        let (k, ct) = encapsulate(&prod, &kp.public, &mut rng);
        let k2 = decapsulate(&prod, &kp, &ct).map_err(|e| format!("trial {i}: {e}"))?;
        ensure!(k == k2, "trial {i}: keys differ");
    }
    Ok(format!(
        "{exhaustive} toy (x, y, r) triples and {trials} schnorr256 trials agree"
    ))
}

fn consistency_soundness() -> Verdict {
    let toy = GroupParams::toy23();
    let (p, q) = (23u64, 11u64);
    let elements: Vec<u64> = (1..p).filter(|&v| naive_pow(v, q, p) == 1).collect();
    ensure!(
        elements.len() == 11,
        "subgroup has {} members",
        elements.len()
    );
    let (mut accepted, mut total) = (0, 0);
    for x in 1..q {
        for y in 1..q {
            let kp = EcuKeyPair::from_secret(&toy, 1, toy.scalar(x), toy.scalar(y));
            for &c in &elements {
                let ce = toy.element(c).unwrap();
                let tem = small(hash_to_scalar(&toy, &ce).as_biguint());
                let want = naive_pow(c, (x * tem + y) % q, p);
                for &alpha in &elements {
                    let ct = KemCiphertext {
                        c: ce.clone(),
                        alpha: toy.element(alpha).unwrap(),
                    };
                    let ok = decapsulate(&toy, &kp, &ct).is_ok();
                    ensure!(
                        ok == (alpha == want),
                        "x={x} y={y} c={c} alpha={alpha}: decapsulation {} but oracle says {}",
                        ok,
                        alpha == want
                    );
                    accepted += u32::from(ok);
                    total += 1;
                }
            }
        }
    }
    Ok(format!(
        "{total} (key, c, alpha) cases, {accepted} accepted, all match the oracle"
    ))
}

fn flip(msg: &WireMessage, bit: usize) -> WireMessage {
    let mut m = msg.clone();
    m.body[bit / 8] ^= 1 << (bit % 8);
    m
}

/// Sends every tampered variant to a copy of `receiver` and requires rejection with
/// the state left untouched.
fn sweep<S: Clone + PartialEq>(
    label: &str,
    msg: &WireMessage,
    receiver: &S,
    handle: impl Fn(&mut S, &WireMessage) -> Outcome,
    rng: &mut ChaCha20Rng,
) -> Result<usize, String> {
    let bits = msg.body.len() * 8;
    let positions = index::sample(rng, bits, 200.min(bits));
    for bit in positions.iter() {
        let mut st = receiver.clone();
        let out = handle(&mut st, &flip(msg, bit));
        ensure!(out.is_rejected(), "{label}: bit {bit} gave {out:?}");
        ensure!(st == *receiver, "{label}: bit {bit} changed key state");
    }
    Ok(positions.len())
}

fn tamper_totality() -> Verdict {
    let params = GroupParams::schnorr256();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let keys: Vec<_> = (1..=3).map(|i| keygen(&params, i, &mut rng)).collect();
    let mut secu = SecuState::new(
        params.clone(),
        keys.iter().map(|k| (k.ecu_id, k.public.clone())).collect(),
    );
    let mut ecus: Vec<_> = keys
        .into_iter()
        .map(|k| EcuState::new(params.clone(), k, ProtocolConfig::default()))
        .collect();
    let ecu_handle = |e: &mut EcuState, m: &WireMessage| e.handle(m);
    let mut swept = 0;

    let p2 = secu.run_phase2(&mut rng).map_err(|e| e.to_string())?;
    swept += sweep("pairwise", &p2[0], &ecus[0], ecu_handle, &mut rng)?;
    for (m, e) in p2.iter().zip(ecus.iter_mut()) {
        ensure!(
            e.handle(m) == Outcome::Accepted,
            "honest ciphertext refused"
        );
    }

    let p3 = secu.run_phase3(&mut rng).map_err(|e| e.to_string())?;
    swept += sweep("group secret", &p3[1], &ecus[1], ecu_handle, &mut rng)?;
    for (m, e) in p3.iter().zip(ecus.iter_mut()) {
        ensure!(
            e.handle(m) == Outcome::Accepted,
            "honest group secret refused"
        );
    }

    let seed = ecus[0].run_phase4(&mut rng).map_err(|e| e.to_string())?;
    for (i, e) in ecus.iter().enumerate().skip(1) {
        swept += sweep(
            &format!("seed at ECU {}", i + 1),
            &seed,
            e,
            ecu_handle,
            &mut rng,
        )?;
    }
    swept += sweep("seed at SECU", &seed, &secu, |s, m| s.handle(m), &mut rng)?;

    // the same attack carried out on frames in flight
    for (kind, fragment, bit, victim) in [
        (MessageKind::PairwiseCipher, 4, 1_000, 2u16),
        (MessageKind::GroupSecret, 0, 300, 2),
        (MessageKind::SeedBroadcast, 0, 17, 2),
    ] {
        let mut cfg = ScenarioConfig::new(GroupId::Schnorr256, 2, 8);
        cfg.adversary.push(AdversaryAction::Tamper {
            kind,
            occurrence: usize::from(victim - 1) * usize::from(kind != MessageKind::SeedBroadcast),
            fragment,
            bit,
        });
        let run = run_scenario(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
        let r = &run.report.sim;
        ensure!(
            r.rejections
                .iter()
                .any(|x| x.node == victim && x.kind == kind),
            "{kind:?} tampered on the bus was not rejected by ECU {victim}"
        );
        ensure!(
            run.network.ecu(victim).unwrap().session().is_none(),
            "ECU {victim} keyed despite tampered {kind:?}"
        );
    }
    Ok(format!(
        "{swept} single-bit flips over 3 kinds rejected with state unchanged; 3 on-bus flips rejected"
    ))
}

fn silent_refresh() -> Verdict {
    let k = 4u64;
    let mut cfg = ScenarioConfig::new(GroupId::Schnorr256, 5, 21);
    cfg.ctr_max = 15;
    let base = run_scenario(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    let start = base.network.ecus()[0].session().unwrap().clone();

    cfg.post_ticks = k * (cfg.ctr_max + 1);
    let run = run_scenario(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    let r = &run.report;
    ensure!(
        r.sim.refresh_events == k,
        "{} refresh events, expected {k}",
        r.sim.refresh_events
    );
    ensure!(
        r.frames_during_ticks == 0,
        "{} frames during refresh",
        r.frames_during_ticks
    );
    ensure!(
        r.sim.frames == base.report.sim.frames,
        "frame count changed"
    );

    let mut want = start.key;
    for round in 1..=k {
        want = hkdf_session(want.as_bytes(), round, &start.derivation_key);
    }
    for e in run.network.ecus() {
        let s = e.session().ok_or("ECU without a session")?;
        ensure!(
            s.round == k && s.counter == 0,
            "ECU {} at round {}",
            e.id(),
            s.round
        );
        ensure!(s.key == want, "ECU {} holds a different SSK_{k}", e.id());
    }
    Ok(format!(
        "{k} rollovers at ctr_max={}: {k} refreshes, identical SSK_{k} on 5 ECUs, 0 frames",
        cfg.ctr_max
    ))
}

fn timing(runs: &Result<Runs, String>) -> Verdict {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let ms = |us: u64| us as f64 / 1000.0;
    let p2 = |n| runs.0[&n].elapsed_us(2).unwrap();
    let total = |n: u16| -> u64 { (2..=4).map(|p| runs.0[&n].elapsed_us(p).unwrap()).sum() };
    ensure!(p2(35) <= 535_000, "phase 2 at N=35 took {} ms", ms(p2(35)));
    ensure!(p2(2) <= 31_000, "phase 2 at N=2 took {} ms", ms(p2(2)));
    ensure!(
        total(35) <= 614_000,
        "phases 2-4 at N=35 took {} ms",
        ms(total(35))
    );

    let sizes = [2u16, 15, 25, 35];
    let mut worst: f64 = 0.0;
    for phase in [2u8, 3, 4] {
        let pts: Vec<_> = sizes
            .iter()
            .map(|&n| (f64::from(n), runs.0[&n].elapsed_us(phase).unwrap() as f64))
            .collect();
        worst = worst.max(affine_fit(&pts).2);
    }
    let pts: Vec<_> = sizes
        .iter()
        .map(|&n| (f64::from(n), total(n) as f64))
        .collect();
    worst = worst.max(affine_fit(&pts).2);
    ensure!(worst < 0.01, "affine fit residual {:.3}%", worst * 100.0);
    Ok(format!(
        "phase 2: N=2 {:.1} ms, N=35 {:.1} ms; total N=35 {:.1} ms; max fit residual {:.4}%",
        ms(p2(2)),
        ms(p2(35)),
        ms(total(35)),
        worst * 100.0
    ))
}

fn determinism() -> Verdict {
    let mut cfg = ScenarioConfig::new(GroupId::Schnorr256, 4, 77);
    cfg.ctr_max = 9;
    cfg.post_ticks = 35;
    cfg.adversary = vec![
        AdversaryAction::Replay {
            kind: MessageKind::SeedBroadcast,
            occurrence: 0,
            delay_us: 250,
            can_id: None,
        },
        AdversaryAction::Forge {
            kind: MessageKind::PairwiseCipher,
            receiver: Some(3),
            offset_us: 10,
            body_hex: None,
        },
    ];
    let a = run_scenario(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    let b = run_scenario(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    let (ja, jb) = (a.report.to_json(), b.report.to_json());
    ensure!(ja == jb, "report.json differs between runs");
    ensure!(a.trace_csv() == b.trace_csv(), "frame traces differ");
    Ok(format!(
        "two runs give byte-identical report.json ({} bytes) and trace ({} frames)",
        ja.len(),
        a.trace.len()
    ))
}

fn vectors() -> Verdict {
    let h = |s: &str| hex::decode(s).unwrap();
    let mut passed = Vec::new();

    // FIPS 180-4 examples
    ensure!(
        sha256(b"abc").to_vec()
            == h("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
        "SHA-256 one-block"
    );
    ensure!(
        sha256(b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq").to_vec()
            == h("248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"),
        "SHA-256 two-block"
    );
    passed.push("SHA-256");

    // RFC 4231 cases 1 and 2; zero padding a short key to 32 bytes leaves HMAC unchanged
    let pad = |k: &[u8]| {
        let mut b = [0u8; 32];
        b[..k.len()].copy_from_slice(k);
        MacKey::from_bytes(b)
    };
    ensure!(
        hmac(b"Hi There", &pad(&[0x0b; 20])).as_bytes().to_vec()
            == h("b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"),
        "HMAC-SHA256 case 1"
    );
    ensure!(
        hmac(b"what do ya want for nothing?", &pad(b"Jefe"))
            .as_bytes()
            .to_vec()
            == h("5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"),
        "HMAC-SHA256 case 2"
    );
    passed.push("HMAC-SHA256");

    // RFC 5869 case 1
    let mut okm = [0u8; 42];
    hkdf_sha256(
        &[0x0b; 22],
        &h("000102030405060708090a0b0c"),
        &h("f0f1f2f3f4f5f6f7f8f9"),
        &mut okm,
    );
    ensure!(
        okm.to_vec()
            == h("3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865"),
        "HKDF-SHA256 case 1"
    );
    passed.push("HKDF-SHA256");

    // FIPS 197 C.1 and SP 800-38A F.5.1
    let key: [u8; 16] = h("000102030405060708090a0b0c0d0e0f").try_into().unwrap();
    let pt: [u8; 16] = h("00112233445566778899aabbccddeeff").try_into().unwrap();
    ensure!(
        aes128_encrypt_block(&key, &pt).to_vec() == h("69c4e0d86a7b0430d8cdb78070b4c55a"),
        "AES-128 block"
    );
    let key = CipherKey::from_slice(&h("2b7e151628aed2a6abf7158809cf4f3c")).unwrap();
    let nonce: [u8; 16] = h("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff").try_into().unwrap();
    let ct = sym_encrypt(
        &h("6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51"),
        &key,
        &nonce,
    );
    ensure!(
        ct[16..].to_vec() == h("874d6191b620e3261bef6864990db6ce9806f66b7970fdff8617187bb9fffdff"),
        "AES-128-CTR"
    );
    passed.push("AES-128 (block and CTR)");
    Ok(passed.join(", "))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut line = |n: u8, name: &str, v: Verdict, t: Duration| {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} [{tag}] {name}: {detail} ({t:.2?})");
    };
    let timed = |f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        (v, t.elapsed())
    };

    let t = Instant::now();
    let runs = Runs::collect();
    let runs_time = t.elapsed();
    line(
        1,
        "message complexity",
        message_complexity(&runs, runs_time),
        runs_time,
    );

    let (v, t) = timed(&mut ratios);
    line(2, "comparison ratios", v, t);

    let (v, t) = timed(&mut kem_correctness);
    let v = v.and_then(|d| within(Duration::from_secs(30), t).map(|_| d));
    line(3, "KEM correctness", v, t);

    let (v, t) = timed(&mut consistency_soundness);
    let v = v.and_then(|d| within(Duration::from_secs(10), t).map(|_| d));
    line(4, "consistency-check soundness", v, t);

    let (v, t) = timed(&mut tamper_totality);
    line(5, "tamper totality", v, t);

    let (v, t) = timed(&mut silent_refresh);
    line(6, "silent refresh", v, t);

    let (v, t) = timed(&mut || timing(&runs));
    let v = v.and_then(|d| within(Duration::from_secs(10), t + runs_time).map(|_| d));
    line(7, "timing reproduction", v, t);

    let (v, t) = timed(&mut determinism);
    line(8, "determinism", v, t);

    let (v, t) = timed(&mut vectors);
    line(9, "primitive conformance", v, t);

    if failures == 0 {
        println!("acceptance: 9 of 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 9 criteria failed");
        ExitCode::FAILURE
    }
}
