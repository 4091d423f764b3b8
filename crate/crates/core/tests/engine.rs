mod support;

use proptest::prelude::*;
use ranger21::*;
use support::*;

const T_MAX: u64 = 40;

fn init_params(seed: u64) -> Vec<ParamTensor> {
    let mut r = rng(seed);
    vec![
        ParamTensor::new("w", vec![3, 4], uniform_vec(&mut r, 12, -1.0, 1.0)).unwrap(),
        ParamTensor::new("b", vec![4], uniform_vec(&mut r, 4, -0.1, 0.1)).unwrap(),
    ]
}

fn random_grads(
    r: &mut rand_chacha::ChaCha8Rng,
    like: &[ParamTensor],
    scale: f64,
) -> Vec<ParamTensor> {
    like.iter()
        .map(|p| {
            p.with_values(uniform_vec(r, p.len(), -scale, scale))
                .unwrap()
        })
        .collect()
}

#[derive(Clone)]
struct Captured {
    index: usize,
    theta: ParamTensor,
    grad: ParamTensor,
    clipped: ParamTensor,
    centralized: ParamTensor,
    u: ParamTensor,
    v_hat: ParamTensor,
    eta_t: f64,
    decay: ParamTensor,
    theta_next: ParamTensor,
}

fn capture(t: &TensorTrace<'_>) -> Captured {
    Captured {
        index: t.index,
        theta: t.theta.clone(),
        grad: t.grad.clone(),
        clipped: t.clipped.clone(),
        centralized: t.centralized.clone(),
        u: t.u.clone(),
        v_hat: t.v_hat.clone(),
        eta_t: t.eta_t,
        decay: t.decay.clone(),
        theta_next: t.theta_next.clone(),
    }
}

fn schedule_factor(cfg: &Ranger21Config, t: u64) -> f64 {
    let t = t as f64;
    let mut f = 1.0f64;
    if cfg.toggles.warmup {
        let ramp = ((1.0 - cfg.moments.beta2) / 2.0 * t).max(t / cfg.t_warmup as f64);
        f = f.min(ramp);
    }
    if cfg.toggles.warmdown {
        f = f.min((cfg.t_max as f64 - t) / cfg.t_warmdown as f64);
    }
    f
}

fn expected_decay(cfg: &Ranger21Config, theta: &ParamTensor, v_hat: &ParamTensor) -> Vec<f64> {
    let norm = theta.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; theta.len()];
    }
    let mut coef = cfg.weight_decay;
    if cfg.toggles.norm_loss {
        coef *= 1.0 - 1.0 / norm;
    }
    if cfg.toggles.stable_decay {
        let mean = v_hat.values().iter().sum::<f64>() / v_hat.len() as f64;
        coef /= mean.sqrt().max(1e-8);
    }
    theta.values().iter().map(|x| coef * x).collect()
}

/// Run `cfg` for `T_MAX` steps and check every logged intermediate against
/// its defining formula, recomputed independently.
fn check_isolated(cfg: Ranger21Config, seed: u64) {
    let mut params = init_params(seed);
    let mut state = Ranger21State::new(&params);
    let mut shadow: Vec<MomentState> = params.iter().map(MomentState::zeros_like).collect();
    let mut slow = params.clone();
    let mut r = rng(seed + 1);
    for t in 1..=T_MAX {
        let grads = random_grads(&mut r, &params, 2.0);
        let before = params.clone();
        let mut traces = Vec::new();
        let mut obs = |tr: &TensorTrace<'_>| traces.push(capture(tr));
        let report = ranger21_step(&mut params, &grads, &mut state, t, &cfg, &mut obs).unwrap();
        assert_eq!(traces.len(), params.len());

        let eta = cfg.lr * schedule_factor(&cfg, t);
        assert!((report.eta_t - eta).abs() <= 1e-18, "t={t}");
        for tr in &traces {
            let i = tr.index;
            assert_eq!(tr.theta, before[i]);
            assert_eq!(tr.grad, grads[i]);
            assert_eq!(tr.eta_t, report.eta_t);

            let clipped = if cfg.toggles.agc {
                adaptive_gradient_clip(&tr.grad, &tr.theta, &cfg.clip).unwrap()
            } else {
                tr.grad.clone()
            };
            assert_eq!(tr.clipped, clipped);

            let centralized = if cfg.toggles.centralization {
                gradient_centralize(&tr.clipped)
            } else {
                tr.clipped.clone()
            };
            assert_eq!(tr.centralized, centralized);

            let upd = if cfg.toggles.pnm {
                pnm_update(&mut shadow[i], &tr.centralized, t, &cfg.moments).unwrap()
            } else {
                adam_update(&mut shadow[i], &tr.centralized, t, &cfg.moments).unwrap()
            };
            assert_eq!(tr.u, upd.u);
            assert_eq!(tr.v_hat, upd.v_hat);

            let d = expected_decay(&cfg, &tr.theta, &tr.v_hat);
            assert!(max_rel_err(tr.decay.values(), &d) < 1e-14, "t={t}");

            for (((th, u), d), next) in tr
                .theta
                .values()
                .iter()
                .zip(tr.u.values())
                .zip(tr.decay.values())
                .zip(tr.theta_next.values())
            {
                assert_eq!(*next, th - tr.eta_t * u - tr.eta_t * d);
            }
        }

        let synced = cfg.toggles.lookahead && t % cfg.k_lookahead == 0;
        assert_eq!(report.lookahead_synced, synced);
        for (i, tr) in traces.iter().enumerate() {
            if synced {
                let b = cfg.beta_lookahead;
                let mixed: Vec<f64> = slow[i]
                    .values()
                    .iter()
                    .zip(tr.theta_next.values())
                    .map(|(l, th)| b * l + (1.0 - b) * th)
                    .collect();
                slow[i] = slow[i].with_values(mixed).unwrap();
                assert_eq!(params[i], slow[i]);
            } else {
                assert_eq!(params[i], tr.theta_next);
            }
        }
    }
}

fn with_only(set: impl Fn(&mut Toggles)) -> Ranger21Config {
    let mut cfg = Ranger21Config::new(1e-2, T_MAX);
    cfg.toggles = Toggles::ALL_OFF;
    set(&mut cfg.toggles);
    cfg
}

#[test]
fn each_component_in_isolation() {
    type Case = (&'static str, fn(&mut Toggles));
    let cases: [Case; 8] = [
        ("agc", |t| t.agc = true),
        ("centralization", |t| t.centralization = true),
        ("pnm", |t| t.pnm = true),
        ("norm_loss", |t| t.norm_loss = true),
        ("stable_decay", |t| t.stable_decay = true),
        ("warmup", |t| t.warmup = true),
        ("warmdown", |t| t.warmdown = true),
        ("lookahead", |t| t.lookahead = true),
    ];
    for (seed, (name, set)) in cases.iter().enumerate() {
        eprintln!("{name}");
        check_isolated(with_only(set), seed as u64);
    }
}

#[test]
fn full_preset_matches_formulas() {
    for seed in 0..3 {
        check_isolated(Ranger21Config::new(1e-2, T_MAX), 50 + seed);
    }
}

#[test]
fn lookahead_off_ignores_k_and_beta() {
    let run = |k: u64, beta: f64| {
        let mut cfg = Ranger21Config::new(1e-2, 60);
        cfg.toggles.lookahead = false;
        cfg.k_lookahead = k;
        cfg.beta_lookahead = beta;
        let mut params = init_params(3);
        let mut state = Ranger21State::new(&params);
        let mut r = rng(4);
        for t in 1..=60 {
            let g = random_grads(&mut r, &params, 1.0);
            ranger21_step(&mut params, &g, &mut state, t, &cfg, &mut ()).unwrap();
        }
        params
    };
    let reference = run(5, 0.5);
    for (k, beta) in [(1, 0.0), (2, 0.9), (7, 0.3), (1000, 0.99)] {
        assert_eq!(run(k, beta), reference);
    }
}

#[test]
fn zero_gradient_moves_only_by_decay() {
    let cfg = Ranger21Config::new(1e-2, 100);
    let theta = ParamTensor::new("w", vec![2, 2], vec![0.5, -0.5, 0.5, -0.5]).unwrap();
    assert_eq!(frobenius_norm(&theta), 1.0);
    let mut params = vec![theta.clone()];
    let mut state = Ranger21State::new(&params);
    let zeros = vec![theta.zeros_like()];
    ranger21_step(&mut params, &zeros, &mut state, 1, &cfg, &mut ()).unwrap();
    assert_eq!(params[0], theta);

    let mut cfg = cfg;
    cfg.toggles.norm_loss = false;
    let mut params = vec![theta.clone()];
    let mut state = Ranger21State::new(&params);
    ranger21_step(&mut params, &zeros, &mut state, 1, &cfg, &mut ()).unwrap();
    let shrink = params[0].values()[0] / theta.values()[0];
    assert!(shrink < 1.0);
    for (a, b) in params[0].values().iter().zip(theta.values()) {
        assert!(rel_err(a / b, shrink) < 1e-15);
    }
}

#[test]
fn checkpoint_resume_is_bit_identical() {
    for preset in [
        Preset::Ranger21(Ranger21Config::new(1e-2, 50)),
        Preset::AdamW(AdamWConfig::default()),
    ] {
        let mut r = rng(9);
        let grads: Vec<Vec<ParamTensor>> = (0..50)
            .map(|_| random_grads(&mut r, &init_params(1), 1.0))
            .collect();
        let mut straight = Optimizer::new(preset, init_params(1)).unwrap();
        for g in &grads {
            straight.step(g).unwrap();
        }

        let mut first = Optimizer::new(preset, init_params(1)).unwrap();
        for g in &grads[..23] {
            first.step(g).unwrap();
        }
        let mut buf = Vec::new();
        first.save_checkpoint(&mut buf).unwrap();
        drop(first);
        let mut resumed = Optimizer::load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(resumed.step_count(), 23);
        for g in &grads[23..] {
            resumed.step(g).unwrap();
        }
        assert_eq!(resumed.params(), straight.params());
        for (a, b) in resumed.params().iter().zip(straight.params()) {
            let bits = |p: &ParamTensor| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let opt = Optimizer::new(
        Preset::Ranger21(Ranger21Config::new(1e-2, 50)),
        init_params(1),
    )
    .unwrap();
    let mut buf = Vec::new();
    opt.save_checkpoint(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(Optimizer::load_checkpoint(&text.as_bytes()[..text.len() / 2]).is_err());
    let bumped = text.replacen("\"version\":1", "\"version\":99", 1);
    assert_ne!(bumped, text);
    let err = Optimizer::load_checkpoint(bumped.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn state_stays_finite_under_bounded_gradients(
        seed in any::<u64>(),
        steps in 1u64..80,
        toggles in prop::array::uniform8(any::<bool>()),
    ) {
        let mut cfg = Ranger21Config::new(1e-2, 80);
        let [agc, centralization, pnm, norm_loss, stable_decay, warmup, warmdown, lookahead] = toggles;
        cfg.toggles = Toggles { agc, centralization, pnm, norm_loss, stable_decay, warmup, warmdown, lookahead };
        let mut params = init_params(seed);
        let mut state = Ranger21State::new(&params);
        let mut r = rng(seed);
        for t in 1..=steps {
            let g = random_grads(&mut r, &params, 10.0);
            ranger21_step(&mut params, &g, &mut state, t, &cfg, &mut ()).unwrap();
            for m in &state.moments {
                for buf in [m.m_prev(), m.m_prev2(), m.v(), m.v_max()] {
                    prop_assert!(buf.iter().all(|x| x.is_finite()));
                }
                prop_assert!(m.v().iter().all(|v| *v >= 0.0));
                if pnm {
                    prop_assert!(m.v().iter().zip(m.v_max()).all(|(v, vm)| vm >= v));
                }
            }
            for p in params.iter().chain(state.lookahead.slow_weights()) {
                prop_assert!(p.values().iter().all(|x| x.is_finite()));
            }
        }
    }
}
