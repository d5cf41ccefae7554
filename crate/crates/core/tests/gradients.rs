//! Finite-difference gradient checks for every differentiable kernel op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recfollow::nn::gradcheck::{check_input, check_params, DEFAULT_EPS};
use recfollow::nn::{softmax_xent, Attention, BiRnn, Dense, DropoutMask, Gru, Lstm, LstmState, Mode, Parameters};

const TOL: f64 = 1e-4;
const SEEDS: u64 = 10;

fn vecr(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn seqr(r: &mut ChaCha8Rng, t: usize, n: usize) -> Vec<Vec<f64>> {
    (0..t).map(|_| vecr(r, n)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn dense_gradients() {
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (i, o) = (r.gen_range(1..6), r.gen_range(1..6));
        let mut layer = Dense::<f64>::new(i, o, &mut r);
        let x = vecr(&mut r, i);
        let c = vecr(&mut r, o);
        let rep = check_params(
            &mut layer,
            |m| {
                let y = m.forward(&x).unwrap();
                m.backward(&x, &c);
                dot(&y, &c)
            },
            DEFAULT_EPS,
            None,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");
        let dx = layer.clone().backward(&x, &c);
        let rep = check_input(&dx, |xp| dot(&layer.forward(xp).unwrap(), &c), &x, DEFAULT_EPS);
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");
    }
}

#[test]
fn gru_step_gradients() {
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let (d, h) = (r.gen_range(1..5), r.gen_range(1..5));
        let mut gru = Gru::<f64>::new(d, h, &mut r);
        for v in gru.b.value.data_mut() {
            *v = r.gen_range(-0.5..0.5);
        }
        let x = vecr(&mut r, d);
        let hp = vecr(&mut r, h);
        let c = vecr(&mut r, h);
        let rep = check_params(
            &mut gru,
            |m| {
                let (out, cache) = m.step(&x, &hp).unwrap();
                m.step_backward(&cache, &c);
                dot(&out, &c)
            },
            DEFAULT_EPS,
            None,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");

        let (_, cache) = gru.step(&x, &hp).unwrap();
        let (dx, dh) = gru.clone().step_backward(&cache, &c);
        let rep = check_input(&dx, |xp| dot(&gru.step(xp, &hp).unwrap().0, &c), &x, DEFAULT_EPS);
        assert!(rep.max_rel_error < TOL, "seed {seed} dx: {rep:?}");
        let rep = check_input(&dh, |hq| dot(&gru.step(&x, hq).unwrap().0, &c), &hp, DEFAULT_EPS);
        assert!(rep.max_rel_error < TOL, "seed {seed} dh: {rep:?}");
    }
}

#[test]
fn lstm_step_gradients() {
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(200 + seed);
        let (d, h) = (r.gen_range(1..5), r.gen_range(1..5));
        let mut lstm = Lstm::<f64>::new(d, h, &mut r);
        for v in lstm.b.value.data_mut() {
            *v = r.gen_range(-0.5..0.5);
        }
        let x = vecr(&mut r, d);
        let prev = LstmState { h: vecr(&mut r, h), c: vecr(&mut r, h) };
        let ch = vecr(&mut r, h);
        let cc = vecr(&mut r, h);
        let grad = LstmState { h: ch.clone(), c: cc.clone() };
        let objective = |s: &LstmState<f64>| dot(&s.h, &ch) + dot(&s.c, &cc);
        let rep = check_params(
            &mut lstm,
            |m| {
                let (s, cache) = m.step(&x, &prev).unwrap();
                m.step_backward(&cache, &grad);
                objective(&s)
            },
            DEFAULT_EPS,
            None,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");

        let (_, cache) = lstm.step(&x, &prev).unwrap();
        let (dx, dprev) = lstm.clone().step_backward(&cache, &grad);
        let rep = check_input(&dx, |xp| objective(&lstm.step(xp, &prev).unwrap().0), &x, DEFAULT_EPS);
        assert!(rep.max_rel_error < TOL, "seed {seed} dx: {rep:?}");
        let rep = check_input(
            &dprev.h,
            |hq| {
                let p = LstmState { h: hq.to_vec(), c: prev.c.clone() };
                objective(&lstm.step(&x, &p).unwrap().0)
            },
            &prev.h,
            DEFAULT_EPS,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed} dh: {rep:?}");
        let rep = check_input(
            &dprev.c,
            |cq| {
                let p = LstmState { h: prev.h.clone(), c: cq.to_vec() };
                objective(&lstm.step(&x, &p).unwrap().0)
            },
            &prev.c,
            DEFAULT_EPS,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed} dc: {rep:?}");
    }
}

fn seq_objective(out: &[Vec<f64>], proj: &[Vec<f64>]) -> f64 {
    out.iter().zip(proj).map(|(o, p)| dot(o, p)).sum()
}

fn flatten(xs: &[Vec<f64>]) -> Vec<f64> {
    xs.iter().flatten().copied().collect()
}

fn unflatten(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width).map(|c| c.to_vec()).collect()
}

#[test]
fn bidi_gru_gradients() {
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(300 + seed);
        let (t, d, h) = (r.gen_range(1..5), r.gen_range(1..4), r.gen_range(1..4));
        let mut bi = BiRnn::new(Gru::<f64>::new(d, h, &mut r), Gru::new(d, h, &mut r));
        let xs = seqr(&mut r, t, d);
        let proj = seqr(&mut r, t, 2 * h);
        let rep = check_params(
            &mut bi,
            |m| {
                let (out, cache) = m.forward(&xs).unwrap();
                m.backward(&cache, &proj);
                seq_objective(&out, &proj)
            },
            DEFAULT_EPS,
            None,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");
        let (_, cache) = bi.forward(&xs).unwrap();
        let dxs = bi.clone().backward(&cache, &proj);
        let rep = check_input(
            &flatten(&dxs),
            |flat| seq_objective(&bi.forward(&unflatten(flat, d)).unwrap().0, &proj),
            &flatten(&xs),
            DEFAULT_EPS,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed} dx: {rep:?}");
    }
}

#[test]
fn bidi_lstm_gradients() {
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(400 + seed);
        let (t, d, h) = (r.gen_range(1..5), r.gen_range(1..4), r.gen_range(1..4));
        let mut bi = BiRnn::new(Lstm::<f64>::new(d, h, &mut r), Lstm::new(d, h, &mut r));
        let xs = seqr(&mut r, t, d);
        let proj = seqr(&mut r, t, 2 * h);
        let rep = check_params(
            &mut bi,
            |m| {
                let (out, cache) = m.forward(&xs).unwrap();
                m.backward(&cache, &proj);
                seq_objective(&out, &proj)
            },
            DEFAULT_EPS,
            None,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");
        let (_, cache) = bi.forward(&xs).unwrap();
        let dxs = bi.clone().backward(&cache, &proj);
        let rep = check_input(
            &flatten(&dxs),
            |flat| seq_objective(&bi.forward(&unflatten(flat, d)).unwrap().0, &proj),
            &flatten(&xs),
            DEFAULT_EPS,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed} dx: {rep:?}");
    }
}

#[test]
fn attention_gradients() {
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(500 + seed);
        let (t, d, a) = (r.gen_range(1..6), r.gen_range(1..5), r.gen_range(1..5));
        let mut attn = Attention::<f64>::new(d, a, &mut r);
        for v in attn.b.value.data_mut() {
            *v = r.gen_range(-0.5..0.5);
        }
        let hs = seqr(&mut r, t, d);
        let c = vecr(&mut r, d);
        let rep = check_params(
            &mut attn,
            |m| {
                let (pooled, _, cache) = m.forward(&hs).unwrap();
                m.backward(&cache, &c);
                dot(&pooled, &c)
            },
            DEFAULT_EPS,
            None,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");
        let (_, _, cache) = attn.forward(&hs).unwrap();
        let dhs = attn.clone().backward(&cache, &c);
        let rep = check_input(
            &flatten(&dhs),
            |flat| dot(&attn.forward(&unflatten(flat, d)).unwrap().0, &c),
            &flatten(&hs),
            DEFAULT_EPS,
        );
        assert!(rep.max_rel_error < TOL, "seed {seed} dH: {rep:?}");
    }
}

#[test]
fn softmax_xent_gradients() {
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(600 + seed);
        let k = r.gen_range(2..14);
        let logits: Vec<f64> = (0..k).map(|_| r.gen_range(-4.0..4.0)).collect();
        let target = r.gen_range(0..k);
        let weights: Vec<f64> = (0..k).map(|_| r.gen_range(0.5..3.0)).collect();
        for w in [None, Some(weights.as_slice())] {
            let (_, g) = softmax_xent(&logits, target, w);
            let rep = check_input(&g, |l| softmax_xent(l, target, w).0, &logits, DEFAULT_EPS);
            assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");
        }
    }
}

#[test]
fn dropout_gradients() {
    for seed in 0..SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(700 + seed);
        let n = r.gen_range(1..20);
        let mask = DropoutMask::<f64>::sample(n, 0.4, Mode::Train, &mut r).unwrap();
        let x = vecr(&mut r, n);
        let c = vecr(&mut r, n);
        let g = mask.backward(&c);
        let rep = check_input(&g, |xp| dot(&mask.apply(xp), &c), &x, DEFAULT_EPS);
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");
    }
}

#[test]
fn param_names_are_dotted_paths() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let bi = BiRnn::new(Gru::<f64>::new(2, 2, &mut r), Gru::new(2, 2, &mut r));
    let names: Vec<String> = bi.param_set().tensors.keys().cloned().collect();
    assert_eq!(names, ["bwd.b", "bwd.u", "bwd.w", "fwd.b", "fwd.u", "fwd.w"]);
}
