//! Central finite-difference checks of reverse-mode gradients.

use metaner::autodiff::{GradientMap, ParamStore, Tape, Tensor, Var};
use metaner::config::{Preset, RunConfig};
use metaner::objectives::record_example_loss;
use metaner::pipeline::Workspace;
use metaner::synth::{SynthBench, SynthConfig};
use metaner::tagger::{Draw, Learner, Objective, Reduction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Below this magnitude both gradients count as zero and are compared absolutely.
const ZERO: f64 = 1e-6;

type Build = Box<dyn for<'a> Fn(&mut Tape<'a>, &'a ParamStore) -> Var>;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < ZERO {
        (a - n).abs() / ZERO
    } else {
        (a - n).abs() / scale
    }
}

/// Largest relative error over every trainable entry of `store`.
fn check(store: &ParamStore, f: &dyn Fn(&ParamStore) -> (f64, GradientMap)) -> f64 {
    let (_, grads) = f(store);
    let mut worst: f64 = 0.0;
    let names: Vec<String> = store.trainable_names().map(str::to_string).collect();
    for name in names {
        let len = store.get(&name).unwrap().len();
        for i in 0..len {
            let mut plus = store.clone();
            plus.get_mut(&name).unwrap().data_mut()[i] += STEP;
            let mut minus = store.clone();
            minus.get_mut(&name).unwrap().data_mut()[i] -= STEP;
            let numeric = (f(&plus).0 - f(&minus).0) / (2.0 * STEP);
            let analytic = grads.get(&name).unwrap().data()[i];
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    worst
}

fn tape_fn(build: &Build) -> impl Fn(&ParamStore) -> (f64, GradientMap) + '_ {
    move |s: &ParamStore| {
        let mut tape = Tape::new();
        let out = build(&mut tape, s);
        let value = tape.value(out).item();
        (value, tape.backward(out).unwrap())
    }
}

/// Contracts any output to a scalar with fixed random weights, so every
/// output element carries a distinct upstream gradient.
fn contract<'a>(tape: &mut Tape<'a>, out: Var, weights: &Tensor) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, weights.data()[..n].to_vec());
    let w = tape.constant(w);
    let prod = tape.mul(out, w);
    tape.sum(prod)
}

fn store(entries: Vec<(&str, Tensor)>) -> ParamStore {
    let mut s = ParamStore::new();
    for (n, t) in entries {
        s.insert(n, t);
    }
    s
}

/// One randomized case of `op`: parameters plus the graph to differentiate.
fn op_case(op: &str, rng: &mut ChaCha8Rng) -> (ParamStore, Build) {
    let r = rng.random_range(1..=4);
    let c = rng.random_range(2..=5);
    let k = rng.random_range(1..=4);
    let weights = rand_tensor(rng, &[64], -1.0, 1.0);
    let m = |rng: &mut ChaCha8Rng, rows, cols| rand_tensor(rng, &[rows, cols], -1.5, 1.5);
    let (params, build): (ParamStore, Box<dyn for<'a> Fn(&mut Tape<'a>, &'a ParamStore) -> Var>) = match op {
        "matmul" => (
            store(vec![("a", m(rng, r, k)), ("b", m(rng, k, c))]),
            Box::new(|t, s| {
                let (a, b) = (t.param(s, "a").unwrap(), t.param(s, "b").unwrap());
                t.matmul(a, b)
            }),
        ),
        "matmul_nt" => (
            store(vec![("a", m(rng, r, k)), ("b", m(rng, c, k))]),
            Box::new(|t, s| {
                let (a, b) = (t.param(s, "a").unwrap(), t.param(s, "b").unwrap());
                t.matmul_nt(a, b)
            }),
        ),
        "add" => (
            store(vec![("a", m(rng, r, c)), ("b", m(rng, r, c))]),
            Box::new(|t, s| {
                let (a, b) = (t.param(s, "a").unwrap(), t.param(s, "b").unwrap());
                t.add(a, b)
            }),
        ),
        "add_row" => (
            store(vec![("a", m(rng, r, c)), ("b", rand_tensor(rng, &[c], -1.0, 1.0))]),
            Box::new(|t, s| {
                let (a, b) = (t.param(s, "a").unwrap(), t.param(s, "b").unwrap());
                t.add_row(a, b)
            }),
        ),
        "mul" => (
            store(vec![("a", m(rng, r, c)), ("b", m(rng, r, c))]),
            Box::new(|t, s| {
                let (a, b) = (t.param(s, "a").unwrap(), t.param(s, "b").unwrap());
                t.mul(a, b)
            }),
        ),
        "scale" => {
            let f = rng.random_range(-3.0..3.0);
            (
                store(vec![("a", m(rng, r, c))]),
                Box::new(move |t, s| {
                    let a = t.param(s, "a").unwrap();
                    t.scale(a, f)
                }),
            )
        }
        "gelu" => (
            store(vec![("a", rand_tensor(rng, &[r, c], -3.0, 3.0))]),
            Box::new(|t, s| {
                let a = t.param(s, "a").unwrap();
                t.gelu(a)
            }),
        ),
        "softmax" => (
            store(vec![("a", m(rng, r, c))]),
            Box::new(|t, s| {
                let a = t.param(s, "a").unwrap();
                t.softmax(a)
            }),
        ),
        "log" => (
            store(vec![("a", rand_tensor(rng, &[r, c], 0.2, 3.0))]),
            Box::new(|t, s| {
                let a = t.param(s, "a").unwrap();
                t.log(a)
            }),
        ),
        "layer_norm" => (
            store(vec![
                ("x", m(rng, r, c)),
                ("g", rand_tensor(rng, &[c], 0.5, 1.5)),
                ("b", rand_tensor(rng, &[c], -0.5, 0.5)),
            ]),
            Box::new(|t, s| {
                let (x, g, b) = (
                    t.param(s, "x").unwrap(),
                    t.param(s, "g").unwrap(),
                    t.param(s, "b").unwrap(),
                );
                t.layer_norm(x, g, b)
            }),
        ),
        "gather" => {
            let rows = r + 1;
            let ids: Vec<usize> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(0..rows)).collect();
            (
                store(vec![("a", m(rng, rows, c))]),
                Box::new(move |t, s| {
                    let a = t.param(s, "a").unwrap();
                    t.gather(a, &ids)
                }),
            )
        }
        "slice_cols" => {
            let start = rng.random_range(0..c - 1);
            let width = rng.random_range(1..=c - start);
            (
                store(vec![("a", m(rng, r, c))]),
                Box::new(move |t, s| {
                    let a = t.param(s, "a").unwrap();
                    t.slice_cols(a, start, width)
                }),
            )
        }
        "concat_cols" => (
            store(vec![("a", m(rng, r, c)), ("b", m(rng, r, k))]),
            Box::new(|t, s| {
                let (a, b) = (t.param(s, "a").unwrap(), t.param(s, "b").unwrap());
                t.concat_cols(&[a, b, a])
            }),
        ),
        "concat" => (
            store(vec![
                ("a", rand_tensor(rng, &[c], -1.0, 1.0)),
                ("b", rand_tensor(rng, &[k], -1.0, 1.0)),
            ]),
            Box::new(|t, s| {
                let (a, b) = (t.param(s, "a").unwrap(), t.param(s, "b").unwrap());
                t.concat(&[b, a])
            }),
        ),
        "pick" => {
            let at: Vec<(usize, usize)> = (0..rng.random_range(1..=6))
                .map(|_| (rng.random_range(0..r), rng.random_range(0..c)))
                .collect();
            (
                store(vec![("a", m(rng, r, c))]),
                Box::new(move |t, s| {
                    let a = t.param(s, "a").unwrap();
                    t.pick(a, &at)
                }),
            )
        }
        "sum" => (
            store(vec![("a", m(rng, r, c))]),
            Box::new(|t, s| {
                let a = t.param(s, "a").unwrap();
                let sq = t.mul(a, a);
                t.sum(sq)
            }),
        ),
        "mean" => (
            store(vec![("a", m(rng, r, c))]),
            Box::new(|t, s| {
                let a = t.param(s, "a").unwrap();
                let sq = t.mul(a, a);
                t.mean(sq)
            }),
        ),
        "max" => (
            store(vec![("a", m(rng, r, c))]),
            Box::new(|t, s| {
                let a = t.param(s, "a").unwrap();
                let sq = t.mul(a, a);
                t.max(sq)
            }),
        ),
        other => panic!("unknown op {other}"),
    };
    let build: Build = Box::new(move |t, s| {
        let out = build(t, s);
        if t.value(out).is_scalar() {
            out
        } else {
            contract(t, out, &weights)
        }
    });
    (params, build)
}

pub const OPS: &[&str] = &[
    "matmul",
    "matmul_nt",
    "add",
    "add_row",
    "mul",
    "scale",
    "gelu",
    "softmax",
    "log",
    "layer_norm",
    "gather",
    "slice_cols",
    "concat_cols",
    "concat",
    "pick",
    "sum",
    "mean",
    "max",
];
pub const CASES_PER_OP: u64 = 6;


/// Number of cases checked and the largest relative error seen.
#[derive(Clone, Copy, Debug, Default)]
pub struct Summary {
    pub cases: usize,
    pub worst: f64,
}

impl Summary {
    fn add(&mut self, err: f64) {
        self.cases += 1;
        self.worst = self.worst.max(err);
    }

    pub fn merge(self, other: Summary) -> Summary {
        Summary {
            cases: self.cases + other.cases,
            worst: self.worst.max(other.worst),
        }
    }
}

/// Every tape operation on `CASES_PER_OP` randomized shapes and values.
pub fn operation_suite() -> Summary {
    let mut s = Summary::default();
    for (o, op) in OPS.iter().enumerate() {
        for case in 0..CASES_PER_OP {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * o as u64 + case);
            let (params, build) = op_case(op, &mut rng);
            let err = check(&params, &tape_fn(&build));
            assert!(err < REL_TOL, "{op} case {case}: relative error {err:e}");
            s.add(err);
        }
    }
    s
}

/// Per-token gold probabilities from softmaxed random logits.
fn loss_case(seed: u64, lambda: f64) -> (ParamStore, Build) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = rng.random_range(1..=6);
    let labels = rng.random_range(2..=5);
    let at: Vec<(usize, usize)> = (0..tokens).map(|i| (i, rng.random_range(0..labels))).collect();
    let params = store(vec![("logits", rand_tensor(&mut rng, &[tokens, labels], -2.0, 2.0))]);
    let build: Build = Box::new(move |t, s| {
        let z = t.param(s, "logits").unwrap();
        let p = t.softmax(z);
        let gold = t.pick(p, &at);
        record_example_loss(t, gold, lambda)
    });
    (params, build)
}

/// Mean and max-augmented losses over softmaxed random logits.
pub fn loss_suite() -> Summary {
    let mut s = Summary::default();
    for seed in 0..20 {
        for lambda in [0.0, 2.0] {
            let (params, build) = loss_case(seed, lambda);
            let err = check(&params, &tape_fn(&build));
            assert!(err < REL_TOL, "seed {seed} lambda {lambda}: relative error {err:e}");
            s.add(err);
        }
    }
    s
}

/// The full tagger loss on a tiny encoder, across objective settings and
/// multi-window sentences.
pub fn tagger_suite() -> Summary {
    let mut s = Summary::default();
    let bench = SynthBench::generate(&SynthConfig {
        source_size: 12,
        target_test_size: 1,
        target_train_size: 0,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut cfg = RunConfig::preset(Preset::Benchmark);
    cfg.hidden_size = 4;
    cfg.attention_heads = 2;
    cfg.feedforward_size = 6;
    cfg.vocab_size = 60;
    cfg.max_len = 12;
    cfg.context_len = 4;
    cfg.max_positions = 12;
    cfg.freeze = String::new();
    let ws = Workspace::prepare(&cfg, &bench.source).unwrap();
    let params = ws.init_params(3).unwrap();
    let mut params = params;
    // Larger weights than the 0.02 init give gradients well above the noise floor.
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in &names {
        for v in params.get_mut(n).unwrap().data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let batch: Vec<_> = ws.source.iter().take(2).collect();
    assert!(batch.iter().any(|s| s.windows.len() > 1), "exercise sliding windows");
    for (lambda, mask, dropout, reduction) in [
        (0.0, 0.0, false, Reduction::MeanExamples),
        (2.0, 0.0, false, Reduction::SumExamples),
        (2.0, 0.5, true, Reduction::SumExamples),
        (0.0, 0.0, true, Reduction::PooledTokens),
    ] {
        let objective = Objective {
            lambda,
            mask_probability: mask,
            dropout,
            reduction,
        };
        let draw = Draw { seed: 1, epoch: 0, stream: 2 };
        let f = |s: &ParamStore| ws.tagger.loss_and_grad(s, &batch, &objective, draw).unwrap();
        let err = check(&params, &f);
        assert!(err < REL_TOL, "{objective:?}: relative error {err:e}");
        s.add(err);
    }
    s
}
