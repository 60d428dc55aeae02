//! Finite-difference checks of full model losses on seeded micro-instances.

use vagueness::corpus::{CueLexicon, VaguenessClass};
use vagueness::discriminator::{loss_discriminator, loss_generator, DiscConfig, DiscVariant, Discriminator, GanMode};
use vagueness::embeddings::Vocabulary;
use vagueness::generator::{GeneratorConfig, LmGenerator};
use vagueness::nn::ModelError;
use vagueness::tensor::{
    grad_check, sample_gumbel, softmax_rows, xavier_init, Graph, NodeId, ParamStore, Rng, Tensor, TensorError,
};
use vagueness::word_tagger::{TaggerConfig, WordModel, WordModelKind};

use super::ops::{random, EPS};

fn vocab() -> Vocabulary {
    let words = "we may share some data with partners as needed from time to time";
    Vocabulary::build(&[words.split(' ').collect::<Vec<_>>()], 100).unwrap()
}

fn sentences(rng: &mut Rng, v: usize, batch: usize, max_len: usize) -> Vec<Vec<usize>> {
    (0..batch)
        .map(|_| (0..1 + rng.below(max_len)).map(|_| 3 + rng.below(v - 3)).collect())
        .collect()
}

fn classes(rng: &mut Rng, n: usize) -> Vec<VaguenessClass> {
    (0..n).map(|_| VaguenessClass::ALL[rng.below(4)]).collect()
}

fn tensor_err(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => TensorError::BadShape(other.to_string()),
    }
}

/// Per-token weighted BCE of a word classifier.
pub fn tagger(kind: WordModelKind, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let cfg = TaggerConfig {
        dim: 3,
        hidden: 3,
        seed,
        pos_weight: 0.5 + rng.uniform(),
        ..TaggerConfig::default()
    };
    let model = WordModel::new(kind, vocab(), cfg).unwrap();
    let seqs = sentences(&mut rng, model.vocab.len(), 2, 5);
    let labels: Vec<Vec<u8>> = seqs
        .iter()
        .map(|s| s.iter().map(|_| rng.below(2) as u8).collect())
        .collect();
    let mut store = model.params.clone();
    grad_check(&mut store, EPS, |g, s| model.loss_with(g, s, &seqs, &labels))
        .unwrap()
        .max_relative_error
}

fn small_disc(variant: DiscVariant, seed: u64, rng: &mut Rng) -> Discriminator {
    let mut d = Discriminator::new(
        vocab(),
        DiscConfig {
            variant,
            dim: 3,
            hidden: 3,
            filters: 2,
            widths: vec![2, 3],
            seed,
        },
    )
    .unwrap();
    for p in [d.class_head.w, d.source_head.w] {
        let shape = d.params.value(p).shape().to_vec();
        *d.params.value_mut(p) = xavier_init(&shape, rng).unwrap();
    }
    d
}

/// Discriminator plus generator losses over real and soft fake inputs, both
/// heads, differentiated with respect to every discriminator parameter.
pub fn discriminator(variant: DiscVariant, mode: GanMode, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let d = small_disc(variant, seed, &mut rng);
    let v = d.vocab.len();
    let real = sentences(&mut rng, v, 2, 4);
    let lengths: Vec<usize> = (0..2).map(|_| 1 + rng.below(4)).collect();
    let rows: usize = lengths.iter().sum();
    let soft = softmax_rows(&random(&[rows, v], -2.0, 2.0, &mut rng), 1.0);
    let rc = classes(&mut rng, 2);
    let fc = classes(&mut rng, 2);
    let mut store = d.params.clone();
    grad_check(&mut store, EPS, |g, s| {
        let ri = d.real_input(g, s, &real)?;
        let rl = d.forward(g, s, &ri).map_err(tensor_err)?;
        let sr = g.input(soft.clone());
        let fi = d.soft_input(g, s, sr, lengths.clone())?;
        let fl = d.forward(g, s, &fi).map_err(tensor_err)?;
        let dl = loss_discriminator(g, &rl, &rc, &fl, &fc, mode).map_err(tensor_err)?;
        let gl = loss_generator(g, &fl, &fc, mode).map_err(tensor_err)?;
        g.add(dl.total, gl.total)
    })
    .unwrap()
    .max_relative_error
}

/// Generator loss through the Gumbel-softmax soft path and a fixed
/// discriminator, differentiated with respect to every generator parameter
/// (including the vagueness bias, scaled by the class coefficient). Hard
/// tokens feed the recurrence as constants read from the unperturbed
/// embeddings.
pub fn generator_soft_path(variant: DiscVariant, seed: u64) -> (f64, bool) {
    let mut rng = Rng::new(seed);
    let d = small_disc(variant, seed, &mut rng);
    let lexicon = CueLexicon::from_terms(&["may", "some", "as", "needed"]).unwrap();
    let gen = LmGenerator::new(
        d.vocab.clone(),
        GeneratorConfig {
            dim: 3,
            hidden: 3,
            max_len: 3,
            seed,
            ..GeneratorConfig::default()
        },
        Some(&lexicon),
    )
    .unwrap();
    let batch = 2;
    let steps = 1 + rng.below(3);
    let cls = classes(&mut rng, batch);
    let lambdas: Vec<f64> = cls.iter().map(|&c| gen.bias.lambda_for(c)).collect();
    let zs: Vec<Tensor> = (0..steps)
        .map(|_| sample_gumbel(&[batch, gen.vocab.len()], &mut rng))
        .collect();
    let tau = 0.5 + rng.uniform();
    let mode = if seed.is_multiple_of(2) {
        GanMode::Full
    } else {
        GanMode::VaguenessOnly
    };
    let loss = |g: &mut Graph, s: &ParamStore| -> Result<NodeId, TensorError> {
        let mut state = gen.start(g, s, batch)?;
        let mut soft = Vec::with_capacity(steps);
        for z in &zs {
            let (_, p, hard) = gen.score_step(g, s, state, &lambdas, z.clone(), tau)?;
            soft.push(p);
            state = gen.advance(g, &gen.params, state, &hard)?;
        }
        let mut rows = Vec::with_capacity(batch * steps);
        for b in 0..batch {
            for &p in &soft {
                rows.push(g.slice_rows(p, b, b + 1)?);
            }
        }
        let rows = g.concat(&rows, 0)?;
        let fi = d.soft_input(g, &d.params, rows, vec![steps; batch])?;
        let fl = d.forward(g, &d.params, &fi).map_err(tensor_err)?;
        Ok(loss_generator(g, &fl, &cls, mode).map_err(tensor_err)?.total)
    };
    let mut store = gen.params.clone();
    let err = grad_check(&mut store, EPS, loss).unwrap().max_relative_error;
    let mut g = Graph::new();
    let mut store = gen.params.clone();
    let l = loss(&mut g, &store).unwrap();
    g.backward(l, &mut [&mut store]).unwrap();
    let reaches_bias = store.grad(gen.bias.v).data().iter().any(|&x| x != 0.0);
    (err, reaches_bias)
}
