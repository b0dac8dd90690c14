//! Acceptance suite. Run with `--nocapture` to see one line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tagrank::cca::{fit_cca, CcaConfig, CcaModel, Modality, TextFeatureMode};
use tagrank::corpus::{
    generate_synthetic, parse_bracketed_tree, Dataset, FeatureMatrix, ImageRecord, MatrixRole, ParseTree,
    SentenceRecord, SyntheticConfig, Vocabulary,
};
use tagrank::eval::{ideal_order, ndcg_at_k, run_experiment, DataSource, ExperimentConfig, Task};
use tagrank::features::{
    spectral_residual_saliency, GrayImage, InstanceArchive, InstanceShape, MrfInstance, ObjectVisualFeature,
    VISUAL_DIM,
};
use tagrank::measure::{
    joint_sentence_importance, measure_image_importance, object_importance, parse_importance_json,
    importance_to_json, scene_factor, MatchConfig,
};
use tagrank::corpus::SynonymLexicon;
use tagrank::ssvm::{
    energy, infer, label_loss, loss_augmented_infer, loss_mad, psi, train_ridge, train_ssvm, vocabulary_hash,
    InferenceConfig, Mode, SsvmModel, TrainConfig, WeightLayout, WeightVector,
};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn words(tokens: &[&str]) -> SentenceRecord {
    let leaves = tokens.iter().map(|t| ParseTree::leaf("NN", *t)).collect();
    SentenceRecord::from_tree(ParseTree::node("S", vec![ParseTree::node("NP", leaves)]))
}

fn image(tags: &[&str], scene: Option<&str>, sentences: Vec<SentenceRecord>) -> ImageRecord {
    ImageRecord {
        id: "img".into(),
        width: 10,
        height: 10,
        object_tags: tags.iter().map(|s| s.to_string()).collect(),
        scene_tag: scene.map(str::to_string),
        instances: vec![],
        sentences,
        feature_row: 0,
    }
}

fn criterion_1() -> Outcome {
    let cfg = MatchConfig::default();
    let mut sentences: Vec<SentenceRecord> = (0..4).map(|_| words(&["a", "dog", "on", "a", "bicycle"])).collect();
    sentences.push(words(&["a", "red", "bicycle"]));
    let left = object_importance(&image(&["dog", "bicycle"], None, sentences), &cfg).map_err(|e| e.to_string())?;
    ensure!(left.get("bicycle") == Some(0.6), "left bicycle = {:?}", left.get("bicycle"));
    ensure!(left.get("dog") == Some(0.4), "left dog = {:?}", left.get("dog"));
    let right = image(&["bicycle"], None, (0..5).map(|_| words(&["the", "bicycle"])).collect());
    let right = object_importance(&right, &cfg).map_err(|e| e.to_string())?;
    ensure!(right.get("bicycle") == Some(1.0), "right bicycle = {:?}", right.get("bicycle"));
    Ok(())
}

const BEACH_SUBJECT: &str = "(NP (NP (DT A) (JJ sandy) (NN beach)) (VP (VBN covered) (PP (IN in) \
    (NP (NP (JJ white) (NNS surfboards)) (PP (IN near) (NP (DT the) (NN ocean)))))))";
const BEACH_MODIFIER: &str = "(S (NP (NNS Surfboards)) (VP (VBP sit) (PP (IN on) (NP (NP (DT the) (NN sand)) \
    (PP (IN of) (NP (DT a) (NN beach)))))))";

fn criterion_2() -> Outcome {
    let cfg = MatchConfig::new(SynonymLexicon::from_pairs(&[("surfboards", "surfboard")]), None);
    ensure!(cfg.alpha == 1.0 && cfg.beta == 2.0, "alpha/beta defaults {} {}", cfg.alpha, cfg.beta);
    let s1 = SentenceRecord::from_tree(parse_bracketed_tree(BEACH_SUBJECT).map_err(|e| e.to_string())?);
    let s2 = SentenceRecord::from_tree(parse_bracketed_tree(BEACH_MODIFIER).map_err(|e| e.to_string())?);
    ensure!(scene_factor(&s1.tree, "beach", &cfg) == 2.0, "subject scene factor");
    ensure!(scene_factor(&s2.tree, "beach", &cfg) == 1.0, "modifier scene factor");
    let tol = 1e-12;
    let a = joint_sentence_importance(&s1, &["surfboard"], Some("beach"), &cfg);
    ensure!((a.value("beach") - 2.0 / 3.0).abs() <= tol, "s1 beach {}", a.value("beach"));
    ensure!((a.value("surfboard") - 1.0 / 3.0).abs() <= tol, "s1 surfboard {}", a.value("surfboard"));
    let b = joint_sentence_importance(&s2, &["surfboard"], Some("beach"), &cfg);
    ensure!((b.value("beach") - 0.5).abs() <= tol, "s2 beach {}", b.value("beach"));
    ensure!((b.value("surfboard") - 0.5).abs() <= tol, "s2 surfboard {}", b.value("surfboard"));
    let img = image(&["surfboard"], Some("beach"), vec![s1, s2]);
    let v = measure_image_importance(&img, &cfg).map_err(|e| e.to_string())?;
    ensure!((v.value("beach") - 7.0 / 12.0).abs() <= tol, "image beach {}", v.value("beach"));
    ensure!((v.value("surfboard") - 5.0 / 12.0).abs() <= tol, "image surfboard {}", v.value("surfboard"));
    Ok(())
}

const OBJECT_POOL: &[&str] = &["dog", "cat", "car", "tree", "person", "boat"];
const SCENE_POOL: &[&str] = &["beach", "street", "park"];
const FILLER: &[&str] = &["a", "the", "big", "small", "near", "sits"];

fn random_token(rng: &mut ChaCha8Rng, tags: &[String], scene: Option<&str>) -> String {
    match rng.random_range(0..3) {
        0 if !tags.is_empty() => tags[rng.random_range(0..tags.len())].clone(),
        1 if scene.is_some() => scene.unwrap().to_string(),
        _ => FILLER[rng.random_range(0..FILLER.len())].to_string(),
    }
}

/// Random sentence: a subject phrase, a verb and an optional prepositional phrase.
fn random_sentence(rng: &mut ChaCha8Rng, tags: &[String], scene: Option<&str>) -> SentenceRecord {
    let np = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(1..4);
        let leaves = (0..n).map(|_| ParseTree::leaf("NN", random_token(rng, tags, scene))).collect();
        ParseTree::node("NP", leaves)
    };
    let mut vp = vec![ParseTree::leaf("VBZ", "is")];
    if rng.random_bool(0.6) {
        let head = if rng.random_bool(0.8) { "IN" } else { "RB" };
        vp.push(ParseTree::node("PP", vec![ParseTree::leaf(head, "on"), np(rng)]));
    }
    let subject = np(rng);
    SentenceRecord::from_tree(ParseTree::node("S", vec![subject, ParseTree::node("VP", vp)]))
}

fn criterion_3() -> Outcome {
    let cfg = MatchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut exact_checks = 0;
    for case in 0..1000 {
        let n_tags = rng.random_range(0..=4);
        let mut pool: Vec<&str> = OBJECT_POOL.to_vec();
        for i in 0..n_tags {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        let tags: Vec<String> = pool[..n_tags].iter().map(|s| s.to_string()).collect();
        let scene = rng.random_bool(0.6).then(|| SCENE_POOL[rng.random_range(0..SCENE_POOL.len())]);
        let k = rng.random_range(1..=6);
        let sentences: Vec<SentenceRecord> = (0..k).map(|_| random_sentence(&mut rng, &tags, scene)).collect();
        for s in &sentences {
            let v = joint_sentence_importance(s, &tags, scene, &cfg);
            let mass = v.total();
            ensure!(mass <= 1.0 + 1e-12, "case {case}: sentence mass {mass}");
            ensure!(v.iter().all(|(_, x)| (0.0..=1.0).contains(&x)), "case {case}: value outside [0,1]");
            let c = scene.map_or(0.0, |t| scene_factor(&s.tree, t, &cfg));
            let mentioned = tags.iter().any(|t| v.value(t) > 0.0);
            if c > 0.0 && mentioned {
                exact_checks += 1;
                ensure!((mass - 1.0).abs() <= 1e-12, "case {case}: scene sentence mass {mass}");
            }
        }
        let tag_refs: Vec<&str> = tags.iter().map(String::as_str).collect();
        let img = image(&tag_refs, scene, sentences);
        let v = measure_image_importance(&img, &cfg).map_err(|e| e.to_string())?;
        ensure!(v.total() <= 1.0 + 1e-9, "case {case}: image mass {}", v.total());
        ensure!(v.iter().all(|(_, x)| (0.0..=1.0).contains(&x)), "case {case}: image value outside [0,1]");
        if scene.is_none() {
            let eq1 = object_importance(&img, &cfg).map_err(|e| e.to_string())?;
            ensure!(eq1 == v, "case {case}: scene-free measurement differs from discounted probability");
        }
    }
    ensure!(exact_checks > 100, "only {exact_checks} scene sentences exercised");
    Ok(())
}

fn random_instance(rng: &mut ChaCha8Rng, shape: InstanceShape, n_obj: usize, scene: bool) -> MrfInstance {
    let mut cats: Vec<usize> = (0..shape.n_objects).collect();
    for i in 0..n_obj {
        let j = rng.random_range(i..cats.len());
        cats.swap(i, j);
    }
    let objects = cats[..n_obj]
        .iter()
        .map(|&c| {
            let mut v = [0.0; VISUAL_DIM];
            v.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
            (c, ObjectVisualFeature(v))
        })
        .collect();
    let scene = scene.then(|| {
        (
            rng.random_range(0..shape.n_scenes),
            (0..shape.scene_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    });
    MrfInstance::assemble("r", shape, objects, scene, None).expect("valid random instance")
}

fn random_weights(rng: &mut ChaCha8Rng, layout: WeightLayout) -> WeightVector {
    let values = (0..layout.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    WeightVector::from_values(layout, values).unwrap()
}

const SHAPE: InstanceShape = InstanceShape {
    n_objects: 5,
    n_scenes: 2,
    scene_dim: 3,
};

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..200 {
        let mode = if case % 2 == 0 { Mode::Continuous } else { Mode::Binary };
        let layout = WeightLayout::new(mode, SHAPE);
        let n_obj = rng.random_range(0..=SHAPE.n_objects);
        let scene = n_obj == 0 || rng.random_bool(0.5);
        let inst = random_instance(&mut rng, SHAPE, n_obj, scene);
        let w = random_weights(&mut rng, layout);
        let labels: Vec<u8> = (0..inst.node_count())
            .map(|_| rng.random_range(0..mode.node_levels()) as u8)
            .collect();
        let e = energy(&inst, &labels, &w).map_err(|e| e.to_string())?;
        let p = psi(&inst, &labels, &layout).map_err(|e| e.to_string())?;
        let dot: f64 = w.values.iter().zip(&p).map(|(a, b)| a * b).sum();
        ensure!((dot + e).abs() <= 1e-12, "case {case}: w.psi = {dot}, E = {e}");
    }
    Ok(())
}

/// Minimum of `f` over every labeling, ties to the lexicographically first.
fn enumerate(n: usize, levels: usize, mut f: impl FnMut(&[u8]) -> f64) -> (Vec<u8>, f64) {
    let mut y = vec![0u8; n];
    let mut best = (y.clone(), f64::INFINITY);
    loop {
        let v = f(&y);
        if v < best.1 {
            best = (y.clone(), v);
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            y[i] += 1;
            if (y[i] as usize) < levels {
                break;
            }
            y[i] = 0;
        }
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let exact = InferenceConfig::default();
    let icm = InferenceConfig { cap: 0, seed: 9 };
    for case in 0..500 {
        let mode = if case % 3 == 0 { Mode::Binary } else { Mode::Continuous };
        let layout = WeightLayout::new(mode, SHAPE);
        let with_scene = rng.random_bool(0.5);
        let max_obj = if with_scene { 3 } else { 4 };
        let n_obj = rng.random_range(usize::from(!with_scene)..=max_obj);
        let inst = random_instance(&mut rng, SHAPE, n_obj, with_scene);
        let n = inst.node_count();
        let w = random_weights(&mut rng, layout);
        let levels = mode.node_levels();
        let y_true: Vec<u8> = (0..n).map(|_| rng.random_range(0..levels) as u8).collect();

        let (_, best) = enumerate(n, levels, |y| energy(&inst, y, &w).unwrap());
        let got = infer(&inst, &w, &exact).map_err(|e| e.to_string())?;
        let got_e = energy(&inst, &got.labels, &w).map_err(|e| e.to_string())?;
        ensure!(got.exact, "case {case}: inference not exact for {n} nodes");
        ensure!((got_e - best).abs() <= 1e-9, "case {case}: infer {got_e} vs enumeration {best}");
        ensure!((got.objective - got_e).abs() <= 1e-9, "case {case}: reported objective {}", got.objective);

        let (_, best_aug) = enumerate(n, levels, |y| energy(&inst, y, &w).unwrap() - label_loss(&y_true, y, mode));
        let aug = loss_augmented_infer(&inst, &y_true, &w, &exact).map_err(|e| e.to_string())?;
        let aug_v = energy(&inst, &aug.labels, &w).unwrap() - label_loss(&y_true, &aug.labels, mode);
        ensure!((aug_v - best_aug).abs() <= 1e-9, "case {case}: loss-augmented {aug_v} vs {best_aug}");

        let approx = infer(&inst, &w, &icm).map_err(|e| e.to_string())?;
        let approx_e = energy(&inst, &approx.labels, &w).unwrap();
        ensure!(approx_e >= best - 1e-9, "case {case}: ICM {approx_e} below exact {best}");
    }
    Ok(())
}

fn criterion_6() -> Outcome {
    let shape = InstanceShape {
        n_objects: 3,
        n_scenes: 0,
        scene_dim: 0,
    };
    let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "c".into()], vec![]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut insts = Vec::new();
    let mut labels = Vec::new();
    for k in 0..20 {
        let n = 1 + k % 3;
        let levels: Vec<u8> = (0..n).map(|_| rng.random_range(0..11)).collect();
        let objs = (0..n)
            .map(|i| {
                let mut v = [0.0; VISUAL_DIM];
                v[levels[i] as usize] = 1.0;
                (i, ObjectVisualFeature(v))
            })
            .collect();
        insts.push(MrfInstance::assemble(format!("s{k}"), shape, objs, None, None).map_err(|e| e.to_string())?);
        labels.push(levels);
    }
    let cfg = TrainConfig {
        c: 10.0,
        epsilon: 1e-3,
        ..TrainConfig::default()
    };
    let (model, report) = train_ssvm(&insts, &labels, &vocab, &cfg).map_err(|e| e.to_string())?;
    ensure!(report.converged, "did not converge in {} iterations", report.iterations);
    ensure!(report.final_violation <= 1e-3, "final violation {}", report.final_violation);
    ensure!(
        report.objective_trace.windows(2).all(|p| p[1] >= p[0]),
        "objective trace decreases: {:?}",
        report.objective_trace
    );
    let mut mad = 0.0;
    for (inst, y) in insts.iter().zip(&labels) {
        let pred = model.predict(inst).map_err(|e| e.to_string())?;
        let truth: Vec<f64> = y.iter().map(|&l| Mode::Continuous.value(l)).collect();
        let got: Vec<f64> = pred.labels.iter().map(|&l| Mode::Continuous.value(l)).collect();
        mad += loss_mad(&truth, &got).map_err(|e| e.to_string())?;
    }
    ensure!(mad == 0.0, "training MAD {}", mad / insts.len() as f64);
    Ok(())
}

/// Conjugate gradient on the regularized normal equations with a bias column.
fn ridge_cg(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let d = rows[0].len() + 1;
    let x = |i: usize, j: usize| if j + 1 < d { rows[i][j] } else { 1.0 };
    let apply = |v: &[f64]| -> Vec<f64> {
        let xv: Vec<f64> = (0..rows.len()).map(|i| (0..d).map(|j| x(i, j) * v[j]).sum()).collect();
        (0..d)
            .map(|j| (0..rows.len()).map(|i| x(i, j) * xv[i]).sum::<f64>() + lambda * v[j])
            .collect()
    };
    let b: Vec<f64> = (0..d).map(|j| (0..rows.len()).map(|i| x(i, j) * y[i]).sum()).collect();
    let mut beta = vec![0.0; d];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..10 * d {
        if rr.sqrt() < 1e-14 {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for j in 0..d {
            beta[j] += alpha * p[j];
            r[j] -= alpha * ap[j];
        }
        let next: f64 = r.iter().map(|v| v * v).sum();
        for j in 0..d {
            p[j] = r[j] + next / rr * p[j];
        }
        rr = next;
    }
    beta
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
        let lambda = [1e-3, 0.1, 1.0, 10.0][case % 4];
        let model = train_ridge(&rows, &y, lambda).map_err(|e| e.to_string())?;
        let oracle = ridge_cg(&rows, &y, lambda);
        for (j, w) in model.weights.iter().chain(std::iter::once(&model.bias)).enumerate() {
            ensure!((w - oracle[j]).abs() <= 1e-6, "case {case} coefficient {j}: {w} vs {}", oracle[j]);
        }
    }
    Ok(())
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn latent_views(seed: u64, n: usize, latent: usize, dv: usize, dt: usize, sigma: f64) -> (FeatureMatrix, FeatureMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = gaussian(&mut rng, n, latent);
    let v = &z * gaussian(&mut rng, latent, dv) + gaussian(&mut rng, n, dv) * sigma;
    let t = &z * gaussian(&mut rng, latent, dt) + gaussian(&mut rng, n, dt) * sigma;
    let to_fm = |m: DMatrix<f64>, role| {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        FeatureMatrix::from_rows(&rows, role).unwrap()
    };
    (to_fm(v, MatrixRole::VisualRetrieval), to_fm(t, MatrixRole::Textual))
}

/// Singular values of `C_vv^{-1/2} C_vt C_tt^{-1/2}`, descending.
fn whitened_svd(v: &FeatureMatrix, t: &FeatureMatrix, reg: f64) -> Vec<f64> {
    let centred = |m: &FeatureMatrix| {
        let mut x = DMatrix::from_row_slice(m.rows(), m.dim(), m.values());
        let n = x.nrows() as f64;
        for mut c in x.column_iter_mut() {
            let mean = c.sum() / n;
            c.add_scalar_mut(-mean);
        }
        x
    };
    let (x, y) = (centred(v), centred(t));
    let inv_sqrt = |c: DMatrix<f64>| {
        let e = c.symmetric_eigen();
        let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()));
        &e.eigenvectors * d * e.eigenvectors.transpose()
    };
    let wv = inv_sqrt(x.transpose() * &x + DMatrix::identity(x.ncols(), x.ncols()) * reg);
    let wt = inv_sqrt(y.transpose() * &y + DMatrix::identity(y.ncols(), y.ncols()) * reg);
    let mut s: Vec<f64> = (wv * (x.transpose() * &y) * wt).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn criterion_8() -> Outcome {
    for seed in 0..10u64 {
        let (v, t) = latent_views(seed, 80, 2, 6, 5, 0.3);
        let reg = [1e-3, 0.1, 1.0][seed as usize % 3];
        let model = fit_cca(&v, &t, &CcaConfig { reg: Some(reg), ..Default::default() }).map_err(|e| e.to_string())?;
        let oracle = whitened_svd(&v, &t, reg);
        for (j, (a, b)) in model.correlations.iter().zip(&oracle).enumerate() {
            ensure!((a - b).abs() <= 1e-8, "seed {seed} component {j}: {a} vs {b}");
        }
        for (m, modality) in [(&v, Modality::Visual), (&t, Modality::Textual)] {
            let r = model.whitening_residual(m, modality).map_err(|e| e.to_string())?;
            ensure!(r <= 1e-6, "seed {seed}: whitening residual {r}");
        }
    }
    let (v, t) = latent_views(17, 200, 3, 10, 8, 0.01);
    let model = fit_cca(&v, &t, &CcaConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        model.correlations[..3].iter().all(|l| *l >= 0.99),
        "three-latent correlations {:?}",
        &model.correlations[..3]
    );
    for (m, modality) in [(&v, Modality::Visual), (&t, Modality::Textual)] {
        let r = model.whitening_residual(m, modality).map_err(|e| e.to_string())?;
        ensure!(r <= 1e-6, "three-latent whitening residual {r}");
    }
    Ok(())
}

fn dcg(rel: &[f64], k: usize) -> f64 {
    let mut s = 0.0;
    for (pos, r) in rel.iter().enumerate().take(k) {
        s += (2f64.powf(*r) - 1.0) / ((pos + 2) as f64).log2();
    }
    s
}

fn best_permutation_dcg(rel: &[f64], k: usize) -> f64 {
    fn go(rest: &mut Vec<f64>, acc: &mut Vec<f64>, k: usize, best: &mut f64) {
        if rest.is_empty() {
            *best = best.max(dcg(acc, k));
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            acc.push(x);
            go(rest, acc, k, best);
            acc.pop();
            rest.insert(i, x);
        }
    }
    let mut best = 0.0;
    go(&mut rel.to_vec(), &mut Vec::new(), k, &mut best);
    best
}

fn criterion_9() -> Outcome {
    let hand = ndcg_at_k(&[0.5, 1.0], &[1.0, 0.5], 2).map_err(|e| e.to_string())?;
    ensure!((hand - 0.82861).abs() <= 1e-4, "hand example {hand}");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..1000 {
        let n = rng.random_range(2..15);
        let rel: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let (mut i, mut j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let k = rng.random_range(1..=n + 2);
        let ideal = ideal_order(&rel);
        let before = ndcg_at_k(&rel, &ideal, k).unwrap();
        let mut swapped = rel.clone();
        if swapped[j] > swapped[i] {
            swapped.swap(i, j);
        }
        let after = ndcg_at_k(&swapped, &ideal, k).unwrap();
        ensure!(after >= before - 1e-12, "case {case}: swap lowered NDCG {before} -> {after}");
        ensure!((0.0..=1.0 + 1e-12).contains(&after), "case {case}: NDCG {after} out of range");
    }
    for case in 0..300 {
        let n = rng.random_range(1..=6);
        let rel: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let k = rng.random_range(1..=6);
        let z = best_permutation_dcg(&rel, k);
        let expected = if z > 0.0 { dcg(&rel, k) / z } else { 0.0 };
        let got = ndcg_at_k(&rel, &ideal_order(&rel), k).unwrap();
        ensure!((got - expected).abs() <= 1e-12, "case {case}: {got} vs brute force {expected}");
    }
    Ok(())
}

fn criterion_10() -> Outcome {
    let variance = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    for (w, h, level) in [(64, 64, 117.0), (120, 80, 0.0), (33, 47, 255.0)] {
        let g = GrayImage::new(w, h, vec![level; w * h]).map_err(|e| e.to_string())?;
        let s = spectral_residual_saliency(&g).map_err(|e| e.to_string())?;
        ensure!(variance(&s.values) <= 1e-8, "{w}x{h} constant image variance {}", variance(&s.values));
    }
    for (px, py) in [(10usize, 10usize), (40, 22), (55, 50)] {
        let mut v = vec![0.0; 64 * 64];
        v[py * 64 + px] = 255.0;
        let s = spectral_residual_saliency(&GrayImage::new(64, 64, v).unwrap()).map_err(|e| e.to_string())?;
        let (i, _) = s
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
        let (x, y) = (i % 64, i / 64);
        ensure!(
            x.abs_diff(px) <= 3 && y.abs_diff(py) <= 3,
            "impulse at ({px},{py}) peaks at ({x},{y})"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let (w, h) = (rng.random_range(8..150), rng.random_range(8..150));
        let g = GrayImage::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap();
        let s = spectral_residual_saliency(&g).map_err(|e| e.to_string())?;
        ensure!(s.values.iter().all(|v| (0.0..=1.0).contains(v)), "{w}x{h}: value outside [0,1]");
        ensure!(s.width == w && s.height == h, "output size {}x{}", s.width, s.height);
    }
    Ok(())
}

fn criterion_11() -> Outcome {
    let config = ExperimentConfig {
        source: DataSource::Synthetic {
            config: SyntheticConfig {
                images: 300,
                noise: 0.05,
                ..SyntheticConfig::default()
            },
            seed: 42,
        },
        seed: 42,
        settings: vec![TextFeatureMode::Tags, TextFeatureMode::Tcti],
        ks: vec![1, 5, 10, 20],
        ..ExperimentConfig::default()
    };
    let first = run_experiment(&config).map_err(|e| e.to_string())?;
    let second = run_experiment(&config).map_err(|e| e.to_string())?;
    let (r1, r2) = (first.report_json().unwrap(), second.report_json().unwrap());
    ensure!(r1.as_bytes() == r2.as_bytes(), "report.json differs between runs");
    ensure!(first.curves_csv() == second.curves_csv(), "curves.csv differs between runs");
    ensure!(
        first.diagnostics_json().unwrap() == second.diagnostics_json().unwrap(),
        "diagnostics.json differs between runs"
    );
    for task in Task::ALL {
        let at10 = |setting: &str| first.report.get(setting).and_then(|t| t.get(task.name())).and_then(|c| c.get(&10)).copied();
        let (tcti, tags) = (at10("TCTI"), at10("TAGS"));
        let (Some(tcti), Some(tags)) = (tcti, tags) else {
            return Err(format!("{} missing from report", task.name()));
        };
        ensure!(tcti >= tags, "{}: NDCG@10 TCTI {tcti:.5} < TAGS {tags:.5}", task.name());
    }
    Ok(())
}

fn criterion_12() -> Outcome {
    let synth = generate_synthetic(&SyntheticConfig::sized(40, 6, 3, 12), 12).map_err(|e| e.to_string())?;
    let ds = &synth.dataset;

    let back = Dataset::from_json_str(&ds.to_json_string().unwrap()).map_err(|e| e.to_string())?;
    ensure!(&back == ds, "dataset JSON round trip changed the dataset");

    for m in [&synth.visual, &synth.scene, &synth.gray] {
        let mut buf = Vec::new();
        m.write_to(&mut buf).map_err(|e| e.to_string())?;
        let back = FeatureMatrix::read_from(buf.as_slice(), m.role()).map_err(|e| e.to_string())?;
        ensure!(&back == m, "feature matrix round trip changed the values");
    }

    let back = parse_importance_json(&importance_to_json(&synth.truth).unwrap()).map_err(|e| e.to_string())?;
    ensure!(back == synth.truth, "importance JSON round trip changed the values");

    let mut trees = 0;
    for s in ds.images.iter().flat_map(|i| &i.sentences) {
        let text = s.tree.to_string();
        ensure!(parse_bracketed_tree(&text).map_err(|e| e.to_string())? == s.tree, "tree `{text}` did not round trip");
        trees += 1;
    }
    for text in [BEACH_SUBJECT, BEACH_MODIFIER] {
        let t = parse_bracketed_tree(text).map_err(|e| e.to_string())?;
        ensure!(parse_bracketed_tree(&t.to_string()).unwrap() == t, "fixture tree did not round trip");
    }
    ensure!(trees > 0, "no sentences generated");

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let instances: Vec<MrfInstance> = (0..15)
        .map(|k| {
            let n = k % 4;
            let mut inst = random_instance(&mut rng, SHAPE, n, n == 0 || k % 2 == 0);
            inst.id = format!("i{k}");
            if k % 3 == 0 {
                inst.labels = Some((0..inst.node_count()).map(|_| rng.random_range(0..11)).collect());
            }
            inst
        })
        .collect();
    let archive = InstanceArchive { shape: SHAPE, instances };
    let mut buf = Vec::new();
    archive.write_to(&mut buf).map_err(|e| e.to_string())?;
    ensure!(InstanceArchive::read_from(buf.as_slice()).map_err(|e| e.to_string())? == archive, "instance archive round trip");

    for mode in [Mode::Continuous, Mode::Binary] {
        let layout = WeightLayout::new(mode, SHAPE);
        let model = SsvmModel {
            weights: random_weights(&mut rng, layout),
            config: TrainConfig {
                mode,
                c: 3.5,
                ..TrainConfig::default()
            },
            vocabulary_hash: vocabulary_hash(&ds.vocabulary),
        };
        let mut buf = Vec::new();
        model.write_to(&mut buf).map_err(|e| e.to_string())?;
        ensure!(SsvmModel::read_from(buf.as_slice()).map_err(|e| e.to_string())? == model, "{mode} model round trip");
    }

    let (v, t) = latent_views(3, 50, 2, 5, 4, 0.2);
    let mut model = fit_cca(&v, &t, &CcaConfig::default()).map_err(|e| e.to_string())?;
    for mode in [None, Some(TextFeatureMode::Pcti)] {
        model.mode = mode;
        let mut buf = Vec::new();
        model.write_to(&mut buf).map_err(|e| e.to_string())?;
        ensure!(CcaModel::read_from(buf.as_slice()).map_err(|e| e.to_string())? == model, "CCA model round trip");
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    synth.save_to_dir(dir.path()).map_err(|e| e.to_string())?;
    let loaded = tagrank::corpus::load_dataset(dir.path().join("dataset.json")).map_err(|e| e.to_string())?;
    ensure!(&loaded == ds, "dataset file round trip");
    let visual = tagrank::corpus::load_feature_matrix(dir.path().join("visual.bin"), MatrixRole::VisualRetrieval)
        .map_err(|e| e.to_string())?;
    ensure!(visual == synth.visual, "feature file round trip");
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("discounted probability fixture", criterion_1),
        ("scene-aware sentence fixture", criterion_2),
        ("measurement invariants, 1000 cases", criterion_3),
        ("joint feature map / energy identity", criterion_4),
        ("exact and loss-augmented inference", criterion_5),
        ("SSVM convergence on separable set", criterion_6),
        ("ridge closed form vs conjugate gradient", criterion_7),
        ("CCA oracle, whitening, latent recovery", criterion_8),
        ("NDCG hand example, swaps, normalization", criterion_9),
        ("saliency constant, impulse, bounds", criterion_10),
        ("end-to-end TCTI >= TAGS, reproducible", criterion_11),
        ("format round trips", criterion_12),
    ];
    let mut failures = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("criterion {:>2}: PASS  {name} ({secs:.2}s)", i + 1),
            Err(msg) => {
                println!("criterion {:>2}: FAIL  {name}: {msg}", i + 1);
                failures.push(i + 1);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
