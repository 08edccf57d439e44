//! Brute-force reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's geometry, scoring or metric code;
//! only plain loops over rows. Conventions follow the library's documented
//! ones: axes rounded to f32, strict angular membership with the on-axis and
//! full-space rules, population standard deviation, nearest-rank threshold.

#![allow(dead_code)]

pub const EPS: f64 = 1e-12;
pub const ON_AXIS: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone)]
pub struct RefCone {
    pub axis: Vec<f64>,
    pub cos_opening: f64,
    pub boundary: f64,
    /// Indices into the class' calibration rows (train then test).
    pub members: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RefClass {
    pub centroid: Vec<f64>,
    pub cones: Vec<RefCone>,
    /// Centered calibration rows (train then test).
    pub centered: Vec<Vec<f64>>,
}

fn len(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (d / (len(a) * len(b))).clamp(-1.0, 1.0)
}

fn inside(c: f64, opening: f64) -> bool {
    c > opening || c >= ON_AXIS || opening <= -1.0
}

/// Builds one class from uncentered rows.
pub fn ref_class(train: &[Vec<f64>], test: &[Vec<f64>], k: usize, sigma: f64, snap: bool) -> RefClass {
    let d = train[0].len();
    let mut centroid = vec![0.0; d];
    for r in train {
        for (c, x) in centroid.iter_mut().zip(r) {
            *c += x / train.len() as f64;
        }
    }
    if snap {
        let dist = |r: &Vec<f64>| r.iter().zip(&centroid).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut best = 0;
        for i in 1..train.len() {
            if dist(&train[i]) < dist(&train[best]) {
                best = i;
            }
        }
        centroid = train[best].clone();
    }
    let centered: Vec<Vec<f64>> = train
        .iter()
        .chain(test)
        .map(|r| r.iter().zip(&centroid).map(|(a, b)| a - b).collect())
        .collect();
    let live: Vec<usize> = (0..train.len()).filter(|&i| len(&centered[i]) > EPS).collect();

    let mut cones = Vec::new();
    for &a in &live {
        let axis: Vec<f64> = centered[a].iter().map(|&x| x as f32 as f64).collect();
        let mut others: Vec<(f64, usize)> = live
            .iter()
            .filter(|&&i| i != a)
            .map(|&i| (cos(&axis, &centered[i]), i))
            .collect();
        others.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
        let opening = others[k - 1].0;
        let members: Vec<usize> = (0..centered.len())
            .filter(|&i| len(&centered[i]) <= EPS || inside(cos(&axis, &centered[i]), opening))
            .collect();
        let dists: Vec<f64> = members.iter().map(|&i| len(&centered[i])).collect();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let var = dists.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / dists.len() as f64;
        let boundary = mean + sigma * var.sqrt();
        if boundary > 0.0 {
            cones.push(RefCone {
                axis,
                cos_opening: opening,
                boundary,
                members,
            });
        }
    }
    RefClass {
        centroid,
        cones,
        centered,
    }
}

/// Lowest normalized distance over every cone of every class containing `z`.
pub fn ref_score(classes: &[RefClass], z: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for c in classes {
        let v: Vec<f64> = z.iter().zip(&c.centroid).map(|(a, b)| a - b).collect();
        let n = len(&v);
        if n <= EPS {
            return 0.0;
        }
        for cone in &c.cones {
            if inside(cos(&cone.axis, &v), cone.cos_opening) {
                best = best.min(n / cone.boundary);
            }
        }
    }
    best
}

/// Smallest score `t` among `scores` with `#{s <= t} * den >= num * n`.
pub fn ref_threshold(scores: &[f64], num: u64, den: u64) -> f64 {
    let n = scores.len() as u64;
    let mut candidates = scores.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &t in &candidates {
        let accepted = scores.iter().filter(|&&s| s <= t).count() as u64;
        if accepted * den >= num * n {
            return t;
        }
    }
    unreachable!("the largest score accepts everything")
}

pub fn ref_fpr(id: &[f64], ood: &[f64], num: u64, den: u64) -> f64 {
    let t = ref_threshold(id, num, den);
    ood.iter().filter(|&&s| s <= t).count() as f64 / ood.len() as f64
}

/// Pairwise count: OOD above ID scores 1, ties (including inf/inf) score 1/2.
pub fn ref_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &o in ood {
        for &i in id {
            if o > i {
                twice += 2;
            } else if o == i {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

/// `count` rows of an axis-aligned Gaussian with random per-axis scales.
pub fn random_rows(rng: &mut impl rand::Rng, count: usize, dim: usize, mean: &[f64], spread: f64) -> Vec<Vec<f64>> {
    let scales: Vec<f64> = (0..dim).map(|_| spread * rng.random_range(0.3..1.5)).collect();
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|j| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    mean[j] + scales[j] * z
                })
                .collect()
        })
        .collect()
}

pub fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

/// Close within `tol`, relative to the magnitude for values above 1; equal infinities pass.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Builds one random instance with the library and with the reference, and
/// compares cone angles, memberships, boundaries, lambda and sample scores.
/// Returns a one-line description of the instance.
pub fn oracle_instance(seed: u64) -> Result<String, String> {
    use hacood::contour::{build_contours, calibrate_lambda, cone_members, BuildConfig, KMode, LambdaMode};
    use hacood::{scoring, EmbeddingSet, Error};
    use rand::{Rng, SeedableRng};

    const TOL: f64 = 1e-9;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = [2, 4, 8][rng.random_range(0..3)];
    let classes = rng.random_range(1..=4usize);
    let k = [1, 3, 10][rng.random_range(0..3)];
    let snap = rng.random_bool(0.3);
    let pooled = rng.random_bool(0.3);
    let with_test = rng.random_bool(0.5);
    let budget = 300 / classes;

    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    let (mut train_labels, mut test_labels) = (Vec::new(), Vec::new());
    let mut per_class = Vec::new();
    for label in 0..classes {
        let mean: Vec<f64> = (0..dim).map(|_| rng.random_range(-6.0..6.0)).collect();
        let n_train = rng.random_range(k + 3..=budget * 3 / 4);
        let n_test = if with_test { rng.random_range(0..=budget - n_train) } else { 0 };
        let spread = rng.random_range(0.3..2.0);
        let rows = random_rows(&mut rng, n_train + n_test, dim, &mean, spread);
        let (tr, te) = rows.split_at(n_train);
        train_labels.extend(std::iter::repeat_n(label as u32, n_train));
        test_labels.extend(std::iter::repeat_n(label as u32, n_test));
        train_rows.extend_from_slice(tr);
        test_rows.extend_from_slice(te);
        per_class.push((tr.to_vec(), te.to_vec()));
    }
    let desc = format!(
        "seed={seed} d={dim} classes={classes} k={k} n_train={} n_test={} snap={snap} pooled={pooled}",
        train_rows.len(),
        test_rows.len()
    );
    let fail = |what: String| Err(format!("{desc}: {what}"));

    let train = EmbeddingSet::new(flatten(&train_rows), dim, Some(train_labels)).unwrap();
    let test = (!test_rows.is_empty())
        .then(|| EmbeddingSet::new(flatten(&test_rows), dim, Some(test_labels)).unwrap());
    let config = BuildConfig {
        k_mode: KMode::Fixed(k),
        centroid_snap: snap,
        lambda_mode: if pooled { LambdaMode::Pooled } else { LambdaMode::PerObservation },
        ..BuildConfig::default()
    };
    let built = build_contours(&train, test.as_ref(), &config).map_err(|e| format!("{desc}: {e}"))?;
    let reference: Vec<RefClass> = per_class
        .iter()
        .map(|(tr, te)| ref_class(tr, te, k, 2.0, snap))
        .collect();

    let mut ref_pooled = Vec::new();
    for (l, (lib, rf)) in built.contours.iter().zip(&reference).enumerate() {
        for (a, b) in lib.centroid().iter().zip(&rf.centroid) {
            if !close(*a, *b, TOL) {
                return fail(format!("class {l} centroid {a} vs {b}"));
            }
        }
        if lib.cones().len() != rf.cones.len() {
            return fail(format!("class {l}: {} cones vs {}", lib.cones().len(), rf.cones.len()));
        }
        // Each side's own centering: the k-th neighbour sits exactly on the
        // boundary, so a 1-ulp shift in the apex would flip it.
        let (tr, te) = &per_class[l];
        let centered: Vec<f64> = tr
            .iter()
            .chain(te)
            .flat_map(|r| r.iter().zip(lib.centroid()).map(|(a, b)| a - b))
            .collect();
        for (j, (lc, rc)) in lib.cones().iter().zip(&rf.cones).enumerate() {
            if !close(lc.cos_opening, rc.cos_opening, TOL) {
                return fail(format!("class {l} cone {j}: cos {} vs {}", lc.cos_opening, rc.cos_opening));
            }
            if !close(lc.radial_boundary, rc.boundary, TOL) {
                return fail(format!("class {l} cone {j}: b {} vs {}", lc.radial_boundary, rc.boundary));
            }
            let members = cone_members(lc, &centered).unwrap();
            if members != rc.members {
                return fail(format!("class {l} cone {j}: membership differs"));
            }
            ref_pooled.extend(rc.members.iter().map(|&i| {
                let v = &rf.centered[i];
                v.iter().map(|x| x * x).sum::<f64>().sqrt() / rc.boundary
            }));
        }
    }

    let calib: Vec<&Vec<f64>> = train_rows.iter().chain(&test_rows).collect();
    let ref_obs: Vec<f64> = calib.iter().map(|z| ref_score(&reference, z)).collect();
    for (i, (a, b)) in built.calibration_scores.iter().zip(&ref_obs).enumerate() {
        if !close(*a, *b, TOL) {
            return fail(format!("calibration score {i}: {a} vs {b}"));
        }
    }
    let ref_lambda = ref_threshold(if pooled { &ref_pooled } else { &ref_obs }, 95, 100);
    let lambda = match calibrate_lambda(&built.calibration_scores, &built.pooled_scores, &config) {
        Ok(l) => l,
        Err(Error::CalibrationUnreachable { .. }) if ref_lambda.is_infinite() => return Ok(desc),
        Err(e) => return fail(format!("calibration: {e}")),
    };
    if !close(lambda, ref_lambda, TOL) {
        return fail(format!("lambda {lambda} vs {ref_lambda}"));
    }

    // Probes: a box around the data plus jittered training rows.
    let mut probes: Vec<Vec<f64>> = (0..150)
        .map(|_| (0..dim).map(|_| rng.random_range(-12.0..12.0)).collect())
        .collect();
    for r in train_rows.iter().step_by(3) {
        probes.push(r.iter().map(|x| x + rng.random_range(-0.3..0.3)).collect());
    }
    let probe_set = EmbeddingSet::new(flatten(&probes), dim, None).unwrap();
    let lib_scores = scoring::score_contours(&built.contours, &probe_set).unwrap();
    for (i, (a, p)) in lib_scores.iter().zip(&probes).enumerate() {
        let b = ref_score(&reference, p);
        if !close(*a, b, TOL) {
            return fail(format!("probe {i}: {a} vs {b}"));
        }
    }
    Ok(format!("{desc} lambda={lambda}"))
}

/// Random ID/OOD score lists with heavy ties (values on a coarse grid) and
/// some `+inf` sentinels; lengths 1..=500.
pub fn random_score_pair(seed: u64) -> (Vec<f64>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let grid = rng.random_range(2..50) as f64;
    let inf_rate = [0.0, 0.05, 0.3, 1.0][rng.random_range(0..4)];
    let shift = rng.random_range(0.0..3.0);
    let draw = |n: usize, offset: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if rng.random_bool(inf_rate * 0.5) {
                    f64::INFINITY
                } else {
                    let x: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) + offset;
                    (x * grid).round() / grid
                }
            })
            .collect()
    };
    let n = rng.random_range(1..=500);
    let m = rng.random_range(1..=500);
    let id = draw(n, 0.0, &mut rng);
    let ood = draw(m, shift, &mut rng);
    (id, ood)
}

/// Compares the library metrics against the pairwise oracles on one pair.
pub fn metric_instance(seed: u64) -> Result<(), String> {
    use hacood::metrics::{auroc, fpr_at_tpr};
    let (id, ood) = random_score_pair(seed);
    for (num, den) in [(95u64, 100u64), (9, 10), (1, 2), (1, 1)] {
        let tpr = num as f64 / den as f64;
        let got = fpr_at_tpr(&id, &ood, tpr).map_err(|e| e.to_string())?;
        let want = ref_fpr(&id, &ood, num, den);
        if (got - want).abs() > 1e-12 {
            return Err(format!("seed {seed} tpr {tpr}: fpr {got} vs {want}"));
        }
    }
    let a = auroc(&id, &ood).map_err(|e| e.to_string())?;
    let b = auroc(&ood, &id).map_err(|e| e.to_string())?;
    let want = ref_auroc(&id, &ood);
    if (a - want).abs() > 1e-12 {
        return Err(format!("seed {seed}: auroc {a} vs {want}"));
    }
    if a + b != 1.0 {
        return Err(format!("seed {seed}: auroc(id, ood) + auroc(ood, id) = {}", a + b));
    }
    Ok(())
}
