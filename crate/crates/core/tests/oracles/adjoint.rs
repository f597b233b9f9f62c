//! Dot-product tests `⟨J v, u⟩ = ⟨v, Jᵀ u⟩` for every differentiable
//! primitive, with `Jᵀ u` taken from the tape and `J v` computed directly.

use sscnn_core::autodiff::{Tape, Var};
use sscnn_core::eigen::EigenOptions;
use sscnn_core::graph::PointCloud;
use sscnn_core::rng::SeededRng;
use sscnn_core::spectral::{kernel_design, KernelKind};
use sscnn_core::sync::apply_fmap;
use sscnn_core::{pipeline, Mat};

fn random_mat(rows: usize, cols: usize, rng: &mut SeededRng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.normal())
}

/// `Jᵀu` of `f` at `x`, read off the tape's gradient of `⟨f(x), u⟩`.
fn vjp(x: &Mat, u: &Mat, f: &dyn Fn(&mut Tape, Var) -> Var) -> Mat {
    let mut tape = Tape::new();
    let xv = tape.param("x", x.clone());
    let y = f(&mut tape, xv);
    let loss = tape.dot_const(y, u.clone()).unwrap();
    tape.backward(loss).unwrap().require("x").unwrap().clone()
}

fn eval(x: &Mat, f: &dyn Fn(&mut Tape, Var) -> Var) -> Mat {
    let mut tape = Tape::new();
    let xv = tape.param("x", x.clone());
    let y = f(&mut tape, xv);
    tape.value(y).clone()
}

fn rel(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

/// Relative adjoint mismatch of a map that is linear in its argument.
fn linear(x_shape: (usize, usize), f: &dyn Fn(&mut Tape, Var) -> Var, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let v = random_mat(x_shape.0, x_shape.1, &mut rng);
    let jv = eval(&v, f);
    let u = random_mat(jv.rows(), jv.cols(), &mut rng);
    rel(jv.dot(&u), v.dot(&vjp(&v, &u, f)))
}

/// Same for a nonlinear map at `x`, with `J v` given by `jvp`.
fn nonlinear(x: &Mat, jvp: &dyn Fn(&Mat) -> Mat, f: &dyn Fn(&mut Tape, Var) -> Var, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let v = random_mat(x.rows(), x.cols(), &mut rng);
    let jv = jvp(&v);
    let u = random_mat(jv.rows(), jv.cols(), &mut rng);
    rel(jv.dot(&u), v.dot(&vjp(x, &u, f)))
}

fn basis(n: usize, m: usize, seed: u64) -> Mat {
    let mut rng = SeededRng::new(seed);
    let pc = PointCloud::new((0..n).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect()).unwrap();
    pipeline::shape_basis(&pc, 6, m, &EigenOptions::default()).unwrap().vectors().clone()
}

/// `[C·α[..kl]; α[kl..]]` recorded on the tape.
fn fmap_on_tape(t: &mut Tape, c: Var, alpha: Var) -> Var {
    let (m, kl) = (t.value(alpha).rows(), t.value(c).cols());
    let head = t.slice_rows(alpha, 0, kl).unwrap();
    let mapped = t.matmul(c, head).unwrap();
    let tail = t.slice_rows(alpha, kl, m).unwrap();
    t.vstack(mapped, tail).unwrap()
}

/// `(primitive, relative mismatch)` for every primitive.
pub fn all() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();

    let b = basis(40, 12, 1);
    out.push(("forward transform", linear((40, 3), &|t, x| {
        let bv = t.constant(b.clone());
        t.t_matmul(bv, x).unwrap()
    }, 2)));
    out.push(("backward transform", linear((12, 3), &|t, a| {
        let bv = t.constant(b.clone());
        t.matmul(bv, a).unwrap()
    }, 3)));

    let lambda: Vec<f64> = (0..12).map(|i| 2.0 * i as f64 / 11.0).collect();
    let phi = kernel_design(KernelKind::ModulatedExpWindow, 4.0, 7, &lambda).unwrap();
    let mut rng = SeededRng::new(4);
    let omega = random_mat(7, 3, &mut rng);
    let alpha = random_mat(12, 3, &mut rng);
    let mult = phi.matmul(&omega);
    out.push(("multiply (signal)", linear((12, 3), &|t, a| {
        let m = t.constant(mult.clone());
        t.mul(a, m).unwrap()
    }, 5)));
    out.push(("multiply (kernel coefficients)", linear((7, 3), &|t, w| {
        let p = t.constant(phi.clone());
        let m = t.matmul(p, w).unwrap();
        let a = t.constant(alpha.clone());
        t.mul(a, m).unwrap()
    }, 6)));

    let mut rng = SeededRng::new(7);
    let c = random_mat(9, 4, &mut rng);
    let alpha = random_mat(10, 2, &mut rng);
    let taped = eval(&alpha, &|t, a| {
        let cv = t.constant(c.clone());
        fmap_on_tape(t, cv, a)
    });
    assert_eq!(taped, apply_fmap(&c, &alpha).unwrap(), "taped map differs from apply_fmap");
    out.push(("fmap (coefficients)", linear((10, 2), &|t, a| {
        let cv = t.constant(c.clone());
        fmap_on_tape(t, cv, a)
    }, 8)));
    // Affine in C (the tail passes through), so J v = [v·α[..kl]; 0].
    let jvp = |v: &Mat| v.matmul(&alpha.slice_rows(0, 4)).vstack(&Mat::zeros(6, 2));
    out.push(("fmap (map)", nonlinear(&c, &jvp, &|t, cv| {
        let a = t.constant(alpha.clone());
        fmap_on_tape(t, cv, a)
    }, 9)));
    out.push(("inverse fmap", linear((15, 2), &|t, a| {
        let cv = t.constant(c.clone());
        let head = t.slice_rows(a, 0, 9).unwrap();
        let back = t.t_matmul(cv, head).unwrap();
        let tail = t.slice_rows(a, 9, 15).unwrap();
        t.vstack(back, tail).unwrap()
    }, 10)));

    let mut rng = SeededRng::new(11);
    let w = random_mat(5, 3, &mut rng);
    let x = random_mat(20, 5, &mut rng);
    out.push(("1x1 conv (input)", linear((20, 5), &|t, xv| {
        let wv = t.constant(w.clone());
        t.matmul(xv, wv).unwrap()
    }, 12)));
    out.push(("1x1 conv (weight)", linear((5, 3), &|t, wv| {
        let xv = t.constant(x.clone());
        t.matmul(xv, wv).unwrap()
    }, 13)));

    let mut rng = SeededRng::new(14);
    let (n, ch, eps) = (25, 3, 1e-5);
    let x = random_mat(n, ch, &mut rng);
    let gamma = Mat::from_fn(1, ch, |_, _| 0.5 + rng.uniform());
    let beta = random_mat(1, ch, &mut rng);
    // dy = γ/σ·(dx − mean(dx) − x̂·mean(dx ⊙ x̂)) per column.
    let jvp = |v: &Mat| {
        let mut out = Mat::zeros(n, ch);
        for j in 0..ch {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = (var + eps).sqrt();
            let xh: Vec<f64> = col.iter().map(|a| (a - mean) / sd).collect();
            let dv = v.column(j);
            let m1 = dv.iter().sum::<f64>() / n as f64;
            let m2 = dv.iter().zip(&xh).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            for i in 0..n {
                out[(i, j)] = gamma[(0, j)] / sd * (dv[i] - m1 - xh[i] * m2);
            }
        }
        out
    };
    out.push(("batch norm", nonlinear(&x, &jvp, &|t, xv| {
        let g = t.constant(gamma.clone());
        let b = t.constant(beta.clone());
        t.batch_norm(xv, g, b, eps).unwrap().0
    }, 15)));

    let mut rng = SeededRng::new(16);
    let x = random_mat(30, 4, &mut rng);
    let jvp = |v: &Mat| Mat::from_fn(30, 4, |i, j| if x[(i, j)] > 0.0 { v[(i, j)] } else { 0.0 });
    out.push(("relu", nonlinear(&x, &jvp, &|t, xv| t.relu(xv), 17)));
    let keep = 0.8;
    let mask = Mat::from_fn(30, 4, |_, _| if rng.uniform() < keep { 1.0 / keep } else { 0.0 });
    out.push(("dropout with fixed mask", linear((30, 4), &|t, xv| {
        let m = t.constant(mask.clone());
        t.mul(xv, m).unwrap()
    }, 18)));

    let mut rng = SeededRng::new(19);
    out.push(("patchify", linear((512, 3), &|t, xv| t.patchify(xv, 8, 2).unwrap(), 20)));
    let w = random_mat(24, 5, &mut rng);
    out.push(("strided 3D conv", linear((512, 3), &|t, xv| {
        let p = t.patchify(xv, 8, 2).unwrap();
        let wv = t.constant(w.clone());
        t.matmul(p, wv).unwrap()
    }, 21)));
    out.push(("flatten", linear((8, 5), &|t, xv| t.reshape(xv, 1, 40).unwrap(), 22)));
    out
}
