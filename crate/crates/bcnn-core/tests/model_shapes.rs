//! End-to-end model contracts across every architecture: forward shapes,
//! train-mode backward, and bit-identical evaluation after a full
//! export-records / import-records round trip.

use bcnn_core::layers::{Activation, Mode, Sequential};
use bcnn_core::models::{build_model, Arch, ModelSpec, NormKind, PoolPosition};
use bcnn_core::tensor::RealTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(arch: Arch, complex: bool, seed: u64) -> ModelSpec {
    ModelSpec {
        arch,
        complex,
        norm: if complex { NormKind::Cgbn } else { NormKind::Bn },
        seed,
        ..ModelSpec::default()
    }
}

fn random_input(sp: &ModelSpec, n: usize, seed: u64) -> RealTensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = sp.input_hw;
    let len = n * sp.in_channels * h * w;
    RealTensor::from_vec(
        &[n, sp.in_channels, h, w],
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn eval_logits(model: &mut Sequential<f32>, x: &RealTensor<f32>) -> RealTensor<f32> {
    model
        .forward(Activation::Real(x.clone()), Mode::Eval)
        .unwrap()
        .into_real("logits")
        .unwrap()
}

fn all_archs() -> [Arch; 4] {
    [Arch::Small, Arch::Nin, Arch::Resnet, Arch::Resnete]
}

#[test]
fn every_arch_produces_finite_logits_in_both_domains() {
    for arch in all_archs() {
        for complex in [true, false] {
            let sp = spec(arch, complex, 7);
            let mut model = build_model::<f32>(&sp).unwrap();
            let x = random_input(&sp, 2, 11);
            let out = eval_logits(&mut model, &x);
            assert_eq!(
                out.shape(),
                &[2, sp.num_classes],
                "{arch:?} complex={complex}"
            );
            out.check_finite("logits").unwrap();
        }
    }
}

#[test]
fn every_arch_backward_runs_after_train_forward() {
    for arch in all_archs() {
        let sp = spec(arch, true, 3);
        let mut model = build_model::<f32>(&sp).unwrap();
        let x = random_input(&sp, 2, 5);
        let out = model
            .forward(Activation::Real(x), Mode::Train)
            .unwrap()
            .into_real("logits")
            .unwrap();
        let g = RealTensor::from_vec(out.shape(), vec![0.05; out.len()]).unwrap();
        let gin = model
            .backward(Activation::Real(g))
            .unwrap()
            .into_real("input grad")
            .unwrap();
        assert_eq!(gin.shape(), &[2, sp.in_channels, 28, 28], "{arch:?}");
        gin.check_finite("input grad").unwrap();
    }
}

/// Export every layer's records from a trained-at-init model and load them
/// into a model built with a different seed. Evaluation-mode logits must be
/// bit-identical: binarized layers travel as packed sign planes, everything
/// else as exact f32 payloads.
#[test]
fn export_import_roundtrip_is_bit_identical_for_every_arch() {
    for arch in all_archs() {
        for complex in [true, false] {
            let sp_src = spec(arch, complex, 21);
            let sp_dst = ModelSpec { seed: 9000, ..sp_src.clone() };
            let mut src = build_model::<f32>(&sp_src).unwrap();
            let mut dst = build_model::<f32>(&sp_dst).unwrap();

            let x = random_input(&sp_src, 3, 77);
            let before = eval_logits(&mut src, &x);

            assert_eq!(src.len(), dst.len());
            for (a, b) in src.layers().iter().zip(dst.layers_mut().iter_mut()) {
                b.import_records(&a.export_records()).unwrap();
            }

            let after = eval_logits(&mut dst, &x);
            assert_eq!(
                before.data(),
                after.data(),
                "{arch:?} complex={complex}: roundtrip changed eval logits"
            );
        }
    }
}

#[test]
fn import_rejects_records_from_a_different_architecture() {
    let mut small = build_model::<f32>(&spec(Arch::Small, true, 1)).unwrap();
    let nin = build_model::<f32>(&spec(Arch::Nin, true, 1)).unwrap();
    // find a layer pair whose record sets disagree and confirm rejection
    let mut rejected = false;
    for (dst, src) in small.layers_mut().iter_mut().zip(nin.layers().iter()) {
        if dst.import_records(&src.export_records()).is_err() {
            rejected = true;
            break;
        }
    }
    assert!(rejected, "geometry mismatch must be reported");
}

#[test]
fn pool_position_variants_build_and_run() {
    for pos in [PoolPosition::AfterNorm, PoolPosition::BeforeNorm] {
        let sp = ModelSpec { pool_position: pos, ..spec(Arch::Nin, true, 2) };
        let mut model = build_model::<f32>(&sp).unwrap();
        let x = random_input(&sp, 2, 3);
        let out = eval_logits(&mut model, &x);
        assert_eq!(out.shape(), &[2, 10]);
    }
}
