//! Whole-model gradient checks against central finite differences.
//!
//! The scalar objective is the summed per-example cross-entropy of a small
//! batch; the analytic gradient comes from one cached forward/backward. For
//! LeNet every single parameter is probed; for the wider dense stacks a
//! stratified sample covers every parameter array.

use trimsgd::model::{Arch, InputShape, Model, ParamVector};
use trimsgd::nn::softmax_cross_entropy;
use trimsgd::rng::Rng;
use trimsgd::RealArray;

const FD_STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn random_batch(shape: &[usize], classes: usize, rng: &mut Rng) -> (RealArray, Vec<usize>) {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.range_f64(0.0, 1.0)).collect();
    let inputs = RealArray::from_vec(shape.to_vec(), data).unwrap();
    let labels = (0..shape[0]).map(|i| i % classes + 1).collect();
    (inputs, labels)
}

fn total_loss(model: &Model, inputs: &RealArray, labels: &[usize]) -> f64 {
    let logits = model.forward(inputs).unwrap();
    let (losses, _) = softmax_cross_entropy(&logits, labels).unwrap();
    losses.values().iter().sum()
}

fn analytic_gradient(model: &Model, inputs: &RealArray, labels: &[usize]) -> ParamVector {
    let (logits, cache) = model.forward_cached(inputs).unwrap();
    let (_, logit_grads) = softmax_cross_entropy(&logits, labels).unwrap();
    model.backward(&cache, &logit_grads).unwrap()
}

fn fd_at(model: &mut Model, inputs: &RealArray, labels: &[usize], coord: usize) -> f64 {
    let mut params = model.flatten_params();
    let original = params.data()[coord];
    params.data_mut()[coord] = original + FD_STEP;
    model.set_params(&params).unwrap();
    let plus = total_loss(model, inputs, labels);
    params.data_mut()[coord] = original - FD_STEP;
    model.set_params(&params).unwrap();
    let minus = total_loss(model, inputs, labels);
    params.data_mut()[coord] = original;
    model.set_params(&params).unwrap();
    (plus - minus) / (2.0 * FD_STEP)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn check_coords(model: &mut Model, inputs: &RealArray, labels: &[usize], coords: &[usize]) {
    let analytic = analytic_gradient(model, inputs, labels);
    let mut worst = 0.0f64;
    for &coord in coords {
        let fd = fd_at(model, inputs, labels, coord);
        let err = rel_err(fd, analytic.data()[coord]);
        worst = worst.max(err);
        assert!(
            err < TOLERANCE,
            "coordinate {coord}: fd {fd} vs analytic {} (rel err {err})",
            analytic.data()[coord]
        );
    }
    println!("checked {} coordinates, worst rel err {worst:.2e}", coords.len());
}

#[test]
fn lenet_every_parameter_matches_finite_differences() {
    let mut rng = Rng::from_seed(101);
    let mut model = Model::build(
        Arch::LeNet,
        InputShape::Image {
            channels: 1,
            height: 28,
            width: 28,
        },
        10,
        833,
    )
    .unwrap();
    let (inputs, labels) = random_batch(&[4, 1, 28, 28], 10, &mut rng);
    let coords: Vec<usize> = (0..model.param_count()).collect();
    check_coords(&mut model, &inputs, &labels, &coords);
}

/// A sample that touches every parameter array of a model: all of each bias,
/// plus evenly spaced weight coordinates.
fn stratified_coords(params: &ParamVector, per_segment: usize) -> Vec<usize> {
    let mut coords = Vec::new();
    for (i, shape) in params.segment_shapes().iter().enumerate() {
        let (offset, len) = params.segment_bounds(i);
        let take = per_segment.min(len);
        for j in 0..take {
            coords.push(offset + j * len / take);
        }
        let _ = shape;
    }
    coords.sort_unstable();
    coords.dedup();
    coords
}

#[test]
fn nn2_stratified_parameters_match_finite_differences() {
    let mut rng = Rng::from_seed(102);
    let mut model = Model::build(Arch::Nn2, InputShape::Flat(784), 10, 834).unwrap();
    let (inputs, labels) = random_batch(&[4, 784], 10, &mut rng);
    let coords = stratified_coords(&model.flatten_params(), 300);
    check_coords(&mut model, &inputs, &labels, &coords);
}

#[test]
fn nn3_stratified_parameters_match_finite_differences() {
    let mut rng = Rng::from_seed(103);
    let mut model = Model::build(Arch::Nn3, InputShape::Flat(784), 10, 835).unwrap();
    let (inputs, labels) = random_batch(&[4, 784], 10, &mut rng);
    let coords = stratified_coords(&model.flatten_params(), 300);
    check_coords(&mut model, &inputs, &labels, &coords);
}
