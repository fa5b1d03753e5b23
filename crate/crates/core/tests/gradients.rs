mod common;

use meshcnn::arch::{preset, ArchName, LayerSpec, Network, NetworkSpec};
use meshcnn::features::{assemble_features, FeatureSelection};
use meshcnn::mesh::{ring_adjacency, RingAdjacency};
use meshcnn::nn::{LossKind, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
const PER_OP_TOL: f64 = 1e-4;

/// Worst relative error between tape gradients and central differences for
/// every entry of every leaf.
fn check<'a>(leaves: &[Tensor], build: &dyn Fn(&mut Tape<'a>, &[Var]) -> Var) -> f64 {
    let eval = |values: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let mut grads = tape.backward(out).unwrap();
    let mut worst = 0.0f64;
    for (t, leaf) in leaves.iter().enumerate() {
        let analytic = grads.take_or_zeros(vars[t], leaf.shape());
        let numeric = common::numeric_gradient(
            |x| {
                let mut values = leaves.to_vec();
                values[t] = Tensor::from_vec(leaf.shape().to_vec(), x.to_vec()).unwrap();
                eval(&values)
            },
            leaf.data(),
            EPS,
        );
        worst = worst.max(common::max_rel_err(analytic.data(), &numeric, 1e-6));
    }
    worst
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn weights(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn small_mesh_adjacency(rng: &mut ChaCha8Rng) -> RingAdjacency {
    let mesh = common::random_mesh(rng, 20, 40);
    ring_adjacency(&mesh, &[0, 1, 2, 4]).unwrap()
}

#[test]
fn expand_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let adj = small_mesh_adjacency(&mut rng);
    let n = adj.vertex_count();
    let x = random_tensor(&mut rng, vec![n, 3]);
    let w = weights(&mut rng, 3 * n * 3);
    let err = check(&[x], &|tape, v| {
        let c = tape.expand(v[0], &adj, &[0, 2, 4]).unwrap();
        tape.dot(c, &w).unwrap()
    });
    assert!(err < PER_OP_TOL, "{err}");
}

#[test]
fn conv_ring_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (r, n, cin, cout) = (3, 7, 4, 5);
    let leaves = [
        random_tensor(&mut rng, vec![r, n, cin]),
        random_tensor(&mut rng, vec![r, 1, cin, cout]),
        random_tensor(&mut rng, vec![cout]),
    ];
    let w = weights(&mut rng, n * cout);
    let err = check(&leaves, &|tape, v| {
        let y = tape.conv_ring(v[0], v[1], v[2]).unwrap();
        tape.dot(y, &w).unwrap()
    });
    assert!(err < PER_OP_TOL, "{err}");
}

#[test]
fn dense_gradient_both_ranks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for shape in [vec![6, 4], vec![1, 6, 4]] {
        let leaves = [
            random_tensor(&mut rng, shape),
            random_tensor(&mut rng, vec![4, 3]),
            random_tensor(&mut rng, vec![3]),
        ];
        let w = weights(&mut rng, 18);
        let err = check(&leaves, &|tape, v| {
            let y = tape.dense(v[0], v[1], v[2]).unwrap();
            tape.dot(y, &w).unwrap()
        });
        assert!(err < PER_OP_TOL, "{err}");
    }
}

#[test]
fn relu_gradient_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = (0..30)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let x = Tensor::from_vec(vec![10, 3], data).unwrap();
    let w = weights(&mut rng, 30);
    let err = check(&[x], &|tape, v| {
        let y = tape.relu(v[0]).unwrap();
        tape.dot(y, &w).unwrap()
    });
    assert!(err < PER_OP_TOL, "{err}");
}

#[test]
fn loss_head_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits = Tensor::from_vec(vec![1, 12, 2], (0..24).map(|_| rng.gen_range(-4.0..4.0)).collect()).unwrap();
    let targets: Vec<u8> = (0..12).map(|_| rng.gen_bool(0.3) as u8).collect();
    for kind in [LossKind::WeightedCe, LossKind::PrintedFormula] {
        for pos_weight in [1.0, 3.0] {
            let err = check(std::slice::from_ref(&logits), &|tape, v| {
                let z = tape.logit_diff(v[0]).unwrap();
                tape.weighted_ce(z, &targets, pos_weight, kind).unwrap()
            });
            assert!(err < PER_OP_TOL, "{kind:?} w={pos_weight}: {err}");
        }
    }
}

#[test]
fn expand_conv_relu_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let adj = small_mesh_adjacency(&mut rng);
    let n = adj.vertex_count();
    let leaves = [
        random_tensor(&mut rng, vec![n, 2]),
        random_tensor(&mut rng, vec![3, 1, 2, 4]),
        random_tensor(&mut rng, vec![4]),
    ];
    let w = weights(&mut rng, n * 4);
    let err = check(&leaves, &|tape, v| {
        let c = tape.expand(v[0], &adj, &[0, 1, 2]).unwrap();
        let y = tape.conv_ring(c, v[1], v[2]).unwrap();
        let y = tape.relu(y).unwrap();
        tape.dot(y, &w).unwrap()
    });
    // A ReLU input landing within EPS of zero would spoil the difference;
    // with random data that is unlikely but the tolerance is per-op anyway.
    assert!(err < PER_OP_TOL, "{err}");
}

fn thirty_vertex_problem() -> (Tensor, RingAdjacency, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mesh = common::random_mesh(&mut rng, 30, 30);
    assert_eq!(mesh.vertex_count(), 30);
    let labels: Vec<u8> = (0..30).map(|_| rng.gen_bool(0.3) as u8).collect();
    let x = assemble_features(&mesh, FeatureSelection::default()).unwrap().to_tensor();
    let adj = ring_adjacency(&mesh, &[0, 1, 2, 4, 8]).unwrap();
    (x, adj, labels)
}

#[test]
fn network_d_end_to_end() {
    let (x, adj, labels) = thirty_vertex_problem();
    let net = Network::instantiate(&preset(ArchName::D, 5).unwrap(), 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (err, checked) = common::network_gradient_error(&mut rng, &net, &x, Some(&adj), &labels, 1e-6, 12);
    assert!(checked > 300);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn dense_tail_network_end_to_end() {
    let (x, adj, labels) = thirty_vertex_problem();
    let spec = NetworkSpec::custom(
        5,
        vec![
            LayerSpec::expand_conv(&[0, 2, 4], 6, 1),
            LayerSpec::conv_only(5, 1),
            LayerSpec::dense(4, 1),
            LayerSpec::dense(2, 1),
        ],
    )
    .unwrap();
    let net = Network::instantiate(&spec, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (err, _) = common::network_gradient_error(&mut rng, &net, &x, Some(&adj), &labels, 1e-6, 1000);
    assert!(err < 1e-3, "{err}");
}
