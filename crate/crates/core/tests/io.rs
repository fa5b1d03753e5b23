mod common;

use meshcnn::arch::{LayerSpec, NetworkSpec};
use meshcnn::features::FeatureSelection;
use meshcnn::mesh::{labels_from_colors, load_obj, parse_obj_str, VertexLabels, DEFAULT_RED_THRESHOLD};
use meshcnn::nn::SgdSchedule;
use meshcnn::synth::{generate_dataset, DatasetConfig, SplitCounts, SynthConfig};
use meshcnn::train::run::{run_training, RunConfig, RunDir};
use meshcnn::train::{cache_path, export_colored_mesh, probability_color, ColorSource, Dataset, Split, TrainConfig};
use meshcnn::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn export_then_parse_recovers_labels() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..10 {
        let mesh = common::random_mesh(&mut rng, 12, 200);
        let labels = VertexLabels::from_bools(&(0..mesh.vertex_count()).map(|_| rng.gen_bool(0.3)).collect::<Vec<_>>());
        let path = dir.path().join(format!("m{k}.obj"));
        export_colored_mesh(&mesh, ColorSource::Labels(&labels), &path).unwrap();
        let back = load_obj(&path).unwrap();
        assert_eq!(labels_from_colors(&back, DEFAULT_RED_THRESHOLD).unwrap(), labels);
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.faces(), mesh.faces());
    }
}

#[test]
fn probability_export_is_linear_in_p() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = parse_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\n").unwrap();
    let p = [0.0, 0.25, 0.75, 1.0];
    let path = dir.path().join("p.obj");
    export_colored_mesh(&mesh, ColorSource::Probabilities(&p), &path).unwrap();
    let colors = load_obj(&path).unwrap().colors().unwrap().to_vec();
    for (c, &p) in colors.iter().zip(&p) {
        let expected = [0.7 + 0.3 * p, 0.7 * (1.0 - p), 0.7 * (1.0 - p)];
        for k in 0..3 {
            assert!((c[k] - expected[k]).abs() < 1e-12);
        }
        assert_eq!(*c, probability_color(p));
    }
}

#[test]
fn uncolored_mesh_has_no_labels() {
    let mesh = parse_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    assert!(matches!(labels_from_colors(&mesh, DEFAULT_RED_THRESHOLD), Err(Error::MissingColors)));
}

fn small_dataset(dir: &std::path::Path) {
    let config = DatasetConfig {
        synth: SynthConfig {
            vertex_budget: 150,
            seed: 8,
            ..SynthConfig::default()
        },
        splits: SplitCounts {
            train: 3,
            val: 1,
            test: 1,
        },
    };
    generate_dataset(&config, dir).unwrap();
}

#[test]
fn cache_is_written_reused_and_invalidated() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let sel = FeatureSelection::default();
    let fresh = Dataset::load(dir.path(), Split::Train, sel, &[0, 1, 2], false).unwrap();
    let first = Dataset::load(dir.path(), Split::Train, sel, &[0, 1, 2], true).unwrap();
    assert_eq!(fresh, first);
    let mesh_path = dir.path().join("train/mesh_0000.obj");
    let sidecar = cache_path(&mesh_path);
    assert!(sidecar.is_file());
    let cached = Dataset::load(dir.path(), Split::Train, sel, &[0, 1, 2], true).unwrap();
    assert_eq!(cached, first);

    // Different rings give a different key, so the sidecar is rebuilt.
    let other = Dataset::load(dir.path(), Split::Train, sel, &[0, 4], true).unwrap();
    assert!(other.samples()[0].adjacency.as_ref().unwrap().contains_ring(4));

    // A corrupt sidecar is ignored.
    std::fs::write(&sidecar, "{not json").unwrap();
    assert_eq!(Dataset::load(dir.path(), Split::Train, sel, &[0, 1, 2], true).unwrap(), first);

    // An edited mesh invalidates the cache.
    let text = std::fs::read_to_string(&mesh_path).unwrap();
    let edited_text: String = text
        .lines()
        .map(|l| match l.strip_prefix("v ") {
            Some(rest) if !l.contains("edited") => {
                let mut xs: Vec<f64> = rest.split_whitespace().map(|t| t.parse().unwrap()).collect();
                xs[2] += 0.5;
                xs.iter().map(|x| x.to_string()).fold("v".to_string(), |a, b| a + " " + &b)
            }
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&mesh_path, edited_text).unwrap();
    let edited = Dataset::load(dir.path(), Split::Train, sel, &[0, 1, 2], true).unwrap();
    assert_ne!(edited.samples()[0].features, first.samples()[0].features);
}

#[test]
fn missing_split_directory_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::load(dir.path(), Split::Test, FeatureSelection::default(), &[0], true).unwrap();
    assert!(ds.is_empty());
}

#[test]
fn run_directory_layout() {
    let data = tempfile::tempdir().unwrap();
    small_dataset(data.path());
    let run_root = tempfile::tempdir().unwrap();
    let config = RunConfig {
        data: data.path().to_path_buf(),
        network: Some(NetworkSpec::custom(5, vec![LayerSpec::expand_conv(&[0, 1, 2], 4, 1), LayerSpec::expand_conv(&[0, 1, 2], 2, 1)]).unwrap()),
        train: TrainConfig {
            schedule: SgdSchedule {
                total_steps: 25,
                ..SgdSchedule::default()
            },
            eval_every: 10,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    };
    let run = RunDir::create(run_root.path(), &config).unwrap();
    let outcome = run_training(&run, &config).unwrap();
    assert_eq!(outcome.history.len(), 3);

    let reopened = RunDir::open(run_root.path()).unwrap();
    assert_eq!(reopened.config().unwrap(), config);
    let rows = reopened.read_metrics().unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![10, 10, 20, 20, 25, 25]);
    assert!(rows.iter().all(|r| r.loss.is_some()));
    for step in [10, 20, 25] {
        assert!(reopened.checkpoint_path(step).is_file());
    }
    assert!(reopened.final_path().is_file());
    let best = reopened.load_best().unwrap();
    let best_step = outcome.best.as_ref().unwrap().step;
    assert_eq!(best.step, best_step);
    assert_eq!(best.network().unwrap(), outcome.best.unwrap().network);
    assert!(RunDir::open(data.path()).is_err());
}

#[test]
fn run_config_toml_round_trip() {
    let config = RunConfig::default();
    let text = config.to_toml_string().unwrap();
    assert_eq!(RunConfig::from_toml_str(&text).unwrap(), config);
    let partial = RunConfig::from_toml_str("arch = \"b\"\nfeatures = \"all\"\n[train]\nseed = 4\n").unwrap();
    assert_eq!(partial.network_spec().unwrap().input_features, 8);
    assert_eq!(partial.train.seed, 4);
    assert_eq!(partial.train.schedule, SgdSchedule::default());
    assert!(RunConfig::from_toml_str("arch = \"z\"").is_err());
}
