use std::sync::OnceLock;

use claire::augment::{generate_counterfactuals, AugmentedSet, Regularizer};
use claire::data::Dataset;
use claire::fairrep::{total_loss, train, train_logged, ClaireModel, HyperParams};
use claire::harness::{DataSource, ExperimentConfig, Repetition};

struct Fixture {
    train: Dataset,
    augmented: AugmentedSet,
    hp: HyperParams,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let hp = HyperParams {
            epochs: 200,
            vae_epochs: 200,
            ..HyperParams::default()
        };
        let cfg = ExperimentConfig {
            data: DataSource::Synthetic { n: 1500 },
            hp: hp.clone(),
            ..ExperimentConfig::default()
        };
        let mut rep = Repetition::new(&cfg, 0).unwrap();
        let vae = rep.vae_for(Regularizer::Mmd, &hp).unwrap();
        let augmented = generate_counterfactuals(&vae, &rep.train, hp.k_samples, 1).unwrap();
        Fixture {
            train: rep.train.clone(),
            augmented,
            hp,
        }
    })
}

fn final_risk(beta: f64, lambda: f64) -> f64 {
    let f = fixture();
    let hp = HyperParams { beta, lambda, ..f.hp.clone() };
    let (_, log) = train_logged(&f.train, &f.augmented, None, &hp).unwrap();
    *log.risk.last().unwrap()
}

#[test]
fn constraints_cost_training_risk() {
    let free = final_risk(0.0, 0.0);
    for (beta, lambda) in [(5.0, 0.0), (0.0, 1.0), (5.0, 1.0)] {
        let constrained = final_risk(beta, lambda);
        println!("beta {beta}, lambda {lambda}: risk {constrained:.4} vs unconstrained {free:.4}");
        assert!(free <= constrained);
    }
}

fn duplicate_group(data: &Dataset, aug: &AugmentedSet, s: usize) -> (Dataset, AugmentedSet) {
    let mut rows: Vec<usize> = (0..data.len()).collect();
    rows.extend(data.groups()[s].iter().copied());
    let aug = AugmentedSet {
        x: aug.x.iter().map(|m| m.select_rows(&rows)).collect(),
        y: aug.y.iter().map(|y| rows.iter().map(|&r| y[r]).collect()).collect(),
        feature_names: aug.feature_names.clone(),
    };
    (data.subset(&rows), aug)
}

#[test]
fn subgroup_size_does_not_weight_the_objective() {
    let f = fixture();
    let hp = HyperParams {
        beta: 0.0,
        epochs: 20,
        ..f.hp.clone()
    };
    let model: ClaireModel = train(&f.train, &f.augmented, &hp).unwrap();
    let base = total_loss(&model, &f.train, &f.augmented, &hp).unwrap();
    for s in 0..f.train.num_sensitive {
        let (data, aug) = duplicate_group(&f.train, &f.augmented, s);
        let doubled = total_loss(&model, &data, &aug, &hp).unwrap();
        assert!((doubled - base).abs() < 1e-9 * base.abs().max(1.0), "group {s}: {doubled} vs {base}");
    }
    // the constraint averages over instances, so it does see duplicates
    let hp = HyperParams { beta: 5.0, ..hp };
    let (data, aug) = duplicate_group(&f.train, &f.augmented, 3);
    assert_ne!(
        total_loss(&model, &data, &aug, &hp).unwrap(),
        total_loss(&model, &f.train, &f.augmented, &hp).unwrap()
    );
}

#[test]
fn model_json_round_trips_predictions() {
    let f = fixture();
    let hp = HyperParams { epochs: 5, ..f.hp.clone() };
    let model = train(&f.train, &f.augmented, &hp).unwrap();
    let back = ClaireModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(model.predict_matrix(&f.train.x).unwrap(), back.predict_matrix(&f.train.x).unwrap());
}
