//! Seeded generators for synthetic corpora and estimate requests.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{CohortFilter, IngestRow};
use crate::elicitation::{PointEstimator, PoolingMode};
use crate::wire::{EstimateRequestWire, OpinionWire, PoolingWire};

pub const CLASSES: [&str; 4] = [
    "Apelação Cível",
    "Recurso Inominado",
    "Agravo de Instrumento",
    "Embargos Infringentes",
];
pub const SUBJECTS: [&str; 6] = [
    "inscrição indevida",
    "plano de saúde",
    "transporte aéreo",
    "telefonia",
    "acidente de trânsito",
    "erro médico",
];
pub const COUNTIES: [&str; 5] = [
    "Porto Alegre",
    "Canoas",
    "Pelotas",
    "Caxias do Sul",
    "Santa Maria",
];
pub const JUDGES: [&str; 8] = [
    "Des. A", "Des. B", "Des. C", "Des. D", "Des. E", "Des. F", "Des. G", "Des. H",
];

fn first_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date")
}

const DAYS: i64 = 365 * 8;

/// The five-value cohort {1000, 2000, 3000, 4000, 5000} reais, one class,
/// one subject.
pub fn fixture_rows() -> Vec<IngestRow> {
    (1..=5)
        .map(|i| IngestRow {
            case_id: format!("fx-{i}"),
            county: "Porto Alegre".into(),
            judge: format!("Des. {i}"),
            decision_date: first_day() + Duration::days(i),
            case_class: "Apelação Cível".into(),
            subjects: vec!["inscrição indevida".into()],
            ementa: "Dano moral.".into(),
            inteiro_teor: None,
            indemnity_minor_units: Some(i * 100_000),
        })
        .collect()
}

/// Row `i` of a deterministic synthetic corpus. Most rows carry an explicit
/// amount; every tenth relies on extraction from the headnote, and every
/// fiftieth has no amount at all.
pub fn synthetic_row(seed: u64, i: u64) -> IngestRow {
    use rand::SeedableRng;
    let mut rng =
        rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let amount: i64 = rng.gen_range(50_000..=5_000_000);
    let n_subjects = rng.gen_range(1..=2);
    let subjects: Vec<String> = SUBJECTS
        .choose_multiple(&mut rng, n_subjects)
        .map(|s| s.to_string())
        .collect();
    let (ementa, provided) = match i % 50 {
        0 => (
            "APELAÇÃO CÍVEL. Dano moral não configurado. Sentença mantida.".to_string(),
            None,
        ),
        k if k % 10 == 5 => (
            format!(
                "APELAÇÃO CÍVEL. Indenização por danos morais fixada em {}.",
                crate::Money(amount / 100 * 100)
            ),
            None,
        ),
        _ => ("APELAÇÃO CÍVEL. Dano moral.".to_string(), Some(amount)),
    };
    IngestRow {
        case_id: format!("s{seed}-{i:09}"),
        county: COUNTIES.choose(&mut rng).expect("non-empty").to_string(),
        judge: JUDGES.choose(&mut rng).expect("non-empty").to_string(),
        decision_date: first_day() + Duration::days(rng.gen_range(0..DAYS)),
        case_class: CLASSES.choose(&mut rng).expect("non-empty").to_string(),
        subjects,
        ementa,
        inteiro_teor: None,
        indemnity_minor_units: provided,
    }
}

fn maybe_set<R: Rng>(rng: &mut R, items: &[&str], p: f64) -> Option<BTreeSet<String>> {
    if !rng.gen_bool(p) {
        return None;
    }
    let k = rng.gen_range(1..=items.len().min(3));
    Some(
        items
            .choose_multiple(rng, k)
            .map(|s| s.to_string())
            .collect(),
    )
}

/// A random filter over the synthetic vocabulary.
pub fn random_filter<R: Rng>(rng: &mut R) -> CohortFilter {
    let mut f = CohortFilter {
        classes: maybe_set(rng, &CLASSES, 0.3),
        subjects: maybe_set(rng, &SUBJECTS, 0.3),
        counties: maybe_set(rng, &COUNTIES, 0.2),
        judges: maybe_set(rng, &JUDGES, 0.2),
        ..Default::default()
    };
    if rng.gen_bool(0.3) {
        let a = rng.gen_range(0..DAYS);
        let b = rng.gen_range(a..=DAYS);
        f.date_from = Some(first_day() + Duration::days(a));
        if rng.gen_bool(0.7) {
            f.date_to = Some(first_day() + Duration::days(b));
        }
    }
    f
}

/// A random, mostly valid estimate request. A few percent are invalid
/// on purpose (conflicting opinion fields or out-of-range numbers).
pub fn random_request<R: Rng>(rng: &mut R) -> EstimateRequestWire {
    let mut opinion = match rng.gen_range(0..10) {
        0..=5 => OpinionWire {
            scale: Some(rng.gen_range(0..=10)),
            concentration: rng.gen_bool(0.5).then(|| round3(rng.gen_range(0.5..40.0))),
            ..Default::default()
        },
        6..=8 => OpinionWire {
            alpha: Some(round3(rng.gen_range(0.5..30.0))),
            beta: Some(round3(rng.gen_range(0.5..30.0))),
            ..Default::default()
        },
        _ => OpinionWire {
            auto: Some(true),
            scale: rng.gen_bool(0.5).then(|| rng.gen_range(0..=10)),
            ..Default::default()
        },
    };
    let mut interval_mass = rng.gen_bool(0.3).then(|| round3(rng.gen_range(0.5..0.99)));
    match rng.gen_range(0..40) {
        0 => opinion.alpha = Some(2.0),
        1 => interval_mass = Some(1.5),
        _ => {}
    }
    let pooling = PoolingWire {
        mode: rng.gen_bool(0.8).then(|| {
            if rng.gen_bool(0.5) {
                PoolingMode::Pooled
            } else {
                PoolingMode::PriorOnly
            }
        }),
        data_weight: rng.gen_bool(0.4).then(|| round3(rng.gen_range(0.0..=1.0))),
    };
    EstimateRequestWire {
        filter: random_filter(rng),
        opinion,
        pooling,
        calibration_minor_units: rng.gen_bool(0.4).then(|| rng.gen_range(-500_000..500_000)),
        point_estimator: rng.gen_bool(0.3).then(|| {
            if rng.gen_bool(0.5) {
                PointEstimator::PosteriorMean
            } else {
                PointEstimator::PosteriorMode
            }
        }),
        interval_mass,
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}
