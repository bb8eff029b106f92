mod common;

use std::collections::BTreeMap;

use common::*;
use mindstone::corpus::{raw_tokens, Paragraph};
use mindstone::eval::metrics::f1;
use mindstone::scorers::dataset::{
    build_dataset_aug1, build_dataset_aug2, build_dataset_finetune, paragraphs_by_article, resolve_gold_paragraph,
    RankExample,
};
use mindstone::scorers::{self, BuiltinRanker, BuiltinRankerModel, BuiltinReader, OracleRanker, TruncationLimits};

#[test]
fn builtin_reader_finds_gold_answers() {
    let f = f2();
    let reader = BuiltinReader::new(f.index.clone());
    let by_article = paragraphs_by_article(f.index.paragraphs());
    let limits = TruncationLimits::default();
    let mut good = 0;
    for r in &f.dev {
        let gold = resolve_gold_paragraph(r, &by_article).expect("gold paragraph");
        let spans = scorers::read(&reader, &r.question, gold, 1, &limits).unwrap();
        assert_eq!(spans.len(), 1);
        if f1(&spans[0].text, &r.answers) >= 0.5 {
            good += 1;
        }
    }
    let frac = good as f64 / f.dev.len() as f64;
    assert!(frac >= 0.7, "top span F1 >= 0.5 on {frac:.3} of pairs");
}

fn sign_agreement(model: &BuiltinRankerModel, held_out: &[RankExample]) -> f64 {
    let f = f2();
    let ranker = BuiltinRanker::new(model.clone(), f.index.clone()).unwrap();
    let limits = TruncationLimits::default();
    let agree = held_out
        .iter()
        .filter(|ex| {
            let p = f.index.paragraph_by_id(&ex.para_id).unwrap();
            let s = scorers::rank(&ranker, &ex.question, p, &limits).unwrap();
            (s > 0.0) == (ex.label == 1)
        })
        .count();
    agree as f64 / held_out.len() as f64
}

// Each phase is checked on dev questions drawn the way its training data was.
#[test]
fn trained_ranker_signs_agree_on_held_out_questions() {
    let f = f2();
    let trained = f2_ranker();
    let finetune_dev = build_dataset_finetune(&f.dev, f.index.paragraphs(), 1);
    let frac = sign_agreement(&trained.phase_one, &finetune_dev);
    assert!(frac >= 0.8, "phase one: sign agreement {frac:.3}");

    let phase_one = BuiltinRanker::new(trained.phase_one.clone(), f.index.clone()).unwrap();
    let aug2_dev = build_dataset_aug2(&f.dev, &f.index, &phase_one, &TruncationLimits::default(), 100, 5).unwrap();
    let frac = sign_agreement(&trained.model, &aug2_dev);
    assert!(frac >= 0.8, "final model: sign agreement {frac:.3}");
}

#[test]
fn finetune_dataset_counts() {
    let f = f2();
    let ds = build_dataset_finetune(&f.train, f.index.paragraphs(), 0);
    let pos = ds.iter().filter(|e| e.label == 1).count();
    let neg = ds.len() - pos;
    assert_eq!(pos, f.train.len());
    assert!(neg <= pos && neg > 0);
    let answers: BTreeMap<&str, &[String]> =
        f.train.iter().map(|r| (r.question.as_str(), r.answers.as_slice())).collect();
    for ex in &ds {
        assert_eq!(ex.label == 1, reference_contains(&ex.text, answers[ex.question.as_str()]), "{}", ex.para_id);
    }
}

#[test]
fn oracle_aug2_has_more_positives_than_aug1() {
    let f = f2();
    let oracle = OracleRanker::new(gold_pairs(&f.dev));
    let aug1 = build_dataset_aug1(&f.dev, &f.index, 5);
    let aug2 = build_dataset_aug2(&f.dev, &f.index, &oracle, &TruncationLimits::default(), 100, 5).unwrap();
    let frac = |d: &[RankExample]| d.iter().filter(|e| e.label == 1).count() as f64 / d.len() as f64;
    assert!(frac(&aug2) >= frac(&aug1), "{} < {}", frac(&aug2), frac(&aug1));
    for chunk in aug2.chunk_by(|a, b| a.question == b.question) {
        assert!(chunk.windows(2).all(|w| w[0].label >= w[1].label), "positives first");
    }
}

#[test]
fn ranker_ignores_text_past_the_limit() {
    let f = f2();
    let ranker = BuiltinRanker::new(f2_ranker().model.clone(), f.index.clone()).unwrap();
    let limits = TruncationLimits { ranker_para_tokens: 12, reader_total_tokens: 20 };
    let reader = BuiltinReader::new(f.index.clone());
    let q = &f.dev[0].question;
    for p in f.index.paragraphs().iter().take(40) {
        let longer = Paragraph::with_id(
            p.para_id.clone(),
            p.article_id.clone(),
            p.title.clone(),
            format!("{} census river founded mayor factory", p.body),
            p.position,
        );
        if raw_tokens(p.full_text()).len() < 12 {
            continue;
        }
        let a = scorers::rank(&ranker, q, p, &limits).unwrap();
        let b = scorers::rank(&ranker, q, &longer, &limits).unwrap();
        assert_eq!(a, b);
        let (_, text) = scorers::reader_inputs(q, p, &limits);
        for span in scorers::read(&reader, q, p, 3, &limits).unwrap() {
            assert!(span.end_char <= text.chars().count());
            assert!(text.contains(&span.text));
        }
    }
}
