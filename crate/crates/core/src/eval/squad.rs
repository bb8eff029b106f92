//! SQuAD v1.1 JSON to articles + questions.

use std::collections::HashSet;

use serde::Deserialize;

use super::GoldRecord;
use crate::corpus::Article;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Debug, Deserialize)]
struct SquadArticle {
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Debug, Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Debug, Deserialize)]
struct SquadAnswer {
    text: String,
}

/// One article per SQuAD title (paragraphs joined by blank lines, so that
/// splitting the article gives back the contexts in order) and one record per
/// question. Answer texts are de-duplicated in first-seen order; questions
/// without a non-blank answer are dropped.
pub fn convert(json: &str) -> Result<(Vec<Article>, Vec<GoldRecord>)> {
    let file: SquadFile = serde_json::from_str(json)?;
    let mut articles = Vec::with_capacity(file.data.len());
    let mut records = Vec::new();
    let mut used_ids = HashSet::new();
    for (i, a) in file.data.iter().enumerate() {
        let mut article_id: String =
            a.title.chars().map(|c| if c.is_whitespace() || c == '#' { '_' } else { c }).collect();
        if article_id.is_empty() || !used_ids.insert(article_id.clone()) {
            article_id = format!("{article_id}_{i}");
            used_ids.insert(article_id.clone());
        }
        let contexts: Vec<String> = a.paragraphs.iter().map(|p| collapse_blank_lines(p.context.trim())).collect();
        if contexts.iter().any(String::is_empty) {
            return Err(Error::invalid(format!("article {:?} has an empty context", a.title)));
        }
        for (p, context) in a.paragraphs.iter().zip(&contexts) {
            for qa in &p.qas {
                let mut seen = HashSet::new();
                let answers: Vec<String> = qa
                    .answers
                    .iter()
                    .map(|x| x.text.trim().to_string())
                    .filter(|t| !t.is_empty() && seen.insert(t.clone()))
                    .collect();
                if answers.is_empty() {
                    continue;
                }
                records.push(GoldRecord {
                    qid: qa.id.clone(),
                    question: qa.question.trim().to_string(),
                    answers,
                    gold_article_id: Some(article_id.clone()),
                    gold_paragraph: Some(context.clone()),
                });
            }
        }
        articles.push(Article { article_id, title: a.title.clone(), body: contexts.join("\n\n") });
    }
    Ok((articles, records))
}

fn collapse_blank_lines(text: &str) -> String {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_article;

    #[test]
    fn converts_and_round_trips_paragraphs() {
        let json = r#"{"version":"1.1","data":[{"title":"Super Bowl 50","paragraphs":[
            {"context":"First context.","qas":[{"id":"q1","question":"Which? ","answers":[{"answer_start":0,"text":"First"},{"answer_start":0,"text":"First"}]}]},
            {"context":"Second\n\ncontext.","qas":[{"id":"q2","question":"Empty?","answers":[]}]}]}]}"#;
        let (articles, records) = convert(json).unwrap();
        assert_eq!(articles[0].article_id, "Super_Bowl_50");
        let paras = split_article(&articles[0]);
        assert_eq!(paras.len(), 2);
        assert_eq!(paras[1].body, "Second\ncontext.");
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].answers, ["First"]);
        assert_eq!(records[0].question, "Which?");
        assert_eq!(records[0].gold_paragraph.as_deref(), Some("First context."));
    }
}
