//! Regenerates the committed fixtures under `fixtures/`.
//!
//! `f1` is a 50-document toy corpus for retrieval tests. `f2` is a
//! SQuAD-style corpus generated from a small random knowledge graph of
//! cities, people and companies: every article is about one entity, facts
//! mention other entities (so questions have lexical distractors in other
//! articles), and each question has a gold paragraph and a gold answer
//! string that occurs in it.
//!
//! Usage: cargo run --example gen_fixture -- <fixtures dir>

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mindstone::corpus::{split_article, Article, Paragraph};
use mindstone::eval::GoldRecord;
use mindstone::jsonl;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_190_611;
const CITIES: usize = 40;
const PEOPLE: usize = 35;
const COMPANIES: usize = 25;
const PARAGRAPHS_PER_ARTICLE: usize = 5;
const DEV_QUESTIONS: usize = 200;

fn main() {
    let out: PathBuf = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fixtures"));
    write_f1(&out.join("f1"));
    write_f2(&out.join("f2"));
}

fn write_f1(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 1);
    let words = [
        "cat", "dog", "bird", "fish", "ran", "sat", "jumped", "slept", "mat", "tree", "house", "river", "red", "blue",
        "small", "big", "quick", "lazy", "garden", "fence",
    ];
    let mut paras = Vec::new();
    for i in 0..50 {
        let len = rng.gen_range(4..=14);
        let mut body: Vec<&str> = (0..len).map(|_| *words.choose(&mut rng).unwrap()).collect();
        if i == 7 {
            body.extend(["the", "cat", "ran", "to", "the", "cat", "mat"]);
        }
        paras.push(Paragraph::new(&format!("d{i}"), "", &body.join(" "), 0));
    }
    jsonl::write(&dir.join("paragraphs.jsonl"), &paras).unwrap();
}

struct Names {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Names {
    fn word(&mut self, syllables: std::ops::RangeInclusive<usize>) -> String {
        const ONSETS: [&str; 18] =
            ["b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "dr"];
        const VOWELS: [&str; 7] = ["a", "e", "i", "o", "u", "ae", "y"];
        const CODAS: [&str; 8] = ["", "", "n", "r", "l", "s", "th", "m"];
        loop {
            let n = self.rng.gen_range(syllables.clone());
            let mut w = String::new();
            for _ in 0..n {
                w.push_str(ONSETS.choose(&mut self.rng).unwrap());
                w.push_str(VOWELS.choose(&mut self.rng).unwrap());
                w.push_str(CODAS.choose(&mut self.rng).unwrap());
            }
            let w = capitalize(&w);
            if w.len() >= 4 && self.used.insert(w.to_lowercase()) {
                return w;
            }
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[derive(Clone)]
struct Person {
    full: String,
    short: String,
    pronoun: &'static str,
    possessive: &'static str,
}

struct World {
    cities: Vec<String>,
    people: Vec<Person>,
    companies: Vec<String>,
    /// Index into `people` of each company's founder.
    founders: Vec<usize>,
    rivers: Vec<String>,
    saints: Vec<String>,
    awards: Vec<String>,
    works: Vec<String>,
}

struct Fact {
    sentence: String,
    qas: Vec<(String, String)>,
}

fn fact(sentence: String, qas: Vec<(String, String)>) -> Fact {
    Fact { sentence, qas }
}

fn year(rng: &mut ChaCha8Rng) -> u32 {
    rng.gen_range(1100..2000)
}

fn thousands(n: u32) -> String {
    if n >= 1000 {
        format!("{},{:03}", n / 1000, n % 1000)
    } else {
        n.to_string()
    }
}

const GROUPS: [&str; 6] =
    ["Harbek merchants", "Dalvic settlers", "Ostran monks", "Pellish fishermen", "Norrow farmers", "Quessan traders"];
const INDUSTRIES: [&str; 10] = [
    "copper mining",
    "the wool trade",
    "shipbuilding",
    "glassmaking",
    "salt production",
    "paper milling",
    "horse breeding",
    "olive oil",
    "clockmaking",
    "printing",
];
const FIELDS: [&str; 10] = [
    "astronomy",
    "medicine",
    "law",
    "architecture",
    "botany",
    "chemistry",
    "music theory",
    "philosophy",
    "geology",
    "mathematics",
];
const PROFESSIONS: [&str; 8] =
    ["novelist", "painter", "engineer", "composer", "physician", "cartographer", "poet", "architect"];
const PRODUCTS: [&str; 10] = [
    "steam pumps",
    "pocket watches",
    "rail carriages",
    "printing presses",
    "copper kettles",
    "sewing machines",
    "telescopes",
    "typewriters",
    "bicycles",
    "wool blankets",
];
const FILLER: [&str; 16] = [
    "Visitors often remark on the narrow streets and the quiet squares.",
    "Records from this period are incomplete, and historians still disagree about the details.",
    "A small museum now documents this history with maps and letters.",
    "Several of the original buildings survive, although most were restored later.",
    "Local newspapers covered these events at length.",
    "The surrounding region is known for its mild winters and long summers.",
    "Much of this account comes from a chronicle written decades afterwards.",
    "Scholars have described the period as one of rapid change.",
    "The archive holds more than a thousand letters from these years.",
    "This reputation grew steadily over the following decades.",
    "Contemporary accounts praised the effort, though some critics objected.",
    "Later writers repeated the story with various embellishments.",
    "Little else is known about the early years.",
    "The details were published in a short pamphlet at the time.",
    "Traces of the old road can still be seen outside the walls.",
    "The events are commemorated by a plaque near the main gate.",
];

/// Wording varies between paragraph and question, as it does when questions
/// are written by people paraphrasing a passage.
fn pick(rng: &mut ChaCha8Rng, options: &[&str]) -> String {
    options.choose(rng).unwrap().to_string()
}

/// The subject's name about a third of the time, else a description.
fn refer(rng: &mut ChaCha8Rng, name: &str, description: &str) -> String {
    if rng.gen_bool(0.35) {
        name.to_string()
    } else {
        description.to_string()
    }
}

fn city_facts(w: &World, i: usize, rng: &mut ChaCha8Rng) -> Vec<Fact> {
    let c = &w.cities[i];
    let y = year(rng);
    let group = *GROUPS.choose(rng).unwrap();
    let river = w.rivers.choose(rng).unwrap();
    let km = rng.gen_range(3..200);
    let census = rng.gen_range(1850..1990);
    let pop = thousands(rng.gen_range(2_000..900_000));
    let industry = *INDUSTRIES.choose(rng).unwrap();
    let saint = w.saints.choose(rng).unwrap();
    let cy = year(rng);
    let mayor = w.people.choose(rng).unwrap();
    let my = rng.gen_range(1900..2000);
    let twin = loop {
        let t = w.cities.choose(rng).unwrap();
        if t != c {
            break t;
        }
    };
    let designer = w.people.choose(rng).unwrap();
    let plant = w.companies.choose(rng).unwrap();
    let py = year(rng);
    let it = |rng: &mut ChaCha8Rng| refer(rng, c, "The city");
    vec![
        fact(
            format!("{} was {} in {y} by {group}.", it(rng), pick(rng, &["founded", "established", "settled"])),
            vec![(format!("When was {c} founded?"), y.to_string()), (format!("Who founded {c}?"), group.to_string())],
        ),
        fact(
            format!("The city lies on the {river} River, about {km} kilometres from the sea."),
            vec![
                (format!("On which river does {c} lie?"), format!("{river} River")),
                (format!("How far is {c} from the sea?"), format!("{km} kilometres")),
            ],
        ),
        fact(
            format!(
                "At the census of {census}, the city {}.",
                pick(rng, &[&format!("had a population of {pop}"), &format!("counted {pop} inhabitants")])
            ),
            vec![(format!("What was the population of {c} at the census of {census}?"), pop)],
        ),
        fact(
            format!(
                "Its {} has long {} on {industry}.",
                pick(rng, &["economy", "prosperity"]),
                pick(rng, &["depended", "relied"])
            ),
            vec![(format!("What has the economy of {c} depended on?"), industry.to_string())],
        ),
        fact(
            format!("The {saint} Cathedral, completed in {cy}, dominates the old town."),
            vec![
                (format!("Which cathedral dominates the old town of {c}?"), format!("{saint} Cathedral")),
                (format!("When was the {saint} Cathedral in {c} completed?"), cy.to_string()),
            ],
        ),
        fact(
            format!(
                "Since {my} the {} has been {} by mayor {}.",
                pick(rng, &["city council", "municipal government"]),
                pick(rng, &["led", "headed"]),
                mayor.full
            ),
            vec![(format!("Who has led the city council of {c} since {my}?"), mayor.full.clone())],
        ),
        fact(
            format!(
                "{} has been {} with {twin} since a treaty signed in {}.",
                it(rng),
                pick(rng, &["twinned", "partnered"]),
                year(rng)
            ),
            vec![(format!("Which city is {c} twinned with?"), twin.clone())],
        ),
        fact(
            format!(
                "Many of its public buildings were {} by {}.",
                pick(rng, &["designed", "planned", "drawn up"]),
                designer.full
            ),
            vec![(format!("Who designed many of the public buildings of {c}?"), designer.full.clone())],
        ),
        fact(
            format!("{plant} has operated a factory in the city since {py}."),
            vec![(format!("Which company has operated a factory in {c} since {py}?"), plant.clone())],
        ),
    ]
}

fn person_facts(w: &World, i: usize, rng: &mut ChaCha8Rng) -> Vec<Fact> {
    let p = &w.people[i];
    let (full, short, he, his) = (&p.full, &p.short, p.pronoun, p.possessive);
    let born_city = w.cities.choose(rng).unwrap();
    let by = year(rng);
    let field = *FIELDS.choose(rng).unwrap();
    let uni = w.cities.choose(rng).unwrap();
    let profession = *PROFESSIONS.choose(rng).unwrap();
    let work = w.works.choose(rng).unwrap();
    let wy = by + rng.gen_range(20..50);
    let mentor = loop {
        let m = w.people.choose(rng).unwrap();
        if m.full != *full {
            break m;
        }
    };
    let years = rng.gen_range(2..12);
    let award = w.awards.choose(rng).unwrap();
    let ay = wy + rng.gen_range(1..15);
    let died_city = w.cities.choose(rng).unwrap();
    let dy = by + rng.gen_range(55..90);
    let school_city = w.cities.choose(rng).unwrap();
    let sy = by + rng.gen_range(25..60);
    let employer = w.companies.choose(rng).unwrap();
    let cyears = rng.gen_range(2..20);
    let who = |rng: &mut ChaCha8Rng| {
        let r: f64 = rng.gen();
        if r < 0.4 {
            full.clone()
        } else if r < 0.7 {
            short.clone()
        } else {
            he.to_string()
        }
    };
    vec![
        fact(
            format!("{} was born in {born_city} in {by}.", who(rng)),
            vec![
                (format!("Where was {full} born?"), born_city.clone()),
                (format!("In what year was {full} born?"), by.to_string()),
            ],
        ),
        fact(
            format!("{short} {} {field} at the University of {uni}.", pick(rng, &["studied", "read", "trained in"])),
            vec![
                (format!("What did {full} study?"), field.to_string()),
                (format!("At which university did {full} study {field}?"), format!("University of {uni}")),
            ],
        ),
        fact(
            format!("{he} became known as a {profession} after publishing {work} in {wy}."),
            vec![
                (format!("What did {full} publish in {wy}?"), work.clone()),
                (format!("When did {full} publish {work}?"), wy.to_string()),
            ],
        ),
        fact(
            format!("As a young {profession}, {short} trained under {} for {years} years.", mentor.full),
            vec![(format!("Under whom did {full} train?"), mentor.full.clone())],
        ),
        fact(
            format!("In {ay}, {short} received the {award} Prize for {his} work."),
            vec![(format!("Which prize did {full} receive in {ay}?"), format!("{award} Prize"))],
        ),
        fact(
            format!("{he} {} in {died_city} in {dy}.", pick(rng, &["died", "passed away"])),
            vec![(format!("Where did {full} die?"), died_city.clone())],
        ),
        fact(
            format!(
                "Later {} moved to {school_city}, where {} founded a school of {field} in {sy}.",
                who(rng),
                he.to_lowercase()
            ),
            vec![(format!("In which city did {full} found a school of {field}?"), school_city.clone())],
        ),
        fact(
            format!(
                "{} {} {employer} as a consultant for {cyears} years.",
                who(rng),
                pick(rng, &["worked for", "advised"])
            ),
            vec![(format!("For which company did {full} work as a consultant?"), employer.clone())],
        ),
    ]
}

fn company_facts(w: &World, i: usize, rng: &mut ChaCha8Rng) -> Vec<Fact> {
    let k = &w.companies[i];
    let fy = year(rng);
    let city = w.cities.choose(rng).unwrap();
    let founder = &w.people[w.founders[i]];
    let product = *PRODUCTS.choose(rng).unwrap();
    let ey = fy + rng.gen_range(10..80);
    let workers = thousands(rng.gen_range(50..40_000));
    let hq = w.cities.choose(rng).unwrap();
    let hy = fy + rng.gen_range(5..100);
    let ceo = w.people.choose(rng).unwrap();
    let cy = fy + rng.gen_range(10..60);
    let cy2 = cy + rng.gen_range(3..25);
    let second = w.cities.choose(rng).unwrap();
    let sy = fy + rng.gen_range(5..80);
    let it = |rng: &mut ChaCha8Rng| refer(rng, k, "The company");
    vec![
        fact(
            format!(
                "{} was {} in {city} in {fy} by {}.",
                it(rng),
                pick(rng, &["founded", "established", "started"]),
                founder.full
            ),
            vec![
                (format!("Who founded {k}?"), founder.full.clone()),
                (format!("When was {k} founded?"), fy.to_string()),
                (format!("In which city was {k} founded?"), city.clone()),
            ],
        ),
        fact(
            format!("The company became best known for its {product}."),
            vec![(format!("What is {k} best known for?"), product.to_string())],
        ),
        fact(
            format!(
                "By {ey} it {}.",
                pick(rng, &[&format!("employed {workers} workers"), &format!("had a staff of {workers}")])
            ),
            vec![(format!("How many workers did {k} employ by {ey}?"), workers)],
        ),
        fact(
            format!("Its {} moved to {hq} in {hy}.", pick(rng, &["headquarters", "head office", "main office"])),
            vec![(format!("Where did {k} move its headquarters in {hy}?"), hq.clone())],
        ),
        fact(
            format!("{} served as chief executive from {cy} to {cy2}.", ceo.full),
            vec![(format!("Who served as chief executive of {k} from {cy}?"), ceo.full.clone())],
        ),
        fact(
            format!("A second {} opened in {second} in {sy}.", pick(rng, &["factory", "plant", "works"])),
            vec![(format!("Where did {k} open a second factory?"), second.clone())],
        ),
    ]
}

fn write_f2(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut names = Names { rng: ChaCha8Rng::seed_from_u64(SEED), used: BTreeSet::new() };
    let cities: Vec<String> = (0..CITIES).map(|_| names.word(2..=3)).collect();
    // Families share surnames and first names repeat, as do founders' names
    // in company names and city names in river names.
    let firsts: Vec<String> = (0..18).map(|_| names.word(2..=2)).collect();
    let surnames: Vec<String> = (0..12).map(|_| names.word(2..=3)).collect();
    let mut full_names = BTreeSet::new();
    let mut people = Vec::new();
    while people.len() < PEOPLE {
        let first = firsts.choose(&mut names.rng).unwrap();
        let last = surnames.choose(&mut names.rng).unwrap();
        let full = format!("{first} {last}");
        if !full_names.insert(full.clone()) {
            continue;
        }
        let (pronoun, possessive) = if people.len() % 2 == 0 { ("He", "his") } else { ("She", "her") };
        people.push(Person { full, short: last.clone(), pronoun, possessive });
    }
    let mut company_names = BTreeSet::new();
    let mut companies = Vec::new();
    let mut founders = Vec::new();
    while companies.len() < COMPANIES {
        let f = names.rng.gen_range(0..PEOPLE);
        let suffix = ["Works", "Company", "Foundry", "Mills", "Brothers"].choose(&mut names.rng).unwrap();
        let name = format!("{} {suffix}", people[f].short);
        if company_names.insert(name.clone()) {
            companies.push(name);
            founders.push(f);
        }
    }
    let rivers = (0..16).map(|i| if i % 2 == 0 { cities[i].clone() } else { names.word(2..=2) }).collect();
    let saints = (0..15).map(|_| format!("Saint {}", names.word(2..=2))).collect();
    let awards = (0..12).map(|_| names.word(2..=3)).collect();
    let works = (0..40)
        .map(|_| {
            let noun = ["Harbour", "Winter", "Garden", "Mirror", "Road", "Lantern", "Orchard", "Tower"];
            let adj = ["Silent", "Last", "Northern", "Hidden", "Broken", "Golden", "Distant"];
            let mut r = ChaCha8Rng::seed_from_u64(names.rng.gen());
            format!("The {} {} of {}", adj.choose(&mut r).unwrap(), noun.choose(&mut r).unwrap(), names.word(2..=2))
        })
        .collect();
    let world = World { cities, people, companies, founders, rivers, saints, awards, works };

    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut articles = Vec::new();
    let mut qas: Vec<GoldRecord> = Vec::new();
    let subjects = (0..CITIES)
        .map(|i| (world.cities[i].clone(), 0, i))
        .chain((0..PEOPLE).map(|i| (world.people[i].full.clone(), 1, i)))
        .chain((0..COMPANIES).map(|i| (world.companies[i].clone(), 2, i)));
    for (a_idx, (title, kind, i)) in subjects.enumerate() {
        let mut facts = match kind {
            0 => city_facts(&world, i, &mut rng),
            1 => person_facts(&world, i, &mut rng),
            _ => company_facts(&world, i, &mut rng),
        };
        facts.shuffle(&mut rng);
        // Every paragraph gets at least one fact; the rest are spread randomly.
        let mut groups: Vec<Vec<Fact>> = (0..PARAGRAPHS_PER_ARTICLE).map(|_| Vec::new()).collect();
        for (j, f) in facts.into_iter().enumerate() {
            let g = if j < PARAGRAPHS_PER_ARTICLE { j } else { rng.gen_range(0..PARAGRAPHS_PER_ARTICLE) };
            groups[g].push(f);
        }
        let article_id = format!("a{a_idx:03}");
        let mut bodies = Vec::new();
        let mut pending = Vec::new();
        for group in groups {
            let mut sentences: Vec<String> = group.iter().map(|f| f.sentence.clone()).collect();
            for _ in 0..rng.gen_range(1..=3) {
                let filler = FILLER.choose(&mut rng).unwrap().to_string();
                let at = rng.gen_range(0..=sentences.len());
                sentences.insert(at, filler);
            }
            let body = sentences.join(" ");
            for f in &group {
                for (q, a) in &f.qas {
                    pending.push((q.clone(), a.clone(), body.clone()));
                }
            }
            bodies.push(body);
        }
        for (q, a, body) in pending {
            qas.push(GoldRecord {
                qid: String::new(),
                question: q,
                answers: vec![a],
                gold_article_id: Some(article_id.clone()),
                gold_paragraph: Some(body),
            });
        }
        articles.push(Article { article_id, title, body: bodies.join("\n\n") });
    }

    let paragraphs: Vec<Paragraph> = articles.iter().flat_map(split_article).collect();
    qas.shuffle(&mut rng);
    for (n, r) in qas.iter_mut().enumerate() {
        r.qid = format!("q{n:04}");
    }
    let (dev, train) = qas.split_at(DEV_QUESTIONS);
    jsonl::write(&dir.join("articles.jsonl"), &articles).unwrap();
    jsonl::write(&dir.join("paragraphs.jsonl"), &paragraphs).unwrap();
    jsonl::write(&dir.join("questions_dev.jsonl"), dev).unwrap();
    jsonl::write(&dir.join("questions_train.jsonl"), train).unwrap();
    eprintln!(
        "f2: {} articles, {} paragraphs, {} dev / {} train questions",
        articles.len(),
        paragraphs.len(),
        dev.len(),
        train.len()
    );
}
