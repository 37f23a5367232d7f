//! Template-generated trading dialogues with three speakers.
//!
//! Speakers ask for resources, others answer, askers acknowledge the
//! answers they receive, and answerers sometimes elaborate. Up to two
//! threads are interleaved, so the gold structure is often non-projective.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RawDialogue, RawEdu, RawRelation};

pub const QAP: &str = "Question-answer_pair";
pub const ACKNOWLEDGEMENT: &str = "Acknowledgement";
pub const ELABORATION: &str = "Elaboration";

const NAMES: &[&str] = &["alice", "bob", "carol", "dave", "erin", "frank"];
const RESOURCES: &[&str] = &["wood", "clay", "sheep", "wheat", "ore"];
const QUESTIONS: &[&str] = &["anyone has {r} ?", "can i get some {r} ?", "who can spare {r} ?"];
const ANSWERS: &[&str] = &["i have {r}", "sorry , no {r} here", "you can have my {r}"];
const ACKS: &[&str] = &["thanks !", "ok , deal", "great :)"];
const ELABORATIONS: &[&str] = &["but i need {o} for it", "only one {r} though", "it's my last {r}"];

struct Thread {
    asker: usize,
    resource: &'static str,
    question: usize,
    answer: Option<(usize, usize)>,
    acked: bool,
    elaborated: bool,
}

fn fill(template: &str, r: &str, o: &str) -> String {
    template.replace("{r}", r).replace("{o}", o)
}

/// Generates `count` dialogues of 4 to 8 EDUs each.
pub fn generate(count: usize, seed: u64) -> Vec<RawDialogue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|k| dialogue(k, &mut rng)).collect()
}

fn dialogue(k: usize, rng: &mut ChaCha8Rng) -> RawDialogue {
    let speakers: Vec<&str> = NAMES.choose_multiple(rng, 3).copied().collect();
    let target_len = rng.gen_range(4..=8);
    let mut edus: Vec<RawEdu> = Vec::new();
    let mut relations = Vec::new();
    let mut threads: Vec<Thread> = Vec::new();

    let push = |edus: &mut Vec<RawEdu>, speaker: usize, text: String| {
        edus.push(RawEdu {
            speaker: speakers[speaker].to_owned(),
            text,
        });
        edus.len()
    };
    let link = |relations: &mut Vec<RawRelation>, x: usize, y: usize, t: &str| {
        relations.push(RawRelation {
            x: x.to_string(),
            y: y.to_string(),
            rtype: t.to_owned(),
        })
    };

    while edus.len() < target_len {
        let open: Vec<usize> = (0..threads.len()).filter(|&t| threads[t].answer.is_none()).collect();
        let ackable: Vec<usize> = (0..threads.len())
            .filter(|&t| threads[t].answer.is_some() && !threads[t].acked)
            .collect();
        let elaboratable: Vec<usize> = (0..threads.len())
            .filter(|&t| threads[t].answer.is_some() && !threads[t].elaborated && !threads[t].acked)
            .collect();
        let can_ask = open.len() + ackable.len() < 2 && threads.len() < 3;

        let mut choices = Vec::new();
        if can_ask || threads.is_empty() {
            choices.push(0);
        }
        if !open.is_empty() {
            choices.push(1);
            choices.push(1);
        }
        if !ackable.is_empty() {
            choices.push(2);
        }
        if !elaboratable.is_empty() {
            choices.push(3);
        }
        if choices.is_empty() {
            choices.push(0);
        }

        match *choices.choose(rng).unwrap() {
            0 => {
                let busy: Vec<usize> = threads.iter().filter(|t| !t.acked).map(|t| t.asker).collect();
                let asker = (0..3)
                    .filter(|s| !busy.contains(s))
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .copied()
                    .unwrap_or(0);
                let used: Vec<&str> = threads.iter().map(|t| t.resource).collect();
                let free: Vec<&'static str> = RESOURCES.iter().copied().filter(|r| !used.contains(r)).collect();
                let resource = *free.choose(rng).unwrap();
                let text = fill(QUESTIONS.choose(rng).unwrap(), resource, "");
                let question = push(&mut edus, asker, text);
                threads.push(Thread {
                    asker,
                    resource,
                    question,
                    answer: None,
                    acked: false,
                    elaborated: false,
                });
            }
            1 => {
                let t = *open.choose(rng).unwrap();
                let asker = threads[t].asker;
                let who = *[0, 1, 2]
                    .iter()
                    .filter(|&&s| s != asker)
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .unwrap();
                let text = fill(ANSWERS.choose(rng).unwrap(), threads[t].resource, "");
                let a = push(&mut edus, *who, text);
                link(&mut relations, threads[t].question, a, QAP);
                threads[t].answer = Some((a, *who));
            }
            2 => {
                let t = *ackable.choose(rng).unwrap();
                let text = ACKS.choose(rng).unwrap().to_string();
                let a = push(&mut edus, threads[t].asker, text);
                link(&mut relations, threads[t].answer.unwrap().0, a, ACKNOWLEDGEMENT);
                threads[t].acked = true;
            }
            _ => {
                let t = *elaboratable.choose(rng).unwrap();
                let (ans, who) = threads[t].answer.unwrap();
                let other = RESOURCES.iter().copied().find(|r| *r != threads[t].resource).unwrap();
                let text = fill(ELABORATIONS.choose(rng).unwrap(), threads[t].resource, other);
                let e = push(&mut edus, who, text);
                link(&mut relations, ans, e, ELABORATION);
                threads[t].elaborated = true;
            }
        }
    }

    RawDialogue {
        id: format!("synthetic-{:03}", k),
        edus,
        relations,
        cdus: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::preprocess;

    #[test]
    fn shape_of_generated_corpus() {
        let raws = generate(20, 7);
        assert_eq!(raws.len(), 20);
        for r in &raws {
            assert!((4..=8).contains(&r.edus.len()), "{}", r.edus.len());
            let d = preprocess(r).unwrap();
            assert!(d.speakers().len() <= 3);
            for (i, g) in d.gold_parents().iter().enumerate() {
                assert!(g.parent < i + 1);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(5, 3), generate(5, 3));
        assert_ne!(generate(5, 3), generate(5, 4));
    }
}
