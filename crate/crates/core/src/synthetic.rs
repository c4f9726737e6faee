//! Deterministic generator for a small Vietnamese-style treebank with role
//! annotation and matching word embeddings.
//!
//! Sentences follow a handful of clause shapes (transitive, fronted temporal,
//! passive, reported speech with an embedded clause, intransitive motion).
//! Every gold argument is a sister of the predicate or of one of its
//! ancestors, so it is reachable by constituent extraction. Temporal and
//! directional adjuncts share the preposition `từ`, so only their function
//! tag tells them apart in that case. A few reported-speech sentences carry
//! two annotated predicates and are removed by single-predicate filtering.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Role;
use crate::treebank::Span;

const PERSONS: &[&str] = &["Nam", "Lan", "Hùng", "Mai", "bà", "ông", "cô giáo", "bác sĩ", "anh Tuấn", "chị Hoa"];
const PRONOUNS: &[&str] = &["tôi", "nó", "họ", "chúng tôi"];
const OBJECTS: &[&str] = &["bóng", "sách", "cơm", "nhà", "xe", "thư", "áo", "bánh"];
const TRANSITIVE: &[&str] = &["đá", "đọc", "ăn", "mua", "viết", "xây", "sửa", "gửi"];
const PASSIVE_VERBS: &[&str] = &["khen", "phạt", "mời", "chọn"];
const PASSIVE_MARKERS: &[&str] = &["bị", "được"];
const SPEECH: &[&str] = &["nói", "nghĩ", "biết"];
const MOTION: &[&str] = &["đi", "chạy", "bay"];
const TIME_PREPS: &[&str] = &["vào", "từ", "trong"];
const TIMES: &[&str] = &["hôm qua", "sáng nay", "năm ngoái", "tối qua"];
const DIR_PREPS: &[&str] = &["đến", "từ", "về"];
const PLACES: &[&str] = &["trường", "chợ", "Hà Nội", "công viên"];
const MANNERS: &[&str] = &["nhanh", "cẩn thận", "chậm"];

/// Generated corpus files, ready to be written out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub trees: String,
    pub props: String,
    pub embeddings: String,
}

/// A bracketed fragment with the token span it covers.
struct Frag {
    text: String,
    span: Span,
}

struct Builder {
    len: usize,
}

impl Builder {
    fn leaf(&mut self, label: &str, word: &str) -> Frag {
        let span = Span::new(self.len, self.len + 1);
        self.len += 1;
        Frag {
            text: format!("({label} {})", word.replace(' ', "_")),
            span,
        }
    }

    fn node(label: &str, kids: Vec<Frag>) -> Frag {
        let span = Span::new(kids[0].span.start, kids[kids.len() - 1].span.end);
        let inner: Vec<String> = kids.into_iter().map(|k| k.text).collect();
        Frag {
            text: format!("({label} {})", inner.join(" ")),
            span,
        }
    }
}

struct Clause {
    tree: Frag,
    /// (predicate index, arguments) per annotated predicate.
    props: Vec<(usize, Vec<(Role, Span)>)>,
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty word list")
}

fn subject(b: &mut Builder, rng: &mut ChaCha8Rng) -> Frag {
    let leaf = if rng.gen_bool(0.25) {
        b.leaf("P-H", pick(rng, PRONOUNS))
    } else {
        b.leaf("N-H", pick(rng, PERSONS))
    };
    Builder::node("NP-SUB", vec![leaf])
}

fn object(b: &mut Builder, rng: &mut ChaCha8Rng) -> Frag {
    let head = b.leaf("N-H", pick(rng, OBJECTS));
    if rng.gen_bool(0.3) {
        let adj = b.leaf("A", if rng.gen_bool(0.5) { "mới" } else { "cũ" });
        Builder::node("NP", vec![head, adj])
    } else {
        Builder::node("NP", vec![head])
    }
}

fn temporal(b: &mut Builder, rng: &mut ChaCha8Rng) -> Frag {
    let prep = b.leaf("E-H", pick(rng, TIME_PREPS));
    let noun = b.leaf("N-H", pick(rng, TIMES));
    Builder::node("PP-TMP", vec![prep, Builder::node("NP", vec![noun])])
}

fn directional(b: &mut Builder, rng: &mut ChaCha8Rng) -> Frag {
    let prep = b.leaf("E-H", pick(rng, DIR_PREPS));
    let noun = b.leaf("N-H", pick(rng, PLACES));
    Builder::node("PP-DIR", vec![prep, Builder::node("NP", vec![noun])])
}

fn manner(b: &mut Builder, rng: &mut ChaCha8Rng) -> Frag {
    Builder::node("AP-MNR", vec![b.leaf("A-H", pick(rng, MANNERS))])
}

/// Subject, optional negation, verb, object and an optional adjunct; or the
/// same with a fronted temporal phrase.
fn transitive(b: &mut Builder, rng: &mut ChaCha8Rng) -> Clause {
    let mut args = Vec::new();
    let mut top = Vec::new();
    if rng.gen_bool(0.2) {
        let t = temporal(b, rng);
        args.push((Role::ArgMTmp, t.span));
        top.push(t);
    }
    let subj = subject(b, rng);
    args.push((Role::Arg0, subj.span));
    let mut vp = Vec::new();
    if rng.gen_bool(0.2) {
        let neg = b.leaf("R", "không");
        args.push((Role::ArgMNeg, neg.span));
        vp.push(neg);
    }
    let verb = b.leaf("V-H", pick(rng, TRANSITIVE));
    let pred = verb.span.start;
    vp.push(verb);
    let obj = object(b, rng);
    args.push((Role::Arg1, obj.span));
    vp.push(obj);
    if top.is_empty() {
        let adjunct = match rng.gen_range(0..4) {
            0 => Some((Role::ArgMTmp, temporal(b, rng))),
            1 => Some((Role::ArgMDir, directional(b, rng))),
            2 => Some((Role::ArgMMnr, manner(b, rng))),
            _ => None,
        };
        if let Some((role, f)) = adjunct {
            args.push((role, f.span));
            vp.push(f);
        }
    }
    top.push(subj);
    top.push(Builder::node("VP", vp));
    Clause {
        tree: Builder::node("S", top),
        props: vec![(pred, args)],
    }
}

fn passive(b: &mut Builder, rng: &mut ChaCha8Rng) -> Clause {
    let subj = subject(b, rng);
    let marker = b.leaf("R", pick(rng, PASSIVE_MARKERS));
    let verb = b.leaf("V-H", pick(rng, PASSIVE_VERBS));
    let pred = verb.span.start;
    let mut args = vec![(Role::Arg1, subj.span)];
    let mut vp = vec![marker, verb];
    if rng.gen_bool(0.5) {
        let t = temporal(b, rng);
        args.push((Role::ArgMTmp, t.span));
        vp.push(t);
    }
    Clause {
        tree: Builder::node("S", vec![subj, Builder::node("VP", vp)]),
        props: vec![(pred, args)],
    }
}

/// `X nói rằng Y V Z`. `both` annotates the speech verb and the embedded
/// verb; otherwise one of them is chosen.
fn reported(b: &mut Builder, rng: &mut ChaCha8Rng, both: bool) -> Clause {
    let s1 = subject(b, rng);
    let speech = b.leaf("V-H", pick(rng, SPEECH));
    let comp = b.leaf("C", "rằng");
    let s2 = subject(b, rng);
    let verb = b.leaf("V-H", pick(rng, TRANSITIVE));
    let obj = object(b, rng);
    let (s1_span, s2_span, obj_span) = (s1.span, s2.span, obj.span);
    let (outer, inner) = (speech.span.start, verb.span.start);
    let embedded = Builder::node("S", vec![s2, Builder::node("VP", vec![verb, obj])]);
    let sbar = Builder::node("SBAR", vec![comp, embedded]);
    let sbar_span = sbar.span;
    let tree = Builder::node("S", vec![s1, Builder::node("VP", vec![speech, sbar])]);
    let outer_prop = (outer, vec![(Role::Arg0, s1_span), (Role::Arg1, sbar_span)]);
    let inner_prop = (inner, vec![(Role::Arg0, s2_span), (Role::Arg1, obj_span)]);
    let props = if both {
        vec![outer_prop, inner_prop]
    } else if rng.gen_bool(0.5) {
        vec![outer_prop]
    } else {
        vec![inner_prop]
    };
    Clause { tree, props }
}

fn motion(b: &mut Builder, rng: &mut ChaCha8Rng) -> Clause {
    let subj = subject(b, rng);
    let verb = b.leaf("V-H", pick(rng, MOTION));
    let pred = verb.span.start;
    let dir = directional(b, rng);
    let args = vec![(Role::Arg0, subj.span), (Role::ArgMDir, dir.span)];
    Clause {
        tree: Builder::node("S", vec![subj, Builder::node("VP", vec![verb, dir])]),
        props: vec![(pred, args)],
    }
}

/// `sentences` single-predicate sentences plus `doubles` sentences with two
/// annotated predicates, interleaved deterministically from `seed`.
pub fn generate(sentences: usize, doubles: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kinds: Vec<bool> = std::iter::repeat(false)
        .take(sentences)
        .chain(std::iter::repeat(true).take(doubles))
        .collect();
    kinds.shuffle(&mut rng);
    let (mut trees, mut props) = (String::new(), String::new());
    for (i, double) in kinds.into_iter().enumerate() {
        let mut b = Builder { len: 0 };
        let clause = if double {
            reported(&mut b, &mut rng, true)
        } else {
            match rng.gen_range(0..20) {
                0..=9 => transitive(&mut b, &mut rng),
                10..=12 => passive(&mut b, &mut rng),
                13..=17 => reported(&mut b, &mut rng, false),
                _ => motion(&mut b, &mut rng),
            }
        };
        let id = format!("syn{:03}", i + 1);
        writeln!(trees, "{id} {}", clause.tree.text).unwrap();
        for (pred, mut args) in clause.props {
            args.sort_by_key(|(_, s)| *s);
            write!(props, "{id} {pred}").unwrap();
            for (role, span) in args {
                write!(props, " {role}:{span}").unwrap();
            }
            props.push('\n');
        }
    }
    SyntheticCorpus {
        trees,
        props,
        embeddings: embeddings(seed),
    }
}

/// Word vectors for the generator's vocabulary: each word class gets its own
/// axis, plus small seeded noise. Multi-word entries are written with `_`.
pub fn embeddings(seed: u64) -> String {
    let classes: [&[&str]; 12] = [
        PERSONS,
        PRONOUNS,
        OBJECTS,
        TRANSITIVE,
        PASSIVE_VERBS,
        SPEECH,
        MOTION,
        TIMES,
        PLACES,
        MANNERS,
        &["vào", "từ", "trong", "đến", "về"],
        &["bị", "được", "không", "rằng", "mới", "cũ"],
    ];
    let dim = classes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let mut seen = std::collections::BTreeSet::new();
    let mut rows = Vec::new();
    for (c, words) in classes.iter().enumerate() {
        for w in words.iter() {
            if !seen.insert(*w) {
                continue;
            }
            let v: Vec<String> = (0..dim)
                .map(|d| {
                    let base = if d == c { 4.0 } else { 0.0 };
                    format!("{:.4}", base + rng.gen_range(-0.3..0.3))
                })
                .collect();
            rows.push(format!("{} {}", w.replace(' ', "_"), v.join(" ")));
        }
    }
    let mut out = format!("{} {dim}\n", rows.len());
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}
