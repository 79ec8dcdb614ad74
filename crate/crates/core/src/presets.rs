//! The speech-related AU / phoneme instance: seven AUs, a 29-state phone
//! variable, and a generator network with phonetically motivated tables.

use std::collections::BTreeMap;

use crate::alignment::{PhoneAlphabet, SIL};
use crate::model::{measurement_name, Cpt, Edge, NetworkSpec, NodeRef, Role, Variable, PHONE};

pub const AUS: [&str; 7] = ["AU18", "AU20", "AU22", "AU24", "AU25", "AU26", "AU27"];

/// Words of the recording protocol with their phoneme transcriptions.
pub const WORDS: [(&str, &[&str]); 12] = [
    ("beige", &["B", "EY", "ZH"]),
    ("chaps", &["CH", "AE", "P", "S"]),
    ("cowboy", &["K", "AW", "B", "OY"]),
    ("eurasian", &["Y", "UH", "R", "EY", "ZH", "AH", "N"]),
    ("gooey", &["G", "UW", "IY"]),
    ("hue", &["HH", "Y", "UW"]),
    ("joined", &["JH", "OY", "N", "D"]),
    ("more", &["M", "AO", "R"]),
    ("patch", &["P", "AE", "CH"]),
    ("queen", &["K", "W", "IY", "N"]),
    ("she", &["SH", "IY"]),
    ("waters", &["W", "AO", "T", "ER", "Z"]),
];

const ON: f64 = 0.9;
const OFF: f64 = 0.04;
/// Weight of the previous AU state in the AU transition.
const AU_INERTIA: f64 = 0.7;
/// Lip-shaping AUs (pucker, funneler, presser). They form before the sound
/// does, so their previous state steers which phone comes next.
pub const LIP_SHAPING: [&str; 3] = ["AU18", "AU22", "AU24"];
const STEER_MATCH: f64 = 0.95;

pub fn aus() -> Vec<String> {
    AUS.iter().map(|s| s.to_string()).collect()
}

/// SIL followed by the 28 phonemes of [`WORDS`], sorted.
pub fn alphabet() -> PhoneAlphabet {
    let mut phones: Vec<&str> = WORDS.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    phones.sort_unstable();
    phones.dedup();
    PhoneAlphabet::new(phones).expect("unique labels")
}

/// AUs typically active while producing `phone`.
pub fn active_aus(phone: &str) -> &'static [&'static str] {
    match phone {
        "B" | "M" => &["AU24", "AU26"],
        "P" => &["AU24"],
        "AE" | "EY" => &["AU20", "AU25", "AU26"],
        "AH" | "G" | "HH" | "IY" | "K" | "Y" => &["AU25", "AU26"],
        "AO" => &["AU18", "AU25", "AU27"],
        "AW" => &["AU25", "AU27"],
        "CH" | "ER" | "JH" | "SH" | "ZH" => &["AU22", "AU25"],
        "D" | "N" | "T" | "Z" => &["AU25"],
        "S" => &["AU20", "AU25"],
        "OY" | "UW" => &["AU18", "AU25", "AU26"],
        "R" | "UH" | "W" => &["AU18", "AU25"],
        _ => &[],
    }
}

fn profile(phone: &str, au: &str) -> f64 {
    if active_aus(phone).contains(&au) {
        ON
    } else {
        OFF
    }
}

/// Fills a CPT by evaluating `row` on every parent configuration.
pub fn tabulate(
    child: &str,
    parents: Vec<NodeRef>,
    parent_cards: &[usize],
    mut row: impl FnMut(&[usize]) -> Vec<f64>,
) -> Cpt {
    let configs: usize = parent_cards.iter().product();
    let mut table = Vec::new();
    for j in 0..configs {
        table.extend(row(&crate::model::config_states(j, parent_cards)));
    }
    Cpt::new(child, parents, table)
}

/// Variables, measurement edges and identity measurement tables for a set
/// of AUs and an optional phone variable of `phone_card` states.
pub fn skeleton(aus: &[String], phone_card: Option<usize>) -> NetworkSpec {
    let mut hidden: Vec<Variable> = aus.iter().map(|a| Variable::new(a.clone(), 2, Role::HiddenAu)).collect();
    if let Some(p) = phone_card {
        hidden.push(Variable::new(PHONE, p, Role::HiddenPhone));
    }
    let mut variables = hidden.clone();
    let mut intra_edges = Vec::new();
    for h in &hidden {
        let role = if h.role == Role::HiddenPhone {
            Role::MeasurementPhone
        } else {
            Role::MeasurementAu
        };
        variables.push(Variable::new(measurement_name(&h.name), h.cardinality, role));
        intra_edges.push(Edge::new(h.name.clone(), measurement_name(&h.name)));
    }
    NetworkSpec {
        variables,
        intra_edges,
        ..Default::default()
    }
}

/// Measurement CPT `P(O = o | X = x) = [x == o]`.
pub fn identity_channel(hidden: &str, card: usize) -> Cpt {
    tabulate(&measurement_name(hidden), vec![NodeRef::current(hidden)], &[card], |s| {
        (0..card).map(|o| (o == s[0]) as u8 as f64).collect()
    })
}

/// Phone bigrams over word boundaries, with SIL before and after each word.
fn bigrams(alphabet: &PhoneAlphabet) -> Vec<BTreeMap<usize, f64>> {
    let mut out = vec![BTreeMap::new(); alphabet.len()];
    for (_, phones) in WORDS {
        let seq: Vec<usize> = std::iter::once(SIL)
            .chain(phones.iter().copied())
            .chain(std::iter::once(SIL))
            .map(|p| alphabet.index_of(p).expect("phone in alphabet"))
            .collect();
        for w in seq.windows(2) {
            *out[w[0]].entry(w[1]).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// The generator network: Phone drives every AU, AU24 inhibits AU25, every
/// hidden variable persists, and the previous lip configuration steers
/// which phone comes next. Measurement channels are noise free; corruption
/// is added by the simulator's noise model.
pub fn generator() -> NetworkSpec {
    let alphabet = alphabet();
    let p_card = alphabet.len();
    let aus = aus();
    let mut spec = skeleton(&aus, Some(p_card));
    for au in &aus {
        spec.intra_edges.push(Edge::new(PHONE, au.clone()));
    }
    spec.intra_edges.push(Edge::new("AU24", "AU25"));
    for h in aus.iter().map(String::as_str).chain([PHONE]) {
        spec.inter_edges.push(Edge::new(h, h));
    }
    for au in LIP_SHAPING {
        spec.inter_edges.push(Edge::new(au, PHONE));
    }

    let label = |i: usize| alphabet.label(i).to_string();
    let au_target = |au: &str, phone: usize, au24: Option<usize>| -> f64 {
        if au24 == Some(1) {
            OFF
        } else {
            profile(&label(phone), au)
        }
    };
    let bern = |p: f64| vec![1.0 - p, p];

    let mut cpts = Vec::new();
    let mut trans = Vec::new();
    for au in &aus {
        let fam = spec.initial_family(au);
        let cards: Vec<usize> = fam.iter().map(|p| spec.cardinality(&p.name).unwrap()).collect();
        let has24 = fam.iter().any(|p| p.name == "AU24");
        cpts.push(tabulate(au, fam.clone(), &cards, |s| {
            bern(au_target(au, s[0], has24.then(|| s[1])))
        }));
        let fam = spec.transition_family(au);
        let cards: Vec<usize> = fam.iter().map(|p| spec.cardinality(&p.name).unwrap()).collect();
        trans.push(tabulate(au, fam, &cards, |s| {
            let prev = s[s.len() - 1] as f64;
            let target = au_target(au, s[0], has24.then(|| s[1]));
            bern(AU_INERTIA * prev + (1.0 - AU_INERTIA) * target)
        }));
    }

    let mut phone_prior = vec![0.05 / (p_card - 1) as f64; p_card];
    phone_prior[0] = 0.95;
    cpts.push(Cpt::new(PHONE, vec![], phone_prior));

    let next = bigrams(&alphabet);
    let fam = spec.transition_family(PHONE);
    let cards: Vec<usize> = fam.iter().map(|p| spec.cardinality(&p.name).unwrap()).collect();
    trans.push(tabulate(PHONE, fam.clone(), &cards, |s| {
        // parents: Phone@t-1, then the steering AUs @t-1
        let p = s[0];
        let stay = if p == 0 { 0.93 } else { 0.82 };
        let total: f64 = next[p].values().sum();
        let steer = |q: usize| -> f64 {
            LIP_SHAPING
                .iter()
                .zip(&s[1..])
                .map(|(au, &a)| {
                    let on = profile(&label(q), au) > 0.5;
                    if (a == 1) == on {
                        STEER_MATCH
                    } else {
                        1.0 - STEER_MATCH
                    }
                })
                .product()
        };
        let mut row = vec![0.0; p_card];
        row[p] = stay * steer(p);
        for (&q, &w) in &next[p] {
            row[q] += (1.0 - stay) * w / total * steer(q);
        }
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= z);
        row
    }));

    for h in aus.iter().map(|a| (a.as_str(), 2)).chain([(PHONE, p_card)]) {
        cpts.push(identity_channel(h.0, h.1));
        trans.push(identity_channel(h.0, h.1));
    }
    spec.cpts = cpts;
    spec.transition_cpts = Some(trans);
    spec
}
