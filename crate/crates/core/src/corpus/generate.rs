//! Seeded synthetic conversation generator.
//!
//! Conversations are built from episodes. An MR episode discusses one or two
//! medications over one to four sentences and yields MR tags plus a summary
//! grounded to exactly those sentences; filler episodes are small talk.
//! Distractor knobs plant the hard evaluation categories: a second medication
//! with its own dosage (MM), stray numbers (MN), and a revised dosage whose
//! old value sits between the medication and the new one (NBM).

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, MrTag, Sentence, SummaryTag, Transcript};
use crate::error::{Error, Result};
use crate::preprocess::numbers::parse_number_token;

/// A dosage as the annotator writes it: digits plus unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosageSlot {
    pub value: String,
    pub unit: String,
}

/// Canonical frequency tag and the ways a speaker may say it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySlot {
    pub canonical: String,
    pub paraphrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationProfile {
    pub medications: Vec<String>,
    pub dosages: Vec<DosageSlot>,
    pub frequencies: Vec<FrequencySlot>,
    /// Inclusive range of informative MR episodes per transcript.
    pub tags_per_transcript: (usize, usize),
    /// Inclusive range of filler sentences before each episode.
    pub filler_sentences: (usize, usize),
    /// Fraction of transcripts with at least one informative tag.
    pub informative_fraction: f64,
    /// Probability of an extra tag with both fields `none`.
    pub uninformative_rate: f64,
    pub dosage_none_rate: f64,
    pub frequency_none_rate: f64,
    pub mm_rate: f64,
    pub mn_rate: f64,
    pub nbm_rate: f64,
    /// Probability that a dosage value is spoken as words.
    pub spell_numbers_rate: f64,
    pub disfluency_rate: f64,
    pub deidentified_rate: f64,
}

fn freq(canonical: &str, paraphrases: &[&str]) -> FrequencySlot {
    FrequencySlot {
        canonical: canonical.into(),
        paraphrases: paraphrases.iter().map(|s| s.to_string()).collect(),
    }
}

impl Default for GenerationProfile {
    fn default() -> Self {
        let medications = [
            "Coumadin",
            "aspirin",
            "baby aspirin",
            "Lipitor",
            "lisinopril",
            "metoprolol",
            "metformin",
            "Lasix",
            "amlodipine",
            "atorvastatin",
            "Plavix",
            "Eliquis",
            "gabapentin",
            "prednisone",
            "levothyroxine",
            "losartan",
            "carvedilol",
            "furosemide",
            "potassium chloride",
            "fish oil",
            "vitamin D",
            "Xarelto",
            "omeprazole",
            "spironolactone",
        ];
        let dosages = [
            ("2.5", "mg"),
            ("3.5", "mg"),
            ("5", "mg"),
            ("10", "mg"),
            ("12.5", "mg"),
            ("20", "mg"),
            ("25", "mg"),
            ("40", "mg"),
            ("50", "mg"),
            ("75", "mcg"),
            ("81", "mg"),
            ("100", "mg"),
            ("200", "mg"),
            ("250", "mg"),
            ("500", "mg"),
            ("1000", "units"),
            ("0.5", "mg"),
            ("15", "ml"),
        ];
        GenerationProfile {
            medications: medications.iter().map(|s| s.to_string()).collect(),
            dosages: dosages
                .iter()
                .map(|(v, u)| DosageSlot {
                    value: v.to_string(),
                    unit: u.to_string(),
                })
                .collect(),
            frequencies: vec![
                freq(
                    "twice a day",
                    &[
                        "twice a day",
                        "two times a day",
                        "in the morning and before bed",
                        "morning and night",
                    ],
                ),
                freq("daily", &["every day", "each day", "every single day"]),
                freq("once a day", &["once a day", "one time a day"]),
                freq("at night time", &["before sleeping", "at bedtime", "every night"]),
                freq("every morning", &["in the morning", "every morning", "when you wake up"]),
                freq("three times daily", &["three times a day", "with every meal"]),
                freq("as needed", &["as needed", "when you need it", "if you have pain"]),
                freq("every other day", &["every other day", "every two days"]),
                freq("weekly", &["once a week", "every week"]),
            ],
            tags_per_transcript: (1, 4),
            filler_sentences: (1, 3),
            informative_fraction: 0.9,
            uninformative_rate: 0.3,
            dosage_none_rate: 0.15,
            frequency_none_rate: 0.2,
            mm_rate: 0.3,
            mn_rate: 0.3,
            nbm_rate: 0.3,
            spell_numbers_rate: 0.3,
            disfluency_rate: 0.05,
            deidentified_rate: 0.05,
        }
    }
}

impl GenerationProfile {
    /// One medication, one dosage, one frequency, no noise or distractors.
    pub fn trivial(medication: &str, dosage: DosageSlot, frequency: FrequencySlot) -> Self {
        GenerationProfile {
            medications: vec![medication.into()],
            dosages: vec![dosage],
            frequencies: vec![frequency],
            tags_per_transcript: (1, 1),
            filler_sentences: (0, 0),
            informative_fraction: 1.0,
            uninformative_rate: 0.0,
            dosage_none_rate: 0.0,
            frequency_none_rate: 0.0,
            mm_rate: 0.0,
            mn_rate: 0.0,
            nbm_rate: 0.0,
            spell_numbers_rate: 0.0,
            disfluency_rate: 0.0,
            deidentified_rate: 0.0,
        }
    }

    /// Same lexicons with every distractor and noise rate set to zero.
    pub fn without_distractors(mut self) -> Self {
        self.mm_rate = 0.0;
        self.mn_rate = 0.0;
        self.nbm_rate = 0.0;
        self.disfluency_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.medications.is_empty() || self.dosages.is_empty() || self.frequencies.is_empty() {
            return Err(Error::config("generation lexicons must be non-empty"));
        }
        if self.frequencies.iter().any(|f| f.paraphrases.is_empty()) {
            return Err(Error::config("every frequency needs at least one paraphrase"));
        }
        for d in &self.dosages {
            if parse_number_token(&d.value).is_none() {
                return Err(Error::config(format!("dosage value `{}` is not a numeral", d.value)));
            }
        }
        let rates = [
            ("informative_fraction", self.informative_fraction),
            ("uninformative_rate", self.uninformative_rate),
            ("dosage_none_rate", self.dosage_none_rate),
            ("frequency_none_rate", self.frequency_none_rate),
            ("mm_rate", self.mm_rate),
            ("mn_rate", self.mn_rate),
            ("nbm_rate", self.nbm_rate),
            ("spell_numbers_rate", self.spell_numbers_rate),
            ("disfluency_rate", self.disfluency_rate),
            ("deidentified_rate", self.deidentified_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("{name} = {r} outside [0, 1]")));
            }
        }
        let (lo, hi) = self.tags_per_transcript;
        if lo == 0 || lo > hi {
            return Err(Error::config("tags_per_transcript must satisfy 1 <= min <= max"));
        }
        if self.filler_sentences.0 > self.filler_sentences.1 {
            return Err(Error::config("filler_sentences must satisfy min <= max"));
        }
        Ok(())
    }
}

/// One spoken piece of a sentence. Protected pieces (numbers, names,
/// frequency phrases) never receive inserted disfluencies.
struct Piece {
    text: String,
    protected: bool,
}

fn plain(s: &str) -> Piece {
    Piece {
        text: s.to_string(),
        protected: false,
    }
}

fn guarded(s: impl Into<String>) -> Piece {
    Piece {
        text: s.into(),
        protected: true,
    }
}

struct Episode {
    sentences: Vec<(Vec<Piece>, &'static str)>,
    tags: Vec<(String, Option<DosageSlot>, Option<String>)>,
    summary: Option<String>,
}

const FILLERS: [&str; 5] = ["uh", "um", "like", "you know", "so"];
const ACKS: [&str; 5] = ["Yeah.", "Okay.", "Mm-hmm.", "Alright.", "Sure."];

const SMALL_TALK: [&str; 16] = [
    "How have you been feeling since the last visit?",
    "Any chest pain or shortness of breath?",
    "I've been walking a little more these days.",
    "The swelling in my legs is better.",
    "Let me take a listen to your heart.",
    "Your lungs sound clear today.",
    "I have been sleeping okay.",
    "Did you get the lab work done?",
    "My daughter drove me here today.",
    "We will check your kidney function again.",
    "I still get a little dizzy when I stand up.",
    "That's good to hear.",
    "Any problems with bleeding or bruising?",
    "The weather has been rough lately.",
    "I want to see you back after the tests.",
    "Have you had any falls?",
];

const SMALL_TALK_NUMERIC: [&str; 6] = [
    "I'm {n} years old now.",
    "My sugar was {n} this morning.",
    "I lost about {n} pounds.",
    "Your pressure today is {n} over {m}.",
    "I walk about {n} minutes a day.",
    "It was {n} degrees outside.",
];

const SYMPTOMS: [&str; 8] = [
    "patient reports leg swelling improved",
    "patient denies chest pain",
    "patient reports occasional dizziness",
    "lungs clear on exam",
    "order kidney function labs",
    "patient reports better sleep",
    "follow up after tests",
    "patient denies falls",
];

struct Gen<'a> {
    rng: ChaCha8Rng,
    profile: &'a GenerationProfile,
}

fn spoken_value(value: &str) -> String {
    match parse_number_token(value) {
        Some(n) => n.to_words().replace('-', " "),
        None => value.to_string(),
    }
}

impl<'a> Gen<'a> {
    fn chance(&mut self, p: f64) -> bool {
        p > 0.0 && self.rng.random::<f64>() < p
    }

    fn pick<T: Clone>(&mut self, items: &[T]) -> T {
        items.choose(&mut self.rng).expect("non-empty").clone()
    }

    fn pick_str(&mut self, items: &[&'static str]) -> &'static str {
        items.choose(&mut self.rng).copied().expect("non-empty")
    }

    fn dose_text(&mut self, d: &DosageSlot) -> String {
        let value = if self.chance(self.profile.spell_numbers_rate) {
            spoken_value(&d.value)
        } else {
            d.value.clone()
        };
        let unit = match d.unit.as_str() {
            "mg" if self.chance(0.3) => "milligrams".to_string(),
            u => u.to_string(),
        };
        format!("{value} {unit}")
    }

    fn other_medication(&mut self, not: &str) -> Option<String> {
        let others: Vec<String> = self
            .profile
            .medications
            .iter()
            .filter(|m| m.as_str() != not)
            .cloned()
            .collect();
        (!others.is_empty()).then(|| self.pick(&others))
    }

    fn other_dosage(&mut self, not: &DosageSlot) -> Option<DosageSlot> {
        let others: Vec<DosageSlot> = self
            .profile
            .dosages
            .iter()
            .filter(|d| d.value != not.value)
            .cloned()
            .collect();
        (!others.is_empty()).then(|| self.pick(&others))
    }

    fn paraphrase(&mut self, canonical: &str) -> String {
        let slot = self
            .profile
            .frequencies
            .iter()
            .find(|f| f.canonical == canonical)
            .expect("known frequency")
            .clone();
        self.pick(&slot.paraphrases)
    }

    fn numeric_small_talk(&mut self) -> Vec<Piece> {
        let template = self.pick_str(&SMALL_TALK_NUMERIC);
        let n = self.rng.random_range(30..=160);
        let m = self.rng.random_range(60..=95);
        template
            .replace("{n}", &n.to_string())
            .replace("{m}", &m.to_string())
            .split(' ')
            .map(plain)
            .collect()
    }

    fn small_talk(&mut self) -> Vec<Piece> {
        if self.chance(0.2) {
            return self.numeric_small_talk();
        }
        self.pick_str(&SMALL_TALK).split(' ').map(plain).collect()
    }

    fn words(s: &str) -> Vec<Piece> {
        s.split(' ').map(plain).collect()
    }

    /// The main MR episode for one medication.
    fn mr_episode(&mut self) -> Episode {
        let p = self.profile;
        let med = self.pick(&p.medications);
        let mut dosage = Some(self.pick(&p.dosages));
        let mut frequency = Some(self.pick(&p.frequencies).canonical);
        if self.chance(p.dosage_none_rate) {
            dosage = None;
        } else if self.chance(p.frequency_none_rate) {
            frequency = None;
        }

        let mut sentences: Vec<(Vec<Piece>, &'static str)> = Vec::new();
        let mut tags = vec![];
        let freq_piece = frequency.clone().map(|f| {
            let para = self.paraphrase(&f);
            guarded(para)
        });

        // Stray number before the medication (MN without NBM).
        let mn = dosage.is_some() && self.chance(p.mn_rate);
        let mn_before = mn && self.chance(0.5);
        if mn_before {
            sentences.push((self.numeric_small_talk(), "doctor"));
        }

        let mut verb = "continue";
        match dosage.clone() {
            Some(d) if self.chance(p.nbm_rate) && self.other_dosage(&d).is_some() => {
                // Revised dosage: old value sits between medication and new value.
                let old = self.other_dosage(&d).expect("checked");
                let old_text = self.dose_text(&old);
                let new_text = self.dose_text(&d);
                verb = if self.chance(0.5) { "increase" } else { "change" };
                let mut s1 = Self::words(self.pick_str(&[
                    "You've been taking the",
                    "So right now you're on the",
                    "I see you're on the",
                ]));
                s1.push(guarded(med.clone()));
                s1.push(guarded(old_text));
                s1.push(plain("right?"));
                sentences.push((s1, "doctor"));
                sentences.push((Self::words(self.pick_str(&ACKS)), "patient"));
                let mut s3 = Self::words(self.pick_str(&[
                    "Let's go up to",
                    "I want you to change it to",
                    "We'll make it",
                    "Increase it to",
                ]));
                s3.push(guarded(new_text));
                if let Some(f) = freq_piece {
                    s3.push(f);
                }
                sentences.push((s3, "doctor"));
            }
            Some(d) if self.chance(p.mm_rate) => {
                // Two medications, each with its own dosage (and maybe frequency).
                if let Some(med2) = self.other_medication(&med) {
                    let d2 = self.pick(&p.dosages);
                    let f2 = if self.chance(0.5) {
                        Some(self.pick(&p.frequencies).canonical)
                    } else {
                        None
                    };
                    let d_text = self.dose_text(&d);
                    let d2_text = self.dose_text(&d2);
                    let mut s = Self::words(self.pick_str(&[
                        "So you're taking the",
                        "Keep taking the",
                        "You'll stay on the",
                    ]));
                    s.push(guarded(med.clone()));
                    s.push(guarded(d_text));
                    if let Some(f) = freq_piece {
                        s.push(f);
                    }
                    s.push(plain("and"));
                    s.push(plain("the"));
                    s.push(guarded(med2.clone()));
                    s.push(guarded(d2_text));
                    if let Some(f2) = &f2 {
                        let para = self.paraphrase(f2);
                        s.push(guarded(para));
                    }
                    sentences.push((s, "doctor"));
                    tags.push((med2, Some(d2), f2));
                } else {
                    self.simple_sentences(&med, Some(d), freq_piece, &mut sentences);
                }
            }
            d => {
                if d.is_some() && self.chance(0.3) {
                    verb = "start";
                }
                self.simple_sentences(&med, d, freq_piece, &mut sentences);
            }
        }

        if mn && !mn_before {
            let n = self.pick_str(&["two", "three", "four", "six", "2", "3", "4", "6"]);
            let mut s = Self::words("Come back and see me in");
            s.push(guarded(n));
            s.push(plain("weeks."));
            sentences.push((s, "doctor"));
        }

        let summary = match (&dosage, &frequency) {
            (Some(d), Some(f)) => format!("{verb} {med} {} {} {f}", d.value, d.unit),
            (Some(d), None) => format!("{verb} {med} {} {}", d.value, d.unit),
            (None, Some(f)) => format!("take {med} {f}"),
            (None, None) => format!("patient takes {med}"),
        };
        tags.insert(0, (med, dosage, frequency));
        Episode {
            sentences,
            tags,
            summary: Some(summary),
        }
    }

    fn simple_sentences(
        &mut self,
        med: &str,
        dosage: Option<DosageSlot>,
        freq_piece: Option<Piece>,
        sentences: &mut Vec<(Vec<Piece>, &'static str)>,
    ) {
        let lead = self.pick_str(&[
            "So I want you to take the",
            "Let's keep you on the",
            "I'm going to have you take the",
            "We'll start the",
            "Continue the",
        ]);
        let dose_text = dosage.as_ref().map(|d| self.dose_text(d));
        let layout = self.rng.random_range(0..3);
        match (layout, dose_text) {
            (0, dose) | (_, dose @ None) => {
                let mut s = Self::words(lead);
                s.push(guarded(med));
                if let Some(d) = dose {
                    s.push(guarded(d));
                }
                if let Some(f) = freq_piece {
                    s.push(f);
                }
                sentences.push((s, "doctor"));
            }
            (1, Some(dose)) => {
                // Dosage given after an interruption, as in real dialogue.
                let mut s1 = Self::words("I'm going to have you increase the");
                s1.push(guarded(med));
                sentences.push((s1, "doctor"));
                sentences.push((Self::words(self.pick_str(&ACKS)), "patient"));
                let mut s3 = Self::words("Increase it to");
                s3.push(guarded(dose));
                if let Some(f) = freq_piece {
                    s3.push(f);
                }
                sentences.push((s3, "doctor"));
            }
            (_, Some(dose)) => {
                let mut s1 = Self::words(lead);
                s1.push(guarded(med));
                s1.push(guarded(dose));
                sentences.push((s1, "doctor"));
                if let Some(f) = freq_piece {
                    sentences.push((Self::words(self.pick_str(&ACKS)), "patient"));
                    let mut s2 = Self::words("Take it");
                    s2.push(f);
                    sentences.push((s2, "doctor"));
                }
            }
        }
    }

    fn uninformative_episode(&mut self) -> Episode {
        let med = self.pick(&self.profile.medications);
        let mut s1 = Self::words(self.pick_str(&[
            "Are you still taking the",
            "Did the pharmacy refill the",
            "Any side effects from the",
        ]));
        s1.push(guarded(med.clone()));
        Episode {
            sentences: vec![
                (s1, "doctor"),
                (Self::words(self.pick_str(&["Yes I am.", "I think so.", "No problems."])), "patient"),
            ],
            tags: vec![(med.clone(), None, None)],
            summary: Some(format!("patient takes {med}")),
        }
    }

    /// Renders pieces to text with disfluencies and de-identification.
    fn render(&mut self, pieces: Vec<Piece>) -> String {
        let mut words: Vec<String> = Vec::new();
        for (i, piece) in pieces.into_iter().enumerate() {
            if i > 0 && self.chance(self.profile.disfluency_rate) {
                let f = self.pick_str(&FILLERS);
                words.push(format!("{f},"));
            }
            if !piece.protected && self.chance(self.profile.disfluency_rate) {
                // verbatim repetition, e.g. "and and"
                words.push(piece.text.clone());
            }
            words.push(piece.text);
        }
        if self.chance(self.profile.deidentified_rate) {
            let at = self.rng.random_range(0..=words.len());
            words.insert(at, "[de-identified]".into());
        }
        let mut text = words.join(" ");
        if let Some(first) = text.chars().next() {
            let upper: String = first.to_uppercase().collect();
            text.replace_range(..first.len_utf8(), &upper);
        }
        if !text.ends_with(['.', '?', '!']) {
            text.push('.');
        }
        text
    }

    fn transcript(&mut self, id: String) -> Transcript {
        let p = self.profile;
        let mut episodes: Vec<Episode> = Vec::new();
        if self.chance(p.informative_fraction) {
            let n = self.rng.random_range(p.tags_per_transcript.0..=p.tags_per_transcript.1);
            for _ in 0..n {
                episodes.push(self.mr_episode());
            }
        }
        if episodes.is_empty() || self.chance(p.uninformative_rate) {
            let at = self.rng.random_range(0..=episodes.len());
            let ep = self.uninformative_episode();
            episodes.insert(at, ep);
        }

        let mut t = self.rng.random_range(0.0..30.0f64);
        let round = |x: f64| (x * 10.0).round() / 10.0;
        let mut sentences = Vec::new();
        let mut mr_tags = Vec::new();
        let mut summaries = Vec::new();

        let mut emit = |g: &mut Self, pieces: Vec<Piece>, speaker: &str, t: &mut f64| {
            let text = g.render(pieces);
            let n_words = text.split_whitespace().count() as f64;
            let start = round(*t);
            let end = round(start + 0.35 * n_words + g.rng.random_range(0.2..1.0));
            *t = end + g.rng.random_range(0.1..1.5);
            sentences.push(Sentence {
                text,
                start_s: start,
                end_s: end,
                speaker: Some(speaker.to_string()),
            });
            (start, end)
        };

        for ep in episodes {
            let n_fill = self.rng.random_range(p.filler_sentences.0..=p.filler_sentences.1);
            for k in 0..n_fill {
                let pieces = self.small_talk();
                let speaker = if k % 2 == 0 { "doctor" } else { "patient" };
                let (s, e) = emit(self, pieces, speaker, &mut t);
                if self.chance(0.15) {
                    let text = self.pick_str(&SYMPTOMS).to_string();
                    summaries.push(SummaryTag {
                        text,
                        start_s: s,
                        end_s: e,
                    });
                }
            }
            let mut span: Option<(f64, f64)> = None;
            for (pieces, speaker) in ep.sentences {
                let (s, e) = emit(self, pieces, speaker, &mut t);
                span = Some(span.map_or((s, e), |(s0, _)| (s0, e)));
            }
            let (start_s, end_s) = span.expect("episodes have sentences");
            for (medication, dosage, frequency) in ep.tags {
                mr_tags.push(MrTag {
                    medication,
                    dosage: dosage.map(|d| format!("{} {}", d.value, d.unit)),
                    frequency,
                    start_s,
                    end_s,
                });
            }
            if let Some(text) = ep.summary {
                summaries.push(SummaryTag {
                    text,
                    start_s,
                    end_s,
                });
            }
        }
        // trailing small talk
        let pieces = self.small_talk();
        emit(self, pieces, "patient", &mut t);

        Transcript {
            id,
            sentences,
            mr_tags,
            summaries,
        }
    }
}

/// Generates `n_transcripts` annotated conversations. Deterministic for a
/// given `(seed, n_transcripts, profile)`.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_transcripts: usize,
    profile: &GenerationProfile,
) -> Result<Corpus> {
    if n_transcripts == 0 {
        return Err(Error::config("n_transcripts must be at least 1"));
    }
    profile.validate()?;
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        profile,
    };
    let transcripts = (0..n_transcripts)
        .map(|i| g.transcript(format!("s{seed}-{i:05}")))
        .collect();
    Ok(Corpus::new(transcripts))
}
