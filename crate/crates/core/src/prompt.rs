//! Prompt assembly from cue bundles and validation of the model's JSON reply.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::bundle::CueBundle;
use crate::dimension::Dimension;
use crate::phoneme::render_cmu_with_pauses;

pub const TEMPLATE_VERSION: &str = "v1";
const PROMPT_TEMPLATE: &str = include_str!("../data/templates/prompt_v1.txt");
const BASIC_GUIDELINE: &str = include_str!("../data/templates/basic_guideline_v1.txt");

pub const MIN_SCORE: i64 = 1;
pub const MAX_SCORE: i64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cue {
    Transcript,
    Ipa,
    Cmu,
    Tobi,
}

impl Cue {
    pub fn as_str(self) -> &'static str {
        match self {
            Cue::Transcript => "transcript",
            Cue::Ipa => "ipa",
            Cue::Cmu => "cmu",
            Cue::Tobi => "tobi",
        }
    }

    fn heading(self) -> &'static str {
        match self {
            Cue::Transcript => "Transcript",
            Cue::Ipa => "Recognized IPA sequence",
            Cue::Cmu => "Recognized CMU sequence",
            Cue::Tobi => "ToBI annotation",
        }
    }

    fn description(self) -> &'static str {
        match self {
            Cue::Transcript => {
                "the words recognized by an automatic speech recognition model. Unnatural word \
                 sequences, repeated words and filler words can all reflect how the speaker sounded."
            }
            Cue::Ipa => {
                "phonemes recognized directly from the audio, written in the International Phonetic \
                 Alphabet and separated by spaces. Word boundaries are not marked."
            }
            Cue::Cmu => {
                "phones from a phonetic aligner in CMU Pronouncing Dictionary (ARPABET) notation, \
                 with stress digits on vowels. Pauses are written inline: \"D (0.12s pause) G\" \
                 means a 0.12-second pause between the phones D and G."
            }
            Cue::Tobi => {
                "prosodic events in ToBI (Tones and Break Indices) notation, one word per line with \
                 its break index and tone label. A legend is given above the events."
            }
        }
    }
}

impl std::str::FromStr for Cue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "transcript" | "trans" => Ok(Cue::Transcript),
            "ipa" => Ok(Cue::Ipa),
            "cmu" => Ok(Cue::Cmu),
            "tobi" => Ok(Cue::Tobi),
            other => Err(format!("unknown cue `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Guideline {
    #[default]
    Basic,
    Detailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub cues: BTreeSet<Cue>,
    #[serde(default)]
    pub guideline: Guideline,
    #[serde(default = "default_dimensions")]
    pub dimensions: BTreeSet<Dimension>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detailed_guideline_text: Option<String>,
    /// Allows prosody scoring without a ToBI cue.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub force_prosody: bool,
}

fn default_dimensions() -> BTreeSet<Dimension> {
    [Dimension::Accuracy, Dimension::Fluency].into()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptConfigError {
    #[error("at least one cue must be selected")]
    NoCues,
    #[error("accuracy and fluency must both be requested")]
    MissingCoreDimension,
    #[error("prosody requires the tobi cue (or force_prosody)")]
    ProsodyWithoutTobi,
    #[error("detailed guideline requires detailed_guideline_text")]
    MissingDetailedText,
    #[error("detailed_guideline_text given for the basic guideline")]
    UnexpectedDetailedText,
}

impl PromptConfig {
    pub fn new(cues: impl IntoIterator<Item = Cue>) -> Self {
        Self {
            cues: cues.into_iter().collect(),
            guideline: Guideline::Basic,
            dimensions: default_dimensions(),
            detailed_guideline_text: None,
            force_prosody: false,
        }
    }

    /// Transcript, IPA and CMU cues with the basic guideline.
    pub fn all_cues() -> Self {
        Self::new([Cue::Transcript, Cue::Ipa, Cue::Cmu])
    }

    pub fn detailed(mut self, text: impl Into<String>) -> Self {
        self.guideline = Guideline::Detailed;
        self.detailed_guideline_text = Some(text.into());
        self
    }

    pub fn with_prosody(mut self) -> Self {
        self.dimensions.insert(Dimension::Prosody);
        self
    }

    pub fn validate(&self) -> Result<(), PromptConfigError> {
        if self.cues.is_empty() {
            return Err(PromptConfigError::NoCues);
        }
        if !self.dimensions.contains(&Dimension::Accuracy)
            || !self.dimensions.contains(&Dimension::Fluency)
        {
            return Err(PromptConfigError::MissingCoreDimension);
        }
        if self.dimensions.contains(&Dimension::Prosody)
            && !self.cues.contains(&Cue::Tobi)
            && !self.force_prosody
        {
            return Err(PromptConfigError::ProsodyWithoutTobi);
        }
        match (self.guideline, &self.detailed_guideline_text) {
            (Guideline::Detailed, None) => Err(PromptConfigError::MissingDetailedText),
            (Guideline::Basic, Some(_)) => Err(PromptConfigError::UnexpectedDetailedText),
            _ => Ok(()),
        }
    }

    /// Short stable name such as `transcript+ipa+cmu/basic`.
    pub fn id(&self) -> String {
        let cues: Vec<_> = self.cues.iter().map(|c| c.as_str()).collect();
        let guideline = match self.guideline {
            Guideline::Basic => "basic",
            Guideline::Detailed => "detailed",
        };
        let mut id = format!("{}/{guideline}", cues.join("+"));
        if self.dimensions.contains(&Dimension::Prosody) {
            id.push_str("/prosody");
        }
        id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TobiEvent {
    /// A word, or a boundary marker.
    pub label: String,
    pub break_index: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TobiAnnotation {
    pub events: Vec<TobiEvent>,
}

impl TobiAnnotation {
    pub fn validate(&self) -> Result<(), String> {
        for event in &self.events {
            if event.break_index > 4 {
                return Err(format!(
                    "break index {} on `{}` is outside 0-4",
                    event.break_index, event.label
                ));
            }
            if let Some(tone) = &event.tone {
                let ok = !tone.is_empty()
                    && tone.chars().all(|c| matches!(c, 'H' | 'L' | '*' | '%' | '-' | '+' | '!'));
                if !ok {
                    return Err(format!("tone label `{tone}` on `{}` is not ToBI", event.label));
                }
            }
        }
        Ok(())
    }
}

const TOBI_LEGEND: &str = "\
Break index:
0: Clear phonetic marks for clitic groups
1: Most phrase-medial word boundaries
2: Strong disjuncture, pause or virtual pause, no tonal marks
3: Intermediate intonation phrase boundary
4: Full intonation phrase boundary
Tone:
H: High pitch in the local pitch range
L: Low pitch in the local pitch range
*: Pitch accent, indicating that the word is stressed
%: The end of an intonation phrase
- or --: A phrase's accent
";

/// Legend followed by one `word [break=k, tone=T]` line per event.
pub fn format_tobi_cue(annotation: &TobiAnnotation) -> String {
    let mut out = String::from(TOBI_LEGEND);
    if !annotation.events.is_empty() {
        out.push_str("Events:\n");
    }
    for event in &annotation.events {
        match &event.tone {
            Some(tone) => writeln!(
                out,
                "{} [break={}, tone={}]",
                event.label, event.break_index, tone
            ),
            None => writeln!(out, "{} [break={}]", event.label, event.break_index),
        }
        .expect("writing to String");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("cue `{}` is not available for utterance `{utt_id}`", cue.as_str())]
    MissingCue { utt_id: String, cue: Cue },
    #[error(transparent)]
    Config(#[from] PromptConfigError),
}

fn dimension_definition(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Accuracy => "how correctly the individual sounds and words are articulated",
        Dimension::Fluency => {
            "how smoothly the speech flows, considering pauses, hesitations, repetitions and filler words"
        }
        Dimension::Prosody => "how natural the intonation, rhythm and stress patterns are",
    }
}

fn output_format(dimensions: &BTreeSet<Dimension>) -> String {
    let mut out = String::from(
        "Respond with a single JSON object and nothing else. The object must contain exactly these fields:\n",
    );
    for dim in dimensions {
        writeln!(out, "- \"{dim}\": integer from {MIN_SCORE} to {MAX_SCORE}").unwrap();
        writeln!(
            out,
            "- \"{}\": string explaining the {dim} score",
            dim.reason_field()
        )
        .unwrap();
    }
    out.push_str("Example:\n{");
    let fields: Vec<String> = dimensions
        .iter()
        .map(|d| format!("\"{d}\": 3, \"{}\": \"...\"", d.reason_field()))
        .collect();
    out.push_str(&fields.join(", "));
    out.push('}');
    out
}

fn guideline_text(config: &PromptConfig) -> String {
    match config.guideline {
        Guideline::Basic => {
            let mut out = BASIC_GUIDELINE.trim_end().to_string();
            out.push('\n');
            for dim in &config.dimensions {
                writeln!(out, "- {dim}: {}", dimension_definition(*dim)).unwrap();
            }
            out
        }
        Guideline::Detailed => {
            let mut out = config
                .detailed_guideline_text
                .as_deref()
                .unwrap_or_default()
                .trim_end()
                .to_string();
            out.push('\n');
            out
        }
    }
}

fn cue_body(bundle: &CueBundle, cue: Cue) -> Result<String, PromptError> {
    let missing = || PromptError::MissingCue {
        utt_id: bundle.utt_id.clone(),
        cue,
    };
    let body = match cue {
        Cue::Transcript => {
            if bundle.transcript.trim().is_empty() && !bundle.unintelligible {
                return Err(missing());
            }
            bundle.transcript.trim().to_string()
        }
        Cue::Ipa => {
            if bundle.ipa_recognized.is_empty() {
                return Err(missing());
            }
            bundle.ipa_recognized.render()
        }
        Cue::Cmu => {
            if bundle.cmu_recognized.is_empty() {
                return Err(missing());
            }
            render_cmu_with_pauses(&bundle.cmu_recognized)
        }
        Cue::Tobi => format_tobi_cue(bundle.tobi.as_ref().ok_or_else(missing)?)
            .trim_end()
            .to_string(),
    };
    Ok(body)
}

pub fn build_prompt(bundle: &CueBundle, config: &PromptConfig) -> Result<String, PromptError> {
    config.validate()?;
    let mut input_format = String::new();
    let mut cues = String::new();
    for &cue in &config.cues {
        writeln!(input_format, "- {}: {}", cue.heading(), cue.description()).unwrap();
        writeln!(cues, "[{}]\n{}\n", cue.heading(), cue_body(bundle, cue)?).unwrap();
    }
    Ok(PROMPT_TEMPLATE
        .replace("{{input_format}}", input_format.trim_end())
        .replace("{{cues}}", cues.trim_end())
        .replace("{{guideline}}", guideline_text(config).trim_end())
        .replace("{{output_format}}", &output_format(&config.dimensions)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentResult {
    pub utt_id: String,
    pub accuracy: u8,
    pub fluency: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prosody: Option<u8>,
    pub reason_accuracy: String,
    pub reason_fluency: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_prosody: Option<String>,
    pub raw_response: String,
}

impl AssessmentResult {
    pub fn score(&self, dim: Dimension) -> Option<u8> {
        match dim {
            Dimension::Accuracy => Some(self.accuracy),
            Dimension::Fluency => Some(self.fluency),
            Dimension::Prosody => self.prosody,
        }
    }

    /// The reply a well-behaved model would give for this result.
    pub fn ideal_response(&self) -> String {
        let mut map = Map::new();
        map.insert("accuracy".into(), self.accuracy.into());
        map.insert("reason_accuracy".into(), self.reason_accuracy.clone().into());
        map.insert("fluency".into(), self.fluency.into());
        map.insert("reason_fluency".into(), self.reason_fluency.clone().into());
        if let Some(p) = self.prosody {
            map.insert("prosody".into(), p.into());
        }
        if let Some(r) = &self.reason_prosody {
            map.insert("reason_prosody".into(), r.clone().into());
        }
        Value::Object(map).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResponseError {
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("missing or invalid field `{0}`")]
    MissingField(String),
    #[error("score {value} for `{field}` is outside {MIN_SCORE}-{MAX_SCORE}")]
    ScoreOutOfRange { field: String, value: f64 },
}

/// Yields every balanced `{...}` span, honoring JSON string escapes.
fn balanced_objects(raw: &str) -> impl Iterator<Item = &str> {
    let bytes = raw.as_bytes();
    (0..bytes.len())
        .filter(move |&i| bytes[i] == b'{')
        .filter_map(move |start| {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            for (offset, &b) in bytes[start..].iter().enumerate() {
                if in_string {
                    match b {
                        _ if escaped => escaped = false,
                        b'\\' => escaped = true,
                        b'"' => in_string = false,
                        _ => {}
                    }
                    continue;
                }
                match b {
                    b'"' => in_string = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&raw[start..start + offset + 1]);
                        }
                    }
                    _ => {}
                }
            }
            None
        })
}

fn extract_object(raw: &str) -> Option<Map<String, Value>> {
    balanced_objects(raw).find_map(|candidate| serde_json::from_str(candidate).ok())
}

fn score_field(obj: &Map<String, Value>, dim: Dimension) -> Result<u8, ResponseError> {
    let field = dim.as_str();
    let missing = || ResponseError::MissingField(field.to_string());
    let value = match obj.get(field) {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(missing)?,
        Some(Value::String(s)) => s.trim().parse::<f64>().map_err(|_| missing())?,
        _ => return Err(missing()),
    };
    if !value.is_finite() {
        return Err(missing());
    }
    let rounded = value.round();
    if rounded < MIN_SCORE as f64 || rounded > MAX_SCORE as f64 {
        return Err(ResponseError::ScoreOutOfRange {
            field: field.to_string(),
            value,
        });
    }
    Ok(rounded as u8)
}

fn reason_field(obj: &Map<String, Value>, dim: Dimension) -> Result<String, ResponseError> {
    let field = dim.reason_field();
    match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        _ => Err(ResponseError::MissingField(field.to_string())),
    }
}

/// Extracts the first JSON object from a model reply (code fences and prose
/// around it are tolerated) and validates the requested fields.
pub fn parse_llm_response(
    utt_id: &str,
    raw: &str,
    config: &PromptConfig,
) -> Result<AssessmentResult, ResponseError> {
    let obj = extract_object(raw).ok_or(ResponseError::NoJsonFound)?;
    let mut result = AssessmentResult {
        utt_id: utt_id.to_string(),
        accuracy: 0,
        fluency: 0,
        prosody: None,
        reason_accuracy: String::new(),
        reason_fluency: String::new(),
        reason_prosody: None,
        raw_response: raw.to_string(),
    };
    for &dim in &config.dimensions {
        let score = score_field(&obj, dim)?;
        let reason = reason_field(&obj, dim)?;
        match dim {
            Dimension::Accuracy => {
                result.accuracy = score;
                result.reason_accuracy = reason;
            }
            Dimension::Fluency => {
                result.fluency = score;
                result.reason_fluency = reason;
            }
            Dimension::Prosody => {
                result.prosody = Some(score);
                result.reason_prosody = Some(reason);
            }
        }
    }
    if result.accuracy == 0 || result.fluency == 0 {
        let missing = if result.accuracy == 0 { "accuracy" } else { "fluency" };
        return Err(ResponseError::MissingField(missing.into()));
    }
    Ok(result)
}
