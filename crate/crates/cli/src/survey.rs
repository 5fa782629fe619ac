//! Likert survey scoring: per-question means over participants, then an
//! unweighted section mean, reported to three decimals (half-up).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use serde::{Serialize, Serializer};
use souschef_core::{LikertResponse, ParticipantId, SurveySection};

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("no responses for section {section} in {}", round_label(*round))]
    Empty { round: Option<u8>, section: SurveySection },
    #[error("incomplete data: participant {participant} has {problem} answer for question {question}")]
    Incomplete {
        participant: ParticipantId,
        question: String,
        problem: Problem,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Missing,
    Duplicate,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Missing => "no",
            Problem::Duplicate => "more than one",
        })
    }
}

fn round_label(round: Option<u8>) -> String {
    match round {
        Some(r) => format!("round {r}"),
        None => "all rounds".to_string(),
    }
}

/// A non-negative value in thousandths, rounded half-up from an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Milli(pub u64);

impl Milli {
    /// `num / den` rounded half-up to three decimals. `den` must be non-zero.
    pub fn from_ratio(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        Milli((2000 * num + den) / (2 * den))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Milli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl Serialize for Milli {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SurveyReport {
    /// `None` when rounds were pooled.
    pub round: Option<u8>,
    pub section: SurveySection,
    pub n_participants: usize,
    pub per_question_mean: BTreeMap<String, Milli>,
    pub section_mean: Milli,
}

impl fmt::Display for SurveyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "section {} ({}), {} participants",
            self.section,
            round_label(self.round),
            self.n_participants
        )?;
        let width = self.per_question_mean.keys().map(String::len).max().unwrap_or(0).max(12);
        for (q, mean) in &self.per_question_mean {
            writeln!(f, "  {q:<width$}  {mean}")?;
        }
        write!(f, "  {:<width$}  {}", "section mean", self.section_mean)
    }
}

/// Reads `participant_id,round,section,question_id,score` rows.
pub fn read_csv(input: impl Read) -> Result<Vec<LikertResponse>, SurveyError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(row_error)?.clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(row_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let response: LikertResponse = record
            .deserialize(Some(&headers))
            .map_err(|e| SurveyError::Row {
                line,
                message: match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                    _ => e.to_string(),
                },
            })?;
        response.validate().map_err(|e| SurveyError::Row {
            line,
            message: e.to_string(),
        })?;
        out.push(response);
    }
    Ok(out)
}

fn row_error(e: csv::Error) -> SurveyError {
    SurveyError::Row {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Scores one section, either for a single round or pooled over all rounds.
pub fn aggregate_survey(
    responses: &[LikertResponse],
    round: Option<u8>,
    section: SurveySection,
) -> Result<SurveyReport, SurveyError> {
    let selected: Vec<&LikertResponse> = responses
        .iter()
        .filter(|r| r.section == section && round.map_or(true, |n| r.round == n))
        .collect();
    if selected.is_empty() {
        return Err(SurveyError::Empty { round, section });
    }

    let participants: BTreeSet<&ParticipantId> = selected.iter().map(|r| &r.participant_id).collect();
    let questions: BTreeSet<&str> = selected.iter().map(|r| r.question_id.as_str()).collect();
    let mut answers: BTreeMap<(&ParticipantId, &str), u64> = BTreeMap::new();
    for r in &selected {
        *answers.entry((&r.participant_id, r.question_id.as_str())).or_default() += 1;
    }
    for p in &participants {
        for q in &questions {
            let problem = match answers.get(&(*p, *q)) {
                None => Problem::Missing,
                Some(1) => continue,
                Some(_) => Problem::Duplicate,
            };
            return Err(SurveyError::Incomplete {
                participant: (*p).clone(),
                question: q.to_string(),
                problem,
            });
        }
    }

    let n = participants.len() as u64;
    let mut sums: BTreeMap<String, u64> = BTreeMap::new();
    for r in &selected {
        *sums.entry(r.question_id.clone()).or_default() += u64::from(r.score.get());
    }
    // Exact section mean: the mean of sum/n over questions is total/(n*q).
    let total: u64 = sums.values().sum();
    let section_mean = Milli::from_ratio(total, n * sums.len() as u64);
    Ok(SurveyReport {
        round,
        section,
        n_participants: participants.len(),
        per_question_mean: sums.into_iter().map(|(q, s)| (q, Milli::from_ratio(s, n))).collect(),
        section_mean,
    })
}
